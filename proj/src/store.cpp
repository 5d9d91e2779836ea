#include "forge/store.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <tuple>

#include "forge/error.hpp"
#include "forge/io.hpp"
#include "forge/realfmt.hpp"

namespace forge {

static_assert(std::endian::native == std::endian::little, "store files are little-endian images");
static_assert(sizeof(EdgeRecord) == 64 && std::is_trivially_copyable_v<EdgeRecord>);

namespace {

constexpr char kNodesMagic[] = "FGNODES1";
constexpr char kEdgesMagic[] = "FGEDGES1";
constexpr char kEdgesRevMagic[] = "FGEDGER1";
constexpr char kOffsetsMagic[] = "FGOFFS01";
constexpr std::uint64_t kAbsent = std::numeric_limits<std::uint64_t>::max();

void put_header(Bytes& out, const char* magic, std::uint64_t row_width, std::uint64_t count) {
  out.insert(out.end(), magic, magic + 8);
  put_u64(out, GraphStore::kFormatVersion);
  put_u64(out, row_width);
  put_u64(out, count);
}

struct Header {
  std::uint64_t row_width;
  std::uint64_t count;
};

Header check_header(std::span<const std::uint8_t> bytes, const char* magic, const std::string& what) {
  if (bytes.size() < GraphStore::kHeaderSize || std::memcmp(bytes.data(), magic, 8) != 0) {
    throw Error(ErrorCode::SchemaMismatch, what + ": bad magic");
  }
  std::uint64_t f[3];
  std::memcpy(f, bytes.data() + 8, sizeof f);
  if (f[0] != GraphStore::kFormatVersion) throw Error(ErrorCode::SchemaMismatch, what + ": unsupported version");
  return {f[1], f[2]};
}

void put_f64(Bytes& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
void put_opt(Bytes& out, const std::optional<std::uint64_t>& v) { put_u64(out, v ? *v : kAbsent); }
void put_opt(Bytes& out, const std::optional<double>& v) {
  put_f64(out, v ? *v : std::numeric_limits<double>::quiet_NaN());
}

void encode_node(Bytes& out, const NodeRecord& n) {
  put_u64(out, n.alias);
  put_u64(out, n.label ? static_cast<std::uint64_t>(*n.label) : kAbsent);
  put_u64(out, n.degree);
  put_u64(out, n.degree_in);
  put_u64(out, n.degree_out);
  put_u64(out, n.total_transaction_in);
  put_u64(out, n.total_transaction_out);
  put_opt(out, n.first_transaction_in);
  put_opt(out, n.last_transaction_in);
  put_opt(out, n.first_transaction_out);
  put_opt(out, n.last_transaction_out);
  put_opt(out, n.min_sent);
  put_opt(out, n.max_sent);
  put_f64(out, n.total_sent);
  put_opt(out, n.min_received);
  put_opt(out, n.max_received);
  put_f64(out, n.total_received);
  put_u64(out, n.cluster_size);
  put_u64(out, n.cluster_num_edges);
  put_u64(out, n.cluster_num_cc);
  put_u64(out, n.cluster_num_nodes_in_cc);
}

NodeRecord decode_node(const std::uint8_t* row) {
  std::uint64_t w[21];
  std::memcpy(w, row, sizeof w);
  auto u = [&](int i) { return w[i]; };
  auto ou = [&](int i) { return w[i] == kAbsent ? std::nullopt : std::optional<std::uint64_t>(w[i]); };
  auto d = [&](int i) { return std::bit_cast<double>(w[i]); };
  auto od = [&](int i) { return std::isnan(d(i)) ? std::nullopt : std::optional<double>(d(i)); };
  NodeRecord n;
  n.alias = u(0);
  if (w[1] != kAbsent) n.label = static_cast<Category>(w[1]);
  n.degree = u(2);
  n.degree_in = u(3);
  n.degree_out = u(4);
  n.total_transaction_in = u(5);
  n.total_transaction_out = u(6);
  n.first_transaction_in = ou(7);
  n.last_transaction_in = ou(8);
  n.first_transaction_out = ou(9);
  n.last_transaction_out = ou(10);
  n.min_sent = od(11);
  n.max_sent = od(12);
  n.total_sent = d(13);
  n.min_received = od(14);
  n.max_received = od(15);
  n.total_received = d(16);
  n.cluster_size = u(17);
  n.cluster_num_edges = u(18);
  n.cluster_num_cc = u(19);
  n.cluster_num_nodes_in_cc = u(20);
  return n;
}

std::span<const EdgeRecord> edge_rows(std::span<const std::uint8_t> region) {
  auto body = region.subspan(GraphStore::kHeaderSize);
  return {reinterpret_cast<const EdgeRecord*>(body.data()), body.size() / sizeof(EdgeRecord)};
}

}  // namespace

std::vector<EdgeRecord> Adjacency::to_vector() const {
  std::vector<EdgeRecord> v(out_.begin(), out_.end());
  v.insert(v.end(), in_.begin(), in_.end());
  return v;
}

GraphStore::GraphStore() = default;
GraphStore::GraphStore(GraphStore&&) noexcept = default;
GraphStore& GraphStore::operator=(GraphStore&&) noexcept = default;
GraphStore::~GraphStore() = default;

GraphStore GraphStore::build(std::vector<NodeRecord> nodes, std::vector<EdgeRecord> edges) {
  std::sort(nodes.begin(), nodes.end(), [](const auto& x, const auto& y) { return x.alias < y.alias; });
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    if (nodes[i].alias == nodes[i - 1].alias) {
      throw Error(ErrorCode::InconsistentInputs, "duplicate node alias " + std::to_string(nodes[i].alias));
    }
  }
  auto by_ab = [](const EdgeRecord& x, const EdgeRecord& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); };
  std::sort(edges.begin(), edges.end(), by_ab);
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (edges[i].a == edges[i - 1].a && edges[i].b == edges[i - 1].b) {
      throw Error(ErrorCode::DuplicateEdgeKey,
                  fmt::format("duplicate edge ({}, {})", edges[i].a, edges[i].b));
    }
  }
  auto index = [&](Alias a) -> std::size_t {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), a, [](const NodeRecord& n, Alias x) { return n.alias < x; });
    if (it == nodes.end() || it->alias != a) {
      throw Error(ErrorCode::InconsistentInputs, "edge endpoint " + std::to_string(a) + " has no node row");
    }
    return static_cast<std::size_t>(it - nodes.begin());
  };

  std::vector<std::uint64_t> fwd(nodes.size() + 1, 0), rev(nodes.size() + 1, 0);
  for (const auto& e : edges) {
    ++fwd[index(e.a) + 1];
    ++rev[index(e.b) + 1];
  }
  for (std::size_t i = 1; i < fwd.size(); ++i) {
    fwd[i] += fwd[i - 1];
    rev[i] += rev[i - 1];
  }
  auto reversed = edges;
  std::sort(reversed.begin(), reversed.end(),
            [](const EdgeRecord& x, const EdgeRecord& y) { return std::tie(x.b, x.a) < std::tie(y.b, y.a); });

  GraphStore s;
  put_header(s.nodes_.owned, kNodesMagic, kNodeRowSize, nodes.size());
  s.nodes_.owned.reserve(kHeaderSize + nodes.size() * kNodeRowSize);
  for (const auto& n : nodes) encode_node(s.nodes_.owned, n);

  auto put_edges = [](Bytes& out, const char* magic, const std::vector<EdgeRecord>& rows) {
    put_header(out, magic, kEdgeRowSize, rows.size());
    auto at = out.size();
    out.resize(at + rows.size() * kEdgeRowSize);
    if (!rows.empty()) std::memcpy(out.data() + at, rows.data(), rows.size() * kEdgeRowSize);
  };
  put_edges(s.edges_.owned, kEdgesMagic, edges);
  put_edges(s.edges_rev_.owned, kEdgesRevMagic, reversed);

  put_header(s.offsets_.owned, kOffsetsMagic, 8, nodes.size() + 1);
  for (auto o : fwd) put_u64(s.offsets_.owned, o);
  for (auto o : rev) put_u64(s.offsets_.owned, o);

  for (Region* r : {&s.nodes_, &s.edges_, &s.edges_rev_, &s.offsets_}) r->view = r->owned;
  s.bind();
  return s;
}

void GraphStore::bind() {
  auto nh = check_header(nodes_.view, kNodesMagic, "nodes.bin");
  auto eh = check_header(edges_.view, kEdgesMagic, "edges.bin");
  auto rh = check_header(edges_rev_.view, kEdgesRevMagic, "edges_rev.bin");
  auto oh = check_header(offsets_.view, kOffsetsMagic, "offsets.bin");
  if (nh.row_width != kNodeRowSize || eh.row_width != kEdgeRowSize || rh.row_width != kEdgeRowSize) {
    throw Error(ErrorCode::SchemaMismatch, "store row width differs from this build");
  }
  if (nodes_.view.size() != kHeaderSize + nh.count * kNodeRowSize ||
      edges_.view.size() != kHeaderSize + eh.count * kEdgeRowSize || rh.count != eh.count ||
      edges_rev_.view.size() != edges_.view.size() || oh.count != nh.count + 1 ||
      offsets_.view.size() != kHeaderSize + 2 * oh.count * 8) {
    throw Error(ErrorCode::SchemaMismatch, "store files have inconsistent sizes");
  }
}

GraphStore GraphStore::open(const std::filesystem::path& dir) {
  GraphStore s;
  const std::pair<Region*, const char*> files[] = {
      {&s.nodes_, "nodes.bin"}, {&s.edges_, "edges.bin"}, {&s.edges_rev_, "edges_rev.bin"}, {&s.offsets_, "offsets.bin"}};
  for (auto [region, name] : files) {
    auto path = dir / name;
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::IoFailure, "missing store file " + path.string());
    region->mapped = MappedFile(path);
    region->view = region->mapped.bytes();
  }
  s.bind();
  return s;
}

void GraphStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  auto put = [&](const Region& r, const char* name) {
    write_file_atomic(dir / name, {reinterpret_cast<const char*>(r.view.data()), r.view.size()});
  };
  put(nodes_, "nodes.bin");
  put(edges_, "edges.bin");
  put(edges_rev_, "edges_rev.bin");
  put(offsets_, "offsets.bin");
  write_file_atomic(dir / "FORMAT", store_format_text());
}

GraphStore GraphStore::import_csv(const std::filesystem::path& nodes_csv, const std::filesystem::path& edges_csv) {
  std::ifstream n(nodes_csv, std::ios::binary), e(edges_csv, std::ios::binary);
  if (!n) throw Error(ErrorCode::IoFailure, "cannot open " + nodes_csv.string());
  if (!e) throw Error(ErrorCode::IoFailure, "cannot open " + edges_csv.string());
  return build(read_nodes_csv(n), read_edges_csv(e));
}

std::size_t GraphStore::node_count() const { return (nodes_.view.size() - kHeaderSize) / kNodeRowSize; }
std::size_t GraphStore::edge_count() const { return (edges_.view.size() - kHeaderSize) / kEdgeRowSize; }

std::span<const EdgeRecord> GraphStore::edges() const { return edge_rows(edges_.view); }
std::span<const EdgeRecord> GraphStore::edges_by_recipient() const { return edge_rows(edges_rev_.view); }

std::span<const std::uint64_t> GraphStore::offsets(bool reverse) const {
  const std::size_t n = node_count() + 1;
  auto base = reinterpret_cast<const std::uint64_t*>(offsets_.view.data() + kHeaderSize);
  return {base + (reverse ? n : 0), n};
}

Alias GraphStore::alias_at(std::size_t index) const {
  Alias a;
  std::memcpy(&a, nodes_.view.data() + kHeaderSize + index * kNodeRowSize, sizeof a);
  return a;
}

std::optional<std::size_t> GraphStore::index_of(Alias alias) const {
  std::size_t n = node_count();
  // Dense aliases sit at their own index.
  if (alias < n && alias_at(alias) == alias) return static_cast<std::size_t>(alias);
  std::size_t lo = 0, hi = n;
  while (lo < hi) {
    std::size_t mid = lo + (hi - lo) / 2;
    if (alias_at(mid) < alias) lo = mid + 1;
    else hi = mid;
  }
  if (lo < n && alias_at(lo) == alias) return lo;
  return std::nullopt;
}

NodeRecord GraphStore::node_at(std::size_t index) const {
  return decode_node(nodes_.view.data() + kHeaderSize + index * kNodeRowSize);
}

NodeRecord GraphStore::node(Alias alias) const {
  auto i = index_of(alias);
  if (!i) throw Error(ErrorCode::UnknownAlias, "alias " + std::to_string(alias) + " not in store");
  return node_at(*i);
}

std::vector<NodeRecord> GraphStore::nodes() const {
  std::vector<NodeRecord> out;
  out.reserve(node_count());
  for (std::size_t i = 0; i < node_count(); ++i) out.push_back(node_at(i));
  return out;
}

Adjacency GraphStore::adjacency(Alias alias, Direction dir) const {
  auto i = index_of(alias);
  if (!i) throw Error(ErrorCode::UnknownAlias, "alias " + std::to_string(alias) + " not in store");
  std::span<const EdgeRecord> out, in;
  if (dir != Direction::in) {
    auto off = offsets(false);
    out = edges().subspan(off[*i], off[*i + 1] - off[*i]);
  }
  if (dir != Direction::out) {
    auto off = offsets(true);
    in = edges_by_recipient().subspan(off[*i], off[*i + 1] - off[*i]);
  }
  return {out, in};
}

std::size_t GraphStore::degree(Alias alias, Direction dir) const { return adjacency(alias, dir).size(); }

std::vector<EdgeRecord> GraphStore::random_edge_sample(Alias alias, std::size_t k, Rng& rng) const {
  auto adj = adjacency(alias, Direction::both);
  const std::size_t n = adj.size();
  if (n <= k) return adj.to_vector();
  // Floyd's algorithm: k distinct indices with k draws.
  std::set<std::size_t> picked;
  for (std::size_t j = n - k; j < n; ++j) {
    auto t = static_cast<std::size_t>(rng.below(j + 1));
    if (!picked.insert(t).second) picked.insert(j);
  }
  std::vector<EdgeRecord> out;
  out.reserve(k);
  for (auto idx : picked) out.push_back(adj[idx]);
  return out;
}

void GraphStore::export_csv(const std::filesystem::path& nodes_csv, const std::filesystem::path& edges_csv) const {
  auto emit = [](const std::filesystem::path& path, auto&& writer) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    writer(out);
    if (!out.flush()) throw Error(ErrorCode::IoFailure, "short write on " + path.string());
  };
  auto all = nodes();
  emit(nodes_csv, [&](std::ostream& o) { write_nodes_csv(o, all); });
  emit(edges_csv, [&](std::ostream& o) { write_edges_csv(o, edges()); });
}

namespace {

constexpr std::size_t kSqlBatch = 1000;

std::string sql_real(const std::optional<double>& v) { return v ? format_real(*v) : "NULL"; }
std::string sql_int(const std::optional<std::uint64_t>& v) { return v ? std::to_string(*v) : "NULL"; }

}  // namespace

void GraphStore::export_sql(std::ostream& out) const {
  out << "CREATE TABLE nodes (\n"
         "  alias integer PRIMARY KEY,\n"
         "  label text,\n"
         "  degree integer NOT NULL,\n"
         "  degree_in integer NOT NULL,\n"
         "  degree_out integer NOT NULL,\n"
         "  total_transaction_in integer NOT NULL,\n"
         "  total_transaction_out integer NOT NULL,\n"
         "  first_transaction_in integer,\n"
         "  last_transaction_in integer,\n"
         "  first_transaction_out integer,\n"
         "  last_transaction_out integer,\n"
         "  min_sent double precision,\n"
         "  max_sent double precision,\n"
         "  total_sent double precision NOT NULL,\n"
         "  min_received double precision,\n"
         "  max_received double precision,\n"
         "  total_received double precision NOT NULL,\n"
         "  cluster_size integer NOT NULL,\n"
         "  cluster_num_edges integer NOT NULL,\n"
         "  cluster_num_cc integer NOT NULL,\n"
         "  cluster_num_nodes_in_cc integer NOT NULL\n"
         ");\n";
  out << "CREATE TABLE edges (\n"
         "  a integer NOT NULL,\n"
         "  b integer NOT NULL,\n"
         "  reveal integer NOT NULL,\n"
         "  last_seen integer NOT NULL,\n"
         "  total integer NOT NULL,\n"
         "  min_sent double precision NOT NULL,\n"
         "  max_sent double precision NOT NULL,\n"
         "  total_sent double precision NOT NULL,\n"
         "  PRIMARY KEY (a, b)\n"
         ");\n";

  const std::size_t nn = node_count();
  for (std::size_t i = 0; i < nn; ++i) {
    out << (i % kSqlBatch == 0 ? "INSERT INTO nodes VALUES\n  (" : ",\n  (");
    auto n = node_at(i);
    out << n.alias << ',' << (n.label ? fmt::format("'{}'", category_name(*n.label)) : "NULL") << ',' << n.degree
        << ',' << n.degree_in << ',' << n.degree_out << ',' << n.total_transaction_in << ','
        << n.total_transaction_out << ',' << sql_int(n.first_transaction_in) << ','
        << sql_int(n.last_transaction_in) << ',' << sql_int(n.first_transaction_out) << ','
        << sql_int(n.last_transaction_out) << ',' << sql_real(n.min_sent) << ',' << sql_real(n.max_sent) << ','
        << format_real(n.total_sent) << ',' << sql_real(n.min_received) << ',' << sql_real(n.max_received) << ','
        << format_real(n.total_received) << ',' << n.cluster_size << ',' << n.cluster_num_edges << ','
        << n.cluster_num_cc << ',' << n.cluster_num_nodes_in_cc << ')';
    if (i % kSqlBatch == kSqlBatch - 1 || i + 1 == nn) out << ";\n";
  }
  auto es = edges();
  for (std::size_t i = 0; i < es.size(); ++i) {
    out << (i % kSqlBatch == 0 ? "INSERT INTO edges VALUES\n  (" : ",\n  (");
    const auto& e = es[i];
    out << e.a << ',' << e.b << ',' << e.reveal << ',' << e.last_seen << ',' << e.total << ','
        << format_real(e.min_sent) << ',' << format_real(e.max_sent) << ',' << format_real(e.total_sent) << ')';
    if (i % kSqlBatch == kSqlBatch - 1 || i + 1 == es.size()) out << ";\n";
  }
  if (!out) throw Error(ErrorCode::IoFailure, "SQL export write failed");
}

std::string_view store_format_text() {
  return R"(forge graph store, format version 1

All integers are little-endian u64; reals are IEEE-754 binary64.
Every file starts with a 32-byte header:
  magic[8]  version  row_width  count

nodes.bin      magic FGNODES1, row_width 168, one row per node sorted by alias.
               Columns in node CSV order; label is the category index.
               Absent integers are 0xFFFFFFFFFFFFFFFF, absent reals are NaN.
edges.bin      magic FGEDGES1, row_width 64, rows sorted by (a, b):
               a b reveal last_seen total min_sent max_sent total_sent
edges_rev.bin  magic FGEDGER1, same rows sorted by (b, a).
offsets.bin    magic FGOFFS01, row_width 8, count = nodes + 1.
               count forward offsets into edges.bin, then count reverse
               offsets into edges_rev.bin, both indexed by node row.
               Row i owns [offset[i], offset[i+1]).

Files contain no absolute positions outside themselves and can be mapped
read-only at any address.
)";
}

}  // namespace forge
