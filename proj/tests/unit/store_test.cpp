#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "forge/error.hpp"
#include "forge/io.hpp"
#include "forge/nodes.hpp"
#include "forge/pipeline.hpp"
#include "forge/store.hpp"
#include "test_helpers.hpp"

using namespace forge;

namespace {

std::vector<NodeRecord> plain_nodes(std::size_t n) {
  std::vector<NodeRecord> nodes(n);
  for (std::size_t i = 0; i < n; ++i) nodes[i].alias = i;
  return nodes;
}

EdgeRecord edge(Alias a, Alias b, double v = 1.0) { return {a, b, 1, 2, 1, v, v, v}; }

GraphStore store_of(std::size_t n, const std::vector<std::pair<Alias, Alias>>& pairs) {
  std::vector<EdgeRecord> edges;
  for (auto [a, b] : pairs) edges.push_back(edge(a, b));
  return GraphStore::build(plain_nodes(n), edges);
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::ConfigInvalid;
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << '\n';
}

std::vector<std::string> csv_lines(auto&& writer) {
  std::stringstream ss;
  writer(ss);
  std::vector<std::string> lines;
  std::string l;
  while (std::getline(ss, l)) lines.push_back(l);
  return lines;
}

}  // namespace

TEST(StoreImport, CountsFromCsv) {
  testutil::TempDir dir;
  auto nodes = plain_nodes(3);
  std::vector<EdgeRecord> edges{edge(0, 1), edge(2, 0)};
  {
    std::ofstream n(dir / "nodes.csv"), e(dir / "edges.csv");
    write_nodes_csv(n, nodes);
    write_edges_csv(e, edges);
  }
  auto s = GraphStore::import_csv(dir / "nodes.csv", dir / "edges.csv");
  EXPECT_EQ(s.node_count(), 3u);
  EXPECT_EQ(s.edge_count(), 2u);
}

TEST(StoreImport, ShuffledRowsSameBytes) {
  testutil::TempDir dir;
  Rng rng(4);
  auto nodes = plain_nodes(50);
  std::vector<EdgeRecord> edges;
  for (Alias a = 0; a < 50; ++a)
    for (Alias b = 0; b < 50; ++b)
      if (a != b && rng.below(10) == 0) edges.push_back(edge(a, b, static_cast<double>(a * 100 + b)));
  auto node_lines = csv_lines([&](std::ostream& o) { write_nodes_csv(o, nodes); });
  auto edge_lines = csv_lines([&](std::ostream& o) { write_edges_csv(o, edges); });
  write_lines(dir / "n1.csv", node_lines);
  write_lines(dir / "e1.csv", edge_lines);
  rng.shuffle(std::span(node_lines).subspan(1));
  rng.shuffle(std::span(edge_lines).subspan(1));
  write_lines(dir / "n2.csv", node_lines);
  write_lines(dir / "e2.csv", edge_lines);
  GraphStore::import_csv(dir / "n1.csv", dir / "e1.csv").save(dir / "s1");
  GraphStore::import_csv(dir / "n2.csv", dir / "e2.csv").save(dir / "s2");
  EXPECT_EQ(directory_digest(dir / "s1"), directory_digest(dir / "s2"));
}

TEST(StoreImport, WrongHeaderOrder) {
  testutil::TempDir dir;
  write_lines(dir / "nodes.csv", csv_lines([&](std::ostream& o) { write_nodes_csv(o, plain_nodes(1)); }));
  write_lines(dir / "edges.csv", {"b,a,reveal,last_seen,total,min_sent,max_sent,total_sent"});
  EXPECT_EQ(code_of([&] { GraphStore::import_csv(dir / "nodes.csv", dir / "edges.csv"); }), ErrorCode::SchemaMismatch);
}

TEST(StoreBuild, Rejections) {
  EXPECT_EQ(code_of([] { GraphStore::build(plain_nodes(2), {edge(0, 1), edge(0, 1)}); }), ErrorCode::DuplicateEdgeKey);
  EXPECT_EQ(code_of([] { GraphStore::build(plain_nodes(2), {edge(0, 5)}); }), ErrorCode::InconsistentInputs);
  auto dup = plain_nodes(2);
  dup[1].alias = 0;
  EXPECT_EQ(code_of([&] { GraphStore::build(dup, {}); }), ErrorCode::InconsistentInputs);
}

TEST(StoreQuery, AdjacencyDirections) {
  // a=0, b=1, c=2, d=3 isolated; edges a->b, c->a
  auto s = store_of(4, {{0, 1}, {2, 0}});
  auto out = s.adjacency(0, Direction::out).to_vector();
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].b, 1u);
  auto both = s.adjacency(0, Direction::both).to_vector();
  ASSERT_EQ(both.size(), 2u);
  EXPECT_EQ(both[0].a, 0u);
  EXPECT_EQ(both[0].b, 1u);
  EXPECT_EQ(both[1].a, 2u);
  EXPECT_EQ(both[1].b, 0u);
  EXPECT_TRUE(s.adjacency(3).empty());
  EXPECT_EQ(s.degree(0), 2u);
  EXPECT_EQ(s.degree(0, Direction::in), 1u);
  EXPECT_EQ(code_of([&] { s.adjacency(9); }), ErrorCode::UnknownAlias);
  EXPECT_EQ(code_of([&] { s.node(9); }), ErrorCode::UnknownAlias);
}

TEST(StoreQuery, SparseAliases) {
  std::vector<NodeRecord> nodes(3);
  nodes[0].alias = 5;
  nodes[1].alias = 100;
  nodes[2].alias = 7;
  auto s = GraphStore::build(nodes, {edge(100, 5)});
  EXPECT_TRUE(s.contains(7));
  EXPECT_FALSE(s.contains(6));
  EXPECT_EQ(s.alias_at(0), 5u);
  EXPECT_EQ(s.alias_at(2), 100u);
  EXPECT_EQ(s.adjacency(5, Direction::in).to_vector().at(0).a, 100u);
}

TEST(StoreQuery, EdgeSampleSmallDegree) {
  auto s = store_of(4, {{0, 1}, {0, 2}, {3, 0}});
  Rng rng(1);
  auto sample = s.random_edge_sample(0, 10, rng);
  EXPECT_EQ(sample.size(), 3u);
}

TEST(StoreQuery, EdgeSampleLargeDegree) {
  std::vector<EdgeRecord> edges;
  const std::size_t n = 100'001;
  for (Alias b = 1; b < n; ++b) edges.push_back(edge(0, b));
  auto s = GraphStore::build(plain_nodes(n), std::move(edges));
  Rng r1(77), r2(77);
  auto a = s.random_edge_sample(0, 100, r1);
  ASSERT_EQ(a.size(), 100u);
  std::set<Alias> distinct;
  for (const auto& e : a) distinct.insert(e.b);
  EXPECT_EQ(distinct.size(), 100u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end(), [](const auto& x, const auto& y) { return x.b < y.b; }));
  auto b = s.random_edge_sample(0, 100, r2);
  EXPECT_EQ(a, b);
}

TEST(StoreExport, Fixpoint) {
  testutil::TempDir dir;
  Rng rng(12);
  std::vector<EdgeRecord> edges;
  for (int i = 0; i < 300; ++i) {
    Alias a = rng.below(40), b = rng.below(40);
    if (a == b) continue;
    bool dup = std::any_of(edges.begin(), edges.end(), [&](const auto& e) { return e.a == a && e.b == b; });
    if (!dup) edges.push_back({a, b, 1, 9, 3, 0.1, 1.0 / 3.0, 7.25});
  }
  auto nodes = plain_nodes(40);
  nodes[3].label = Category::mixer;
  nodes[3].min_sent = 1e-8;
  auto s = GraphStore::build(nodes, edges);
  s.export_csv(dir / "n1.csv", dir / "e1.csv");
  auto t = GraphStore::import_csv(dir / "n1.csv", dir / "e1.csv");
  t.export_csv(dir / "n2.csv", dir / "e2.csv");
  EXPECT_EQ(read_text(dir / "n1.csv"), read_text(dir / "n2.csv"));
  EXPECT_EQ(read_text(dir / "e1.csv"), read_text(dir / "e2.csv"));
}

TEST(StoreExport, SqlSingleNode) {
  auto s = GraphStore::build(plain_nodes(1), {});
  std::stringstream ss;
  s.export_sql(ss);
  auto text = ss.str();
  auto count = [&](std::string_view needle) {
    std::size_t n = 0;
    for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
    return n;
  };
  EXPECT_EQ(count("CREATE TABLE nodes"), 1u);
  EXPECT_EQ(count("INSERT INTO nodes"), 1u);
  EXPECT_EQ(count("INSERT INTO edges"), 0u);
}

TEST(StoreExport, EmptyStoreHeadersOnly) {
  testutil::TempDir dir;
  auto s = GraphStore::build({}, {});
  s.export_csv(dir / "n.csv", dir / "e.csv");
  EXPECT_EQ(read_text(dir / "n.csv"), std::string(kNodeCsvHeader) + "\n");
  EXPECT_EQ(read_text(dir / "e.csv"), std::string(kEdgeCsvHeader) + "\n");
}

TEST(StorePersist, OpenMatchesBuilt) {
  testutil::TempDir dir;
  auto s = store_of(6, {{0, 1}, {1, 2}, {5, 0}, {3, 4}});
  s.save(dir / "store");
  auto t = GraphStore::open(dir / "store");
  EXPECT_EQ(t.nodes(), s.nodes());
  ASSERT_EQ(t.edge_count(), s.edge_count());
  for (Alias a = 0; a < 6; ++a) EXPECT_EQ(t.adjacency(a).to_vector(), s.adjacency(a).to_vector());
  // copying the directory elsewhere keeps it readable
  std::filesystem::copy(dir / "store", dir / "moved", std::filesystem::copy_options::recursive);
  EXPECT_EQ(GraphStore::open(dir / "moved").edge_count(), 4u);
}

TEST(StoreProperty, MirrorsAgree) {
  Rng rng(321);
  for (int trial = 0; trial < 30; ++trial) {
    std::size_t n = 1 + rng.below(60);
    std::set<std::pair<Alias, Alias>> pairs;
    auto k = rng.below(n * 3);
    for (std::uint64_t i = 0; i < k; ++i) {
      Alias a = rng.below(n), b = rng.below(n);
      if (a != b) pairs.insert({a, b});
    }
    auto s = store_of(n, {pairs.begin(), pairs.end()});
    std::size_t out = 0, in = 0, both = 0;
    std::map<std::pair<Alias, Alias>, int> seen;
    for (Alias a = 0; a < n; ++a) {
      out += s.degree(a, Direction::out);
      in += s.degree(a, Direction::in);
      for (const auto& e : s.adjacency(a, Direction::both)) {
        ++both;
        ++seen[{e.a, e.b}];
        EXPECT_TRUE(e.a == a || e.b == a);
      }
    }
    EXPECT_EQ(out, pairs.size());
    EXPECT_EQ(in, pairs.size());
    EXPECT_EQ(both, 2 * pairs.size());
    for (const auto& [key, c] : seen) EXPECT_EQ(c, 2);
    auto fwd = s.edges();
    auto rev = s.edges_by_recipient();
    EXPECT_TRUE(std::is_sorted(fwd.begin(), fwd.end(), [](const auto& x, const auto& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); }));
    EXPECT_TRUE(std::is_sorted(rev.begin(), rev.end(), [](const auto& x, const auto& y) { return std::tie(x.b, x.a) < std::tie(y.b, y.a); }));
  }
}
