#include "forge/cluster.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>

#include "forge/csv.hpp"
#include "forge/error.hpp"

namespace forge {

ScriptSlot ClusterIndex::register_script(const ScriptId& id) {
  auto [it, inserted] = script_to_slot_.try_emplace(id, static_cast<ScriptSlot>(scripts_.size()));
  if (inserted) {
    parent_.push_back(it->second);
    rank_.push_back(0);
    scripts_.push_back(id);
  }
  return it->second;
}

std::optional<ScriptSlot> ClusterIndex::slot_of(const ScriptId& id) const {
  auto it = script_to_slot_.find(id);
  if (it == script_to_slot_.end()) return std::nullopt;
  return it->second;
}

ScriptSlot ClusterIndex::find(ScriptSlot x) {
  while (parent_[x] != x) {
    parent_[x] = parent_[parent_[x]];
    x = parent_[x];
  }
  return x;
}

bool ClusterIndex::unite(ScriptSlot a, ScriptSlot b) {
  a = find(a);
  b = find(b);
  if (a == b) return false;
  if (rank_[a] < rank_[b]) std::swap(a, b);
  parent_[b] = a;
  if (rank_[a] == rank_[b]) ++rank_[a];
  return true;
}

void ClusterIndex::reserve(std::size_t n) {
  parent_.reserve(n);
  rank_.reserve(n);
  scripts_.reserve(n);
  script_to_slot_.reserve(n);
}

std::size_t apply_common_input_heuristic(std::span<const ScriptSlot> input_slots, bool is_coinbase,
                                         const FilterVerdict& verdict, ClusterIndex& idx) {
  if (is_coinbase || verdict.excluded() || input_slots.size() < 2) return 0;
  // Linking every input to the first is the pairwise union in effect.
  std::size_t unions = 0;
  for (std::size_t i = 1; i < input_slots.size(); ++i) {
    if (idx.unite(input_slots[0], input_slots[i])) ++unions;
  }
  return unions;
}

std::size_t apply_common_input_heuristic(std::span<const ScriptId> input_scripts, bool is_coinbase,
                                         const FilterVerdict& verdict, ClusterIndex& idx) {
  std::vector<ScriptSlot> slots;
  slots.reserve(input_scripts.size());
  for (const auto& id : input_scripts) {
    auto slot = idx.slot_of(id);
    if (!slot) throw Error(ErrorCode::UnresolvedInput, "input spends a script never seen as an output");
    slots.push_back(*slot);
  }
  return apply_common_input_heuristic(slots, is_coinbase, verdict, idx);
}

std::size_t Clusterer::apply(const ClusterTxView& tx, ClusterIndex& idx) const {
  static const FilterVerdict kPass{};
  const FilterVerdict& verdict = tx.verdict ? *tx.verdict : kPass;
  std::size_t unions = apply_common_input_heuristic(tx.input_slots, tx.is_coinbase, verdict, idx);
  if (tx.is_coinbase || verdict.excluded()) return unions;
  for (const auto& rule : rules_) {
    for (auto [a, b] : rule(tx)) {
      if (idx.unite(a, b)) ++unions;
    }
  }
  return unions;
}

AliasMap finalize_aliases(ClusterIndex& idx) {
  AliasMap map;
  const auto n = idx.script_count();
  map.slot_alias.resize(n);
  std::vector<Alias> root_alias(n, ~Alias{0});
  for (ScriptSlot s = 0; s < n; ++s) {
    auto root = idx.find(s);
    if (root_alias[root] == ~Alias{0}) {
      root_alias[root] = map.cluster_size.size();
      map.cluster_size.push_back(0);
    }
    map.slot_alias[s] = root_alias[root];
    ++map.cluster_size[root_alias[root]];
  }
  return map;
}

std::vector<ScriptAliasEntry> sorted_script_aliases(const ClusterIndex& idx, const AliasMap& aliases) {
  std::vector<ScriptAliasEntry> out;
  out.reserve(idx.script_count());
  for (ScriptSlot s = 0; s < idx.script_count(); ++s) out.push_back({idx.script_at(s), aliases.alias_of(s)});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.script_id < b.script_id; });
  return out;
}

namespace {

constexpr char kClusterMapMagic[8] = {'F', 'G', 'C', 'L', 'M', 'A', 'P', '1'};
constexpr std::size_t kClusterMapRecord = 33 + 8;

}  // namespace

void write_cluster_map(const std::filesystem::path& path, std::span<const ScriptAliasEntry> entries) {
  Bytes out(kClusterMapMagic, kClusterMapMagic + 8);
  put_u64(out, entries.size());
  out.reserve(out.size() + entries.size() * kClusterMapRecord);
  for (const auto& e : entries) {
    out.insert(out.end(), e.script_id.begin(), e.script_id.end());
    put_u64(out, e.alias);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorCode::IoFailure, "short write on " + path.string());
}

std::vector<ScriptAliasEntry> read_cluster_map(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kClusterMapMagic, 8) != 0) {
    throw Error(ErrorCode::SchemaMismatch, "not a cluster map: " + path.string());
  }
  std::uint8_t count_bytes[8];
  f.read(reinterpret_cast<char*>(count_bytes), 8);
  std::uint64_t count = 0;
  for (int i = 7; i >= 0; --i) count = (count << 8) | count_bytes[i];
  std::vector<ScriptAliasEntry> out(static_cast<std::size_t>(count));
  std::uint8_t rec[kClusterMapRecord];
  for (auto& e : out) {
    f.read(reinterpret_cast<char*>(rec), kClusterMapRecord);
    if (!f) throw Error(ErrorCode::TruncatedInput, "cluster map cut short: " + path.string());
    std::copy(rec, rec + 33, e.script_id.begin());
    e.alias = 0;
    for (int i = 7; i >= 0; --i) e.alias = (e.alias << 8) | rec[33 + i];
  }
  return out;
}

void write_cluster_map_csv(const std::filesystem::path& path, std::span<const ScriptAliasEntry> entries) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  f << "script_id,kind,alias\n";
  for (const auto& e : entries) {
    f << to_hex(e.script_id) << ',' << script_kind_name(static_cast<ScriptKind>(e.script_id[0])) << ',' << e.alias
      << '\n';
  }
}

// ---- internal structure --------------------------------------------------

namespace {

struct Components {
  std::uint64_t nodes_in_cc = 0;
  std::uint64_t cc = 0;
};

// Connected components of an undirected graph on the given local vertices.
Components count_components(std::size_t n, std::span<const std::pair<std::uint32_t, std::uint32_t>> edges) {
  std::vector<std::uint32_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&](std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<bool> touched(n, false);
  for (auto [a, b] : edges) {
    touched[a] = touched[b] = true;
    auto ra = find(a), rb = find(b);
    if (ra != rb) parent[ra] = rb;
  }
  Components c;
  for (std::uint32_t v = 0; v < n; ++v) {
    if (!touched[v]) continue;
    ++c.nodes_in_cc;
    if (find(v) == v) ++c.cc;
  }
  return c;
}

}  // namespace

ClusterStats cluster_internal_stats(std::uint64_t cluster_size, std::span<const ScriptTransfer> intra_transfers) {
  ClusterStats stats;
  stats.cluster_size = cluster_size;

  std::vector<std::pair<ScriptSlot, ScriptSlot>> pairs;
  for (const auto& t : intra_transfers) pairs.emplace_back(t.sender, t.recipient);
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  stats.cluster_num_edges = pairs.size();

  // Relabel member slots to 0..k-1.
  std::vector<ScriptSlot> members;
  for (auto [a, b] : pairs) {
    members.push_back(a);
    members.push_back(b);
  }
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  auto local = [&](ScriptSlot s) {
    return static_cast<std::uint32_t>(std::lower_bound(members.begin(), members.end(), s) - members.begin());
  };
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (auto [a, b] : pairs) edges.emplace_back(local(a), local(b));
  auto c = count_components(members.size(), edges);
  stats.cluster_num_cc = c.cc;
  stats.cluster_num_nodes_in_cc = c.nodes_in_cc;
  return stats;
}

ClusterStatsBuilder::ClusterStatsBuilder(const AliasMap& aliases) : aliases_(aliases) {}

void ClusterStatsBuilder::add(const ScriptTransfer& t) {
  if (t.sender == t.recipient) return;
  if (aliases_.alias_of(t.sender) != aliases_.alias_of(t.recipient)) return;
  edges_.emplace_back(t.sender, t.recipient);
}

std::vector<ClusterStats> ClusterStatsBuilder::finish() {
  std::vector<ClusterStats> stats(aliases_.num_aliases());
  for (Alias a = 0; a < stats.size(); ++a) stats[a].cluster_size = aliases_.cluster_size[a];

  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

  // Slots are global, so one union-find over all slots yields every
  // cluster's components at once; intra edges never cross clusters.
  const auto n = aliases_.slot_alias.size();
  std::vector<ScriptSlot> parent(n);
  std::iota(parent.begin(), parent.end(), ScriptSlot{0});
  auto find = [&](ScriptSlot x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<bool> touched(n, false);
  for (auto [a, b] : edges_) {
    ++stats[aliases_.alias_of(a)].cluster_num_edges;
    touched[a] = touched[b] = true;
    auto ra = find(a), rb = find(b);
    if (ra != rb) parent[ra] = rb;
  }
  for (ScriptSlot s = 0; s < n; ++s) {
    if (!touched[s]) continue;
    auto& st = stats[aliases_.alias_of(s)];
    ++st.cluster_num_nodes_in_cc;
    if (find(s) == s) ++st.cluster_num_cc;
  }
  edges_.clear();
  edges_.shrink_to_fit();
  return stats;
}

}  // namespace forge
