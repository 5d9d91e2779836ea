#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "forge/filters.hpp"
#include "forge/script.hpp"

namespace forge {

// Dense index of a script in order of first on-chain appearance.
using ScriptSlot = std::uint32_t;
// Dense cluster identifier; a node of the transaction graph.
using Alias = std::uint64_t;

// Union-find over scripts with union by rank and path halving.
class ClusterIndex {
 public:
  ScriptSlot register_script(const ScriptId& id);
  std::optional<ScriptSlot> slot_of(const ScriptId& id) const;
  const ScriptId& script_at(ScriptSlot slot) const { return scripts_[slot]; }
  std::size_t script_count() const { return scripts_.size(); }

  ScriptSlot find(ScriptSlot x);
  // Returns true when two distinct sets were merged.
  bool unite(ScriptSlot a, ScriptSlot b);

  void reserve(std::size_t n);

 private:
  std::vector<ScriptSlot> parent_;
  std::vector<std::uint8_t> rank_;
  std::vector<ScriptId> scripts_;
  std::unordered_map<ScriptId, ScriptSlot, ScriptIdHash> script_to_slot_;
};

struct ClusterTxView {
  std::span<const ScriptSlot> input_slots;
  std::span<const ScriptSlot> output_slots;
  bool is_coinbase = false;
  const FilterVerdict* verdict = nullptr;
};

// Extension point for further co-ownership heuristics: returns pairs to unite.
using LinkRule = std::function<std::vector<std::pair<ScriptSlot, ScriptSlot>>(const ClusterTxView&)>;

std::size_t apply_common_input_heuristic(std::span<const ScriptSlot> input_slots, bool is_coinbase,
                                         const FilterVerdict& verdict, ClusterIndex& idx);
// Script-id front end; throws UnresolvedInput for scripts the index never saw.
std::size_t apply_common_input_heuristic(std::span<const ScriptId> input_scripts, bool is_coinbase,
                                         const FilterVerdict& verdict, ClusterIndex& idx);

class Clusterer {
 public:
  void add_rule(LinkRule rule) { rules_.push_back(std::move(rule)); }
  // Common-input heuristic followed by any extra rules. Excluded and coinbase
  // transactions never link anything.
  std::size_t apply(const ClusterTxView& tx, ClusterIndex& idx) const;

 private:
  std::vector<LinkRule> rules_;
};

struct AliasMap {
  std::vector<Alias> slot_alias;           // indexed by ScriptSlot
  std::vector<std::uint64_t> cluster_size;  // indexed by Alias

  std::size_t num_aliases() const { return cluster_size.size(); }
  Alias alias_of(ScriptSlot slot) const { return slot_alias[slot]; }
};

// Aliases follow the first appearance of each cluster's earliest script.
AliasMap finalize_aliases(ClusterIndex& idx);

struct ScriptAliasEntry {
  ScriptId script_id;
  Alias alias;
};

std::vector<ScriptAliasEntry> sorted_script_aliases(const ClusterIndex& idx, const AliasMap& aliases);
// Fixed-width binary mapping sorted by script id: "FGCLMAP1", u64 count, then
// count records of 33-byte script id + u64 little-endian alias.
void write_cluster_map(const std::filesystem::path& path, std::span<const ScriptAliasEntry> entries);
std::vector<ScriptAliasEntry> read_cluster_map(const std::filesystem::path& path);
void write_cluster_map_csv(const std::filesystem::path& path, std::span<const ScriptAliasEntry> entries);

// ---- internal structure of clusters -------------------------------------

struct ClusterStats {
  std::uint64_t cluster_size = 0;
  std::uint64_t cluster_num_edges = 0;
  std::uint64_t cluster_num_cc = 0;
  std::uint64_t cluster_num_nodes_in_cc = 0;

  friend bool operator==(const ClusterStats&, const ClusterStats&) = default;
};

// Value transfer between two scripts, attributed by the same rule as
// alias-level edges.
struct ScriptTransfer {
  ScriptSlot sender;
  ScriptSlot recipient;
  double value;
  std::uint64_t block;
};

// Stats for one cluster given the transfers among its own members.
ClusterStats cluster_internal_stats(std::uint64_t cluster_size, std::span<const ScriptTransfer> intra_transfers);

// Streaming form over all clusters; transfers crossing clusters are ignored.
class ClusterStatsBuilder {
 public:
  explicit ClusterStatsBuilder(const AliasMap& aliases);

  void add(const ScriptTransfer& t);
  std::vector<ClusterStats> finish();

 private:
  const AliasMap& aliases_;
  std::vector<std::pair<ScriptSlot, ScriptSlot>> edges_;
};

}  // namespace forge
