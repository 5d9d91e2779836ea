#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <optional>
#include <set>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "forge/category.hpp"
#include "forge/chain.hpp"
#include "forge/cluster.hpp"
#include "forge/error.hpp"

namespace forge {

struct NodeRecord;

struct LabelRecord {
  std::string address;
  Category category = Category::individual;
  std::string source;
  std::optional<std::string> entity_name;

  friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

struct LabelRowError {
  std::size_t line;
  ErrorCode code;
  std::string message;
};

struct LabelLoadResult {
  std::vector<LabelRecord> records;
  std::vector<LabelRowError> errors;  // rejected rows; loading continues past them
};

// Header must be address,label,source or address,label,source,entity
// (MalformedRow otherwise). An empty stream yields no records.
LabelLoadResult load_labels(std::istream& in);
LabelLoadResult load_labels(const std::filesystem::path& path);
void write_labels(std::ostream& out, std::span<const LabelRecord> records);

struct ClusterLabel {
  Alias alias;
  Category category;
  std::uint64_t contributing_addresses;

  friend bool operator==(const ClusterLabel&, const ClusterLabel&) = default;
};

struct UnmatchedAddress {
  std::string address;
  std::string reason;
};

struct PropagationResult {
  std::vector<ClusterLabel> labels;  // sorted by alias
  std::vector<Alias> conflicted;     // clusters left unlabeled by disagreement
  std::vector<UnmatchedAddress> unmatched;
};

using ScriptResolver = std::function<std::vector<ScriptId>(std::string_view address)>;
using AliasLookup = std::function<std::optional<Alias>(const ScriptId&)>;

// Binary-search lookup over a script-id-sorted mapping.
AliasLookup sorted_alias_lookup(std::span<const ScriptAliasEntry> sorted);

// Address -> scripts -> clusters. A cluster that receives two or more
// distinct categories gets no label; entity names never conflict.
PropagationResult propagate(std::span<const LabelRecord> labels, const AliasLookup& cluster_map,
                            const ScriptResolver& resolve = address_to_script_ids);

void write_cluster_labels_csv(std::ostream& out, std::span<const ClusterLabel> labels);
void apply_cluster_labels(std::span<NodeRecord> nodes, std::span<const ClusterLabel> labels);

struct CoinbasePattern {
  std::string substring;
  std::string entity;
};

// One "substring,entity" pair per line.
std::vector<CoinbasePattern> load_coinbase_patterns(std::istream& in);

// Streams blocks; a coinbase whose input script contains a pattern labels
// its output addresses as mining, attributed to the first matching pattern.
class CoinbaseTagger {
 public:
  explicit CoinbaseTagger(std::vector<CoinbasePattern> patterns,
                          AddressNetwork network = AddressNetwork::mainnet);

  void visit(const Block& block);
  const std::vector<LabelRecord>& records() const { return records_; }

 private:
  std::vector<CoinbasePattern> patterns_;
  AddressNetwork network_;
  std::vector<LabelRecord> records_;
  std::set<std::pair<std::string, std::string>> seen_;
};

std::vector<LabelRecord> extract_coinbase_tags(std::span<const ChainBlock> chain,
                                               std::vector<CoinbasePattern> patterns,
                                               AddressNetwork network = AddressNetwork::mainnet);

}  // namespace forge
