#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <unordered_map>
#include <vector>

#include "forge/cluster.hpp"

namespace forge {

struct ResolvedTxo {
  std::uint64_t value = 0;
  Alias alias = 0;
  ScriptSlot slot = 0;
};

// A transaction with every TXO resolved to its value, cluster and script.
// Zero-value TXOs are expected to be dropped before construction.
struct ResolvedTransaction {
  std::vector<ResolvedTxo> inputs;
  std::vector<ResolvedTxo> outputs;
  std::uint64_t block_height = 0;
  bool is_coinbase = false;
};

struct TransferEvent {
  Alias sender;
  Alias recipient;
  double value;
  std::uint64_t block;
};

// Output value minus input value credited to the alias. Throws AliasAbsent.
std::int64_t net_value(const ResolvedTransaction& tx, Alias alias);

// Senders (net < 0) pass value to recipients (net > 0) in proportion to
// their gross input share; aliases with net 0 take no part. Events are
// ordered by sender, then recipient.
std::vector<TransferEvent> attribute_transfers(const ResolvedTransaction& tx);
// Same rule keyed by script instead of cluster.
std::vector<ScriptTransfer> attribute_script_transfers(const ResolvedTransaction& tx);

struct EdgeRecord {
  Alias a = 0;  // sender
  Alias b = 0;  // recipient
  std::uint64_t reveal = 0;
  std::uint64_t last_seen = 0;
  std::uint64_t total = 0;
  double min_sent = 0;
  double max_sent = 0;
  double total_sent = 0;

  friend bool operator==(const EdgeRecord&, const EdgeRecord&) = default;
};

// Commutative min/max/sum/count aggregation per ordered (a, b) pair.
class EdgeAggregator {
 public:
  void add(const TransferEvent& e);
  void merge(const EdgeAggregator& other);
  std::size_t size() const { return edges_.size(); }
  // Records sorted by (a, b).
  std::vector<EdgeRecord> finish() const;

 private:
  struct PairHash {
    std::size_t operator()(const std::pair<Alias, Alias>& p) const noexcept {
      return std::hash<std::uint64_t>{}(p.first * 0x9E3779B97F4A7C15ULL ^ p.second);
    }
  };
  std::unordered_map<std::pair<Alias, Alias>, EdgeRecord, PairHash> edges_;
};

std::vector<EdgeRecord> aggregate_edges(std::span<const TransferEvent> events);

inline constexpr std::string_view kEdgeCsvHeader = "a,b,reveal,last_seen,total,min_sent,max_sent,total_sent";

void write_edges_csv(std::ostream& out, std::span<const EdgeRecord> edges);
// Throws SchemaMismatch on a header other than kEdgeCsvHeader, MalformedRow on bad cells.
std::vector<EdgeRecord> read_edges_csv(std::istream& in);

}  // namespace forge
