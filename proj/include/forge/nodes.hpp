#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "forge/category.hpp"
#include "forge/cluster.hpp"
#include "forge/edges.hpp"

namespace forge {

struct NodeRecord {
  Alias alias = 0;
  std::optional<Category> label;
  std::uint64_t degree = 0;
  std::uint64_t degree_in = 0;
  std::uint64_t degree_out = 0;
  std::uint64_t total_transaction_in = 0;
  std::uint64_t total_transaction_out = 0;
  std::optional<std::uint64_t> first_transaction_in;
  std::optional<std::uint64_t> last_transaction_in;
  std::optional<std::uint64_t> first_transaction_out;
  std::optional<std::uint64_t> last_transaction_out;
  std::optional<double> min_sent;
  std::optional<double> max_sent;
  double total_sent = 0;
  std::optional<double> min_received;
  std::optional<double> max_received;
  double total_received = 0;
  std::uint64_t cluster_size = 1;
  std::uint64_t cluster_num_edges = 0;
  std::uint64_t cluster_num_cc = 0;
  std::uint64_t cluster_num_nodes_in_cc = 0;

  friend bool operator==(const NodeRecord&, const NodeRecord&) = default;
};

// Per-alias event aggregation; edges and cluster stats are joined in finish().
class NodeAttributeBuilder {
 public:
  explicit NodeAttributeBuilder(std::size_t num_aliases);

  void add(const TransferEvent& e);
  // One record per alias 0..num_aliases-1. Throws InconsistentInputs when the
  // edge table does not account for exactly the events seen.
  std::vector<NodeRecord> finish(std::span<const EdgeRecord> edges, std::span<const ClusterStats> cluster_stats) const;

 private:
  struct Side {
    std::uint64_t count = 0;
    std::uint64_t first = 0;
    std::uint64_t last = 0;
    double min = 0;
    double max = 0;
    double total = 0;
    void add(double v, std::uint64_t block);
  };
  std::vector<Side> in_;
  std::vector<Side> out_;
};

std::vector<NodeRecord> compute_node_attributes(std::span<const TransferEvent> events,
                                                std::span<const EdgeRecord> edges,
                                                std::span<const ClusterStats> cluster_stats);

inline constexpr std::string_view kNodeCsvHeader =
    "alias,label,degree,degree_in,degree_out,total_transaction_in,total_transaction_out,"
    "first_transaction_in,last_transaction_in,first_transaction_out,last_transaction_out,"
    "min_sent,max_sent,total_sent,min_received,max_received,total_received,"
    "cluster_size,cluster_num_edges,cluster_num_cc,cluster_num_nodes_in_cc";

void write_nodes_csv(std::ostream& out, std::span<const NodeRecord> nodes);
std::vector<NodeRecord> read_nodes_csv(std::istream& in);

}  // namespace forge
