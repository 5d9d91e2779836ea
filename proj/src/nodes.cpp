#include "forge/nodes.hpp"

#include <algorithm>
#include <string>

#include "forge/csv.hpp"
#include "forge/error.hpp"
#include "forge/realfmt.hpp"

namespace forge {

std::string_view category_name(Category c) {
  switch (c) {
    case Category::individual: return "individual";
    case Category::mining: return "mining";
    case Category::exchange: return "exchange";
    case Category::marketplace: return "marketplace";
    case Category::gambling: return "gambling";
    case Category::bet: return "bet";
    case Category::faucet: return "faucet";
    case Category::mixer: return "mixer";
    case Category::ponzi: return "ponzi";
    case Category::ransomware: return "ransomware";
    case Category::bridge: return "bridge";
  }
  return "individual";
}

std::optional<Category> parse_category(std::string_view name) {
  for (auto c : kAllCategories) {
    if (category_name(c) == name) return c;
  }
  return std::nullopt;
}

void NodeAttributeBuilder::Side::add(double v, std::uint64_t block) {
  if (count == 0) {
    first = last = block;
    min = max = v;
  } else {
    first = std::min(first, block);
    last = std::max(last, block);
    min = std::min(min, v);
    max = std::max(max, v);
  }
  total += v;
  ++count;
}

NodeAttributeBuilder::NodeAttributeBuilder(std::size_t num_aliases) : in_(num_aliases), out_(num_aliases) {}

void NodeAttributeBuilder::add(const TransferEvent& e) {
  if (e.sender >= out_.size() || e.recipient >= in_.size()) {
    throw Error(ErrorCode::InconsistentInputs, "event references alias outside the cluster map");
  }
  out_[e.sender].add(e.value, e.block);
  in_[e.recipient].add(e.value, e.block);
}

std::vector<NodeRecord> NodeAttributeBuilder::finish(std::span<const EdgeRecord> edges,
                                                     std::span<const ClusterStats> cluster_stats) const {
  const auto n = in_.size();
  if (cluster_stats.size() != n) throw Error(ErrorCode::InconsistentInputs, "cluster stats do not cover every alias");

  std::vector<NodeRecord> nodes(n);
  std::vector<std::uint64_t> edge_events_in(n, 0), edge_events_out(n, 0);
  for (const auto& e : edges) {
    if (e.a >= n || e.b >= n) throw Error(ErrorCode::InconsistentInputs, "edge references unknown alias");
    ++nodes[e.a].degree_out;
    ++nodes[e.b].degree_in;
    edge_events_out[e.a] += e.total;
    edge_events_in[e.b] += e.total;
  }

  for (Alias a = 0; a < n; ++a) {
    auto& r = nodes[a];
    const auto& in = in_[a];
    const auto& out = out_[a];
    if (edge_events_in[a] != in.count || edge_events_out[a] != out.count) {
      throw Error(ErrorCode::InconsistentInputs, "edges of alias " + std::to_string(a) + " disagree with its events");
    }
    r.alias = a;
    r.degree = r.degree_in + r.degree_out;
    r.total_transaction_in = in.count;
    r.total_transaction_out = out.count;
    if (in.count) {
      r.first_transaction_in = in.first;
      r.last_transaction_in = in.last;
      r.min_received = in.min;
      r.max_received = in.max;
    }
    if (out.count) {
      r.first_transaction_out = out.first;
      r.last_transaction_out = out.last;
      r.min_sent = out.min;
      r.max_sent = out.max;
    }
    r.total_received = in.total;
    r.total_sent = out.total;
    const auto& cs = cluster_stats[a];
    r.cluster_size = cs.cluster_size;
    r.cluster_num_edges = cs.cluster_num_edges;
    r.cluster_num_cc = cs.cluster_num_cc;
    r.cluster_num_nodes_in_cc = cs.cluster_num_nodes_in_cc;
  }
  return nodes;
}

std::vector<NodeRecord> compute_node_attributes(std::span<const TransferEvent> events,
                                                std::span<const EdgeRecord> edges,
                                                std::span<const ClusterStats> cluster_stats) {
  NodeAttributeBuilder builder(cluster_stats.size());
  for (const auto& e : events) builder.add(e);
  return builder.finish(edges, cluster_stats);
}

void write_nodes_csv(std::ostream& out, std::span<const NodeRecord> nodes) {
  out << kNodeCsvHeader << '\n';
  for (const auto& r : nodes) {
    out << r.alias << ',' << (r.label ? category_name(*r.label) : std::string_view{}) << ',' << r.degree << ','
        << r.degree_in << ',' << r.degree_out << ',' << r.total_transaction_in << ',' << r.total_transaction_out
        << ',' << format_optional(r.first_transaction_in) << ',' << format_optional(r.last_transaction_in) << ','
        << format_optional(r.first_transaction_out) << ',' << format_optional(r.last_transaction_out) << ','
        << format_optional(r.min_sent) << ',' << format_optional(r.max_sent) << ',' << format_real(r.total_sent)
        << ',' << format_optional(r.min_received) << ',' << format_optional(r.max_received) << ','
        << format_real(r.total_received) << ',' << r.cluster_size << ',' << r.cluster_num_edges << ','
        << r.cluster_num_cc << ',' << r.cluster_num_nodes_in_cc << '\n';
  }
}

namespace {

std::uint64_t cell_u64(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw Error(ErrorCode::MalformedRow, "not an unsigned integer: '" + s + "'");
  }
  return std::stoull(s);
}

std::optional<std::uint64_t> cell_opt_u64(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return cell_u64(s);
}

std::optional<double> cell_opt_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return parse_real(s);
}

}  // namespace

std::vector<NodeRecord> read_nodes_csv(std::istream& in) {
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header || csv::join_header(*header) != kNodeCsvHeader) {
    throw Error(ErrorCode::SchemaMismatch, "node table header must be: " + std::string(kNodeCsvHeader));
  }
  std::vector<NodeRecord> out;
  while (auto row = reader.next()) {
    const auto& c = *row;
    if (c.size() != 21) throw Error(ErrorCode::MalformedRow, "node row at line " + std::to_string(reader.line()));
    NodeRecord r;
    r.alias = cell_u64(c[0]);
    if (!c[1].empty()) {
      r.label = parse_category(c[1]);
      if (!r.label) throw Error(ErrorCode::UnknownCategory, "unknown label '" + c[1] + "'");
    }
    r.degree = cell_u64(c[2]);
    r.degree_in = cell_u64(c[3]);
    r.degree_out = cell_u64(c[4]);
    r.total_transaction_in = cell_u64(c[5]);
    r.total_transaction_out = cell_u64(c[6]);
    r.first_transaction_in = cell_opt_u64(c[7]);
    r.last_transaction_in = cell_opt_u64(c[8]);
    r.first_transaction_out = cell_opt_u64(c[9]);
    r.last_transaction_out = cell_opt_u64(c[10]);
    r.min_sent = cell_opt_real(c[11]);
    r.max_sent = cell_opt_real(c[12]);
    r.total_sent = parse_real(c[13]);
    r.min_received = cell_opt_real(c[14]);
    r.max_received = cell_opt_real(c[15]);
    r.total_received = parse_real(c[16]);
    r.cluster_size = cell_u64(c[17]);
    r.cluster_num_edges = cell_u64(c[18]);
    r.cluster_num_cc = cell_u64(c[19]);
    r.cluster_num_nodes_in_cc = cell_u64(c[20]);
    out.push_back(r);
  }
  return out;
}

}  // namespace forge
