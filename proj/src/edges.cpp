#include "forge/edges.hpp"

#include <algorithm>
#include <string>
#include <tuple>

#include "forge/csv.hpp"
#include "forge/error.hpp"
#include "forge/realfmt.hpp"

namespace forge {

namespace {

template <typename Key>
struct Flow {
  Key key;
  std::uint64_t gross_in = 0;
  std::uint64_t gross_out = 0;

  std::int64_t net() const { return static_cast<std::int64_t>(gross_out) - static_cast<std::int64_t>(gross_in); }
};

template <typename Key, typename KeyOf>
std::vector<Flow<Key>> tally(const ResolvedTransaction& tx, KeyOf key_of) {
  std::vector<Flow<Key>> flows;
  auto bump = [&](const ResolvedTxo& txo, bool input) {
    Key k = key_of(txo);
    auto it = std::find_if(flows.begin(), flows.end(), [&](const auto& f) { return f.key == k; });
    if (it == flows.end()) {
      flows.push_back({k, 0, 0});
      it = flows.end() - 1;
    }
    (input ? it->gross_in : it->gross_out) += txo.value;
  };
  for (const auto& in : tx.inputs) bump(in, true);
  for (const auto& out : tx.outputs) bump(out, false);
  std::sort(flows.begin(), flows.end(), [](const auto& x, const auto& y) { return x.key < y.key; });
  return flows;
}

template <typename Key, typename KeyOf, typename Emit>
void attribute(const ResolvedTransaction& tx, KeyOf key_of, Emit emit) {
  if (tx.is_coinbase || tx.inputs.empty()) return;
  auto flows = tally<Key>(tx, key_of);

  std::uint64_t sender_inputs = 0;
  for (const auto& f : flows) {
    if (f.net() < 0) sender_inputs += f.gross_in;
  }
  if (sender_inputs == 0) return;
  const double denom = static_cast<double>(sender_inputs);

  for (const auto& s : flows) {
    if (s.net() >= 0) continue;
    const double share_num = static_cast<double>(s.gross_in);
    for (const auto& r : flows) {
      if (r.net() <= 0) continue;
      emit(s.key, r.key, share_num * static_cast<double>(r.net()) / denom);
    }
  }
}

}  // namespace

std::int64_t net_value(const ResolvedTransaction& tx, Alias alias) {
  bool present = false;
  std::int64_t net = 0;
  for (const auto& o : tx.outputs) {
    if (o.alias == alias) {
      net += static_cast<std::int64_t>(o.value);
      present = true;
    }
  }
  for (const auto& i : tx.inputs) {
    if (i.alias == alias) {
      net -= static_cast<std::int64_t>(i.value);
      present = true;
    }
  }
  if (!present) throw Error(ErrorCode::AliasAbsent, "alias " + std::to_string(alias) + " not in transaction");
  return net;
}

std::vector<TransferEvent> attribute_transfers(const ResolvedTransaction& tx) {
  std::vector<TransferEvent> events;
  attribute<Alias>(
      tx, [](const ResolvedTxo& t) { return t.alias; },
      [&](Alias s, Alias r, double v) { events.push_back({s, r, v, tx.block_height}); });
  return events;
}

std::vector<ScriptTransfer> attribute_script_transfers(const ResolvedTransaction& tx) {
  std::vector<ScriptTransfer> out;
  attribute<ScriptSlot>(
      tx, [](const ResolvedTxo& t) { return t.slot; },
      [&](ScriptSlot s, ScriptSlot r, double v) { out.push_back({s, r, v, tx.block_height}); });
  return out;
}

void EdgeAggregator::add(const TransferEvent& e) {
  auto [it, inserted] = edges_.try_emplace({e.sender, e.recipient});
  auto& rec = it->second;
  if (inserted) {
    rec = {e.sender, e.recipient, e.block, e.block, 1, e.value, e.value, e.value};
    return;
  }
  rec.reveal = std::min(rec.reveal, e.block);
  rec.last_seen = std::max(rec.last_seen, e.block);
  rec.total += 1;
  rec.min_sent = std::min(rec.min_sent, e.value);
  rec.max_sent = std::max(rec.max_sent, e.value);
  rec.total_sent += e.value;
}

void EdgeAggregator::merge(const EdgeAggregator& other) {
  for (const auto& [key, o] : other.edges_) {
    auto [it, inserted] = edges_.try_emplace(key, o);
    if (inserted) continue;
    auto& rec = it->second;
    rec.reveal = std::min(rec.reveal, o.reveal);
    rec.last_seen = std::max(rec.last_seen, o.last_seen);
    rec.total += o.total;
    rec.min_sent = std::min(rec.min_sent, o.min_sent);
    rec.max_sent = std::max(rec.max_sent, o.max_sent);
    rec.total_sent += o.total_sent;
  }
}

std::vector<EdgeRecord> EdgeAggregator::finish() const {
  std::vector<EdgeRecord> out;
  out.reserve(edges_.size());
  for (const auto& [key, rec] : edges_) out.push_back(rec);
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
  return out;
}

std::vector<EdgeRecord> aggregate_edges(std::span<const TransferEvent> events) {
  EdgeAggregator agg;
  for (const auto& e : events) agg.add(e);
  return agg.finish();
}

void write_edges_csv(std::ostream& out, std::span<const EdgeRecord> edges) {
  out << kEdgeCsvHeader << '\n';
  for (const auto& e : edges) {
    out << e.a << ',' << e.b << ',' << e.reveal << ',' << e.last_seen << ',' << e.total << ','
        << format_real(e.min_sent) << ',' << format_real(e.max_sent) << ',' << format_real(e.total_sent) << '\n';
  }
}

namespace {

std::uint64_t parse_u64(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw Error(ErrorCode::MalformedRow, "not an unsigned integer: '" + s + "'");
  }
  return std::stoull(s);
}

}  // namespace

std::vector<EdgeRecord> read_edges_csv(std::istream& in) {
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header || csv::join_header(*header) != kEdgeCsvHeader) {
    throw Error(ErrorCode::SchemaMismatch, "edge table header must be: " + std::string(kEdgeCsvHeader));
  }
  std::vector<EdgeRecord> out;
  while (auto row = reader.next()) {
    if (row->size() != 8) throw Error(ErrorCode::MalformedRow, "edge row at line " + std::to_string(reader.line()));
    const auto& r = *row;
    out.push_back({parse_u64(r[0]), parse_u64(r[1]), parse_u64(r[2]), parse_u64(r[3]), parse_u64(r[4]),
                   parse_real(r[5]), parse_real(r[6]), parse_real(r[7])});
  }
  return out;
}

}  // namespace forge
