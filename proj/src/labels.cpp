#include "forge/labels.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "forge/csv.hpp"
#include "forge/nodes.hpp"

namespace forge {

LabelLoadResult load_labels(std::istream& in) {
  LabelLoadResult result;
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header) return result;
  auto joined = csv::join_header(*header);
  bool with_entity = joined == "address,label,source,entity";
  if (!with_entity && joined != "address,label,source") {
    throw Error(ErrorCode::MalformedRow, "label file header must be address,label,source[,entity], got: " + joined);
  }

  while (auto row = reader.next()) {
    const auto line = reader.line();
    const auto& r = *row;
    if (r.size() < 3 || r.size() > 4 || (r.size() == 4 && !with_entity) || r[0].empty()) {
      result.errors.push_back({line, ErrorCode::MalformedRow, "expected address,label,source[,entity]"});
      continue;
    }
    auto category = parse_category(r[1]);
    if (!category) {
      result.errors.push_back({line, ErrorCode::UnknownCategory, "unknown category '" + r[1] + "'"});
      continue;
    }
    LabelRecord rec{r[0], *category, r[2], std::nullopt};
    if (r.size() == 4 && !r[3].empty()) rec.entity_name = r[3];
    result.records.push_back(std::move(rec));
  }
  return result;
}

LabelLoadResult load_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  return load_labels(in);
}

void write_labels(std::ostream& out, std::span<const LabelRecord> records) {
  out << "address,label,source,entity\n";
  for (const auto& r : records) {
    csv::write_row(out, {r.address, std::string(category_name(r.category)), r.source, r.entity_name.value_or("")});
  }
}

AliasLookup sorted_alias_lookup(std::span<const ScriptAliasEntry> sorted) {
  return [sorted](const ScriptId& id) -> std::optional<Alias> {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), id,
                               [](const ScriptAliasEntry& e, const ScriptId& key) { return e.script_id < key; });
    if (it == sorted.end() || it->script_id != id) return std::nullopt;
    return it->alias;
  };
}

PropagationResult propagate(std::span<const LabelRecord> labels, const AliasLookup& cluster_map,
                            const ScriptResolver& resolve) {
  struct Evidence {
    std::set<Category> categories;
    std::set<std::string> addresses;
  };
  std::map<Alias, Evidence> evidence;
  PropagationResult result;

  for (const auto& rec : labels) {
    std::vector<ScriptId> scripts;
    try {
      scripts = resolve(rec.address);
    } catch (const Error& e) {
      result.unmatched.push_back({rec.address, e.what()});
      continue;
    }
    bool matched = false;
    for (const auto& id : scripts) {
      auto alias = cluster_map(id);
      if (!alias) continue;
      matched = true;
      auto& ev = evidence[*alias];
      ev.categories.insert(rec.category);
      ev.addresses.insert(rec.address);
    }
    if (!matched) result.unmatched.push_back({rec.address, "no on-chain script"});
  }

  for (const auto& [alias, ev] : evidence) {
    if (ev.categories.size() == 1) {
      result.labels.push_back({alias, *ev.categories.begin(), ev.addresses.size()});
    } else {
      result.conflicted.push_back(alias);
    }
  }
  return result;
}

void write_cluster_labels_csv(std::ostream& out, std::span<const ClusterLabel> labels) {
  out << "alias,label\n";
  for (const auto& l : labels) out << l.alias << ',' << category_name(l.category) << '\n';
}

void apply_cluster_labels(std::span<NodeRecord> nodes, std::span<const ClusterLabel> labels) {
  for (auto& n : nodes) n.label.reset();
  for (const auto& l : labels) {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), l.alias,
                               [](const NodeRecord& n, Alias a) { return n.alias < a; });
    if (it == nodes.end() || it->alias != l.alias) {
      throw Error(ErrorCode::UnknownAlias, "label for alias " + std::to_string(l.alias) + " with no node record");
    }
    it->label = l.category;
  }
}

std::vector<CoinbasePattern> load_coinbase_patterns(std::istream& in) {
  std::vector<CoinbasePattern> out;
  csv::Reader reader(in);
  while (auto row = reader.next()) {
    if (row->size() != 2 || (*row)[0].empty()) {
      throw Error(ErrorCode::MalformedRow, "pattern line " + std::to_string(reader.line()) + " must be substring,entity");
    }
    out.push_back({(*row)[0], (*row)[1]});
  }
  return out;
}

CoinbaseTagger::CoinbaseTagger(std::vector<CoinbasePattern> patterns, AddressNetwork network)
    : patterns_(std::move(patterns)), network_(network) {
  if (patterns_.empty()) throw Error(ErrorCode::ConfigInvalid, "coinbase tagging needs at least one pattern");
}

void CoinbaseTagger::visit(const Block& block) {
  if (block.transactions.empty() || !block.transactions[0].is_coinbase()) return;
  const auto& cb = block.transactions[0];
  const auto& script = cb.inputs[0].unlock_script;
  std::string_view message(reinterpret_cast<const char*>(script.data()), script.size());

  auto match = std::find_if(patterns_.begin(), patterns_.end(),
                            [&](const CoinbasePattern& p) { return message.find(p.substring) != std::string_view::npos; });
  if (match == patterns_.end()) return;

  for (const auto& out : cb.outputs) {
    if (out.value == 0) continue;
    auto address = script_to_address(out.lock_script, network_);
    if (!address) continue;
    std::pair<std::string, std::string> key{*address, match->entity};
    if (!seen_.insert(key).second) continue;
    records_.push_back({*address, Category::mining, "CoinbaseMessages", match->entity});
  }
}

std::vector<LabelRecord> extract_coinbase_tags(std::span<const ChainBlock> chain, std::vector<CoinbasePattern> patterns,
                                               AddressNetwork network) {
  CoinbaseTagger tagger(std::move(patterns), network);
  for (const auto& cb : chain) tagger.visit(cb.block);
  return tagger.records();
}

}  // namespace forge
