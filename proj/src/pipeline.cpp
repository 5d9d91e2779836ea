#include "forge/pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>

#include "forge/cluster.hpp"
#include "forge/csv.hpp"
#include "forge/edges.hpp"
#include "forge/features.hpp"
#include "forge/hash.hpp"
#include "forge/io.hpp"
#include "forge/labels.hpp"
#include "forge/nodes.hpp"
#include "forge/realfmt.hpp"
#include "forge/replay.hpp"
#include "forge/store.hpp"

namespace forge {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---- stage table ---------------------------------------------------------

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::parse: return "parse";
    case Stage::filter: return "filter";
    case Stage::cluster: return "cluster";
    case Stage::edges: return "edges";
    case Stage::attributes: return "attributes";
    case Stage::label: return "label";
    case Stage::features: return "features";
    case Stage::sample: return "sample";
    case Stage::export_: return "export";
  }
  return "?";
}

std::optional<Stage> parse_stage(std::string_view name) {
  for (auto s : kAllStages) {
    if (stage_name(s) == name) return s;
  }
  return std::nullopt;
}

std::vector<Stage> stage_dependencies(Stage s) {
  switch (s) {
    case Stage::parse: return {};
    case Stage::filter: return {Stage::parse};
    case Stage::cluster: return {Stage::parse, Stage::filter};
    case Stage::edges: return {Stage::parse, Stage::filter, Stage::cluster};
    case Stage::attributes: return {Stage::edges};
    case Stage::label: return {Stage::parse, Stage::cluster, Stage::attributes};
    case Stage::features: return {Stage::parse, Stage::label};
    case Stage::sample: return {Stage::edges, Stage::label, Stage::features};
    case Stage::export_: return {Stage::sample};
  }
  return {};
}

json StageManifest::to_json() const {
  json j;
  j["stage"] = stage;
  j["status"] = status;
  j["config_hash"] = config_hash;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["metrics"] = metrics;
  j["error"] = error_code ? json{{"code", *error_code}, {"message", error_message.value_or("")}} : json(nullptr);
  return j;
}

StageManifest StageManifest::from_json(const nlohmann::json& j) {
  StageManifest m;
  m.stage = j.at("stage").get<std::string>();
  m.status = j.at("status").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  if (j.contains("metrics")) m.metrics = j.at("metrics");
  if (j.contains("error") && !j.at("error").is_null()) {
    m.error_code = j.at("error").at("code").get<std::string>();
    m.error_message = j.at("error").at("message").get<std::string>();
  }
  return m;
}

std::string directory_digest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  Sha256Stream s;
  for (const auto& f : files) {
    auto line = fs::relative(f, dir).generic_string() + " " + to_hex(file_digest(f)) + "\n";
    s.update(as_bytes(line));
  }
  return to_hex(s.finish());
}

namespace {

std::string digest_hex(const fs::path& p) {
  if (!fs::exists(p)) throw Error(ErrorCode::UpstreamIncomplete, "missing input " + p.string());
  return fs::is_directory(p) ? directory_digest(p) : to_hex(file_digest(p));
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  return out;
}

// Streams into path.tmp and renames on commit.
class AtomicWriter {
 public:
  explicit AtomicWriter(fs::path path) : path_(std::move(path)), tmp_(path_) {
    tmp_ += ".tmp";
    out_ = open_out(tmp_);
  }
  std::ostream& stream() { return out_; }
  void commit() {
    out_.flush();
    if (!out_) throw Error(ErrorCode::IoFailure, "short write on " + tmp_.string());
    out_.close();
    fs::rename(tmp_, path_);
  }

 private:
  fs::path path_;
  fs::path tmp_;
  std::ofstream out_;
};

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::UpstreamIncomplete, "cannot open " + path.string());
  return in;
}

Hash256 hash_from_display(std::string_view hex) {
  auto b = from_hex(hex);
  if (b.size() != 32) throw Error(ErrorCode::MalformedRow, "bad hash '" + std::string(hex) + "'");
  Hash256 h;
  std::reverse_copy(b.begin(), b.end(), h.begin());
  return h;
}

// ---- shared stage inputs -------------------------------------------------

ChainIndex load_chain(const PipelineConfig& cfg, const fs::path& out) {
  auto j = nlohmann::json::parse(read_text(out / "chain" / "index.json"));
  std::vector<fs::path> files;
  for (const auto& name : j.at("files")) files.push_back(cfg.blocks_dir / name.get<std::string>());
  std::vector<BlockLocator> chain;
  for (const auto& b : j.at("blocks")) {
    BlockLocator loc;
    loc.file_index = b.at("file").get<std::size_t>();
    loc.payload_offset = b.at("offset").get<std::size_t>();
    loc.payload_length = b.at("length").get<std::uint32_t>();
    loc.hash = hash_from_display(b.at("hash").get<std::string>());
    loc.prev_hash = hash_from_display(b.at("prev").get<std::string>());
    loc.timestamp = b.at("time").get<std::uint32_t>();
    chain.push_back(loc);
  }
  return ChainIndex(std::move(files), std::move(chain));
}

std::map<Hash256, FilterVerdict> load_excluded(const fs::path& path) {
  auto in = open_in(path);
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header || csv::join_header(*header) != "txid,height,coinjoin,colored,reason") {
    throw Error(ErrorCode::SchemaMismatch, path.string() + ": unexpected header");
  }
  std::map<Hash256, FilterVerdict> out;
  while (auto row = reader.next()) {
    const auto& r = *row;
    if (r.size() != 5) throw Error(ErrorCode::MalformedRow, path.string() + " line " + std::to_string(reader.line()));
    FilterVerdict v;
    v.is_coinjoin = r[2] == "1";
    for (auto p : {ColoredProtocol::open_assets, ColoredProtocol::omni, ColoredProtocol::epobc}) {
      if (r[3] == colored_protocol_name(p)) v.colored_protocol = p;
    }
    v.reason = r[4];
    out.emplace(hash_from_display(r[0]), std::move(v));
  }
  return out;
}

constexpr char kEventsMagic[] = "FGEVENT1";

void write_event(std::ostream& out, const TransferEvent& e) {
  char row[32];
  std::memcpy(row, &e.sender, 8);
  std::memcpy(row + 8, &e.recipient, 8);
  std::memcpy(row + 16, &e.value, 8);
  std::memcpy(row + 24, &e.block, 8);
  out.write(row, sizeof row);
}

template <typename F>
void read_events(const fs::path& path, F&& visit) {
  auto in = open_in(path);
  char header[16];
  in.read(header, sizeof header);
  if (!in || std::memcmp(header, kEventsMagic, 8) != 0) throw Error(ErrorCode::SchemaMismatch, path.string() + ": bad magic");
  std::uint64_t count;
  std::memcpy(&count, header + 8, 8);
  std::vector<char> buf(32 * 4096);
  for (std::uint64_t done = 0; done < count;) {
    auto n = std::min<std::uint64_t>(4096, count - done);
    in.read(buf.data(), static_cast<std::streamsize>(n * 32));
    if (!in) throw Error(ErrorCode::TruncatedInput, path.string() + ": truncated");
    for (std::uint64_t i = 0; i < n; ++i) {
      TransferEvent e;
      const char* row = buf.data() + i * 32;
      std::memcpy(&e.sender, row, 8);
      std::memcpy(&e.recipient, row + 8, 8);
      std::memcpy(&e.value, row + 16, 8);
      std::memcpy(&e.block, row + 24, 8);
      visit(e);
    }
    done += n;
  }
}

constexpr std::string_view kClusterStatsHeader =
    "alias,cluster_size,cluster_num_edges,cluster_num_cc,cluster_num_nodes_in_cc";

std::vector<ClusterStats> read_cluster_stats(const fs::path& path) {
  auto in = open_in(path);
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header || csv::join_header(*header) != kClusterStatsHeader) {
    throw Error(ErrorCode::SchemaMismatch, path.string() + ": unexpected header");
  }
  std::vector<ClusterStats> out;
  while (auto row = reader.next()) {
    const auto& r = *row;
    if (r.size() != 5 || std::stoull(r[0]) != out.size()) {
      throw Error(ErrorCode::MalformedRow, path.string() + " line " + std::to_string(reader.line()));
    }
    out.push_back({std::stoull(r[1]), std::stoull(r[2]), std::stoull(r[3]), std::stoull(r[4])});
  }
  return out;
}

std::vector<Day> read_block_days(const fs::path& path) {
  auto in = open_in(path);
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header || csv::join_header(*header) != "height,timestamp,date") {
    throw Error(ErrorCode::SchemaMismatch, path.string() + ": unexpected header");
  }
  std::vector<Day> days;
  while (auto row = reader.next()) {
    if (row->size() != 3) throw Error(ErrorCode::MalformedRow, path.string() + " line " + std::to_string(reader.line()));
    days.push_back(parse_date((*row)[2]));
  }
  return days;
}

struct NodesFile {
  std::vector<NodeRecord> nodes;
};

std::vector<NodeRecord> load_nodes(const fs::path& path) {
  auto in = open_in(path);
  return read_nodes_csv(in);
}

// ---- per-stage declarations ------------------------------------------------

struct StagePlan {
  std::string config_text;
  std::vector<std::pair<std::string, fs::path>> inputs;
};

StagePlan plan(Stage s, const PipelineConfig& cfg, const fs::path& out) {
  StagePlan p;
  auto add = [&](const std::string& rel) { p.inputs.emplace_back(rel, out / rel); };
  switch (s) {
    case Stage::parse:
      p.config_text = fmt::format("blocks_dir={};network={};height_limit={};allow_short_chain={}",
                                  cfg.blocks_dir.generic_string(), cfg.network, *cfg.height_limit,
                                  cfg.allow_short_chain);
      if (fs::is_directory(cfg.blocks_dir)) {
        for (const auto& f : list_block_files(cfg.blocks_dir)) {
          p.inputs.emplace_back("blocks/" + f.filename().string(), f);
        }
      }
      break;
    case Stage::filter:
      p.config_text = fmt::format("coinjoin={},{},{};enable={}{}{}{}", cfg.filters.coinjoin.min_equal_outputs,
                                  cfg.filters.coinjoin.min_distinct_input_scripts,
                                  cfg.filters.coinjoin.min_equal_value, cfg.filters.detect_coinjoin,
                                  cfg.filters.detect_open_assets, cfg.filters.detect_omni, cfg.filters.detect_epobc);
      add("chain/index.json");
      break;
    case Stage::cluster:
      add("chain/index.json");
      add("filtered.csv");
      break;
    case Stage::edges:
      add("chain/index.json");
      add("filtered.csv");
      add("cluster_map.bin");
      break;
    case Stage::attributes:
      add("events.bin");
      add("edges.csv");
      add("cluster_stats.csv");
      break;
    case Stage::label:
      p.config_text = "network=" + cfg.network;
      add("cluster_map.bin");
      add("node_attributes.csv");
      if (cfg.labels_file) p.inputs.emplace_back("labels_file", *cfg.labels_file);
      if (cfg.coinbase_patterns) {
        p.inputs.emplace_back("coinbase_patterns", *cfg.coinbase_patterns);
        add("chain/index.json");
      }
      break;
    case Stage::features:
      p.config_text = fmt::format("split_seed={};manifest={}", cfg.split_seed, feature_manifest().version);
      add("nodes.csv");
      add("chain/block_dates.csv");
      p.inputs.emplace_back("rates_file", cfg.rates_file);
      break;
    case Stage::sample:
      p.config_text = cfg.sampler.canonical_text() + fmt::format(";copies={}", cfg.copies);
      add("nodes.csv");
      add("edges.csv");
      add("features.csv");
      add("splits.csv");
      break;
    case Stage::export_:
      add("store");
      break;
  }
  return p;
}

using Outputs = std::vector<std::string>;
using Clock = std::chrono::steady_clock;

// ---- stage bodies ----------------------------------------------------------

void run_parse(const PipelineConfig& cfg, const fs::path& out, Outputs& outputs, json& metrics) {
  auto files = list_block_files(cfg.blocks_dir);
  if (files.empty()) throw Error(ErrorCode::MissingGenesis, "no blk*.dat files in " + cfg.blocks_dir.string());
  auto chain = ChainIndex::build(files, *cfg.height_limit, cfg.magic(), ChainOptions{cfg.allow_short_chain});

  // Decode every selected block once so corrupt payloads fail here.
  std::uint64_t txs = 0;
  chain.for_each([&](std::uint64_t, const Block& b) { txs += b.transactions.size(); });

  json j;
  j["format"] = "forge-chain/1";
  j["network"] = cfg.network;
  auto& names = j["files"] = json::array();
  for (const auto& f : files) names.push_back(f.filename().string());
  auto& blocks = j["blocks"] = json::array();
  std::ostringstream dates;
  dates << "height,timestamp,date\n";
  for (std::size_t h = 0; h < chain.locators().size(); ++h) {
    const auto& loc = chain.locators()[h];
    blocks.push_back(json{{"height", h},
                          {"file", loc.file_index},
                          {"offset", loc.payload_offset},
                          {"length", loc.payload_length},
                          {"hash", to_hex_reversed(loc.hash)},
                          {"prev", to_hex_reversed(loc.prev_hash)},
                          {"time", loc.timestamp}});
    dates << h << ',' << loc.timestamp << ',' << format_date(day_from_timestamp(loc.timestamp)) << '\n';
  }
  write_file_atomic(out / "chain" / "index.json", j.dump(1) + "\n");
  write_file_atomic(out / "chain" / "block_dates.csv", dates.str());
  outputs = {"chain/index.json", "chain/block_dates.csv"};
  metrics["blocks"] = chain.size();
  metrics["transactions"] = txs;
}

void run_filter(const PipelineConfig& cfg, const fs::path& out, Outputs& outputs, json& metrics) {
  auto chain = load_chain(cfg, out);
  std::ostringstream rows;
  rows << "txid,height,coinjoin,colored,reason\n";
  std::uint64_t coinjoin = 0, colored = 0;
  std::vector<ScriptId> ids;
  UtxoReplay replay;
  replay.run(chain, [&](const UtxoReplay::TxView& v) {
    if (v.tx.is_coinbase()) return;
    ids.clear();
    for (const auto& in : v.inputs) ids.push_back(in.script);
    auto verdict = evaluate_filters(v.tx, ids, cfg.filters);
    if (!verdict.excluded()) return;
    coinjoin += verdict.is_coinjoin;
    colored += verdict.colored_protocol != ColoredProtocol::none;
    csv::write_row(rows, {to_hex_reversed(v.tx.txid), std::to_string(v.tx.block_height),
                          verdict.is_coinjoin ? "1" : "0", std::string(colored_protocol_name(verdict.colored_protocol)),
                          verdict.reason});
  });
  write_file_atomic(out / "filtered.csv", rows.str());
  outputs = {"filtered.csv"};
  metrics["transactions"] = replay.transactions();
  metrics["coinjoin"] = coinjoin;
  metrics["colored"] = colored;
}

void run_cluster(const PipelineConfig& cfg, const fs::path& out, Outputs& outputs, json& metrics) {
  auto chain = load_chain(cfg, out);
  auto excluded = load_excluded(out / "filtered.csv");
  ClusterIndex idx;
  std::vector<ScriptId> ins;
  std::uint64_t unions = 0;
  const FilterVerdict pass;
  UtxoReplay replay;
  replay.run(chain, [&](const UtxoReplay::TxView& v) {
    for (std::size_t i = 0; i < v.tx.outputs.size(); ++i) {
      if (v.tx.outputs[i].value > 0) idx.register_script(v.output_scripts[i]);
    }
    if (v.tx.is_coinbase()) return;
    ins.clear();
    for (const auto& in : v.inputs) {
      if (in.value > 0) ins.push_back(in.script);
    }
    auto ex = excluded.find(v.tx.txid);
    unions += apply_common_input_heuristic(std::span<const ScriptId>(ins), false,
                                           ex == excluded.end() ? pass : ex->second, idx);
  });
  auto aliases = finalize_aliases(idx);
  auto entries = sorted_script_aliases(idx, aliases);
  write_cluster_map(out / "cluster_map.bin", entries);
  write_cluster_map_csv(out / "cluster_map.csv", entries);
  outputs = {"cluster_map.bin", "cluster_map.csv"};
  metrics["scripts"] = idx.script_count();
  metrics["clusters"] = aliases.num_aliases();
  metrics["unions"] = unions;
}

// Cluster map re-keyed by script id order; slot i is entries[i].
struct SlotTable {
  std::unordered_map<ScriptId, ScriptSlot, ScriptIdHash> slot;
  AliasMap aliases;
};

SlotTable load_slots(const fs::path& path) {
  auto entries = read_cluster_map(path);
  SlotTable t;
  t.slot.reserve(entries.size());
  Alias max_alias = 0;
  for (const auto& e : entries) max_alias = std::max(max_alias, e.alias);
  t.aliases.cluster_size.assign(entries.empty() ? 0 : max_alias + 1, 0);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    t.slot.emplace(entries[i].script_id, static_cast<ScriptSlot>(i));
    t.aliases.slot_alias.push_back(entries[i].alias);
    ++t.aliases.cluster_size[entries[i].alias];
  }
  return t;
}

void run_edges(const PipelineConfig& cfg, const fs::path& out, Outputs& outputs, json& metrics) {
  auto chain = load_chain(cfg, out);
  auto excluded = load_excluded(out / "filtered.csv");
  auto slots = load_slots(out / "cluster_map.bin");
  auto resolve = [&](std::uint64_t value, const ScriptId& id) {
    auto it = slots.slot.find(id);
    if (it == slots.slot.end()) {
      throw Error(ErrorCode::InconsistentInputs, "script " + to_hex(id) + " missing from the cluster map");
    }
    return ResolvedTxo{value, slots.aliases.alias_of(it->second), it->second};
  };

  EdgeAggregator agg;
  ClusterStatsBuilder stats(slots.aliases);
  AtomicWriter events(out / "events.bin");
  events.stream().write(kEventsMagic, 8);
  const std::uint64_t zero = 0;
  events.stream().write(reinterpret_cast<const char*>(&zero), 8);
  std::uint64_t count = 0;

  UtxoReplay replay;
  ResolvedTransaction rt;
  replay.run(chain, [&](const UtxoReplay::TxView& v) {
    if (v.tx.is_coinbase() || excluded.count(v.tx.txid)) return;
    rt.inputs.clear();
    rt.outputs.clear();
    rt.block_height = v.tx.block_height;
    rt.is_coinbase = false;
    for (const auto& in : v.inputs) {
      if (in.value > 0) rt.inputs.push_back(resolve(in.value, in.script));
    }
    for (std::size_t i = 0; i < v.tx.outputs.size(); ++i) {
      if (v.tx.outputs[i].value > 0) rt.outputs.push_back(resolve(v.tx.outputs[i].value, v.output_scripts[i]));
    }
    for (const auto& e : attribute_transfers(rt)) {
      agg.add(e);
      write_event(events.stream(), e);
      ++count;
    }
    for (const auto& t : attribute_script_transfers(rt)) stats.add(t);
  });
  events.stream().seekp(8);
  events.stream().write(reinterpret_cast<const char*>(&count), 8);
  events.commit();

  auto edges = agg.finish();
  {
    AtomicWriter w(out / "edges.csv");
    write_edges_csv(w.stream(), edges);
    w.commit();
  }
  auto cs = stats.finish();
  {
    AtomicWriter w(out / "cluster_stats.csv");
    w.stream() << kClusterStatsHeader << '\n';
    for (std::size_t a = 0; a < cs.size(); ++a) {
      w.stream() << a << ',' << cs[a].cluster_size << ',' << cs[a].cluster_num_edges << ',' << cs[a].cluster_num_cc
                 << ',' << cs[a].cluster_num_nodes_in_cc << '\n';
    }
    w.commit();
  }
  outputs = {"events.bin", "edges.csv", "cluster_stats.csv"};
  metrics["transactions"] = replay.transactions();
  metrics["events"] = count;
  metrics["edges"] = edges.size();
}

void run_attributes(const PipelineConfig&, const fs::path& out, Outputs& outputs, json& metrics) {
  auto stats = read_cluster_stats(out / "cluster_stats.csv");
  NodeAttributeBuilder builder(stats.size());
  read_events(out / "events.bin", [&](const TransferEvent& e) { builder.add(e); });
  auto edges_in = open_in(out / "edges.csv");
  auto edges = read_edges_csv(edges_in);
  auto nodes = builder.finish(edges, stats);
  AtomicWriter w(out / "node_attributes.csv");
  write_nodes_csv(w.stream(), nodes);
  w.commit();
  outputs = {"node_attributes.csv"};
  metrics["nodes"] = nodes.size();
}

void run_label(const PipelineConfig& cfg, const fs::path& out, Outputs& outputs, json& metrics) {
  std::vector<LabelRecord> records;
  std::size_t rejected = 0;
  if (cfg.labels_file) {
    auto loaded = load_labels(*cfg.labels_file);
    records = std::move(loaded.records);
    rejected = loaded.errors.size();
  }
  std::size_t from_coinbase = 0;
  if (cfg.coinbase_patterns) {
    std::ifstream pin(*cfg.coinbase_patterns, std::ios::binary);
    if (!pin) throw Error(ErrorCode::IoFailure, "cannot open " + cfg.coinbase_patterns->string());
    CoinbaseTagger tagger(load_coinbase_patterns(pin), cfg.address_network());
    load_chain(cfg, out).for_each([&](std::uint64_t, const Block& b) { tagger.visit(b); });
    from_coinbase = tagger.records().size();
    records.insert(records.end(), tagger.records().begin(), tagger.records().end());
  }

  auto entries = read_cluster_map(out / "cluster_map.bin");
  auto result = propagate(records, sorted_alias_lookup(entries));
  auto nodes = load_nodes(out / "node_attributes.csv");
  apply_cluster_labels(nodes, result.labels);

  std::ostringstream addr, labels, unmatched, conflicts;
  write_labels(addr, records);
  write_cluster_labels_csv(labels, result.labels);
  unmatched << "address,reason\n";
  for (const auto& u : result.unmatched) csv::write_row(unmatched, {u.address, u.reason});
  conflicts << "alias\n";
  for (auto a : result.conflicted) conflicts << a << '\n';
  write_file_atomic(out / "address_labels.csv", addr.str());
  write_file_atomic(out / "labels.csv", labels.str());
  write_file_atomic(out / "label_unmatched.csv", unmatched.str());
  write_file_atomic(out / "label_conflicts.csv", conflicts.str());
  AtomicWriter w(out / "nodes.csv");
  write_nodes_csv(w.stream(), nodes);
  w.commit();
  outputs = {"address_labels.csv", "labels.csv", "label_unmatched.csv", "label_conflicts.csv", "nodes.csv"};
  metrics["address_records"] = records.size();
  metrics["coinbase_records"] = from_coinbase;
  metrics["rejected_rows"] = rejected;
  metrics["labeled_clusters"] = result.labels.size();
  metrics["conflicted_clusters"] = result.conflicted.size();
  metrics["unmatched_addresses"] = result.unmatched.size();
}

void run_features(const PipelineConfig& cfg, const fs::path& out, Outputs& outputs, json& metrics) {
  auto nodes = load_nodes(out / "nodes.csv");
  auto days = read_block_days(out / "chain" / "block_dates.csv");
  auto rates = RatesTable::load(cfg.rates_file);
  const auto& manifest = feature_manifest();

  std::vector<FeatureRow> rows;
  rows.reserve(nodes.size());
  std::vector<std::pair<Alias, Category>> labeled;
  for (const auto& n : nodes) {
    rows.push_back({n.alias, n.label, derive_features(n, rates, days)});
    if (n.label) labeled.emplace_back(n.alias, *n.label);
  }
  auto splits = make_splits(labeled, cfg.split_seed);

  auto row_of = [&](Alias a) -> const FeatureRow& {
    auto it = std::lower_bound(rows.begin(), rows.end(), a, [](const FeatureRow& r, Alias x) { return r.alias < x; });
    return *it;
  };
  std::vector<FeatureVector> train;
  std::size_t per_split[3] = {0, 0, 0};
  for (const auto& s : splits) {
    ++per_split[static_cast<int>(s.split)];
    if (s.split == Split::train) train.push_back(row_of(s.alias).values);
  }
  auto constants = fit_normalization(train, manifest, "train");
  for (auto& r : rows) r.values = normalize(r.values, constants);

  std::ostringstream sp, cs;
  write_splits_csv(sp, splits);
  write_constants(cs, constants);
  write_file_atomic(out / "splits.csv", sp.str());
  write_file_atomic(out / "constants.csv", cs.str());
  AtomicWriter w(out / "features.csv");
  write_feature_matrix(w.stream(), manifest, rows);
  w.commit();
  outputs = {"splits.csv", "constants.csv", "features.csv"};
  metrics["nodes"] = rows.size();
  metrics["features"] = manifest.size();
  metrics["train"] = per_split[0];
  metrics["validation"] = per_split[1];
  metrics["test"] = per_split[2];
}

void run_sample(const PipelineConfig& cfg, const fs::path& out, Outputs& outputs, json& metrics) {
  auto store = GraphStore::import_csv(out / "nodes.csv", out / "edges.csv");
  fs::remove_all(out / "store");
  store.save(out / "store");

  const auto& manifest = feature_manifest();
  auto fin = open_in(out / "features.csv");
  std::map<Alias, FeatureVector> features;
  std::map<Alias, Category> labels;
  for (auto& r : read_feature_matrix(fin, manifest)) {
    if (r.label) labels.emplace(r.alias, *r.label);
    features.emplace(r.alias, std::move(r.values));
  }
  auto sin = open_in(out / "splits.csv");
  auto splits = read_splits_csv(sin);

  fs::remove_all(out / "neighborhoods");
  BufferWriteRequest req;
  req.dir = out / "neighborhoods";
  req.config = &cfg.sampler;
  req.copies = cfg.copies;
  req.manifest = &manifest;
  req.features = &features;
  req.labels = &labels;
  req.splits = splits;
  auto written = write_buffers(req, store);

  outputs = {"store/nodes.bin", "store/edges.bin", "store/edges_rev.bin", "store/offsets.bin", "store/FORMAT",
             "neighborhoods"};
  metrics["store_nodes"] = store.node_count();
  metrics["store_edges"] = store.edge_count();
  metrics["seeds"] = written.seeds;
  metrics["neighborhood_files"] = written.files;
}

void run_export(const PipelineConfig&, const fs::path& out, Outputs& outputs, json& metrics) {
  auto store = GraphStore::open(out / "store");
  store.export_csv(out / "export" / "nodes.csv", out / "export" / "edges.csv");
  AtomicWriter w(out / "export" / "graph.sql");
  store.export_sql(w.stream());
  w.commit();
  outputs = {"export/nodes.csv", "export/edges.csv", "export/graph.sql"};
  metrics["nodes"] = store.node_count();
  metrics["edges"] = store.edge_count();
}

void execute(Stage s, const PipelineConfig& cfg, const fs::path& out, Outputs& outputs, json& metrics) {
  switch (s) {
    case Stage::parse: return run_parse(cfg, out, outputs, metrics);
    case Stage::filter: return run_filter(cfg, out, outputs, metrics);
    case Stage::cluster: return run_cluster(cfg, out, outputs, metrics);
    case Stage::edges: return run_edges(cfg, out, outputs, metrics);
    case Stage::attributes: return run_attributes(cfg, out, outputs, metrics);
    case Stage::label: return run_label(cfg, out, outputs, metrics);
    case Stage::features: return run_features(cfg, out, outputs, metrics);
    case Stage::sample: return run_sample(cfg, out, outputs, metrics);
    case Stage::export_: return run_export(cfg, out, outputs, metrics);
  }
}

}  // namespace

// ---- driver ----------------------------------------------------------------

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {}

fs::path Pipeline::manifest_path(Stage s) const {
  return cfg_.out_dir / "manifests" / (std::string(stage_name(s)) + ".json");
}

std::optional<StageManifest> Pipeline::load_manifest(Stage s) const {
  auto p = manifest_path(s);
  if (!fs::exists(p)) return std::nullopt;
  try {
    return StageManifest::from_json(nlohmann::json::parse(read_text(p)));
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

StageManifest Pipeline::run(Stage stage) {
  const auto& out = cfg_.out_dir;
  StageManifest m;
  m.stage = stage_name(stage);
  auto started = Clock::now();
  try {
    for (auto dep : stage_dependencies(stage)) {
      auto dm = load_manifest(dep);
      if (!dm || dm->status != "complete") {
        throw Error(ErrorCode::UpstreamIncomplete,
                    fmt::format("stage {} needs a complete {} stage", stage_name(stage), stage_name(dep)));
      }
    }
    auto p = plan(stage, cfg_, out);
    m.config_hash = to_hex(sha256(as_bytes(fmt::format("{}/1;{}", stage_name(stage), p.config_text))));
    for (const auto& [name, path] : p.inputs) m.inputs[name] = digest_hex(path);

    if (auto prev = load_manifest(stage);
        prev && prev->status == "complete" && prev->config_hash == m.config_hash && prev->inputs == m.inputs) {
      bool intact = true;
      for (const auto& [rel, digest] : prev->outputs) {
        if (!fs::exists(out / rel) || digest_hex(out / rel) != digest) {
          intact = false;
          break;
        }
      }
      if (intact) {
        prev->skipped = true;
        return *prev;
      }
    }

    fs::create_directories(out);
    Outputs outputs;
    execute(stage, cfg_, out, outputs, m.metrics);
    for (const auto& rel : outputs) m.outputs[rel] = digest_hex(out / rel);
    double seconds = std::chrono::duration<double>(Clock::now() - started).count();
    m.metrics["seconds"] = seconds;
    if (m.metrics.contains("transactions") && seconds > 0) {
      m.metrics["transactions_per_second"] = m.metrics["transactions"].get<double>() / seconds;
    }
    m.status = "complete";
    write_file_atomic(manifest_path(stage), m.to_json().dump(2) + "\n");
    return m;
  } catch (const Error& e) {
    m.status = "failed";
    m.error_code = std::string(error_code_name(e.code()));
    m.error_message = e.what();
    write_file_atomic(manifest_path(stage), m.to_json().dump(2) + "\n");
    throw;
  } catch (const std::exception& e) {
    m.status = "failed";
    m.error_code = std::string(error_code_name(ErrorCode::IoFailure));
    m.error_message = e.what();
    write_file_atomic(manifest_path(stage), m.to_json().dump(2) + "\n");
    throw Error(ErrorCode::IoFailure, e.what());
  }
}

std::vector<StageManifest> Pipeline::run_all() {
  std::vector<StageManifest> done;
  for (auto s : kAllStages) done.push_back(run(s));
  return done;
}

}  // namespace forge
