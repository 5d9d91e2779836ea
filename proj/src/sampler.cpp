#include "forge/sampler.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "forge/csv.hpp"
#include "forge/error.hpp"
#include "forge/hash.hpp"
#include "forge/io.hpp"

namespace forge {

void SamplerConfig::validate() const {
  if (fanouts.empty()) throw Error(ErrorCode::ConfigInvalid, "sampler depth must be at least 1");
  for (auto f : fanouts) {
    if (f == 0) throw Error(ErrorCode::ConfigInvalid, "sampler fanouts must be at least 1");
  }
  if (edge_sample_cap == 0) throw Error(ErrorCode::ConfigInvalid, "edge_sample_cap must be at least 1");
}

std::string SamplerConfig::canonical_text() const {
  std::string s = "fanouts=";
  for (std::size_t i = 0; i < fanouts.size(); ++i) s += (i ? "," : "") + std::to_string(fanouts[i]);
  return s + fmt::format(";high_degree_threshold={};edge_sample_cap={};rng_seed={}", high_degree_threshold,
                         edge_sample_cap, rng_seed);
}

std::string SamplerConfig::hash() const { return to_hex(sha256(as_bytes(canonical_text()))); }

std::vector<Alias> neighbors(Alias alias, const SamplerConfig& cfg, const GraphStore& store, Rng& rng) {
  std::vector<Alias> out;
  auto take = [&](const EdgeRecord& e) { out.push_back(e.a == alias ? e.b : e.a); };
  auto adj = store.adjacency(alias, Direction::both);
  if (adj.size() > cfg.high_degree_threshold) {
    for (const auto& e : store.random_edge_sample(alias, cfg.edge_sample_cap, rng)) take(e);
  } else {
    for (const auto& e : adj) take(e);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  // A self-loop is not a neighbor.
  out.erase(std::remove(out.begin(), out.end(), alias), out.end());
  return out;
}

namespace {

// n_k of the candidates without replacement, kept in candidate order.
std::vector<Alias> choose(const std::vector<Alias>& candidates, std::size_t k, Rng& rng) {
  const std::size_t n = candidates.size();
  std::set<std::size_t> picked;
  for (std::size_t j = n - k; j < n; ++j) {
    auto t = static_cast<std::size_t>(rng.below(j + 1));
    if (!picked.insert(t).second) picked.insert(j);
  }
  std::vector<Alias> out;
  out.reserve(k);
  for (auto i : picked) out.push_back(candidates[i]);
  return out;
}

}  // namespace

SampledNeighborhood sample_neighborhood(Alias seed, const SamplerConfig& cfg, const GraphStore& store, Rng& rng) {
  if (!store.contains(seed)) throw Error(ErrorCode::UnknownAlias, "seed " + std::to_string(seed) + " not in store");
  SampledNeighborhood g;
  g.seed = seed;
  g.nodes.push_back(seed);
  g.depth.push_back(0);

  std::unordered_set<Alias> seen{seed};  // N_prev ∪ N_next ∪ hat N_next
  std::vector<Alias> next{seed};
  for (std::size_t k = 1; k <= cfg.depth(); ++k) {
    const std::size_t nk = cfg.fanouts[k - 1];
    std::vector<Alias> hat;
    for (Alias n : next) {
      std::vector<Alias> v;
      for (Alias c : neighbors(n, cfg, store, rng)) {
        if (!seen.count(c)) v.push_back(c);
      }
      if (v.size() > nk) v = choose(v, nk, rng);
      for (Alias c : v) {
        seen.insert(c);
        hat.push_back(c);
        g.nodes.push_back(c);
        g.depth.push_back(static_cast<std::uint32_t>(k));
        g.edges.emplace_back(n, c);
      }
    }
    next = std::move(hat);
  }
  return g;
}

std::vector<std::vector<SampledNeighborhood>> build_buffer(std::span<const Alias> seeds, std::size_t copies,
                                                           const SamplerConfig& cfg, const GraphStore& store) {
  cfg.validate();
  std::vector<std::vector<SampledNeighborhood>> out(seeds.size(), std::vector<SampledNeighborhood>(copies));
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), seeds.size()));
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < seeds.size(); i += workers) {
          for (std::size_t c = 0; c < copies; ++c) {
            Rng rng(derive_seed(cfg.rng_seed, seeds[i], c));
            out[i][c] = sample_neighborhood(seeds[i], cfg, store, rng);
          }
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// ---- splits ----------------------------------------------------------------

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

namespace {

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw Error(ErrorCode::MalformedRow, "unknown split '" + std::string(s) + "'");
}

}  // namespace

std::vector<SplitAssignment> make_splits(std::vector<std::pair<Alias, Category>> labeled, std::uint64_t seed) {
  std::sort(labeled.begin(), labeled.end(), [](const auto& x, const auto& y) {
    return std::tie(x.second, x.first) < std::tie(y.second, y.first);
  });
  std::vector<SplitAssignment> out;
  out.reserve(labeled.size());
  for (std::size_t lo = 0; lo < labeled.size();) {
    std::size_t hi = lo;
    while (hi < labeled.size() && labeled[hi].second == labeled[lo].second) ++hi;
    std::vector<Alias> members;
    for (std::size_t i = lo; i < hi; ++i) members.push_back(labeled[i].first);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(labeled[lo].second)));
    rng.shuffle(std::span<Alias>(members));
    const std::size_t n = members.size();
    const std::size_t train_end = n == 1 ? 1 : (4 * n + 5) / 10;
    const std::size_t val_end = std::max(train_end, (7 * n + 5) / 10);
    for (std::size_t i = 0; i < n; ++i) {
      Split s = i < train_end ? Split::train : i < val_end ? Split::validation : Split::test;
      out.push_back({members[i], labeled[lo].second, s});
    }
    lo = hi;
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.alias < y.alias; });
  return out;
}

void write_splits_csv(std::ostream& out, std::span<const SplitAssignment> splits) {
  out << "alias,label,split\n";
  for (const auto& s : splits) out << s.alias << ',' << category_name(s.label) << ',' << split_name(s.split) << '\n';
}

std::vector<SplitAssignment> read_splits_csv(std::istream& in) {
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header || csv::join_header(*header) != "alias,label,split") {
    throw Error(ErrorCode::SchemaMismatch, "splits header must be alias,label,split");
  }
  std::vector<SplitAssignment> out;
  while (auto row = reader.next()) {
    const auto& r = *row;
    auto label = r.size() == 3 ? parse_category(r[1]) : std::nullopt;
    if (!label) throw Error(ErrorCode::MalformedRow, "splits line " + std::to_string(reader.line()));
    out.push_back({std::stoull(r[0]), *label, parse_split(r[2])});
  }
  return out;
}

// ---- neighborhood files ----------------------------------------------------

std::string neighborhood_json(const SampledNeighborhood& n, std::size_t copy, const SamplerConfig& cfg,
                              const FeatureManifest& manifest, const std::map<Alias, FeatureVector>& features,
                              const std::map<Alias, Category>& labels) {
  nlohmann::ordered_json j;
  j["format"] = "forge-neighborhood/1";
  j["seed"] = n.seed;
  j["copy"] = copy;
  j["config_hash"] = cfg.hash();
  j["feature_manifest"] = manifest.version;
  auto& nodes = j["nodes"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < n.nodes.size(); ++i) {
    Alias a = n.nodes[i];
    auto f = features.find(a);
    if (f == features.end() || f->second.size() != manifest.size()) {
      throw Error(ErrorCode::InconsistentInputs, "no feature row for alias " + std::to_string(a));
    }
    nlohmann::ordered_json row;
    row["alias"] = a;
    row["depth"] = n.depth[i];
    auto l = labels.find(a);
    row["label"] = l == labels.end() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(category_name(l->second));
    row["features"] = f->second;
    nodes.push_back(std::move(row));
  }
  auto& edges = j["edges"] = nlohmann::ordered_json::array();
  for (auto [p, c] : n.edges) edges.push_back({p, c});
  return j.dump() + "\n";
}

BufferWriteResult write_buffers(const BufferWriteRequest& req, const GraphStore& store) {
  const auto& cfg = *req.config;
  std::vector<Alias> seeds;
  for (const auto& s : req.splits) seeds.push_back(s.alias);
  auto buffer = build_buffer(seeds, req.copies, cfg, store);

  nlohmann::ordered_json manifest;
  manifest["format"] = "forge-buffer/1";
  manifest["config_hash"] = cfg.hash();
  manifest["sampler"] = cfg.canonical_text();
  manifest["copies"] = req.copies;
  manifest["feature_manifest"] = req.manifest->version;
  auto& names = manifest["features"] = nlohmann::ordered_json::array();
  for (const auto& f : req.manifest->features) names.push_back(f.name);
  auto& splits = manifest["splits"] = nlohmann::ordered_json::object();
  for (auto s : {Split::train, Split::validation, Split::test}) splits[std::string(split_name(s))] = nlohmann::ordered_json::array();

  BufferWriteResult result;
  for (std::size_t i = 0; i < req.splits.size(); ++i) {
    const auto& sa = req.splits[i];
    const std::string split(split_name(sa.split));
    nlohmann::ordered_json entry;
    entry["seed"] = sa.alias;
    entry["label"] = category_name(sa.label);
    auto& files = entry["files"] = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < req.copies; ++c) {
      auto rel = std::filesystem::path(split) / fmt::format("{}_{:02d}.json", sa.alias, c);
      write_file_atomic(req.dir / rel,
                        neighborhood_json(buffer[i][c], c, cfg, *req.manifest, *req.features, *req.labels));
      files.push_back(rel.generic_string());
      ++result.files;
    }
    splits[split].push_back(std::move(entry));
    ++result.seeds;
  }
  write_file_atomic(req.dir / "manifest.json", manifest.dump(2) + "\n");
  return result;
}

}  // namespace forge
