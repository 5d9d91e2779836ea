#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "forge/category.hpp"
#include "forge/features.hpp"
#include "forge/store.hpp"

namespace forge {

struct SamplerConfig {
  std::vector<std::size_t> fanouts{10, 5};  // n_1..n_kmax; k_max = fanouts.size()
  std::size_t high_degree_threshold = 100'000;
  std::size_t edge_sample_cap = 100'000;
  std::uint64_t rng_seed = 0;

  std::size_t depth() const { return fanouts.size(); }
  void validate() const;  // ConfigInvalid
  std::string canonical_text() const;
  std::string hash() const;  // hex SHA-256 of canonical_text()
};

// Undirected neighbor set, sorted. Above the degree threshold the set comes
// from a uniform sample of at most edge_sample_cap incident edges.
std::vector<Alias> neighbors(Alias alias, const SamplerConfig& cfg, const GraphStore& store, Rng& rng);

struct SampledNeighborhood {
  Alias seed = 0;
  std::vector<Alias> nodes;  // discovery order, seed first
  std::vector<std::uint32_t> depth;  // parallel to nodes
  std::vector<std::pair<Alias, Alias>> edges;  // (parent, child), discovery order

  friend bool operator==(const SampledNeighborhood&, const SampledNeighborhood&) = default;
};

SampledNeighborhood sample_neighborhood(Alias seed, const SamplerConfig& cfg, const GraphStore& store, Rng& rng);

// copies independent neighborhoods per seed, copy c of seed s drawn from
// derive_seed(cfg.rng_seed, s, c). Result is [seed index][copy].
std::vector<std::vector<SampledNeighborhood>> build_buffer(std::span<const Alias> seeds, std::size_t copies,
                                                           const SamplerConfig& cfg, const GraphStore& store);

enum class Split : std::uint8_t { train, validation, test };
std::string_view split_name(Split s);

struct SplitAssignment {
  Alias alias;
  Category label;
  Split split;
};

// Per class: shuffle with the seed, then the first round(0.4 n) go to train,
// the next round(0.7 n) - round(0.4 n) to validation, the rest to test.
// A class with a single member goes to train.
std::vector<SplitAssignment> make_splits(std::vector<std::pair<Alias, Category>> labeled, std::uint64_t seed);
void write_splits_csv(std::ostream& out, std::span<const SplitAssignment> splits);
std::vector<SplitAssignment> read_splits_csv(std::istream& in);

// Writes one JSON file per (seed, copy) below dir/<split>/ and a manifest.json
// listing them. Node rows carry their normalized features and labels inline.
struct BufferWriteRequest {
  std::filesystem::path dir;
  const SamplerConfig* config = nullptr;
  std::size_t copies = 12;
  const FeatureManifest* manifest = nullptr;
  const std::map<Alias, FeatureVector>* features = nullptr;  // normalized
  const std::map<Alias, Category>* labels = nullptr;
  std::span<const SplitAssignment> splits;
};

struct BufferWriteResult {
  std::size_t files = 0;
  std::size_t seeds = 0;
};

BufferWriteResult write_buffers(const BufferWriteRequest& req, const GraphStore& store);

std::string neighborhood_json(const SampledNeighborhood& n, std::size_t copy, const SamplerConfig& cfg,
                              const FeatureManifest& manifest, const std::map<Alias, FeatureVector>& features,
                              const std::map<Alias, Category>& labels);

}  // namespace forge
