#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "forge/chain.hpp"
#include "forge/error.hpp"
#include "forge/filters.hpp"
#include "forge/sampler.hpp"
#include "forge/script.hpp"

namespace forge {

struct ConfigOverrides {
  std::optional<std::uint64_t> height_limit;
  std::optional<std::filesystem::path> out_dir;
};

// INI file with sections [chain] [filters] [labels] [features] [sampler]
// [output]. Relative paths resolve against the config file's directory.
struct PipelineConfig {
  std::filesystem::path blocks_dir;
  std::string network = "mainnet";
  std::optional<std::uint64_t> height_limit;
  bool allow_short_chain = false;

  FilterConfig filters;

  std::optional<std::filesystem::path> labels_file;
  std::optional<std::filesystem::path> coinbase_patterns;

  std::filesystem::path rates_file;
  std::uint64_t split_seed = 0;

  SamplerConfig sampler;
  std::size_t copies = 12;

  std::filesystem::path out_dir = "out";

  static PipelineConfig load(const std::filesystem::path& path, const ConfigOverrides& overrides = {});
  // Throws ConfigInvalid listing the first problem found.
  void validate() const;

  NetworkMagic magic() const;
  AddressNetwork address_network() const;
};

enum class Stage : std::uint8_t { parse, filter, cluster, edges, attributes, label, features, sample, export_ };

inline constexpr std::array<Stage, 9> kAllStages{Stage::parse,      Stage::filter, Stage::cluster,
                                                 Stage::edges,      Stage::attributes, Stage::label,
                                                 Stage::features,   Stage::sample, Stage::export_};

std::string_view stage_name(Stage s);
std::optional<Stage> parse_stage(std::string_view name);
std::vector<Stage> stage_dependencies(Stage s);

struct StageManifest {
  std::string stage;
  std::string status;  // complete | failed
  bool skipped = false;
  std::string config_hash;
  std::map<std::string, std::string> inputs;   // name -> hex SHA-256
  std::map<std::string, std::string> outputs;  // path relative to out dir -> hex SHA-256
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  std::optional<std::string> error_code;
  std::optional<std::string> error_message;

  nlohmann::ordered_json to_json() const;
  static StageManifest from_json(const nlohmann::json& j);
};

// Process exit status for an error class; 0 is success, 1 unexpected failure.
int exit_code_for(ErrorCode code);

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg);

  // Runs one stage, or skips it when its manifest is complete and the config
  // hash, input digests and output digests all still match. Writes a failed
  // manifest and rethrows on error.
  StageManifest run(Stage stage);
  // Stages in dependency order; stops at the first failure.
  std::vector<StageManifest> run_all();

  const PipelineConfig& config() const { return cfg_; }
  std::filesystem::path manifest_path(Stage s) const;
  std::optional<StageManifest> load_manifest(Stage s) const;

 private:
  PipelineConfig cfg_;
};

// Hex SHA-256 over (relative path, file digest) of every regular file below dir.
std::string directory_digest(const std::filesystem::path& dir);

}  // namespace forge
