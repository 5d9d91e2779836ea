#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "forge/category.hpp"
#include "forge/chain.hpp"
#include "forge/labels.hpp"

namespace forge {

// Deterministic synthetic chain: entity wallets spending several of their
// own outputs at once (planted clusters), plus a CoinJoin, colored-coin
// transactions, tagged coinbases, zero-value outputs, witness spends and one
// orphan block.
struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t blocks = 200;
  std::size_t transactions = 1000;  // non-coinbase, spread evenly over blocks 1..
  std::size_t entities = 120;
  std::size_t max_scripts_per_entity = 5;
  std::size_t labeled_entities = 60;
  std::size_t miners = 4;
  std::uint32_t start_time = 1'600'000'000;
  std::uint32_t block_interval = 6 * 3600;
  bool plant_specials = true;  // coinjoin, colored txs, orphan, label conflict
  std::size_t max_file_bytes = 1 << 20;
};

struct SynthSummary {
  std::size_t main_blocks = 0;
  std::size_t orphan_blocks = 0;
  std::size_t transactions = 0;  // including coinbases
  std::vector<Hash256> coinjoin_txids;
  std::vector<Hash256> colored_txids;
  std::optional<std::uint64_t> orphan_height;
  std::vector<std::filesystem::path> block_files;
};

struct SynthLabels {
  std::vector<LabelRecord> records;
  std::vector<std::string> bad_rows;  // raw CSV rows that must be rejected
  std::vector<CoinbasePattern> patterns;
};

class SynthChain {
 public:
  explicit SynthChain(SynthConfig cfg);
  ~SynthChain();

  // Emits blocks in file order; orphan = true for the planted stale block.
  void generate(const std::function<void(const Block&, bool orphan)>& sink);
  const SynthSummary& summary() const;
  SynthLabels labels() const;
  // date,usd_per_btc covering every block day.
  std::string rates_csv() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Writes blocks/blkNNNNN.dat, labels.csv, coinbase_patterns.txt, rates.csv
// and forge.ini (regtest, height limit = all main blocks) into dir.
SynthSummary write_synthetic_dataset(const SynthConfig& cfg, const std::filesystem::path& dir);

}  // namespace forge
