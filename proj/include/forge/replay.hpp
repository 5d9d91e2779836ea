#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "forge/chain.hpp"
#include "forge/script.hpp"

namespace forge {

// The TXO an input spends.
struct SpentOutput {
  std::uint64_t value = 0;
  ScriptId script{};
};

// Replays transactions in chain order against a UTXO set. OP_RETURN outputs
// are unspendable and never enter the set. Throws UnresolvedInput when an
// input spends an unknown or already spent output.
class UtxoReplay {
 public:
  struct TxView {
    const RawTransaction& tx;
    std::span<const SpentOutput> inputs;  // empty for coinbase
    std::span<const ScriptId> output_scripts;
  };
  using Visitor = std::function<void(const TxView&)>;

  void apply(const Block& block, std::uint64_t height, const Visitor& visit);
  void run(const ChainIndex& chain, const Visitor& visit);
  void run(std::span<const ChainBlock> chain, const Visitor& visit);

  std::size_t utxo_count() const { return utxo_.size(); }
  std::uint64_t transactions() const { return transactions_; }

 private:
  struct Txo {
    std::uint64_t value;
    std::uint32_t script;
  };
  std::uint32_t intern(const ScriptId& id);

  std::unordered_map<OutPoint, Txo, OutPointHash> utxo_;
  std::unordered_map<ScriptId, std::uint32_t, ScriptIdHash> script_index_;
  std::vector<ScriptId> scripts_;
  std::uint64_t transactions_ = 0;
};

}  // namespace forge
