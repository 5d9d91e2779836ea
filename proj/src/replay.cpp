#include "forge/replay.hpp"

#include "forge/error.hpp"

namespace forge {

std::uint32_t UtxoReplay::intern(const ScriptId& id) {
  auto [it, fresh] = script_index_.try_emplace(id, static_cast<std::uint32_t>(scripts_.size()));
  if (fresh) scripts_.push_back(id);
  return it->second;
}

void UtxoReplay::apply(const Block& block, std::uint64_t height, const Visitor& visit) {
  std::vector<SpentOutput> inputs;
  std::vector<ScriptId> outputs;
  for (const auto& tx : block.transactions) {
    inputs.clear();
    outputs.clear();
    if (!tx.is_coinbase()) {
      for (const auto& in : tx.inputs) {
        auto it = utxo_.find(in.prevout);
        if (it == utxo_.end()) {
          throw Error(ErrorCode::UnresolvedInput, "block " + std::to_string(height) + " tx " +
                                                      to_hex_reversed(tx.txid) + " spends unknown output " +
                                                      to_hex_reversed(in.prevout.txid) + ":" +
                                                      std::to_string(in.prevout.vout));
        }
        inputs.push_back({it->second.value, scripts_[it->second.script]});
        utxo_.erase(it);
      }
    }
    for (std::uint32_t i = 0; i < tx.outputs.size(); ++i) {
      const auto& out = tx.outputs[i];
      auto desc = script_id_of(out.lock_script);
      outputs.push_back(desc);
      if (desc[0] == static_cast<std::uint8_t>(ScriptKind::op_return)) continue;
      utxo_[OutPoint{tx.txid, i}] = Txo{out.value, intern(desc)};
    }
    ++transactions_;
    visit(TxView{tx, inputs, outputs});
  }
}

void UtxoReplay::run(const ChainIndex& chain, const Visitor& visit) {
  chain.for_each([&](std::uint64_t h, const Block& b) { apply(b, h, visit); });
}

void UtxoReplay::run(std::span<const ChainBlock> chain, const Visitor& visit) {
  for (const auto& cb : chain) apply(cb.block, cb.height, visit);
}

}  // namespace forge
