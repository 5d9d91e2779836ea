#include "forge/synth.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "forge/csv.hpp"
#include "forge/error.hpp"
#include "forge/features.hpp"
#include "forge/hash.hpp"
#include "forge/io.hpp"
#include "forge/rng.hpp"
#include "forge/script.hpp"

namespace forge {

namespace {

constexpr std::uint64_t kSubsidy = 5'000'000'000ULL;
constexpr std::uint32_t kRegtestBits = 0x207fffff;

enum class KeyKind { p2pkh, p2wpkh, p2sh, p2wsh, p2pk, multisig, nonstandard };

struct Key {
  Bytes script;
  Bytes pubkey;
  KeyKind kind;
  bool witness() const { return kind == KeyKind::p2wpkh || kind == KeyKind::p2wsh; }
};

struct Utxo {
  OutPoint op;
  std::uint64_t value;
  std::uint32_t key;
};

struct Entity {
  std::vector<Key> keys;
  std::vector<Utxo> utxos;
};

void push_data(Bytes& s, ByteView data) {
  if (data.size() < 0x4c) {
    s.push_back(static_cast<std::uint8_t>(data.size()));
  } else {
    s.push_back(0x4c);
    s.push_back(static_cast<std::uint8_t>(data.size()));
  }
  s.insert(s.end(), data.begin(), data.end());
}

}  // namespace

struct SynthChain::Impl {
  SynthConfig cfg;
  Rng rng;
  std::vector<Entity> entities;
  SynthSummary summary;
  std::uint32_t last_time = 0;

  explicit Impl(SynthConfig c) : cfg(std::move(c)), rng(derive_seed(cfg.seed, 0x53594e5448)) {
    entities.resize(std::max<std::size_t>(cfg.entities, cfg.miners + 6));
  }

  Bytes random_bytes(std::size_t n) {
    Bytes b(n);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng.next());
    return b;
  }

  Key make_key() {
    Key k;
    k.pubkey = random_bytes(33);
    k.pubkey[0] = 0x02 | (k.pubkey[0] & 1);
    auto roll = rng.below(100);
    k.kind = roll < 50   ? KeyKind::p2pkh
             : roll < 65 ? KeyKind::p2wpkh
             : roll < 75 ? KeyKind::p2sh
             : roll < 83 ? KeyKind::p2wsh
             : roll < 90 ? KeyKind::p2pk
             : roll < 95 ? KeyKind::multisig
                         : KeyKind::nonstandard;
    switch (k.kind) {
      case KeyKind::p2pkh: k.script = make_p2pkh_script(hash160(k.pubkey)); break;
      case KeyKind::p2wpkh: {
        auto h = hash160(k.pubkey);
        k.script = make_witness_v0_script(h);
        break;
      }
      case KeyKind::p2sh: {
        Bytes redeem;
        push_data(redeem, k.pubkey);
        redeem.push_back(0xac);
        k.script = make_p2sh_script(hash160(redeem));
        break;
      }
      case KeyKind::p2wsh: {
        Bytes ws;
        push_data(ws, k.pubkey);
        ws.push_back(0xac);
        auto h = sha256(ws);
        k.script = make_witness_v0_script(h);
        break;
      }
      case KeyKind::p2pk: k.script = make_p2pk_script(k.pubkey); break;
      case KeyKind::multisig: {
        auto other = random_bytes(33);
        other[0] = 0x03;
        k.script = {0x51};
        push_data(k.script, k.pubkey);
        push_data(k.script, other);
        k.script.push_back(0x52);
        k.script.push_back(0xae);
        break;
      }
      case KeyKind::nonstandard: {
        auto nonce = random_bytes(4);
        push_data(k.script, nonce);
        k.script.push_back(0x75);  // OP_DROP
        k.script.push_back(0x51);  // OP_TRUE
        break;
      }
    }
    return k;
  }

  // A fresh key while the wallet has room and the coin says so, else a reused one.
  std::uint32_t receive_key(Entity& e, unsigned fresh_percent = 50) {
    if (e.keys.empty() || (e.keys.size() < cfg.max_scripts_per_entity && rng.below(100) < fresh_percent)) {
      e.keys.push_back(make_key());
    }
    return e.keys.size() == 1 ? 0 : static_cast<std::uint32_t>(rng.below(e.keys.size()));
  }

  std::uint32_t fresh_key(Entity& e) {
    if (e.keys.size() >= cfg.max_scripts_per_entity) return static_cast<std::uint32_t>(rng.below(e.keys.size()));
    e.keys.push_back(make_key());
    return static_cast<std::uint32_t>(e.keys.size() - 1);
  }

  std::size_t funded_entity(std::uint64_t min_value = 1) {
    for (int tries = 0; tries < 32; ++tries) {
      auto i = static_cast<std::size_t>(rng.below(entities.size()));
      for (const auto& u : entities[i].utxos) {
        if (u.value >= min_value) return i;
      }
    }
    auto start = static_cast<std::size_t>(rng.below(entities.size()));
    for (std::size_t k = 0; k < entities.size(); ++k) {
      auto i = (start + k) % entities.size();
      for (const auto& u : entities[i].utxos) {
        if (u.value >= min_value) return i;
      }
    }
    return SIZE_MAX;
  }

  Utxo take_utxo(Entity& e, std::uint64_t min_value = 1) {
    std::vector<std::size_t> ok;
    for (std::size_t i = 0; i < e.utxos.size(); ++i) {
      if (e.utxos[i].value >= min_value) ok.push_back(i);
    }
    auto pick = ok[static_cast<std::size_t>(rng.below(ok.size()))];
    Utxo u = e.utxos[pick];
    e.utxos[pick] = e.utxos.back();
    e.utxos.pop_back();
    return u;
  }

  void add_input(RawTransaction& tx, const Entity& owner, const Utxo& u) {
    TxInput in;
    in.prevout = u.op;
    const Key& k = owner.keys[u.key];
    auto sig = random_bytes(71);
    if (k.witness()) {
      in.witness = {sig, k.pubkey};
    } else {
      push_data(in.unlock_script, sig);
      push_data(in.unlock_script, k.pubkey);
    }
    in.sequence = 0xFFFFFFFF;
    tx.inputs.push_back(std::move(in));
  }

  struct Pending {
    std::size_t entity;
    std::uint32_t key;
    std::uint32_t vout;
  };

  void seal(RawTransaction& tx, const std::vector<Pending>& credits) {
    tx.has_witness = std::any_of(tx.inputs.begin(), tx.inputs.end(), [](const TxInput& in) { return !in.witness.empty(); });
    tx.txid = compute_txid(tx);
    for (const auto& c : credits) {
      entities[c.entity].utxos.push_back({OutPoint{tx.txid, c.vout}, tx.outputs[c.vout].value, c.key});
    }
  }

  void pay(RawTransaction& tx, std::vector<Pending>& credits, std::size_t entity, std::uint32_t key, std::uint64_t value) {
    credits.push_back({entity, key, static_cast<std::uint32_t>(tx.outputs.size())});
    tx.outputs.push_back({value, entities[entity].keys[key].script});
  }

  RawTransaction coinbase(std::uint64_t height, std::size_t miner) {
    RawTransaction tx;
    TxInput in;
    in.prevout.vout = kCoinbaseVout;
    Bytes h;
    put_u32(h, static_cast<std::uint32_t>(height));
    push_data(in.unlock_script, h);
    // The last miner leaves no tag.
    std::string tag = miner + 1 < cfg.miners ? fmt::format("/SynthPool{}/", miner) : "untagged";
    push_data(in.unlock_script, as_bytes(tag));
    tx.inputs.push_back(std::move(in));
    std::vector<Pending> credits;
    pay(tx, credits, miner, receive_key(entities[miner], 20), kSubsidy);
    seal(tx, credits);
    return tx;
  }

  std::size_t other_entity(std::size_t not_this) {
    std::size_t r;
    do {
      r = static_cast<std::size_t>(rng.below(entities.size()));
    } while (r == not_this);
    return r;
  }

  std::optional<RawTransaction> payment(std::uint32_t first_sequence = 0xFFFFFFFF) {
    auto s = funded_entity();
    if (s == SIZE_MAX) return std::nullopt;
    auto& sender = entities[s];
    RawTransaction tx;
    std::size_t want = rng.below(10) < 4 ? 2 + static_cast<std::size_t>(rng.below(3)) : 1;
    std::uint64_t total = 0;
    std::vector<Utxo> spent;
    spent.push_back(take_utxo(sender));
    total += spent.back().value;
    while (spent.size() < want && !sender.utxos.empty()) {
      spent.push_back(take_utxo(sender, 0));
      total += spent.back().value;
    }
    for (const auto& u : spent) add_input(tx, sender, u);
    tx.inputs[0].sequence = first_sequence;

    std::vector<Pending> credits;
    std::uint64_t fee = std::min<std::uint64_t>(1000, total / 100);
    std::uint64_t left = total - fee;
    std::size_t recipients = 1 + static_cast<std::size_t>(rng.below(3));
    bool change = rng.below(10) < 7 && left > 20'000;
    for (std::size_t r = 0; r < recipients && left > 0; ++r) {
      bool last = r + 1 == recipients && !change;
      std::uint64_t v = last || left < 20'000 ? left : 1 + rng.below(left * 3 / 4);
      auto e = other_entity(s);
      pay(tx, credits, e, receive_key(entities[e]), v);
      left -= v;
    }
    if (left > 0) pay(tx, credits, s, receive_key(sender, 60), left);
    if (rng.below(100) < 3) {
      auto e = other_entity(s);
      pay(tx, credits, e, fresh_key(entities[e]), 0);
    }
    seal(tx, credits);
    return tx;
  }

  std::optional<RawTransaction> coinjoin() {
    const std::uint64_t denom = 100'000;
    std::vector<std::size_t> members;
    for (int tries = 0; tries < 200 && members.size() < 4; ++tries) {
      auto e = funded_entity(denom + 10'000);
      if (e != SIZE_MAX && std::find(members.begin(), members.end(), e) == members.end()) members.push_back(e);
    }
    if (members.size() < 4) return std::nullopt;
    RawTransaction tx;
    std::vector<Pending> credits;
    std::vector<std::uint64_t> change;
    for (auto m : members) {
      auto u = take_utxo(entities[m], denom + 10'000);
      add_input(tx, entities[m], u);
      change.push_back(u.value - denom - 500);
    }
    for (auto m : members) pay(tx, credits, m, fresh_key(entities[m]), denom);
    for (std::size_t i = 0; i < members.size(); ++i) pay(tx, credits, members[i], fresh_key(entities[members[i]]), change[i]);
    seal(tx, credits);
    return tx;
  }

  Block make_block(const Hash256& prev, std::uint32_t time, std::vector<RawTransaction> txs) {
    Block b;
    b.header.version = 0x20000000;
    b.header.prev_hash = prev;
    b.header.timestamp = time;
    b.header.bits = kRegtestBits;
    b.header.nonce = static_cast<std::uint32_t>(rng.next());
    b.transactions = std::move(txs);
    b.header.merkle_root = merkle_root(b.transactions);
    return b;
  }

  void generate(const std::function<void(const Block&, bool)>& sink) {
    const std::size_t miners = std::max<std::size_t>(1, cfg.miners);
    const std::size_t spend_blocks = cfg.blocks > 1 ? cfg.blocks - 1 : 1;
    const std::size_t cj_height = cfg.blocks / 3;
    const std::size_t orphan_after = cfg.blocks / 2;
    Hash256 prev{};
    std::optional<Block> orphan;
    std::size_t emitted_tx = 0;
    for (std::size_t h = 0; h < cfg.blocks; ++h) {
      std::uint32_t time = cfg.start_time + static_cast<std::uint32_t>(h) * cfg.block_interval;
      std::vector<RawTransaction> txs;
      txs.push_back(coinbase(h, h % miners));
      if (h > 0) {
        std::size_t quota = cfg.transactions / spend_blocks + ((h - 1) < cfg.transactions % spend_blocks ? 1 : 0);
        if (cfg.plant_specials && h == cj_height) {
          if (auto cj = coinjoin()) {
            summary.coinjoin_txids.push_back(cj->txid);
            txs.push_back(std::move(*cj));
            if (quota) --quota;
          }
        }
        if (cfg.plant_specials && (h == cj_height + 1 || h == cj_height + 2 || h == cj_height + 3)) {
          std::optional<RawTransaction> tx;
          if (h == cj_height + 1) tx = colored_tx(Bytes{0x6f, 0x6d, 0x6e, 0x69});
          if (h == cj_height + 2) tx = colored_tx(Bytes{0x4f, 0x41, 0x01, 0x00});
          if (h == cj_height + 3) tx = payment(0xFFFFFFC0u | 0x25u);
          if (tx) {
            summary.colored_txids.push_back(tx->txid);
            txs.push_back(std::move(*tx));
            if (quota) --quota;
          }
        }
        for (std::size_t i = 0; i < quota; ++i) {
          if (auto tx = payment()) txs.push_back(std::move(*tx));
        }
      }
      emitted_tx += txs.size();
      auto block = make_block(prev, time, std::move(txs));
      auto hash = block.header.hash();
      if (cfg.plant_specials && h == orphan_after && h > 0) {
        // Stale sibling of this block, stored after its successor.
        RawTransaction cb;
        TxInput in;
        in.prevout.vout = kCoinbaseVout;
        Bytes hb;
        put_u32(hb, static_cast<std::uint32_t>(h));
        push_data(in.unlock_script, hb);
        push_data(in.unlock_script, as_bytes(std::string("stale")));
        cb.inputs.push_back(std::move(in));
        cb.outputs.push_back({kSubsidy, make_key().script});
        cb.txid = compute_txid(cb);
        orphan = make_block(prev, time + 1, {cb});
        summary.orphan_height = h;
      }
      sink(block, false);
      ++summary.main_blocks;
      if (orphan && h == orphan_after + 1) {
        sink(*orphan, true);
        ++summary.orphan_blocks;
        orphan.reset();
      }
      prev = hash;
      last_time = time;
    }
    if (orphan) {
      sink(*orphan, true);
      ++summary.orphan_blocks;
    }
    summary.transactions = emitted_tx;
  }

  std::optional<RawTransaction> colored_tx(const Bytes& marker) {
    auto s = funded_entity();
    if (s == SIZE_MAX) return std::nullopt;
    // Build as a payment but with the marker output appended before sealing.
    auto& sender = entities[s];
    RawTransaction tx;
    auto u = take_utxo(sender);
    add_input(tx, sender, u);
    std::vector<Pending> credits;
    std::uint64_t left = u.value - std::min<std::uint64_t>(1000, u.value / 100);
    auto e = other_entity(s);
    std::uint64_t v = left > 2 ? left / 2 : left;
    pay(tx, credits, e, receive_key(entities[e]), v);
    if (left - v > 0) pay(tx, credits, s, receive_key(sender), left - v);
    Bytes payload = marker;
    auto extra = random_bytes(12);
    payload.insert(payload.end(), extra.begin(), extra.end());
    tx.outputs.push_back({0, make_op_return_script(payload)});
    seal(tx, credits);
    return tx;
  }

  SynthLabels labels() const {
    static constexpr Category kClasses[] = {Category::exchange,   Category::gambling, Category::ponzi,
                                            Category::individual, Category::ransomware, Category::bet};
    SynthLabels out;
    const std::size_t miners = std::max<std::size_t>(1, cfg.miners);
    for (std::size_t m = 0; m + 1 < miners; ++m) out.patterns.push_back({fmt::format("/SynthPool{}/", m), fmt::format("SynthPool{}", m)});

    Rng pick(derive_seed(cfg.seed, 0x4c4142454c));
    std::vector<std::size_t> candidates;
    for (std::size_t i = miners; i < entities.size(); ++i) {
      if (!entities[i].keys.empty()) candidates.push_back(i);
    }
    pick.shuffle(std::span<std::size_t>(candidates));
    auto address = [&](const Key& k) { return script_to_address(k.script, AddressNetwork::regtest); };
    std::size_t labeled = 0;
    std::size_t ci = 0;
    for (; ci < candidates.size() && labeled < cfg.labeled_entities; ++ci) {
      const auto& e = entities[candidates[ci]];
      Category c = kClasses[pick.below(std::size(kClasses))];
      std::size_t written = 0;
      for (const auto& k : e.keys) {
        auto a = address(k);
        if (!a) continue;
        out.records.push_back({*a, c, "synthetic", fmt::format("entity{}", candidates[ci])});
        if (++written == 2) break;
      }
      if (written) ++labeled;
    }
    if (cfg.plant_specials) {
      // One cluster claimed by an exchange and a mixer at once.
      for (; ci < candidates.size(); ++ci) {
        const auto& e = entities[candidates[ci]];
        std::vector<std::string> addrs;
        for (const auto& k : e.keys) {
          if (auto a = address(k)) addrs.push_back(*a);
        }
        if (addrs.size() < 2) continue;
        out.records.push_back({addrs[0], Category::exchange, "synthetic", std::nullopt});
        out.records.push_back({addrs[1], Category::mixer, "synthetic", std::nullopt});
        ++ci;
        break;
      }
      out.bad_rows.push_back("not-an-address,exchange,synthetic,");
      if (!out.records.empty()) out.bad_rows.push_back(out.records.front().address + ",pirate,synthetic,");
    }
    return out;
  }
};

SynthChain::SynthChain(SynthConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}
SynthChain::~SynthChain() = default;

void SynthChain::generate(const std::function<void(const Block&, bool)>& sink) { impl_->generate(sink); }
const SynthSummary& SynthChain::summary() const { return impl_->summary; }
SynthLabels SynthChain::labels() const { return impl_->labels(); }

std::string SynthChain::rates_csv() const {
  const auto& c = impl_->cfg;
  Day first = day_from_timestamp(c.start_time);
  Day last = day_from_timestamp(c.start_time + static_cast<std::int64_t>(c.blocks) * c.block_interval) + 1;
  std::string out = "date,usd_per_btc\n";
  for (Day d = first; d <= last; ++d) {
    out += fmt::format("{},{}\n", format_date(d), 15000 + (static_cast<std::uint64_t>(d) * 7919) % 10000);
  }
  return out;
}

SynthSummary write_synthetic_dataset(const SynthConfig& cfg, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "blocks");
  for (const auto& e : fs::directory_iterator(dir / "blocks")) fs::remove(e.path());

  SynthChain chain(cfg);
  Bytes file;
  std::size_t index = 0;
  std::vector<fs::path> written;
  auto flush = [&] {
    if (file.empty()) return;
    auto path = dir / "blocks" / fmt::format("blk{:05d}.dat", index++);
    write_file_atomic(path, {reinterpret_cast<const char*>(file.data()), file.size()});
    written.push_back(path);
    file.clear();
  };
  chain.generate([&](const Block& b, bool) {
    append_block_record(file, kRegtestMagic, serialize_block(b));
    if (file.size() >= cfg.max_file_bytes) flush();
  });
  flush();

  auto labels = chain.labels();
  std::ostringstream lab;
  write_labels(lab, labels.records);
  for (const auto& row : labels.bad_rows) lab << row << '\n';
  write_file_atomic(dir / "labels.csv", lab.str());
  std::ostringstream pat;
  for (const auto& p : labels.patterns) csv::write_row(pat, {p.substring, p.entity});
  write_file_atomic(dir / "coinbase_patterns.txt", pat.str());
  write_file_atomic(dir / "rates.csv", chain.rates_csv());
  write_file_atomic(dir / "forge.ini", fmt::format(R"([chain]
blocks_dir = blocks
network = regtest
height_limit = {}

[labels]
labels_file = labels.csv
coinbase_patterns = coinbase_patterns.txt

[features]
rates_file = rates.csv
split_seed = 7

[sampler]
fanouts = 10,5
rng_seed = 11
copies = 12

[output]
dir = out
)",
                                                    chain.summary().main_blocks));
  auto summary = chain.summary();
  summary.block_files = written;
  return summary;
}

}  // namespace forge
