#include "forge/chain.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <future>
#include <optional>
#include <unordered_map>

#include "forge/error.hpp"
#include "forge/hash.hpp"
#include "forge/io.hpp"
#include "forge/mapped_file.hpp"

namespace forge {

namespace {

class ByteReader {
 public:
  ByteReader(ByteView bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {
    if (pos > bytes.size()) throw Error(ErrorCode::TruncatedInput, "offset past end of buffer");
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  ByteView take(std::size_t n) {
    if (remaining() < n) {
      throw Error(ErrorCode::TruncatedInput, "need " + std::to_string(n) + " bytes at offset " +
                                                 std::to_string(pos_) + ", have " + std::to_string(remaining()));
    }
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint8_t u8() { return take(1)[0]; }
  std::uint8_t peek() const {
    if (remaining() == 0) throw Error(ErrorCode::TruncatedInput, "unexpected end of input");
    return bytes_[pos_];
  }

  std::uint32_t u32() {
    auto b = take(4);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
  }

  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  Hash256 hash() {
    Hash256 h;
    auto b = take(32);
    std::copy(b.begin(), b.end(), h.begin());
    return h;
  }

  // Compact size that must be in canonical (shortest) form.
  std::uint64_t count() {
    auto cs = decode_compact_size(bytes_.subspan(pos_));
    if (cs.consumed != compact_size_length(cs.value)) {
      throw Error(ErrorCode::MalformedTransaction, "non-canonical compact size at offset " + std::to_string(pos_));
    }
    pos_ += cs.consumed;
    return cs.value;
  }

  Bytes var_bytes() {
    auto n = count();
    if (n > remaining()) throw Error(ErrorCode::TruncatedInput, "length prefix exceeds input");
    auto v = take(static_cast<std::size_t>(n));
    return Bytes(v.begin(), v.end());
  }

 private:
  ByteView bytes_;
  std::size_t pos_;
};

void put_var_bytes(Bytes& out, ByteView v) {
  encode_compact_size(out, v.size());
  put_bytes(out, v);
}

void put_hash(Bytes& out, const Hash256& h) { out.insert(out.end(), h.begin(), h.end()); }

}  // namespace

// ---- compact size ------------------------------------------------------

CompactSize decode_compact_size(ByteView bytes) {
  if (bytes.empty()) throw Error(ErrorCode::TruncatedInput, "empty compact size");
  auto tag = bytes[0];
  std::size_t width = tag < 0xfd ? 0 : tag == 0xfd ? 2 : tag == 0xfe ? 4 : 8;
  if (width == 0) return {tag, 1};
  if (bytes.size() < 1 + width) throw Error(ErrorCode::TruncatedInput, "truncated compact size");
  std::uint64_t v = 0;
  for (std::size_t i = width; i >= 1; --i) v = (v << 8) | bytes[i];
  return {v, 1 + width};
}

std::size_t compact_size_length(std::uint64_t value) {
  if (value < 0xfd) return 1;
  if (value <= 0xffff) return 3;
  if (value <= 0xffffffffULL) return 5;
  return 9;
}

void encode_compact_size(Bytes& out, std::uint64_t value) {
  switch (compact_size_length(value)) {
    case 1: out.push_back(static_cast<std::uint8_t>(value)); return;
    case 3:
      out.push_back(0xfd);
      out.push_back(static_cast<std::uint8_t>(value));
      out.push_back(static_cast<std::uint8_t>(value >> 8));
      return;
    case 5: out.push_back(0xfe); put_u32(out, static_cast<std::uint32_t>(value)); return;
    default: out.push_back(0xff); put_u64(out, value); return;
  }
}

std::size_t OutPointHash::operator()(const OutPoint& o) const noexcept {
  std::uint64_t h;
  std::memcpy(&h, o.txid.data(), sizeof h);
  return static_cast<std::size_t>(h ^ (std::uint64_t(o.vout) * 0x9E3779B97F4A7C15ULL));
}

// ---- transactions ------------------------------------------------------

bool RawTransaction::is_coinbase() const {
  return inputs.size() == 1 && inputs[0].prevout.vout == kCoinbaseVout &&
         std::all_of(inputs[0].prevout.txid.begin(), inputs[0].prevout.txid.end(), [](auto b) { return b == 0; });
}

ParsedTransaction parse_transaction(ByteView bytes, std::size_t offset) {
  ByteReader r(bytes, offset);
  RawTransaction tx;
  tx.version = static_cast<std::int32_t>(r.u32());

  auto n_in = r.count();
  if (n_in == 0) {
    // Either the segwit marker or an invalid zero-input transaction.
    auto flag = r.u8();
    if (flag != 0x01) throw Error(ErrorCode::MalformedTransaction, "zero inputs or bad segwit flag");
    tx.has_witness = true;
    n_in = r.count();
    if (n_in == 0) throw Error(ErrorCode::MalformedTransaction, "witness transaction without inputs");
  }
  if (n_in > r.remaining() / 41) throw Error(ErrorCode::TruncatedInput, "input count exceeds data");
  tx.inputs.resize(static_cast<std::size_t>(n_in));
  for (auto& in : tx.inputs) {
    in.prevout.txid = r.hash();
    in.prevout.vout = r.u32();
    in.unlock_script = r.var_bytes();
    in.sequence = r.u32();
  }

  auto n_out = r.count();
  if (n_out > r.remaining() / 9) throw Error(ErrorCode::TruncatedInput, "output count exceeds data");
  tx.outputs.resize(static_cast<std::size_t>(n_out));
  for (auto& out : tx.outputs) {
    out.value = r.u64();
    if (out.value > kMaxMoney) throw Error(ErrorCode::MalformedTransaction, "output value above money supply");
    out.lock_script = r.var_bytes();
  }

  if (tx.has_witness) {
    for (auto& in : tx.inputs) {
      auto items = r.count();
      if (items > r.remaining()) throw Error(ErrorCode::TruncatedInput, "witness item count exceeds data");
      in.witness.resize(static_cast<std::size_t>(items));
      for (auto& item : in.witness) item = r.var_bytes();
    }
  }
  tx.locktime = r.u32();
  tx.txid = compute_txid(tx);
  return {std::move(tx), r.pos() - offset};
}

Bytes serialize_transaction(const RawTransaction& tx, bool include_witness) {
  bool witness = include_witness && tx.has_witness;
  Bytes out;
  put_u32(out, static_cast<std::uint32_t>(tx.version));
  if (witness) {
    out.push_back(0x00);
    out.push_back(0x01);
  }
  encode_compact_size(out, tx.inputs.size());
  for (const auto& in : tx.inputs) {
    put_hash(out, in.prevout.txid);
    put_u32(out, in.prevout.vout);
    put_var_bytes(out, in.unlock_script);
    put_u32(out, in.sequence);
  }
  encode_compact_size(out, tx.outputs.size());
  for (const auto& o : tx.outputs) {
    put_u64(out, o.value);
    put_var_bytes(out, o.lock_script);
  }
  if (witness) {
    for (const auto& in : tx.inputs) {
      encode_compact_size(out, in.witness.size());
      for (const auto& item : in.witness) put_var_bytes(out, item);
    }
  }
  put_u32(out, tx.locktime);
  return out;
}

Hash256 compute_txid(const RawTransaction& tx) { return double_sha256(serialize_transaction(tx, false)); }

// ---- blocks ------------------------------------------------------------

Hash256 BlockHeader::hash() const { return double_sha256(serialize_block_header(*this)); }

BlockHeader parse_block_header(ByteView bytes) {
  ByteReader r(bytes, 0);
  BlockHeader h;
  h.version = static_cast<std::int32_t>(r.u32());
  h.prev_hash = r.hash();
  h.merkle_root = r.hash();
  h.timestamp = r.u32();
  h.bits = r.u32();
  h.nonce = r.u32();
  return h;
}

Bytes serialize_block_header(const BlockHeader& h) {
  Bytes out;
  out.reserve(BlockHeader::kSize);
  put_u32(out, static_cast<std::uint32_t>(h.version));
  put_hash(out, h.prev_hash);
  put_hash(out, h.merkle_root);
  put_u32(out, h.timestamp);
  put_u32(out, h.bits);
  put_u32(out, h.nonce);
  return out;
}

Block parse_block(ByteView payload) {
  Block block;
  block.header = parse_block_header(payload);
  ByteReader r(payload, BlockHeader::kSize);
  auto n_tx = r.count();
  if (n_tx > r.remaining() / 10) throw Error(ErrorCode::TruncatedInput, "transaction count exceeds block");
  block.transactions.reserve(static_cast<std::size_t>(n_tx));
  std::size_t pos = r.pos();
  for (std::uint64_t i = 0; i < n_tx; ++i) {
    auto parsed = parse_transaction(payload, pos);
    pos += parsed.consumed;
    if (i > 0 && parsed.tx.is_coinbase()) {
      throw Error(ErrorCode::MalformedTransaction, "coinbase transaction after block position 0");
    }
    block.transactions.push_back(std::move(parsed.tx));
  }
  if (pos != payload.size()) {
    throw Error(ErrorCode::CorruptBlockFile, std::to_string(payload.size() - pos) + " trailing bytes in block");
  }
  return block;
}

Bytes serialize_block(const Block& block) {
  Bytes out = serialize_block_header(block.header);
  encode_compact_size(out, block.transactions.size());
  for (const auto& tx : block.transactions) put_bytes(out, serialize_transaction(tx));
  return out;
}

Hash256 merkle_root(std::span<const RawTransaction> txs) {
  if (txs.empty()) return Hash256{};
  std::vector<Hash256> level;
  level.reserve(txs.size());
  for (const auto& tx : txs) level.push_back(tx.txid);
  while (level.size() > 1) {
    if (level.size() % 2) level.push_back(level.back());
    std::vector<Hash256> next;
    next.reserve(level.size() / 2);
    for (std::size_t i = 0; i < level.size(); i += 2) {
      Bytes pair(level[i].begin(), level[i].end());
      pair.insert(pair.end(), level[i + 1].begin(), level[i + 1].end());
      next.push_back(double_sha256(pair));
    }
    level = std::move(next);
  }
  return level[0];
}

// ---- block files -------------------------------------------------------

std::vector<BlockRecord> scan_block_file(ByteView bytes, const NetworkMagic& magic) {
  std::vector<BlockRecord> records;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    auto rest = bytes.subspan(pos);
    if (std::all_of(rest.begin(), rest.end(), [](auto b) { return b == 0; })) break;  // preallocated tail
    if (rest.size() < 8) throw Error(ErrorCode::TruncatedInput, "record header cut short at offset " + std::to_string(pos));
    if (!std::equal(magic.begin(), magic.end(), rest.begin())) {
      throw Error(ErrorCode::CorruptBlockFile, "bad network magic at offset " + std::to_string(pos));
    }
    std::uint32_t len = std::uint32_t(rest[4]) | std::uint32_t(rest[5]) << 8 | std::uint32_t(rest[6]) << 16 |
                        std::uint32_t(rest[7]) << 24;
    if (rest.size() - 8 < len) {
      throw Error(ErrorCode::TruncatedInput, "block payload cut short at offset " + std::to_string(pos));
    }
    if (len < BlockHeader::kSize) throw Error(ErrorCode::CorruptBlockFile, "record shorter than a block header");
    records.push_back({pos + 8, len});
    pos += 8 + len;
  }
  return records;
}

void append_block_record(Bytes& file, const NetworkMagic& magic, ByteView payload) {
  file.insert(file.end(), magic.begin(), magic.end());
  put_u32(file, static_cast<std::uint32_t>(payload.size()));
  put_bytes(file, payload);
}

std::vector<BlockLocator> index_block_file(ByteView bytes, std::size_t file_index, const NetworkMagic& magic) {
  std::vector<BlockLocator> out;
  for (const auto& rec : scan_block_file(bytes, magic)) {
    auto header_bytes = bytes.subspan(rec.payload_offset, BlockHeader::kSize);
    auto header = parse_block_header(header_bytes);
    BlockLocator loc;
    loc.file_index = file_index;
    loc.payload_offset = rec.payload_offset;
    loc.payload_length = rec.payload_length;
    loc.hash = double_sha256(header_bytes);
    loc.prev_hash = header.prev_hash;
    loc.timestamp = header.timestamp;
    out.push_back(loc);
  }
  return out;
}

namespace {

struct HashKey {
  std::size_t operator()(const Hash256& h) const noexcept {
    std::size_t v;
    std::memcpy(&v, h.data(), sizeof v);
    return v;
  }
};

}  // namespace

std::vector<BlockLocator> select_main_chain(std::span<const BlockLocator> stored, std::uint64_t height_limit,
                                            const ChainOptions& options) {
  const Hash256 zero{};
  std::unordered_map<Hash256, std::size_t, HashKey> by_hash;
  by_hash.reserve(stored.size());
  std::vector<std::size_t> unique;  // first stored copy of each block
  for (std::size_t i = 0; i < stored.size(); ++i) {
    if (by_hash.emplace(stored[i].hash, i).second) unique.push_back(i);
  }

  std::optional<std::size_t> genesis;
  for (auto i : unique) {
    if (stored[i].prev_hash == zero) {
      genesis = i;
      break;
    }
  }
  if (!genesis) throw Error(ErrorCode::MissingGenesis, "no block with an all-zero previous hash");

  std::unordered_map<Hash256, std::vector<std::size_t>, HashKey> children;
  for (auto i : unique) {
    if (i != *genesis) children[stored[i].prev_hash].push_back(i);
  }

  // Heights by BFS from genesis; children lists are in stored order, so the
  // first tip reached at the greatest height is the first stored one.
  std::vector<std::size_t> parent(stored.size(), SIZE_MAX);
  std::vector<std::size_t> frontier{*genesis};
  std::size_t tip = *genesis;
  std::uint64_t tip_height = 0;
  std::uint64_t height = 0;
  while (!frontier.empty()) {
    std::size_t best = *std::min_element(frontier.begin(), frontier.end());
    tip = best;
    tip_height = height;
    std::vector<std::size_t> next;
    for (auto i : frontier) {
      auto it = children.find(stored[i].hash);
      if (it == children.end()) continue;
      for (auto c : it->second) {
        parent[c] = i;
        next.push_back(c);
      }
    }
    frontier = std::move(next);
    ++height;
  }

  std::uint64_t length = tip_height + 1;
  if (length < height_limit && !options.allow_short_chain) {
    throw Error(ErrorCode::BrokenChain,
                "no block extends height " + std::to_string(tip_height) + " (limit " + std::to_string(height_limit) + ")");
  }

  std::vector<BlockLocator> chain(static_cast<std::size_t>(length));
  for (std::size_t i = tip, h = static_cast<std::size_t>(length); h-- > 0; i = parent[i]) chain[h] = stored[i];
  if (chain.size() > height_limit) chain.resize(static_cast<std::size_t>(height_limit));
  return chain;
}

std::vector<ChainBlock> build_main_chain(std::span<const BlockFile> files, std::uint64_t height_limit,
                                         const NetworkMagic& magic, const ChainOptions& options) {
  std::vector<BlockLocator> stored;
  for (std::size_t f = 0; f < files.size(); ++f) {
    auto idx = index_block_file(files[f].bytes, f, magic);
    stored.insert(stored.end(), idx.begin(), idx.end());
  }
  auto chain = select_main_chain(stored, height_limit, options);

  std::vector<ChainBlock> out;
  out.reserve(chain.size());
  for (std::size_t h = 0; h < chain.size(); ++h) {
    const auto& loc = chain[h];
    auto payload = ByteView(files[loc.file_index].bytes).subspan(loc.payload_offset, loc.payload_length);
    Block block = parse_block(payload);
    for (auto& tx : block.transactions) tx.block_height = h;
    out.push_back({h, std::move(block)});
  }
  return out;
}

ChainIndex ChainIndex::build(std::vector<std::filesystem::path> files, std::uint64_t height_limit,
                             const NetworkMagic& magic, const ChainOptions& options) {
  // Files are indexed in parallel; the merge below is in file order.
  std::vector<std::future<std::vector<BlockLocator>>> jobs;
  jobs.reserve(files.size());
  for (std::size_t f = 0; f < files.size(); ++f) {
    jobs.push_back(std::async(std::launch::async, [&files, f, &magic] {
      MappedFile mapped(files[f]);
      return index_block_file(mapped.bytes(), f, magic);
    }));
  }
  std::vector<BlockLocator> stored;
  for (auto& job : jobs) {
    auto idx = job.get();
    stored.insert(stored.end(), idx.begin(), idx.end());
  }
  auto chain = select_main_chain(stored, height_limit, options);
  return ChainIndex(std::move(files), std::move(chain));
}

Block ChainIndex::load(std::uint64_t height) const {
  const auto& loc = chain_.at(static_cast<std::size_t>(height));
  std::ifstream in(files_.at(loc.file_index), std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + files_[loc.file_index].string());
  in.seekg(static_cast<std::streamoff>(loc.payload_offset));
  Bytes payload(loc.payload_length);
  in.read(reinterpret_cast<char*>(payload.data()), loc.payload_length);
  if (!in) throw Error(ErrorCode::TruncatedInput, "short read of block at height " + std::to_string(height));
  Block block = parse_block(payload);
  for (auto& tx : block.transactions) tx.block_height = height;
  return block;
}

void ChainIndex::for_each(const std::function<void(std::uint64_t, const Block&)>& visit) const {
  // Keep one file mapped at a time; consecutive heights usually share a file.
  std::size_t mapped_index = SIZE_MAX;
  MappedFile mapped;
  for (std::size_t h = 0; h < chain_.size(); ++h) {
    const auto& loc = chain_[h];
    if (loc.file_index != mapped_index) {
      mapped = MappedFile(files_[loc.file_index]);
      mapped_index = loc.file_index;
    }
    Block block = parse_block(mapped.bytes().subspan(loc.payload_offset, loc.payload_length));
    for (auto& tx : block.transactions) tx.block_height = h;
    visit(h, block);
  }
}

std::vector<std::filesystem::path> list_block_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::IoFailure, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.rfind("blk", 0) == 0 && entry.path().extension() == ".dat") {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace forge
