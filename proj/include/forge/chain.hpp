#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "forge/bytes.hpp"

namespace forge {

inline constexpr std::uint64_t kMaxMoney = 2'100'000'000'000'000ULL;  // 21e6 BTC in satoshis
inline constexpr std::uint32_t kCoinbaseVout = 0xFFFFFFFF;

using NetworkMagic = std::array<std::uint8_t, 4>;
inline constexpr NetworkMagic kMainnetMagic{0xf9, 0xbe, 0xb4, 0xd9};
inline constexpr NetworkMagic kTestnetMagic{0x0b, 0x11, 0x09, 0x07};
inline constexpr NetworkMagic kRegtestMagic{0xfa, 0xbf, 0xb5, 0xda};

struct CompactSize {
  std::uint64_t value;
  std::size_t consumed;
};

// Bitcoin's variable-length integer. Throws TruncatedInput.
CompactSize decode_compact_size(ByteView bytes);
void encode_compact_size(Bytes& out, std::uint64_t value);
std::size_t compact_size_length(std::uint64_t value);

struct OutPoint {
  Hash256 txid{};
  std::uint32_t vout = 0;

  friend bool operator==(const OutPoint&, const OutPoint&) = default;
};

struct OutPointHash {
  std::size_t operator()(const OutPoint& o) const noexcept;
};

struct TxInput {
  OutPoint prevout;
  Bytes unlock_script;
  std::uint32_t sequence = 0xFFFFFFFF;
  std::vector<Bytes> witness;
};

struct TxOutput {
  std::uint64_t value = 0;
  Bytes lock_script;
};

struct RawTransaction {
  std::int32_t version = 1;
  std::vector<TxInput> inputs;
  std::vector<TxOutput> outputs;
  std::uint32_t locktime = 0;
  // Serialized with the segwit marker/flag; preserved for exact re-serialization.
  bool has_witness = false;
  Hash256 txid{};
  std::uint64_t block_height = 0;

  bool is_coinbase() const;
};

struct ParsedTransaction {
  RawTransaction tx;
  std::size_t consumed;
};

ParsedTransaction parse_transaction(ByteView bytes, std::size_t offset = 0);
// include_witness=false yields the legacy form hashed into the txid.
Bytes serialize_transaction(const RawTransaction& tx, bool include_witness = true);
Hash256 compute_txid(const RawTransaction& tx);

struct BlockHeader {
  std::int32_t version = 1;
  Hash256 prev_hash{};
  Hash256 merkle_root{};
  std::uint32_t timestamp = 0;
  std::uint32_t bits = 0;
  std::uint32_t nonce = 0;

  static constexpr std::size_t kSize = 80;
  Hash256 hash() const;
};

BlockHeader parse_block_header(ByteView bytes);
Bytes serialize_block_header(const BlockHeader& h);

struct Block {
  BlockHeader header;
  std::vector<RawTransaction> transactions;
};

// Parses one block payload; the payload must be consumed exactly.
Block parse_block(ByteView payload);
Bytes serialize_block(const Block& block);
Hash256 merkle_root(std::span<const RawTransaction> txs);

// ---- block files -------------------------------------------------------

struct BlockFile {
  std::filesystem::path path;
  Bytes bytes;
};

struct BlockRecord {
  std::size_t payload_offset;
  std::uint32_t payload_length;
};

// Splits a blkNNNNN.dat image into magic+length framed records.
std::vector<BlockRecord> scan_block_file(ByteView bytes, const NetworkMagic& magic);
// Frames one payload the way bitcoind appends it to a block file.
void append_block_record(Bytes& file, const NetworkMagic& magic, ByteView payload);

struct BlockLocator {
  std::size_t file_index = 0;
  std::size_t payload_offset = 0;
  std::uint32_t payload_length = 0;
  Hash256 hash{};
  Hash256 prev_hash{};
  std::uint32_t timestamp = 0;
};

std::vector<BlockLocator> index_block_file(ByteView bytes, std::size_t file_index,
                                           const NetworkMagic& magic);

struct ChainOptions {
  // When false, a stored chain shorter than the limit raises BrokenChain.
  bool allow_short_chain = false;
};

// Picks the longest chain from genesis among the indexed blocks and returns
// its first min(limit, length) locators in height order. Ties between equal
// tips go to the first stored block.
std::vector<BlockLocator> select_main_chain(std::span<const BlockLocator> stored,
                                            std::uint64_t height_limit,
                                            const ChainOptions& options = {});

struct ChainBlock {
  std::uint64_t height;
  Block block;
};

std::vector<ChainBlock> build_main_chain(std::span<const BlockFile> files, std::uint64_t height_limit,
                                         const NetworkMagic& magic = kMainnetMagic,
                                         const ChainOptions& options = {});

// Out-of-core variant: only locators are kept in memory; blocks are read back
// from disk in height order.
class ChainIndex {
 public:
  static ChainIndex build(std::vector<std::filesystem::path> files, std::uint64_t height_limit,
                          const NetworkMagic& magic = kMainnetMagic, const ChainOptions& options = {});
  ChainIndex(std::vector<std::filesystem::path> files, std::vector<BlockLocator> chain)
      : files_(std::move(files)), chain_(std::move(chain)) {}

  std::size_t size() const { return chain_.size(); }
  const std::vector<BlockLocator>& locators() const { return chain_; }
  const std::vector<std::filesystem::path>& files() const { return files_; }

  Block load(std::uint64_t height) const;
  // Visits blocks in height order; transactions carry their block_height.
  void for_each(const std::function<void(std::uint64_t height, const Block&)>& visit) const;

 private:
  std::vector<std::filesystem::path> files_;
  std::vector<BlockLocator> chain_;
};

// blk*.dat files of a directory in name order.
std::vector<std::filesystem::path> list_block_files(const std::filesystem::path& dir);

}  // namespace forge
