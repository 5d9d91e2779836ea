#pragma once

#include <array>
#include <cstdint>

#include "forge/bytes.hpp"

namespace forge {

using Hash160 = std::array<std::uint8_t, 20>;

Hash256 sha256(ByteView data);
Hash256 double_sha256(ByteView data);
// RIPEMD-160 of SHA-256; the digest inside p2pkh and p2wpkh scripts.
Hash160 hash160(ByteView data);

// Incremental SHA-256 for hashing files and stage digests without buffering.
class Sha256Stream {
 public:
  Sha256Stream();
  ~Sha256Stream();
  Sha256Stream(const Sha256Stream&) = delete;
  Sha256Stream& operator=(const Sha256Stream&) = delete;

  void update(ByteView data);
  Hash256 finish();

 private:
  void* ctx_;
};

}  // namespace forge
