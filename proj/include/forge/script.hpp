#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forge/bytes.hpp"

namespace forge {

enum class ScriptKind : std::uint8_t {
  p2pk = 1,
  p2pkh,
  p2sh,
  p2wpkh,
  p2wsh,
  bare_multisig,
  op_return,
  nonstandard,
};

std::string_view script_kind_name(ScriptKind kind);

// Kind tag byte followed by SHA-256 of the script bytes.
using ScriptId = std::array<std::uint8_t, 33>;

struct ScriptIdHash {
  std::size_t operator()(const ScriptId& id) const noexcept;
};

struct ScriptDescriptor {
  Bytes script_bytes;
  ScriptKind kind = ScriptKind::nonstandard;
  ScriptId script_id{};
};

ScriptKind classify_script_kind(ByteView script);
ScriptId make_script_id(ScriptKind kind, ByteView script);
ScriptId script_id_of(ByteView script);
ScriptDescriptor classify_script(ByteView script);

// Canonical locking-script templates.
Bytes make_p2pkh_script(std::span<const std::uint8_t, 20> key_hash);
Bytes make_p2sh_script(std::span<const std::uint8_t, 20> script_hash);
Bytes make_p2pk_script(ByteView pubkey);
Bytes make_witness_v0_script(ByteView program);
Bytes make_op_return_script(ByteView payload);

// First data push following OP_RETURN, if the script is a data carrier.
std::optional<Bytes> op_return_payload(ByteView script);

// ---- addresses ---------------------------------------------------------

enum class AddressNetwork { mainnet, testnet, regtest };

std::string base58_encode(ByteView data);
std::optional<Bytes> base58_decode(std::string_view text);
std::string base58check_encode(std::uint8_t version, ByteView payload);

std::string bech32_encode_segwit(std::string_view hrp, int witness_version, ByteView program);

// Every locking script spendable by the address. Accepts base58check
// p2pkh/p2sh, bech32 v0 witness programs, and hex public keys (which expand
// to both their p2pk and p2pkh forms). Throws InvalidAddress.
std::vector<Bytes> address_to_scripts(std::string_view address);
std::vector<ScriptId> address_to_script_ids(std::string_view address);

// Inverse direction for standard single-key templates; p2pk yields the hex key.
std::optional<std::string> script_to_address(ByteView script,
                                             AddressNetwork network = AddressNetwork::mainnet);

}  // namespace forge
