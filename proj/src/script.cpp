#include "forge/script.hpp"

#include <algorithm>
#include <cstring>

#include "forge/error.hpp"
#include "forge/hash.hpp"

namespace forge {

namespace {

constexpr std::uint8_t OP_0 = 0x00;
constexpr std::uint8_t OP_PUSHDATA1 = 0x4c;
constexpr std::uint8_t OP_PUSHDATA2 = 0x4d;
constexpr std::uint8_t OP_PUSHDATA4 = 0x4e;
constexpr std::uint8_t OP_1 = 0x51;
constexpr std::uint8_t OP_16 = 0x60;
constexpr std::uint8_t OP_RETURN = 0x6a;
constexpr std::uint8_t OP_DUP = 0x76;
constexpr std::uint8_t OP_EQUAL = 0x87;
constexpr std::uint8_t OP_EQUALVERIFY = 0x88;
constexpr std::uint8_t OP_HASH160 = 0xa9;
constexpr std::uint8_t OP_CHECKSIG = 0xac;
constexpr std::uint8_t OP_CHECKMULTISIG = 0xae;

bool is_pubkey_push(ByteView s, std::size_t pos) {
  if (pos >= s.size()) return false;
  std::size_t len = s[pos];
  return (len == 33 || len == 65) && pos + 1 + len <= s.size();
}

bool is_bare_multisig(ByteView s) {
  if (s.size() < 3 || s.back() != OP_CHECKMULTISIG) return false;
  if (s[0] < OP_1 || s[0] > OP_16) return false;
  int m = s[0] - OP_1 + 1;
  std::size_t pos = 1;
  int keys = 0;
  while (is_pubkey_push(s, pos)) {
    pos += 1 + s[pos];
    ++keys;
  }
  if (pos + 2 != s.size()) return false;
  std::uint8_t n_op = s[pos];
  if (n_op < OP_1 || n_op > OP_16) return false;
  int n = n_op - OP_1 + 1;
  return n == keys && m <= n && keys > 0;
}

}  // namespace

std::string_view script_kind_name(ScriptKind kind) {
  switch (kind) {
    case ScriptKind::p2pk: return "p2pk";
    case ScriptKind::p2pkh: return "p2pkh";
    case ScriptKind::p2sh: return "p2sh";
    case ScriptKind::p2wpkh: return "p2wpkh";
    case ScriptKind::p2wsh: return "p2wsh";
    case ScriptKind::bare_multisig: return "bare_multisig";
    case ScriptKind::op_return: return "op_return";
    case ScriptKind::nonstandard: return "nonstandard";
  }
  return "nonstandard";
}

std::size_t ScriptIdHash::operator()(const ScriptId& id) const noexcept {
  std::size_t v;
  std::memcpy(&v, id.data() + 1, sizeof v);
  return v ^ id[0];
}

ScriptKind classify_script_kind(ByteView s) {
  const auto n = s.size();
  if (n == 25 && s[0] == OP_DUP && s[1] == OP_HASH160 && s[2] == 20 && s[23] == OP_EQUALVERIFY &&
      s[24] == OP_CHECKSIG) {
    return ScriptKind::p2pkh;
  }
  if (n == 23 && s[0] == OP_HASH160 && s[1] == 20 && s[22] == OP_EQUAL) return ScriptKind::p2sh;
  if (n == 22 && s[0] == OP_0 && s[1] == 20) return ScriptKind::p2wpkh;
  if (n == 34 && s[0] == OP_0 && s[1] == 32) return ScriptKind::p2wsh;
  if ((n == 35 && s[0] == 33 && s[34] == OP_CHECKSIG) || (n == 67 && s[0] == 65 && s[66] == OP_CHECKSIG)) {
    return ScriptKind::p2pk;
  }
  if (n >= 1 && s[0] == OP_RETURN) return ScriptKind::op_return;
  if (is_bare_multisig(s)) return ScriptKind::bare_multisig;
  return ScriptKind::nonstandard;
}

ScriptId make_script_id(ScriptKind kind, ByteView script) {
  ScriptId id{};
  id[0] = static_cast<std::uint8_t>(kind);
  auto digest = sha256(script);
  std::copy(digest.begin(), digest.end(), id.begin() + 1);
  return id;
}

ScriptId script_id_of(ByteView script) { return make_script_id(classify_script_kind(script), script); }

ScriptDescriptor classify_script(ByteView script) {
  ScriptDescriptor d;
  d.script_bytes.assign(script.begin(), script.end());
  d.kind = classify_script_kind(script);
  d.script_id = make_script_id(d.kind, script);
  return d;
}

Bytes make_p2pkh_script(std::span<const std::uint8_t, 20> key_hash) {
  Bytes s{OP_DUP, OP_HASH160, 20};
  s.insert(s.end(), key_hash.begin(), key_hash.end());
  s.push_back(OP_EQUALVERIFY);
  s.push_back(OP_CHECKSIG);
  return s;
}

Bytes make_p2sh_script(std::span<const std::uint8_t, 20> script_hash) {
  Bytes s{OP_HASH160, 20};
  s.insert(s.end(), script_hash.begin(), script_hash.end());
  s.push_back(OP_EQUAL);
  return s;
}

Bytes make_p2pk_script(ByteView pubkey) {
  Bytes s{static_cast<std::uint8_t>(pubkey.size())};
  s.insert(s.end(), pubkey.begin(), pubkey.end());
  s.push_back(OP_CHECKSIG);
  return s;
}

Bytes make_witness_v0_script(ByteView program) {
  Bytes s{OP_0, static_cast<std::uint8_t>(program.size())};
  s.insert(s.end(), program.begin(), program.end());
  return s;
}

Bytes make_op_return_script(ByteView payload) {
  Bytes s{OP_RETURN};
  if (payload.size() <= 75) {
    s.push_back(static_cast<std::uint8_t>(payload.size()));
  } else {
    s.push_back(OP_PUSHDATA1);
    s.push_back(static_cast<std::uint8_t>(payload.size()));
  }
  s.insert(s.end(), payload.begin(), payload.end());
  return s;
}

std::optional<Bytes> op_return_payload(ByteView s) {
  if (s.empty() || s[0] != OP_RETURN) return std::nullopt;
  if (s.size() == 1) return Bytes{};
  std::size_t pos = 1;
  std::uint8_t op = s[pos++];
  std::size_t len = 0;
  if (op >= 1 && op <= 75) {
    len = op;
  } else if (op == OP_PUSHDATA1 && pos + 1 <= s.size()) {
    len = s[pos];
    pos += 1;
  } else if (op == OP_PUSHDATA2 && pos + 2 <= s.size()) {
    len = s[pos] | (std::size_t(s[pos + 1]) << 8);
    pos += 2;
  } else if (op == OP_PUSHDATA4 && pos + 4 <= s.size()) {
    len = s[pos] | (std::size_t(s[pos + 1]) << 8) | (std::size_t(s[pos + 2]) << 16) | (std::size_t(s[pos + 3]) << 24);
    pos += 4;
  } else {
    return Bytes{};
  }
  if (pos + len > s.size()) return Bytes{};
  return Bytes(s.begin() + static_cast<std::ptrdiff_t>(pos), s.begin() + static_cast<std::ptrdiff_t>(pos + len));
}

// ---- base58 ------------------------------------------------------------

namespace {

constexpr char kBase58Alphabet[] = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz";

int base58_value(char c) {
  const char* p = std::strchr(kBase58Alphabet, c);
  return (p == nullptr || c == '\0') ? -1 : static_cast<int>(p - kBase58Alphabet);
}

}  // namespace

std::string base58_encode(ByteView data) {
  std::size_t zeros = 0;
  while (zeros < data.size() && data[zeros] == 0) ++zeros;
  // Big-endian base-58 digits, least significant last.
  std::vector<std::uint8_t> digits;
  for (std::size_t i = zeros; i < data.size(); ++i) {
    int carry = data[i];
    for (auto& d : digits) {
      carry += 256 * d;
      d = static_cast<std::uint8_t>(carry % 58);
      carry /= 58;
    }
    while (carry) {
      digits.push_back(static_cast<std::uint8_t>(carry % 58));
      carry /= 58;
    }
  }
  std::string out(zeros, '1');
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) out.push_back(kBase58Alphabet[*it]);
  return out;
}

std::optional<Bytes> base58_decode(std::string_view text) {
  std::size_t ones = 0;
  while (ones < text.size() && text[ones] == '1') ++ones;
  std::vector<std::uint8_t> bytes;  // little-endian base-256
  for (std::size_t i = ones; i < text.size(); ++i) {
    int v = base58_value(text[i]);
    if (v < 0) return std::nullopt;
    int carry = v;
    for (auto& b : bytes) {
      carry += 58 * b;
      b = static_cast<std::uint8_t>(carry & 0xff);
      carry >>= 8;
    }
    while (carry) {
      bytes.push_back(static_cast<std::uint8_t>(carry & 0xff));
      carry >>= 8;
    }
  }
  Bytes out(ones, 0);
  out.insert(out.end(), bytes.rbegin(), bytes.rend());
  return out;
}

std::string base58check_encode(std::uint8_t version, ByteView payload) {
  Bytes data{version};
  data.insert(data.end(), payload.begin(), payload.end());
  auto check = double_sha256(data);
  data.insert(data.end(), check.begin(), check.begin() + 4);
  return base58_encode(data);
}

// ---- bech32 (BIP-173) --------------------------------------------------

namespace {

constexpr char kBech32Charset[] = "qpzry9x8gf2tvdw0s3jn54khce6mua7l";

std::uint32_t bech32_polymod(const std::vector<std::uint8_t>& values) {
  constexpr std::uint32_t gen[5] = {0x3b6a57b2, 0x26508e6d, 0x1ea119fa, 0x3d4233dd, 0x2a1462b3};
  std::uint32_t chk = 1;
  for (auto v : values) {
    std::uint32_t top = chk >> 25;
    chk = ((chk & 0x1ffffff) << 5) ^ v;
    for (int i = 0; i < 5; ++i) {
      if ((top >> i) & 1) chk ^= gen[i];
    }
  }
  return chk;
}

std::vector<std::uint8_t> hrp_expand(std::string_view hrp) {
  std::vector<std::uint8_t> out;
  for (char c : hrp) out.push_back(static_cast<std::uint8_t>(c) >> 5);
  out.push_back(0);
  for (char c : hrp) out.push_back(static_cast<std::uint8_t>(c) & 31);
  return out;
}

std::optional<std::vector<std::uint8_t>> convert_bits(ByteView in, int from, int to, bool pad) {
  std::uint32_t acc = 0;
  int bits = 0;
  std::vector<std::uint8_t> out;
  const std::uint32_t maxv = (1u << to) - 1;
  for (auto v : in) {
    if ((v >> from) != 0) return std::nullopt;
    acc = (acc << from) | v;
    bits += from;
    while (bits >= to) {
      bits -= to;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & maxv));
    }
  }
  if (pad) {
    if (bits) out.push_back(static_cast<std::uint8_t>((acc << (to - bits)) & maxv));
  } else if (bits >= from || ((acc << (to - bits)) & maxv)) {
    return std::nullopt;
  }
  return out;
}

struct SegwitProgram {
  int version;
  Bytes program;
};

std::optional<SegwitProgram> bech32_decode_segwit(std::string_view addr) {
  bool lower = false, upper = false;
  for (char c : addr) {
    if (c < 33 || c > 126) return std::nullopt;
    if (c >= 'a' && c <= 'z') lower = true;
    if (c >= 'A' && c <= 'Z') upper = true;
  }
  if (lower && upper) return std::nullopt;
  std::string s(addr);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  auto sep = s.rfind('1');
  if (sep == std::string::npos || sep == 0 || sep + 7 > s.size() || s.size() > 90) return std::nullopt;
  std::string hrp = s.substr(0, sep);
  if (hrp != "bc" && hrp != "tb" && hrp != "bcrt") return std::nullopt;
  std::vector<std::uint8_t> data;
  for (std::size_t i = sep + 1; i < s.size(); ++i) {
    const char* p = std::strchr(kBech32Charset, s[i]);
    if (p == nullptr) return std::nullopt;
    data.push_back(static_cast<std::uint8_t>(p - kBech32Charset));
  }
  auto values = hrp_expand(hrp);
  values.insert(values.end(), data.begin(), data.end());
  if (bech32_polymod(values) != 1) return std::nullopt;  // bech32 (not bech32m) constant
  data.resize(data.size() - 6);
  if (data.empty()) return std::nullopt;
  int version = data[0];
  auto program = convert_bits(ByteView(data).subspan(1), 5, 8, false);
  if (!program || version != 0) return std::nullopt;
  if (program->size() != 20 && program->size() != 32) return std::nullopt;
  return SegwitProgram{version, Bytes(program->begin(), program->end())};
}

bool is_hex(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; });
}

}  // namespace

std::string bech32_encode_segwit(std::string_view hrp, int witness_version, ByteView program) {
  std::vector<std::uint8_t> data{static_cast<std::uint8_t>(witness_version)};
  auto conv = convert_bits(program, 8, 5, true);
  data.insert(data.end(), conv->begin(), conv->end());
  auto values = hrp_expand(hrp);
  values.insert(values.end(), data.begin(), data.end());
  values.insert(values.end(), 6, 0);
  std::uint32_t mod = bech32_polymod(values) ^ 1;
  std::string out(hrp);
  out.push_back('1');
  for (auto d : data) out.push_back(kBech32Charset[d]);
  for (int i = 0; i < 6; ++i) out.push_back(kBech32Charset[(mod >> (5 * (5 - i))) & 31]);
  return out;
}

std::vector<Bytes> address_to_scripts(std::string_view address) {
  if (address.empty()) throw Error(ErrorCode::InvalidAddress, "empty address");

  // Raw public key: spendable through both the p2pk and p2pkh templates.
  if ((address.size() == 66 || address.size() == 130) && is_hex(address)) {
    Bytes key = from_hex(address);
    bool ok = (key.size() == 33 && (key[0] == 0x02 || key[0] == 0x03)) || (key.size() == 65 && key[0] == 0x04);
    if (!ok) throw Error(ErrorCode::InvalidAddress, "not a public key: " + std::string(address));
    auto h = hash160(key);
    return {make_p2pk_script(key), make_p2pkh_script(h)};
  }

  if (auto seg = bech32_decode_segwit(address)) return {make_witness_v0_script(seg->program)};

  auto raw = base58_decode(address);
  if (!raw || raw->size() != 25) throw Error(ErrorCode::InvalidAddress, "undecodable address: " + std::string(address));
  auto check = double_sha256(ByteView(*raw).first(21));
  if (!std::equal(check.begin(), check.begin() + 4, raw->begin() + 21)) {
    throw Error(ErrorCode::InvalidAddress, "checksum mismatch: " + std::string(address));
  }
  std::span<const std::uint8_t, 20> payload(raw->data() + 1, 20);
  switch ((*raw)[0]) {
    case 0x00:
    case 0x6f: return {make_p2pkh_script(payload)};
    case 0x05:
    case 0xc4: return {make_p2sh_script(payload)};
    default: throw Error(ErrorCode::InvalidAddress, "unknown version byte: " + std::string(address));
  }
}

std::vector<ScriptId> address_to_script_ids(std::string_view address) {
  std::vector<ScriptId> ids;
  for (const auto& s : address_to_scripts(address)) ids.push_back(script_id_of(s));
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::optional<std::string> script_to_address(ByteView s, AddressNetwork network) {
  const bool main = network == AddressNetwork::mainnet;
  const char* hrp = main ? "bc" : network == AddressNetwork::testnet ? "tb" : "bcrt";
  switch (classify_script_kind(s)) {
    case ScriptKind::p2pkh: return base58check_encode(main ? 0x00 : 0x6f, s.subspan(3, 20));
    case ScriptKind::p2sh: return base58check_encode(main ? 0x05 : 0xc4, s.subspan(2, 20));
    case ScriptKind::p2wpkh: return bech32_encode_segwit(hrp, 0, s.subspan(2, 20));
    case ScriptKind::p2wsh: return bech32_encode_segwit(hrp, 0, s.subspan(2, 32));
    case ScriptKind::p2pk: return to_hex(s.subspan(1, s[0]));
    default: return std::nullopt;
  }
}

}  // namespace forge
