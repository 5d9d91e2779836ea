#include "forge/bytes.hpp"

#include <algorithm>

#include "forge/error.hpp"

namespace forge {

namespace {

constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string to_hex(ByteView bytes) {
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kHexDigits[b >> 4]);
    out.push_back(kHexDigits[b & 0x0f]);
  }
  return out;
}

std::string to_hex_reversed(ByteView bytes) {
  Bytes rev(bytes.rbegin(), bytes.rend());
  return to_hex(rev);
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error(ErrorCode::MalformedRow, "odd-length hex string");
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = hex_value(hex[i]);
    int lo = hex_value(hex[i + 1]);
    if (hi < 0 || lo < 0) throw Error(ErrorCode::MalformedRow, "invalid hex digit");
    out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
  }
  return out;
}

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::TruncatedInput: return "TruncatedInput";
    case ErrorCode::MalformedTransaction: return "MalformedTransaction";
    case ErrorCode::CorruptBlockFile: return "CorruptBlockFile";
    case ErrorCode::MissingGenesis: return "MissingGenesis";
    case ErrorCode::BrokenChain: return "BrokenChain";
    case ErrorCode::InvalidAddress: return "InvalidAddress";
    case ErrorCode::UnresolvedInput: return "UnresolvedInput";
    case ErrorCode::AliasAbsent: return "AliasAbsent";
    case ErrorCode::InconsistentInputs: return "InconsistentInputs";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::MissingRates: return "MissingRates";
    case ErrorCode::NoActivity: return "NoActivity";
    case ErrorCode::EmptyTrainingSplit: return "EmptyTrainingSplit";
    case ErrorCode::ManifestMismatch: return "ManifestMismatch";
    case ErrorCode::UnknownAlias: return "UnknownAlias";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::DuplicateEdgeKey: return "DuplicateEdgeKey";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::UpstreamIncomplete: return "UpstreamIncomplete";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

}  // namespace forge
