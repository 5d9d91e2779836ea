#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace forge {

enum class ErrorCode {
  // chain-parser
  TruncatedInput,
  MalformedTransaction,
  CorruptBlockFile,
  MissingGenesis,
  BrokenChain,
  InvalidAddress,
  // clustering / edges / attributes
  UnresolvedInput,
  AliasAbsent,
  InconsistentInputs,
  // labels
  UnknownCategory,
  MalformedRow,
  // features
  MissingRates,
  NoActivity,
  EmptyTrainingSplit,
  ManifestMismatch,
  // store / sampler
  UnknownAlias,
  SchemaMismatch,
  DuplicateEdgeKey,
  IoFailure,
  // pipeline
  UpstreamIncomplete,
  ConfigInvalid,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace forge
