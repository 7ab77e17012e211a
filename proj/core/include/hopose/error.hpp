#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hopose {

enum class ErrorCode {
  NonPositiveDepth,
  OutOfVolume,
  LengthMismatch,
  RoleMismatch,
  DegenerateConfiguration,
  RankDeficient,
  ShapeMismatch,
  NonFiniteLoss,
  WidthMismatch,
  EmptySequence,
  EmptyModel,
  ConfigOutOfRange,
  ConfigError,
  HashMismatch,
  IoError,
  MissingArtifact,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so the
/// CLI can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// True for codes caused by bad user input (config, files) rather than numerics.
  bool is_config_error() const noexcept;

 private:
  ErrorCode code_;
};

}  // namespace hopose
