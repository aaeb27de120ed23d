/*
 * Copyright 2026 The ctprep Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ctprep {

enum class ErrorCode {
  kInvalidArgument,
  kDegenerateDimensions,
  kProfileLengthMismatch,
  kDegenerateHistogram,
  kEmptyBoundingBox,
  kBoxOutOfRange,
  kRadiusTooLarge,
  kEmptyInput,
  kProbabilityOutOfRange,
  kEmptyCell,
  kCellTooSmall,
  kDegenerateSpread,
  kInsufficientSources,
  kLengthMismatch,
  kUndefinedAuc,
  kMixedDimensions,
  kMixedBitDepth,
  kUnreadableFile,
  kEmptyDirectory,
  kRaggedRow,
  kUnknownLabel,
  kNonNumericField,
  kBadHeader,
  kNonFiniteValue,
  kIoFailure,
};

constexpr std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDegenerateDimensions: return "DegenerateDimensions";
    case ErrorCode::kProfileLengthMismatch: return "ProfileLengthMismatch";
    case ErrorCode::kDegenerateHistogram: return "DegenerateHistogram";
    case ErrorCode::kEmptyBoundingBox: return "EmptyBoundingBox";
    case ErrorCode::kBoxOutOfRange: return "BoxOutOfRange";
    case ErrorCode::kRadiusTooLarge: return "RadiusTooLarge";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kProbabilityOutOfRange: return "ProbabilityOutOfRange";
    case ErrorCode::kEmptyCell: return "EmptyCell";
    case ErrorCode::kCellTooSmall: return "CellTooSmall";
    case ErrorCode::kDegenerateSpread: return "DegenerateSpread";
    case ErrorCode::kInsufficientSources: return "InsufficientSources";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kUndefinedAuc: return "UndefinedAUC";
    case ErrorCode::kMixedDimensions: return "MixedDimensions";
    case ErrorCode::kMixedBitDepth: return "MixedBitDepth";
    case ErrorCode::kUnreadableFile: return "UnreadableFile";
    case ErrorCode::kEmptyDirectory: return "EmptyDirectory";
    case ErrorCode::kRaggedRow: return "RaggedRow";
    case ErrorCode::kUnknownLabel: return "UnknownLabel";
    case ErrorCode::kNonNumericField: return "NonNumericField";
    case ErrorCode::kBadHeader: return "BadHeader";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kIoFailure: return "IoFailure";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code; the
/// message is prefixed with the code name so CLI listings stay greppable.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ctprep
