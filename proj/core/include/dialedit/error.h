// Copyright 2026 The DialEdit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DIALEDIT_ERROR_H_
#define DIALEDIT_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace dialedit {

enum class ErrorCode {
  kInvalidArgument,
  // ontology
  kUnknownAttribute,
  kSlotMismatch,
  kMalformedBelief,
  // simulator
  kExhaustedOntology,
  kClientUnavailable,
  kMalformedCompletion,
  kInsufficientRecords,
  // dialogue
  kParseFailure,
  kEmptyGeneration,
  kLengthMismatch,
  kBackendUnavailable,
  // editor
  kEmptyBelief,
  kShapeMismatch,
  kNonFiniteLoss,
  kBackendFailure,
  // metrics
  kEmptyAttributeSet,
  kEmptyCorpus,
  kDimensionMismatch,
  kNonConvergedSqrt,
  // service
  kUnsupportedImage,
  kStoreFailure,
  kSessionNotFound,
};

std::string_view ErrorCodeName(ErrorCode code);

// All library failures are reported as dialedit::Error. `detail` carries
// structured diagnostics (candidate spellings, byte offsets, raw model
// output) and is forwarded verbatim in service error payloads.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        nlohmann::json detail = nullptr)
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const nlohmann::json& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  nlohmann::json detail_;
};

}  // namespace dialedit

#endif  // DIALEDIT_ERROR_H_
