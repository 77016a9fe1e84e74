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

#include "dialedit/error.h"

namespace dialedit {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kUnknownAttribute: return "UnknownAttribute";
    case ErrorCode::kSlotMismatch: return "SlotMismatch";
    case ErrorCode::kMalformedBelief: return "MalformedBelief";
    case ErrorCode::kExhaustedOntology: return "ExhaustedOntology";
    case ErrorCode::kClientUnavailable: return "ClientUnavailable";
    case ErrorCode::kMalformedCompletion: return "MalformedCompletion";
    case ErrorCode::kInsufficientRecords: return "InsufficientRecords";
    case ErrorCode::kParseFailure: return "ParseFailure";
    case ErrorCode::kEmptyGeneration: return "EmptyGeneration";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kBackendUnavailable: return "BackendUnavailable";
    case ErrorCode::kEmptyBelief: return "EmptyBelief";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kBackendFailure: return "BackendFailure";
    case ErrorCode::kEmptyAttributeSet: return "EmptyAttributeSet";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNonConvergedSqrt: return "NonConvergedSqrt";
    case ErrorCode::kUnsupportedImage: return "UnsupportedImage";
    case ErrorCode::kStoreFailure: return "StoreFailure";
    case ErrorCode::kSessionNotFound: return "SessionNotFound";
  }
  return "Unknown";
}

}  // namespace dialedit
