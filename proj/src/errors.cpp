// Copyright 2026 The Qalam Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "qalam/errors.hpp"

namespace qalam {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::kConfig: return "ConfigError";
    case Errc::kUsage: return "UsageError";
    case Errc::kIo: return "IoError";
    case Errc::kSchemaVersion: return "SchemaVersionError";
    case Errc::kEmptyReference: return "EmptyReference";
    case Errc::kEmptyRun: return "EmptyRunError";
    case Errc::kTextTooLong: return "TextTooLong";
    case Errc::kFontRender: return "FontRenderError";
    case Errc::kOutputExists: return "OutputExistsError";
    case Errc::kMissingTranscript: return "MissingTranscript";
    case Errc::kUnreadableImage: return "UnreadableImage";
    case Errc::kDuplicateSampleId: return "DuplicateSampleId";
    case Errc::kAuth: return "AuthError";
    case Errc::kRateLimited: return "RateLimited";
    case Errc::kExtraction: return "ExtractionError";
    case Errc::kTransient: return "TransientError";
    case Errc::kUnknownSampleId: return "UnknownSampleId";
    case Errc::kUnknownTask: return "UnknownTask";
    case Errc::kNotClaimedByYou: return "NotClaimedByYou";
    case Errc::kIllegalTransition: return "IllegalTransition";
    case Errc::kEmptyCorrection: return "EmptyCorrection";
    case Errc::kIncompleteProject: return "IncompleteProject";
    case Errc::kEmptyBench: return "EmptyBenchError";
    case Errc::kAdapterUnavailable: return "AdapterUnavailable";
    case Errc::kTimeout: return "Timeout";
    case Errc::kAdapterFailure: return "AdapterFailure";
    case Errc::kMismatchedBenchmark: return "MismatchedBenchmark";
    case Errc::kLayout: return "LayoutError";
  }
  return "Error";
}

}  // namespace qalam
