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

#pragma once

// Dataset assembly over manifests: ingesting transcribed real images,
// seeded splits, provenance-mix merging and integrity checks.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qalam/manifest.hpp"

namespace qalam {

struct Diagnostic {
  std::string kind;  // e.g. "MissingTranscript", "hash-mismatch"
  std::string message;

  bool operator==(const Diagnostic&) const = default;
};

struct IngestResult {
  Manifest manifest;
  std::vector<Diagnostic> diagnostics;
};

/// Pairs each image in `dir` with a same-stem .txt transcript, or with the
/// {"image", "text"} rows of `transcripts` when it names a JSONL file.
/// Transcripts are stored verbatim. The manifest root is `dir`.
IngestResult ingest_real(const std::filesystem::path& dir, Provenance provenance,
                         const std::optional<std::filesystem::path>& transcripts = std::nullopt);

/// Seeded shuffle, then contiguous assignment; each split gets
/// floor(fraction * n) and the remainder goes to the largest fraction.
/// Throws Error(kConfig) unless the fractions sum to 1 within 1e-9.
Manifest split(Manifest m, const std::map<Split, double>& ratios, std::uint64_t seed);

/// Union of two manifests (throws Error(kDuplicateSampleId) on collision).
/// With `target_mix` (keys "synthetic" and "real"), the overrepresented
/// class is downsampled, seeded, towards the requested fractions. The result
/// is rooted at `a.root`.
Manifest merge(const Manifest& a, const Manifest& b,
               const std::optional<std::map<std::string, double>>& target_mix = std::nullopt,
               std::uint64_t seed = 0);

/// File existence, content hashes, stored-vs-recomputed stats, unique ids
/// and box bounds. Empty means clean.
std::vector<Diagnostic> verify(const Manifest& m);

}  // namespace qalam
