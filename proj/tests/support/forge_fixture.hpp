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

#include <filesystem>
#include <string>

#include "qalam/forge.hpp"
#include "qalam/io.hpp"

namespace qalam::testing {

/// Clean single-line config over the bundled corpus: white-ish solid
/// background, no distortions.
inline forge::ForgeConfig plain_config(std::uint64_t seed = 1) {
  forge::ForgeConfig c;
  c.master_seed = seed;
  c.corpus_path = QALAM_CORPUS;
  c.fonts = {{QALAM_DEFAULT_FONT, 1.0}};
  c.backgrounds = {{forge::Background::Kind::kSolid, 225, 255, "", 1.0}};
  c.layout.max_words = 6;
  c.font_size_range = {24, 36};
  c.output.count = 10;
  return c;
}

inline forge::ForgeConfig with_corpus(forge::ForgeConfig c, const std::filesystem::path& dir, const std::string& text) {
  write_file(dir / "corpus.txt", text);
  c.corpus_path = (dir / "corpus.txt").string();
  return c;
}

}  // namespace qalam::testing
