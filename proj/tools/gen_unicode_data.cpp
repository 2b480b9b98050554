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

// Regenerates data/unicode/{ArabicShaping.txt,UnicodeData.txt} from the
// character database compiled into the system ICU. Only the Arabic-script
// ranges the shaper needs are emitted; the line formats are those of the
// corresponding UCD files.

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/uversion.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

namespace {

constexpr std::pair<UChar32, UChar32> kRanges[] = {
    {0x0600, 0x06FF}, {0x0750, 0x077F}, {0x0870, 0x089F}, {0x08A0, 0x08FF},
    {0x200C, 0x200F}, {0xFB50, 0xFDFF}, {0xFE70, 0xFEFF},
};

std::string hex4(UChar32 c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04X", static_cast<unsigned>(c));
  return buf;
}

std::string char_name(UChar32 c) {
  UErrorCode status = U_ZERO_ERROR;
  char buf[256];
  int32_t n = u_charName(c, U_UNICODE_CHAR_NAME, buf, sizeof buf, &status);
  if (U_FAILURE(status)) return {};
  return std::string(buf, static_cast<size_t>(n));
}

const char* gc_code(UChar32 c) {
  static const char* names[] = {"Cn", "Lu", "Ll", "Lt", "Lm", "Lo", "Mn", "Me",
                                "Mc", "Nd", "Nl", "No", "Zs", "Zl", "Zp", "Cc",
                                "Cf", "Co", "Cs", "Pd", "Ps", "Pe", "Pc", "Po",
                                "Sm", "Sc", "Sk", "So", "Pi", "Pf"};
  return names[u_charType(c)];
}

const char* bidi_code(UChar32 c) {
  static const char* names[] = {"L",   "R",   "EN",  "ES",  "ET",  "AN",  "CS",
                                "B",   "S",   "WS",  "ON",  "LRE", "LRO", "AL",
                                "RLE", "RLO", "PDF", "NSM", "BN",  "FSI", "LRI",
                                "RLI", "PDI"};
  return names[u_charDirection(c)];
}

std::string decomposition(UChar32 c) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfkc = icu::Normalizer2::getNFKCInstance(status);
  icu::UnicodeString raw;
  if (U_FAILURE(status) || !nfkc->getRawDecomposition(c, raw)) return {};
  std::string out;
  auto type = static_cast<UDecompositionType>(
      u_getIntPropertyValue(c, UCHAR_DECOMPOSITION_TYPE));
  if (type != U_DT_CANONICAL && type != U_DT_NONE) {
    const char* tag = u_getPropertyValueName(UCHAR_DECOMPOSITION_TYPE, type,
                                             U_LONG_PROPERTY_NAME);
    std::string t = tag ? tag : "compat";
    for (auto& ch : t) ch = static_cast<char>(std::tolower(ch));
    out = "<" + t + ">";
  }
  for (int32_t i = 0; i < raw.length();) {
    UChar32 d = raw.char32At(i);
    if (!out.empty()) out += ' ';
    out += hex4(d);
    i += U16_LENGTH(d);
  }
  return out;
}

char joining_code(UChar32 c) {
  switch (u_getIntPropertyValue(c, UCHAR_JOINING_TYPE)) {
    case U_JT_DUAL_JOINING: return 'D';
    case U_JT_RIGHT_JOINING: return 'R';
    case U_JT_LEFT_JOINING: return 'L';
    case U_JT_JOIN_CAUSING: return 'C';
    case U_JT_TRANSPARENT: return 'T';
    default: return 'U';
  }
}

char derived_default(UChar32 c) {
  auto gc = u_charType(c);
  return (gc == U_NON_SPACING_MARK || gc == U_ENCLOSING_MARK ||
          gc == U_FORMAT_CHAR)
             ? 'T'
             : 'U';
}

std::string joining_group(UChar32 c) {
  auto g = u_getIntPropertyValue(c, UCHAR_JOINING_GROUP);
  const char* name = u_getPropertyValueName(UCHAR_JOINING_GROUP, g,
                                            U_LONG_PROPERTY_NAME);
  std::string s = name ? name : "No_Joining_Group";
  for (auto& ch : s) {
    if (ch == '_') ch = ' ';
    ch = static_cast<char>(std::toupper(ch));
  }
  return s == "NO JOINING GROUP" ? "No_Joining_Group" : s;
}

std::string short_name(std::string name) {
  for (const char* prefix : {"ARABIC LETTER ", "ARABIC "}) {
    std::string p = prefix;
    if (name.rfind(p, 0) == 0) return name.substr(p.size());
  }
  return name;
}

}  // namespace

int main(int argc, char** argv) {
  std::string dir = argc > 1 ? argv[1] : "data/unicode";
  char version[U_MAX_VERSION_STRING_LENGTH];
  UVersionInfo info;
  u_getUnicodeVersion(info);
  u_versionToString(info, version);

  std::ofstream shaping(dir + "/ArabicShaping.txt");
  shaping << "# ArabicShaping.txt subset, Unicode " << version << "\n"
          << "# Format: <code>; <short name>; <joining type>; <joining group>\n"
          << "# Unlisted codepoints of general category Mn, Me or Cf are T;\n"
          << "# all other unlisted codepoints are U.\n";
  std::ofstream ucd(dir + "/UnicodeData.txt");
  for (auto [lo, hi] : kRanges) {
    for (UChar32 c = lo; c <= hi; ++c) {
      if (u_charType(c) == U_UNASSIGNED) continue;
      std::string name = char_name(c);
      char jt = joining_code(c);
      if (jt != derived_default(c)) {
        shaping << hex4(c) << "; " << short_name(name) << "; " << jt << "; "
                << joining_group(c) << "\n";
      }
      int digit = u_charDigitValue(c);
      std::string d = digit >= 0 ? std::to_string(digit) : "";
      ucd << hex4(c) << ';' << name << ';' << gc_code(c) << ';'
          << static_cast<int>(u_getCombiningClass(c)) << ';' << bidi_code(c) << ';'
          << decomposition(c) << ';' << d << ';' << d << ';' << d << ';'
          << (u_isMirrored(c) ? 'Y' : 'N') << ";;;;;\n";
    }
  }
  std::cout << "Unicode " << version << " tables written to " << dir << "\n";
}
