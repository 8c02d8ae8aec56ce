#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace topictrail {

struct CodePoint {
  char32_t value;
  std::size_t begin;  // byte offsets into the source
  std::size_t end;
};

/// Malformed sequences decode byte-by-byte to U+FFFD.
std::vector<CodePoint> decode_utf8(std::string_view s);
void append_utf8(std::string& out, char32_t cp);

bool is_space(char32_t c);
/// Punctuation for edge stripping. '_' is not punctuation here.
bool is_punct(char32_t c);
char32_t to_lower(char32_t c);

/// Lowercases ASCII, Latin-1, Greek and Cyrillic letters. Every mapping keeps
/// the UTF-8 byte length, so byte offsets into the input stay valid.
std::string fold_case(std::string_view text);

}  // namespace topictrail
