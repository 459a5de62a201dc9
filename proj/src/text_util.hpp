#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dirguide::detail {

std::string to_lower_ascii(std::string s);
std::string trim(const std::string& s);

/// True if `word` occurs in `text` delimited by non-alphanumerics.
/// Both must already be lowercase.
bool contains_word(const std::string& text, const std::string& word);

/// True if the multi-word phrase occurs with single spaces after the text has
/// been whitespace-normalized by the caller.
bool contains_phrase(const std::string& normalized_text, const std::string& phrase);

/// Lowercase, collapse runs of non-alphanumerics to single spaces, trim.
std::string normalize_for_match(const std::string& raw);

/// Decodes one UTF-8 codepoint starting at i; advances i past it.
/// Malformed bytes are consumed one at a time and returned verbatim.
std::uint32_t next_codepoint(const std::string& s, std::size_t& i);

bool is_punct_codepoint(std::uint32_t cp);
bool is_space_codepoint(std::uint32_t cp);

void append_utf8(std::string& out, std::uint32_t cp);

}  // namespace dirguide::detail
