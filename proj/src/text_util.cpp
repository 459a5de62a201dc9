#include "text_util.hpp"

#include <cctype>

namespace dirguide::detail {

std::string to_lower_ascii(std::string s) {
    for (char& c : s) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return s;
}

std::string trim(const std::string& s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

static bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

bool contains_word(const std::string& text, const std::string& word) {
    if (word.empty()) return false;
    std::size_t pos = 0;
    while ((pos = text.find(word, pos)) != std::string::npos) {
        const bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
        const std::size_t end = pos + word.size();
        const bool right_ok = end == text.size() || !is_word_char(text[end]);
        if (left_ok && right_ok) return true;
        pos += 1;
    }
    return false;
}

bool contains_phrase(const std::string& normalized_text, const std::string& phrase) {
    return contains_word(normalized_text, phrase);
}

std::string normalize_for_match(const std::string& raw) {
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    for (char c : raw) {
        if (is_word_char(c)) {
            if (pending_space && !out.empty()) out += ' ';
            pending_space = false;
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else {
            pending_space = true;
        }
    }
    return out;
}

std::uint32_t next_codepoint(const std::string& s, std::size_t& i) {
    const auto byte = [&](std::size_t k) { return static_cast<std::uint8_t>(s[k]); };
    const std::uint8_t b0 = byte(i);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    auto cont = [&](std::size_t k) { return k < s.size() && (byte(k) & 0xC0) == 0x80; };
    if ((b0 & 0xE0) == 0xC0 && cont(i + 1)) {
        std::uint32_t cp = (static_cast<std::uint32_t>(b0 & 0x1F) << 6) | (byte(i + 1) & 0x3F);
        i += 2;
        return cp;
    }
    if ((b0 & 0xF0) == 0xE0 && cont(i + 1) && cont(i + 2)) {
        std::uint32_t cp = (static_cast<std::uint32_t>(b0 & 0x0F) << 12) |
                           (static_cast<std::uint32_t>(byte(i + 1) & 0x3F) << 6) |
                           (byte(i + 2) & 0x3F);
        i += 3;
        return cp;
    }
    if ((b0 & 0xF8) == 0xF0 && cont(i + 1) && cont(i + 2) && cont(i + 3)) {
        std::uint32_t cp = (static_cast<std::uint32_t>(b0 & 0x07) << 18) |
                           (static_cast<std::uint32_t>(byte(i + 1) & 0x3F) << 12) |
                           (static_cast<std::uint32_t>(byte(i + 2) & 0x3F) << 6) |
                           (byte(i + 3) & 0x3F);
        i += 4;
        return cp;
    }
    ++i;  // malformed byte, pass through
    return b0;
}

bool is_punct_codepoint(std::uint32_t cp) {
    if (cp < 0x80) {
        return std::ispunct(static_cast<int>(cp)) != 0;
    }
    // Common non-ASCII punctuation blocks; enough for crowd-sourced answers.
    if (cp >= 0x00A1 && cp <= 0x00BF) return true;   // Latin-1 punctuation and symbols
    if (cp >= 0x2010 && cp <= 0x205E) return true;   // general punctuation (dashes, quotes, ellipsis)
    if (cp >= 0x2E00 && cp <= 0x2E7F) return true;   // supplemental punctuation
    if (cp >= 0x3001 && cp <= 0x303F) return true;   // CJK symbols and punctuation
    if (cp >= 0xFF01 && cp <= 0xFF0F) return true;   // fullwidth forms
    if (cp >= 0xFF1A && cp <= 0xFF20) return true;
    if (cp >= 0xFF3B && cp <= 0xFF40) return true;
    if (cp >= 0xFF5B && cp <= 0xFF65) return true;
    return false;
}

bool is_space_codepoint(std::uint32_t cp) {
    if (cp < 0x80) return std::isspace(static_cast<int>(cp)) != 0;
    return cp == 0x00A0 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 ||
           cp == 0x202F || cp == 0x205F || cp == 0x3000;
}

void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

}  // namespace dirguide::detail
