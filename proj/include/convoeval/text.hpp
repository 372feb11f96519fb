// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The convoeval Authors

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace convoeval::text {

namespace detail {

// Code points treated as separators besides ASCII non-alphanumerics:
// Latin-1 punctuation/symbols (incl. NBSP), general punctuation and spaces,
// CJK symbols, and the fullwidth ASCII punctuation block.
constexpr bool is_separator_code_point(char32_t cp) noexcept {
  if (cp < 0x80) {
    const bool alnum = (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    return !alnum;
  }
  if (cp >= 0x80 && cp <= 0xBF) return cp != 0xAA && cp != 0xB5 && cp != 0xBA;
  if (cp == 0xD7 || cp == 0xF7) return true;
  if (cp == 0x1680 || cp == 0x180E) return true;
  if (cp >= 0x2000 && cp <= 0x206F) return true;
  if (cp >= 0x3000 && cp <= 0x303F) return true;
  if (cp >= 0xFF01 && cp <= 0xFF0F) return true;
  if (cp >= 0xFF1A && cp <= 0xFF20) return true;
  if (cp == 0xFEFF) return true;
  return false;
}

// Decodes one UTF-8 sequence starting at s[i]; returns its length (invalid bytes decode as themselves, length 1).
inline std::size_t decode_utf8(std::string_view s, std::size_t i, char32_t& cp) noexcept {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    cp = b0;
    return 1;
  }
  if ((b0 & 0xE0) == 0xC0) {
    const int c1 = cont(1);
    if (c1 >= 0) {
      cp = static_cast<char32_t>(((b0 & 0x1F) << 6) | c1);
      return 2;
    }
  } else if ((b0 & 0xF0) == 0xE0) {
    const int c1 = cont(1), c2 = c1 >= 0 ? cont(2) : -1;
    if (c2 >= 0) {
      cp = static_cast<char32_t>(((b0 & 0x0F) << 12) | (c1 << 6) | c2);
      return 3;
    }
  } else if ((b0 & 0xF8) == 0xF0) {
    const int c1 = cont(1), c2 = c1 >= 0 ? cont(2) : -1, c3 = c2 >= 0 ? cont(3) : -1;
    if (c3 >= 0) {
      cp = static_cast<char32_t>(((b0 & 0x07) << 18) | (c1 << 12) | (c2 << 6) | c3);
      return 4;
    }
  }
  cp = 0xFFFD;
  return 1;
}

}  // namespace detail

/// Splits on whitespace and punctuation and lowercases ASCII letters.
/// Non-ASCII letters are kept verbatim as part of tokens.
inline std::vector<std::string> tokenize(std::string_view utterance) {
  std::vector<std::string> tokens;
  std::string current;
  for (std::size_t i = 0; i < utterance.size();) {
    char32_t cp = 0;
    const std::size_t len = detail::decode_utf8(utterance, i, cp);
    if (detail::is_separator_code_point(cp)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else if (cp < 0x80) {
      char c = static_cast<char>(cp);
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      current.push_back(c);
    } else {
      current.append(utterance.substr(i, len));
    }
    i += len;
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

/// True when the string has a non-whitespace character.
inline bool has_content(std::string_view s) noexcept {
  for (char c : s) {
    if (c != ' ' && c != '\t' && c != '\n' && c != '\r' && c != '\f' && c != '\v') return true;
  }
  return false;
}

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace convoeval::text
