#pragma once

// Thin UTF-8 / code point helpers over ICU.

#include <string>
#include <string_view>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/uscript.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "maptter/error.hpp"

namespace maptter::unicode {

/// Decodes UTF-8; ill-formed sequences become U+FFFD.
inline std::u32string decode(std::string_view utf8) {
  std::u32string out;
  out.reserve(utf8.size());
  const auto* bytes = reinterpret_cast<const uint8_t*>(utf8.data());
  const int32_t length = static_cast<int32_t>(utf8.size());
  int32_t offset = 0;
  while (offset < length) {
    UChar32 cp;
    U8_NEXT(bytes, offset, length, cp);
    out.push_back(cp < 0 ? U'�' : static_cast<char32_t>(cp));
  }
  return out;
}

inline void append(std::string& out, char32_t cp) {
  uint8_t buf[U8_MAX_LENGTH];
  int32_t n = 0;
  UBool error = false;
  U8_APPEND(buf, n, U8_MAX_LENGTH, static_cast<UChar32>(cp), error);
  if (error) {
    n = 0;
    U8_APPEND_UNSAFE(buf, n, 0xFFFD);
  }
  out.append(reinterpret_cast<const char*>(buf), static_cast<size_t>(n));
}

inline std::string encode(std::u32string_view cps) {
  std::string out;
  out.reserve(cps.size() * 2);
  for (char32_t cp : cps) append(out, cp);
  return out;
}

inline std::string nfc(std::string_view utf8) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) {
    throw Error(Errc::io_error, std::string("ICU NFC normalizer unavailable: ") + u_errorName(status));
  }
  const auto source = icu::UnicodeString::fromUTF8(icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  icu::UnicodeString normalized = normalizer->normalize(source, status);
  if (U_FAILURE(status)) {
    throw Error(Errc::invalid_argument, std::string("NFC normalization failed: ") + u_errorName(status));
  }
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

inline bool is_whitespace(char32_t cp) { return u_isUWhiteSpace(static_cast<UChar32>(cp)); }

inline UScriptCode script_of(char32_t cp) {
  UErrorCode status = U_ZERO_ERROR;
  const UScriptCode script = uscript_getScript(static_cast<UChar32>(cp), &status);
  return U_FAILURE(status) ? USCRIPT_INVALID_CODE : script;
}

inline bool is_arabic_letter(char32_t cp) {
  return u_isalpha(static_cast<UChar32>(cp)) && script_of(cp) == USCRIPT_ARABIC;
}

inline bool is_latin_letter(char32_t cp) {
  return u_isalpha(static_cast<UChar32>(cp)) && script_of(cp) == USCRIPT_LATIN;
}

inline bool is_digit(char32_t cp) { return u_isdigit(static_cast<UChar32>(cp)); }

inline char32_t to_lower(char32_t cp) { return static_cast<char32_t>(u_tolower(static_cast<UChar32>(cp))); }

inline size_t length(std::string_view utf8) { return decode(utf8).size(); }

}  // namespace maptter::unicode
