#pragma once

// Normalization, tokenization, light stemming and stop-word removal.
// Every function here is pure.

#include <algorithm>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "maptter/error.hpp"
#include "maptter/unicode.hpp"
#include "maptter/util.hpp"

namespace maptter::text {

struct TokenStream {
  std::vector<std::string> tokens;
  std::string source_comment_id;
};

namespace detail {

inline bool is_arabic_mark(char32_t cp) { return (cp >= 0x064B && cp <= 0x065F) || cp == 0x0670; }

inline constexpr char32_t kTatweel = 0x0640;

inline char32_t fold_arabic(char32_t cp) {
  switch (cp) {
    case 0x0623:  // alef with hamza above
    case 0x0625:  // alef with hamza below
    case 0x0622:  // alef with madda
      return 0x0627;
    case 0x0649:  // alef maksura
      return 0x064A;
    case 0x0629:  // teh marbuta
      return 0x0647;
    default:
      return cp;
  }
}

inline bool is_token_char(char32_t cp) {
  return unicode::is_arabic_letter(cp) || unicode::is_latin_letter(cp) || unicode::is_digit(cp);
}

}  // namespace detail

/// NFC; drop Arabic diacritics and tatweel; fold alef/yeh/teh marbuta
/// variants; lowercase Latin letters. Digits and punctuation pass through.
inline std::string normalize(std::string_view input) {
  const std::u32string cps = unicode::decode(unicode::nfc(input));
  std::u32string out;
  out.reserve(cps.size());
  for (char32_t cp : cps) {
    if (detail::is_arabic_mark(cp) || cp == detail::kTatweel) continue;
    cp = detail::fold_arabic(cp);
    if (unicode::is_latin_letter(cp)) cp = unicode::to_lower(cp);
    out.push_back(cp);
  }
  // Mark removal can leave a sequence NFC would recompose; re-normalizing keeps the result idempotent.
  return unicode::nfc(unicode::encode(out));
}

/// Maximal runs of Arabic letters, Latin letters and digits.
inline TokenStream tokenize(std::string_view normalized, std::string source_comment_id = {}) {
  TokenStream stream;
  stream.source_comment_id = std::move(source_comment_id);
  std::u32string current;
  for (char32_t cp : unicode::decode(normalized)) {
    if (detail::is_token_char(cp)) {
      current.push_back(cp);
    } else if (!current.empty()) {
      stream.tokens.push_back(unicode::encode(current));
      current.clear();
    }
  }
  if (!current.empty()) stream.tokens.push_back(unicode::encode(current));
  return stream;
}

struct StemmerRules {
  std::vector<std::string> prefixes;
  std::vector<std::string> suffixes;
  size_t min_stem_length = 2;

  static StemmerRules light_default() {
    return StemmerRules{
        {"وال", "بال", "كال", "فال", "ال", "لل", "و"},
        {"هما", "كما", "تين", "ات", "ان", "ون", "ين", "ها", "ية", "يه", "ه", "ي"},
        2,
    };
  }

  /// Rule file: one entry per line, `prefix X`, `suffix X` or
  /// `min_stem_length N`; '#' starts a comment.
  static StemmerRules load(const std::filesystem::path& path) {
    StemmerRules rules;
    for (const auto& entry : read_list_file(path)) {
      const size_t space = entry.find_first_of(" \t");
      if (space == std::string::npos) throw Error(Errc::parse_error, "stemmer rule without value: " + entry);
      const std::string key = entry.substr(0, space);
      const std::string value(trim(std::string_view(entry).substr(space)));
      if (key == "prefix") {
        rules.prefixes.push_back(value);
      } else if (key == "suffix") {
        rules.suffixes.push_back(value);
      } else if (key == "min_stem_length") {
        rules.min_stem_length = static_cast<size_t>(std::stoul(value));
      } else {
        throw Error(Errc::parse_error, "unknown stemmer rule '" + key + "'");
      }
    }
    if (rules.prefixes.empty() || rules.suffixes.empty()) {
      throw Error(Errc::parse_error, "stemmer rules need at least one prefix and one suffix");
    }
    if (rules.min_stem_length < 2) throw Error(Errc::parse_error, "min_stem_length must be >= 2");
    return rules;
  }
};

namespace detail {

inline std::vector<std::u32string> longest_first(const std::vector<std::string>& affixes) {
  std::vector<std::u32string> out;
  for (const auto& a : affixes) out.push_back(unicode::decode(a));
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
  return out;
}

}  // namespace detail

/// Larkey-style light stemmer: at most one prefix, then at most one suffix,
/// each removed only if at least min_stem_length letters remain. No root
/// extraction. Tokens that are not purely Arabic letters pass through.
inline std::string light_stem(std::string_view token, const StemmerRules& rules) {
  std::u32string word = unicode::decode(token);
  if (word.empty() || !std::all_of(word.begin(), word.end(), unicode::is_arabic_letter)) {
    return std::string(token);
  }
  for (const auto& prefix : detail::longest_first(rules.prefixes)) {
    if (word.size() >= prefix.size() + rules.min_stem_length && word.starts_with(prefix)) {
      word.erase(0, prefix.size());
      break;
    }
  }
  for (const auto& suffix : detail::longest_first(rules.suffixes)) {
    if (word.size() >= suffix.size() + rules.min_stem_length && word.ends_with(suffix)) {
      word.erase(word.size() - suffix.size());
      break;
    }
  }
  return unicode::encode(word);
}

using StopList = std::unordered_set<std::string>;

inline TokenStream remove_stop_words(TokenStream stream, const StopList& stoplist) {
  if (stoplist.empty()) return stream;
  std::erase_if(stream.tokens, [&](const std::string& t) { return stoplist.contains(t); });
  return stream;
}

/// Common MSA function words, stored unnormalized; see ProcessingChain.
inline std::vector<std::string> default_stop_words() {
  return {
      "في",    "من",    "إلى",   "الى",   "على",   "عن",    "مع",    "حتى",   "منذ",   "خلال",  "بين",   "عند",
      "لدى",   "نحو",   "ضد",    "حول",   "دون",   "بعد",   "قبل",   "فوق",   "تحت",   "أمام",  "خلف",   "و",
      "أو",    "ثم",    "أم",    "بل",    "لكن",   "لعل",   "ف",     "إن",    "أن",    "إذا",   "إذ",    "لو",
      "لولا",  "كي",    "لكي",   "لأن",   "لا",    "لم",    "لن",    "ما",    "ليس",   "قد",    "لقد",   "سوف",
      "هل",    "هو",    "هي",    "هم",    "هن",    "هما",   "أنا",   "نحن",   "أنت",   "أنتم",  "أنتن",  "هذا",
      "هذه",   "ذلك",   "تلك",   "هؤلاء", "أولئك", "هناك",  "هنا",   "الذي",  "التي",  "الذين", "اللذين", "اللواتي",
      "كل",    "بعض",   "غير",   "سوى",   "أي",    "كان",   "كانت",  "يكون",  "تكون",  "كانوا", "أصبح",  "صار",
      "مازال", "ليست",  "كما",   "مثل",   "أيضا",  "فقط",   "جدا",   "حيث",   "عندما", "بينما", "لما",   "متى",
      "كيف",   "أين",   "لماذا", "ماذا",  "إلا",   "يا",    "به",    "بها",   "له",    "لها",   "لهم",   "فيه",
      "فيها",  "منه",   "منها",  "عليه",  "عليها", "ذات",   "تم",    "وقد",   "وهو",   "وهي",   "وكان",  "التى",
  };
}

/// Whole chain: normalize -> tokenize -> (stem) -> stop-word removal.
/// Stop words are normalized (and stemmed when stemming is on) once at
/// construction so they match post-stem tokens.
class ProcessingChain {
 public:
  ProcessingChain(bool stem, StemmerRules rules, const std::vector<std::string>& stop_words)
      : stem_(stem), rules_(std::move(rules)) {
    for (const auto& word : stop_words) {
      for (auto& token : tokenize(normalize(word)).tokens) {
        stoplist_.insert(stem_ ? light_stem(token, rules_) : token);
      }
    }
  }

  explicit ProcessingChain(bool stem)
      : ProcessingChain(stem, StemmerRules::light_default(), default_stop_words()) {}

  TokenStream process(std::string_view raw_text, std::string source_comment_id = {}) const {
    TokenStream stream = tokenize(normalize(raw_text), std::move(source_comment_id));
    if (stem_) {
      for (auto& token : stream.tokens) token = light_stem(token, rules_);
    }
    return remove_stop_words(std::move(stream), stoplist_);
  }

  bool stems() const { return stem_; }
  const StopList& stoplist() const { return stoplist_; }

 private:
  bool stem_;
  StemmerRules rules_;
  StopList stoplist_;
};

}  // namespace maptter::text
