// Copyright 2026 The ARO Probe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// \file text.hpp
/// Tokenization, lexicon tagging, pre-tagged ingestion and shallow chunking.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "aro/error.hpp"

namespace aro::text {

enum class PosTag { NOUN, ADJ, ADV, VERB, DET, ADP, PRON, CONJ, NUM, OTHER };

inline constexpr std::array<std::string_view, 10> kTagNames = {
    "NOUN", "ADJ", "ADV", "VERB", "DET", "ADP", "PRON", "CONJ", "NUM", "OTHER"};

inline std::string_view to_string(PosTag tag) {
  return kTagNames[static_cast<std::size_t>(tag)];
}

inline std::optional<PosTag> parse_tag(std::string_view name) {
  for (std::size_t i = 0; i < kTagNames.size(); ++i)
    if (kTagNames[i] == name) return static_cast<PosTag>(i);
  return std::nullopt;
}

struct Token {
  std::string text;
  PosTag tag = PosTag::OTHER;
  std::size_t index = 0;
};

/// Half-open token range [begin, end).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const noexcept { return end - begin; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct TaggedCaption {
  std::vector<Token> tokens;
  std::vector<Span> noun_phrases;
  std::vector<Span> verb_phrases;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }

  std::vector<std::string> words() const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.text);
    return out;
  }

  std::vector<PosTag> tags() const {
    std::vector<PosTag> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.tag);
    return out;
  }
};

inline constexpr std::string_view kTerminalPunct = ".,!?;:";

inline bool is_punct_char(char c) {
  return kTerminalPunct.find(c) != std::string_view::npos;
}

inline bool is_punct_token(std::string_view tok) {
  return !tok.empty() && std::all_of(tok.begin(), tok.end(), is_punct_char);
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// Whitespace split; trailing .,!?;: are peeled off into their own tokens.
/// Hyphens and interior punctuation stay inside the word.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])))
      ++i;
    std::size_t j = i;
    while (j < text.size() &&
           !std::isspace(static_cast<unsigned char>(text[j])))
      ++j;
    if (j == i) break;
    std::string_view word = text.substr(i, j - i);
    std::size_t core = word.size();
    while (core > 0 && is_punct_char(word[core - 1])) --core;
    if (core > 0) out.emplace_back(word.substr(0, core));
    for (std::size_t k = core; k < word.size(); ++k)
      out.emplace_back(1, word[k]);
    i = j;
  }
  return out;
}

/// Inverse of tokenize up to whitespace normalization: words are joined by a
/// single space and punctuation tokens attach to the preceding word.
template <typename Range>
std::string detokenize(const Range& tokens) {
  std::string out;
  for (const auto& tok : tokens) {
    std::string_view t(tok);
    if (!out.empty() && !is_punct_token(t)) out.push_back(' ');
    out.append(t);
  }
  return out;
}

/// Plain single-space join, used for shuffled captions where punctuation may
/// have moved away from its word.
template <typename Range>
std::string join_words(const Range& tokens) {
  std::string out;
  for (const auto& tok : tokens) {
    if (!out.empty()) out.push_back(' ');
    out.append(std::string_view(tok));
  }
  return out;
}

/// Lowercased word -> tag.
class Lexicon {
 public:
  Lexicon() = default;
  Lexicon(std::initializer_list<std::pair<std::string, PosTag>> entries) {
    for (const auto& [w, t] : entries) add(w, t);
  }

  void add(std::string_view word, PosTag tag) { map_[to_lower(word)] = tag; }

  std::optional<PosTag> find(std::string_view word) const {
    auto it = map_.find(to_lower(word));
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const noexcept { return map_.size(); }

  static Lexicon from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw DataError("lexicon must be a JSON object");
    Lexicon lex;
    for (const auto& [word, value] : j.items()) {
      if (!value.is_string())
        throw DataError("lexicon entry '" + word + "' is not a string");
      auto tag = parse_tag(value.get<std::string>());
      if (!tag)
        throw DataError("lexicon entry '" + word + "' has unknown tag '" +
                        value.get<std::string>() + "'");
      lex.add(word, *tag);
    }
    return lex;
  }

  static Lexicon load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open lexicon " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError("lexicon " + path + ": " + e.what());
    }
    return from_json(j);
  }

 private:
  std::unordered_map<std::string, PosTag> map_;
};

namespace detail {

inline bool is_numeral(std::string_view w) {
  bool digit = false;
  for (char c : w) {
    if (std::isdigit(static_cast<unsigned char>(c)))
      digit = true;
    else if (c != '.' && c != ',')
      return false;
  }
  return digit;
}

inline bool is_auxiliary(std::string_view lower) {
  static constexpr std::array<std::string_view, 8> kAux = {
      "is", "are", "was", "were", "be", "been", "being", "am"};
  return std::find(kAux.begin(), kAux.end(), lower) != kAux.end();
}

}  // namespace detail

/// DET? ADJ* NOUN+, maximal, scanned left to right.
inline std::vector<Span> chunk_noun_phrases(const std::vector<Token>& tokens) {
  std::vector<Span> spans;
  const std::size_t n = tokens.size();
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    if (tokens[j].tag == PosTag::DET) ++j;
    while (j < n && tokens[j].tag == PosTag::ADJ) ++j;
    std::size_t nouns = j;
    while (nouns < n && tokens[nouns].tag == PosTag::NOUN) ++nouns;
    if (nouns > j) {
      spans.push_back({i, nouns});
      i = nouns;
    } else {
      ++i;
    }
  }
  return spans;
}

/// VERB+ ADP?, maximal.
inline std::vector<Span> chunk_verb_phrases(const std::vector<Token>& tokens) {
  std::vector<Span> spans;
  const std::size_t n = tokens.size();
  std::size_t i = 0;
  while (i < n) {
    if (tokens[i].tag != PosTag::VERB) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && tokens[j].tag == PosTag::VERB) ++j;
    if (j < n && tokens[j].tag == PosTag::ADP) ++j;
    spans.push_back({i, j});
    i = j;
  }
  return spans;
}

/// Assigns indices and runs both chunkers.
inline TaggedCaption make_tagged(std::vector<Token> tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i].index = i;
  TaggedCaption out;
  out.noun_phrases = chunk_noun_phrases(tokens);
  out.verb_phrases = chunk_verb_phrases(tokens);
  out.tokens = std::move(tokens);
  return out;
}

/// Case-insensitive lexicon lookup. Words missing from the lexicon fall back
/// to NUM for numerals, VERB for auxiliaries and OTHER for everything else.
inline TaggedCaption tag_with_lexicon(const std::vector<std::string>& words,
                                      const Lexicon& lexicon) {
  std::vector<Token> tokens;
  tokens.reserve(words.size());
  for (const auto& w : words) {
    PosTag tag = PosTag::OTHER;
    if (auto hit = lexicon.find(w))
      tag = *hit;
    else if (is_punct_token(w))
      tag = PosTag::OTHER;
    else if (detail::is_numeral(w))
      tag = PosTag::NUM;
    else if (detail::is_auxiliary(to_lower(w)))
      tag = PosTag::VERB;
    tokens.push_back({w, tag, 0});
  }
  return make_tagged(std::move(tokens));
}

inline TaggedCaption tag_caption(std::string_view caption,
                                 const Lexicon& lexicon) {
  return tag_with_lexicon(tokenize(caption), lexicon);
}

/// Reads "token<TAB>tag" lines; a blank line closes a caption.
inline std::vector<TaggedCaption> parse_pretagged(std::istream& in) {
  std::vector<TaggedCaption> captions;
  std::vector<Token> current;
  std::string line;
  std::size_t lineno = 0;
  auto flush = [&] {
    if (!current.empty()) captions.push_back(make_tagged(std::move(current)));
    current.clear();
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError("expected token<TAB>tag", lineno);
    if (tab == 0) throw ParseError("empty token", lineno);
    const std::string_view tag_name = std::string_view(line).substr(tab + 1);
    auto tag = parse_tag(tag_name);
    if (!tag)
      throw ParseError("unknown tag '" + std::string(tag_name) + "'", lineno);
    current.push_back({line.substr(0, tab), *tag, 0});
  }
  flush();
  return captions;
}

}  // namespace aro::text
