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

/// \file perturb.hpp
/// Word-order perturbations of captions and constituent-swap negatives.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "aro/error.hpp"
#include "aro/rng.hpp"
#include "aro/text.hpp"

namespace aro::perturb {

using text::PosTag;
using text::Span;
using text::TaggedCaption;

enum class Strategy {
  ShuffleNounsAdj,
  ShuffleAllWords,
  ShuffleAllButNounsAdj,
  ShuffleTrigrams,
  ShuffleWithinTrigrams,
};

inline constexpr std::array<Strategy, 5> kAllStrategies = {
    Strategy::ShuffleNounsAdj, Strategy::ShuffleAllWords,
    Strategy::ShuffleAllButNounsAdj, Strategy::ShuffleTrigrams,
    Strategy::ShuffleWithinTrigrams};

/// The four alternatives of the order task, in task order.
inline constexpr std::array<Strategy, 4> kOrderTaskStrategies = {
    Strategy::ShuffleNounsAdj, Strategy::ShuffleAllButNounsAdj,
    Strategy::ShuffleTrigrams, Strategy::ShuffleWithinTrigrams};

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::ShuffleNounsAdj: return "shuffle_nouns_adj";
    case Strategy::ShuffleAllWords: return "shuffle_all_words";
    case Strategy::ShuffleAllButNounsAdj: return "shuffle_all_but_nouns_adj";
    case Strategy::ShuffleTrigrams: return "shuffle_trigrams";
    case Strategy::ShuffleWithinTrigrams: return "shuffle_within_trigrams";
  }
  return "";
}

inline std::optional<Strategy> parse_strategy(std::string_view name) {
  for (auto s : kAllStrategies)
    if (to_string(s) == name) return s;
  return std::nullopt;
}

struct Perturbed {
  std::vector<std::string> tokens;
  std::string text;  // single-space join of tokens
  bool degenerate = false;
};

namespace detail {

inline bool is_noun_or_adj(PosTag t) {
  return t == PosTag::NOUN || t == PosTag::ADJ;
}

inline void shuffle_positions(std::vector<std::string>& words,
                              const std::vector<std::size_t>& positions,
                              SplitMix64& rng) {
  std::vector<std::string> values;
  values.reserve(positions.size());
  for (auto p : positions) values.push_back(words[p]);
  fisher_yates(std::span(values), rng);
  for (std::size_t i = 0; i < positions.size(); ++i)
    words[positions[i]] = std::move(values[i]);
}

}  // namespace detail

/// Trigram partition of n tokens, left to right; the last group may be short.
inline std::vector<Span> trigram_groups(std::size_t n) {
  std::vector<Span> groups;
  for (std::size_t i = 0; i < n; i += 3) groups.push_back({i, std::min(n, i + 3)});
  return groups;
}

/// Number of units the strategy can move; fewer than two means no
/// permutation other than the identity exists.
inline std::size_t movable_units(const TaggedCaption& caption, Strategy s) {
  const std::size_t n = caption.size();
  std::size_t na = 0;
  for (const auto& t : caption.tokens) na += detail::is_noun_or_adj(t.tag);
  switch (s) {
    case Strategy::ShuffleNounsAdj: return na;
    case Strategy::ShuffleAllButNounsAdj: return n - na;
    case Strategy::ShuffleAllWords: return n;
    case Strategy::ShuffleTrigrams: return trigram_groups(n).size();
    case Strategy::ShuffleWithinTrigrams: return std::min<std::size_t>(n, 3);
  }
  return 0;
}

inline Perturbed perturb(const TaggedCaption& caption, Strategy strategy,
                         std::uint64_t seed) {
  if (caption.empty()) throw UsageError("perturb: empty caption");
  Perturbed out;
  out.tokens = caption.words();
  if (movable_units(caption, strategy) < 2) {
    out.degenerate = true;
    out.text = text::join_words(out.tokens);
    return out;
  }

  SplitMix64 rng(seed);
  auto& words = out.tokens;
  switch (strategy) {
    case Strategy::ShuffleNounsAdj:
    case Strategy::ShuffleAllButNounsAdj: {
      const bool want = strategy == Strategy::ShuffleNounsAdj;
      std::vector<std::size_t> positions;
      for (const auto& t : caption.tokens)
        if (detail::is_noun_or_adj(t.tag) == want) positions.push_back(t.index);
      detail::shuffle_positions(words, positions, rng);
      break;
    }
    case Strategy::ShuffleAllWords:
      fisher_yates(std::span(words), rng);
      break;
    case Strategy::ShuffleTrigrams: {
      auto groups = trigram_groups(words.size());
      fisher_yates(std::span(groups), rng);
      std::vector<std::string> reordered;
      reordered.reserve(words.size());
      for (const auto& g : groups)
        for (std::size_t i = g.begin; i < g.end; ++i)
          reordered.push_back(caption.tokens[i].text);
      words = std::move(reordered);
      break;
    }
    case Strategy::ShuffleWithinTrigrams:
      for (const auto& g : trigram_groups(words.size()))
        fisher_yates(std::span(words).subspan(g.begin, g.length()), rng);
      break;
  }
  out.text = text::join_words(out.tokens);
  return out;
}

// ---------------------------------------------------------------------------
// Negative captions

enum class SwapCategory { Noun, Adjective, Adverb, VerbPhrase, NounPhrase };

inline constexpr std::array<SwapCategory, 5> kAllSwapCategories = {
    SwapCategory::Noun, SwapCategory::Adjective, SwapCategory::Adverb,
    SwapCategory::VerbPhrase, SwapCategory::NounPhrase};

inline std::string_view to_string(SwapCategory c) {
  switch (c) {
    case SwapCategory::Noun: return "noun";
    case SwapCategory::Adjective: return "adjective";
    case SwapCategory::Adverb: return "adverb";
    case SwapCategory::VerbPhrase: return "verb_phrase";
    case SwapCategory::NounPhrase: return "noun_phrase";
  }
  return "";
}

inline std::optional<SwapCategory> parse_swap_category(std::string_view name) {
  for (auto c : kAllSwapCategories)
    if (to_string(c) == name) return c;
  return std::nullopt;
}

/// Noun phrases shorter than this are left to the single-noun swap.
inline constexpr std::size_t kMinSwappableNounPhrase = 3;

struct NegativeCaptionSet {
  std::string original;
  std::map<SwapCategory, std::string> negatives;

  /// Captions without any negative are dropped from training data.
  bool removable() const noexcept { return negatives.empty(); }
};

/// Units a category may swap, as token spans, left to right.
inline std::vector<Span> swap_units(const TaggedCaption& caption,
                                    SwapCategory category) {
  std::vector<Span> units;
  auto single = [&](PosTag tag) {
    for (const auto& t : caption.tokens)
      if (t.tag == tag) units.push_back({t.index, t.index + 1});
  };
  switch (category) {
    case SwapCategory::Noun: single(PosTag::NOUN); break;
    case SwapCategory::Adjective: single(PosTag::ADJ); break;
    case SwapCategory::Adverb: single(PosTag::ADV); break;
    case SwapCategory::VerbPhrase: units = caption.verb_phrases; break;
    case SwapCategory::NounPhrase:
      for (const auto& s : caption.noun_phrases)
        if (s.length() >= kMinSwappableNounPhrase) units.push_back(s);
      break;
  }
  return units;
}

/// Exchanges two non-overlapping spans (a before b); lengths may differ and
/// the tokens in between re-flow.
inline std::vector<std::string> swap_spans(const std::vector<std::string>& words,
                                           Span a, Span b) {
  if (b.begin < a.begin) std::swap(a, b);
  std::vector<std::string> out;
  out.reserve(words.size());
  auto append = [&](std::size_t from, std::size_t to) {
    out.insert(out.end(), words.begin() + from, words.begin() + to);
  };
  append(0, a.begin);
  append(b.begin, b.end);
  append(a.end, b.begin);
  append(a.begin, a.end);
  append(b.end, words.size());
  return out;
}

/// One negative per category with at least two units. The swapped pair is
/// the first unit and the unit at index count/2, which pairs parallel
/// constituents of coordinated clauses ("the man ... and the woman ...").
/// When that swap leaves the text unchanged (identical words), the first
/// pair in (i, j) order that changes it is used instead.
inline NegativeCaptionSet generate_negatives(const TaggedCaption& caption) {
  NegativeCaptionSet set;
  const auto words = caption.words();
  set.original = text::detokenize(words);
  for (auto category : kAllSwapCategories) {
    const auto units = swap_units(caption, category);
    if (units.size() < 2) continue;
    auto try_pair = [&](std::size_t i, std::size_t j) -> std::optional<std::string> {
      auto swapped = text::detokenize(swap_spans(words, units[i], units[j]));
      if (swapped == set.original) return std::nullopt;
      return swapped;
    };
    std::optional<std::string> negative = try_pair(0, units.size() / 2);
    for (std::size_t i = 0; !negative && i < units.size(); ++i)
      for (std::size_t j = i + 1; !negative && j < units.size(); ++j)
        negative = try_pair(i, j);
    if (negative) set.negatives.emplace(category, std::move(*negative));
  }
  return set;
}

/// Uniform choice over the present categories.
inline const std::string& sample_negative(const NegativeCaptionSet& set,
                                          std::uint64_t seed) {
  if (set.negatives.empty())
    throw DataError("sample_negative: caption has no negatives");
  SplitMix64 rng(seed);
  auto it = set.negatives.begin();
  std::advance(it, static_cast<std::ptrdiff_t>(rng.bounded(set.negatives.size())));
  return it->second;
}

// ---------------------------------------------------------------------------
// Order task

inline constexpr int kMaxOrderAttempts = 16;

struct OrderTask {
  std::string id;
  std::string image_id;
  std::string true_caption;
  std::array<std::string, 4> alternatives;
  std::array<bool, 4> degenerate{};
  std::uint64_t seed = 0;

  std::size_t usable_alternatives() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < 4; ++i)
      n += !degenerate[i] && alternatives[i] != true_caption;
    return n;
  }
};

/// Applies the four order-task strategies with sub-seeds derived from `seed`.
/// A strategy whose draw reproduces the original is redrawn, at most
/// kMaxOrderAttempts draws in total, and then flagged degenerate.
inline OrderTask build_order_task(const TaggedCaption& caption,
                                  std::uint64_t seed) {
  OrderTask task;
  task.seed = seed;
  task.true_caption = text::join_words(caption.words());
  for (std::size_t s = 0; s < kOrderTaskStrategies.size(); ++s) {
    const std::uint64_t strategy_seed = derive_seed(seed, s);
    task.alternatives[s] = task.true_caption;
    task.degenerate[s] = true;
    for (int attempt = 0; attempt < kMaxOrderAttempts; ++attempt) {
      auto p = perturb(caption, kOrderTaskStrategies[s],
                       derive_seed(strategy_seed, static_cast<std::uint64_t>(attempt)));
      if (p.degenerate) break;
      if (p.text != task.true_caption) {
        task.alternatives[s] = std::move(p.text);
        task.degenerate[s] = false;
        break;
      }
    }
  }
  return task;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json to_json(const NegativeCaptionSet& set) {
  nlohmann::ordered_json j;
  j["original"] = set.original;
  nlohmann::ordered_json negs = nlohmann::ordered_json::object();
  for (const auto& [cat, text] : set.negatives) negs[std::string(to_string(cat))] = text;
  j["negatives"] = std::move(negs);
  j["removable"] = set.removable();
  return j;
}

inline NegativeCaptionSet negatives_from_json(const nlohmann::json& j) {
  NegativeCaptionSet set;
  set.original = j.at("original").get<std::string>();
  for (const auto& [name, text] : j.at("negatives").items()) {
    auto cat = parse_swap_category(name);
    if (!cat) throw DataError("unknown swap category '" + name + "'");
    set.negatives.emplace(*cat, text.get<std::string>());
  }
  return set;
}

inline nlohmann::ordered_json to_json(const OrderTask& task) {
  nlohmann::ordered_json j;
  j["id"] = task.id;
  j["image_id"] = task.image_id;
  j["true_caption"] = task.true_caption;
  auto alts = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < 4; ++i) {
    nlohmann::ordered_json a;
    a["strategy"] = to_string(kOrderTaskStrategies[i]);
    a["caption"] = task.alternatives[i];
    a["degenerate"] = task.degenerate[i];
    alts.push_back(std::move(a));
  }
  j["alternatives"] = std::move(alts);
  j["seed"] = task.seed;
  return j;
}

inline OrderTask order_task_from_json(const nlohmann::json& j) {
  OrderTask task;
  task.id = j.value("id", "");
  task.image_id = j.at("image_id").get<std::string>();
  task.true_caption = j.at("true_caption").get<std::string>();
  task.seed = j.value<std::uint64_t>("seed", 0);
  const auto& alts = j.at("alternatives");
  if (!alts.is_array() || alts.size() != 4)
    throw DataError("order task needs exactly 4 alternatives");
  for (std::size_t i = 0; i < 4; ++i) {
    task.alternatives[i] = alts[i].at("caption").get<std::string>();
    task.degenerate[i] = alts[i].value("degenerate", false);
  }
  return task;
}

}  // namespace aro::perturb
