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

#include "aro/perturb.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

namespace aro::perturb {
namespace {

using text::Lexicon;
using text::Token;
using Words = std::vector<std::string>;

constexpr const char* kTableSentence = "remarkable scene with a blue ball behind a green chair";
constexpr const char* kNegSentence =
    "The man is eating the sandwich and the woman is watching the television";

const Lexicon& lexicon() {
  static const Lexicon lex = Lexicon::load(std::string(ARO_TEST_DATA) + "/table_lexicon.json");
  return lex;
}

TaggedCaption tagged(const std::string& s) { return text::tag_caption(s, lexicon()); }

TaggedCaption random_caption(SplitMix64& rng) {
  std::vector<Token> toks;
  const auto n = 1 + rng.bounded(14);
  for (std::uint64_t i = 0; i < n; ++i)
    toks.push_back({"w" + std::to_string(rng.bounded(6)),
                    static_cast<PosTag>(rng.bounded(text::kTagNames.size())), i});
  return text::make_tagged(std::move(toks));
}

std::multiset<std::string> bag(const Words& w) { return {w.begin(), w.end()}; }

TEST(PerturbTest, TableNounsAdjExampleIsReachable) {
  // Seed found by tests/oracle/pinned_rng.py.
  auto p = perturb(tagged(kTableSentence), Strategy::ShuffleNounsAdj, 2176);
  EXPECT_EQ(p.text, "green ball with a remarkable chair behind a blue scene");
  EXPECT_FALSE(p.degenerate);
}

TEST(PerturbTest, TableWithinTrigramExampleIsReachable) {
  auto p = perturb(tagged(kTableSentence), Strategy::ShuffleWithinTrigrams, 99);
  EXPECT_EQ(p.text, "scene with remarkable a ball blue a green behind chair");
}

TEST(PerturbTest, TableAllButNounsAdjExampleIsReachable) {
  const std::string want = "remarkable scene behind a blue ball with a green chair";
  const auto tc = tagged(kTableSentence);
  bool found = false;
  for (std::uint64_t seed = 0; seed < 5000 && !found; ++seed)
    found = perturb(tc, Strategy::ShuffleAllButNounsAdj, seed).text == want;
  EXPECT_TRUE(found);
}

TEST(PerturbTest, TrigramGroupOrderFollowsPinnedStream) {
  // Two groups; the single Fisher-Yates draw keeps them for seed 0 and swaps
  // them for seed 2 (values from the reference stream).
  const auto tc = text::tag_with_lexicon({"a", "b", "c", "d", "e", "f"}, Lexicon{});
  EXPECT_EQ(perturb(tc, Strategy::ShuffleTrigrams, 0).text, "a b c d e f");
  EXPECT_EQ(perturb(tc, Strategy::ShuffleTrigrams, 2).text, "d e f a b c");
  const auto seven = text::tag_with_lexicon({"a", "b", "c", "d", "e", "f", "g"}, Lexicon{});
  EXPECT_EQ(perturb(seven, Strategy::ShuffleTrigrams, 0).text, "d e f a b c g");
  EXPECT_EQ(perturb(seven, Strategy::ShuffleTrigrams, 2).text, "g d e f a b c");
}

TEST(PerturbTest, SingleTokenIsDegenerate) {
  const auto tc = tagged("ball");
  for (auto s : kAllStrategies) {
    auto p = perturb(tc, s, 5);
    EXPECT_TRUE(p.degenerate) << to_string(s);
    EXPECT_EQ(p.text, "ball");
  }
}

TEST(PerturbTest, EmptyCaptionIsRejected) {
  EXPECT_THROW(perturb(TaggedCaption{}, Strategy::ShuffleAllWords, 0), UsageError);
}

TEST(PerturbTest, StrategyNamesRoundTrip) {
  for (auto s : kAllStrategies) EXPECT_EQ(parse_strategy(to_string(s)), s);
  EXPECT_FALSE(parse_strategy("shuffle_everything").has_value());
}

TEST(PerturbPropertyTest, InvariantsHoldOnRandomCaptions) {
  SplitMix64 rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto tc = random_caption(rng);
    const auto words = tc.words();
    const auto groups = trigram_groups(words.size());
    for (auto s : kAllStrategies) {
      for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto p = perturb(tc, s, seed);
        ASSERT_EQ(bag(p.tokens), bag(words));
        EXPECT_EQ(p.text, text::join_words(p.tokens));
        if (s == Strategy::ShuffleNounsAdj || s == Strategy::ShuffleAllButNounsAdj) {
          const bool moving = s == Strategy::ShuffleNounsAdj;
          for (std::size_t i = 0; i < words.size(); ++i)
            if (detail::is_noun_or_adj(tc.tokens[i].tag) != moving) {
              EXPECT_EQ(p.tokens[i], words[i]);
            }
        }
        if (s == Strategy::ShuffleTrigrams) {
          const auto out = text::join_words(p.tokens);
          for (const auto& g : groups) {
            const Words piece(words.begin() + g.begin, words.begin() + g.end);
            EXPECT_NE((" " + out + " ").find(" " + text::join_words(piece) + " "),
                      std::string::npos);
          }
        }
        if (s == Strategy::ShuffleWithinTrigrams) {
          for (const auto& g : groups) {
            const Words a(words.begin() + g.begin, words.begin() + g.end);
            const Words b(p.tokens.begin() + g.begin, p.tokens.begin() + g.end);
            EXPECT_EQ(bag(a), bag(b));
          }
        }
      }
    }
  }
}

TEST(PerturbPropertyTest, DeterministicPerSeed) {
  const auto tc = tagged(kTableSentence);
  for (auto s : kAllStrategies)
    for (std::uint64_t seed = 0; seed < 20; ++seed)
      EXPECT_EQ(perturb(tc, s, seed).text, perturb(tc, s, seed).text);
}

TEST(NegativesTest, PaperSentenceNounAndVerbPhraseSwaps) {
  const auto set = generate_negatives(tagged(kNegSentence));
  EXPECT_EQ(set.original, kNegSentence);
  ASSERT_TRUE(set.negatives.count(SwapCategory::Noun));
  ASSERT_TRUE(set.negatives.count(SwapCategory::VerbPhrase));
  EXPECT_EQ(set.negatives.at(SwapCategory::Noun),
            "The woman is eating the sandwich and the man is watching the television");
  EXPECT_EQ(set.negatives.at(SwapCategory::VerbPhrase),
            "The man is watching the sandwich and the woman is eating the television");
  EXPECT_EQ(set.negatives.size(), 2u);
}

TEST(NegativesTest, NothingToSwapIsRemovable) {
  const auto set = generate_negatives(tagged("a dog"));
  EXPECT_TRUE(set.negatives.empty());
  EXPECT_TRUE(set.removable());
}

TEST(NegativesTest, NounPhrasesNeedThreeTokens) {
  // Two three-token phrases swap as whole spans; their nouns and adjectives
  // swap on their own as well.
  const auto set = generate_negatives(tagged("a blue ball with a green chair"));
  EXPECT_EQ(set.negatives.at(SwapCategory::NounPhrase), "a green chair with a blue ball");
  EXPECT_EQ(set.negatives.at(SwapCategory::Noun), "a blue chair with a green ball");
  EXPECT_EQ(set.negatives.at(SwapCategory::Adjective), "a green ball with a blue chair");
  EXPECT_FALSE(generate_negatives(tagged("the ball with the chair")).negatives.count(
      SwapCategory::NounPhrase));
}

TEST(NegativesTest, PhraseSwapReflowsUnequalSpans) {
  const Words w{"x", "a", "b", "c", "y", "d", "z"};
  EXPECT_EQ(swap_spans(w, {1, 4}, {5, 6}), (Words{"x", "d", "y", "a", "b", "c", "z"}));
  EXPECT_EQ(swap_spans(w, {5, 6}, {1, 4}), (Words{"x", "d", "y", "a", "b", "c", "z"}));
}

TEST(NegativesTest, IdenticalWordsFallBackToADifferentPair) {
  // Nouns: dog, dog, cat. The default pair (0, 1) is a no-op.
  Lexicon lex{{"dog", PosTag::NOUN}, {"cat", PosTag::NOUN}};
  const auto set = generate_negatives(text::tag_caption("dog dog cat", lex));
  EXPECT_EQ(set.negatives.at(SwapCategory::Noun), "cat dog dog");
}

TEST(NegativesPropertyTest, SwapsPreserveLengthAndTouchTwoPositions) {
  SplitMix64 rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    auto tc = random_caption(rng);
    const auto words = tc.words();
    const auto set = generate_negatives(tc);
    EXPECT_LE(set.negatives.size(), 5u);
    for (const auto& [cat, neg] : set.negatives) {
      EXPECT_NE(neg, set.original);
      const auto toks = text::tokenize(neg);
      ASSERT_EQ(toks.size(), words.size());
      EXPECT_EQ(bag(toks), bag(words));
      if (cat == SwapCategory::Noun || cat == SwapCategory::Adjective ||
          cat == SwapCategory::Adverb) {
        std::size_t diff = 0;
        for (std::size_t i = 0; i < toks.size(); ++i) diff += toks[i] != words[i];
        EXPECT_EQ(diff, 2u);
      }
    }
  }
}

TEST(SampleNegativeTest, SingletonEmptyAndUniform) {
  NegativeCaptionSet one{"x", {{SwapCategory::Adverb, "only"}}};
  EXPECT_EQ(sample_negative(one, 123), "only");
  EXPECT_THROW(sample_negative(NegativeCaptionSet{}, 0), DataError);

  NegativeCaptionSet five{"x", {}};
  for (auto c : kAllSwapCategories) five.negatives[c] = std::string(to_string(c));
  std::map<std::string, int> counts;
  constexpr int kDraws = 10000;
  for (int s = 0; s < kDraws; ++s) ++counts[sample_negative(five, static_cast<std::uint64_t>(s))];
  ASSERT_EQ(counts.size(), 5u);
  for (const auto& [_, c] : counts) EXPECT_NEAR(c / double(kDraws), 0.2, 0.02);
}

TEST(OrderTaskTest, TableSentenceGivesFourDistinctAlternatives) {
  const auto task = build_order_task(tagged(kTableSentence), 0);
  std::set<std::string> alts;
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_FALSE(task.degenerate[i]);
    EXPECT_NE(task.alternatives[i], task.true_caption);
    alts.insert(task.alternatives[i]);
  }
  EXPECT_EQ(alts.size(), 4u);
  EXPECT_EQ(task.usable_alternatives(), 4u);
}

TEST(OrderTaskTest, RepeatedTokensAreDegenerateEverywhere) {
  Lexicon lex{{"a", PosTag::NOUN}};
  const auto task = build_order_task(text::tag_caption("a a a a", lex), 9);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_TRUE(task.degenerate[i]);
    EXPECT_EQ(task.alternatives[i], task.true_caption);
  }
  EXPECT_EQ(task.usable_alternatives(), 0u);
}

TEST(OrderTaskTest, SameSeedSameTask) {
  const auto a = build_order_task(tagged(kTableSentence), 17);
  const auto b = build_order_task(tagged(kTableSentence), 17);
  EXPECT_EQ(a.alternatives, b.alternatives);
  EXPECT_EQ(a.degenerate, b.degenerate);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(OrderTaskTest, JsonRoundTrip) {
  auto t = build_order_task(tagged(kTableSentence), 4);
  t.id = "c1";
  t.image_id = "img1";
  const auto back = order_task_from_json(nlohmann::json::parse(to_json(t).dump()));
  EXPECT_EQ(back.alternatives, t.alternatives);
  EXPECT_EQ(back.degenerate, t.degenerate);
  EXPECT_EQ(back.image_id, "img1");
  EXPECT_EQ(back.seed, 4u);
}

}  // namespace
}  // namespace aro::perturb
