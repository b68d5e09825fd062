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

#include "aro/text.hpp"

#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "aro/rng.hpp"

namespace aro::text {
namespace {

using Words = std::vector<std::string>;

Lexicon table_lexicon() { return Lexicon::load(std::string(ARO_TEST_DATA) + "/table_lexicon.json"); }

std::vector<Token> tokens_with(std::initializer_list<PosTag> tags) {
  std::vector<Token> out;
  for (auto t : tags) out.push_back({"w" + std::to_string(out.size()), t, out.size()});
  return out;
}

TEST(TokenizeTest, DetachesTerminalPunctuation) {
  EXPECT_EQ(tokenize("A dog runs."), (Words{"A", "dog", "runs", "."}));
  EXPECT_EQ(tokenize("Wait, what?!"), (Words{"Wait", ",", "what", "?", "!"}));
}

TEST(TokenizeTest, EmptyAndWhitespace) {
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize("   \t\n").empty());
}

TEST(TokenizeTest, HyphenatedWordsStayWhole) {
  EXPECT_EQ(tokenize("blue-green ball"), (Words{"blue-green", "ball"}));
}

TEST(TokenizeTest, PreservesCase) { EXPECT_EQ(tokenize("The Man"), (Words{"The", "Man"})); }

TEST(TokenizeTest, DetokenizeRoundTripsNormalizedText) {
  // Random captions over words, punctuation and irregular spacing; the round
  // trip must equal the single-space form with punctuation glued left.
  const std::vector<std::string> vocab = {"dog", "a", "blue-green", "Man", "ran", "x1"};
  const std::string punct = ".,!?;:";
  SplitMix64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::string raw, expected;
    const auto n = 1 + rng.bounded(8);
    for (std::uint64_t i = 0; i < n; ++i) {
      raw += std::string(1 + rng.bounded(3), ' ');
      const auto& w = vocab[rng.bounded(vocab.size())];
      raw += w;
      if (!expected.empty()) expected += ' ';
      expected += w;
      if (rng.bounded(3) == 0) {
        const char p = punct[rng.bounded(punct.size())];
        raw += p;
        expected += p;
      }
    }
    raw += std::string(rng.bounded(3), ' ');
    EXPECT_EQ(detokenize(tokenize(raw)), expected) << raw;
  }
}

TEST(TagTest, LexiconLookup) {
  Lexicon lex{{"the", PosTag::DET}, {"blue", PosTag::ADJ}, {"ball", PosTag::NOUN}};
  auto tc = tag_with_lexicon({"the", "blue", "ball"}, lex);
  EXPECT_EQ(tc.tags(), (std::vector<PosTag>{PosTag::DET, PosTag::ADJ, PosTag::NOUN}));
  for (std::size_t i = 0; i < tc.size(); ++i) EXPECT_EQ(tc.tokens[i].index, i);
}

TEST(TagTest, CaseInsensitiveAndUnknown) {
  Lexicon lex{{"ball", PosTag::NOUN}};
  auto tc = tag_with_lexicon({"BALL", "zorp"}, lex);
  EXPECT_EQ(tc.tokens[0].tag, PosTag::NOUN);
  EXPECT_EQ(tc.tokens[1].tag, PosTag::OTHER);
  EXPECT_EQ(tc.tokens[1].text, "zorp");
}

TEST(TagTest, FallbacksForNumeralsAuxiliariesPunctuation) {
  auto tc = tag_with_lexicon({"3", "dogs", "are", "."}, Lexicon{});
  EXPECT_EQ(tc.tags(),
            (std::vector<PosTag>{PosTag::NUM, PosTag::OTHER, PosTag::VERB, PosTag::OTHER}));
}

TEST(TagTest, TableSentenceWithShippedLexicon) {
  // Hand tags: remarkable/ADJ scene/NOUN with/ADP a/DET blue/ADJ ball/NOUN
  // behind/ADP a/DET green/ADJ chair/NOUN.
  auto tc = tag_caption("remarkable scene with a blue ball behind a green chair", table_lexicon());
  using P = PosTag;
  EXPECT_EQ(tc.tags(), (std::vector<PosTag>{P::ADJ, P::NOUN, P::ADP, P::DET, P::ADJ, P::NOUN,
                                            P::ADP, P::DET, P::ADJ, P::NOUN}));
  EXPECT_EQ(tc.noun_phrases, (std::vector<Span>{{0, 2}, {3, 6}, {7, 10}}));
  EXPECT_TRUE(tc.verb_phrases.empty());
}

TEST(TagTest, LexiconRejectsUnknownTag) {
  EXPECT_THROW(Lexicon::from_json(nlohmann::json{{"dog", "NOUNX"}}), DataError);
  EXPECT_THROW(Lexicon::from_json(nlohmann::json::array()), DataError);
}

TEST(PretaggedTest, SingleToken) {
  std::istringstream in("dog\tNOUN\n");
  auto caps = parse_pretagged(in);
  ASSERT_EQ(caps.size(), 1u);
  ASSERT_EQ(caps[0].size(), 1u);
  EXPECT_EQ(caps[0].tokens[0].text, "dog");
  EXPECT_EQ(caps[0].tokens[0].tag, PosTag::NOUN);
  EXPECT_EQ(caps[0].noun_phrases, (std::vector<Span>{{0, 1}}));
}

TEST(PretaggedTest, UnknownTagReportsLine) {
  std::istringstream in("the\tDET\ndog\tNOUNX");
  try {
    parse_pretagged(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(PretaggedTest, MalformedLine) {
  std::istringstream in("dog NOUN\n");
  EXPECT_THROW(parse_pretagged(in), ParseError);
  std::istringstream empty_token("\tNOUN\n");
  EXPECT_THROW(parse_pretagged(empty_token), ParseError);
}

TEST(PretaggedTest, BlankLinesSeparateCaptions) {
  std::istringstream in("a\tDET\ndog\tNOUN\n\n\nis\tVERB\nsitting\tVERB\non\tADP\n");
  auto caps = parse_pretagged(in);
  ASSERT_EQ(caps.size(), 2u);
  EXPECT_EQ(caps[0].words(), (Words{"a", "dog"}));
  EXPECT_EQ(caps[1].verb_phrases, (std::vector<Span>{{0, 3}}));
}

TEST(ChunkTest, NounPhrases) {
  using P = PosTag;
  EXPECT_EQ(chunk_noun_phrases(tokens_with({P::DET, P::ADJ, P::NOUN})), (std::vector<Span>{{0, 3}}));
  EXPECT_EQ(chunk_noun_phrases(tokens_with({P::NOUN})), (std::vector<Span>{{0, 1}}));
  EXPECT_EQ(chunk_noun_phrases(tokens_with({P::DET, P::NOUN, P::ADP, P::DET, P::NOUN})),
            (std::vector<Span>{{0, 2}, {3, 5}}));
  // Compound nouns extend the phrase; a dangling determiner does not start one.
  EXPECT_EQ(chunk_noun_phrases(tokens_with({P::DET, P::VERB, P::NOUN, P::NOUN})),
            (std::vector<Span>{{2, 4}}));
}

TEST(ChunkTest, VerbPhrases) {
  using P = PosTag;
  EXPECT_EQ(chunk_verb_phrases(tokens_with({P::VERB, P::VERB})), (std::vector<Span>{{0, 2}}));
  EXPECT_EQ(chunk_verb_phrases(tokens_with({P::VERB, P::ADP})), (std::vector<Span>{{0, 2}}));
  EXPECT_TRUE(chunk_verb_phrases(tokens_with({P::DET, P::NOUN})).empty());
}

TEST(ChunkTest, SpansNeverOverlapAndStayInBounds) {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<Token> toks;
    const auto n = rng.bounded(15);
    for (std::uint64_t i = 0; i < n; ++i)
      toks.push_back({"t", static_cast<PosTag>(rng.bounded(kTagNames.size())), i});
    for (const auto& spans : {chunk_noun_phrases(toks), chunk_verb_phrases(toks)}) {
      std::size_t prev_end = 0;
      for (const auto& s : spans) {
        EXPECT_LT(s.begin, s.end);
        EXPECT_LE(s.end, toks.size());
        EXPECT_GE(s.begin, prev_end);
        prev_end = s.end;
      }
    }
  }
}

TEST(TagTest, Deterministic) {
  const auto lex = table_lexicon();
  const auto a = tag_caption("the man is eating the sandwich", lex);
  const auto b = tag_caption("the man is eating the sandwich", lex);
  EXPECT_EQ(a.tags(), b.tags());
  EXPECT_EQ(a.noun_phrases, b.noun_phrases);
  EXPECT_EQ(a.verb_phrases, b.verb_phrases);
}

}  // namespace
}  // namespace aro::text
