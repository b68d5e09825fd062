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

#include "aro/scene.hpp"

#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "aro/rng.hpp"

namespace aro::scene {
namespace {

std::vector<std::string> read_lines(const std::string& name) {
  std::ifstream in(std::string(ARO_TEST_DATA) + "/" + name);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  return lines;
}

SceneObject obj(std::string id, std::string cat, BBox b, std::vector<std::string> attrs = {}) {
  return {std::move(id), std::move(cat), b, std::move(attrs)};
}

SceneGraph square(std::int64_t side, std::vector<SceneObject> objects,
                  std::vector<RelationEdge> relations = {}) {
  return {"img", side, side, std::move(objects), std::move(relations)};
}

TEST(FilterTest, QuarterThresholdKeepsEquality) {
  EXPECT_EQ(filter_candidate_objects(square(400, {obj("a", "x", {0, 0, 100, 100})})),
            (std::vector<std::string>{"a"}));
  EXPECT_TRUE(filter_candidate_objects(square(400, {obj("a", "x", {0, 0, 99, 300})})).empty());
  EXPECT_EQ(filter_candidate_objects(square(100, {obj("a", "x", {0, 0, 25, 25}),
                                                  obj("b", "y", {0, 0, 30, 10})})),
            (std::vector<std::string>{"a"}));
}

TEST(BBoxTest, Hull) {
  EXPECT_EQ(smallest_enclosing_bbox({10, 10, 20, 20}, {30, 5, 40, 15}), (BBox{10, 5, 60, 25}));
  const BBox b{3, 4, 5, 6};
  EXPECT_EQ(smallest_enclosing_bbox(b, b), b);
  EXPECT_EQ(smallest_enclosing_bbox({0, 0, 100, 100}, {10, 10, 5, 5}), (BBox{0, 0, 100, 100}));
}

TEST(BBoxTest, ClampToFrame) {
  EXPECT_EQ(clamp_to({-5, 10, 50, 200}, {0, 0, 100, 100}), (BBox{0, 10, 45, 90}));
}

TEST(TemplateTest, RelationCaptions) {
  EXPECT_EQ(render_relation_captions("man", "eating", "sandwich"),
            std::make_pair(std::string("the man is eating the sandwich"),
                           std::string("the sandwich is eating the man")));
  EXPECT_EQ(render_relation_captions("horse", "eating", "grass").first,
            "the horse is eating the grass");
  const auto same = render_relation_captions("a", "r", "a");
  EXPECT_EQ(same.first, same.second);
}

TEST(TemplateTest, AttributionCaptions) {
  EXPECT_EQ(render_attribution_captions("crouched", "man", "open", "door"),
            std::make_pair(std::string("the crouched man and the open door"),
                           std::string("the open man and the crouched door")));
  EXPECT_EQ(render_attribution_captions("Black", "jacket", "blue", "Sky"),
            std::make_pair(std::string("the black jacket and the blue sky"),
                           std::string("the blue jacket and the black sky")));
  EXPECT_THROW(render_attribution_captions("red", "a", "red", "b"), UsageError);
  EXPECT_THROW(render_attribution_captions("red", "a", "blue", "a"), UsageError);
}

TEST(RelationCasesTest, FiveObjectSceneGivesOneCase) {
  const auto g = square(400, {obj("1", "man", {0, 0, 200, 200}),
                              obj("2", "horse", {150, 150, 250, 250}),
                              obj("3", "cup", {0, 0, 10, 10}), obj("4", "hat", {5, 5, 20, 20}),
                              obj("5", "tree", {300, 0, 90, 90})},
                        {{"1", "2", "riding"}, {"3", "4", "under"}, {"1", "5", "behind"}});
  const auto cases = enumerate_relation_cases(g, default_symmetric_blocklist());
  ASSERT_EQ(cases.size(), 1u);
  EXPECT_EQ(cases[0].true_caption, "the man is riding the horse");
  EXPECT_EQ(cases[0].false_captions, (std::vector<std::string>{"the horse is riding the man"}));
  EXPECT_EQ(cases[0].crop, (BBox{0, 0, 400, 400}));
  EXPECT_EQ(cases[0].group_key, "riding");
}

TEST(RelationCasesTest, BlocklistAndSameCategory) {
  const auto g = square(100, {obj("a", "dog", {0, 0, 50, 50}), obj("b", "dog", {50, 50, 50, 50}),
                              obj("c", "cat", {0, 50, 50, 50})},
                        {{"a", "c", "next to"}, {"a", "b", "chasing"}, {"c", "a", "Near"}});
  EXPECT_TRUE(enumerate_relation_cases(g, default_symmetric_blocklist()).empty());
  EXPECT_EQ(enumerate_relation_cases(g, {}).size(), 2u);
}

TEST(RelationCasesTest, ConfiguredBlocklist) {
  const auto bl = symmetric_blocklist({"Touching"}, {{"beside", "beside"}, {"above", "below"}});
  EXPECT_TRUE(bl.count("near"));
  EXPECT_TRUE(bl.count("next to"));
  EXPECT_TRUE(bl.count("touching"));
  EXPECT_TRUE(bl.count("beside"));
  EXPECT_FALSE(bl.count("above"));
}

TEST(AttributionCasesTest, GrayElephantWoodTable) {
  const auto g = square(100, {obj("e", "elephant", {0, 0, 60, 60}, {"gray"}),
                              obj("t", "table", {40, 40, 60, 60}, {"wood"})});
  const auto cases = enumerate_attribution_cases(g);
  ASSERT_EQ(cases.size(), 1u);
  EXPECT_EQ(cases[0].group_key, "gray|wood");
  EXPECT_EQ(cases[0].true_caption, "the gray elephant and the wood table");
  EXPECT_EQ(cases[0].task_kind, TaskKind::Attribution);
}

TEST(AttributionCasesTest, SharedAttributeOnlyIsExcluded) {
  const auto g = square(100, {obj("a", "cat", {0, 0, 50, 50}, {"white"}),
                              obj("b", "plate", {50, 50, 50, 50}, {"White"})});
  EXPECT_TRUE(enumerate_attribution_cases(g).empty());
}

TEST(AttributionCasesTest, ThreeDistinctObjectsGiveThreeCases) {
  const auto g = square(90, {obj("a", "cat", {0, 0, 30, 30}, {"black"}),
                             obj("b", "sofa", {30, 30, 30, 30}, {"red"}),
                             obj("c", "lamp", {60, 60, 30, 30}, {"tall"})});
  const auto cases = enumerate_attribution_cases(g);
  ASSERT_EQ(cases.size(), 3u);
  EXPECT_EQ(cases[0].group_key, "black|red");
  EXPECT_EQ(cases[1].group_key, "black|tall");
  EXPECT_EQ(cases[2].group_key, "red|tall");
}

TEST(MinerFixtureTest, SixObjectSceneMatchesHandEnumeration) {
  const auto g = scene_from_json(nlohmann::json::parse(read_lines("miner_scene.jsonl").at(0)));
  std::vector<AroTestCase> expected;
  for (const auto& line : read_lines("miner_expected.jsonl"))
    expected.push_back(case_from_json(nlohmann::json::parse(line)));
  ASSERT_EQ(expected.size(), 12u);
  const std::vector<AroTestCase> rel(expected.begin(), expected.begin() + 3);
  const std::vector<AroTestCase> attr(expected.begin() + 3, expected.end());
  EXPECT_EQ(enumerate_relation_cases(g, default_symmetric_blocklist()), rel);
  EXPECT_EQ(enumerate_attribution_cases(g), attr);
}

TEST(SceneJsonTest, RejectsBrokenGraphs) {
  auto bad = [](const char* s) { return scene_from_json(nlohmann::json::parse(s)); };
  EXPECT_THROW(bad(R"({"image_id":"x","image_width":0,"image_height":5,"objects":[]})"),
               DataError);
  EXPECT_THROW(bad(R"({"image_id":"x","image_width":5,"image_height":5,
      "objects":[{"object_id":"a","category":"c","bbox":[0,0,6,1]}]})"),
               DataError);
  EXPECT_THROW(bad(R"({"image_id":"x","image_width":5,"image_height":5,
      "objects":[{"object_id":"a","category":"c","bbox":[0,0,1,1]}],
      "relations":[{"subject_id":"a","object_id":"a","predicate":"on"}]})"),
               DataError);
  EXPECT_THROW(bad(R"({"image_id":"x","image_width":5,"image_height":5,
      "objects":[{"object_id":"a","category":"c","bbox":[0,0,1]}]})"),
               DataError);
  EXPECT_THROW(bad(R"({"image_id":"x","image_height":5,"objects":[]})"), DataError);
}

TEST(CaseJsonTest, RoundTripAndInvariants) {
  AroTestCase c{"i", {1, 2, 3, 4}, "yes", {"no"}, TaskKind::Relation, "on"};
  EXPECT_EQ(case_from_json(nlohmann::json::parse(to_json(c).dump())), c);
  EXPECT_EQ(c.crop_key(), "i#1,2,3,4");
  auto j = to_json(c);
  j["false_captions"] = {"yes"};
  EXPECT_THROW(case_from_json(nlohmann::json::parse(j.dump())), DataError);
  j["false_captions"] = nlohmann::json::array();
  EXPECT_THROW(case_from_json(nlohmann::json::parse(j.dump())), DataError);
}

TEST(RelationSetsTest, SpatialAndVerbPartitionsAreDisjoint) {
  EXPECT_EQ(spatial_relations().size() + verb_relations().size(), 45u);
  for (const auto& p : spatial_relations()) EXPECT_FALSE(verb_relations().count(p));
}

TEST(MinerPropertyTest, CropsContainConstituentsAndStayInFrame) {
  SplitMix64 rng(5);
  const std::vector<std::string> cats{"dog", "cat", "man", "tree"};
  const std::vector<std::string> preds{"on", "near", "next to", "holding", "under"};
  for (int trial = 0; trial < 300; ++trial) {
    SceneGraph g{"s" + std::to_string(trial), 20 + std::int64_t(rng.bounded(200)),
                 20 + std::int64_t(rng.bounded(200)), {}, {}};
    const auto n = 2 + rng.bounded(6);
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto w = 1 + std::int64_t(rng.bounded(std::uint64_t(g.image_width)));
      const auto h = 1 + std::int64_t(rng.bounded(std::uint64_t(g.image_height)));
      const auto x = std::int64_t(rng.bounded(std::uint64_t(g.image_width - w + 1)));
      const auto y = std::int64_t(rng.bounded(std::uint64_t(g.image_height - h + 1)));
      g.objects.push_back(obj(std::to_string(i), cats[rng.bounded(cats.size())], {x, y, w, h},
                              {"a" + std::to_string(rng.bounded(3))}));
    }
    for (std::uint64_t e = 0; e < n; ++e) {
      const auto s = rng.bounded(n), o = rng.bounded(n);
      if (s != o)
        g.relations.push_back(
            {std::to_string(s), std::to_string(o), preds[rng.bounded(preds.size())]});
    }
    validate(g);
    const auto bl = default_symmetric_blocklist();
    const auto rel = enumerate_relation_cases(g, bl);
    EXPECT_EQ(rel, enumerate_relation_cases(g, bl));
    auto all = rel;
    for (auto& c : enumerate_attribution_cases(g)) all.push_back(c);
    for (const auto& c : all) {
      EXPECT_TRUE(g.frame().contains(c.crop));
      EXPECT_NE(c.true_caption, c.false_captions.at(0));
      if (c.task_kind == TaskKind::Relation) {
        EXPECT_FALSE(bl.count(c.group_key));
      }
    }
    for (const auto& r : g.relations) {
      const auto& s = g.objects[std::stoul(r.subject_id)];
      const auto& o = g.objects[std::stoul(r.object_id)];
      for (const auto& c : rel)
        if (c.true_caption == render_relation_captions(s.category, r.predicate, o.category).first) {
          EXPECT_NE(s.category, o.category);
        }
    }
    for (const auto& c : rel) {
      bool covered = false;
      for (const auto& r : g.relations) {
        const auto& s = g.objects[std::stoul(r.subject_id)];
        const auto& o = g.objects[std::stoul(r.object_id)];
        covered |= c.crop.contains(s.bbox) && c.crop.contains(o.bbox);
      }
      EXPECT_TRUE(covered);
    }
  }
}

}  // namespace
}  // namespace aro::scene
