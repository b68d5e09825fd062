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

/// \file scene.hpp
/// Mining relation and attribution probes from annotated scene graphs.
///
/// Objects qualify when both sides are at least a quarter of the image side.
/// A relation edge between two qualifying objects of different categories
/// yields "the S is P the O" against the swapped "the O is P the S". A pair
/// of qualifying, attributed objects of different categories yields
/// "the A1 O1 and the A2 O2" against "the A2 O1 and the A1 O2". The crop is
/// the tightest box around both objects.

#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "aro/error.hpp"
#include "aro/text.hpp"

namespace aro::scene {

struct BBox {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t w = 0;
  std::int64_t h = 0;

  std::int64_t right() const noexcept { return x + w; }
  std::int64_t bottom() const noexcept { return y + h; }
  bool contains(const BBox& o) const noexcept {
    return o.x >= x && o.y >= y && o.right() <= right() && o.bottom() <= bottom();
  }
  friend auto operator<=>(const BBox&, const BBox&) = default;
};

struct SceneObject {
  std::string object_id;
  std::string category;
  BBox bbox;
  std::vector<std::string> attributes;
};

struct RelationEdge {
  std::string subject_id;
  std::string object_id;
  std::string predicate;
};

struct SceneGraph {
  std::string image_id;
  std::int64_t image_width = 0;
  std::int64_t image_height = 0;
  std::vector<SceneObject> objects;
  std::vector<RelationEdge> relations;

  BBox frame() const noexcept { return {0, 0, image_width, image_height}; }
};

enum class TaskKind { Relation, Attribution, Order };

inline std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::Relation: return "relation";
    case TaskKind::Attribution: return "attribution";
    case TaskKind::Order: return "order";
  }
  return "";
}

inline TaskKind parse_task_kind(std::string_view s) {
  if (s == "relation") return TaskKind::Relation;
  if (s == "attribution") return TaskKind::Attribution;
  if (s == "order") return TaskKind::Order;
  throw DataError("unknown task kind '" + std::string(s) + "'");
}

struct AroTestCase {
  std::string image_id;
  BBox crop;
  std::string true_caption;
  std::vector<std::string> false_captions;
  TaskKind task_kind = TaskKind::Relation;
  std::string group_key;

  /// Key of the cropped image in an image embedding set.
  std::string crop_key() const {
    return image_id + "#" + std::to_string(crop.x) + "," + std::to_string(crop.y) +
           "," + std::to_string(crop.w) + "," + std::to_string(crop.h);
  }

  friend bool operator==(const AroTestCase&, const AroTestCase&) = default;
};

/// Throws DataError when the graph breaks its invariants.
inline void validate(const SceneGraph& g) {
  if (g.image_width <= 0 || g.image_height <= 0)
    throw DataError("scene " + g.image_id + ": non-positive image size");
  std::set<std::string> ids;
  for (const auto& o : g.objects) {
    if (!ids.insert(o.object_id).second)
      throw DataError("scene " + g.image_id + ": duplicate object id " + o.object_id);
    if (o.bbox.w <= 0 || o.bbox.h <= 0)
      throw DataError("scene " + g.image_id + ": object " + o.object_id +
                      " has an empty box");
    if (!g.frame().contains(o.bbox))
      throw DataError("scene " + g.image_id + ": object " + o.object_id +
                      " lies outside the image");
  }
  for (const auto& r : g.relations) {
    if (r.subject_id == r.object_id)
      throw DataError("scene " + g.image_id + ": self relation on " + r.subject_id);
    if (!ids.count(r.subject_id) || !ids.count(r.object_id))
      throw DataError("scene " + g.image_id + ": relation references unknown object");
  }
}

/// Objects whose width and height are each at least a quarter of the image's
/// (strictly smaller is discarded; equality is kept).
inline std::vector<std::string> filter_candidate_objects(const SceneGraph& g) {
  std::vector<std::string> kept;
  for (const auto& o : g.objects)
    if (4 * o.bbox.w >= g.image_width && 4 * o.bbox.h >= g.image_height)
      kept.push_back(o.object_id);
  return kept;
}

inline BBox smallest_enclosing_bbox(const BBox& a, const BBox& b) {
  const auto x0 = std::min(a.x, b.x);
  const auto y0 = std::min(a.y, b.y);
  const auto x1 = std::max(a.right(), b.right());
  const auto y1 = std::max(a.bottom(), b.bottom());
  return {x0, y0, x1 - x0, y1 - y0};
}

inline BBox clamp_to(const BBox& b, const BBox& frame) {
  const auto x0 = std::clamp(b.x, frame.x, frame.right());
  const auto y0 = std::clamp(b.y, frame.y, frame.bottom());
  const auto x1 = std::clamp(b.right(), frame.x, frame.right());
  const auto y1 = std::clamp(b.bottom(), frame.y, frame.bottom());
  return {x0, y0, x1 - x0, y1 - y0};
}

inline std::pair<std::string, std::string> render_relation_captions(
    std::string_view subject, std::string_view predicate, std::string_view object) {
  const auto s = text::to_lower(subject);
  const auto p = text::to_lower(predicate);
  const auto o = text::to_lower(object);
  return {"the " + s + " is " + p + " the " + o, "the " + o + " is " + p + " the " + s};
}

inline std::pair<std::string, std::string> render_attribution_captions(
    std::string_view attr1, std::string_view obj1, std::string_view attr2,
    std::string_view obj2) {
  const auto a1 = text::to_lower(attr1);
  const auto a2 = text::to_lower(attr2);
  const auto o1 = text::to_lower(obj1);
  const auto o2 = text::to_lower(obj2);
  if (a1 == a2) throw UsageError("attribution captions need distinct attributes");
  if (o1 == o2) throw UsageError("attribution captions need distinct objects");
  return {"the " + a1 + " " + o1 + " and the " + a2 + " " + o2,
          "the " + a2 + " " + o1 + " and the " + a1 + " " + o2};
}

/// Predicates whose swap does not change meaning.
inline std::set<std::string> default_symmetric_blocklist() { return {"near", "next to"}; }

/// Default blocklist plus configured predicates and any predicate listed as
/// its own inverse.
inline std::set<std::string> symmetric_blocklist(
    const std::vector<std::string>& extra,
    const std::vector<std::pair<std::string, std::string>>& inverses = {}) {
  auto out = default_symmetric_blocklist();
  for (const auto& p : extra) out.insert(text::to_lower(p));
  for (const auto& [p, inv] : inverses)
    if (text::to_lower(p) == text::to_lower(inv)) out.insert(text::to_lower(p));
  return out;
}

/// Canonical output order: (image_id, group_key, crop, captions).
inline void sort_cases(std::vector<AroTestCase>& cases) {
  std::sort(cases.begin(), cases.end(), [](const AroTestCase& a, const AroTestCase& b) {
    return std::tie(a.image_id, a.group_key, a.crop, a.true_caption, a.false_captions) <
           std::tie(b.image_id, b.group_key, b.crop, b.true_caption, b.false_captions);
  });
}

namespace detail {

inline std::unordered_map<std::string, const SceneObject*> candidates_by_id(
    const SceneGraph& g) {
  std::unordered_map<std::string, const SceneObject*> byid;
  for (const auto& o : g.objects) byid.emplace(o.object_id, &o);
  std::unordered_map<std::string, const SceneObject*> out;
  for (const auto& id : filter_candidate_objects(g)) out.emplace(id, byid.at(id));
  return out;
}

}  // namespace detail

/// Edges (A,r,B) and (B,r,A) are both emitted when both are annotated.
inline std::vector<AroTestCase> enumerate_relation_cases(
    const SceneGraph& g, const std::set<std::string>& blocklist) {
  const auto cand = detail::candidates_by_id(g);
  std::vector<AroTestCase> cases;
  for (const auto& r : g.relations) {
    const auto predicate = text::to_lower(r.predicate);
    if (blocklist.count(predicate)) continue;
    auto s = cand.find(r.subject_id);
    auto o = cand.find(r.object_id);
    if (s == cand.end() || o == cand.end()) continue;
    if (text::to_lower(s->second->category) == text::to_lower(o->second->category))
      continue;
    auto [yes, no] = render_relation_captions(s->second->category, predicate,
                                              o->second->category);
    AroTestCase c;
    c.image_id = g.image_id;
    c.crop = clamp_to(smallest_enclosing_bbox(s->second->bbox, o->second->bbox), g.frame());
    c.true_caption = std::move(yes);
    c.false_captions = {std::move(no)};
    c.task_kind = TaskKind::Relation;
    c.group_key = predicate;
    cases.push_back(std::move(c));
  }
  sort_cases(cases);
  return cases;
}

/// One case per (object pair, attribute pair) combination; the earlier object
/// in annotation order takes the first slot of the template.
inline std::vector<AroTestCase> enumerate_attribution_cases(const SceneGraph& g) {
  const auto cand = detail::candidates_by_id(g);
  std::vector<const SceneObject*> objs;
  for (const auto& o : g.objects)
    if (cand.count(o.object_id) && !o.attributes.empty()) objs.push_back(&o);

  std::vector<AroTestCase> cases;
  std::set<std::tuple<std::string, std::string, std::string, std::string>> seen;
  for (std::size_t i = 0; i < objs.size(); ++i) {
    for (std::size_t j = i + 1; j < objs.size(); ++j) {
      const auto& a = *objs[i];
      const auto& b = *objs[j];
      if (text::to_lower(a.category) == text::to_lower(b.category)) continue;
      for (const auto& raw1 : a.attributes) {
        for (const auto& raw2 : b.attributes) {
          const auto a1 = text::to_lower(raw1);
          const auto a2 = text::to_lower(raw2);
          if (a1 == a2) continue;
          const auto& lo = std::min(a1, a2);
          const auto& hi = std::max(a1, a2);
          if (!seen.emplace(a.object_id, b.object_id, lo, hi).second) continue;
          auto [yes, no] = render_attribution_captions(a1, a.category, a2, b.category);
          AroTestCase c;
          c.image_id = g.image_id;
          c.crop = clamp_to(smallest_enclosing_bbox(a.bbox, b.bbox), g.frame());
          c.true_caption = std::move(yes);
          c.false_captions = {std::move(no)};
          c.task_kind = TaskKind::Attribution;
          c.group_key = lo + "|" + hi;
          cases.push_back(std::move(c));
        }
      }
    }
  }
  sort_cases(cases);
  return cases;
}

/// Spatial predicates of the reference relation list; the remaining
/// reference predicates are verbs. Used for partitioned macro accuracy.
inline const std::set<std::string>& spatial_relations() {
  static const std::set<std::string> kSpatial = {
      "above", "at", "behind", "below", "beneath", "in", "in front of",
      "inside", "on", "on top of", "to the left of", "to the right of", "under"};
  return kSpatial;
}

inline const std::set<std::string>& verb_relations() {
  static const std::set<std::string> kVerbs = {
      "carrying", "covered by", "covered in", "covered with", "covering",
      "cutting", "eating", "feeding", "grazing on", "hanging on", "holding",
      "leaning on", "looking at", "lying in", "lying on", "parked on",
      "reflected in", "resting on", "riding", "sitting at", "sitting in",
      "sitting on", "sitting on top of", "standing by", "standing in",
      "standing on", "surrounded by", "using", "walking in", "walking on",
      "watching", "wearing"};
  return kVerbs;
}

// ---------------------------------------------------------------------------
// JSON Lines

inline SceneGraph scene_from_json(const nlohmann::json& j) {
  SceneGraph g;
  try {
    g.image_id = j.at("image_id").get<std::string>();
    g.image_width = j.at("image_width").get<std::int64_t>();
    g.image_height = j.at("image_height").get<std::int64_t>();
    for (const auto& o : j.at("objects")) {
      SceneObject obj;
      obj.object_id = o.at("object_id").get<std::string>();
      obj.category = o.at("category").get<std::string>();
      const auto& b = o.at("bbox");
      if (!b.is_array() || b.size() != 4) throw DataError("bbox must be [x, y, w, h]");
      obj.bbox = {b[0].get<std::int64_t>(), b[1].get<std::int64_t>(),
                  b[2].get<std::int64_t>(), b[3].get<std::int64_t>()};
      if (o.contains("attributes"))
        obj.attributes = o.at("attributes").get<std::vector<std::string>>();
      g.objects.push_back(std::move(obj));
    }
    if (j.contains("relations"))
      for (const auto& r : j.at("relations"))
        g.relations.push_back({r.at("subject_id").get<std::string>(),
                               r.at("object_id").get<std::string>(),
                               r.at("predicate").get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("scene graph: ") + e.what());
  }
  validate(g);
  return g;
}

inline nlohmann::ordered_json to_json(const AroTestCase& c) {
  nlohmann::ordered_json j;
  j["image_id"] = c.image_id;
  j["crop"] = {c.crop.x, c.crop.y, c.crop.w, c.crop.h};
  j["true_caption"] = c.true_caption;
  j["false_captions"] = c.false_captions;
  j["task_kind"] = to_string(c.task_kind);
  j["group_key"] = c.group_key;
  return j;
}

inline AroTestCase case_from_json(const nlohmann::json& j) {
  AroTestCase c;
  try {
    c.image_id = j.at("image_id").get<std::string>();
    const auto& b = j.at("crop");
    if (!b.is_array() || b.size() != 4) throw DataError("crop must be [x, y, w, h]");
    c.crop = {b[0].get<std::int64_t>(), b[1].get<std::int64_t>(),
              b[2].get<std::int64_t>(), b[3].get<std::int64_t>()};
    c.true_caption = j.at("true_caption").get<std::string>();
    c.false_captions = j.at("false_captions").get<std::vector<std::string>>();
    c.task_kind = parse_task_kind(j.at("task_kind").get<std::string>());
    c.group_key = j.at("group_key").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("test case: ") + e.what());
  }
  if (c.false_captions.empty()) throw DataError("test case without false captions");
  if (std::find(c.false_captions.begin(), c.false_captions.end(), c.true_caption) !=
      c.false_captions.end())
    throw DataError("test case lists its true caption as false");
  return c;
}

}  // namespace aro::scene
