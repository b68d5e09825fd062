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

/// \file eval.hpp
/// Caption matching accuracy, order-task accuracy, Recall@K and reports.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "aro/embeddings.hpp"
#include "aro/error.hpp"
#include "aro/perturb.hpp"
#include "aro/scene.hpp"

namespace aro::eval {

struct GroupStat {
  std::size_t correct = 0;
  std::size_t count = 0;

  double accuracy() const noexcept {
    return count ? static_cast<double>(correct) / static_cast<double>(count) : 0.0;
  }
  friend bool operator==(const GroupStat&, const GroupStat&) = default;
};

/// Accuracies are derived from the per-group counts, so macro and micro are
/// always recomputable from `groups`.
struct EvalReport {
  std::string task;
  std::string dataset;
  std::string strategy;
  std::uint64_t seed = 0;
  std::map<std::string, GroupStat> groups;
  std::map<std::string, double> recall;   // "<direction>@<k>"
  std::map<std::string, double> metrics;  // chance level, partition macros, ...
  std::map<std::string, std::string> provenance;

  /// Unweighted mean of per-group accuracies.
  double macro_accuracy() const {
    if (groups.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [_, g] : groups) sum += g.accuracy();
    return sum / static_cast<double>(groups.size());
  }

  double micro_accuracy() const {
    std::size_t c = 0, n = 0;
    for (const auto& [_, g] : groups) {
      c += g.correct;
      n += g.count;
    }
    return n ? static_cast<double>(c) / static_cast<double>(n) : 0.0;
  }

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

namespace detail {

// Row lookup that reports every missing key at once.
class Resolver {
 public:
  Resolver(const emb::EmbeddingSet& set, std::string_view what) : set_(set), what_(what) {}

  std::size_t operator()(std::string_view key) {
    if (auto r = set_.find(key)) return *r;
    if (missing_.size() < 1000) missing_.insert(std::string(key));
    ++missing_count_;
    return 0;
  }

  std::size_t first_of(std::initializer_list<std::string_view> keys) {
    for (auto k : keys)
      if (auto r = set_.find(k)) return *r;
    return (*this)(*keys.begin());
  }

  /// Empty when every key resolved.
  std::string problems() const {
    if (!missing_count_) return {};
    std::string msg = std::to_string(missing_count_) + " " + what_ + " key(s) missing:";
    std::size_t shown = 0;
    for (const auto& m : missing_) {
      if (shown++ == 10) {
        msg += " ...";
        break;
      }
      msg += " '" + m + "'";
    }
    return msg;
  }

 private:
  const emb::EmbeddingSet& set_;
  std::string what_;
  std::set<std::string> missing_;
  std::size_t missing_count_ = 0;
};

inline double cosine(std::span<const float> a, std::span<const float> b) {
  const double na = emb::norm(a), nb = emb::norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw NumericError("zero-norm embedding in scoring");
  return emb::dot(a, b) / (na * nb);
}

// True caption (index 0) must beat every other candidate strictly.
inline bool strict_winner(const std::vector<double>& scores) {
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (!(scores[0] > scores[i])) return false;
  return true;
}

inline void check_all(const Resolver& a, const Resolver& b) {
  auto msg = a.problems();
  const auto more = b.problems();
  if (!msg.empty() && !more.empty()) msg += "; ";
  msg += more;
  if (!msg.empty()) throw DataError(msg);
}

}  // namespace detail

/// Maps a group key to a named partition ("spatial", "verb"); groups that
/// map to the empty string are left out of partition macros.
using Partitioner = std::function<std::string(const std::string&)>;

inline Partitioner relation_partitions() {
  return [](const std::string& key) -> std::string {
    if (scene::spatial_relations().count(key)) return "spatial";
    if (scene::verb_relations().count(key)) return "verb";
    return "";
  };
}

inline void add_partition_macros(EvalReport& report, const Partitioner& part) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& [key, g] : report.groups) {
    auto name = part(key);
    if (name.empty()) continue;
    acc[name].first += g.accuracy();
    acc[name].second += 1;
  }
  for (const auto& [name, v] : acc)
    report.metrics["macro_accuracy/" + name] = v.first / static_cast<double>(v.second);
}

/// A case counts as correct when the true caption's cosine to the image is
/// strictly greater than every false caption's. Images resolve by crop key
/// first, then by plain image id; captions by exact string.
inline EvalReport match_accuracy(const std::vector<scene::AroTestCase>& cases,
                                 const emb::EmbeddingSet& images,
                                 const emb::EmbeddingSet& texts) {
  if (images.dim() != texts.dim())
    throw DataError("image and text embedding dims differ: " + std::to_string(images.dim()) +
                    " vs " + std::to_string(texts.dim()));
  detail::Resolver img(images, "image"), txt(texts, "caption");
  struct Resolved {
    std::size_t image;
    std::vector<std::size_t> captions;
  };
  std::vector<Resolved> rows;
  rows.reserve(cases.size());
  for (const auto& c : cases) {
    const auto key = c.crop_key();
    Resolved r{img.first_of({key, c.image_id}), {txt(c.true_caption)}};
    for (const auto& f : c.false_captions) r.captions.push_back(txt(f));
    rows.push_back(std::move(r));
  }
  detail::check_all(img, txt);

  EvalReport report;
  report.task = cases.empty() ? "match" : std::string(scene::to_string(cases.front().task_kind));
  double chance = 0.0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    std::vector<double> scores;
    for (auto t : rows[i].captions)
      scores.push_back(detail::cosine(images.row(rows[i].image), texts.row(t)));
    auto& g = report.groups[cases[i].group_key];
    g.count += 1;
    g.correct += detail::strict_winner(scores);
    chance += 1.0 / static_cast<double>(scores.size());
  }
  if (!cases.empty()) report.metrics["chance_level"] = chance / static_cast<double>(cases.size());
  return report;
}

/// Degenerate alternatives and alternatives identical to the true caption
/// are dropped; the recorded chance level averages 1/(1 + kept).
inline EvalReport order_task_accuracy(const std::vector<perturb::OrderTask>& tasks,
                                      const emb::EmbeddingSet& images,
                                      const emb::EmbeddingSet& texts) {
  if (images.dim() != texts.dim())
    throw DataError("image and text embedding dims differ: " + std::to_string(images.dim()) +
                    " vs " + std::to_string(texts.dim()));
  detail::Resolver img(images, "image"), txt(texts, "caption");
  struct Resolved {
    std::size_t image;
    std::vector<std::size_t> captions;
  };
  std::vector<Resolved> rows;
  for (const auto& t : tasks) {
    Resolved r{img(t.image_id), {txt(t.true_caption)}};
    for (std::size_t a = 0; a < 4; ++a)
      if (!t.degenerate[a] && t.alternatives[a] != t.true_caption)
        r.captions.push_back(txt(t.alternatives[a]));
    rows.push_back(std::move(r));
  }
  detail::check_all(img, txt);

  EvalReport report;
  report.task = "order";
  auto& g = report.groups["order"];
  double chance = 0.0;
  std::size_t skipped = 0;
  for (const auto& r : rows) {
    if (r.captions.size() < 2) {
      ++skipped;
      continue;
    }
    std::vector<double> scores;
    for (auto c : r.captions) scores.push_back(detail::cosine(images.row(r.image), texts.row(c)));
    g.count += 1;
    g.correct += detail::strict_winner(scores);
    chance += 1.0 / static_cast<double>(scores.size());
  }
  if (g.count) report.metrics["chance_level"] = chance / static_cast<double>(g.count);
  report.metrics["skipped_tasks"] = static_cast<double>(skipped);
  if (!g.count) report.groups.clear();
  return report;
}

enum class Direction { TextToImage, ImageToText };

inline std::string_view to_string(Direction d) {
  return d == Direction::TextToImage ? "text_to_image" : "image_to_text";
}

/// Query id -> relevant candidate ids.
using GoldMap = std::map<std::string, std::set<std::string>>;

struct Gold {
  GoldMap image_to_text;
  GoldMap text_to_image;

  const GoldMap& for_direction(Direction d) const {
    return d == Direction::ImageToText ? image_to_text : text_to_image;
  }

  /// Builds both directions from image -> captions lists.
  static Gold from_image_captions(const std::map<std::string, std::vector<std::string>>& m) {
    Gold g;
    for (const auto& [img, caps] : m)
      for (const auto& c : caps) {
        g.image_to_text[img].insert(c);
        g.text_to_image[c].insert(img);
      }
    return g;
  }

  static Gold from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw DataError("gold mapping must be an object image_id -> [caption ids]");
    std::map<std::string, std::vector<std::string>> m;
    try {
      for (const auto& [img, caps] : j.items()) m[img] = caps.get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("gold mapping: ") + e.what());
    }
    return from_image_captions(m);
  }
};

/// Fraction of queries whose top-k candidates (descending similarity, ties by
/// ascending id) contain a relevant id. Text queries are the columns of `s`.
inline double recall_at_k(const emb::SimilarityMatrix& s, std::size_t k, Direction direction,
                          const GoldMap& gold) {
  if (k < 1) throw UsageError("recall_at_k: k must be at least 1");
  const bool by_column = direction == Direction::TextToImage;
  const auto& queries = by_column ? s.col_ids : s.row_ids;
  const auto& candidates = by_column ? s.row_ids : s.col_ids;
  if (queries.empty()) return 0.0;
  const std::size_t take = std::min(k, candidates.size());
  std::size_t hits = 0;
  std::vector<std::size_t> order(candidates.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    auto it = gold.find(queries[q]);
    if (it == gold.end()) throw DataError("query '" + queries[q] + "' missing from gold mapping");
    auto score = [&](std::size_t c) { return by_column ? s.at(c, q) : s.at(q, c); };
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double sa = score(a), sb = score(b);
                        if (sa != sb) return sa > sb;
                        return candidates[a] < candidates[b];
                      });
    for (std::size_t r = 0; r < take; ++r)
      if (it->second.count(candidates[order[r]])) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

inline std::string recall_key(Direction d, std::size_t k) {
  return std::string(to_string(d)) + "@" + std::to_string(k);
}

/// Recall@K for both directions and every k in `ks`.
inline EvalReport retrieval_report(const emb::EmbeddingSet& images, const emb::EmbeddingSet& texts,
                                   const Gold& gold, const std::vector<std::size_t>& ks,
                                   std::size_t jobs = 1) {
  const auto s = emb::cosine_matrix(images, texts, jobs);
  EvalReport report;
  report.task = "retrieval";
  for (auto d : {Direction::TextToImage, Direction::ImageToText})
    for (auto k : ks) report.recall[recall_key(d, k)] = recall_at_k(s, k, d, gold.for_direction(d));
  return report;
}

// ---------------------------------------------------------------------------
// Reports

enum class Format { Json, Csv };

inline Format parse_format(std::string_view s) {
  if (s == "json") return Format::Json;
  if (s == "csv") return Format::Csv;
  throw UsageError("unknown report format '" + std::string(s) + "'");
}

/// Fixed six-decimal rendering used by both formats.
inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  auto num = [](double v) { return nlohmann::ordered_json::parse(fixed6(v)); };
  nlohmann::ordered_json j;
  j["task"] = r.task;
  j["dataset"] = r.dataset;
  j["strategy"] = r.strategy;
  j["seed"] = r.seed;
  j["macro_accuracy"] = num(r.macro_accuracy());
  j["micro_accuracy"] = num(r.micro_accuracy());
  auto groups = nlohmann::ordered_json::object();
  for (const auto& [k, g] : r.groups) {
    nlohmann::ordered_json e;
    e["accuracy"] = num(g.accuracy());
    e["correct"] = g.correct;
    e["count"] = g.count;
    groups[k] = std::move(e);
  }
  j["groups"] = std::move(groups);
  auto recall = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.recall) recall[k] = num(v);
  j["recall"] = std::move(recall);
  auto metrics = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.metrics) metrics[k] = num(v);
  j["metrics"] = std::move(metrics);
  j["provenance"] = r.provenance;
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.task = j.at("task").get<std::string>();
    r.dataset = j.value("dataset", "");
    r.strategy = j.value("strategy", "");
    r.seed = j.value<std::uint64_t>("seed", 0);
    for (const auto& [k, g] : j.at("groups").items())
      r.groups[k] = {g.at("correct").get<std::size_t>(), g.at("count").get<std::size_t>()};
    for (const auto& [k, v] : j.at("recall").items()) r.recall[k] = v.get<double>();
    for (const auto& [k, v] : j.at("metrics").items()) r.metrics[k] = v.get<double>();
    if (j.contains("provenance"))
      r.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report: ") + e.what());
  }
  return r;
}

inline constexpr std::string_view kCsvHeader = "task,metric,key,value,count";

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// One row per group, summary accuracy, recall value and metric. A report
/// without any content is a header-only file.
inline std::string to_csv(const EvalReport& r) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  const auto task = csv_field(r.task);
  for (const auto& [k, g] : r.groups)
    out << task << ",group_accuracy," << csv_field(k) << ',' << fixed6(g.accuracy()) << ','
        << g.count << '\n';
  if (!r.groups.empty()) {
    std::size_t n = 0;
    for (const auto& [_, g] : r.groups) n += g.count;
    out << task << ",macro_accuracy,," << fixed6(r.macro_accuracy()) << ',' << r.groups.size()
        << '\n';
    out << task << ",micro_accuracy,," << fixed6(r.micro_accuracy()) << ',' << n << '\n';
  }
  for (const auto& [k, v] : r.recall) out << task << ",recall," << csv_field(k) << ',' << fixed6(v) << ",\n";
  for (const auto& [k, v] : r.metrics) out << task << ",metric," << csv_field(k) << ',' << fixed6(v) << ",\n";
  return out.str();
}

inline void emit_report(const EvalReport& r, const std::string& path, Format format) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write report " + path);
  if (format == Format::Json)
    out << to_json(r).dump(2) << '\n';
  else
    out << to_csv(r);
  if (!out) throw DataError("write failed for report " + path);
}

inline EvalReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("report " + path + ": " + e.what());
  }
  return report_from_json(j);
}

}  // namespace aro::eval
