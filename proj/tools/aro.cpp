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

// aro: command-line front end for mining, perturbing, shuffling, evaluating
// and training. Exit codes: 0 ok, 1 usage/config, 2 data, 3 numeric.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aro/aro.hpp"
#include "png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string digest_file(const std::string& path) {
  return hex64(aro::fnv1a64(aro::emb::detail::read_file(path)));
}

struct Run {
  CLI::App* app = nullptr;
  std::string subcommand;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, digest

  void input(const std::string& path) {
    if (path.empty()) return;
    inputs.emplace_back(path, digest_file(path));
  }

  // Global options plus those of the invoked subcommand, after flags,
  // config file and defaults have been merged.
  ordered_json effective_config() const {
    auto dump = [](const CLI::App* a) {
      ordered_json j = ordered_json::object();
      for (const auto* opt : a->get_options()) {
        if (opt->get_lnames().empty()) continue;
        const auto& name = opt->get_lnames().front();
        if (name == "help" || name == "version" || name == "config") continue;
        if (opt->count()) {
          const auto& res = opt->results();
          j[name] = res.size() == 1 ? ordered_json(res.front()) : ordered_json(res);
        } else {
          j[name] = opt->get_default_str();
        }
      }
      return j;
    };
    auto j = dump(app);
    for (const auto* sub : app->get_subcommands()) j[sub->get_name()] = dump(sub);
    return j;
  }

  std::map<std::string, std::string> provenance() const {
    std::map<std::string, std::string> p;
    p["tool"] = "aro";
    p["tool_version"] = kVersion;
    p["subcommand"] = subcommand;
    p["seed"] = std::to_string(seed);
    for (const auto& [path, d] : inputs) p["input:" + fs::path(path).filename().string()] = d;
    return p;
  }

  // Sidecar next to every artifact: provenance plus the effective config.
  void record(const std::string& artifact, const ordered_json& extra = {}) const {
    ordered_json j;
    j["tool"] = "aro";
    j["tool_version"] = kVersion;
    j["subcommand"] = subcommand;
    j["seed"] = seed;
    ordered_json in = ordered_json::array();
    for (const auto& [path, d] : inputs) in.push_back({{"path", path}, {"fnv1a64", d}});
    j["inputs"] = std::move(in);
    j["effective_config"] = effective_config();
    if (!extra.is_null()) j["summary"] = extra;
    std::ofstream out(artifact + ".run.json", std::ios::trunc);
    if (!out) throw aro::DataError("cannot write " + artifact + ".run.json");
    out << j.dump(2) << '\n';
  }
};

std::ofstream open_out(const std::string& path) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw aro::DataError("cannot write " + path);
  return out;
}

template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw aro::DataError("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw aro::ParseError(path + ": " + e.what(), lineno);
    }
    try {
      fn(j, lineno);
    } catch (const aro::ParseError&) {
      throw;
    } catch (const aro::DataError& e) {
      throw aro::ParseError(path + ": " + e.what(), lineno);
    } catch (const json::exception& e) {
      throw aro::ParseError(path + ": " + e.what(), lineno);
    }
  }
}

void write_manifest(const std::string& path, const std::set<std::string>& texts) {
  if (path.empty()) return;
  auto out = open_out(path);
  std::size_t i = 0;
  for (const auto& t : texts) {
    ordered_json j;
    j["index"] = i++;
    j["id"] = t;
    j["text"] = t;
    j["kind"] = "text";
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Captions

struct CaptionRecord {
  std::string id;
  std::string image_id;
  aro::text::TaggedCaption tagged;
  std::string text;
};

struct CaptionInput {
  std::string captions;
  std::string pretagged;
  std::string lexicon;

  void add_to(CLI::App* sub) {
    auto* c = sub->add_option("--captions", captions,
                              "JSONL of {id, image_id?, caption, tags?}")->check(CLI::ExistingFile);
    auto* p = sub->add_option("--pretagged", pretagged, "token<TAB>TAG file, blank line between captions")
                  ->check(CLI::ExistingFile);
    c->excludes(p);
    sub->add_option("--lexicon", lexicon, "JSON object word -> tag")->check(CLI::ExistingFile);
  }

  std::vector<CaptionRecord> load(Run& run) const {
    if (captions.empty() == pretagged.empty())
      throw aro::UsageError("pass exactly one of --captions or --pretagged");
    std::vector<CaptionRecord> out;
    if (!pretagged.empty()) {
      run.input(pretagged);
      std::ifstream in(pretagged);
      auto tagged = aro::text::parse_pretagged(in);
      for (std::size_t i = 0; i < tagged.size(); ++i) {
        auto words = tagged[i].words();
        out.push_back({std::to_string(i), std::to_string(i), std::move(tagged[i]),
                       aro::text::detokenize(words)});
      }
      return out;
    }
    run.input(captions);
    std::optional<aro::text::Lexicon> lex;
    if (!lexicon.empty()) {
      run.input(lexicon);
      lex = aro::text::Lexicon::load(lexicon);
    }
    std::set<std::string> ids;
    for_each_jsonl(captions, [&](const json& j, std::size_t) {
      CaptionRecord r;
      r.id = j.at("id").get<std::string>();
      r.image_id = j.value("image_id", r.id);
      r.text = j.at("caption").get<std::string>();
      if (!ids.insert(r.id).second) throw aro::DataError("duplicate caption id '" + r.id + "'");
      const auto words = aro::text::tokenize(r.text);
      if (words.empty()) throw aro::DataError("caption '" + r.id + "' is empty");
      if (j.contains("tags")) {
        const auto names = j.at("tags").get<std::vector<std::string>>();
        if (names.size() != words.size())
          throw aro::DataError("caption '" + r.id + "' has " + std::to_string(words.size()) +
                               " tokens but " + std::to_string(names.size()) + " tags");
        std::vector<aro::text::Token> toks;
        for (std::size_t i = 0; i < words.size(); ++i) {
          auto tag = aro::text::parse_tag(names[i]);
          if (!tag) throw aro::DataError("unknown tag '" + names[i] + "'");
          toks.push_back({words[i], *tag, i});
        }
        r.tagged = aro::text::make_tagged(std::move(toks));
      } else {
        if (!lex) throw aro::UsageError("captions without tags need --lexicon");
        r.tagged = aro::text::tag_with_lexicon(words, *lex);
      }
      out.push_back(std::move(r));
    });
    return out;
  }
};

// ---------------------------------------------------------------------------
// Subcommands

struct MineArgs {
  std::string scenes, out, task = "all", text_manifest, image_manifest;
  std::vector<std::string> symmetric, inverse_pairs;
};

int run_mine(Run& run, const MineArgs& a) {
  run.input(a.scenes);
  std::vector<std::pair<std::string, std::string>> inverses;
  for (const auto& p : a.inverse_pairs) {
    const auto eq = p.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == p.size())
      throw aro::UsageError("--inverse-pair expects predicate=inverse, got '" + p + "'");
    inverses.emplace_back(p.substr(0, eq), p.substr(eq + 1));
  }
  const auto blocklist = aro::scene::symmetric_blocklist(a.symmetric, inverses);
  const bool rel = a.task == "all" || a.task == "relation";
  const bool attr = a.task == "all" || a.task == "attribution";

  std::vector<aro::scene::SceneGraph> scenes;
  std::set<std::string> image_ids;
  for_each_jsonl(a.scenes, [&](const json& j, std::size_t) {
    scenes.push_back(aro::scene::scene_from_json(j));
    if (!image_ids.insert(scenes.back().image_id).second)
      throw aro::DataError("duplicate image_id '" + scenes.back().image_id + "'");
  });

  std::vector<std::vector<aro::scene::AroTestCase>> per_scene(scenes.size());
  aro::emb::detail::parallel_rows(scenes.size(), run.jobs, [&](std::size_t i) {
    if (rel) per_scene[i] = aro::scene::enumerate_relation_cases(scenes[i], blocklist);
    if (attr)
      for (auto& c : aro::scene::enumerate_attribution_cases(scenes[i]))
        per_scene[i].push_back(std::move(c));
  });
  std::vector<aro::scene::AroTestCase> cases;
  for (auto& v : per_scene)
    for (auto& c : v) cases.push_back(std::move(c));
  aro::scene::sort_cases(cases);

  auto out = open_out(a.out);
  std::set<std::string> texts;
  std::map<std::string, aro::scene::AroTestCase> crops;
  std::size_t n_rel = 0;
  for (const auto& c : cases) {
    out << aro::scene::to_json(c).dump() << '\n';
    texts.insert(c.true_caption);
    for (const auto& f : c.false_captions) texts.insert(f);
    crops.emplace(c.crop_key(), c);
    n_rel += c.task_kind == aro::scene::TaskKind::Relation;
  }
  out.close();
  write_manifest(a.text_manifest, texts);
  if (!a.image_manifest.empty()) {
    auto m = open_out(a.image_manifest);
    std::size_t i = 0;
    for (const auto& [key, c] : crops) {
      ordered_json j;
      j["index"] = i++;
      j["id"] = key;
      j["image_id"] = c.image_id;
      j["crop"] = {c.crop.x, c.crop.y, c.crop.w, c.crop.h};
      j["kind"] = "image";
      m << j.dump() << '\n';
    }
  }
  run.record(a.out, {{"scenes", scenes.size()},
                     {"relation_cases", n_rel},
                     {"attribution_cases", cases.size() - n_rel}});
  std::cerr << "mined " << cases.size() << " cases from " << scenes.size() << " scenes\n";
  return 0;
}

struct PerturbArgs {
  CaptionInput input;
  std::string strategy, out, text_manifest;
  bool order_tasks = false;
};

int run_perturb(Run& run, const PerturbArgs& a) {
  const auto captions = a.input.load(run);
  if (a.order_tasks == !a.strategy.empty())
    throw aro::UsageError("pass exactly one of --strategy or --order-tasks");
  std::optional<aro::perturb::Strategy> strategy;
  if (!a.strategy.empty()) {
    strategy = aro::perturb::parse_strategy(a.strategy);
    if (!strategy) throw aro::UsageError("unknown strategy '" + a.strategy + "'");
  }
  std::vector<std::string> lines(captions.size());
  std::vector<std::vector<std::string>> texts(captions.size());
  std::vector<int> degenerate(captions.size(), 0);
  aro::emb::detail::parallel_rows(captions.size(), run.jobs, [&](std::size_t i) {
    const auto& c = captions[i];
    const auto seed = aro::seed_for(run.seed, c.id);
    if (strategy) {
      const auto p = aro::perturb::perturb(c.tagged, *strategy, seed);
      ordered_json j;
      j["id"] = c.id;
      j["image_id"] = c.image_id;
      j["strategy"] = a.strategy;
      j["seed"] = seed;
      j["original"] = c.text;
      j["perturbed"] = p.text;
      j["degenerate"] = p.degenerate;
      lines[i] = j.dump();
      texts[i] = {c.text, p.text};
      degenerate[i] = p.degenerate;
    } else {
      auto t = aro::perturb::build_order_task(c.tagged, seed);
      t.id = c.id;
      t.image_id = c.image_id;
      lines[i] = aro::perturb::to_json(t).dump();
      texts[i].push_back(t.true_caption);
      for (const auto& alt : t.alternatives) texts[i].push_back(alt);
      degenerate[i] = t.usable_alternatives() < 4;
    }
  });
  auto out = open_out(a.out);
  std::set<std::string> all;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    out << lines[i] << '\n';
    all.insert(texts[i].begin(), texts[i].end());
  }
  out.close();
  write_manifest(a.text_manifest, all);
  const auto n_degenerate = static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), 1));
  run.record(a.out, {{"captions", captions.size()}, {"degenerate", n_degenerate}});
  return 0;
}

struct NegativesArgs {
  CaptionInput input;
  std::string out, text_manifest, removed;
};

int run_negatives(Run& run, const NegativesArgs& a) {
  const auto captions = a.input.load(run);
  auto out = open_out(a.out);
  std::optional<std::ofstream> removed;
  if (!a.removed.empty()) removed = open_out(a.removed);
  std::set<std::string> texts;
  std::size_t kept = 0, dropped = 0;
  for (const auto& c : captions) {
    const auto set = aro::perturb::generate_negatives(c.tagged);
    if (set.removable()) {
      ++dropped;
      if (removed) *removed << c.id << '\n';
      continue;
    }
    ++kept;
    ordered_json j;
    j["id"] = c.id;
    j["image_id"] = c.image_id;
    const auto body = aro::perturb::to_json(set);
    for (auto& [k, v] : body.items()) j[k] = v;
    out << j.dump() << '\n';
    texts.insert(set.original);
    for (const auto& [_, t] : set.negatives) texts.insert(t);
  }
  out.close();
  write_manifest(a.text_manifest, texts);
  run.record(a.out, {{"kept", kept}, {"removed", dropped}});
  std::cerr << "kept " << kept << " captions, removed " << dropped << " without negatives\n";
  return 0;
}

aro::image::GridSpec parse_grid(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) return aro::image::parse_grid_preset(s);
  try {
    std::size_t used = 0;
    const auto rows = std::stoul(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(s);
    const auto cols = std::stoul(s.substr(x + 1), &used);
    if (used != s.size() - x - 1) throw std::invalid_argument(s);
    if (rows * cols < 2) throw aro::UsageError("grid " + s + " has fewer than two cells");
    return {rows, cols};
  } catch (const std::logic_error&) {
    throw aro::UsageError("bad grid '" + s + "' (rows, columns, patches or RxC)");
  }
}

struct ShuffleArgs {
  std::vector<std::string> inputs;
  std::string grid = "patches", out_dir, manifest;
};

int run_shuffle(Run& run, const ShuffleArgs& a) {
  const auto grid = parse_grid(a.grid);
  std::set<std::string> names;
  for (const auto& in : a.inputs) {
    run.input(in);
    if (!names.insert(fs::path(in).filename().string()).second)
      throw aro::DataError("two inputs share the file name " + fs::path(in).filename().string());
  }
  fs::create_directories(a.out_dir);
  std::vector<ordered_json> entries(a.inputs.size());
  std::vector<std::string> errors(a.inputs.size());
  aro::emb::detail::parallel_rows(a.inputs.size(), run.jobs, [&](std::size_t i) {
    try {
      const auto name = fs::path(a.inputs[i]).filename().string();
      const auto seed = aro::seed_for(run.seed, name);
      const auto img = aro::tools::read_png(a.inputs[i]);
      const auto r = aro::image::split_and_shuffle(img, grid, seed);
      const auto out = (fs::path(a.out_dir) / name).string();
      aro::tools::write_png(r.image, out);
      ordered_json e;
      e["input"] = a.inputs[i];
      e["output"] = out;
      e["width"] = img.width;
      e["height"] = img.height;
      e["seed"] = seed;
      e["permutation"] = r.permutation;
      entries[i] = std::move(e);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (const auto& e : errors)
    if (!e.empty()) throw aro::DataError(e);
  const auto manifest =
      a.manifest.empty() ? (fs::path(a.out_dir) / "permutations.json").string() : a.manifest;
  ordered_json m;
  m["grid"] = {{"rows", grid.rows}, {"cols", grid.cols}};
  m["provenance"] = run.provenance();
  m["images"] = entries;
  open_out(manifest) << m.dump(2) << '\n';
  run.record(manifest, {{"images", entries.size()}});
  return 0;
}

struct NeighborsArgs {
  std::string embeddings, out;
  std::size_t k = 3;
};

int run_neighbors(Run& run, const NeighborsArgs& a) {
  run.input(a.embeddings);
  const auto set = aro::emb::load(a.embeddings);
  const auto table = aro::emb::top_k_neighbors(set, a.k, run.jobs);
  auto out = open_out(a.out);
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    ordered_json j;
    j["id"] = table.ids[i];
    auto nb = ordered_json::array();
    for (const auto& n : table.lists[i])
      nb.push_back({{"id", table.ids[n.index]}, {"similarity", n.similarity}});
    j["neighbors"] = std::move(nb);
    out << j.dump() << '\n';
  }
  out.close();
  run.record(a.out, {{"rows", set.size()}, {"k", a.k}});
  return 0;
}

struct ReportOut {
  std::string out, format = "json", dataset;

  void add_to(CLI::App* sub) {
    sub->add_option("--out", out, "report path")->required();
    sub->add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    sub->add_option("--dataset", dataset, "dataset label stored in the report");
  }

  void emit(Run& run, aro::eval::EvalReport& r) const {
    r.dataset = dataset;
    r.seed = run.seed;
    r.provenance = run.provenance();
    if (auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
    aro::eval::emit_report(r, out, aro::eval::parse_format(format));
    run.record(out);
  }
};

struct EvalAroArgs {
  std::string cases, images, texts, task = "all";
  ReportOut report;
};

int run_eval_aro(Run& run, const EvalAroArgs& a) {
  run.input(a.cases);
  run.input(a.images);
  run.input(a.texts);
  std::vector<aro::scene::AroTestCase> cases;
  std::set<aro::scene::TaskKind> kinds;
  for_each_jsonl(a.cases, [&](const json& j, std::size_t) {
    auto c = aro::scene::case_from_json(j);
    if (a.task != "all" && aro::scene::to_string(c.task_kind) != a.task) return;
    kinds.insert(c.task_kind);
    cases.push_back(std::move(c));
  });
  if (kinds.size() > 1)
    throw aro::UsageError("cases mix task kinds; select one with --task");
  const auto images = aro::emb::load(a.images);
  const auto texts = aro::emb::load(a.texts);
  auto r = aro::eval::match_accuracy(cases, images, texts);
  if (!kinds.empty() && *kinds.begin() == aro::scene::TaskKind::Relation)
    aro::eval::add_partition_macros(r, aro::eval::relation_partitions());
  a.report.emit(run, r);
  std::cerr << r.task << ": macro " << aro::eval::fixed6(r.macro_accuracy()) << ", micro "
            << aro::eval::fixed6(r.micro_accuracy()) << " over " << cases.size() << " cases\n";
  return 0;
}

struct EvalOrderArgs {
  std::string tasks, images, texts;
  ReportOut report;
};

int run_eval_order(Run& run, const EvalOrderArgs& a) {
  run.input(a.tasks);
  run.input(a.images);
  run.input(a.texts);
  std::vector<aro::perturb::OrderTask> tasks;
  for_each_jsonl(a.tasks, [&](const json& j, std::size_t) {
    tasks.push_back(aro::perturb::order_task_from_json(j));
  });
  auto r = aro::eval::order_task_accuracy(tasks, aro::emb::load(a.images), aro::emb::load(a.texts));
  r.strategy = "order";
  a.report.emit(run, r);
  std::cerr << "order: accuracy " << aro::eval::fixed6(r.micro_accuracy()) << " over "
            << tasks.size() << " tasks\n";
  return 0;
}

struct EvalRetrievalArgs {
  std::string images, texts, gold, strategy;
  std::vector<std::size_t> ks{1, 5};
  ReportOut report;
};

int run_eval_retrieval(Run& run, const EvalRetrievalArgs& a) {
  run.input(a.images);
  run.input(a.texts);
  run.input(a.gold);
  json g;
  {
    std::ifstream in(a.gold);
    try {
      in >> g;
    } catch (const json::exception& e) {
      throw aro::DataError(a.gold + ": " + e.what());
    }
  }
  for (auto k : a.ks)
    if (k < 1) throw aro::UsageError("--k values must be at least 1");
  auto r = aro::eval::retrieval_report(aro::emb::load(a.images), aro::emb::load(a.texts),
                                       aro::eval::Gold::from_json(g), a.ks, run.jobs);
  r.strategy = a.strategy;
  a.report.emit(run, r);
  for (const auto& [k, v] : r.recall) std::cerr << k << " " << aro::eval::fixed6(v) << '\n';
  return 0;
}

// Reads {image_id, caption_id, negative_ids?} rows into aligned matrices.
aro::negclip::PairedData load_pairs(const std::string& path, const aro::emb::EmbeddingSet& images,
                                    const aro::emb::EmbeddingSet& texts, bool need_negatives) {
  if (images.dim() != texts.dim())
    throw aro::DataError("image and text embedding dims differ: " + std::to_string(images.dim()) +
                         " vs " + std::to_string(texts.dim()));
  struct Row {
    std::size_t image, caption;
    std::vector<std::size_t> negatives;
  };
  std::vector<Row> rows;
  auto lookup = [](const aro::emb::EmbeddingSet& s, const std::string& id, const char* what) {
    auto r = s.find(id);
    if (!r) throw aro::DataError(std::string(what) + " '" + id + "' not in embeddings");
    return *r;
  };
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    Row r{lookup(images, j.at("image_id").get<std::string>(), "image"),
          lookup(texts, j.at("caption_id").get<std::string>(), "caption"), {}};
    if (j.contains("negative_ids"))
      for (const auto& n : j.at("negative_ids").get<std::vector<std::string>>())
        r.negatives.push_back(lookup(texts, n, "negative caption"));
    if (need_negatives && r.negatives.empty())
      throw aro::DataError("pair without negative captions (remove it upstream)");
    rows.push_back(std::move(r));
  });
  const auto d = static_cast<Eigen::Index>(images.dim());
  aro::negclip::PairedData p;
  p.images.resize(static_cast<Eigen::Index>(rows.size()), d);
  p.captions.resize(p.images.rows(), d);
  auto copy = [&](const aro::emb::EmbeddingSet& s, std::size_t src, auto dst) {
    const auto row = s.row(src);
    for (Eigen::Index k = 0; k < d; ++k) dst(k) = row[static_cast<std::size_t>(k)];
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    copy(images, rows[i].image, p.images.row(r));
    copy(texts, rows[i].caption, p.captions.row(r));
    aro::negclip::Matrix neg(static_cast<Eigen::Index>(rows[i].negatives.size()), d);
    for (std::size_t n = 0; n < rows[i].negatives.size(); ++n)
      copy(texts, rows[i].negatives[n], neg.row(static_cast<Eigen::Index>(n)));
    p.negatives.push_back(std::move(neg));
  }
  return p;
}

struct TrainArgs {
  std::string pairs, val_pairs, images, texts, out, trace, init;
  aro::negclip::TrainConfig config;
};

int run_train(Run& run, TrainArgs a) {
  run.input(a.pairs);
  run.input(a.val_pairs);
  run.input(a.images);
  run.input(a.texts);
  run.input(a.init);
  a.config.seed = run.seed;
  a.config.validate();
  const auto images = aro::emb::load(a.images);
  const auto texts = aro::emb::load(a.texts);
  const auto data = load_pairs(a.pairs, images, texts, a.config.use_neg_captions);
  std::optional<aro::negclip::PairedData> val;
  if (!a.val_pairs.empty()) val = load_pairs(a.val_pairs, images, texts, false);
  std::optional<aro::negclip::ProjectionModel> init;
  if (!a.init.empty()) init = aro::negclip::load_checkpoint(a.init).model;
  const auto result = aro::negclip::train(data, a.config, val ? &*val : nullptr, init);
  if (auto parent = fs::path(a.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  aro::negclip::save_checkpoint({result.model, a.config, result.steps}, a.out);
  if (!a.trace.empty()) open_out(a.trace) << aro::negclip::trace_csv(result.trace);
  ordered_json summary;
  summary["steps"] = result.steps;
  summary["train_pairs"] = data.size();
  summary["final_loss"] = result.trace.empty() ? 0.0 : result.trace.back().loss;
  if (val) {
    summary["best_val_r1"] = result.best_val_r1;
    summary["best_epoch"] = result.best_epoch;
  }
  summary["config"] = aro::negclip::to_json(a.config);
  run.record(a.out, summary);
  std::cerr << "trained " << result.steps << " steps\n";
  return 0;
}

struct ProjectArgs {
  std::string checkpoint, embeddings, out;
};

int run_project(Run& run, const ProjectArgs& a) {
  run.input(a.checkpoint);
  run.input(a.embeddings);
  const auto ck = aro::negclip::load_checkpoint(a.checkpoint);
  const auto set = aro::emb::load(a.embeddings);
  if (set.dim() != ck.model.d_in())
    throw aro::DataError("embedding dim " + std::to_string(set.dim()) +
                         " does not match checkpoint input dim " + std::to_string(ck.model.d_in()));
  aro::negclip::Matrix x(static_cast<Eigen::Index>(set.size()), static_cast<Eigen::Index>(set.dim()));
  for (std::size_t i = 0; i < set.size(); ++i)
    for (std::size_t k = 0; k < set.dim(); ++k)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = set.row(i)[k];
  const auto& w = set.kind() == aro::emb::Kind::Image ? ck.model.image_proj : ck.model.text_proj;
  const auto projected = aro::negclip::project_set(x, w, set.kind(), set.ids());
  if (auto parent = fs::path(a.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  aro::emb::save(projected, a.out);
  run.record(a.out, {{"rows", set.size()}, {"dim", projected.dim()}});
  return 0;
}

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out, format = "csv";
};

int run_report(Run& run, const ReportArgs& a) {
  std::vector<aro::eval::EvalReport> reports;
  for (const auto& in : a.inputs) {
    run.input(in);
    reports.push_back(aro::eval::read_report(in));
  }
  auto out = open_out(a.out);
  if (a.format == "csv") {
    out << aro::eval::kCsvHeader << '\n';
    for (const auto& r : reports) {
      const auto csv = aro::eval::to_csv(r);
      out << csv.substr(csv.find('\n') + 1);
    }
  } else if (reports.size() == 1) {
    out << aro::eval::to_json(reports.front()).dump(2) << '\n';
  } else {
    auto arr = ordered_json::array();
    for (const auto& r : reports) arr.push_back(aro::eval::to_json(r));
    out << arr.dump(2) << '\n';
  }
  out.close();
  run.record(a.out, {{"reports", reports.size()}});
  return 0;
}

// One config file can hold tables for several subcommands. Tables of the
// subcommands not being run are checked for unknown keys and then dropped.
class InvokedTableConfig : public CLI::ConfigTOML {
 public:
  InvokedTableConfig(const CLI::App& app, std::string invoked) : app_(app), invoked_(std::move(invoked)) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    std::vector<CLI::ConfigItem> kept;
    for (auto& item : CLI::ConfigTOML::from_config(in)) {
      const auto* sub = item.parents.empty() ? nullptr : app_.get_subcommand_no_throw(item.parents.front());
      if (!sub || item.parents.front() == invoked_) {
        kept.push_back(std::move(item));
        continue;
      }
      if (item.name == "++" || item.name == "--") continue;
      if (item.parents.size() != 1 || !sub->get_option_no_throw("--" + item.name))
        throw CLI::ConfigError::Extras(item.fullname());
    }
    return kept;
  }

 private:
  const CLI::App& app_;
  std::string invoked_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositionality probes for dual-encoder embeddings", "aro"};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "TOML config; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();

  Run run;
  run.app = &app;
  app.add_option("--seed", run.seed, "global seed (u64)");
  app.add_option("--jobs", run.jobs, "worker threads")->check(CLI::PositiveNumber);

  MineArgs mine;
  auto* s_mine = app.add_subcommand("mine", "scene graphs -> relation/attribution test cases");
  s_mine->add_option("--scenes", mine.scenes, "scene graphs, JSON Lines")->required()->check(CLI::ExistingFile);
  s_mine->add_option("--out", mine.out, "test cases, JSON Lines")->required();
  s_mine->add_option("--task", mine.task, "relation, attribution or all")
      ->check(CLI::IsMember({"relation", "attribution", "all"}));
  s_mine->add_option("--symmetric", mine.symmetric, "extra symmetric predicates to drop");
  s_mine->add_option("--inverse-pair", mine.inverse_pairs,
                     "predicate=inverse; self-inverse predicates are dropped");
  s_mine->add_option("--text-manifest", mine.text_manifest, "caption manifest for the extractor");
  s_mine->add_option("--image-manifest", mine.image_manifest, "crop manifest for the extractor");

  PerturbArgs perturb;
  auto* s_perturb = app.add_subcommand("perturb", "word-order perturbations and order tasks");
  perturb.input.add_to(s_perturb);
  s_perturb->add_option("--strategy", perturb.strategy,
                        "shuffle_nouns_adj, shuffle_all_words, shuffle_all_but_nouns_adj, "
                        "shuffle_trigrams or shuffle_within_trigrams");
  s_perturb->add_flag("--order-tasks", perturb.order_tasks, "emit 5-way order tasks instead");
  s_perturb->add_option("--out", perturb.out, "JSON Lines output")->required();
  s_perturb->add_option("--text-manifest", perturb.text_manifest, "caption manifest for the extractor");

  NegativesArgs negatives;
  auto* s_neg = app.add_subcommand("negatives", "swap-based hard negative captions");
  negatives.input.add_to(s_neg);
  s_neg->add_option("--out", negatives.out, "JSON Lines output")->required();
  s_neg->add_option("--text-manifest", negatives.text_manifest, "caption manifest for the extractor");
  s_neg->add_option("--removed", negatives.removed, "ids of captions without any negative");

  ShuffleArgs shuffle;
  auto* s_shuffle = app.add_subcommand("shuffle-images", "grid-shuffle PNG images");
  s_shuffle->add_option("--input", shuffle.inputs, "PNG files")->required()->check(CLI::ExistingFile);
  s_shuffle->add_option("--grid", shuffle.grid, "rows, columns, patches or RxC");
  s_shuffle->add_option("--out-dir", shuffle.out_dir, "output directory")->required();
  s_shuffle->add_option("--manifest", shuffle.manifest, "permutation manifest (default <out-dir>/permutations.json)");

  NeighborsArgs neighbors;
  auto* s_nn = app.add_subcommand("neighbors", "exact k nearest neighbors by cosine");
  s_nn->add_option("--embeddings", neighbors.embeddings, "AROE file")->required()->check(CLI::ExistingFile);
  s_nn->add_option("--k", neighbors.k, "neighbors per row");
  s_nn->add_option("--out", neighbors.out, "JSON Lines output")->required();

  EvalAroArgs eval_aro;
  auto* s_aro = app.add_subcommand("eval-aro", "relation/attribution matching accuracy");
  s_aro->add_option("--cases", eval_aro.cases, "test cases, JSON Lines")->required()->check(CLI::ExistingFile);
  s_aro->add_option("--images", eval_aro.images, "image AROE")->required()->check(CLI::ExistingFile);
  s_aro->add_option("--texts", eval_aro.texts, "caption AROE")->required()->check(CLI::ExistingFile);
  s_aro->add_option("--task", eval_aro.task, "relation, attribution or all")
      ->check(CLI::IsMember({"relation", "attribution", "all"}));
  eval_aro.report.add_to(s_aro);

  EvalOrderArgs eval_order;
  auto* s_order = app.add_subcommand("eval-order", "order-task accuracy");
  s_order->add_option("--tasks", eval_order.tasks, "order tasks, JSON Lines")->required()->check(CLI::ExistingFile);
  s_order->add_option("--images", eval_order.images, "image AROE")->required()->check(CLI::ExistingFile);
  s_order->add_option("--texts", eval_order.texts, "caption AROE")->required()->check(CLI::ExistingFile);
  eval_order.report.add_to(s_order);

  EvalRetrievalArgs eval_ret;
  auto* s_ret = app.add_subcommand("eval-retrieval", "Recall@K in both directions");
  s_ret->add_option("--images", eval_ret.images, "image AROE")->required()->check(CLI::ExistingFile);
  s_ret->add_option("--texts", eval_ret.texts, "caption AROE")->required()->check(CLI::ExistingFile);
  s_ret->add_option("--gold", eval_ret.gold, "JSON object image_id -> [caption ids]")->required()->check(CLI::ExistingFile);
  s_ret->add_option("--k", eval_ret.ks, "cutoffs")->delimiter(',');
  s_ret->add_option("--strategy", eval_ret.strategy, "label for the perturbation applied");
  eval_ret.report.add_to(s_ret);

  TrainArgs train;
  auto& tc = train.config;
  auto* s_train = app.add_subcommand("train", "train projection heads with hard negatives");
  s_train->add_option("--pairs", train.pairs, "{image_id, caption_id, negative_ids} JSON Lines")->required()->check(CLI::ExistingFile);
  s_train->add_option("--val-pairs", train.val_pairs, "validation pairs for model selection")->check(CLI::ExistingFile);
  s_train->add_option("--images", train.images, "image AROE")->required()->check(CLI::ExistingFile);
  s_train->add_option("--texts", train.texts, "caption AROE (captions and negatives)")->required()->check(CLI::ExistingFile);
  s_train->add_option("--init", train.init, "start from this checkpoint")->check(CLI::ExistingFile);
  s_train->add_option("--out", train.out, "checkpoint path")->required();
  s_train->add_option("--trace", train.trace, "metrics trace CSV");
  s_train->add_option("--epochs", tc.epochs);
  s_train->add_option("--batch-size", tc.batch_size);
  s_train->add_option("--learning-rate", tc.learning_rate);
  s_train->add_option("--warmup-steps", tc.warmup_steps);
  s_train->add_option("--total-steps", tc.total_steps, "0 = epochs x batches");
  s_train->add_option("--neighbor-k", tc.neighbor_k);
  s_train->add_option("--use-neg-captions", tc.use_neg_captions);
  s_train->add_option("--use-neg-images", tc.use_neg_images);
  s_train->add_option("--weight-decay", tc.weight_decay);
  s_train->add_option("--beta1", tc.beta1);
  s_train->add_option("--beta2", tc.beta2);
  s_train->add_option("--eps", tc.eps);
  s_train->add_option("--d-out", tc.d_out);

  ProjectArgs project;
  auto* s_proj = app.add_subcommand("project", "apply trained heads to an embedding set");
  s_proj->add_option("--checkpoint", project.checkpoint)->required()->check(CLI::ExistingFile);
  s_proj->add_option("--embeddings", project.embeddings)->required()->check(CLI::ExistingFile);
  s_proj->add_option("--out", project.out)->required();

  ReportArgs report;
  auto* s_report = app.add_subcommand("report", "merge or convert evaluation reports");
  s_report->add_option("--in", report.inputs, "report JSON files")->required()->check(CLI::ExistingFile);
  s_report->add_option("--format", report.format)->check(CLI::IsMember({"json", "csv"}));
  s_report->add_option("--out", report.out)->required();

  std::string invoked;
  for (int i = 1; i < argc; ++i) {
    const std::string_view arg = argv[i];
    if (arg == "--config" || arg == "--seed" || arg == "--jobs") {
      ++i;
      continue;
    }
    if (arg.starts_with("-")) continue;
    invoked = arg;
    break;
  }
  for (auto* sub : app.get_subcommands({})) sub->configurable();
  app.config_formatter(std::make_shared<InvokedTableConfig>(app, invoked));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    auto* sub = app.get_subcommands().front();
    run.subcommand = sub->get_name();
    if (sub == s_mine) return run_mine(run, mine);
    if (sub == s_perturb) return run_perturb(run, perturb);
    if (sub == s_neg) return run_negatives(run, negatives);
    if (sub == s_shuffle) return run_shuffle(run, shuffle);
    if (sub == s_nn) return run_neighbors(run, neighbors);
    if (sub == s_aro) return run_eval_aro(run, eval_aro);
    if (sub == s_order) return run_eval_order(run, eval_order);
    if (sub == s_ret) return run_eval_retrieval(run, eval_ret);
    if (sub == s_train) return run_train(run, train);
    if (sub == s_proj) return run_project(run, project);
    if (sub == s_report) return run_report(run, report);
  } catch (const aro::Error& e) {
    std::cerr << "aro: " << e.what() << '\n';
    return e.exit_code();
  } catch (const json::exception& e) {
    std::cerr << "aro: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "aro: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
