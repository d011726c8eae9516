// pasevec/pipeline.hpp

// Copyright 2026  The pasevec Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Experiment orchestration: corpus -> stage 1 -> stage 2 / text references ->
// alignment -> retrieval -> report.
//
// Every artifact lives in a cache directory under a name derived from the
// FNV-1a hash of its key, a JSON object holding the producing configuration
// and the keys of its inputs. A stage is skipped when its artifact exists.
// Files are written under a temporary name and renamed, so an interrupted
// stage never leaves a half-written artifact behind.
//
// Audio embeddings:
//   aud-ph                 word-type mean of v_p
//   aud-ph+se              stage 2 on v_p
//   aud-ph+se-entangled    stage 2 on the merged-encoder ablation
// Text references: txt-ph, txt-se-1h, txt-se-ph.

#ifndef PASEVEC_PIPELINE_HPP_
#define PASEVEC_PIPELINE_HPP_

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pasevec/align.hpp"
#include "pasevec/corpus.hpp"
#include "pasevec/embedding_table.hpp"
#include "pasevec/probe.hpp"
#include "pasevec/retrieval.hpp"
#include "pasevec/stage1.hpp"
#include "pasevec/stage2.hpp"
#include "pasevec/synth.hpp"
#include "pasevec/textref.hpp"

namespace pasevec {

struct ExperimentConfig {
  std::optional<SynthConfig> synth;  // exactly one of synth / corpus_path
  std::string corpus_path;           // manifest.jsonl of an existing corpus
  Stage1Config stage1;
  Stage2Config stage2;
  TextRefConfig text;
  AlignConfig align;
  std::vector<int> tiers;            // empty: {V/5, 3V/5, V} for vocabulary V
  bool phonetic_only = true;         // report aud-ph
  bool entangled = true;             // report aud-ph+se-entangled
  std::vector<std::string> queries;  // empty: keywords of all group titles
  double probe_train_fraction = 0.8;
  ProbeConfig probe;
  std::string out = "run";
  std::uint64_t seed = 1;

  void validate() const {
    if (synth.has_value() == !corpus_path.empty())
      throw ConfigError("config needs exactly one corpus source (synth or corpus_path)");
    if (synth) synth->validate();
    stage1.validate();
    stage2.validate();
    text.validate();
    align.validate();
    for (int t : tiers)
      if (t < 2) throw ConfigError("tiers must hold at least 2 words");
    if (!(probe_train_fraction > 0 && probe_train_fraction < 1))
      throw ConfigError("probe_train_fraction must lie in (0, 1)");
    if (probe.iterations < 1 || !(probe.lr > 0) || probe.l2 < 0)
      throw ConfigError("invalid probe settings");
  }

  // Copy with every stage seed derived from the global seed.
  ExperimentConfig resolved() const {
    ExperimentConfig c = *this;
    if (c.synth) c.synth->seed = mix_seed(seed, 1);
    c.stage1.seed = mix_seed(seed, 2);
    c.stage2.seed = mix_seed(seed, 3);
    c.text.phonetic.seed = mix_seed(seed, 4);
    c.text.one_hot.seed = mix_seed(seed, 5);
    c.text.phonetic_semantic.seed = mix_seed(seed, 6);
    c.align.seed = mix_seed(seed, 7);
    return c;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ProbeConfig, iterations, lr, l2)

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json::object();
  if (c.synth)
    j["synth"] = *c.synth;
  else
    j["corpus_path"] = c.corpus_path;
  j["stage1"] = c.stage1;
  j["stage2"] = c.stage2;
  j["text"] = c.text;
  j["align"] = c.align;
  j["tiers"] = c.tiers;
  j["phonetic_only"] = c.phonetic_only;
  j["entangled"] = c.entangled;
  j["queries"] = c.queries;
  j["probe_train_fraction"] = c.probe_train_fraction;
  j["probe"] = c.probe;
  j["out"] = c.out;
  j["seed"] = c.seed;
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  static const std::set<std::string> known{
      "synth", "corpus_path", "stage1", "stage2", "text", "align", "tiers",
      "phonetic_only", "entangled", "queries", "probe_train_fraction", "probe",
      "out", "seed"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
  c = ExperimentConfig{};
  if (j.contains("synth")) c.synth = j.at("synth").get<SynthConfig>();
  c.corpus_path = j.value("corpus_path", std::string());
  if (j.contains("stage1")) c.stage1 = j.at("stage1").get<Stage1Config>();
  if (j.contains("stage2")) c.stage2 = j.at("stage2").get<Stage2Config>();
  if (j.contains("text")) c.text = j.at("text").get<TextRefConfig>();
  if (j.contains("align")) c.align = j.at("align").get<AlignConfig>();
  c.tiers = j.value("tiers", std::vector<int>{});
  c.phonetic_only = j.value("phonetic_only", true);
  c.entangled = j.value("entangled", true);
  c.queries = j.value("queries", std::vector<std::string>{});
  c.probe_train_fraction = j.value("probe_train_fraction", 0.8);
  if (j.contains("probe")) c.probe = j.at("probe").get<ProbeConfig>();
  c.out = j.value("out", std::string("run"));
  c.seed = j.value("seed", std::uint64_t{1});
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  ExperimentConfig c;
  try {
    c = nlohmann::json::parse(is, nullptr, true, true).get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (!c.corpus_path.empty() && std::filesystem::path(c.corpus_path).is_relative())
    c.corpus_path = (path.parent_path() / c.corpus_path).lexically_normal().string();
  c.validate();
  return c;
}

// Word types by descending frequency, ties by label.
inline std::vector<std::string> words_by_frequency(const Corpus& corpus) {
  std::map<std::string, std::size_t> n;
  for (const auto& s : corpus.segments) ++n[s.word_label];
  std::vector<std::pair<std::string, std::size_t>> v(n.begin(), n.end());
  std::stable_sort(v.begin(), v.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (const auto& [w, c] : v) out.push_back(w);
  return out;
}

inline std::vector<int> resolve_tiers(const std::vector<int>& tiers, int vocabulary) {
  if (tiers.empty()) {
    std::vector<int> t;
    for (int f : {1, 3, 5}) {
      const int n = std::max(2, static_cast<int>(std::lround(vocabulary * f / 5.0)));
      if (t.empty() || t.back() != n) t.push_back(n);
    }
    return t;
  }
  for (int t : tiers)
    if (t > vocabulary)
      throw ConfigError("tier of " + std::to_string(t) + " words exceeds the vocabulary of " +
                        std::to_string(vocabulary));
  std::vector<int> t = tiers;
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string key_hash(const nlohmann::json& key) { return hex64(fnv1a(key.dump())); }

inline std::uint64_t file_hash(const std::filesystem::path& p, std::uint64_t h) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DependencyError("missing input file " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return fnv1a(ss.str(), h);
}

const std::vector<std::string> kTextTags{"txt-ph", "txt-se-1h", "txt-se-ph"};

// The subcommands, in DAG order.
const std::vector<std::string> kStages{"synth",    "train-stage1", "train-stage2",
                                       "train-text", "align",      "eval-parallel",
                                       "retrieve", "report"};

struct PipelineOptions {
  std::filesystem::path cache;       // empty: <out>/cache
  std::set<std::string> force;       // stages to recompute
  bool run_upstream = false;         // compute missing inputs instead of failing
  std::ostream* log = &std::cerr;    // null silences progress lines
};

class Pipeline {
 public:
  Pipeline(const ExperimentConfig& cfg, PipelineOptions opt)
      : cfg_(cfg.resolved()), opt_(std::move(opt)) {
    cfg_.validate();
    for (const auto& s : opt_.force)
      if (std::find(kStages.begin(), kStages.end(), s) == kStages.end())
        throw ConfigError("unknown stage '" + s + "'");
    out_ = cfg_.out;
    cache_ = opt_.cache.empty() ? out_ / "cache" : opt_.cache;
    std::filesystem::create_directories(cache_);
  }

  const ExperimentConfig& config() const { return cfg_; }
  const std::filesystem::path& cache_dir() const { return cache_; }
  const std::filesystem::path& out_dir() const { return out_; }

  std::vector<std::string> audio_tags() const {
    std::vector<std::string> t;
    if (cfg_.phonetic_only) t.push_back("aud-ph");
    t.push_back("aud-ph+se");
    if (cfg_.entangled) t.push_back("aud-ph+se-entangled");
    return t;
  }

  void run_stage(const std::string& stage) {
    if (stage == "synth") synth();
    else if (stage == "train-stage1") train_stage1();
    else if (stage == "train-stage2") train_stage2();
    else if (stage == "train-text") train_text();
    else if (stage == "align") align();
    else if (stage == "eval-parallel") eval_parallel();
    else if (stage == "retrieve") retrieve();
    else if (stage == "report") report();
    else throw ConfigError("unknown stage '" + stage + "'");
  }

  nlohmann::ordered_json run() {
    for (std::size_t k = 0; k + 1 < kStages.size(); ++k) run_stage(kStages[k]);
    return report();
  }

  // ---- artifact names -----------------------------------------------------

  std::string corpus_key() const {
    nlohmann::json k{{"artifact", "corpus"}};
    if (cfg_.synth) {
      k["synth"] = *cfg_.synth;
    } else {
      const std::filesystem::path m(cfg_.corpus_path);
      std::uint64_t h = file_hash(m, 0xcbf29ce484222325ULL);
      for (const char* f : {"features.f32", "lexicon.tsv"}) h = file_hash(m.parent_path() / f, h);
      if (std::filesystem::exists(m.parent_path() / "groups.tsv"))
        h = file_hash(m.parent_path() / "groups.tsv", h);
      k["files"] = hex64(h);
    }
    return key_hash(k);
  }
  std::filesystem::path corpus_dir() const { return cache_ / ("corpus-" + corpus_key()); }
  std::filesystem::path manifest() const { return corpus_dir() / "manifest.jsonl"; }

  Stage1Config stage1_config(bool disentangle) const {
    Stage1Config c = cfg_.stage1;
    c.disentangle = disentangle;
    return c;
  }
  std::string stage1_key(bool disentangle) const {
    return key_hash({{"artifact", "stage1"}, {"corpus", corpus_key()},
                     {"config", stage1_config(disentangle)}});
  }
  static std::string variant(bool disentangle) { return disentangle ? "full" : "entangled"; }
  std::filesystem::path stage1_path(bool d) const {
    return cache_ / ("stage1-" + variant(d) + "-" + stage1_key(d) + ".psva");
  }
  std::filesystem::path stage1_history_path(bool d) const {
    return cache_ / ("stage1-" + variant(d) + "-" + stage1_key(d) + ".json");
  }
  std::filesystem::path phonetic_cache_path(bool d) const {
    return cache_ / ("vp-" + variant(d) + "-" + stage1_key(d) + ".psva");
  }
  std::filesystem::path probe_path() const {
    nlohmann::json k{{"artifact", "probe"}, {"full", stage1_key(true)},
                     {"fraction", cfg_.probe_train_fraction}, {"probe", cfg_.probe},
                     {"seed", cfg_.seed}};
    if (cfg_.entangled) k["entangled"] = stage1_key(false);
    return cache_ / ("probe-" + key_hash(k) + ".json");
  }
  std::string stage2_key(bool d) const {
    return key_hash({{"artifact", "stage2"}, {"stage1", stage1_key(d)}, {"config", cfg_.stage2}});
  }
  std::filesystem::path stage2_path(bool d) const {
    return cache_ / ("stage2-" + variant(d) + "-" + stage2_key(d) + ".psva");
  }

  std::string table_key(const std::string& tag) const {
    if (tag == "aud-ph") return key_hash({{"artifact", tag}, {"stage1", stage1_key(true)}});
    if (tag == "aud-ph+se") return key_hash({{"artifact", tag}, {"stage2", stage2_key(true)}});
    if (tag == "aud-ph+se-entangled")
      return key_hash({{"artifact", tag}, {"stage2", stage2_key(false)}});
    if (tag == "txt-ph")
      return key_hash({{"artifact", tag}, {"corpus", corpus_key()}, {"config", cfg_.text.phonetic}});
    if (tag == "txt-se-1h")
      return key_hash({{"artifact", tag}, {"corpus", corpus_key()}, {"config", cfg_.text.one_hot}});
    if (tag == "txt-se-ph")
      return key_hash({{"artifact", tag}, {"txt-ph", table_key("txt-ph")},
                       {"config", cfg_.text.phonetic_semantic}});
    throw ArgumentError("unknown embedding table " + tag);
  }
  std::filesystem::path table_path(const std::string& tag) const {
    return cache_ / ("table-" + tag + "-" + table_key(tag) + ".psvt");
  }

  std::string cell_name(const std::string& audio, const std::string& text, int tier) const {
    return audio + "_" + text + "_n" + std::to_string(tier);
  }
  std::string align_key(const std::string& audio, const std::string& text, int tier) const {
    return key_hash({{"artifact", "align"}, {"source", table_key(audio)},
                     {"target", table_key(text)}, {"tier", tier}, {"config", cfg_.align}});
  }
  std::filesystem::path align_path(const std::string& a, const std::string& t, int n) const {
    return cache_ / ("align-" + cell_name(a, t, n) + "-" + align_key(a, t, n) + ".psva");
  }
  std::filesystem::path parallel_path(const std::string& a, const std::string& t, int n) const {
    return cache_ / ("parallel-" + cell_name(a, t, n) + "-" + align_key(a, t, n) + ".json");
  }
  std::filesystem::path retrieval_path(const std::string& audio) const {
    return cache_ / ("retrieval-" + audio + "-" +
                     key_hash({{"artifact", "retrieval"}, {"table", table_key(audio)},
                               {"queries", cfg_.queries}}) +
                     ".json");
  }

  // ---- stages -------------------------------------------------------------

  void synth() {
    const auto dir = corpus_dir();
    if (!needs("synth", dir / "manifest.jsonl")) return;
    note("synth: building corpus");
    const auto tmp = fresh_tmp(dir);
    if (cfg_.synth) {
      const SynthResult r = generate_synthetic_corpus(*cfg_.synth);
      write_corpus(r.corpus, tmp);
      write_groundtruth(r.truth, tmp / "groundtruth.json");
    } else {
      write_corpus(load_corpus(cfg_.corpus_path), tmp);
    }
    commit_dir(tmp, dir);
    corpus_.reset();
  }

  void train_stage1() {
    const std::vector<bool> variants = cfg_.entangled ? std::vector<bool>{true, false}
                                                      : std::vector<bool>{true};
    for (bool d : variants) {
      if (!needs("train-stage1", phonetic_cache_path(d), stage1_path(d), stage1_history_path(d)))
        continue;
      const Corpus& c = corpus();
      note("train-stage1: " + variant(d) + " model on " + std::to_string(c.size()) + " segments");
      auto r = pasevec::train_stage1<float>(c, stage1_config(d));
      atomically(stage1_path(d), [&](const auto& p) { save_stage1(r.model, p); });
      nlohmann::ordered_json h;
      h["epochs"] = nlohmann::json(r.history.epochs);
      h["early_stopped"] = r.history.early_stopped;
      write_json(stage1_history_path(d), h);
      // Downstream stages read the reloaded checkpoint, as a separate process would.
      const auto m = load_stage1<float>(stage1_path(d));
      atomically(phonetic_cache_path(d), [&](const auto& p) {
        save_vector_cache(c, phonetic_vectors(m, c), p, "v_p");
      });
    }
    if (cfg_.phonetic_only && needs("train-stage1", table_path("aud-ph"))) {
      const Corpus& c = corpus();
      const Mat<float> vp = load_vector_cache(c, require(phonetic_cache_path(true), "train-stage1"));
      const auto t = word_type_table(
          c, [&](std::size_t i) { return Vec<float>(vp.col(static_cast<Eigen::Index>(i))); },
          "aud-ph");
      atomically(table_path("aud-ph"), [&](const auto& p) { t.save(p); });
    }
    if (needs("train-stage1", probe_path())) {
      note("train-stage1: speaker probes");
      write_json(probe_path(), speaker_probes());
    }
  }

  void train_stage2() {
    const std::vector<bool> variants = cfg_.entangled ? std::vector<bool>{true, false}
                                                      : std::vector<bool>{true};
    for (bool d : variants) {
      const std::string tag = d ? "aud-ph+se" : "aud-ph+se-entangled";
      if (!needs("train-stage2", stage2_path(d), table_path(tag))) continue;
      const Corpus& c = corpus();
      const Mat<float> vp = load_vector_cache(c, require(phonetic_cache_path(d), "train-stage1"));
      note("train-stage2: " + tag);
      auto r = pasevec::train_stage2<float>(c, vp, cfg_.stage2);
      atomically(stage2_path(d), [&](const auto& p) { save_skipgram(r.model, p, "stage2"); });
      const auto m = load_skipgram<float>(stage2_path(d));
      const auto t = semantic_table(c, m, vp, tag);
      atomically(table_path(tag), [&](const auto& p) { t.save(p); });
    }
  }

  void train_text() {
    if (needs("train-text", table_path("txt-ph"))) {
      const Corpus& c = corpus();
      note("train-text: txt-ph");
      const auto t = train_txt_ph(c.lexicon, cfg_.text.phonetic);
      atomically(table_path("txt-ph"), [&](const auto& p) { t.save(p); });
    }
    if (needs("train-text", table_path("txt-se-1h"))) {
      note("train-text: txt-se-1h");
      const auto t = train_txt_se_1h(corpus(), cfg_.text.one_hot);
      atomically(table_path("txt-se-1h"), [&](const auto& p) { t.save(p); });
    }
    if (needs("train-text", table_path("txt-se-ph"))) {
      note("train-text: txt-se-ph");
      const auto ph = EmbeddingTable::load(require(table_path("txt-ph"), "train-text"));
      const auto t = train_txt_se_ph(corpus(), ph, cfg_.text.phonetic_semantic);
      atomically(table_path("txt-se-ph"), [&](const auto& p) { t.save(p); });
    }
  }

  void align() {
    const auto words = words_by_frequency(corpus());
    for (int n : tiers()) {
      const std::vector<std::string> tier(words.begin(), words.begin() + n);
      for (const auto& a : audio_tags())
        for (const auto& t : kTextTags) {
          if (!needs("align", align_path(a, t, n))) continue;
          const auto src = EmbeddingTable::load(require(table_path(a), upstream_of(a)));
          const auto tgt = EmbeddingTable::load(require(table_path(t), "train-text"));
          AlignConfig ac = cfg_.align;
          const int cap = std::min({n - 1, src.dim(), tgt.dim()});
          if (ac.k > cap) ac.k = cap;
          note("align: " + cell_name(a, t, n) + " (K=" + std::to_string(ac.k) + ")");
          const auto m = train_alignment(src, tgt, tier, ac);
          atomically(align_path(a, t, n), [&](const auto& p) { save_alignment(m, p); });
        }
    }
  }

  void eval_parallel() {
    const auto words = words_by_frequency(corpus());
    for (int n : tiers()) {
      const std::vector<std::string> tier(words.begin(), words.begin() + n);
      for (const auto& a : audio_tags())
        for (const auto& t : kTextTags) {
          if (!needs("eval-parallel", parallel_path(a, t, n))) continue;
          const auto m = load_alignment(require(align_path(a, t, n), "align"));
          const auto src = EmbeddingTable::load(require(table_path(a), upstream_of(a)));
          const auto tgt = EmbeddingTable::load(require(table_path(t), "train-text"));
          nlohmann::ordered_json j;
          j["audio"] = a;
          j["text"] = t;
          j["words"] = n;
          j["k_components"] = m.k();
          j["final_loss"] = m.final_loss;
          nlohmann::ordered_json acc;
          for (int k : cfg_.align.report_k)
            acc["top" + std::to_string(k)] =
                topk_nearest_accuracy(m, src, tgt, tier, k, cfg_.align.metric);
          j["accuracy"] = acc;
          write_json(parallel_path(a, t, n), j);
        }
    }
  }

  void retrieve() {
    const Corpus* c = nullptr;
    for (const auto& a : audio_tags()) {
      if (!needs("retrieve", retrieval_path(a))) continue;
      if (!c) c = &corpus();
      const auto table = EmbeddingTable::load(require(table_path(a), upstream_of(a)));
      const auto queries = cfg_.queries.empty() ? title_queries(*c) : cfg_.queries;
      note("retrieve: " + a + " with " + std::to_string(queries.size()) + " queries");
      nlohmann::ordered_json j;
      j["config"] = {{"embedding", a}, {"queries", queries}};
      j["report"] = nlohmann::json(evaluate_retrieval(*c, table, queries));
      write_json(retrieval_path(a), j);
    }
  }

  // Assembles whatever exists; never trains.
  nlohmann::ordered_json report() {
    std::vector<std::string> missing;
    auto read = [&](const std::filesystem::path& p,
                    const std::string& what) -> std::optional<nlohmann::json> {
      if (!std::filesystem::exists(p)) {
        missing.push_back(what);
        return std::nullopt;
      }
      std::ifstream is(p);
      return nlohmann::json::parse(is);
    };
    nlohmann::ordered_json r;
    nlohmann::json echo = cfg_;
    echo.erase("out");
    nlohmann::ordered_json corpus_info;
    std::vector<int> tier_list;
    if (std::filesystem::exists(manifest())) {
      const Corpus& c = corpus();
      corpus_info["segments"] = c.size();
      corpus_info["words"] = words_by_frequency(c).size();
      corpus_info["speakers"] = c.speakers().size();
      corpus_info["utterances"] = c.utterances.size();
      corpus_info["documents"] = c.documents.size();
      corpus_info["feature_dim"] = c.feature_dim;
      tier_list = tiers();
    } else {
      missing.push_back("corpus");
    }

    nlohmann::ordered_json s1;
    for (bool d : {true, false}) {
      if (!d && !cfg_.entangled) continue;
      if (auto h = read(stage1_history_path(d), "stage1 " + variant(d))) {
        nlohmann::ordered_json e;
        e["epochs"] = (*h)["epochs"].size();
        e["early_stopped"] = (*h)["early_stopped"];
        if (!(*h)["epochs"].empty()) e["final"] = (*h)["epochs"].back();
        s1[variant(d)] = e;
      }
    }
    nlohmann::ordered_json probe;
    if (auto p = read(probe_path(), "speaker probe")) probe = *p;

    nlohmann::ordered_json parallel = nlohmann::ordered_json::object();
    for (int n : tier_list) {
      nlohmann::ordered_json by_k;
      for (int k : cfg_.align.report_k) {
        nlohmann::ordered_json grid;
        for (const auto& a : audio_tags()) {
          nlohmann::ordered_json row;
          for (const auto& t : kTextTags) {
            const auto p = parallel_path(a, t, n);
            if (std::filesystem::exists(p)) {
              std::ifstream is(p);
              row[t] = nlohmann::json::parse(is)["accuracy"]["top" + std::to_string(k)];
            } else {
              row[t] = nullptr;
              missing.push_back("parallel " + cell_name(a, t, n) + " top" + std::to_string(k));
            }
          }
          grid[a] = row;
        }
        by_k["top" + std::to_string(k)] = grid;
      }
      parallel[std::to_string(n)] = by_k;
    }

    nlohmann::ordered_json retrieval = nlohmann::ordered_json::object();
    for (const auto& a : audio_tags()) {
      if (auto j = read(retrieval_path(a), "retrieval " + a)) {
        retrieval[a] = (*j)["report"]["map"];
        std::filesystem::create_directories(out_ / "retrieval");
        write_json(out_ / "retrieval" / (a + ".json"), *j);
      } else {
        retrieval[a] = nullptr;
      }
    }

    r["complete"] = missing.empty();
    r["missing"] = missing;
    r["config"] = echo;
    r["corpus"] = corpus_info;
    r["tiers"] = tier_list;
    r["stage1"] = s1;
    r["probe"] = probe;
    r["parallel"] = parallel;
    r["retrieval"] = retrieval;
    std::filesystem::create_directories(out_);
    write_json(out_ / "report.json", r);
    atomically(out_ / "report.txt", [&](const auto& p) {
      std::ofstream os(p, std::ios::trunc);
      os << render_report(r);
      if (!os) throw IoError("cannot write " + p.string());
    });
    note(std::string("report: ") + (missing.empty() ? "complete" : "incomplete") + ", " +
         (out_ / "report.json").string());
    return r;
  }

  static std::string render_report(const nlohmann::ordered_json& r) {
    std::ostringstream os;
    char buf[64];
    auto num = [&](const nlohmann::ordered_json& v) {
      if (v.is_null()) return std::string("-");
      std::snprintf(buf, sizeof buf, "%.3f", v.get<double>());
      return std::string(buf);
    };
    auto pad = [](std::string s, std::size_t w) {
      if (s.size() < w) s.append(w - s.size(), ' ');
      return s;
    };
    os << "pasevec report" << (r["complete"].get<bool>() ? "" : " (INCOMPLETE)") << "\n";
    const auto& c = r["corpus"];
    if (!c.empty())
      os << "corpus: " << c["segments"] << " segments, " << c["words"] << " words, "
         << c["speakers"] << " speakers, " << c["documents"] << " documents\n";
    for (const auto& [n, by_k] : r["parallel"].items())
      for (const auto& [k, grid] : by_k.items()) {
        os << "\n" << k << " nearest accuracy, " << n << " words\n";
        os << pad("", 22);
        for (const auto& t : kTextTags) os << pad(t, 12);
        os << "\n";
        for (const auto& [a, row] : grid.items()) {
          os << pad(a, 22);
          for (const auto& t : kTextTags) os << pad(num(row[t]), 12);
          os << "\n";
        }
      }
    os << "\nretrieval MAP\n" << pad("", 22) << pad("D1+D2", 12) << "D2\n";
    for (const auto& [a, m] : r["retrieval"].items()) {
      os << pad(a, 22);
      if (m.is_null())
        os << pad("-", 12) << "-\n";
      else
        os << pad(num(m.value("D1+D2", nlohmann::ordered_json())), 12)
           << num(m.value("D2", nlohmann::ordered_json())) << "\n";
    }
    if (!r["probe"].empty()) {
      os << "\nspeaker probe\n" << pad("", 22) << pad("accuracy", 12) << "chance\n";
      for (const auto& [v, p] : r["probe"].items())
        os << pad(v, 22) << pad(num(p["accuracy"]), 12) << num(p["chance"]) << "\n";
    }
    if (!r["missing"].empty()) {
      os << "\nmissing:\n";
      for (const auto& m : r["missing"]) os << "  " << m.get<std::string>() << "\n";
    }
    return os.str();
  }

  const Corpus& corpus() {
    if (!corpus_) corpus_ = load_corpus(require(manifest(), "synth"));
    return *corpus_;
  }

  std::vector<int> tiers() {
    return resolve_tiers(cfg_.tiers, static_cast<int>(words_by_frequency(corpus()).size()));
  }

 private:
  static std::string upstream_of(const std::string& tag) {
    if (tag == "aud-ph") return "train-stage1";
    if (tag.rfind("aud-", 0) == 0) return "train-stage2";
    return "train-text";
  }

  void note(const std::string& msg) const {
    if (opt_.log) *opt_.log << "[pasevec] " << msg << std::endl;
  }

  // True when any of the stage's outputs must be (re)built.
  template <typename... P>
  bool needs(const std::string& stage, const P&... outputs) {
    const bool forced = opt_.force.count(stage) && !done_.count(stage + "|" + (outputs.string() + ...));
    if (forced) done_.insert(stage + "|" + (outputs.string() + ...));
    if (forced) return true;
    return !(std::filesystem::exists(outputs) && ...);
  }

  // Returns p when it exists. Otherwise the producing stage runs if upstream
  // execution is enabled; if not, a DependencyError names the file.
  std::filesystem::path require(const std::filesystem::path& p, const std::string& producer) {
    if (std::filesystem::exists(p)) return p;
    if (opt_.run_upstream) {
      run_stage(producer);
      if (std::filesystem::exists(p)) return p;
    }
    throw DependencyError("missing upstream artifact " + p.string() + " (produced by `" +
                          producer + "`)");
  }

  static std::filesystem::path fresh_tmp(const std::filesystem::path& p) {
    auto tmp = p;
    tmp += ".tmp";
    std::filesystem::remove_all(tmp);
    return tmp;
  }

  static void commit_dir(const std::filesystem::path& tmp, const std::filesystem::path& dst) {
    std::filesystem::remove_all(dst);
    std::filesystem::rename(tmp, dst);
  }

  template <typename Fn>
  static void atomically(const std::filesystem::path& p, Fn&& write) {
    const auto tmp = fresh_tmp(p);
    write(tmp);
    std::filesystem::rename(tmp, p);
  }

  template <typename J>
  static void write_json(const std::filesystem::path& p, const J& j) {
    atomically(p, [&](const auto& tmp) {
      std::ofstream os(tmp, std::ios::trunc);
      os << j.dump(2) << "\n";
      if (!os) throw IoError("cannot write " + tmp.string());
    });
  }

  nlohmann::ordered_json probe_entry(const ProbeResult& p) const {
    nlohmann::ordered_json j;
    j["accuracy"] = p.accuracy;
    j["chance"] = p.chance;
    j["train_accuracy"] = p.train_accuracy;
    return j;
  }

  // Linear speaker probes on a document-level split.
  nlohmann::ordered_json speaker_probes() {
    const Corpus& c = corpus();
    const auto parts = split_corpus(
        c, {cfg_.probe_train_fraction, 1.0 - cfg_.probe_train_fraction}, mix_seed(cfg_.seed, 8));
    auto dataset = [](const Corpus& part, auto&& embed) {
      Mat<double> x;
      std::vector<std::string> y;
      for (std::size_t i = 0; i < part.size(); ++i) {
        const Vec<double> v = embed(part.segments[i]).template cast<double>();
        if (i == 0) x.resize(v.size(), static_cast<Eigen::Index>(part.size()));
        x.col(static_cast<Eigen::Index>(i)) = v;
        y.push_back(part.segments[i].speaker);
      }
      return std::make_pair(x, y);
    };
    auto probe = [&](auto&& embed) {
      const auto [xa, ya] = dataset(parts[0], embed);
      const auto [xb, yb] = dataset(parts[1], embed);
      return probe_entry(run_probe(xa, ya, xb, yb, cfg_.probe));
    };
    nlohmann::ordered_json j;
    const auto full = load_stage1<float>(require(stage1_path(true), "train-stage1"));
    j["v_p"] = probe([&](const AcousticWordSegment& s) { return encode_phonetic(full, s); });
    j["v_s"] = probe([&](const AcousticWordSegment& s) { return encode_speaker(full, s); });
    if (cfg_.entangled) {
      const auto ent = load_stage1<float>(require(stage1_path(false), "train-stage1"));
      j["v_p_entangled"] =
          probe([&](const AcousticWordSegment& s) { return encode_phonetic(ent, s); });
    }
    return j;
  }

  ExperimentConfig cfg_;
  PipelineOptions opt_;
  std::filesystem::path out_, cache_;
  std::optional<Corpus> corpus_;
  std::set<std::string> done_;
};

}  // namespace pasevec

#endif  // PASEVEC_PIPELINE_HPP_
