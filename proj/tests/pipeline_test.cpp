// tests/pipeline_test.cpp

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

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "pasevec/pipeline.hpp"
#include "test_util.hpp"

namespace pasevec {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig c;
  SynthConfig s;
  s.vocabulary_size = 8;
  s.speaker_count = 2;
  s.topic_count = 2;
  s.words_per_topic = 4;
  s.keywords_per_topic = 1;
  s.document_count = 8;
  s.feature_dim = 4;
  c.synth = s;
  c.stage1.phonetic_hidden = 4;
  c.stage1.speaker_hidden = 3;
  c.stage1.decoder_hidden = 5;
  c.stage1.encoder_layers = 1;
  c.stage1.decoder_layers = 1;
  c.stage1.discriminator_hidden = 4;
  c.stage1.discriminator_layers = 1;
  c.stage1.n_disc = 1;
  c.stage1.epochs = 2;
  c.stage2.hidden = {6};
  c.stage2.embedding_dim = 4;
  c.stage2.epochs = 2;
  c.text.phonetic.phoneme_embedding_dim = 3;
  c.text.phonetic.hidden = 4;
  c.text.phonetic.epochs = 3;
  c.text.one_hot.embedding_dim = 4;
  c.text.one_hot.epochs = 2;
  c.text.phonetic_semantic.hidden = {6};
  c.text.phonetic_semantic.embedding_dim = 4;
  c.text.phonetic_semantic.epochs = 2;
  c.align.k = 3;
  c.align.iterations = 50;
  c.probe.iterations = 20;
  c.out = out.string();
  c.seed = 11;
  return c;
}

PipelineOptions quiet(bool upstream = true) {
  PipelineOptions o;
  o.log = nullptr;
  o.run_upstream = upstream;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> m;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) m[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return m;
}

TEST(PipelineTest, TiersScaleWithVocabulary) {
  EXPECT_EQ(resolve_tiers({}, 50), (std::vector<int>{10, 30, 50}));
  EXPECT_EQ(resolve_tiers({}, 5000), (std::vector<int>{1000, 3000, 5000}));
  EXPECT_EQ(resolve_tiers({30, 10, 30}, 50), (std::vector<int>{10, 30}));
  EXPECT_THROW(resolve_tiers({51}, 50), ConfigError);
}

TEST(PipelineTest, WordsByFrequencyBreaksTiesByLabel) {
  Corpus c;
  auto add = [&](const std::string& id, const std::string& w, int pos) {
    AcousticWordSegment s;
    s.id = id;
    s.word_label = w;
    s.speaker = "s";
    s.utterance_id = "u";
    s.position = pos;
    s.frames = RowMat<float>::Zero(1, 1);
    c.lexicon[w] = {0};
    c.add_segment(std::move(s), "d");
  };
  add("a", "zeta", 0);
  add("b", "beta", 1);
  add("c", "alpha", 2);
  add("d", "beta", 3);
  c.finalize();
  EXPECT_EQ(words_by_frequency(c), (std::vector<std::string>{"beta", "alpha", "zeta"}));
}

TEST(PipelineTest, ConfigNeedsExactlyOneCorpusSource) {
  TempDir d;
  ExperimentConfig c = tiny_config(d.path());
  c.corpus_path = "elsewhere/manifest.jsonl";
  EXPECT_THROW(c.validate(), ConfigError);
  c.synth.reset();
  c.corpus_path.clear();
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(PipelineTest, ConfigFileRoundTripAndUnknownKeys) {
  TempDir d;
  const ExperimentConfig c = tiny_config(d.path() / "run");
  {
    std::ofstream os(d.path() / "cfg.json");
    os << nlohmann::json(c).dump(2);
  }
  const ExperimentConfig back = load_experiment_config(d.path() / "cfg.json");
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(c));
  {
    std::ofstream os(d.path() / "bad.json");
    os << R"({"synth": {}, "stage3": {}})";
  }
  EXPECT_THROW(load_experiment_config(d.path() / "bad.json"), ConfigError);
  {
    std::ofstream os(d.path() / "broken.json");
    os << "{ not json";
  }
  EXPECT_THROW(load_experiment_config(d.path() / "broken.json"), ConfigError);
}

TEST(PipelineTest, DefaultHyperparameters) {
  const ExperimentConfig c;
  EXPECT_EQ(c.stage1.phonetic_hidden, 128);
  EXPECT_EQ(c.stage1.speaker_hidden, 128);
  EXPECT_EQ(c.stage1.decoder_hidden, 256);
  EXPECT_EQ(c.stage1.discriminator_layers, 2);
  EXPECT_EQ(c.stage1.discriminator_hidden, 128);
  EXPECT_EQ(c.stage1.lambda_margin, 0.01);
  EXPECT_EQ(c.stage2.window, 5);
  EXPECT_EQ(c.stage2.negatives, 5);
  EXPECT_EQ(c.align.k, 100);
  EXPECT_EQ(c.align.batch_size, 200);
  EXPECT_EQ(c.align.cycle_weight, 0.5);
}

class PipelineRunTest : public ::testing::Test {
 protected:
  TempDir dir_;
};

TEST_F(PipelineRunTest, FullMatrixAndCompleteReport) {
  Pipeline p(tiny_config(dir_.path() / "a"), quiet());
  const auto r = p.run();
  EXPECT_TRUE(r["complete"].get<bool>());
  EXPECT_TRUE(r["missing"].empty());
  const auto tiers = r["tiers"].get<std::vector<int>>();
  EXPECT_EQ(tiers, (std::vector<int>{2, 5, 8}));
  for (int n : tiers)
    for (const char* k : {"top1", "top10"}) {
      const auto& grid = r["parallel"][std::to_string(n)][k];
      ASSERT_EQ(grid.size(), 3u);
      for (const auto& [a, row] : grid.items()) {
        ASSERT_EQ(row.size(), 3u);
        for (const auto& [t, v] : row.items()) {
          ASSERT_TRUE(v.is_number()) << a << "/" << t;
          EXPECT_GE(v.get<double>(), 0.0);
          EXPECT_LE(v.get<double>(), 1.0);
        }
      }
    }
  for (const char* a : {"aud-ph", "aud-ph+se", "aud-ph+se-entangled"}) {
    EXPECT_TRUE(r["retrieval"][a].contains("D1+D2"));
    EXPECT_TRUE(r["retrieval"][a].contains("D2"));
  }
  EXPECT_TRUE(r["probe"].contains("v_p"));
  EXPECT_TRUE(r["probe"].contains("v_s"));
  EXPECT_TRUE(fs::exists(dir_.path() / "a" / "report.txt"));
  EXPECT_TRUE(fs::exists(dir_.path() / "a" / "retrieval" / "aud-ph+se.json"));
}

TEST_F(PipelineRunTest, AblationFlagsShrinkTheMatrix) {
  ExperimentConfig c = tiny_config(dir_.path() / "a");
  c.entangled = false;
  c.phonetic_only = false;
  c.tiers = {8};
  Pipeline p(c, quiet());
  const auto r = p.run();
  EXPECT_TRUE(r["complete"].get<bool>());
  const auto& grid = r["parallel"]["8"]["top1"];
  ASSERT_EQ(grid.size(), 1u);
  EXPECT_TRUE(grid.contains("aud-ph+se"));
  EXPECT_FALSE(r["probe"].contains("v_p_entangled"));
}

TEST_F(PipelineRunTest, SameSeedGivesByteIdenticalReports) {
  Pipeline a(tiny_config(dir_.path() / "a"), quiet());
  Pipeline b(tiny_config(dir_.path() / "b"), quiet());
  a.run();
  b.run();
  EXPECT_EQ(slurp(dir_.path() / "a" / "report.json"), slurp(dir_.path() / "b" / "report.json"));
  EXPECT_EQ(slurp(dir_.path() / "a" / "report.txt"), slurp(dir_.path() / "b" / "report.txt"));
  EXPECT_EQ(snapshot(dir_.path() / "a" / "cache"), snapshot(dir_.path() / "b" / "cache"));
}

TEST_F(PipelineRunTest, DifferentSeedChangesTheRun) {
  ExperimentConfig c = tiny_config(dir_.path() / "b");
  c.seed = 12;
  Pipeline a(tiny_config(dir_.path() / "a"), quiet());
  Pipeline b(c, quiet());
  a.run();
  b.run();
  EXPECT_NE(slurp(dir_.path() / "a" / "report.json"), slurp(dir_.path() / "b" / "report.json"));
}

TEST_F(PipelineRunTest, RerunSkipsEveryStage) {
  const auto out = dir_.path() / "a";
  Pipeline(tiny_config(out), quiet()).run();
  const auto before = snapshot(out / "cache");
  const std::string report = slurp(out / "report.json");
  std::ostringstream log;
  PipelineOptions o = quiet();
  o.log = &log;
  Pipeline(tiny_config(out), o).run();
  EXPECT_EQ(log.str().find("train-stage1:"), std::string::npos) << log.str();
  EXPECT_EQ(log.str().find("align:"), std::string::npos);
  EXPECT_EQ(snapshot(out / "cache"), before);
  EXPECT_EQ(slurp(out / "report.json"), report);
}

TEST_F(PipelineRunTest, DeletedArtifactIsRegeneratedIdentically) {
  const auto out = dir_.path() / "a";
  Pipeline p(tiny_config(out), quiet());
  p.run();
  const auto before = snapshot(out / "cache");
  const fs::path victims[] = {p.stage1_path(true), p.phonetic_cache_path(false),
                              p.table_path("txt-ph"), p.align_path("aud-ph", "txt-se-1h", 5)};
  for (const auto& v : victims) fs::remove(v);
  Pipeline(tiny_config(out), quiet()).run();
  EXPECT_EQ(snapshot(out / "cache"), before);
}

TEST_F(PipelineRunTest, ForcedStageRecomputesWithSameContent) {
  const auto out = dir_.path() / "a";
  Pipeline(tiny_config(out), quiet()).run();
  const auto before = snapshot(out / "cache");
  std::ostringstream log;
  PipelineOptions o = quiet();
  o.log = &log;
  o.force = {"train-text"};
  Pipeline(tiny_config(out), o).run();
  EXPECT_NE(log.str().find("train-text: txt-ph"), std::string::npos);
  EXPECT_EQ(log.str().find("train-stage1:"), std::string::npos);
  EXPECT_EQ(snapshot(out / "cache"), before);
  o.force = {"no-such-stage"};
  EXPECT_THROW(Pipeline(tiny_config(out), o), ConfigError);
}

TEST_F(PipelineRunTest, SubcommandChainEqualsRun) {
  Pipeline(tiny_config(dir_.path() / "a"), quiet()).run();
  Pipeline chain(tiny_config(dir_.path() / "b"), quiet(false));
  for (const auto& s : kStages) chain.run_stage(s);
  EXPECT_EQ(slurp(dir_.path() / "a" / "report.json"), slurp(dir_.path() / "b" / "report.json"));
  EXPECT_EQ(snapshot(dir_.path() / "a" / "cache"), snapshot(dir_.path() / "b" / "cache"));
}

TEST_F(PipelineRunTest, MissingUpstreamNamesTheFile) {
  Pipeline p(tiny_config(dir_.path() / "a"), quiet(false));
  try {
    p.train_stage1();
    FAIL() << "expected DependencyError";
  } catch (const DependencyError& e) {
    EXPECT_NE(std::string(e.what()).find("manifest.jsonl"), std::string::npos) << e.what();
  }
  p.synth();
  p.train_stage1();
  try {
    p.align();
    FAIL() << "expected DependencyError";
  } catch (const DependencyError& e) {
    EXPECT_NE(std::string(e.what()).find("table-txt-ph-"), std::string::npos) << e.what();
    EXPECT_FALSE(fs::exists(p.align_path("aud-ph", "txt-ph", 2)));
  }
  // Completed artifacts survive the failure.
  EXPECT_TRUE(fs::exists(p.stage1_path(true)));
}

TEST_F(PipelineRunTest, PartialReportListsMissingCells) {
  Pipeline p(tiny_config(dir_.path() / "a"), quiet(false));
  p.synth();
  p.train_stage1();
  p.train_stage2();
  p.train_text();
  p.align();
  p.eval_parallel();
  fs::remove(p.parallel_path("aud-ph+se", "txt-se-ph", 8));
  const auto r = p.report();
  EXPECT_FALSE(r["complete"].get<bool>());
  EXPECT_TRUE(r["parallel"]["8"]["top1"]["aud-ph+se"]["txt-se-ph"].is_null());
  EXPECT_TRUE(r["parallel"]["8"]["top1"]["aud-ph"]["txt-se-ph"].is_number());
  const auto missing = r["missing"].get<std::vector<std::string>>();
  EXPECT_NE(std::find(missing.begin(), missing.end(), "parallel aud-ph+se_txt-se-ph_n8 top1"),
            missing.end());
  EXPECT_NE(std::find(missing.begin(), missing.end(), "retrieval aud-ph"), missing.end());
  const std::string txt = slurp(dir_.path() / "a" / "report.txt");
  EXPECT_NE(txt.find("INCOMPLETE"), std::string::npos);
}

TEST_F(PipelineRunTest, EmptyReportBeforeAnyStage) {
  Pipeline p(tiny_config(dir_.path() / "a"), quiet(false));
  const auto r = p.report();
  EXPECT_FALSE(r["complete"].get<bool>());
  EXPECT_EQ(r["missing"][0], "corpus");
}

TEST_F(PipelineRunTest, ImportedCorpusKeysOnFileContent) {
  ExperimentConfig c = tiny_config(dir_.path() / "a");
  const auto corpus = generate_synthetic_corpus(c.resolved().synth.value()).corpus;
  const auto manifest = write_corpus(corpus, dir_.path() / "ext");
  c.synth.reset();
  c.corpus_path = manifest.string();
  Pipeline p(c, quiet());
  const std::string key = p.corpus_key();
  p.synth();
  EXPECT_EQ(p.corpus().segments, corpus.segments);
  {
    std::ofstream os(dir_.path() / "ext" / "lexicon.tsv", std::ios::app);
    os << "extra\t0\n";
  }
  EXPECT_NE(Pipeline(c, quiet()).corpus_key(), key);
}

#ifdef PASEVEC_CLI
int cli(const std::string& args) {
  const std::string cmd = std::string(PASEVEC_CLI) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

TEST_F(PipelineRunTest, CliExitCodes) {
  const ExperimentConfig c = tiny_config(dir_.path() / "run");
  const auto cfg = dir_.path() / "cfg.json";
  {
    std::ofstream os(cfg);
    os << nlohmann::json(c).dump(2);
  }
  const std::string base = "--config " + cfg.string();
  EXPECT_EQ(cli("train-stage2 " + base), 1);  // missing upstream
  EXPECT_EQ(cli("train-stage2 " + base + " --bogus"), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("run --config " + (dir_.path() / "none.json").string()), 2);
  EXPECT_EQ(cli("run " + base + " --force-stage nonsense"), 2);
  EXPECT_EQ(cli("--help"), 0);
  EXPECT_EQ(cli("synth " + base), 0);
  EXPECT_TRUE(fs::exists(dir_.path() / "run" / "cache"));
  const auto out2 = dir_.path() / "other";
  EXPECT_EQ(cli("run " + base + " --out " + out2.string()), 0);
  EXPECT_TRUE(fs::exists(out2 / "report.json"));
  // The subcommand chain with a shared cache reproduces the CLI run.
  ::setenv("PASEVEC_CACHE", (dir_.path() / "shared").c_str(), 1);
  for (const auto& s : kStages)
    ASSERT_EQ(cli(s + " " + base + " --out " + (dir_.path() / "chain").string()), 0) << s;
  ::unsetenv("PASEVEC_CACHE");
  EXPECT_TRUE(fs::exists(dir_.path() / "shared"));
  EXPECT_EQ(slurp(out2 / "report.json"), slurp(dir_.path() / "chain" / "report.json"));
}
#endif

}  // namespace
}  // namespace pasevec
