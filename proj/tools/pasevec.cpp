// tools/pasevec.cpp

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
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pasevec/pipeline.hpp"

namespace {

struct Args {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::vector<std::string> force;
};

void add_common(CLI::App* cmd, Args& a) {
  cmd->add_option("--config", a.config, "experiment configuration (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", a.seed, "global seed, overrides the config");
  cmd->add_option("--out", a.out, "run directory, overrides the config");
  cmd->add_option("--force-stage", a.force, "recompute this stage even if cached")
      ->check(CLI::IsMember(pasevec::kStages));
}

}  // namespace

int main(int argc, char** argv) {
  const char* usage =
      "Two-stage audio word embeddings: training, alignment with text embeddings\n"
      "and spoken document retrieval.\n"
      "Artifacts are cached under $PASEVEC_CACHE, or <out>/cache when unset.";
  CLI::App app{usage, "pasevec"};
  app.require_subcommand(1, 1);
  Args args;
  struct Entry {
    std::string name, help;
  };
  const std::vector<Entry> entries{
      {"run", "run every stage and write the report"},
      {"synth", "generate (or import) the corpus"},
      {"train-stage1", "train the phonetic/speaker autoencoders, run speaker probes"},
      {"train-stage2", "train the semantic skip-gram models on v_p"},
      {"train-text", "train the txt-ph, txt-se-1h and txt-se-ph references"},
      {"align", "fit the audio-to-text transforms for every tier"},
      {"eval-parallel", "top-k nearest accuracy for every fitted transform"},
      {"retrieve", "semantic document retrieval for every audio embedding"},
      {"report", "assemble report.json and report.txt from cached results"}};
  for (const auto& e : entries) add_common(app.add_subcommand(e.name, e.help), args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    auto* sub = app.get_subcommand(cmd);
    pasevec::ExperimentConfig cfg = pasevec::load_experiment_config(args.config);
    if (sub->count("--seed")) cfg.seed = args.seed;
    if (sub->count("--out")) cfg.out = args.out;
    pasevec::PipelineOptions opt;
    if (const char* c = std::getenv("PASEVEC_CACHE"); c && *c) opt.cache = c;
    opt.force.insert(args.force.begin(), args.force.end());
    opt.run_upstream = cmd == "run";
    pasevec::Pipeline p(cfg, opt);
    if (cmd == "run")
      p.run();
    else
      p.run_stage(cmd);
  } catch (const pasevec::ConfigError& e) {
    std::cerr << "pasevec: configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "pasevec " << cmd << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
