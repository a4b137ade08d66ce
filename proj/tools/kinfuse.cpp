// Copyright 2026 The kinfuse Authors
// SPDX-License-Identifier: Apache-2.0

// kinfuse: pipeline driver. Every stage is a subcommand reading one run config.
//
//   kinfuse make-synthetic --out DIR
//   kinfuse kg-ingest --config DIR/config.json
//   kinfuse ground | score-relevance | build-graphs | train | eval | predict --config ...
//   kinfuse gradcheck
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kinfuse/config.hpp"
#include "kinfuse/errors.hpp"
#include "kinfuse/gradsuite.hpp"
#include "kinfuse/stages.hpp"
#include "kinfuse/synthetic.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::size_t> workers;
  bool raw_conceptnet = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "run config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--override", f.overrides, "dot-path override key=value (repeatable)");
  cmd->add_option("--workers", f.workers, "worker threads for per-record stages")->check(CLI::PositiveNumber);
  cmd->add_flag("--raw-conceptnet", f.raw_conceptnet, "kg is the 5-column ConceptNet assertion dump");
}

kinfuse::RunConfig resolve(const CommonFlags& f) {
  kinfuse::RunConfig cfg = kinfuse::RunConfig::load(f.config);
  for (const auto& o : f.overrides) cfg.apply_override(o);
  if (f.workers) cfg.set_workers(*f.workers);
  if (f.raw_conceptnet) cfg.set_raw_conceptnet(true);
  return cfg;
}

int run_gradcheck(int instances, std::uint64_t seed) {
  bool ok = true;
  for (const auto& r : kinfuse::run_gradient_suite(instances, seed)) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " max_rel_error=" << r.max_rel_error
              << " checked=" << r.checked << " skipped=" << r.skipped << '\n';
    ok = ok && r.passed;
  }
  std::cout << (ok ? "gradient suite passed" : "gradient suite FAILED") << std::endl;
  return ok ? 0 : kinfuse::exit_code_for(kinfuse::ErrorCategory::numeric);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kinfuse: knowledge-infused multimodal classification pipeline"};
  app.require_subcommand(1);

  std::string synth_out;
  std::uint64_t synth_seed = 1;
  kinfuse::SyntheticConfig synth;
  auto* make_synth = app.add_subcommand("make-synthetic", "write a synthetic dataset and its config.json");
  make_synth->add_option("--out", synth_out, "output directory")->required();
  make_synth->add_option("--seed", synth_seed, "training seed written to the config");
  make_synth->add_option("--data-seed", synth.seed, "generator seed");
  make_synth->add_option("--records", synth.records, "record count");
  make_synth->add_option("--train", synth.train, "train split size");
  make_synth->add_option("--val", synth.val, "validation split size");

  CommonFlags flags;
  struct Stage {
    const char* name;
    const char* help;
  };
  const Stage stages[] = {{"kg-ingest", "parse the edge file into a knowledge store"},
                          {"ground", "link meme text and captions to concepts"},
                          {"score-relevance", "cosine relevance of candidate nodes"},
                          {"build-graphs", "prune and assemble per-record working graphs"},
                          {"train", "train and write the best checkpoint and a JSON-lines log"},
                          {"eval", "metrics of a checkpoint on eval.split"},
                          {"predict", "per-record predictions (never reads captions)"}};
  std::vector<CLI::App*> stage_cmds;
  for (const Stage& s : stages) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, flags);
    stage_cmds.push_back(cmd);
  }

  int gc_instances = 20;
  std::uint64_t gc_seed = 2024;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  gradcheck->add_option("--instances", gc_instances, "random instances per op")->check(CLI::PositiveNumber);
  gradcheck->add_option("--seed", gc_seed, "suite seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kinfuse::exit_code_for(kinfuse::ErrorCategory::config);
  }

  try {
    if (make_synth->parsed()) {
      kinfuse::write_synthetic_run(synth, synth_seed, synth_out);
      std::cout << (std::filesystem::path(synth_out) / "config.json").string() << std::endl;
      return 0;
    }
    if (gradcheck->parsed()) return run_gradcheck(gc_instances, gc_seed);

    const kinfuse::RunConfig cfg = resolve(flags);
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "kg-ingest") {
      std::cout << kinfuse::stage_kg_ingest(cfg).dump() << std::endl;
    } else if (name == "ground") {
      std::cout << kinfuse::stage_ground(cfg).dump() << std::endl;
    } else if (name == "score-relevance") {
      std::cout << kinfuse::stage_score_relevance(cfg).dump() << std::endl;
    } else if (name == "build-graphs") {
      std::cout << kinfuse::stage_build_graphs(cfg).dump() << std::endl;
    } else if (name == "train") {
      std::cout << kinfuse::stage_train(cfg).dump() << std::endl;
    } else if (name == "eval") {
      std::cout << kinfuse::to_json(kinfuse::stage_eval(cfg)).dump(2) << std::endl;
    } else if (name == "predict") {
      const std::string lines = kinfuse::stage_predict(cfg);
      if (cfg.path("predictions").empty()) std::cout << lines << std::flush;
    }
    return 0;
  } catch (const kinfuse::Error& e) {
    std::cerr << "kinfuse: " << e.what() << std::endl;
    return kinfuse::exit_code_for(e.category());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "kinfuse: data error: " << e.what() << std::endl;
    return kinfuse::exit_code_for(kinfuse::ErrorCategory::data);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "kinfuse: data error: " << e.what() << std::endl;
    return kinfuse::exit_code_for(kinfuse::ErrorCategory::data);
  } catch (const std::exception& e) {
    std::cerr << "kinfuse: " << e.what() << std::endl;
    return 1;
  }
}
