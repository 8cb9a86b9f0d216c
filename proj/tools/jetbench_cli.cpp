// SPDX-License-Identifier: Apache-2.0
//
// jetbench: pretrain, fine-tune, train and evaluate jet classifiers.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "jetbench/runner.hpp"

using namespace jetbench;

int main(int argc, char** argv) {
  CLI::App app{"jetbench: pretraining objectives for particle-cloud jet tagging"};
  app.require_subcommand(1);

  std::string config, from, ckpt, split = "test", out, spec;

  auto* pretrain = app.add_subcommand("pretrain", "Pretrain an encoder with its objective head");
  pretrain->add_option("--config", config, "YAML run configuration")->required()->check(CLI::ExistingFile);

  auto* finetune = app.add_subcommand("finetune", "Fine-tune a 7-way classifier from a checkpoint");
  finetune->add_option("--config", config, "YAML run configuration")->required()->check(CLI::ExistingFile);
  finetune->add_option("--from", from, "Pretrained checkpoint")->required()->check(CLI::ExistingFile);

  auto* supervised = app.add_subcommand("train-supervised", "Train a classifier from scratch");
  supervised->add_option("--config", config, "YAML run configuration")->required()->check(CLI::ExistingFile);

  auto* evaluate = app.add_subcommand("evaluate", "Compute the metric report for a classifier checkpoint");
  evaluate->add_option("--ckpt", ckpt, "Classifier checkpoint")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  evaluate->add_option("--out", out, "Where to write the JSON report")->required();
  evaluate->add_option("--config", config, "Override the data section recorded in the checkpoint")
      ->check(CLI::ExistingFile);

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset and split manifest");
  gen->add_option("--spec", spec, "YAML dataset spec")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Output directory")->required();

  auto* selfcheck = app.add_subcommand("selfcheck", "Run gradient and invariance checks");

  CLI11_PARSE(app, argc, argv);
  init_logging("info");

  try {
    if (pretrain->parsed()) {
      run_pretrain(load_run_config(config));
    } else if (finetune->parsed()) {
      run_finetune(load_run_config(config), std::filesystem::path(from));
    } else if (supervised->parsed()) {
      run_supervised(load_run_config(config));
    } else if (evaluate->parsed()) {
      RunConfig cfg = config.empty() ? config_from_checkpoint(load_checkpoint(ckpt))
                                     : load_run_config(config);
      const auto report = run_evaluate(cfg, ckpt, split);
      std::ofstream(out) << to_json(report).dump(2) << '\n';
      std::cout << render_tables({{split, report}});
    } else if (gen->parsed()) {
      const auto manifest = generate_dataset(load_gen_spec(spec), out);
      spdlog::info("wrote {} train, {} val, {} test files to {}", manifest.train.size(),
                   manifest.val.size(), manifest.test.size(), out);
    } else if (selfcheck->parsed()) {
      return run_selfcheck(std::cout) ? 0 : 1;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
