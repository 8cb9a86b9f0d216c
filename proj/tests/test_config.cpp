// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>

#include "jetbench/config.hpp"

using namespace jetbench;

namespace {

RunConfig from_yaml(const std::string& text) { return run_config_from_json(yaml_to_json(text)); }

}  // namespace

TEST_CASE("objective names") {
  for (auto o : {Objective::kSupervised, Objective::kSupervisedModified, Objective::kJetClr,
                 Objective::kSupCon, Objective::kMpm, Objective::kClipVae})
    CHECK(objective_from_name(objective_name(o)) == o);
  CHECK(objective_name(Objective::kClipVae) == "clip_vae");
  CHECK_THROWS_AS(objective_from_name("simclr"), ConfigError);
  CHECK(!is_pretraining(Objective::kSupervisedModified));
  CHECK(is_pretraining(Objective::kMpm));
}

TEST_CASE("presets") {
  const auto paper = RunConfig::defaults(Objective::kSupCon, "paper");
  CHECK(paper.data.nmax == 128);
  CHECK(paper.training.epoch_size == 2'000'000);
  CHECK(paper.training.batch_size == 256);
  CHECK(paper.training.pretrain_epochs == 50);
  CHECK(paper.encoder == EncoderConfig::paper());
  CHECK(!paper.train_views.steps.empty());
  paper.validate();
  const auto mod = RunConfig::defaults(Objective::kSupervisedModified, "desk");
  CHECK(mod.encoder == EncoderConfig::desk_modified());
  CHECK(mod.train_views.steps.empty());
  CHECK_THROWS_AS(RunConfig::defaults(Objective::kMpm, "huge"), ConfigError);
  const double total = [] {
    const auto f = natural_class_fractions();
    return std::accumulate(f.begin(), f.end(), 0.0);
  }();
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("YAML overrides and JSON round trip") {
  const auto c = from_yaml(R"(
objective: jetclr
seed: 42
output_dir: out/x
encoder:
  latent_dim: 16
  n_heads: 4
data:
  nmax: 24
  toy:
    train_per_class: 100
training:
  batch_size: 32
  optimizer: muon
  lr: 5.0e-4
  freeze_encoder: true
)");
  CHECK(c.objective == Objective::kJetClr);
  CHECK(c.seed == 42);
  CHECK(c.output_dir == "out/x");
  CHECK(c.encoder.latent_dim == 16);
  CHECK(c.encoder.n_heads == 4);
  CHECK(c.encoder.embed_hidden == EncoderConfig::desk().embed_hidden);
  CHECK(c.data.nmax == 24);
  CHECK(c.train_views.nmax == 24);
  CHECK(c.data.toy.train_per_class == 100);
  CHECK(c.training.batch_size == 32);
  CHECK(c.training.optimizer == "muon");
  CHECK(c.training.lr == 5e-4);
  CHECK(c.training.freeze_encoder);

  const auto back = run_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  CHECK(to_json(back) == to_json(c));
  for (auto o : {Objective::kSupervised, Objective::kSupCon, Objective::kMpm, Objective::kClipVae}) {
    const auto d = RunConfig::defaults(o, "desk");
    CHECK(to_json(run_config_from_json(to_json(d))) == to_json(d));
  }
}

TEST_CASE("augmentation steps round trip") {
  const auto p = AugmentationPipeline::jetclr(64);
  for (const auto& s : p.steps) CHECK(to_json(augment_step_from_json(to_json(s))) == to_json(s));
}

TEST_CASE("invalid configs are rejected") {
  CHECK_THROWS_AS(from_yaml("seed: 3\n"), ConfigError);
  CHECK_THROWS_AS(from_yaml("objective: mpm\ncolour: red\n"), ConfigError);
  CHECK_THROWS_AS(from_yaml("objective: mpm\ntraining:\n  batch: 3\n"), ConfigError);
  CHECK_THROWS_AS(from_yaml("objective: mpm\ntraining:\n  batch_size: 1\n"), ConfigError);
  CHECK_THROWS_AS(from_yaml("objective: mpm\ntraining:\n  optimizer: sgd\n"), ConfigError);
  CHECK_THROWS_AS(from_yaml("objective: mpm\ntraining:\n  lr: 0\n"), ConfigError);
  CHECK_THROWS_AS(from_yaml("objective: mpm\ntraining:\n  epoch_size: 10\n"), ConfigError);
  CHECK_THROWS_AS(from_yaml("objective: mpm\ndata:\n  source: files\n"), ConfigError);
  CHECK_THROWS_AS(from_yaml("objective: mpm\ndata:\n  source: web\n"), ConfigError);
  CHECK_THROWS_AS(from_yaml("objective: mpm\ndata:\n  nmax: 1\n"), ConfigError);
  CHECK_THROWS_AS(from_yaml("objective: mpm\nencoder:\n  n_heads: 5\n"), ConfigError);
  CHECK_THROWS_AS(from_yaml("objective: mpm\nencoder:\n  heads: 4\n"), ConfigError);
  CHECK_THROWS_AS(from_yaml("objective: mpm\naugment:\n  train:\n    - {type: rotate}\n"), ConfigError);
  CHECK_THROWS_AS(from_yaml("objective: [unclosed\n"), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/run.yaml"), ConfigError);
}

TEST_CASE("config files resolve relative manifests") {
  const auto dir = std::filesystem::temp_directory_path() / "jetbench_config_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "run.yaml");
    out << "objective: supervised\ndata:\n  source: files\n  manifest: data/manifest.txt\n";
  }
  const auto c = load_run_config(dir / "run.yaml");
  CHECK(c.data.manifest == (dir / "data/manifest.txt").lexically_normal().string());
  std::filesystem::remove_all(dir);
}

TEST_CASE("gen-data specs") {
  const auto g = gen_spec_from_json(yaml_to_json(
      "seed: 5\nfiles: 12\njets_per_file: 40\nformat: jsonl\nsplit: {train: 0.5, val: 0.25, test: 0.25}\n"));
  CHECK(g.seed == 5);
  CHECK(g.files == 12);
  CHECK(g.jets_per_file == 40);
  CHECK(g.format == "jsonl");
  CHECK(g.split[1] == 0.25);
  CHECK_THROWS_AS(gen_spec_from_json(yaml_to_json("files: 2\n")), ConfigError);
  CHECK_THROWS_AS(gen_spec_from_json(yaml_to_json("format: csv\n")), ConfigError);
  CHECK_THROWS_AS(gen_spec_from_json(yaml_to_json("split: {train: 0, val: 1, test: 1}\n")), ConfigError);
}
