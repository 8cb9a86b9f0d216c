// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "jetbench/checkpoint.hpp"
#include "jetbench/objectives.hpp"
#include "jetbench/runner.hpp"
#include "tiny_model.hpp"

using namespace jetbench;
using namespace jetbench::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("jetbench_runner_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig small_run(Objective o, const fs::path& out) {
  auto c = RunConfig::defaults(o, "desk");
  c.encoder = tiny_config(o == Objective::kSupervisedModified);
  c.output_dir = out.string();
  c.data.nmax = 16;
  c.train_views.nmax = c.val_views.nmax = 16;
  c.data.toy = {5, 60, 20, 280};
  c.training.epoch_size = 210;
  c.training.val_epoch_size = 70;
  c.training.batch_size = 16;
  c.training.eval_batch_size = 64;
  c.training.pretrain_epochs = c.training.finetune_epochs = c.training.supervised_epochs = 2;
  return c;
}

std::string bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

RunRecord without_timing(RunRecord r) {
  r.wall_clock_seconds = 0.0;
  for (auto& e : r.epochs) e.seconds = 0.0;
  return r;
}

}  // namespace

TEST_CASE("supervised run writes checkpoints and a record") {
  init_logging("warn");
  const auto out = scratch("supervised");
  const auto cfg = small_run(Objective::kSupervised, out);
  const auto rec = run_supervised(cfg);
  CHECK(rec.phase == "supervised");
  CHECK(rec.objective == "supervised");
  REQUIRE(rec.epochs.size() == 2);
  for (const auto& e : rec.epochs) {
    CHECK(fs::exists(e.checkpoint));
    REQUIRE(e.val_report.has_value());
    CHECK(std::isfinite(e.train_loss));
  }
  std::vector<ValidationPoint> h;
  for (const auto& e : rec.epochs) h.push_back({e.epoch, e.val_loss, e.val_report->macro_auc});
  CHECK(rec.best_epoch == select_checkpoint(h, Phase::kSupervised));
  CHECK(rec.best_checkpoint == rec.epochs[rec.best_epoch - 1].checkpoint);

  std::ifstream in(out / "supervised_record.json");
  CHECK(run_record_from_json(nlohmann::json::parse(in)) == rec);
  CHECK(run_record_from_json(to_json(rec)) == rec);

  const auto ck = load_checkpoint(rec.best_checkpoint);
  CHECK(to_json(config_from_checkpoint(ck)) == to_json(cfg));
  CHECK(ck.optimizer.has_value());

  // Evaluation is deterministic.
  const auto a = run_evaluate(cfg, rec.best_checkpoint, "test");
  const auto b = run_evaluate(cfg, rec.best_checkpoint, "test");
  CHECK(a == b);
  CHECK(run_evaluate(cfg, rec.best_checkpoint, "val").macro_auc == doctest::Approx(rec.epochs[rec.best_epoch - 1].val_report->macro_auc).epsilon(0.2));
  CHECK_THROWS_AS(run_evaluate(cfg, rec.best_checkpoint, "holdout"), ConfigError);

  // A repeat run reproduces every byte.
  std::vector<std::string> first;
  for (const auto& e : rec.epochs) first.push_back(bytes_of(e.checkpoint));
  const auto again = run_supervised(cfg);
  CHECK(without_timing(again) == without_timing(rec));
  for (std::size_t i = 0; i < rec.epochs.size(); ++i) CHECK(bytes_of(rec.epochs[i].checkpoint) == first[i]);
  fs::remove_all(out);
}

TEST_CASE("lifecycle guards") {
  const auto out = scratch("guards");
  CHECK_THROWS_AS(run_pretrain(small_run(Objective::kSupervised, out)), ConfigError);
  CHECK_THROWS_AS(run_supervised(small_run(Objective::kMpm, out)), ConfigError);
  auto bad = small_run(Objective::kSupervised, out);
  bad.training.batch_size = 1;
  CHECK_THROWS_AS(run_supervised(bad), ConfigError);
  fs::remove_all(out);
}

TEST_CASE("pretrain then fine-tune with a frozen encoder") {
  const auto out = scratch("frozen");
  auto cfg = small_run(Objective::kJetClr, out);
  cfg.training.pretrain_epochs = 1;
  const auto pre = run_pretrain(cfg);
  CHECK(pre.phase == "pretrain");
  CHECK(!pre.epochs[0].val_report.has_value());
  const auto pck = load_checkpoint(pre.best_checkpoint);
  CHECK_THROWS_AS(run_evaluate(cfg, pre.best_checkpoint, "test"), HeadError);

  cfg.training.freeze_encoder = true;
  cfg.training.finetune_epochs = 1;
  const auto ft = run_finetune(cfg, pre.best_checkpoint);
  const auto fck = load_checkpoint(ft.best_checkpoint);
  std::size_t encoder_tensors = 0;
  for (const auto& t : fck.params) {
    if (!t.name.starts_with("encoder.")) continue;
    ++encoder_tensors;
    const auto it = std::find_if(pck.params.begin(), pck.params.end(), [&](const auto& p) { return p.name == t.name; });
    REQUIRE(it != pck.params.end());
    CHECK(it->data == t.data);
  }
  CHECK(encoder_tensors > 0);
  // Fresh classifier head, no pretraining head carried over.
  for (const auto& t : fck.params) CHECK(!t.name.starts_with("head.projection"));
  CHECK(std::any_of(fck.params.begin(), fck.params.end(), [](const auto& t) { return t.name.starts_with("head.classifier"); }));
  CHECK(run_evaluate(cfg, ft.best_checkpoint, "test").macro_auc > 0.0);
  fs::remove_all(out);
}

TEST_CASE("file-backed datasets") {
  const auto dir = scratch("files");
  GenDataSpec g;
  g.seed = 3;
  g.files = 6;
  g.jets_per_file = 150;
  g.format = "jsonl";
  g.split = {0.5, 0.25, 0.25};
  const auto m = generate_dataset(g, dir / "data");
  CHECK(m.train.size() == 3);
  CHECK(fs::exists(dir / "data" / "manifest.txt"));
  CHECK(generate_dataset(g, dir / "copy").train == m.train);
  CHECK(bytes_of(dir / "data" / m.train[0]) == bytes_of(dir / "copy" / m.train[0]));

  auto cfg = small_run(Objective::kSupervised, dir / "run");
  cfg.data.source = "files";
  cfg.data.manifest = (dir / "data" / "manifest.txt").string();
  cfg.training.supervised_epochs = 1;
  const auto rec = run_supervised(cfg);
  const auto report = run_evaluate(cfg, rec.best_checkpoint, "test");
  CHECK(report.macro_auc > 0.0);
  CHECK(report.macro_auc <= 1.0);
  fs::remove_all(dir);
}

TEST_CASE("untrained encoder scores near chance") {
  const auto cfg = RunConfig::defaults(Objective::kSupervised, "desk");
  JetModel model(cfg.encoder, HeadSet{true}, 17);
  std::mt19937_64 rng(18);
  std::vector<Jet> jets;
  for (std::size_t i = 0; i < 1400; ++i) jets.push_back(normalize_jet(generate_toy_jet(class_at(i % kNumClasses), rng)));
  const double auc = macro_auc(score_jets(model, jets, cfg.data.nmax, 256));
  INFO("untrained macro AUC " << auc);
  CHECK(auc >= 0.4);
  CHECK(auc <= 0.6);
}

TEST_CASE("self-check passes") {
  std::ostringstream os;
  CHECK(run_selfcheck(os));
  CHECK(os.str().find("FAIL") == std::string::npos);
}

TEST_CASE("masked particle pretraining beats the mean predictor") {
  const auto out = scratch("mpm");
  auto cfg = small_run(Objective::kMpm, out);
  cfg.encoder = EncoderConfig::desk();
  cfg.data.nmax = 32;
  cfg.data.toy = {6, 200, 40, 100};
  cfg.training.epoch_size = 1400;
  cfg.training.val_epoch_size = 280;
  cfg.training.batch_size = 32;
  cfg.training.pretrain_epochs = 2;
  const auto rec = run_pretrain(cfg);
  const auto model = model_from_checkpoint(load_checkpoint(rec.best_checkpoint));

  // Mean continuous features and log type frequencies of the training pool.
  const auto data = load_dataset(cfg.data);
  std::vector<double> mean(kNumFeatures, 0.0);
  double n = 0.0;
  for (const auto& pool : data.train)
    for (const auto& j : *pool) {
      const auto b = build_batch(std::span(&j, 1), cfg.data.nmax);
      for (std::size_t i = 0; i < b.counts[0]; ++i, n += 1.0)
        for (std::size_t f = 0; f < kNumFeatures; ++f) mean[f] += b.feature(0, i, f);
    }
  for (auto& v : mean) v /= n;
  for (std::size_t f = kNumContinuousFeatures; f < kNumFeatures; ++f) mean[f] = std::log(std::max(mean[f], 1e-12));

  double model_loss = 0.0, base_loss = 0.0;
  std::mt19937_64 rng(99);
  std::vector<Jet> val;
  for (const auto& pool : data.val) val.insert(val.end(), pool->begin(), pool->end());
  for (std::size_t s = 0; s + 32 <= val.size(); s += 32) {
    const auto b = build_batch(std::span(val).subspan(s, 32), cfg.data.nmax);
    const auto plan = make_mask_plan(b, rng);
    ad::Tape t;
    t.set_enabled(false);
    std::mt19937_64 r(0);
    const auto enc = model.forward_encoder(t, hide_masked_pairs(b, plan), false, r, plan.flags);
    auto flat = ad::reshape(t, enc.tokens, {b.batch * b.nmax, model.config().latent_dim});
    model_loss += mpm_loss(t, model.mpm_decoder(t, ad::gather_rows(t, flat, plan.rows)), plan)->item();
    std::vector<double> pred;
    for (std::size_t r2 = 0; r2 < plan.masked(); ++r2) pred.insert(pred.end(), mean.begin(), mean.end());
    base_loss += mpm_loss(t, ad::tensor({plan.masked(), kNumFeatures}, pred), plan)->item();
  }
  INFO("model " << model_loss << " baseline " << base_loss);
  CHECK(model_loss < base_loss);
  fs::remove_all(out);
}

TEST_CASE("contrastive validation loss decreases") {
  const auto out = scratch("jetclr");
  auto cfg = small_run(Objective::kJetClr, out);
  cfg.encoder = EncoderConfig::desk();
  cfg.data.nmax = 32;
  cfg.train_views.nmax = cfg.val_views.nmax = 32;
  cfg.data.toy = {7, 200, 40, 100};
  cfg.training.epoch_size = 1400;
  cfg.training.val_epoch_size = 280;
  cfg.training.batch_size = 32;
  cfg.training.pretrain_epochs = 3;
  const auto rec = run_pretrain(cfg);
  INFO("val " << rec.epochs.front().val_loss << " -> " << rec.epochs.back().val_loss);
  CHECK(rec.epochs.back().val_loss < rec.epochs.front().val_loss);
  fs::remove_all(out);
}
