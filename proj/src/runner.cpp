// SPDX-License-Identifier: Apache-2.0

#include "jetbench/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "jetbench/augment.hpp"
#include "jetbench/kernels.hpp"
#include "jetbench/objectives.hpp"
#include "jetbench/optim.hpp"

namespace jetbench {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

enum class LossKind { kCrossEntropy, kNtXent, kSupCon, kMpm, kVae };

// Stream tags for mix_seed; each phase draws from its own substream.
constexpr std::uint64_t kTrainStream = 1000;
constexpr std::uint64_t kValStream = 2000;
constexpr std::uint64_t kSamplerStream = 3000;
constexpr std::uint64_t kHeadInitStream = 4000;

std::uint64_t step_seed(std::uint64_t seed, std::uint64_t stream, std::size_t epoch,
                        std::size_t step) {
  return mix_seed(mix_seed(seed, stream + epoch), step);
}

LossKind pretrain_kind(Objective o) {
  switch (o) {
    case Objective::kJetClr: return LossKind::kNtXent;
    case Objective::kSupCon: return LossKind::kSupCon;
    case Objective::kMpm: return LossKind::kMpm;
    case Objective::kClipVae: return LossKind::kVae;
    default: throw ConfigError("objective " + objective_name(o) + " has no pretraining phase");
  }
}

HeadSet heads_for(LossKind k) {
  HeadSet h;
  switch (k) {
    case LossKind::kCrossEntropy: h.classifier = true; break;
    case LossKind::kNtXent:
    case LossKind::kSupCon: h.projection = true; break;
    case LossKind::kMpm: h.mpm = true; break;
    case LossKind::kVae: h.vae = true; break;
  }
  return h;
}

json heads_json(const HeadSet& h) {
  return {{"classifier", h.classifier}, {"projection", h.projection}, {"mpm", h.mpm},
          {"vae", h.vae}};
}

std::vector<double> softmax_scores(const ad::Var& logits) {
  std::vector<double> out(logits->size());
  kernels::softmax_rows(logits->dim(0), logits->dim(1), logits->value, out);
  return out;
}

struct LossOut {
  ad::Var loss;                // null when the batch yields no usable loss
  std::vector<double> scores;  // classifier softmax, cross-entropy only
  std::vector<int> labels;
};

std::vector<Jet> renormalized(std::vector<Jet> jets) {
  for (auto& j : jets) j = normalize_jet(j);
  return jets;
}

LossOut compute_loss(ad::Tape& t, const JetModel& model, LossKind kind, std::span<const Jet> jets,
                     const AugmentationPipeline& views, std::size_t nmax, bool training,
                     std::mt19937_64& rng) {
  LossOut out;
  if (kind == LossKind::kNtXent || kind == LossKind::kSupCon) {
    std::vector<Jet> a, b;
    for (const auto& j : jets) {
      auto [x, y] = two_views(j, views, rng);
      a.push_back(std::move(x));
      b.push_back(std::move(y));
    }
    std::vector<Jet> all = renormalized(std::move(a));
    for (auto& j : renormalized(std::move(b))) all.push_back(std::move(j));
    const auto batch = build_batch(all, batch_width(all, nmax));
    const auto enc = model.forward_encoder(t, batch, training, rng);
    const auto proj = model.projection(t, enc.latent);
    out.loss = kind == LossKind::kNtXent ? ntxent_loss(t, proj)
                                         : supcon_loss(t, proj, batch.labels).loss;
    return out;
  }
  const auto batch = build_batch(jets, batch_width(jets, nmax));
  switch (kind) {
    case LossKind::kCrossEntropy: {
      const auto enc = model.forward_encoder(t, batch, training, rng);
      const auto logits = model.classifier(t, enc.latent, training, rng);
      out.loss = cross_entropy_loss(t, logits, batch.labels);
      out.scores = softmax_scores(logits);
      out.labels = batch.labels;
      break;
    }
    case LossKind::kMpm: {
      const auto plan = make_mask_plan(batch, rng);
      if (plan.masked() == 0) return out;
      const auto hidden = hide_masked_pairs(batch, plan);
      const auto enc = model.forward_encoder(t, hidden, training, rng, plan.flags);
      const std::size_t d = model.config().latent_dim;
      auto flat = ad::reshape(t, enc.tokens, {batch.batch * batch.nmax, d});
      auto pred = model.mpm_decoder(t, ad::gather_rows(t, flat, plan.rows));
      out.loss = mpm_loss(t, pred, plan);
      break;
    }
    case LossKind::kVae: {
      const auto enc = model.forward_encoder(t, batch, training, rng);
      std::normal_distribution<double> g(0.0, 1.0);
      std::vector<double> noise(batch.batch * model.config().vae_latent);
      for (auto& v : noise) v = g(rng);
      const auto vae = model.vae_head(t, enc.latent, noise, batch.nmax);
      out.loss = vae_loss(t, vae.mu, vae.log_var, vae.recon, batch).total;
      break;
    }
    default:
      break;
  }
  return out;
}

std::unique_ptr<Optimizer> make_optimizer(const TrainingSpec& spec, const NamedParams& params) {
  AdamWConfig adam{spec.lr, 0.9, 0.999, 1e-8, spec.weight_decay};
  if (spec.optimizer == "adamw") return std::make_unique<AdamW>(params, adam);
  // Hidden encoder matrices take the orthogonalized update; input layers,
  // vectors and heads stay on AdamW.
  NamedParams matrices, others;
  for (const auto& p : params) {
    const bool hidden = p.first.starts_with("encoder.") && p.second->shape.size() == 2 &&
                        p.first != "encoder.embed.0.weight" &&
                        p.first != "encoder.interaction.0.weight";
    (hidden ? matrices : others).push_back(p);
  }
  return std::make_unique<Muon>(matrices, others, MuonConfig{spec.muon_lr, 0.95, 5, 2, adam});
}

struct Validation {
  double loss = 0.0;
  std::optional<MetricReport> report;
};

Validation validate(const RunConfig& cfg, const JetModel& model, const ClassSources& pool,
                    LossKind kind) {
  StratifiedSampler sampler(SamplingPolicy::balanced(cfg.training.val_epoch_size), pool,
                            mix_seed(cfg.seed, kValStream));
  sampler.begin_epoch();
  const std::size_t bs = kind == LossKind::kCrossEntropy ? cfg.training.eval_batch_size
                                                         : cfg.training.batch_size;
  double sum = 0.0;
  std::size_t count = 0, step = 0;
  ScoreMatrix sm;
  while (!sampler.done()) {
    const auto jets = sampler.next_batch(bs);
    std::mt19937_64 rng(step_seed(cfg.seed, kValStream, 0, step++));
    if (jets.size() < 2) continue;
    ad::Tape t;
    t.set_enabled(false);
    const auto out = compute_loss(t, model, kind, jets, cfg.val_views, cfg.data.nmax, false, rng);
    if (!out.loss) continue;
    sum += out.loss->item() * static_cast<double>(jets.size());
    count += jets.size();
    sm.scores.insert(sm.scores.end(), out.scores.begin(), out.scores.end());
    sm.labels.insert(sm.labels.end(), out.labels.begin(), out.labels.end());
  }
  Validation v;
  v.loss = count ? sum / static_cast<double>(count) : std::nan("");
  if (kind == LossKind::kCrossEntropy) v.report = compute_report(sm);
  return v;
}

struct PhaseSetup {
  std::string phase;
  LossKind kind;
  std::size_t epochs;
  Phase select;
  bool freeze_encoder;
};

json checkpoint_metadata(const RunConfig& cfg, const JetModel& model, const std::string& phase,
                         std::size_t epoch) {
  return {{"config", to_json(cfg)},
          {"heads", heads_json(model.heads())},
          {"phase", phase},
          {"epoch", epoch}};
}

RunRecord train(const RunConfig& cfg, JetModel& model, const Dataset& data, const PhaseSetup& ps) {
  const auto t_start = std::chrono::steady_clock::now();
  fs::create_directories(cfg.output_dir);
  NamedParams trainable;
  for (const auto& [name, v] : model.params().items()) {
    const bool head = name.starts_with("head.");
    v->requires_grad = head || !ps.freeze_encoder;
    if (v->requires_grad) trainable.emplace_back(name, v);
  }
  std::vector<ad::Var> vars;
  for (const auto& p : trainable) vars.push_back(p.second);
  auto opt = make_optimizer(cfg.training, trainable);

  const std::uint64_t phase_tag = ps.phase == "pretrain" ? 1 : ps.phase == "finetune" ? 2 : 3;
  StratifiedSampler sampler(SamplingPolicy::balanced(cfg.training.epoch_size), data.train,
                            mix_seed(cfg.seed, kSamplerStream + phase_tag));
  RunRecord record;
  record.objective = objective_name(cfg.objective);
  record.phase = ps.phase;
  std::vector<ValidationPoint> history;

  for (std::size_t epoch = 1; epoch <= ps.epochs; ++epoch) {
    const auto t_epoch = std::chrono::steady_clock::now();
    sampler.begin_epoch();
    double sum = 0.0;
    std::size_t count = 0, step = 0;
    while (!sampler.done()) {
      const auto jets = sampler.next_batch(cfg.training.batch_size);
      std::mt19937_64 rng(step_seed(cfg.seed, kTrainStream + phase_tag * 1000, epoch, step++));
      if (jets.size() < 2) continue;
      ad::Tape t;
      model.params().zero_grad();
      const auto out =
          compute_loss(t, model, ps.kind, jets, cfg.train_views, cfg.data.nmax, true, rng);
      if (!out.loss) continue;
      t.backward(out.loss);
      if (cfg.training.clip_norm > 0.0) clip_gradients(vars, cfg.training.clip_norm);
      opt->step();
      const double l = out.loss->item();
      if (!std::isfinite(l))
        throw std::runtime_error("non-finite training loss in " + ps.phase + " epoch " +
                                 std::to_string(epoch));
      sum += l * static_cast<double>(jets.size());
      count += jets.size();
    }
    model.params().zero_grad();
    const auto val = validate(cfg, model, data.val, ps.kind);

    EpochRecord er;
    er.epoch = epoch;
    er.train_loss = count ? sum / static_cast<double>(count) : std::nan("");
    er.val_loss = val.loss;
    er.val_report = val.report;
    er.checkpoint = (fs::path(cfg.output_dir) / (ps.phase + "_epoch_" + std::to_string(epoch) + ".ckpt")).string();
    save_checkpoint(er.checkpoint,
                    snapshot(model, checkpoint_metadata(cfg, model, ps.phase, epoch).dump(), opt.get()));
    er.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_epoch).count();
    history.push_back({epoch, val.loss, val.report ? val.report->macro_auc : 0.0});
    if (val.report)
      spdlog::info("{} {} epoch {}/{}: train {:.4f} val {:.4f} val macro AUC {:.4f} ({:.1f}s)",
                   record.objective, ps.phase, epoch, ps.epochs, er.train_loss, er.val_loss,
                   val.report->macro_auc, er.seconds);
    else
      spdlog::info("{} {} epoch {}/{}: train {:.4f} val {:.4f} ({:.1f}s)", record.objective,
                   ps.phase, epoch, ps.epochs, er.train_loss, er.val_loss, er.seconds);
    record.epochs.push_back(std::move(er));
  }

  record.best_epoch = select_checkpoint(history, ps.select);
  record.best_checkpoint = record.epochs.at(record.best_epoch - 1).checkpoint;
  restore_params(model, load_checkpoint(record.best_checkpoint));
  record.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  std::ofstream(fs::path(cfg.output_dir) / (ps.phase + "_record.json")) << to_json(record).dump(2)
                                                                        << '\n';
  spdlog::info("{} {}: best epoch {} -> {}", record.objective, ps.phase, record.best_epoch,
               record.best_checkpoint);
  return record;
}

std::vector<Jet> generate_class(ClassLabel label, std::size_t n, std::mt19937_64& rng) {
  std::vector<Jet> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(normalize_jet(generate_toy_jet(label, rng)));
  return out;
}

// Labels for n jets in the natural mix, shuffled.
std::vector<ClassLabel> natural_labels(std::size_t n, std::mt19937_64& rng) {
  SamplingPolicy p;
  const auto f = natural_class_fractions();
  p.denominator = 100;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    p.weights[c] = static_cast<std::uint64_t>(std::lround(f[c] * 100.0));
  p.epoch_size = n;
  const auto counts = apportion(p);
  std::vector<ClassLabel> labels;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    labels.insert(labels.end(), counts[c], static_cast<ClassLabel>(c));
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

std::vector<fs::path> manifest_paths(const DataSpec& spec, const std::string& split) {
  const auto manifest = read_manifest(spec.manifest);
  const auto base = fs::path(spec.manifest).parent_path();
  std::vector<fs::path> out;
  for (const auto& f : manifest.split(split)) {
    fs::path p = fs::path(f).is_relative() ? base / f : fs::path(f);
    if (!fs::exists(p)) throw ConfigError("missing " + split + " split file " + p.string());
    out.push_back(p);
  }
  if (out.empty()) throw ConfigError("manifest lists no " + split + " files");
  return out;
}

std::vector<Jet> read_all(const std::vector<fs::path>& files) {
  std::vector<Jet> out;
  for (const auto& f : files)
    for (auto& j : read_jets(f)) out.push_back(normalize_jet(j));
  return out;
}

std::vector<Jet> flatten(const ClassSources& pools) {
  std::vector<Jet> out;
  for (const auto& p : pools)
    if (p) out.insert(out.end(), p->begin(), p->end());
  return out;
}

void append_scores(ScoreMatrix& sm, const JetModel& model, std::span<const Jet> jets,
                   std::size_t nmax, std::size_t batch_size) {
  std::mt19937_64 rng(0);
  for (std::size_t i = 0; i < jets.size(); i += batch_size) {
    const auto chunk = jets.subspan(i, std::min(batch_size, jets.size() - i));
    const auto batch = build_batch(chunk, batch_width(chunk, nmax));
    ad::Tape t;
    t.set_enabled(false);
    const auto enc = model.forward_encoder(t, batch, false, rng);
    const auto scores = softmax_scores(model.classifier(t, enc.latent, false, rng));
    sm.scores.insert(sm.scores.end(), scores.begin(), scores.end());
    sm.labels.insert(sm.labels.end(), batch.labels.begin(), batch.labels.end());
  }
}

}  // namespace

json to_json(const RunRecord& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"val_report", e.val_report ? to_json(*e.val_report) : json(nullptr)},
                      {"checkpoint", e.checkpoint},
                      {"seconds", e.seconds}});
  return {{"objective", r.objective},
          {"phase", r.phase},
          {"epochs", epochs},
          {"best_epoch", r.best_epoch},
          {"best_checkpoint", r.best_checkpoint},
          {"wall_clock_seconds", r.wall_clock_seconds}};
}

RunRecord run_record_from_json(const json& j) {
  RunRecord r;
  j.at("objective").get_to(r.objective);
  j.at("phase").get_to(r.phase);
  for (const auto& e : j.at("epochs")) {
    EpochRecord er;
    e.at("epoch").get_to(er.epoch);
    e.at("train_loss").get_to(er.train_loss);
    e.at("val_loss").get_to(er.val_loss);
    if (!e.at("val_report").is_null()) er.val_report = report_from_json(e.at("val_report"));
    e.at("checkpoint").get_to(er.checkpoint);
    e.at("seconds").get_to(er.seconds);
    r.epochs.push_back(std::move(er));
  }
  j.at("best_epoch").get_to(r.best_epoch);
  j.at("best_checkpoint").get_to(r.best_checkpoint);
  j.at("wall_clock_seconds").get_to(r.wall_clock_seconds);
  return r;
}

Dataset load_dataset(const DataSpec& spec) {
  Dataset d;
  if (spec.source == "toy") {
    std::mt19937_64 train_rng(mix_seed(spec.toy.seed, 1)), val_rng(mix_seed(spec.toy.seed, 2)),
        test_rng(mix_seed(spec.toy.seed, 3));
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const auto label = static_cast<ClassLabel>(c);
      d.train[c] = std::make_shared<const std::vector<Jet>>(
          generate_class(label, spec.toy.train_per_class, train_rng));
      d.val[c] = std::make_shared<const std::vector<Jet>>(
          generate_class(label, spec.toy.val_per_class, val_rng));
    }
    for (auto label : natural_labels(spec.toy.test_jets, test_rng))
      d.test.push_back(normalize_jet(generate_toy_jet(label, test_rng)));
    return d;
  }
  d.train = group_by_class(read_all(manifest_paths(spec, "train")));
  d.val = group_by_class(read_all(manifest_paths(spec, "val")));
  d.test_files = manifest_paths(spec, "test");
  return d;
}

ScoreMatrix score_jets(const JetModel& model, std::span<const Jet> jets, std::size_t nmax,
                       std::size_t batch_size) {
  ScoreMatrix sm;
  append_scores(sm, model, jets, nmax, batch_size);
  return sm;
}

RunRecord run_pretrain(const RunConfig& cfg) {
  cfg.validate();
  if (!is_pretraining(cfg.objective))
    throw ConfigError("pretrain: objective " + objective_name(cfg.objective) +
                      " is supervised; use train-supervised");
  const auto kind = pretrain_kind(cfg.objective);
  const Dataset data = load_dataset(cfg.data);
  JetModel model(cfg.encoder, heads_for(kind), cfg.seed);
  return train(cfg, model, data,
               {"pretrain", kind, cfg.training.pretrain_epochs, Phase::kPretrain, false});
}

RunRecord run_finetune(const RunConfig& cfg, const std::optional<fs::path>& pretrained) {
  cfg.validate();
  JetModel model(cfg.encoder, heads_for(LossKind::kCrossEntropy),
                 mix_seed(cfg.seed, kHeadInitStream));
  if (pretrained) {
    const auto ckpt = load_checkpoint(*pretrained);
    if (restore_params(model, ckpt, "encoder.") == 0)
      throw CheckpointError(pretrained->string() + " holds no encoder weights");
  }
  const Dataset data = load_dataset(cfg.data);
  return train(cfg, model, data,
               {"finetune", LossKind::kCrossEntropy, cfg.training.finetune_epochs,
                Phase::kFinetune, cfg.training.freeze_encoder});
}

RunRecord run_supervised(const RunConfig& cfg) {
  cfg.validate();
  if (is_pretraining(cfg.objective))
    throw ConfigError("train-supervised: objective " + objective_name(cfg.objective) +
                      " is a pretraining objective");
  const Dataset data = load_dataset(cfg.data);
  JetModel model(cfg.encoder, heads_for(LossKind::kCrossEntropy), cfg.seed);
  return train(cfg, model, data,
               {"supervised", LossKind::kCrossEntropy, cfg.training.supervised_epochs,
                Phase::kSupervised, cfg.training.freeze_encoder});
}

RunConfig config_from_checkpoint(const Checkpoint& ckpt) {
  const auto meta = json::parse(ckpt.metadata);
  return run_config_from_json(meta.at("config"));
}

JetModel model_from_checkpoint(const Checkpoint& ckpt) {
  const auto meta = json::parse(ckpt.metadata);
  const auto cfg = run_config_from_json(meta.at("config"));
  const auto& h = meta.at("heads");
  HeadSet heads{h.at("classifier").get<bool>(), h.at("projection").get<bool>(),
                h.at("mpm").get<bool>(), h.at("vae").get<bool>()};
  JetModel model(cfg.encoder, heads, 0);
  if (restore_params(model, ckpt) != model.params().items().size())
    throw CheckpointError("checkpoint does not cover every model parameter");
  return model;
}

MetricReport run_evaluate(const RunConfig& cfg, const fs::path& checkpoint,
                          const std::string& split) {
  if (split != "train" && split != "val" && split != "test")
    throw ConfigError("unknown split '" + split + "' (expected train, val or test)");
  const auto model = model_from_checkpoint(load_checkpoint(checkpoint));
  if (!model.heads().classifier)
    throw HeadError(checkpoint.string() + " has no classifier head; fine-tune it first");
  const std::size_t nmax = cfg.data.nmax, bs = cfg.training.eval_batch_size;
  ScoreMatrix sm;
  if (cfg.data.source == "toy") {
    const Dataset data = load_dataset(cfg.data);
    const auto jets = split == "test" ? data.test : flatten(split == "train" ? data.train : data.val);
    append_scores(sm, model, jets, nmax, bs);
  } else {
    NaturalStream stream(manifest_paths(cfg.data, split));
    std::vector<Jet> chunk;
    while (auto j = stream.next()) {
      chunk.push_back(normalize_jet(*j));
      if (chunk.size() == bs) {
        append_scores(sm, model, chunk, nmax, bs);
        chunk.clear();
      }
    }
    if (!chunk.empty()) append_scores(sm, model, chunk, nmax, bs);
  }
  return compute_report(sm);
}

SplitManifest generate_dataset(const GenDataSpec& spec, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::mt19937_64 rng(spec.seed);
  const auto format = spec.format == "jsonl" ? JetFileFormat::kJsonLines : JetFileFormat::kBinary;
  std::vector<std::string> names;
  for (std::size_t f = 0; f < spec.files; ++f) {
    std::ostringstream name;
    name << "jets_" << std::setw(3) << std::setfill('0') << f
         << (format == JetFileFormat::kJsonLines ? ".jsonl" : ".jetb");
    std::vector<Jet> jets;
    for (auto label : natural_labels(spec.jets_per_file, rng))
      jets.push_back(generate_toy_jet(label, rng));
    write_jets(out_dir / name.str(), jets, format);
    names.push_back(name.str());
  }
  auto manifest = split_files(names, spec.split, rng);
  write_manifest(out_dir / "manifest.txt", manifest);
  return manifest;
}

void init_logging(const std::string& fallback) {
  const char* env = std::getenv("JETBENCH_LOG_LEVEL");
  spdlog::set_level(spdlog::level::from_str(env ? env : fallback));
}

}  // namespace jetbench
