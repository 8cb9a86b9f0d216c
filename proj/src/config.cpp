// SPDX-License-Identifier: Apache-2.0

#include "jetbench/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace jetbench {
namespace {

using nlohmann::json;

constexpr std::array<const char*, 6> kObjectiveNames = {
    "supervised", "supervised_modified", "jetclr", "supcon", "mpm", "clip_vae"};

// Reads keys of one JSON object, remembering which were consumed so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "must be a mapping");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0))
          throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError(where() + "key '" + key + "' has the wrong type (got " + v.dump() + ")");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw ConfigError(where() + "unknown key '" + key + "'");
  }

  std::string path() const { return path_; }

 private:
  std::string where() const { return path_.empty() ? "config: " : "config." + path_ + ": "; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json scalar_to_json(const YAML::Node& n) {
  const std::string& s = n.Scalar();
  if (n.Tag() == "!") return s;  // quoted
  if (s == "true" || s == "True") return true;
  if (s == "false" || s == "False") return false;
  if (s == "null" || s == "~" || s.empty()) return nullptr;
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  return s;
}

json node_to_json(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Map: {
      json out = json::object();
      for (const auto& kv : n) {
        const auto key = kv.first.as<std::string>();
        if (out.contains(key)) throw ConfigError("config: duplicate key '" + key + "'");
        out[key] = node_to_json(kv.second);
      }
      return out;
    }
    case YAML::NodeType::Sequence: {
      json out = json::array();
      for (const auto& v : n) out.push_back(node_to_json(v));
      return out;
    }
    case YAML::NodeType::Scalar:
      return scalar_to_json(n);
    default:
      return nullptr;
  }
}

AugmentationPipeline pipeline_from_json(const json& j, AugmentMode mode, std::size_t nmax,
                                        const std::string& path) {
  if (!j.is_array()) throw ConfigError("config." + path + ": must be a list of steps");
  AugmentationPipeline p{mode, {}, nmax};
  for (const auto& s : j) p.steps.push_back(augment_step_from_json(s));
  return p;
}

json pipeline_to_json(const AugmentationPipeline& p) {
  json out = json::array();
  for (const auto& s : p.steps) out.push_back(to_json(s));
  return out;
}

}  // namespace

std::string objective_name(Objective o) { return kObjectiveNames[static_cast<std::size_t>(o)]; }

Objective objective_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kObjectiveNames.size(); ++i)
    if (name == kObjectiveNames[i]) return static_cast<Objective>(i);
  throw ConfigError("unknown objective '" + name +
                    "' (expected supervised, supervised_modified, jetclr, supcon, mpm or "
                    "clip_vae)");
}

bool is_pretraining(Objective o) {
  return o != Objective::kSupervised && o != Objective::kSupervisedModified;
}

std::array<double, kNumClasses> natural_class_fractions() {
  // bb, tauh_taue, tauh_taumu, tauh_tauh, qqb_bcs, qq, QCD
  return {0.08, 0.03, 0.03, 0.04, 0.15, 0.12, 0.55};
}

RunConfig RunConfig::defaults(Objective objective, const std::string& preset) {
  RunConfig c;
  c.objective = objective;
  c.preset = preset;
  const bool modified = objective == Objective::kSupervisedModified;
  if (preset == "desk") {
    c.encoder = modified ? EncoderConfig::desk_modified() : EncoderConfig::desk();
  } else if (preset == "paper") {
    c.encoder = modified ? EncoderConfig::paper_modified() : EncoderConfig::paper();
    c.data.nmax = 128;
    c.training.epoch_size = 2'000'000;
    c.training.val_epoch_size = 200'000;
    c.training.pretrain_epochs = 50;
    c.training.finetune_epochs = 20;
    c.training.supervised_epochs = 20;
    c.training.batch_size = 256;
    c.training.eval_batch_size = 512;
    c.training.lr = 1e-4;
  } else {
    throw ConfigError("unknown preset '" + preset + "' (expected desk or paper)");
  }
  const std::size_t nmax = c.data.nmax;
  switch (objective) {
    case Objective::kJetClr:
      c.train_views = AugmentationPipeline::jetclr(nmax);
      c.val_views = AugmentationPipeline::jetclr(nmax);
      break;
    case Objective::kSupCon:
      c.train_views = AugmentationPipeline::supcon_train(nmax);
      c.val_views = AugmentationPipeline::supcon_val(nmax);
      break;
    default:
      c.train_views = AugmentationPipeline::identity(nmax);
      c.val_views = AugmentationPipeline::identity(nmax);
  }
  return c;
}

void RunConfig::validate() const {
  encoder.validate();
  const auto& t = training;
  if (t.batch_size < 2) throw ConfigError("config.training: batch_size must be >= 2");
  if (t.epoch_size < t.batch_size || t.val_epoch_size < t.batch_size)
    throw ConfigError("config.training: epoch sizes must be at least one batch");
  if (t.eval_batch_size == 0) throw ConfigError("config.training: eval_batch_size must be > 0");
  if (t.optimizer != "adamw" && t.optimizer != "muon")
    throw ConfigError("config.training: optimizer must be adamw or muon");
  if (!(t.lr > 0.0) || !(t.muon_lr > 0.0) || !(t.weight_decay >= 0.0) || !(t.clip_norm >= 0.0))
    throw ConfigError("config.training: lr must be positive, weight_decay and clip_norm >= 0");
  if (data.source != "toy" && data.source != "files")
    throw ConfigError("config.data: source must be toy or files");
  if (data.source == "files" && data.manifest.empty())
    throw ConfigError("config.data: source 'files' needs a manifest");
  if (data.nmax < 2) throw ConfigError("config.data: nmax must be >= 2");
  if (data.source == "toy" && (data.toy.train_per_class == 0 || data.toy.val_per_class == 0 ||
                               data.toy.test_jets == 0))
    throw ConfigError("config.data.toy: sizes must be positive");
  try {
    train_views.validate();
    val_views.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config.augment: ") + e.what());
  }
  const bool contrastive = objective == Objective::kJetClr || objective == Objective::kSupCon;
  if (!contrastive && (!train_views.steps.empty() || !val_views.steps.empty()))
    throw ConfigError("config.augment: only jetclr and supcon use augmented views");
}

json to_json(const AugmentStep& step) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, RotateStep>) return {{"type", "rotate"}, {"prob", s.prob}};
        if constexpr (std::is_same_v<T, TranslateStep>)
          return {{"type", "translate"}, {"prob", s.prob}, {"max_rapidity", s.max_rapidity},
                  {"max_phi", s.max_phi}};
        if constexpr (std::is_same_v<T, CollinearSplitStep>)
          return {{"type", "collinear_split"}, {"prob", s.prob}, {"max_splits", s.max_splits},
                  {"min_pt", s.min_pt}};
        if constexpr (std::is_same_v<T, SoftAddStep>)
          return {{"type", "soft_add"}, {"prob", s.prob}, {"max_particles", s.max_particles},
                  {"pt_scale_rel", s.pt_scale_rel}};
        if constexpr (std::is_same_v<T, NoiseStep>)
          return {{"type", "noise"}, {"prob", s.prob}, {"sigma_rel", s.sigma_rel}};
        if constexpr (std::is_same_v<T, SmearStep>)
          return {{"type", "smear"}, {"prob", s.prob}, {"sigma_pt_rel", s.sigma_pt_rel},
                  {"sigma_angle", s.sigma_angle}};
        if constexpr (std::is_same_v<T, DropoutStep>)
          return {{"type", "dropout"}, {"prob", s.prob}, {"rate", s.rate}};
      },
      step);
}

AugmentStep augment_step_from_json(const json& j) {
  Section s(j, "augment.step");
  std::string type;
  s.get("type", type);
  AugmentStep out;
  if (type == "rotate") {
    RotateStep r;
    s.get("prob", r.prob);
    out = r;
  } else if (type == "translate") {
    TranslateStep r;
    s.get("prob", r.prob);
    s.get("max_rapidity", r.max_rapidity);
    s.get("max_phi", r.max_phi);
    out = r;
  } else if (type == "collinear_split") {
    CollinearSplitStep r;
    s.get("prob", r.prob);
    s.get("max_splits", r.max_splits);
    s.get("min_pt", r.min_pt);
    out = r;
  } else if (type == "soft_add") {
    SoftAddStep r;
    s.get("prob", r.prob);
    s.get("max_particles", r.max_particles);
    s.get("pt_scale_rel", r.pt_scale_rel);
    out = r;
  } else if (type == "noise") {
    NoiseStep r;
    s.get("prob", r.prob);
    s.get("sigma_rel", r.sigma_rel);
    out = r;
  } else if (type == "smear") {
    SmearStep r;
    s.get("prob", r.prob);
    s.get("sigma_pt_rel", r.sigma_pt_rel);
    s.get("sigma_angle", r.sigma_angle);
    out = r;
  } else if (type == "dropout") {
    DropoutStep r;
    s.get("prob", r.prob);
    s.get("rate", r.rate);
    out = r;
  } else {
    throw ConfigError("config.augment.step: unknown type '" + type + "'");
  }
  s.finish();
  return out;
}

json to_json(const RunConfig& c) {
  const auto& t = c.training;
  return {
      {"objective", objective_name(c.objective)},
      {"preset", c.preset},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"encoder", to_json(c.encoder)},
      {"data",
       {{"source", c.data.source},
        {"manifest", c.data.manifest},
        {"nmax", c.data.nmax},
        {"toy",
         {{"seed", c.data.toy.seed},
          {"train_per_class", c.data.toy.train_per_class},
          {"val_per_class", c.data.toy.val_per_class},
          {"test_jets", c.data.toy.test_jets}}}}},
      {"training",
       {{"epoch_size", t.epoch_size},
        {"val_epoch_size", t.val_epoch_size},
        {"pretrain_epochs", t.pretrain_epochs},
        {"finetune_epochs", t.finetune_epochs},
        {"supervised_epochs", t.supervised_epochs},
        {"batch_size", t.batch_size},
        {"eval_batch_size", t.eval_batch_size},
        {"optimizer", t.optimizer},
        {"lr", t.lr},
        {"weight_decay", t.weight_decay},
        {"muon_lr", t.muon_lr},
        {"clip_norm", t.clip_norm},
        {"freeze_encoder", t.freeze_encoder}}},
      {"augment", {{"train", pipeline_to_json(c.train_views)}, {"val", pipeline_to_json(c.val_views)}}},
  };
}

RunConfig run_config_from_json(const json& j) {
  Section top(j, "");
  std::string objective, preset = "desk";
  top.get("objective", objective);
  if (objective.empty()) throw ConfigError("config: 'objective' is required");
  top.get("preset", preset);
  RunConfig c = RunConfig::defaults(objective_from_name(objective), preset);
  top.get("seed", c.seed);
  top.get("output_dir", c.output_dir);

  if (const json* e = top.child("encoder")) {
    json merged = to_json(c.encoder);
    Section es(*e, "encoder");
    for (const auto& [key, value] : e->items())
      if (merged.contains(key)) es.child(key.c_str());
    es.finish();
    for (const auto& [key, value] : e->items()) merged[key] = value;
    try {
      c.encoder = encoder_config_from_json(merged);
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError(std::string("config.encoder: ") + ex.what());
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(std::string("config.") + ex.what());
    }
  }

  if (const json* d = top.child("data")) {
    Section ds(*d, "data");
    ds.get("source", c.data.source);
    ds.get("manifest", c.data.manifest);
    ds.get("nmax", c.data.nmax);
    if (const json* toy = ds.child("toy")) {
      Section ts(*toy, "data.toy");
      ts.get("seed", c.data.toy.seed);
      ts.get("train_per_class", c.data.toy.train_per_class);
      ts.get("val_per_class", c.data.toy.val_per_class);
      ts.get("test_jets", c.data.toy.test_jets);
      ts.finish();
    }
    ds.finish();
  }
  c.train_views.nmax = c.val_views.nmax = c.data.nmax;

  if (const json* t = top.child("training")) {
    Section s(*t, "training");
    auto& tr = c.training;
    s.get("epoch_size", tr.epoch_size);
    s.get("val_epoch_size", tr.val_epoch_size);
    s.get("pretrain_epochs", tr.pretrain_epochs);
    s.get("finetune_epochs", tr.finetune_epochs);
    s.get("supervised_epochs", tr.supervised_epochs);
    s.get("batch_size", tr.batch_size);
    s.get("eval_batch_size", tr.eval_batch_size);
    s.get("optimizer", tr.optimizer);
    s.get("lr", tr.lr);
    s.get("weight_decay", tr.weight_decay);
    s.get("muon_lr", tr.muon_lr);
    s.get("clip_norm", tr.clip_norm);
    s.get("freeze_encoder", tr.freeze_encoder);
    s.finish();
  }

  if (const json* a = top.child("augment")) {
    Section as(*a, "augment");
    if (const json* tv = as.child("train"))
      c.train_views = pipeline_from_json(*tv, c.train_views.mode, c.data.nmax, "augment.train");
    if (const json* vv = as.child("val"))
      c.val_views = pipeline_from_json(*vv, c.val_views.mode, c.data.nmax, "augment.val");
    as.finish();
  }
  top.finish();
  c.validate();
  return c;
}

json yaml_to_json(const std::string& text) {
  try {
    return node_to_json(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: YAML parse error: ") + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = run_config_from_json(yaml_to_json(ss.str()));
  if (!c.data.manifest.empty() && std::filesystem::path(c.data.manifest).is_relative())
    c.data.manifest = (path.parent_path() / c.data.manifest).lexically_normal().string();
  return c;
}

GenDataSpec gen_spec_from_json(const json& j) {
  Section s(j, "");
  GenDataSpec g;
  s.get("seed", g.seed);
  s.get("files", g.files);
  s.get("jets_per_file", g.jets_per_file);
  s.get("format", g.format);
  if (const json* sp = s.child("split")) {
    Section ss(*sp, "split");
    ss.get("train", g.split[0]);
    ss.get("val", g.split[1]);
    ss.get("test", g.split[2]);
    ss.finish();
  }
  s.finish();
  if (g.files < 3) throw ConfigError("config: gen-data needs at least 3 files");
  if (g.jets_per_file == 0) throw ConfigError("config: jets_per_file must be positive");
  if (g.format != "binary" && g.format != "jsonl")
    throw ConfigError("config: format must be binary or jsonl");
  for (double r : g.split)
    if (!(r > 0.0)) throw ConfigError("config.split: ratios must be positive");
  return g;
}

GenDataSpec load_gen_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open data spec " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return gen_spec_from_json(yaml_to_json(ss.str()));
}

}  // namespace jetbench
