// SPDX-License-Identifier: Apache-2.0

#include "jetbench/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace jetbench {
namespace {

struct BinaryCounts {
  std::size_t signal = 0;
  std::size_t background = 0;
};

BinaryCounts count_binary(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw MetricError("scores and labels differ in length");
  BinaryCounts c;
  for (int l : labels) {
    if (l == 1) ++c.signal;
    else if (l == 0) ++c.background;
    else throw MetricError("binary labels must be 0 or 1");
  }
  return c;
}

std::vector<double> sorted_desc(std::span<const double> scores, std::span<const int> labels,
                                int which) {
  std::vector<double> v;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (labels[i] == which) v.push_back(scores[i]);
  std::sort(v.begin(), v.end(), std::greater<>());
  return v;
}

// Number of entries of a descending list that are >= t.
std::size_t count_at_least(const std::vector<double>& desc, double t) {
  return static_cast<std::size_t>(
      std::upper_bound(desc.begin(), desc.end(), t, std::greater<>()) - desc.begin());
}

OperatingPoint make_point(double t, const std::vector<double>& sig, const std::vector<double>& bkg) {
  OperatingPoint op;
  op.threshold = t;
  const std::size_t ns = count_at_least(sig, t), nb = count_at_least(bkg, t);
  op.signal_eff = static_cast<double>(ns) / static_cast<double>(sig.size());
  op.background_eff = static_cast<double>(nb) / static_cast<double>(bkg.size());
  if (nb == 0) {
    op.saturated = true;
    op.rejection = static_cast<double>(bkg.size() + 1);
  } else {
    op.rejection = 1.0 / op.background_eff;
  }
  return op;
}

std::vector<int> one_vs_rest(const ScoreMatrix& sm, std::size_t c) {
  std::vector<int> y(sm.size());
  for (std::size_t i = 0; i < sm.size(); ++i) y[i] = sm.labels[i] == static_cast<int>(c) ? 1 : 0;
  return y;
}

std::vector<double> column(const ScoreMatrix& sm, std::size_t c) {
  std::vector<double> s(sm.size());
  for (std::size_t i = 0; i < sm.size(); ++i) s[i] = sm.score(i, c);
  return s;
}

}  // namespace

void ScoreMatrix::validate() const {
  if (labels.empty()) throw MetricError("score matrix is empty");
  if (scores.size() != labels.size() * kNumClasses)
    throw MetricError("score matrix must be N x " + std::to_string(kNumClasses));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= static_cast<int>(kNumClasses))
      throw MetricError("label out of range at row " + std::to_string(i));
    double s = 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) s += score(i, c);
    if (std::abs(s - 1.0) > 1e-9)
      throw MetricError("scores of row " + std::to_string(i) + " do not sum to one");
  }
}

double roc_auc_binary(std::span<const double> scores, std::span<const int> labels) {
  const auto c = count_binary(scores, labels);
  if (c.signal == 0 || c.background == 0)
    throw MetricError("AUC undefined: both classes must be present");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of midranks (1-based) of the signal samples.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) rank_sum += midrank;
    i = j + 1;
  }
  const double ns = static_cast<double>(c.signal), nb = static_cast<double>(c.background);
  const double u = rank_sum - ns * (ns + 1.0) / 2.0;
  return u / (ns * nb);
}

std::array<double, kNumClasses> per_class_auc(const ScoreMatrix& sm) {
  std::vector<std::string> missing;
  std::array<std::size_t, kNumClasses> present{};
  for (int l : sm.labels) ++present.at(static_cast<std::size_t>(l));
  for (std::size_t c = 0; c < kNumClasses; ++c)
    if (present[c] == 0 || present[c] == sm.size())
      missing.emplace_back(class_name(class_at(c)));
  if (!missing.empty()) {
    std::string msg = "per-class AUC undefined; classes absent (or alone):";
    for (const auto& m : missing) msg += " " + m;
    throw MetricError(msg);
  }
  std::array<double, kNumClasses> out{};
  for (std::size_t c = 0; c < kNumClasses; ++c) out[c] = roc_auc_binary(column(sm, c), one_vs_rest(sm, c));
  return out;
}

double macro_auc(const ScoreMatrix& sm) {
  const auto a = per_class_auc(sm);
  return std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(kNumClasses);
}

double micro_auc(const ScoreMatrix& sm) {
  if (sm.size() < 2) throw MetricError("micro AUC needs at least two samples");
  std::vector<int> y(sm.scores.size(), 0);
  for (std::size_t i = 0; i < sm.size(); ++i)
    y[i * kNumClasses + static_cast<std::size_t>(sm.labels[i])] = 1;
  return roc_auc_binary(sm.scores, y);
}

OperatingPoint rejection_at_efficiency(std::span<const double> scores,
                                       std::span<const int> labels, double eff_signal) {
  const auto c = count_binary(scores, labels);
  if (c.signal == 0 || c.background == 0)
    throw MetricError("rejection needs at least one signal and one background sample");
  if (!(eff_signal > 0.0 && eff_signal <= 1.0))
    throw MetricError("signal efficiency must lie in (0, 1]");
  const auto sig = sorted_desc(scores, labels, 1);
  const auto bkg = sorted_desc(scores, labels, 0);
  // k-th highest signal score passes ceil(eff * N_sig) signal samples.
  auto k = static_cast<std::size_t>(std::ceil(eff_signal * static_cast<double>(sig.size()) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, sig.size());
  return make_point(sig[k - 1], sig, bkg);
}

OperatingPoint efficiency_at_background(std::span<const double> scores,
                                        std::span<const int> labels, double eff_background) {
  const auto c = count_binary(scores, labels);
  if (c.signal == 0 || c.background == 0)
    throw MetricError("efficiency needs at least one signal and one background sample");
  if (!(eff_background > 0.0 && eff_background < 1.0))
    throw MetricError("background efficiency must lie in (0, 1)");
  if (static_cast<double>(c.background) * eff_background < 1.0 - 1e-9)
    throw MetricError("background efficiency " + std::to_string(eff_background) +
                      " is not resolvable with " + std::to_string(c.background) +
                      " background samples; use at least " +
                      std::to_string(static_cast<std::size_t>(std::ceil(1.0 / eff_background))));
  const auto sig = sorted_desc(scores, labels, 1);
  const auto bkg = sorted_desc(scores, labels, 0);
  // Largest number of passing background samples allowed.
  const auto allowed = static_cast<std::size_t>(
      std::floor(eff_background * static_cast<double>(bkg.size()) + 1e-9));
  // Lowest threshold keeps `allowed` background samples: just above bkg[allowed].
  double t;
  if (allowed >= bkg.size()) {
    t = std::min(sig.back(), bkg.back());
  } else {
    // Candidate thresholds are observed scores; pick the smallest one above bkg[allowed].
    const double cut = bkg[allowed];
    t = std::numeric_limits<double>::infinity();
    auto consider = [&](const std::vector<double>& desc) {
      // first element (from the low end) strictly greater than cut
      auto it = std::upper_bound(desc.rbegin(), desc.rend(), cut);
      if (it != desc.rend()) t = std::min(t, *it);
    };
    consider(sig);
    consider(bkg);
  }
  return make_point(t, sig, bkg);
}

std::size_t predicted_class(const ScoreMatrix& sm, std::size_t i) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumClasses; ++c)
    if (sm.score(i, c) > sm.score(i, best)) best = c;
  return best;
}

double accuracy(const ScoreMatrix& sm) {
  if (sm.size() == 0) throw MetricError("accuracy of an empty score matrix");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < sm.size(); ++i)
    hit += predicted_class(sm, i) == static_cast<std::size_t>(sm.labels[i]);
  return static_cast<double>(hit) / static_cast<double>(sm.size());
}

double macro_f1(const ScoreMatrix& sm) {
  if (sm.size() == 0) throw MetricError("macro-F1 of an empty score matrix");
  std::array<std::size_t, kNumClasses> tp{}, fp{}, fn{};
  for (std::size_t i = 0; i < sm.size(); ++i) {
    const std::size_t p = predicted_class(sm, i);
    const auto y = static_cast<std::size_t>(sm.labels[i]);
    if (p == y) {
      ++tp[y];
    } else {
      ++fp[p];
      ++fn[y];
    }
  }
  double total = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    total += denom > 0.0 ? 2.0 * tp[c] / denom : 0.0;
  }
  return total / static_cast<double>(kNumClasses);
}

MetricReport compute_report(const ScoreMatrix& sm) {
  sm.validate();
  MetricReport r;
  r.accuracy = accuracy(sm);
  r.macro_f1 = macro_f1(sm);
  r.auc = per_class_auc(sm);
  r.macro_auc = std::accumulate(r.auc.begin(), r.auc.end(), 0.0) / static_cast<double>(kNumClasses);
  r.micro_auc = micro_auc(sm);
  for (std::size_t c = 0; c < kNumSignalClasses; ++c) {
    const auto s = column(sm, c);
    const auto y = one_vs_rest(sm, c);
    const auto rej = rejection_at_efficiency(s, y, 0.5);
    r.rejection_at_es50[c] = rej.rejection;
    r.rejection_saturated[c] = rej.saturated;
    try {
      r.es_at_eb1e2[c] = efficiency_at_background(s, y, 1e-2).signal_eff;
    } catch (const MetricError&) {
      r.es_at_eb1e2[c] = std::nullopt;
    }
  }
  return r;
}

nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j;
  j["accuracy"] = r.accuracy;
  j["macro_auc"] = r.macro_auc;
  j["micro_auc"] = r.micro_auc;
  j["macro_f1"] = r.macro_f1;
  auto& per = j["per_class"];
  per["classes"] = nlohmann::json::array();
  for (std::size_t c = 0; c < kNumClasses; ++c) per["classes"].push_back(class_name(class_at(c)));
  per["auc"] = r.auc;
  per["rejection_at_es50"] = r.rejection_at_es50;
  per["rejection_saturated"] = r.rejection_saturated;
  per["es_at_eb1e2"] = nlohmann::json::array();
  for (const auto& e : r.es_at_eb1e2)
    per["es_at_eb1e2"].push_back(e ? nlohmann::json(*e) : nlohmann::json(nullptr));
  return j;
}

MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.accuracy = j.at("accuracy").get<double>();
  r.macro_auc = j.at("macro_auc").get<double>();
  r.micro_auc = j.at("micro_auc").get<double>();
  r.macro_f1 = j.at("macro_f1").get<double>();
  const auto& per = j.at("per_class");
  r.auc = per.at("auc").get<std::array<double, kNumClasses>>();
  r.rejection_at_es50 = per.at("rejection_at_es50").get<std::array<double, kNumSignalClasses>>();
  r.rejection_saturated =
      per.at("rejection_saturated").get<std::array<bool, kNumSignalClasses>>();
  const auto& es = per.at("es_at_eb1e2");
  for (std::size_t c = 0; c < kNumSignalClasses; ++c)
    if (!es.at(c).is_null()) r.es_at_eb1e2[c] = es.at(c).get<double>();
  return r;
}

std::string render_tables(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  std::size_t name_w = 6;
  for (const auto& [name, _] : rows) name_w = std::max(name_w, name.size());
  std::ostringstream os;
  auto header = [&](const std::string& title, const std::vector<std::string>& cols) {
    os << title << '\n' << std::left << std::setw(static_cast<int>(name_w)) << "Method";
    for (const auto& c : cols) os << "  " << std::right << std::setw(12) << c;
    os << '\n';
  };
  auto name_cell = [&](const std::string& n) {
    os << std::left << std::setw(static_cast<int>(name_w)) << n << std::right;
  };
  std::vector<std::string> cls, sig;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    cls.emplace_back(class_name(class_at(c)));
    if (c < kNumSignalClasses) sig.emplace_back(class_name(class_at(c)));
  }
  os << std::fixed;

  header("Global metrics", {"Accuracy", "Macro AUC", "Micro AUC", "Macro-F1"});
  for (const auto& [name, r] : rows) {
    name_cell(name);
    for (double v : {r.accuracy, r.macro_auc, r.micro_auc, r.macro_f1})
      os << "  " << std::setw(12) << std::setprecision(3) << v;
    os << '\n';
  }
  os << '\n';

  std::vector<std::string> cols;
  for (const auto& c : cls) cols.push_back("AUC_" + c);
  header("Per-class one-vs-rest AUC", cols);
  for (const auto& [name, r] : rows) {
    name_cell(name);
    for (double v : r.auc) os << "  " << std::setw(12) << std::setprecision(3) << v;
    os << '\n';
  }
  os << '\n';

  cols.clear();
  for (const auto& c : sig) cols.push_back("Rej_" + c);
  header("Background rejection at eS = 50% (* = no background passed)", cols);
  for (const auto& [name, r] : rows) {
    name_cell(name);
    for (std::size_t c = 0; c < kNumSignalClasses; ++c) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(0) << r.rejection_at_es50[c]
           << (r.rejection_saturated[c] ? "*" : "");
      os << "  " << std::setw(12) << cell.str();
    }
    os << '\n';
  }
  os << '\n';

  cols.clear();
  for (const auto& c : sig) cols.push_back("eS_" + c);
  header("Signal efficiency at eB = 1e-2", cols);
  for (const auto& [name, r] : rows) {
    name_cell(name);
    for (const auto& e : r.es_at_eb1e2) {
      if (e) os << "  " << std::setw(12) << std::setprecision(3) << *e;
      else os << "  " << std::setw(12) << "n/a";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace jetbench
