// SPDX-License-Identifier: Apache-2.0
//
// Classification metrics over softmax score matrices: accuracy, macro-F1,
// macro/micro ROC-AUC, per-class one-vs-rest AUC, background rejection at fixed
// signal efficiency and signal efficiency at fixed background efficiency.
// ROC curves are empirical step functions; no interpolation is applied.

#pragma once

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "jetbench/jetdata.hpp"

namespace jetbench {

inline constexpr std::size_t kNumSignalClasses = kNumClasses - 1;  // QCD is background

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ScoreMatrix {
  std::vector<double> scores;  // [N, kNumClasses], rows sum to one
  std::vector<int> labels;     // [N]

  std::size_t size() const { return labels.size(); }
  double score(std::size_t i, std::size_t c) const { return scores[i * kNumClasses + c]; }
  void validate() const;
};

// Mann-Whitney estimate P(s_pos > s_neg) + 0.5 P(s_pos == s_neg) via midranks.
double roc_auc_binary(std::span<const double> scores, std::span<const int> labels);

std::array<double, kNumClasses> per_class_auc(const ScoreMatrix& sm);
double macro_auc(const ScoreMatrix& sm);
double micro_auc(const ScoreMatrix& sm);

struct OperatingPoint {
  double threshold = 0.0;  // samples pass when score >= threshold
  double signal_eff = 0.0;
  double background_eff = 0.0;
  double rejection = 0.0;  // 1 / background_eff, or N_bkg + 1 when saturated
  bool saturated = false;  // no background passed
};

// Highest threshold whose signal pass-fraction is still >= eff_signal.
OperatingPoint rejection_at_efficiency(std::span<const double> scores,
                                       std::span<const int> labels, double eff_signal = 0.5);

// Lowest threshold whose background pass-fraction is <= eff_background.
// Requires N_bkg >= 1 / eff_background.
OperatingPoint efficiency_at_background(std::span<const double> scores,
                                        std::span<const int> labels,
                                        double eff_background = 1e-2);

// argmax ties resolve to the lowest class index.
std::size_t predicted_class(const ScoreMatrix& sm, std::size_t i);
double accuracy(const ScoreMatrix& sm);
double macro_f1(const ScoreMatrix& sm);

struct MetricReport {
  double accuracy = 0.0;
  double macro_auc = 0.0;
  double micro_auc = 0.0;
  double macro_f1 = 0.0;
  std::array<double, kNumClasses> auc{};
  std::array<double, kNumSignalClasses> rejection_at_es50{};
  std::array<bool, kNumSignalClasses> rejection_saturated{};
  std::array<std::optional<double>, kNumSignalClasses> es_at_eb1e2{};

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

MetricReport compute_report(const ScoreMatrix& sm);

nlohmann::json to_json(const MetricReport& r);
MetricReport report_from_json(const nlohmann::json& j);

// Aligned text tables: global metrics, per-class AUC, rejection, efficiency.
std::string render_tables(const std::vector<std::pair<std::string, MetricReport>>& rows);

}  // namespace jetbench
