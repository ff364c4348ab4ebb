#pragma once

#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace acgan {

struct ConfusionMatrix {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  std::uint64_t positives() const { return tp + fn; }
  std::uint64_t negatives() const { return tn + fp; }
  bool operator==(const ConfusionMatrix&) const = default;
};

// Binary confusion counts with `positive_class` as the positive label.
inline ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels, int positive_class,
                                 std::size_t num_classes = 2) {
  if (predictions.size() != labels.size())
    throw std::invalid_argument("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                                std::to_string(labels.size()) + " labels");
  if (num_classes != 2)
    throw std::invalid_argument("sensitivity/specificity need a binary problem; use accuracy() for " +
                                std::to_string(num_classes) + " classes");
  if (positive_class != 0 && positive_class != 1) throw std::invalid_argument("positive class must be 0 or 1");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (int v : {predictions[i], labels[i]})
      if (v != 0 && v != 1) throw std::invalid_argument("label " + std::to_string(v) + " is not binary");
    const bool pred_pos = predictions[i] == positive_class;
    const bool true_pos = labels[i] == positive_class;
    if (true_pos)
      ++(pred_pos ? cm.tp : cm.fn);
    else
      ++(pred_pos ? cm.fp : cm.tn);
  }
  return cm;
}

// Undefined ratios (zero denominators) are empty, never 0.
struct Metrics {
  std::optional<double> accuracy;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
};

inline Metrics metrics(const ConfusionMatrix& cm) {
  Metrics m;
  if (cm.total() > 0) m.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  if (cm.positives() > 0) m.sensitivity = static_cast<double>(cm.tp) / static_cast<double>(cm.positives());
  if (cm.negatives() > 0) m.specificity = static_cast<double>(cm.tn) / static_cast<double>(cm.negatives());
  return m;
}

// Plain accuracy for any number of classes.
inline double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size() || labels.empty())
    throw std::invalid_argument("accuracy needs equal, non-empty prediction and label lists");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// Percent with two decimals ("98.80"), or "NA" when undefined.
inline std::string format_percent(std::optional<double> v) {
  if (!v) return "NA";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << *v * 100.0;
  return os.str();
}

struct MetricsReport {
  std::vector<Metrics> folds;
  Metrics mean;  // arithmetic mean over folds where the metric is defined
};

inline MetricsReport summarize(std::vector<Metrics> folds) {
  MetricsReport report;
  auto average = [&](auto member) -> std::optional<double> {
    double total = 0;
    std::size_t count = 0;
    for (const auto& f : folds)
      if (f.*member) {
        total += *(f.*member);
        ++count;
      }
    if (count == 0) return std::nullopt;
    return total / static_cast<double>(count);
  };
  report.mean.accuracy = average(&Metrics::accuracy);
  report.mean.sensitivity = average(&Metrics::sensitivity);
  report.mean.specificity = average(&Metrics::specificity);
  report.folds = std::move(folds);
  return report;
}

inline void write_metrics_csv(std::ostream& os, const MetricsReport& r) {
  os << "fold,accuracy_pct,sensitivity_pct,specificity_pct\n";
  for (std::size_t i = 0; i < r.folds.size(); ++i)
    os << i + 1 << ',' << format_percent(r.folds[i].accuracy) << ',' << format_percent(r.folds[i].sensitivity) << ','
       << format_percent(r.folds[i].specificity) << '\n';
  os << "mean," << format_percent(r.mean.accuracy) << ',' << format_percent(r.mean.sensitivity) << ','
     << format_percent(r.mean.specificity) << '\n';
}

inline void write_metrics_table(std::ostream& os, const MetricsReport& r) {
  auto row = [&](const std::string& label, const Metrics& m) {
    os << "| " << std::left << std::setw(6) << label << " | " << std::right << std::setw(12)
       << format_percent(m.accuracy) << " | " << std::setw(15) << format_percent(m.sensitivity) << " | "
       << std::setw(15) << format_percent(m.specificity) << " |\n";
  };
  os << "| Fold   | Accuracy (%) | Sensitivity (%) | Specificity (%) |\n";
  os << "|--------|--------------|-----------------|-----------------|\n";
  for (std::size_t i = 0; i < r.folds.size(); ++i) row(std::to_string(i + 1), r.folds[i]);
  row("mean", r.mean);
}

}  // namespace acgan
