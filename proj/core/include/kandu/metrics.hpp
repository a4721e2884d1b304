#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace kandu {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;
  std::uint64_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Predictions >= threshold count as positive; target is positive when > 0.5.
template <typename T>
ConfusionCounts confusion_counts(std::span<const T> pred_prob, std::span<const T> target,
                                 double threshold = 0.5);
ConfusionCounts confusion_counts(std::span<const float> pred_prob,
                                 std::span<const std::uint8_t> target, double threshold = 0.5);

/// TP / (TP + FP + FN); 1 when both masks are empty.
double iou(const ConfusionCounts& c);
/// 2TP / (2TP + FP + FN), which is also F1 for binary masks; 1 when both
/// masks are empty.
double dice_f1(const ConfusionCounts& c);

struct Aggregate {
  double mean = 0;
  double std = 0;  // sample standard deviation; 0 for a single value
};

Aggregate aggregate(std::span<const double> values);

struct MetricsReport {
  std::vector<double> iou;
  std::vector<double> dice;
  Aggregate iou_summary;
  Aggregate dice_summary;

  void add(const ConfusionCounts& c);
  void finalize();
  /// "IoU 88.82±0.75" style lines, values in percent.
  std::string format() const;
};

/// `name mean±std` in percent with two decimals.
std::string format_metric(const std::string& name, const Aggregate& a);

}  // namespace kandu
