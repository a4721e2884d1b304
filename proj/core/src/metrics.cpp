#include "kandu/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace kandu {

template <typename T>
ConfusionCounts confusion_counts(std::span<const T> pred_prob, std::span<const T> target,
                                 double threshold) {
  if (pred_prob.size() != target.size())
    throw std::invalid_argument("confusion_counts: " + std::to_string(pred_prob.size()) +
                                " predictions vs " + std::to_string(target.size()) + " targets");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred_prob.size(); ++i) {
    const bool p = double(pred_prob[i]) >= threshold;
    const bool t = double(target[i]) > 0.5;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

template ConfusionCounts confusion_counts(std::span<const float>, std::span<const float>, double);
template ConfusionCounts confusion_counts(std::span<const double>, std::span<const double>, double);

ConfusionCounts confusion_counts(std::span<const float> pred_prob,
                                 std::span<const std::uint8_t> target, double threshold) {
  if (pred_prob.size() != target.size())
    throw std::invalid_argument("confusion_counts: " + std::to_string(pred_prob.size()) +
                                " predictions vs " + std::to_string(target.size()) + " targets");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred_prob.size(); ++i) {
    const bool p = double(pred_prob[i]) >= threshold;
    const bool t = target[i] != 0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double iou(const ConfusionCounts& c) {
  const auto denom = c.tp + c.fp + c.fn;
  return denom == 0 ? 1.0 : double(c.tp) / double(denom);
}

double dice_f1(const ConfusionCounts& c) {
  const auto denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 1.0 : double(2 * c.tp) / double(denom);
}

Aggregate aggregate(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("aggregate: no values");
  double sum = 0;
  for (double v : values) sum += v;
  Aggregate a;
  a.mean = sum / double(values.size());
  if (values.size() > 1) {
    double sq = 0;
    for (double v : values) sq += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(sq / double(values.size() - 1));
  }
  return a;
}

void MetricsReport::add(const ConfusionCounts& c) {
  iou.push_back(kandu::iou(c));
  dice.push_back(dice_f1(c));
}

void MetricsReport::finalize() {
  iou_summary = aggregate(iou);
  dice_summary = aggregate(dice);
}

std::string format_metric(const std::string& name, const Aggregate& a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s %.2f±%.2f", name.c_str(), a.mean * 100.0, a.std * 100.0);
  return buf;
}

std::string MetricsReport::format() const {
  return format_metric("IoU", iou_summary) + "\n" + format_metric("Dice", dice_summary) + "\n";
}

}  // namespace kandu
