#include "vessel/metrics.hpp"

#include <omp.h>

#include "vessel/errors.hpp"

namespace vessel {

ConfusionCounts confusion_counts(std::span<const std::uint8_t> pred,
                                 std::span<const std::uint8_t> truth,
                                 std::span<const std::uint8_t> fov) {
  if (pred.size() != truth.size() || (!fov.empty() && fov.size() != pred.size())) {
    throw ShapeError("confusion_counts: map sizes " + std::to_string(pred.size()) + ", " +
                     std::to_string(truth.size()) + ", " + std::to_string(fov.size()));
  }
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(pred.size());
  const bool masked = !fov.empty();
  std::int64_t tp = 0, tn = 0, fp = 0, fn = 0, bad = 0;
  // Integer reductions: associative, so the result is independent of
  // thread count and schedule.
#pragma omp parallel for schedule(static) reduction(+ : tp, tn, fp, fn, bad)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::uint8_t p = pred[i];
    const std::uint8_t t = truth[i];
    const std::uint8_t f = masked ? fov[i] : 1;
    if (p > 1 || t > 1 || f > 1) {
      ++bad;
      continue;
    }
    if (!f) continue;
    tp += p & t;
    tn += (1 - p) & (1 - t);
    fp += p & (1 - t);
    fn += (1 - p) & t;
  }
  if (bad) throw NonBinaryError(std::to_string(bad) + " pixels outside {0, 1}");
  return {tp, tn, fp, fn};
}

double pixel_accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) throw EmptyEvaluationRegion("no pixels to evaluate");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

namespace {

double ratio_or_convention(std::int64_t num, std::int64_t den, bool vacuous) {
  if (den == 0) return vacuous ? 1.0 : 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double precision(const ConfusionCounts& c) {
  return ratio_or_convention(c.tp, c.tp + c.fp, c.fn == 0);
}

double recall(const ConfusionCounts& c) {
  return ratio_or_convention(c.tp, c.tp + c.fn, c.fp == 0);
}

double f1(const ConfusionCounts& c) {
  const double p = precision(c);
  const double r = recall(c);
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

double iou(const ConfusionCounts& c) {
  return ratio_or_convention(c.tp, c.tp + c.fp + c.fn, true);
}

double mean_iou(const ConfusionCounts& c) {
  const double background = ratio_or_convention(c.tn, c.tn + c.fp + c.fn, true);
  return 0.5 * (iou(c) + background);
}

MetricValues compute_metrics(const ConfusionCounts& c) {
  return {pixel_accuracy(c), precision(c), recall(c), f1(c), mean_iou(c)};
}

std::string aggregation_token(Aggregation mode) {
  return mode == Aggregation::PoolCounts ? "pool_counts" : "average_per_image";
}

Aggregation parse_aggregation(const std::string& text) {
  if (text == "pool_counts") return Aggregation::PoolCounts;
  if (text == "average_per_image") return Aggregation::AveragePerImage;
  throw ConfigError("unknown aggregation '" + text + "'; valid: pool_counts, average_per_image");
}

MetricsReport aggregate(std::span<const ConfusionCounts> per_image, Aggregation mode,
                        std::span<const std::string> ids) {
  if (per_image.empty()) throw EmptyList("no per-image counts to aggregate");
  if (!ids.empty() && ids.size() != per_image.size()) throw ShapeError("one id per image required");
  MetricsReport report;
  report.mode = mode;
  MetricValues mean;
  for (std::size_t i = 0; i < per_image.size(); ++i) {
    ImageMetrics m;
    m.sample_id = ids.empty() ? std::to_string(i) : ids[i];
    m.counts = per_image[i];
    m.values = compute_metrics(per_image[i]);
    report.pooled += per_image[i];
    mean.accuracy += m.values.accuracy;
    mean.precision += m.values.precision;
    mean.recall += m.values.recall;
    mean.f1 += m.values.f1;
    mean.mean_iou += m.values.mean_iou;
    report.per_image.push_back(std::move(m));
  }
  if (mode == Aggregation::PoolCounts) {
    report.summary = compute_metrics(report.pooled);
  } else {
    const double k = static_cast<double>(per_image.size());
    report.summary = {mean.accuracy / k, mean.precision / k, mean.recall / k, mean.f1 / k,
                      mean.mean_iou / k};
  }
  return report;
}

std::vector<double> metric_row(const MetricValues& v) {
  return {v.accuracy, v.precision, v.recall, v.f1, v.mean_iou};
}

}  // namespace vessel
