#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vessel {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t tn = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + tn + fp + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

// Maps are binary (0/1) planes of equal size. Pixels where `fov` is 0 are
// skipped; an empty `fov` scores every pixel.
// Throws ShapeError (size mismatch) or NonBinaryError.
ConfusionCounts confusion_counts(std::span<const std::uint8_t> pred,
                                 std::span<const std::uint8_t> truth,
                                 std::span<const std::uint8_t> fov = {});

// Empty denominators: 1.0 when the sets the metric looks at are all empty
// (vacuously perfect), 0.0 otherwise.
double pixel_accuracy(const ConfusionCounts& c);  // throws EmptyEvaluationRegion
double precision(const ConfusionCounts& c);
double recall(const ConfusionCounts& c);
double f1(const ConfusionCounts& c);
double iou(const ConfusionCounts& c);
// Mean of foreground and background IoU.
double mean_iou(const ConfusionCounts& c);

struct MetricValues {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mean_iou = 0.0;

  bool operator==(const MetricValues&) const = default;
};

MetricValues compute_metrics(const ConfusionCounts& c);

enum class Aggregation { PoolCounts, AveragePerImage };
std::string aggregation_token(Aggregation mode);  // pool_counts / average_per_image
Aggregation parse_aggregation(const std::string& text);  // throws ConfigError

struct ImageMetrics {
  std::string sample_id;
  ConfusionCounts counts;
  MetricValues values;
};

struct MetricsReport {
  Aggregation mode = Aggregation::PoolCounts;
  MetricValues summary;
  ConfusionCounts pooled;
  std::vector<ImageMetrics> per_image;
};

// Throws EmptyList on an empty input. `ids` may be empty or one per image.
MetricsReport aggregate(std::span<const ConfusionCounts> per_image, Aggregation mode,
                        std::span<const std::string> ids = {});

// Column headers in table order.
inline constexpr const char* kMetricHeaders[] = {"Accuracy", "Precision", "Recall",
                                                 "F1-Score", "Mean IoU"};
std::vector<double> metric_row(const MetricValues& v);

}  // namespace vessel
