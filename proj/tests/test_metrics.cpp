#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "vessel/errors.hpp"
#include "vessel/metrics.hpp"
#include "vessel/rng.hpp"

using namespace vessel;

namespace {

std::vector<std::uint8_t> random_mask(std::size_t n, double p, Rng& rng) {
  std::vector<std::uint8_t> v(n);
  for (auto& x : v) x = rng.bernoulli(p) ? 1 : 0;
  return v;
}

std::vector<std::uint8_t> grid(int h, int w, bool (*in)(int, int)) {
  std::vector<std::uint8_t> v(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) v[y * w + x] = in(y, x) ? 1 : 0;
  return v;
}

}  // namespace

TEST_CASE("identical maps have no false pixels") {
  Rng rng(1);
  const auto m = random_mask(256, 0.3, rng);
  const ConfusionCounts c = confusion_counts(m, m);
  CHECK(c.fp == 0);
  CHECK(c.fn == 0);
  CHECK(c.total() == 256);
}

TEST_CASE("top half against left half on a 4x4 grid") {
  const auto pred = grid(4, 4, [](int y, int) { return y < 2; });
  const auto truth = grid(4, 4, [](int, int x) { return x < 2; });
  const ConfusionCounts c = confusion_counts(pred, truth);
  CHECK(c == ConfusionCounts{4, 4, 4, 4});
  CHECK(pixel_accuracy(c) == 0.5);
  CHECK(iou(c) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(mean_iou(c) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("field-of-view masking restricts the tallied pixels") {
  Rng rng(2);
  const auto pred = random_mask(64, 0.5, rng);
  const auto truth = random_mask(64, 0.5, rng);
  std::vector<std::uint8_t> fov(64, 0);
  fov[17] = 1;
  CHECK(confusion_counts(pred, truth, fov).total() == 1);
  const auto half = random_mask(64, 0.5, rng);
  std::int64_t inside = 0;
  for (auto v : half) inside += v;
  CHECK(confusion_counts(pred, truth, half).total() == inside);
}

TEST_CASE("accuracy on perfect and fully wrong maps") {
  Rng rng(3);
  const auto m = random_mask(100, 0.4, rng);
  std::vector<std::uint8_t> inv(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) inv[i] = 1 - m[i];
  CHECK(pixel_accuracy(confusion_counts(m, m)) == 1.0);
  CHECK(pixel_accuracy(confusion_counts(inv, m)) == 0.0);
  CHECK_THROWS_AS(pixel_accuracy(ConfusionCounts{}), EmptyEvaluationRegion);
}

TEST_CASE("precision, recall and f1 from counts") {
  const ConfusionCounts c{3, 0, 1, 2};
  CHECK(precision(c) == 0.75);
  CHECK(recall(c) == 0.6);
  CHECK(f1(c) == doctest::Approx(2 * 0.75 * 0.6 / 1.35).epsilon(1e-15));

  // The same counts from a constructed 3×2 grid, through the pixel oracle.
  const std::vector<std::uint8_t> pred = {1, 1, 1, 1, 0, 0};
  const std::vector<std::uint8_t> truth = {1, 1, 1, 0, 1, 1};
  const ConfusionCounts g = confusion_counts(pred, truth);
  CHECK(g == c);
  const auto o = testing::metric_oracle(pred, truth, 3, 2);
  CHECK(o.precision == precision(g));
  CHECK(o.recall == recall(g));
  CHECK(std::abs(o.f1 - f1(g)) < 1e-15);
}

TEST_CASE("zero-denominator conventions") {
  const ConfusionCounts empty{0, 10, 0, 0};
  CHECK(precision(empty) == 1.0);
  CHECK(recall(empty) == 1.0);
  CHECK(f1(empty) == 1.0);
  CHECK(iou(empty) == 1.0);
  const ConfusionCounts only_fp{0, 5, 3, 0};
  CHECK(precision(only_fp) == 0.0);
  CHECK(f1(only_fp) == 0.0);
  CHECK(recall(only_fp) == 0.0);
  const ConfusionCounts only_fn{0, 5, 0, 3};
  CHECK(precision(only_fn) == 0.0);
  CHECK(recall(only_fn) == 0.0);
}

TEST_CASE("iou of identical and disjoint maps") {
  const auto a = grid(4, 4, [](int y, int) { return y == 0; });
  const auto b = grid(4, 4, [](int y, int) { return y == 3; });
  CHECK(iou(confusion_counts(a, a)) == 1.0);
  CHECK(mean_iou(confusion_counts(a, a)) == 1.0);
  CHECK(iou(confusion_counts(a, b)) == 0.0);
}

TEST_CASE("pooled and averaged aggregation") {
  const ConfusionCounts imgs[] = {{1, 2, 0, 1}, {2, 0, 2, 0}};
  const MetricsReport pooled = aggregate(imgs, Aggregation::PoolCounts);
  const MetricsReport averaged = aggregate(imgs, Aggregation::AveragePerImage);
  CHECK(pooled.summary.precision == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(averaged.summary.precision == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(pooled.mode == Aggregation::PoolCounts);
  CHECK(averaged.mode == Aggregation::AveragePerImage);
  CHECK(pooled.per_image.size() == 2);

  const ConfusionCounts one[] = {{5, 6, 7, 8}};
  CHECK(aggregate(one, Aggregation::PoolCounts).summary == aggregate(one, Aggregation::AveragePerImage).summary);

  std::vector<ConfusionCounts> replicated(7, ConfusionCounts{5, 6, 7, 8});
  const MetricValues single = compute_metrics(one[0]);
  for (Aggregation mode : {Aggregation::PoolCounts, Aggregation::AveragePerImage}) {
    const MetricValues v = aggregate(replicated, mode).summary;
    for (int k = 0; k < 5; ++k) CHECK(metric_row(v)[k] == doctest::Approx(metric_row(single)[k]).epsilon(1e-14));
  }
  CHECK_THROWS_AS(aggregate(std::span<const ConfusionCounts>{}, Aggregation::PoolCounts), EmptyList);
}

TEST_CASE("pooled f1 is the harmonic mean of pooled precision and recall") {
  Rng rng(4);
  std::vector<ConfusionCounts> counts;
  for (int i = 0; i < 20; ++i) {
    const auto p = random_mask(256, 0.2, rng), t = random_mask(256, 0.2, rng);
    counts.push_back(confusion_counts(p, t));
  }
  const MetricValues v = aggregate(counts, Aggregation::PoolCounts).summary;
  CHECK(std::abs(v.f1 - 2 * v.precision * v.recall / (v.precision + v.recall)) < 1e-12);
}

TEST_CASE("oracle equivalence on random 16x16 pairs") {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    // Vary the density, including empty and full maps, to cover conventions.
    const double pp = trial % 50 == 0 ? 0.0 : trial % 50 == 1 ? 1.0 : rng.uniform();
    const double pt = trial % 37 == 0 ? 0.0 : rng.uniform();
    const auto pred = random_mask(256, pp, rng), truth = random_mask(256, pt, rng);
    const MetricValues v = compute_metrics(confusion_counts(pred, truth));
    const auto o = testing::metric_oracle(pred, truth, 16, 16);
    CHECK(std::abs(v.accuracy - o.accuracy) < 1e-12);
    CHECK(std::abs(v.precision - o.precision) < 1e-12);
    CHECK(std::abs(v.recall - o.recall) < 1e-12);
    CHECK(std::abs(v.f1 - o.f1) < 1e-12);
    CHECK(std::abs(v.mean_iou - o.mean_iou) < 1e-12);
  }
}

TEST_CASE("swapping prediction and truth swaps precision and recall") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_mask(64, rng.uniform(), rng), b = random_mask(64, rng.uniform(), rng);
    const MetricValues ab = compute_metrics(confusion_counts(a, b));
    const MetricValues ba = compute_metrics(confusion_counts(b, a));
    CHECK(ab.accuracy == ba.accuracy);
    CHECK(ab.precision == ba.recall);
    CHECK(ab.recall == ba.precision);
    CHECK(ab.mean_iou == doctest::Approx(ba.mean_iou).epsilon(1e-15));
  }
}

TEST_CASE("metrics stay in the unit interval and improve when a false positive is corrected") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    auto pred = random_mask(64, rng.uniform(), rng);
    const auto truth = random_mask(64, rng.uniform(), rng);
    const MetricValues before = compute_metrics(confusion_counts(pred, truth));
    const double iou_before = iou(confusion_counts(pred, truth));
    for (double m : metric_row(before)) {
      CHECK(m >= 0.0);
      CHECK(m <= 1.0);
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] == 1 && truth[i] == 0) {
        pred[i] = 0;
        const MetricValues after = compute_metrics(confusion_counts(pred, truth));
        CHECK(after.precision >= before.precision);
        CHECK(after.accuracy >= before.accuracy);
        CHECK(iou(confusion_counts(pred, truth)) >= iou_before);
        break;
      }
    }
  }
}

TEST_CASE("invalid inputs") {
  const std::vector<std::uint8_t> a(4, 0), b(5, 0), bad = {0, 2, 1, 0};
  CHECK_THROWS_AS(confusion_counts(a, b), ShapeError);
  CHECK_THROWS_AS(confusion_counts(bad, a), NonBinaryError);
  CHECK_THROWS_AS(confusion_counts(a, a, b), ShapeError);
  CHECK(parse_aggregation(aggregation_token(Aggregation::AveragePerImage)) == Aggregation::AveragePerImage);
  CHECK_THROWS_AS(parse_aggregation("median"), ConfigError);
}
