#pragma once

#include <span>

#include "vessel/tensor.hpp"

namespace vessel {

struct LossConfig {
  double bce_weight = 1.0;
  double dice_weight = 1.0;
  double smooth_epsilon = 1e-6;
  double prob_clamp = 1e-7;

  bool operator==(const LossConfig&) const = default;
};

// Throws ConfigError.
void validate(const LossConfig& config);

// The scalar routines operate on flattened batches: `pred` and `target`
// hold `batch` equally sized samples back to back. When `grad` is
// non-empty it receives d(loss)/d(pred) (overwritten, not accumulated).
// Size mismatches throw ShapeError.

// Mean over all pixels of −[t·ln p + (1−t)·ln(1−p)], p clamped to
// [clamp, 1−clamp]; the gradient is zero where the clamp is active.
double bce_loss(std::span<const double> pred, std::span<const double> target,
                double clamp, std::span<double> grad = {});

// 1 − (2Σpt + ε)/(Σp + Σt + ε) per sample, averaged over the batch.
double dice_loss(std::span<const double> pred, std::span<const double> target,
                 int batch, double epsilon, std::span<double> grad = {});

double composite_loss(std::span<const double> pred,
                      std::span<const double> target, int batch,
                      const LossConfig& config, std::span<double> grad = {});

struct LossValue {
  double bce = 0.0;
  double dice = 0.0;
  double total = 0.0;
  Tensor grad;  // d(total)/d(pred), same shape as pred
};

// pred and target: N×1×H×W.
LossValue composite_loss(const Tensor& pred, const Tensor& target,
                         const LossConfig& config);

}  // namespace vessel
