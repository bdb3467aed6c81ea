#include "vessel/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "vessel/errors.hpp"

namespace vessel {

void validate(const LossConfig& config) {
  if (config.bce_weight < 0 || config.dice_weight < 0) throw ConfigError("loss weights must be nonnegative");
  if (config.bce_weight + config.dice_weight <= 0) throw ConfigError("loss weights must not both be zero");
  if (!(config.smooth_epsilon > 0)) throw ConfigError("loss.epsilon must be positive");
  if (!(config.prob_clamp > 0 && config.prob_clamp < 0.5)) throw ConfigError("loss.prob_clamp must be in (0, 0.5)");
}

namespace {

void check_sizes(std::span<const double> pred, std::span<const double> target,
                 std::span<double> grad) {
  if (pred.size() != target.size()) {
    throw ShapeError("prediction has " + std::to_string(pred.size()) + " values, target " +
                     std::to_string(target.size()));
  }
  if (!grad.empty() && grad.size() != pred.size()) throw ShapeError("gradient buffer size mismatch");
  if (pred.empty()) throw ShapeError("empty prediction");
}

}  // namespace

double bce_loss(std::span<const double> pred, std::span<const double> target,
                double clamp, std::span<double> grad) {
  check_sizes(pred, target, grad);
  const double m = static_cast<double>(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double raw = pred[i];
    const double p = std::clamp(raw, clamp, 1.0 - clamp);
    const double t = target[i];
    sum += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
    if (!grad.empty()) {
      const bool active = raw > clamp && raw < 1.0 - clamp;
      grad[i] = active ? (-t / p + (1.0 - t) / (1.0 - p)) / m : 0.0;
    }
  }
  return sum / m;
}

double dice_loss(std::span<const double> pred, std::span<const double> target,
                 int batch, double epsilon, std::span<double> grad) {
  check_sizes(pred, target, grad);
  if (batch < 1 || pred.size() % static_cast<std::size_t>(batch) != 0) {
    throw ShapeError("cannot split " + std::to_string(pred.size()) + " values into " +
                     std::to_string(batch) + " samples");
  }
  const std::size_t per = pred.size() / batch;
  double total = 0.0;
  for (int s = 0; s < batch; ++s) {
    const std::size_t off = s * per;
    double inter = 0.0, psum = 0.0, tsum = 0.0;
    for (std::size_t i = off; i < off + per; ++i) {
      inter += pred[i] * target[i];
      psum += pred[i];
      tsum += target[i];
    }
    const double num = 2.0 * inter + epsilon;
    const double den = psum + tsum + epsilon;
    total += 1.0 - num / den;
    if (!grad.empty()) {
      for (std::size_t i = off; i < off + per; ++i) {
        grad[i] = -(2.0 * target[i] * den - num) / (den * den) / batch;
      }
    }
  }
  return total / batch;
}

double composite_loss(std::span<const double> pred, std::span<const double> target,
                      int batch, const LossConfig& config, std::span<double> grad) {
  check_sizes(pred, target, grad);
  std::vector<double> g_bce, g_dice;
  if (!grad.empty()) {
    g_bce.resize(pred.size());
    g_dice.resize(pred.size());
  }
  double value = 0.0;
  if (config.bce_weight != 0.0) value += config.bce_weight * bce_loss(pred, target, config.prob_clamp, g_bce);
  if (config.dice_weight != 0.0) {
    value += config.dice_weight * dice_loss(pred, target, batch, config.smooth_epsilon, g_dice);
  }
  if (!grad.empty()) {
    for (std::size_t i = 0; i < grad.size(); ++i) {
      grad[i] = (config.bce_weight != 0.0 ? config.bce_weight * g_bce[i] : 0.0) +
                (config.dice_weight != 0.0 ? config.dice_weight * g_dice[i] : 0.0);
    }
  }
  return value;
}

LossValue composite_loss(const Tensor& pred, const Tensor& target, const LossConfig& config) {
  if (!(pred.shape() == target.shape())) {
    throw ShapeError("loss: prediction " + pred.shape().str() + " vs target " + target.shape().str());
  }
  const std::vector<double> p(pred.values().begin(), pred.values().end());
  const std::vector<double> t(target.values().begin(), target.values().end());
  const int batch = pred.shape().n;
  std::vector<double> g_bce(p.size()), g_dice(p.size());
  LossValue out;
  out.bce = bce_loss(p, t, config.prob_clamp, g_bce);
  out.dice = dice_loss(p, t, batch, config.smooth_epsilon, g_dice);
  out.total = config.bce_weight * out.bce + config.dice_weight * out.dice;
  out.grad = Tensor(pred.shape());
  for (std::size_t i = 0; i < p.size(); ++i) {
    out.grad.data()[i] = static_cast<float>(config.bce_weight * g_bce[i] + config.dice_weight * g_dice[i]);
  }
  return out;
}

}  // namespace vessel
