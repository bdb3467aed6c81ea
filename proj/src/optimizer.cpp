#include "vessel/optimizer.hpp"

#include <cmath>

#include "vessel/errors.hpp"

namespace vessel {

std::string optimizer_token(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  throw ConfigError("unknown optimizer '" + s + "'; valid: adam, sgd");
}

void validate(const OptimizerConfig& config) {
  if (!(config.learning_rate > 0) || !std::isfinite(config.learning_rate)) {
    throw ConfigError("optimizer.lr must be positive");
  }
  if (!(config.weight_decay >= 0)) throw ConfigError("optimizer.weight_decay must be nonnegative");
  if (!(config.beta1 >= 0 && config.beta1 < 1 && config.beta2 >= 0 && config.beta2 < 1)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(config.momentum >= 0 && config.momentum < 1)) throw ConfigError("optimizer.momentum must lie in [0, 1)");
}

Optimizer::Optimizer(std::vector<ag::Var> params, OptimizerConfig config)
    : params_(std::move(params)), config_(config) {
  validate(config_);
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i]->value.numel(), 0.0f);
    if (config_.kind == OptimizerKind::Adam) v_[i].assign(params_[i]->value.numel(), 0.0f);
  }
}

void Optimizer::zero_grad() {
  for (const ag::Var& p : params_) p->grad_buffer().fill(0.0f);
}

void Optimizer::step() {
  ++step_;
  const float lr = static_cast<float>(config_.learning_rate);
  const float wd = static_cast<float>(config_.weight_decay);
  const float b1 = static_cast<float>(config_.beta1);
  const float b2 = static_cast<float>(config_.beta2);
  const float eps = static_cast<float>(config_.eps);
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(1.0 - std::pow(config_.beta2, static_cast<double>(step_))));
  const float step_size = static_cast<float>(config_.learning_rate / bc1);
  const float mom = static_cast<float>(config_.momentum);

  for (std::size_t i = 0; i < params_.size(); ++i) {
    float* w = params_[i]->value.data();
    const float* g = params_[i]->grad_buffer().data();
    float* m = m_[i].data();
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(m_[i].size());
    if (config_.kind == OptimizerKind::Adam) {
      float* v = v_[i].data();
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t j = 0; j < n; ++j) {
        const float gj = g[j] + wd * w[j];
        m[j] = b1 * m[j] + (1.0f - b1) * gj;
        v[j] = b2 * v[j] + (1.0f - b2) * gj * gj;
        w[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
      }
    } else {
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t j = 0; j < n; ++j) {
        const float gj = g[j] + wd * w[j];
        m[j] = mom * m[j] + gj;
        w[j] -= lr * m[j];
      }
    }
  }
}

}  // namespace vessel
