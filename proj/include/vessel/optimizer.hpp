#pragma once

#include <string>
#include <vector>

#include "vessel/autograd.hpp"

namespace vessel {

enum class OptimizerKind { Adam, Sgd };
std::string optimizer_token(OptimizerKind kind);      // adam / sgd
OptimizerKind parse_optimizer(const std::string& s);  // throws ConfigError

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.0;  // SGD only

  bool operator==(const OptimizerConfig&) const = default;
};

void validate(const OptimizerConfig& config);  // throws ConfigError

// Adam (with L2 weight decay folded into the gradient, as in torch.optim.Adam)
// or plain/momentum SGD.
class Optimizer {
 public:
  Optimizer(std::vector<ag::Var> params, OptimizerConfig config);

  void zero_grad();
  void step();
  long steps() const { return step_; }

 private:
  std::vector<ag::Var> params_;
  OptimizerConfig config_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  long step_ = 0;
};

}  // namespace vessel
