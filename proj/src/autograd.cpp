#include "vessel/autograd.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "vessel/errors.hpp"

namespace vessel::ag {

namespace {

thread_local bool g_grad_enabled = true;

using BackwardFn = std::function<void(Node&)>;

Var make_node(Tensor value, std::vector<Var> parents, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  const bool track = g_grad_enabled &&
                     std::any_of(parents.begin(), parents.end(),
                                 [](const Var& p) { return p && p->requires_grad; });
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return node;
}

std::span<float> grad_or_empty(const Var& v) {
  if (!v || !v->requires_grad) return {};
  return v->grad_buffer().values();
}

void require_same(const Shape4& a, const Shape4& b, const char* op) {
  if (!(a == b)) {
    throw ShapeError(std::string(op) + ": shapes " + a.str() + " and " + b.str() + " differ");
  }
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  return grad;
}

Var constant(Tensor value) { return make_node(std::move(value), {}, nullptr); }

Var parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return node;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Var& root, const Tensor& seed) {
  require_same(root->shape(), seed.shape(), "backward seed");
  if (!root->requires_grad) return;

  // Iterative post-order DFS; reversed it is a valid topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !parent->parents.empty() && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Tensor& g = root->grad_buffer();
  std::transform(g.values().begin(), g.values().end(), seed.values().begin(),
                 g.values().begin(), std::plus<>());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Shape4 xs = x->shape();
  const Shape4 ws = weight->shape();
  if (ws.c != xs.c || ws.h != ws.w) {
    throw ShapeError("conv2d: weight " + ws.str() + " incompatible with input " + xs.str());
  }
  kernels::ConvGeometry g{xs.c, ws.n, xs.h, xs.w, ws.h, stride, pad};
  if (g.out_h() <= 0 || g.out_w() <= 0) throw ShapeError("conv2d: input too small " + xs.str());
  Tensor out({xs.n, ws.n, g.out_h(), g.out_w()});
  std::span<const float> b = bias ? bias->value.values() : std::span<const float>{};
  kernels::conv2d_forward(x->value.values(), xs.n, weight->value.values(), b, out.values(), g);

  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_node(std::move(out), std::move(parents), [g](Node& self) {
    const Var& in = self.parents[0];
    const Var& w = self.parents[1];
    std::span<float> gb = self.parents.size() > 2 ? grad_or_empty(self.parents[2]) : std::span<float>{};
    kernels::conv2d_backward(in->value.values(), in->shape().n, w->value.values(),
                             self.grad.values(), grad_or_empty(in), grad_or_empty(w), gb, g);
  });
}

Var up_conv2x2(const Var& x, const Var& weight, const Var& bias) {
  const Shape4 xs = x->shape();
  const Shape4 ws = weight->shape();
  if (ws.n != xs.c || ws.h != 2 || ws.w != 2) {
    throw ShapeError("up_conv2x2: weight " + ws.str() + " incompatible with input " + xs.str());
  }
  kernels::UpConvGeometry g{xs.c, ws.c, xs.h, xs.w};
  Tensor out({xs.n, ws.c, xs.h * 2, xs.w * 2});
  std::span<const float> b = bias ? bias->value.values() : std::span<const float>{};
  kernels::up_conv2x2_forward(x->value.values(), xs.n, weight->value.values(), b, out.values(), g);
  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_node(std::move(out), std::move(parents), [g](Node& self) {
    const Var& in = self.parents[0];
    const Var& w = self.parents[1];
    std::span<float> gb = self.parents.size() > 2 ? grad_or_empty(self.parents[2]) : std::span<float>{};
    kernels::up_conv2x2_backward(in->value.values(), in->shape().n, w->value.values(),
                                 self.grad.values(), grad_or_empty(in), grad_or_empty(w), gb, g);
  });
}

Var max_pool(const Var& x, int kernel, int stride, int pad) {
  const Shape4 xs = x->shape();
  kernels::PoolGeometry g{xs.c, xs.h, xs.w, kernel, stride, pad};
  if (g.out_h() <= 0 || g.out_w() <= 0) throw ShapeError("max_pool: input too small " + xs.str());
  Tensor out({xs.n, xs.c, g.out_h(), g.out_w()});
  auto argmax = std::make_shared<std::vector<std::int32_t>>(out.numel());
  kernels::max_pool_forward(x->value.values(), xs.n, out.values(), *argmax, g);
  return make_node(std::move(out), {x}, [g, argmax](Node& self) {
    const Var& in = self.parents[0];
    kernels::max_pool_backward(self.grad.values(), *argmax, in->shape().n,
                               in->grad_buffer().values(), g);
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               BatchNormState& state, bool training) {
  const Shape4 xs = x->shape();
  if (static_cast<int>(gamma->value.numel()) != xs.c) {
    throw ShapeError("batch_norm: " + std::to_string(gamma->value.numel()) +
                     " scales for input " + xs.str());
  }
  kernels::NormGeometry g{xs.n, xs.c, static_cast<int>(xs.plane())};
  Tensor out(xs);
  if (!training) {
    kernels::batch_norm_eval_forward(x->value.values(), gamma->value.values(),
                                     beta->value.values(), state.running_mean.values(),
                                     state.running_var.values(), state.eps, out.values(), g);
    auto inv_std = std::make_shared<std::vector<float>>(xs.c);
    for (int c = 0; c < xs.c; ++c) {
      (*inv_std)[c] = static_cast<float>(1.0 / std::sqrt(static_cast<double>(state.running_var.data()[c]) + state.eps));
    }
    auto mean = std::make_shared<std::vector<float>>(state.running_mean.values().begin(),
                                                     state.running_mean.values().end());
    return make_node(std::move(out), {x, gamma, beta}, [g, inv_std, mean](Node& self) {
      const Var& in = self.parents[0];
      const float* gamma_v = self.parents[1]->value.data();
      std::span<float> gx = grad_or_empty(in);
      std::span<float> gg = grad_or_empty(self.parents[1]);
      std::span<float> gbeta = grad_or_empty(self.parents[2]);
      const std::size_t plane = g.plane;
      for (int n = 0; n < g.batch; ++n)
        for (int c = 0; c < g.channels; ++c) {
          const std::size_t base = (static_cast<std::size_t>(n) * g.channels + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            const float gy = self.grad.data()[base + i];
            const float xhat = (in->value.data()[base + i] - (*mean)[c]) * (*inv_std)[c];
            if (!gx.empty()) gx[base + i] += gy * gamma_v[c] * (*inv_std)[c];
            if (!gg.empty()) gg[c] += gy * xhat;
            if (!gbeta.empty()) gbeta[c] += gy;
          }
        }
    });
  }

  auto mean = std::make_shared<std::vector<float>>(xs.c);
  auto inv_std = std::make_shared<std::vector<float>>(xs.c);
  kernels::batch_norm_train_forward(x->value.values(), gamma->value.values(),
                                    beta->value.values(), state.eps, out.values(),
                                    *mean, *inv_std, g);
  const double count = static_cast<double>(xs.n) * xs.plane();
  for (int c = 0; c < xs.c; ++c) {
    const double var = 1.0 / (static_cast<double>((*inv_std)[c]) * (*inv_std)[c]) - state.eps;
    const double unbiased = count > 1 ? var * count / (count - 1) : var;
    float& rm = state.running_mean.data()[c];
    float& rv = state.running_var.data()[c];
    rm = static_cast<float>((1 - state.momentum) * rm + state.momentum * (*mean)[c]);
    rv = static_cast<float>((1 - state.momentum) * rv + state.momentum * std::max(unbiased, 0.0));
  }
  return make_node(std::move(out), {x, gamma, beta}, [g, mean, inv_std](Node& self) {
    const Var& in = self.parents[0];
    kernels::batch_norm_train_backward(in->value.values(), self.grad.values(),
                                       self.parents[1]->value.values(), *mean, *inv_std,
                                       grad_or_empty(in), grad_or_empty(self.parents[1]),
                                       grad_or_empty(self.parents[2]), g);
  });
}

Var relu(const Var& x) {
  Tensor out(x->shape());
  const float* src = x->value.data();
  float* dst = out.data();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(out.numel());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) dst[i] = src[i] > 0.0f ? src[i] : 0.0f;
  return make_node(std::move(out), {x}, [](Node& self) {
    const Var& in = self.parents[0];
    float* gx = in->grad_buffer().data();
    const float* y = self.value.data();
    const float* gy = self.grad.data();
    const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(self.value.numel());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      if (y[i] > 0.0f) gx[i] += gy[i];
    }
  });
}

Var sigmoid(const Var& x) {
  // Clamped so every output is strictly inside (0, 1) in float.
  constexpr float lo = std::numeric_limits<float>::min();
  const float hi = std::nextafter(1.0f, 0.0f);
  Tensor out(x->shape());
  const float* src = x->value.data();
  float* dst = out.data();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(out.numel());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const float s = 1.0f / (1.0f + std::exp(-src[i]));
    dst[i] = std::clamp(s, lo, hi);
  }
  return make_node(std::move(out), {x}, [](Node& self) {
    float* gx = self.parents[0]->grad_buffer().data();
    const float* y = self.value.data();
    const float* gy = self.grad.data();
    const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(self.value.numel());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) gx[i] += gy[i] * y[i] * (1.0f - y[i]);
  });
}

Var add(const Var& a, const Var& b) {
  require_same(a->shape(), b->shape(), "add");
  Tensor out(a->shape());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(out.numel());
  const float* pa = a->value.data();
  const float* pb = b->value.data();
  float* dst = out.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) dst[i] = pa[i] + pb[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    for (const Var& p : self.parents) {
      if (!p->requires_grad) continue;
      float* gp = p->grad_buffer().data();
      const float* gy = self.grad.data();
      const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(self.grad.numel());
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t i = 0; i < count; ++i) gp[i] += gy[i];
    }
  });
}

Var concat_channels(std::span<const Var> inputs) {
  if (inputs.empty()) throw ShapeError("concat of zero tensors");
  const Shape4 first = inputs.front()->shape();
  int channels = 0;
  for (const Var& v : inputs) {
    const Shape4 s = v->shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat: " + s.str() + " incompatible with " + first.str());
    }
    channels += s.c;
  }
  Tensor out({first.n, channels, first.h, first.w});
  const std::size_t plane = first.plane();
  for (int n = 0; n < first.n; ++n) {
    float* dst = out.sample(n).data();
    for (const Var& v : inputs) {
      auto src = v->value.sample(n);
      std::copy(src.begin(), src.end(), dst);
      dst += src.size();
    }
  }
  std::vector<Var> parents(inputs.begin(), inputs.end());
  return make_node(std::move(out), std::move(parents), [plane](Node& self) {
    const int batch = self.value.shape().n;
    for (int n = 0; n < batch; ++n) {
      const float* gy = self.grad.sample(n).data();
      for (const Var& p : self.parents) {
        const std::size_t len = static_cast<std::size_t>(p->shape().c) * plane;
        if (p->requires_grad) {
          float* gp = p->grad_buffer().sample(n).data();
          for (std::size_t i = 0; i < len; ++i) gp[i] += gy[i];
        }
        gy += len;
      }
    }
  });
}

Var global_avg_pool(const Var& x) {
  const Shape4 xs = x->shape();
  Tensor out({xs.n, xs.c, 1, 1});
  const std::size_t plane = xs.plane();
  const int planes = xs.n * xs.c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const float* src = x->value.data() + p * plane;
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += src[i];
    out.data()[p] = static_cast<float>(s / plane);
  }
  return make_node(std::move(out), {x}, [plane](Node& self) {
    float* gx = self.parents[0]->grad_buffer().data();
    const int count = static_cast<int>(self.value.numel());
#pragma omp parallel for schedule(static)
    for (int p = 0; p < count; ++p) {
      const float g = self.grad.data()[p] / static_cast<float>(plane);
      float* dst = gx + p * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += g;
    }
  });
}

Var scale_channels(const Var& x, const Var& gate) {
  const Shape4 xs = x->shape();
  const Shape4 gs = gate->shape();
  if (gs.n != xs.n || gs.c != xs.c || gs.h != 1 || gs.w != 1) {
    throw ShapeError("scale_channels: gate " + gs.str() + " for input " + xs.str());
  }
  Tensor out(xs);
  const std::size_t plane = xs.plane();
  const int planes = xs.n * xs.c;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const float g = gate->value.data()[p];
    const float* src = x->value.data() + p * plane;
    float* dst = out.data() + p * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * g;
  }
  return make_node(std::move(out), {x, gate}, [plane](Node& self) {
    const Var& in = self.parents[0];
    const Var& gt = self.parents[1];
    std::span<float> gx = grad_or_empty(in);
    std::span<float> gg = grad_or_empty(gt);
    const int count = static_cast<int>(gt->value.numel());
#pragma omp parallel for schedule(static)
    for (int p = 0; p < count; ++p) {
      const float* gy = self.grad.data() + p * plane;
      const float* src = in->value.data() + p * plane;
      const float g = gt->value.data()[p];
      double dot = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        if (!gx.empty()) gx[p * plane + i] += gy[i] * g;
        dot += static_cast<double>(gy[i]) * src[i];
      }
      if (!gg.empty()) gg[p] += static_cast<float>(dot);
    }
  });
}

Var upsample_nearest2x(const Var& x) {
  const Shape4 xs = x->shape();
  Tensor out({xs.n, xs.c, xs.h * 2, xs.w * 2});
  const int planes = xs.n * xs.c;
  const int ow = xs.w * 2;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const float* src = x->value.data() + static_cast<std::size_t>(p) * xs.plane();
    float* dst = out.data() + static_cast<std::size_t>(p) * xs.plane() * 4;
    for (int y = 0; y < xs.h * 2; ++y)
      for (int xx = 0; xx < ow; ++xx) dst[y * ow + xx] = src[(y / 2) * xs.w + xx / 2];
  }
  return make_node(std::move(out), {x}, [xs, planes, ow](Node& self) {
    float* gx = self.parents[0]->grad_buffer().data();
#pragma omp parallel for schedule(static)
    for (int p = 0; p < planes; ++p) {
      const float* gy = self.grad.data() + static_cast<std::size_t>(p) * xs.plane() * 4;
      float* dst = gx + static_cast<std::size_t>(p) * xs.plane();
      for (int y = 0; y < xs.h * 2; ++y)
        for (int xx = 0; xx < ow; ++xx) dst[(y / 2) * xs.w + xx / 2] += gy[y * ow + xx];
    }
  });
}

}  // namespace vessel::ag
