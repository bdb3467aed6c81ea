#include "vessel/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace vessel::reference {

using kernels::ConvGeometry;

namespace {

std::size_t idx4(int n, int c, int y, int x, int channels, int h, int w) {
  return ((static_cast<std::size_t>(n) * channels + c) * h + y) * w + x;
}

}  // namespace

void conv2d_forward(std::span<const float> input, int batch,
                    std::span<const float> weight, std::span<const float> bias,
                    std::span<float> output, const ConvGeometry& g) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const int k = g.kernel;
  for (int n = 0; n < batch; ++n)
    for (int co = 0; co < g.out_channels; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (int ci = 0; ci < g.in_channels; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                acc += static_cast<double>(
                           weight[((co * g.in_channels + ci) * k + ky) * k + kx]) *
                       input[idx4(n, ci, iy, ix, g.in_channels, g.in_h, g.in_w)];
              }
          output[idx4(n, co, oy, ox, g.out_channels, oh, ow)] = static_cast<float>(acc);
        }
}

void conv2d_backward(std::span<const float> input, int batch,
                     std::span<const float> weight,
                     std::span<const float> grad_output,
                     std::span<float> grad_input, std::span<float> grad_weight,
                     std::span<float> grad_bias, const ConvGeometry& g) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const int k = g.kernel;
  for (int n = 0; n < batch; ++n)
    for (int co = 0; co < g.out_channels; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const float gy = grad_output[idx4(n, co, oy, ox, g.out_channels, oh, ow)];
          if (!grad_bias.empty()) grad_bias[co] += gy;
          for (int ci = 0; ci < g.in_channels; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                const std::size_t wi = ((co * g.in_channels + ci) * k + ky) * k + kx;
                const std::size_t xi = idx4(n, ci, iy, ix, g.in_channels, g.in_h, g.in_w);
                if (!grad_weight.empty()) grad_weight[wi] += gy * input[xi];
                if (!grad_input.empty()) grad_input[xi] += gy * weight[wi];
              }
        }
}

void up_conv2x2_forward(std::span<const float> input, int batch,
                        std::span<const float> weight,
                        std::span<const float> bias, std::span<float> output,
                        const kernels::UpConvGeometry& g) {
  const int oh = g.in_h * 2;
  const int ow = g.in_w * 2;
  for (int n = 0; n < batch; ++n)
    for (int co = 0; co < g.out_channels; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const int iy = oy / 2, ix = ox / 2, a = oy % 2, b = ox % 2;
          double acc = bias.empty() ? 0.0 : bias[co];
          for (int ci = 0; ci < g.in_channels; ++ci) {
            acc += static_cast<double>(weight[((ci * g.out_channels + co) * 2 + a) * 2 + b]) *
                   input[idx4(n, ci, iy, ix, g.in_channels, g.in_h, g.in_w)];
          }
          output[idx4(n, co, oy, ox, g.out_channels, oh, ow)] = static_cast<float>(acc);
        }
}

void up_conv2x2_backward(std::span<const float> input, int batch,
                         std::span<const float> weight,
                         std::span<const float> grad_output,
                         std::span<float> grad_input,
                         std::span<float> grad_weight,
                         std::span<float> grad_bias,
                         const kernels::UpConvGeometry& g) {
  const int oh = g.in_h * 2;
  const int ow = g.in_w * 2;
  for (int n = 0; n < batch; ++n)
    for (int co = 0; co < g.out_channels; ++co)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          const int iy = oy / 2, ix = ox / 2, a = oy % 2, b = ox % 2;
          const float gy = grad_output[idx4(n, co, oy, ox, g.out_channels, oh, ow)];
          if (!grad_bias.empty()) grad_bias[co] += gy;
          for (int ci = 0; ci < g.in_channels; ++ci) {
            const std::size_t wi = ((ci * g.out_channels + co) * 2 + a) * 2 + b;
            const std::size_t xi = idx4(n, ci, iy, ix, g.in_channels, g.in_h, g.in_w);
            if (!grad_weight.empty()) grad_weight[wi] += gy * input[xi];
            if (!grad_input.empty()) grad_input[xi] += gy * weight[wi];
          }
        }
}

void max_pool_forward(std::span<const float> input, int batch,
                      std::span<float> output, const kernels::PoolGeometry& g) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < g.channels; ++c)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          float best = -std::numeric_limits<float>::infinity();
          for (int ky = 0; ky < g.kernel; ++ky)
            for (int kx = 0; kx < g.kernel; ++kx) {
              const int iy = oy * g.stride - g.pad + ky;
              const int ix = ox * g.stride - g.pad + kx;
              if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
              best = std::max(best, input[idx4(n, c, iy, ix, g.channels, g.in_h, g.in_w)]);
            }
          output[idx4(n, c, oy, ox, g.channels, oh, ow)] = best;
        }
}

void batch_norm_train_forward(std::span<const float> input,
                              std::span<const float> gamma,
                              std::span<const float> beta, float eps,
                              std::span<float> output,
                              const kernels::NormGeometry& g) {
  const std::size_t plane = g.plane;
  for (int c = 0; c < g.channels; ++c) {
    std::vector<double> values;
    for (int n = 0; n < g.batch; ++n)
      for (std::size_t i = 0; i < plane; ++i)
        values.push_back(input[(static_cast<std::size_t>(n) * g.channels + c) * plane + i]);
    double mu = 0.0;
    for (double v : values) mu += v;
    mu /= values.size();
    double var = 0.0;
    for (double v : values) var += (v - mu) * (v - mu);
    var /= values.size();
    for (int n = 0; n < g.batch; ++n)
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t at = (static_cast<std::size_t>(n) * g.channels + c) * plane + i;
        output[at] = static_cast<float>((input[at] - mu) / std::sqrt(var + eps) * gamma[c] + beta[c]);
      }
  }
}

void resize_bilinear(std::span<const float> src, int src_h, int src_w,
                     std::span<float> dst, int dst_h, int dst_w) {
  auto at = [&](int y, int x) {
    y = std::clamp(y, 0, src_h - 1);
    x = std::clamp(x, 0, src_w - 1);
    return static_cast<double>(src[static_cast<std::size_t>(y) * src_w + x]);
  };
  for (int y = 0; y < dst_h; ++y) {
    for (int x = 0; x < dst_w; ++x) {
      const double fy = (y + 0.5) * src_h / dst_h - 0.5;
      const double fx = (x + 0.5) * src_w / dst_w - 0.5;
      const int iy = static_cast<int>(std::floor(fy));
      const int ix = static_cast<int>(std::floor(fx));
      const double ay = fy - iy;
      const double ax = fx - ix;
      const double v = (1 - ay) * ((1 - ax) * at(iy, ix) + ax * at(iy, ix + 1)) +
                       ay * ((1 - ax) * at(iy + 1, ix) + ax * at(iy + 1, ix + 1));
      dst[static_cast<std::size_t>(y) * dst_w + x] = static_cast<float>(v);
    }
  }
}

}  // namespace vessel::reference
