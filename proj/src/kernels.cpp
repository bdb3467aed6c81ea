#include "vessel/kernels.hpp"

#include <cblas.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace vessel::kernels {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

void im2col(std::span<const float> image, const ConvGeometry& g,
            std::span<float> columns) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const int kk = g.kernel * g.kernel;
  const int rows = g.patch();
#pragma omp parallel for schedule(static)
  for (int row = 0; row < rows; ++row) {
    const int c = row / kk;
    const int ky = (row % kk) / g.kernel;
    const int kx = row % g.kernel;
    const float* plane = image.data() + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    float* out = columns.data() + static_cast<std::size_t>(row) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      const int iy = oy * g.stride - g.pad + ky;
      float* dst = out + static_cast<std::size_t>(oy) * ow;
      if (iy < 0 || iy >= g.in_h) {
        std::fill(dst, dst + ow, 0.0f);
        continue;
      }
      const float* src = plane + static_cast<std::size_t>(iy) * g.in_w;
      for (int ox = 0; ox < ow; ++ox) {
        const int ix = ox * g.stride - g.pad + kx;
        dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : 0.0f;
      }
    }
  }
}

void col2im_add(std::span<const float> columns, const ConvGeometry& g,
                std::span<float> image) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const int kk = g.kernel * g.kernel;
  // One channel per iteration: rows of a channel all write the same plane.
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.in_channels; ++c) {
    float* plane = image.data() + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int r = 0; r < kk; ++r) {
      const int ky = r / g.kernel;
      const int kx = r % g.kernel;
      const float* col = columns.data() +
                         (static_cast<std::size_t>(c) * kk + r) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        const int iy = oy * g.stride - g.pad + ky;
        if (iy < 0 || iy >= g.in_h) continue;
        float* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
        const float* src = col + static_cast<std::size_t>(oy) * ow;
        for (int ox = 0; ox < ow; ++ox) {
          const int ix = ox * g.stride - g.pad + kx;
          if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
        }
      }
    }
  }
}

namespace {

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel == 1 && g.stride == 1 && g.pad == 0;
}

void add_channel_bias(std::span<float> out, std::span<const float> bias,
                      int channels, std::size_t plane) {
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    float* p = out.data() + c * plane;
    const float b = bias[c];
    for (std::size_t i = 0; i < plane; ++i) p[i] += b;
  }
}

void accumulate_channel_sums(std::span<const float> grad, int channels,
                             std::size_t plane, std::span<float> sums) {
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    const float* p = grad.data() + c * plane;
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += p[i];
    sums[c] += static_cast<float>(s);
  }
}

}  // namespace

void conv2d_forward(std::span<const float> input, int batch,
                    std::span<const float> weight, std::span<const float> bias,
                    std::span<float> output, const ConvGeometry& g) {
  const std::size_t in_stride = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h()) * g.out_w();
  const std::size_t out_stride = out_plane * g.out_channels;
  const int k = g.patch();
  std::vector<float> columns;
  if (!is_pointwise(g)) columns.resize(static_cast<std::size_t>(k) * out_plane);

  for (int n = 0; n < batch; ++n) {
    auto x = input.subspan(n * in_stride, in_stride);
    auto y = output.subspan(n * out_stride, out_stride);
    const float* b_mat = x.data();
    if (!is_pointwise(g)) {
      im2col(x, g, columns);
      b_mat = columns.data();
    }
    gemm(false, false, g.out_channels, static_cast<int>(out_plane), k, 1.0f,
         weight.data(), k, b_mat, static_cast<int>(out_plane), 0.0f, y.data(),
         static_cast<int>(out_plane));
    if (!bias.empty()) add_channel_bias(y, bias, g.out_channels, out_plane);
  }
}

void conv2d_backward(std::span<const float> input, int batch,
                     std::span<const float> weight,
                     std::span<const float> grad_output,
                     std::span<float> grad_input, std::span<float> grad_weight,
                     std::span<float> grad_bias, const ConvGeometry& g) {
  const std::size_t in_stride = static_cast<std::size_t>(g.in_channels) * g.in_h * g.in_w;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h()) * g.out_w();
  const std::size_t out_stride = out_plane * g.out_channels;
  const int k = g.patch();
  const int np = static_cast<int>(out_plane);
  const bool pointwise = is_pointwise(g);
  std::vector<float> columns;
  if (!pointwise) columns.resize(static_cast<std::size_t>(k) * out_plane);

  for (int n = 0; n < batch; ++n) {
    auto x = input.subspan(n * in_stride, in_stride);
    auto gy = grad_output.subspan(n * out_stride, out_stride);
    if (!grad_weight.empty()) {
      const float* cols = x.data();
      if (!pointwise) {
        im2col(x, g, columns);
        cols = columns.data();
      }
      gemm(false, true, g.out_channels, k, np, 1.0f, gy.data(), np, cols, np,
           1.0f, grad_weight.data(), k);
    }
    if (!grad_bias.empty()) {
      accumulate_channel_sums(gy, g.out_channels, out_plane, grad_bias);
    }
    if (!grad_input.empty()) {
      auto gx = grad_input.subspan(n * in_stride, in_stride);
      if (pointwise) {
        gemm(true, false, k, np, g.out_channels, 1.0f, weight.data(), k,
             gy.data(), np, 1.0f, gx.data(), np);
      } else {
        gemm(true, false, k, np, g.out_channels, 1.0f, weight.data(), k,
             gy.data(), np, 0.0f, columns.data(), np);
        col2im_add(columns, g, gx);
      }
    }
  }
}

void up_conv2x2_forward(std::span<const float> input, int batch,
                        std::span<const float> weight,
                        std::span<const float> bias, std::span<float> output,
                        const UpConvGeometry& g) {
  const int hw = g.in_h * g.in_w;
  const int ow = g.in_w * 2;
  const int taps = g.out_channels * 4;
  std::vector<float> tmp(static_cast<std::size_t>(taps) * hw);
  for (int n = 0; n < batch; ++n) {
    const float* x = input.data() + static_cast<std::size_t>(n) * g.in_channels * hw;
    float* y = output.data() + static_cast<std::size_t>(n) * g.out_channels * hw * 4;
    // tmp[(co,a,b), p] = Σ_ci w[ci,(co,a,b)] · x[ci,p]
    gemm(true, false, taps, hw, g.in_channels, 1.0f, weight.data(), taps, x,
         hw, 0.0f, tmp.data(), hw);
#pragma omp parallel for schedule(static)
    for (int co = 0; co < g.out_channels; ++co) {
      const float b = bias.empty() ? 0.0f : bias[co];
      float* plane = y + static_cast<std::size_t>(co) * hw * 4;
      for (int tap = 0; tap < 4; ++tap) {
        const int a = tap / 2;
        const int bb = tap % 2;
        const float* src = tmp.data() + static_cast<std::size_t>(co * 4 + tap) * hw;
        for (int i = 0; i < g.in_h; ++i) {
          float* row = plane + static_cast<std::size_t>(2 * i + a) * ow;
          for (int j = 0; j < g.in_w; ++j) row[2 * j + bb] = src[i * g.in_w + j] + b;
        }
      }
    }
  }
}

void up_conv2x2_backward(std::span<const float> input, int batch,
                         std::span<const float> weight,
                         std::span<const float> grad_output,
                         std::span<float> grad_input,
                         std::span<float> grad_weight,
                         std::span<float> grad_bias, const UpConvGeometry& g) {
  const int hw = g.in_h * g.in_w;
  const int ow = g.in_w * 2;
  const int taps = g.out_channels * 4;
  std::vector<float> gtmp(static_cast<std::size_t>(taps) * hw);
  for (int n = 0; n < batch; ++n) {
    const float* x = input.data() + static_cast<std::size_t>(n) * g.in_channels * hw;
    const float* gy = grad_output.data() + static_cast<std::size_t>(n) * g.out_channels * hw * 4;
#pragma omp parallel for schedule(static)
    for (int co = 0; co < g.out_channels; ++co) {
      const float* plane = gy + static_cast<std::size_t>(co) * hw * 4;
      double bsum = 0.0;
      for (int tap = 0; tap < 4; ++tap) {
        const int a = tap / 2;
        const int bb = tap % 2;
        float* dst = gtmp.data() + static_cast<std::size_t>(co * 4 + tap) * hw;
        for (int i = 0; i < g.in_h; ++i) {
          const float* row = plane + static_cast<std::size_t>(2 * i + a) * ow;
          for (int j = 0; j < g.in_w; ++j) {
            dst[i * g.in_w + j] = row[2 * j + bb];
            bsum += row[2 * j + bb];
          }
        }
      }
      if (!grad_bias.empty()) grad_bias[co] += static_cast<float>(bsum);
    }
    if (!grad_weight.empty()) {
      gemm(false, true, g.in_channels, taps, hw, 1.0f, x, hw, gtmp.data(), hw,
           1.0f, grad_weight.data(), taps);
    }
    if (!grad_input.empty()) {
      float* gx = grad_input.data() + static_cast<std::size_t>(n) * g.in_channels * hw;
      gemm(false, false, g.in_channels, hw, taps, 1.0f, weight.data(), taps,
           gtmp.data(), hw, 1.0f, gx, hw);
    }
  }
}

void max_pool_forward(std::span<const float> input, int batch,
                      std::span<float> output, std::span<std::int32_t> argmax,
                      const PoolGeometry& g) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const int planes = batch * g.channels;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const float* src = input.data() + static_cast<std::size_t>(p) * g.in_h * g.in_w;
    float* dst = output.data() + static_cast<std::size_t>(p) * oh * ow;
    std::int32_t* idx = argmax.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        float best = -std::numeric_limits<float>::infinity();
        std::int32_t best_i = -1;
        for (int ky = 0; ky < g.kernel; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int kx = 0; kx < g.kernel; ++kx) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.in_w) continue;
            const float v = src[iy * g.in_w + ix];
            if (best_i < 0 || v > best) {
              best = v;
              best_i = iy * g.in_w + ix;
            }
          }
        }
        dst[oy * ow + ox] = best;
        idx[oy * ow + ox] = best_i;
      }
    }
  }
}

void max_pool_backward(std::span<const float> grad_output,
                       std::span<const std::int32_t> argmax, int batch,
                       std::span<float> grad_input, const PoolGeometry& g) {
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h()) * g.out_w();
  const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
  const int planes = batch * g.channels;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const float* gy = grad_output.data() + p * out_plane;
    const std::int32_t* idx = argmax.data() + p * out_plane;
    float* gx = grad_input.data() + p * in_plane;
    for (std::size_t i = 0; i < out_plane; ++i) gx[idx[i]] += gy[i];
  }
}

void batch_norm_train_forward(std::span<const float> input,
                              std::span<const float> gamma,
                              std::span<const float> beta, float eps,
                              std::span<float> output, std::span<float> mean,
                              std::span<float> inv_std, const NormGeometry& g) {
  const std::size_t plane = g.plane;
  const std::size_t sample = plane * g.channels;
  const double count = static_cast<double>(g.batch) * plane;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.channels; ++c) {
    double s = 0.0;
    for (int n = 0; n < g.batch; ++n) {
      const float* x = input.data() + n * sample + c * plane;
      for (std::size_t i = 0; i < plane; ++i) s += x[i];
    }
    const double mu = s / count;
    double v = 0.0;
    for (int n = 0; n < g.batch; ++n) {
      const float* x = input.data() + n * sample + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = x[i] - mu;
        v += d * d;
      }
    }
    const double istd = 1.0 / std::sqrt(v / count + eps);
    mean[c] = static_cast<float>(mu);
    inv_std[c] = static_cast<float>(istd);
    const float scale = static_cast<float>(istd * gamma[c]);
    const float shift = static_cast<float>(beta[c] - mu * istd * gamma[c]);
    for (int n = 0; n < g.batch; ++n) {
      const float* x = input.data() + n * sample + c * plane;
      float* y = output.data() + n * sample + c * plane;
      for (std::size_t i = 0; i < plane; ++i) y[i] = x[i] * scale + shift;
    }
  }
}

void batch_norm_eval_forward(std::span<const float> input,
                             std::span<const float> gamma,
                             std::span<const float> beta,
                             std::span<const float> running_mean,
                             std::span<const float> running_var, float eps,
                             std::span<float> output, const NormGeometry& g) {
  const std::size_t plane = g.plane;
  const std::size_t sample = plane * g.channels;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.channels; ++c) {
    const double istd = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps);
    const float scale = static_cast<float>(istd * gamma[c]);
    const float shift = static_cast<float>(beta[c] - running_mean[c] * istd * gamma[c]);
    for (int n = 0; n < g.batch; ++n) {
      const float* x = input.data() + n * sample + c * plane;
      float* y = output.data() + n * sample + c * plane;
      for (std::size_t i = 0; i < plane; ++i) y[i] = x[i] * scale + shift;
    }
  }
}

void batch_norm_train_backward(std::span<const float> input,
                               std::span<const float> grad_output,
                               std::span<const float> gamma,
                               std::span<const float> mean,
                               std::span<const float> inv_std,
                               std::span<float> grad_input,
                               std::span<float> grad_gamma,
                               std::span<float> grad_beta,
                               const NormGeometry& g) {
  const std::size_t plane = g.plane;
  const std::size_t sample = plane * g.channels;
  const double count = static_cast<double>(g.batch) * plane;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < g.channels; ++c) {
    const double mu = mean[c];
    const double istd = inv_std[c];
    double sum_gy = 0.0;
    double sum_gy_xhat = 0.0;
    for (int n = 0; n < g.batch; ++n) {
      const float* x = input.data() + n * sample + c * plane;
      const float* gy = grad_output.data() + n * sample + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_gy += gy[i];
        sum_gy_xhat += gy[i] * (x[i] - mu) * istd;
      }
    }
    if (!grad_gamma.empty()) grad_gamma[c] += static_cast<float>(sum_gy_xhat);
    if (!grad_beta.empty()) grad_beta[c] += static_cast<float>(sum_gy);
    if (grad_input.empty()) continue;
    const double k = gamma[c] * istd;
    const double mean_gy = sum_gy / count;
    const double mean_gy_xhat = sum_gy_xhat / count;
    for (int n = 0; n < g.batch; ++n) {
      const float* x = input.data() + n * sample + c * plane;
      const float* gy = grad_output.data() + n * sample + c * plane;
      float* gx = grad_input.data() + n * sample + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double xhat = (x[i] - mu) * istd;
        gx[i] += static_cast<float>(k * (gy[i] - mean_gy - xhat * mean_gy_xhat));
      }
    }
  }
}

void resize_bilinear(std::span<const float> src, int src_h, int src_w,
                     std::span<float> dst, int dst_h, int dst_w) {
  const double sy = static_cast<double>(src_h) / dst_h;
  const double sx = static_cast<double>(src_w) / dst_w;
  std::vector<int> x0(dst_w), x1(dst_w);
  std::vector<float> ax(dst_w);
  for (int x = 0; x < dst_w; ++x) {
    const double fx = (x + 0.5) * sx - 0.5;
    const int ix = static_cast<int>(std::floor(fx));
    ax[x] = static_cast<float>(fx - ix);
    x0[x] = std::clamp(ix, 0, src_w - 1);
    x1[x] = std::clamp(ix + 1, 0, src_w - 1);
  }
#pragma omp parallel for schedule(static)
  for (int y = 0; y < dst_h; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const int iy = static_cast<int>(std::floor(fy));
    const float ay = static_cast<float>(fy - iy);
    const float* r0 = src.data() + static_cast<std::size_t>(std::clamp(iy, 0, src_h - 1)) * src_w;
    const float* r1 = src.data() + static_cast<std::size_t>(std::clamp(iy + 1, 0, src_h - 1)) * src_w;
    float* out = dst.data() + static_cast<std::size_t>(y) * dst_w;
    for (int x = 0; x < dst_w; ++x) {
      const float top = r0[x0[x]] + ax[x] * (r0[x1[x]] - r0[x0[x]]);
      const float bot = r1[x0[x]] + ax[x] * (r1[x1[x]] - r1[x0[x]]);
      out[x] = top + ay * (bot - top);
    }
  }
}

void resize_nearest(std::span<const std::uint8_t> src, int src_h, int src_w,
                    std::span<std::uint8_t> dst, int dst_h, int dst_w) {
  // Pixel-centre mapping floor((x + 0.5)·src/dst), in exact integer form.
  auto source_index = [](int x, int src_n, int dst_n) {
    const std::int64_t num = (2 * static_cast<std::int64_t>(x) + 1) * src_n;
    return std::min(static_cast<int>(num / (2 * static_cast<std::int64_t>(dst_n))), src_n - 1);
  };
  std::vector<int> xs(dst_w);
  for (int x = 0; x < dst_w; ++x) xs[x] = source_index(x, src_w, dst_w);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < dst_h; ++y) {
    const int iy = source_index(y, src_h, dst_h);
    const std::uint8_t* row = src.data() + static_cast<std::size_t>(iy) * src_w;
    std::uint8_t* out = dst.data() + static_cast<std::size_t>(y) * dst_w;
    for (int x = 0; x < dst_w; ++x) out[x] = row[xs[x]];
  }
}

namespace {

// cos/sin with exact values at multiples of 90°, so quarter turns are
// pure index permutations.
void rotation_terms(double degrees, double& c, double& s) {
  const double rad = degrees * std::numbers::pi / 180.0;
  c = std::cos(rad);
  s = std::sin(rad);
  for (double* v : {&c, &s}) {
    const double r = std::round(*v);
    if (std::abs(*v - r) < 1e-12) *v = r;
  }
}

}  // namespace

void rotate_bilinear(std::span<const float> src, int h, int w, double degrees,
                     std::span<float> dst) {
  double c, s;
  rotation_terms(degrees, c, s);
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  auto pixel = [&](int y, int x) -> float {
    return (y >= 0 && y < h && x >= 0 && x < w) ? src[static_cast<std::size_t>(y) * w + x] : 0.0f;
  };
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      const double fx = cx + c * dx - s * dy;
      const double fy = cy + s * dx + c * dy;
      const int ix = static_cast<int>(std::floor(fx));
      const int iy = static_cast<int>(std::floor(fy));
      const float ax = static_cast<float>(fx - ix);
      const float ay = static_cast<float>(fy - iy);
      float v;
      if (ax == 0.0f && ay == 0.0f) {
        v = pixel(iy, ix);
      } else {
        const float top = pixel(iy, ix) * (1.0f - ax) + pixel(iy, ix + 1) * ax;
        const float bot = pixel(iy + 1, ix) * (1.0f - ax) + pixel(iy + 1, ix + 1) * ax;
        v = top * (1.0f - ay) + bot * ay;
      }
      dst[static_cast<std::size_t>(y) * w + x] = v;
    }
  }
}

void rotate_nearest(std::span<const std::uint8_t> src, int h, int w,
                    double degrees, std::span<std::uint8_t> dst) {
  double c, s;
  rotation_terms(degrees, c, s);
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      const int ix = static_cast<int>(std::floor(cx + c * dx - s * dy + 0.5));
      const int iy = static_cast<int>(std::floor(cy + s * dx + c * dy + 0.5));
      dst[static_cast<std::size_t>(y) * w + x] =
          (iy >= 0 && iy < h && ix >= 0 && ix < w) ? src[static_cast<std::size_t>(iy) * w + ix] : 0;
    }
  }
}

}  // namespace vessel::kernels
