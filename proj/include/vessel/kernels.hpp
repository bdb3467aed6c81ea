#pragma once

// Data-parallel compute kernels used by the network and image pipeline.
// Every kernel here has a serial counterpart in reference.hpp that the
// tests compare against; the benchmark target times both.
//
// Conventions: NCHW, row-major. Backward kernels accumulate (+=) into
// their gradient outputs; an empty gradient span skips that computation.

#include <cstdint>
#include <span>

namespace vessel::kernels {

struct ConvGeometry {
  int in_channels = 0;
  int out_channels = 0;
  int in_h = 0;
  int in_w = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  int patch() const { return in_channels * kernel * kernel; }
};

// Row-major C = alpha·op(A)·op(B) + beta·C.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc);

void im2col(std::span<const float> image, const ConvGeometry& g,
            std::span<float> columns);
void col2im_add(std::span<const float> columns, const ConvGeometry& g,
                std::span<float> image);

// weight: out×in×k×k; bias: out or empty.
void conv2d_forward(std::span<const float> input, int batch,
                    std::span<const float> weight, std::span<const float> bias,
                    std::span<float> output, const ConvGeometry& g);
void conv2d_backward(std::span<const float> input, int batch,
                     std::span<const float> weight,
                     std::span<const float> grad_output,
                     std::span<float> grad_input, std::span<float> grad_weight,
                     std::span<float> grad_bias, const ConvGeometry& g);

// Transposed 2×2 convolution with stride 2; weight: in×out×2×2.
struct UpConvGeometry {
  int in_channels = 0;
  int out_channels = 0;
  int in_h = 0;
  int in_w = 0;
};
void up_conv2x2_forward(std::span<const float> input, int batch,
                        std::span<const float> weight,
                        std::span<const float> bias, std::span<float> output,
                        const UpConvGeometry& g);
void up_conv2x2_backward(std::span<const float> input, int batch,
                         std::span<const float> weight,
                         std::span<const float> grad_output,
                         std::span<float> grad_input,
                         std::span<float> grad_weight,
                         std::span<float> grad_bias, const UpConvGeometry& g);

struct PoolGeometry {
  int channels = 0;
  int in_h = 0;
  int in_w = 0;
  int kernel = 2;
  int stride = 2;
  int pad = 0;

  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};
// argmax receives the in-plane index of each selected input element.
void max_pool_forward(std::span<const float> input, int batch,
                      std::span<float> output, std::span<std::int32_t> argmax,
                      const PoolGeometry& g);
void max_pool_backward(std::span<const float> grad_output,
                       std::span<const std::int32_t> argmax, int batch,
                       std::span<float> grad_input, const PoolGeometry& g);

struct NormGeometry {
  int batch = 0;
  int channels = 0;
  int plane = 0;
};
// Batch statistics (biased variance). mean / inv_std receive per-channel values.
void batch_norm_train_forward(std::span<const float> input,
                              std::span<const float> gamma,
                              std::span<const float> beta, float eps,
                              std::span<float> output, std::span<float> mean,
                              std::span<float> inv_std, const NormGeometry& g);
void batch_norm_eval_forward(std::span<const float> input,
                             std::span<const float> gamma,
                             std::span<const float> beta,
                             std::span<const float> running_mean,
                             std::span<const float> running_var, float eps,
                             std::span<float> output, const NormGeometry& g);
// Gradient through the batch-statistics normalization.
void batch_norm_train_backward(std::span<const float> input,
                               std::span<const float> grad_output,
                               std::span<const float> gamma,
                               std::span<const float> mean,
                               std::span<const float> inv_std,
                               std::span<float> grad_input,
                               std::span<float> grad_gamma,
                               std::span<float> grad_beta,
                               const NormGeometry& g);

// Half-pixel-centre bilinear resampling of one plane, replicate border.
void resize_bilinear(std::span<const float> src, int src_h, int src_w,
                     std::span<float> dst, int dst_h, int dst_w);
// Half-pixel-centre nearest-neighbour resampling of one 8-bit plane.
void resize_nearest(std::span<const std::uint8_t> src, int src_h, int src_w,
                    std::span<std::uint8_t> dst, int dst_h, int dst_w);

// Rotation about the plane centre by `degrees` (positive = counter-clockwise
// as displayed, rows pointing down). Pixels mapped from outside become 0.
void rotate_bilinear(std::span<const float> src, int h, int w, double degrees,
                     std::span<float> dst);
void rotate_nearest(std::span<const std::uint8_t> src, int h, int w,
                    double degrees, std::span<std::uint8_t> dst);

}  // namespace vessel::kernels
