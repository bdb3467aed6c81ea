#pragma once

// Serial, loop-for-loop reference versions of the kernels in kernels.hpp.
// They favour obviousness over speed and exist for tests and benchmarks.

#include <cstdint>
#include <span>

#include "vessel/kernels.hpp"

namespace vessel::reference {

void conv2d_forward(std::span<const float> input, int batch,
                    std::span<const float> weight, std::span<const float> bias,
                    std::span<float> output, const kernels::ConvGeometry& g);
void conv2d_backward(std::span<const float> input, int batch,
                     std::span<const float> weight,
                     std::span<const float> grad_output,
                     std::span<float> grad_input, std::span<float> grad_weight,
                     std::span<float> grad_bias,
                     const kernels::ConvGeometry& g);

void up_conv2x2_forward(std::span<const float> input, int batch,
                        std::span<const float> weight,
                        std::span<const float> bias, std::span<float> output,
                        const kernels::UpConvGeometry& g);
void up_conv2x2_backward(std::span<const float> input, int batch,
                         std::span<const float> weight,
                         std::span<const float> grad_output,
                         std::span<float> grad_input,
                         std::span<float> grad_weight,
                         std::span<float> grad_bias,
                         const kernels::UpConvGeometry& g);

void max_pool_forward(std::span<const float> input, int batch,
                      std::span<float> output, const kernels::PoolGeometry& g);

void batch_norm_train_forward(std::span<const float> input,
                              std::span<const float> gamma,
                              std::span<const float> beta, float eps,
                              std::span<float> output,
                              const kernels::NormGeometry& g);

void resize_bilinear(std::span<const float> src, int src_h, int src_w,
                     std::span<float> dst, int dst_h, int dst_w);

}  // namespace vessel::reference
