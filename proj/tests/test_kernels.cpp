#include <doctest.h>

#include <cmath>
#include <vector>

#include <opencv2/imgproc.hpp>

#include "vessel/kernels.hpp"
#include "vessel/reference.hpp"
#include "vessel/rng.hpp"

using namespace vessel;

namespace {

std::vector<float> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

void check_close(const std::vector<float>& a, const std::vector<float>& b, float tol) {
  REQUIRE(a.size() == b.size());
  float worst = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0f, std::abs(b[i])));
  }
  CHECK(worst <= tol);
}

const kernels::ConvGeometry kConvCases[] = {
    {3, 5, 9, 7, 3, 1, 1},   // the common 3×3 same-padding case
    {4, 6, 10, 10, 3, 2, 1}, // strided
    {2, 3, 11, 9, 7, 2, 3},  // ResNet-style stem
    {5, 4, 6, 6, 1, 1, 0},   // 1×1 projection
    {3, 2, 8, 8, 1, 2, 0},   // strided 1×1 shortcut
};

}  // namespace

TEST_CASE("conv2d forward matches the serial reference") {
  for (const auto& g : kConvCases) {
    const int batch = 2;
    const auto in = random_vector(static_cast<std::size_t>(batch) * g.in_channels * g.in_h * g.in_w, 1);
    const auto w = random_vector(static_cast<std::size_t>(g.out_channels) * g.patch(), 2);
    const auto b = random_vector(g.out_channels, 3);
    const std::size_t out_n = static_cast<std::size_t>(batch) * g.out_channels * g.out_h() * g.out_w();
    std::vector<float> fast(out_n), slow(out_n);
    kernels::conv2d_forward(in, batch, w, b, fast, g);
    reference::conv2d_forward(in, batch, w, b, slow, g);
    check_close(fast, slow, 1e-5f);

    // Without bias.
    kernels::conv2d_forward(in, batch, w, {}, fast, g);
    reference::conv2d_forward(in, batch, w, {}, slow, g);
    check_close(fast, slow, 1e-5f);
  }
}

TEST_CASE("conv2d backward matches the serial reference") {
  for (const auto& g : kConvCases) {
    const int batch = 2;
    const std::size_t in_n = static_cast<std::size_t>(batch) * g.in_channels * g.in_h * g.in_w;
    const std::size_t out_n = static_cast<std::size_t>(batch) * g.out_channels * g.out_h() * g.out_w();
    const auto in = random_vector(in_n, 4);
    const auto w = random_vector(static_cast<std::size_t>(g.out_channels) * g.patch(), 5);
    const auto go = random_vector(out_n, 6);
    // Start from non-zero buffers: the kernels accumulate.
    std::vector<float> gi_a(in_n, 0.5f), gw_a(w.size(), 0.25f), gb_a(g.out_channels, -1.0f);
    auto gi_b = gi_a, gw_b = gw_a, gb_b = gb_a;
    kernels::conv2d_backward(in, batch, w, go, gi_a, gw_a, gb_a, g);
    reference::conv2d_backward(in, batch, w, go, gi_b, gw_b, gb_b, g);
    check_close(gi_a, gi_b, 1e-5f);
    check_close(gw_a, gw_b, 1e-5f);
    check_close(gb_a, gb_b, 1e-5f);
  }
}

TEST_CASE("im2col followed by col2im_add counts each pixel's patch memberships") {
  const kernels::ConvGeometry g{1, 1, 5, 4, 3, 1, 1};
  std::vector<float> ones(20, 1.0f), cols(static_cast<std::size_t>(g.patch()) * g.out_h() * g.out_w());
  kernels::im2col(ones, g, cols);
  std::vector<float> back(20, 0.0f);
  kernels::col2im_add(cols, g, back);
  // Interior pixels sit in 9 patches, edges in 6, corners in 4.
  CHECK(back[0] == 4.0f);
  CHECK(back[1] == 6.0f);
  CHECK(back[5] == 9.0f);
}

TEST_CASE("transposed 2x2 convolution matches the serial reference") {
  const kernels::UpConvGeometry g{3, 4, 5, 6};
  const int batch = 2;
  const std::size_t in_n = static_cast<std::size_t>(batch) * 3 * 5 * 6;
  const std::size_t out_n = static_cast<std::size_t>(batch) * 4 * 10 * 12;
  const auto in = random_vector(in_n, 7);
  const auto w = random_vector(3 * 4 * 4, 8);
  const auto b = random_vector(4, 9);
  std::vector<float> fast(out_n), slow(out_n);
  kernels::up_conv2x2_forward(in, batch, w, b, fast, g);
  reference::up_conv2x2_forward(in, batch, w, b, slow, g);
  check_close(fast, slow, 1e-5f);

  const auto go = random_vector(out_n, 10);
  std::vector<float> gi_a(in_n), gw_a(w.size()), gb_a(4), gi_b(in_n), gw_b(w.size()), gb_b(4);
  kernels::up_conv2x2_backward(in, batch, w, go, gi_a, gw_a, gb_a, g);
  reference::up_conv2x2_backward(in, batch, w, go, gi_b, gw_b, gb_b, g);
  check_close(gi_a, gi_b, 1e-5f);
  check_close(gw_a, gw_b, 1e-5f);
  check_close(gb_a, gb_b, 1e-5f);
}

TEST_CASE("max pooling matches the serial reference and routes gradients to the argmax") {
  for (const kernels::PoolGeometry g : {kernels::PoolGeometry{3, 8, 6, 2, 2, 0}, kernels::PoolGeometry{2, 9, 9, 3, 2, 1}}) {
    const int batch = 2;
    const std::size_t in_n = static_cast<std::size_t>(batch) * g.channels * g.in_h * g.in_w;
    const std::size_t out_n = static_cast<std::size_t>(batch) * g.channels * g.out_h() * g.out_w();
    const auto in = random_vector(in_n, 11);
    std::vector<float> fast(out_n), slow(out_n);
    std::vector<std::int32_t> arg(out_n);
    kernels::max_pool_forward(in, batch, fast, arg, g);
    reference::max_pool_forward(in, batch, slow, g);
    CHECK(fast == slow);

    std::vector<float> go(out_n, 1.0f), gi(in_n, 0.0f);
    kernels::max_pool_backward(go, arg, batch, gi, g);
    double total = 0.0;
    for (float v : gi) total += v;
    CHECK(total == doctest::Approx(static_cast<double>(out_n)));
    const std::size_t plane = static_cast<std::size_t>(g.in_h) * g.in_w;
    for (std::size_t o = 0; o < out_n; ++o) {
      const std::size_t nc = o / (static_cast<std::size_t>(g.out_h()) * g.out_w());
      CHECK(in[nc * plane + static_cast<std::size_t>(arg[o])] == fast[o]);
    }
  }
}

TEST_CASE("batch norm forward in training mode matches the serial reference") {
  const kernels::NormGeometry g{3, 4, 25};
  const auto in = random_vector(3 * 4 * 25, 12);
  const auto gamma = random_vector(4, 13);
  const auto beta = random_vector(4, 14);
  std::vector<float> fast(in.size()), slow(in.size()), mean(4), inv_std(4);
  kernels::batch_norm_train_forward(in, gamma, beta, 1e-5f, fast, mean, inv_std, g);
  reference::batch_norm_train_forward(in, gamma, beta, 1e-5f, slow, g);
  check_close(fast, slow, 1e-5f);
}

TEST_CASE("batch norm in eval mode applies the running statistics") {
  const kernels::NormGeometry g{1, 2, 2};
  const std::vector<float> in = {1, 2, 3, 4}, gamma = {2, 1}, beta = {0, 1}, mean = {1, 3}, var = {4, 1};
  std::vector<float> out(4);
  kernels::batch_norm_eval_forward(in, gamma, beta, mean, var, 0.0f, out, g);
  CHECK(out[0] == doctest::Approx(0.0));
  CHECK(out[1] == doctest::Approx(1.0));
  CHECK(out[2] == doctest::Approx(1.0));
  CHECK(out[3] == doctest::Approx(2.0));
}

TEST_CASE("bilinear resize agrees with the reference and with OpenCV") {
  for (auto [sh, sw, dh, dw] : {std::array{13, 17, 32, 32}, std::array{40, 30, 16, 16}, std::array{5, 5, 5, 5}}) {
    const auto src = random_vector(static_cast<std::size_t>(sh) * sw, 15);
    std::vector<float> fast(static_cast<std::size_t>(dh) * dw), slow(fast.size());
    kernels::resize_bilinear(src, sh, sw, fast, dh, dw);
    reference::resize_bilinear(src, sh, sw, slow, dh, dw);
    check_close(fast, slow, 1e-6f);

    cv::Mat m(sh, sw, CV_32F, const_cast<float*>(src.data())), r;
    cv::resize(m, r, cv::Size(dw, dh), 0, 0, cv::INTER_LINEAR);
    std::vector<float> cvv(r.begin<float>(), r.end<float>());
    check_close(fast, cvv, 1e-4f);
  }
}

TEST_CASE("nearest resize samples the pixel under each output centre") {
  Rng rng(16);
  for (auto [sh, sw, dh, dw] : {std::array{13, 17, 32, 32}, std::array{64, 48, 16, 20}, std::array{584, 565, 512, 512}}) {
    std::vector<std::uint8_t> src(static_cast<std::size_t>(sh) * sw);
    for (auto& v : src) v = static_cast<std::uint8_t>(rng.below(256));
    std::vector<std::uint8_t> out(static_cast<std::size_t>(dh) * dw);
    kernels::resize_nearest(src, sh, sw, out, dh, dw);
    for (int y = 0; y < dh; ++y) {
      // Centre of output row y in source coordinates, compared in doubles.
      const double cy = (y + 0.5) * sh / dh;
      for (int x = 0; x < dw; ++x) {
        const double cx = (x + 0.5) * sw / dw;
        const int iy = static_cast<int>(cy), ix = static_cast<int>(cx);
        REQUIRE(out[static_cast<std::size_t>(y) * dw + x] == src[static_cast<std::size_t>(iy) * sw + ix]);
      }
    }
  }
}

TEST_CASE("nearest resize by integer factors replicates and decimates") {
  const std::vector<std::uint8_t> src{1, 2, 3, 4, 5, 6};  // 2×3
  std::vector<std::uint8_t> up(4 * 6);
  kernels::resize_nearest(src, 2, 3, up, 4, 6);
  CHECK(up == std::vector<std::uint8_t>{1, 1, 2, 2, 3, 3, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6, 4, 4, 5, 5, 6, 6});
  std::vector<std::uint8_t> down(2 * 3);
  kernels::resize_nearest(up, 4, 6, down, 2, 3);
  CHECK(down == src);
  std::vector<std::uint8_t> big(12 * 12);
  for (std::size_t i = 0; i < big.size(); ++i) big[i] = static_cast<std::uint8_t>(i);
  std::vector<std::uint8_t> third(4 * 4);
  kernels::resize_nearest(big, 12, 12, third, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(third[y * 4 + x] == big[(3 * y + 1) * 12 + 3 * x + 1]);
}

TEST_CASE("quarter-turn rotation is an index permutation") {
  const int n = 7;
  const auto src = random_vector(n * n, 17);
  std::vector<float> dst(n * n);
  kernels::rotate_bilinear(src, n, n, 90.0, dst);
  std::vector<std::uint8_t> src8(n * n), dst8(n * n);
  for (int i = 0; i < n * n; ++i) src8[i] = static_cast<std::uint8_t>(i);
  kernels::rotate_nearest(src8, n, n, 90.0, dst8);
  // Counter-clockwise as displayed: input (r, c) lands on (n-1-c, r).
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      CHECK(dst[(n - 1 - c) * n + r] == src[r * n + c]);
      CHECK(dst8[(n - 1 - c) * n + r] == src8[r * n + c]);
    }
  }
}

TEST_CASE("rotation by zero is the identity and fills uncovered corners with zero") {
  const int n = 9;
  const auto src = random_vector(n * n, 18);
  std::vector<float> dst(n * n);
  kernels::rotate_bilinear(src, n, n, 0.0, dst);
  CHECK(dst == src);
  std::vector<float> ones(n * n, 1.0f);
  kernels::rotate_bilinear(ones, n, n, 45.0, dst);
  CHECK(dst[0] == 0.0f);
  CHECK(dst[n * n / 2] == doctest::Approx(1.0));
}

TEST_CASE("gemm honours transposes and beta") {
  // A 2×3, B 3×2.
  const float a[] = {1, 2, 3, 4, 5, 6};
  const float b[] = {7, 8, 9, 10, 11, 12};
  float c[] = {1, 1, 1, 1};
  kernels::gemm(false, false, 2, 2, 3, 1.0f, a, 3, b, 2, 1.0f, c, 2);
  CHECK(c[0] == 59.0f);
  CHECK(c[1] == 65.0f);
  CHECK(c[2] == 140.0f);
  CHECK(c[3] == 155.0f);
  // Aᵀ stored as 3×2, Bᵀ as 2×3.
  const float at[] = {1, 4, 2, 5, 3, 6};
  const float bt[] = {7, 9, 11, 8, 10, 12};
  float d[4] = {};
  kernels::gemm(true, true, 2, 2, 3, 1.0f, at, 2, bt, 3, 0.0f, d, 2);
  CHECK(d[0] == 58.0f);
  CHECK(d[3] == 154.0f);
}
