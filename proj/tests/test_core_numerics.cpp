#include <gtest/gtest.h>

#include <cmath>

#include "advlab/ops.hpp"
#include "advlab/rng.hpp"
#include "advlab/tensor.hpp"

using namespace advlab;

namespace {

Tensor random_tensor(const std::vector<int>& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// straight six-nested-loop cross-correlation, zero same-padding
Tensor conv2d_reference(const Tensor& in, const Tensor& kernel) {
  const int oc = kernel.dim(0), ic = kernel.dim(1), k = kernel.dim(2);
  const int h = in.dim(1), w = in.dim(2);
  const int pad = k / 2;
  Tensor out({oc, h, w});
  for (int o = 0; o < oc; ++o) {
    for (int c = 0; c < ic; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int iy = y + ky - pad;
              const int ix = x + kx - pad;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              out.at(o, y, x) +=
                  kernel[((static_cast<std::size_t>(o) * ic + c) * k + ky) * k + kx] *
                  in.at(c, iy, ix);
            }
          }
        }
      }
    }
  }
  return out;
}

// per-pixel corner-aligned interpolation, written independently of the library
double bilinear_reference_at(const Tensor& in, int ch, int oy, int ox, int new_h, int new_w) {
  const int h = in.dim(1), w = in.dim(2);
  const double fy = new_h > 1 ? static_cast<double>(oy) * (h - 1) / (new_h - 1) : 0.0;
  const double fx = new_w > 1 ? static_cast<double>(ox) * (w - 1) / (new_w - 1) : 0.0;
  const int y0 = static_cast<int>(std::floor(fy));
  const int x0 = static_cast<int>(std::floor(fx));
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const double dy = fy - y0, dx = fx - x0;
  return in.at(ch, y0, x0) * (1 - dy) * (1 - dx) + in.at(ch, y0, x1) * (1 - dy) * dx +
         in.at(ch, y1, x0) * dy * (1 - dx) + in.at(ch, y1, x1) * dy * dx;
}

}  // namespace

TEST(Tensor, ShapeAndDataChecks) {
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_THROW(Tensor({2, 0}), std::invalid_argument);
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW(Tensor({2}) += Tensor({3}), std::invalid_argument);
}

TEST(Sign, Definition) {
  const Tensor t({3}, {3.2, -0.1, 0.0});
  const Tensor s = sign(t);
  EXPECT_EQ(s[0], 1.0);
  EXPECT_EQ(s[1], -1.0);
  EXPECT_EQ(s[2], 0.0);
}

TEST(Sign, ZeroTensor) {
  const Tensor s = sign(Tensor({4}));
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s[i], 0.0);
}

TEST(Sign, Idempotent) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor t = random_tensor({3, 4, 4}, rng);
    EXPECT_TRUE(exactly_equal(sign(sign(t)), sign(t)));
  }
}

TEST(L1Normalize, Basic) {
  const auto a = l1_normalize(Tensor({2}, {2.0, -2.0}));
  EXPECT_FALSE(a.degenerate);
  EXPECT_DOUBLE_EQ(a.value[0], 0.5);
  EXPECT_DOUBLE_EQ(a.value[1], -0.5);

  const auto b = l1_normalize(Tensor({2}, {3.0, -1.0}));
  EXPECT_DOUBLE_EQ(b.value[0], 0.75);
  EXPECT_DOUBLE_EQ(b.value[1], -0.25);
}

TEST(L1Normalize, DegenerateSignal) {
  const auto z = l1_normalize(Tensor({3}));
  EXPECT_TRUE(z.degenerate);
  for (std::size_t i = 0; i < z.value.size(); ++i) EXPECT_EQ(z.value[i], 0.0);
}

TEST(L1Normalize, UnitNormProperty) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor t = random_tensor({2, 3, 3}, rng, -5.0, 5.0);
    const auto n = l1_normalize(t);
    ASSERT_FALSE(n.degenerate);
    double l1 = 0.0;
    for (std::size_t i = 0; i < n.value.size(); ++i) l1 += std::fabs(n.value[i]);
    EXPECT_NEAR(l1, 1.0, 1e-9);
  }
}

TEST(ClipToBall, Examples) {
  const Tensor ref({1}, {0.5});
  EXPECT_DOUBLE_EQ(clip_to_ball(Tensor({1}, {0.7}), ref, 0.1, 0.0, 1.0)[0], 0.6);
  EXPECT_DOUBLE_EQ(clip_to_ball(Tensor({1}, {0.45}), ref, 0.1, 0.0, 1.0)[0], 0.45);
  const Tensor edge({1}, {0.98});
  EXPECT_DOUBLE_EQ(clip_to_ball(Tensor({1}, {1.05}), edge, 0.1, 0.0, 1.0)[0], 1.0);
}

TEST(ClipToBall, Errors) {
  EXPECT_THROW(clip_to_ball(Tensor({2}), Tensor({3}), 0.1, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(clip_to_ball(Tensor({2}), Tensor({2}), -0.1, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(clip_to_ball(Tensor({2}), Tensor({2}), 0.1, 1.0, 0.0), std::invalid_argument);
}

TEST(ClipToBall, BallAndRangeProperty) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const double eps = rng.uniform(0.0, 0.5);
    const Tensor ref = random_tensor({2, 4, 4}, rng, 0.0, 1.0);
    const Tensor prop = random_tensor({2, 4, 4}, rng, -1.0, 2.0);
    const Tensor clipped = clip_to_ball(prop, ref, eps, 0.0, 1.0);
    EXPECT_LE(linf_distance(clipped, ref), eps + 1e-12);
    EXPECT_GE(clipped.min_value(), 0.0);
    EXPECT_LE(clipped.max_value(), 1.0);
  }
}

TEST(CosineSimilarity, Examples) {
  Rng rng(5);
  const Tensor a = random_tensor({8}, rng);
  EXPECT_NEAR(cosine_similarity(a, a).value, 1.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(a, a * -1.0).value, -1.0, 1e-12);
  EXPECT_DOUBLE_EQ(cosine_similarity(Tensor({2}, {1, 0}), Tensor({2}, {0, 1})).value, 0.0);
}

TEST(CosineSimilarity, DegenerateAndScaleInvariance) {
  const auto d = cosine_similarity(Tensor({3}), Tensor({3}, {1, 2, 3}));
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.value, 0.0);

  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor a = random_tensor({10}, rng);
    const Tensor b = random_tensor({10}, rng);
    const double c = rng.uniform(1e-3, 1e3);
    EXPECT_NEAR(cosine_similarity(a * c, b).value, cosine_similarity(a, b).value, 1e-9);
  }
}

TEST(Conv2d, IdentityKernel) {
  Rng rng(21);
  const Tensor in = random_tensor({3, 6, 6}, rng);
  const Tensor k1({1, 1}, {1.0});
  EXPECT_TRUE(exactly_equal(conv2d(in, k1), in));
}

TEST(Conv2d, DeltaKernelIsIdentityEverywhere) {
  Rng rng(22);
  const Tensor in = random_tensor({2, 5, 7}, rng);
  Tensor delta({3, 3});
  delta[4] = 1.0;  // center tap
  EXPECT_TRUE(exactly_equal(conv2d(in, delta), in));
}

TEST(Conv2d, NormalizedKernelKeepsConstantInterior) {
  const Tensor in = Tensor::full({1, 7, 7}, 0.4);
  Tensor k({3, 3});
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = 1.0 / 9.0;
  const Tensor out = conv2d(in, k);
  for (int y = 1; y < 6; ++y) {
    for (int x = 1; x < 6; ++x) EXPECT_NEAR(out.at(0, y, x), 0.4, 1e-12);
  }
}

TEST(Conv2d, MatchesBruteForceReference) {
  Rng rng(23);
  const Tensor in = random_tensor({1, 5, 5}, rng);
  Tensor k({1, 1, 3, 3});
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = rng.uniform(-1.0, 1.0);
  EXPECT_LE(linf_distance(conv2d(in, k), conv2d_reference(in, k)), 1e-12);

  const Tensor in2 = random_tensor({2, 6, 4}, rng);
  Tensor k2({3, 2, 5, 5});
  for (std::size_t i = 0; i < k2.size(); ++i) k2[i] = rng.uniform(-1.0, 1.0);
  EXPECT_LE(linf_distance(conv2d(in2, k2), conv2d_reference(in2, k2)), 1e-12);
}

TEST(Conv2d, Errors) {
  const Tensor in({1, 4, 4});
  EXPECT_THROW(conv2d(in, Tensor({2, 2})), std::invalid_argument);          // even kernel
  EXPECT_THROW(conv2d(in, Tensor({1, 3, 3, 3})), std::invalid_argument);    // channel mismatch
  EXPECT_THROW(conv2d(Tensor({4, 4}), Tensor({3, 3})), std::invalid_argument);
}

TEST(Conv2d, ValidPaddingShrinks) {
  Rng rng(29);
  const Tensor in = random_tensor({1, 5, 5}, rng);
  Tensor k({3, 3});
  k[0] = 1.0;  // top-left tap picks in(y-1, x-1); valid output starts at (1, 1) shifted
  const Tensor out = conv2d(in, k, Padding::valid);
  ASSERT_EQ(out.shape(), (std::vector<int>{1, 3, 3}));
  EXPECT_DOUBLE_EQ(out.at(0, 0, 0), in.at(0, 0, 0));
  EXPECT_DOUBLE_EQ(out.at(0, 2, 2), in.at(0, 2, 2));
}

TEST(BilinearResize, IdentityDims) {
  Rng rng(31);
  const Tensor in = random_tensor({3, 8, 8}, rng);
  EXPECT_TRUE(exactly_equal(bilinear_resize(in, 8, 8), in));
}

TEST(BilinearResize, LinearMidpoint) {
  const Tensor grid({1, 2, 2}, {0.0, 1.0, 0.0, 1.0});
  const Tensor out = bilinear_resize(grid, 2, 3);
  EXPECT_DOUBLE_EQ(out.at(0, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(out.at(0, 0, 1), 0.5);
  EXPECT_DOUBLE_EQ(out.at(0, 0, 2), 1.0);
  EXPECT_DOUBLE_EQ(out.at(0, 1, 1), 0.5);
}

TEST(BilinearResize, MatchesScalarReference) {
  Rng rng(33);
  const Tensor in = random_tensor({3, 8, 8}, rng, 0.0, 1.0);
  const Tensor out = bilinear_resize(in, 11, 11);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 11; ++y) {
      for (int x = 0; x < 11; ++x) {
        EXPECT_NEAR(out.at(c, y, x), bilinear_reference_at(in, c, y, x, 11, 11), 1e-12);
      }
    }
  }
}

TEST(BilinearResize, Errors) {
  EXPECT_THROW(bilinear_resize(Tensor({1, 4, 4}), 0, 4), std::invalid_argument);
  EXPECT_THROW(bilinear_resize(Tensor({1, 4, 4}), 4, -1), std::invalid_argument);
}

TEST(Rng, DeterministicAndDistinctStreams) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());

  Rng c(42);
  Rng child1 = c.derive(1), child2 = c.derive(2);
  EXPECT_NE(child1.next_u64(), child2.next_u64());

  // derive keys off the seed, not the evolving state
  Rng d(42);
  d.next_u64();
  Rng child1_again = d.derive(1);
  Rng child1_ref = Rng(42).derive(1);
  EXPECT_EQ(child1_again.next_u64(), child1_ref.next_u64());
}

TEST(Rng, UniformRanges) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    const int k = rng.uniform_int(7);
    EXPECT_GE(k, 0);
    EXPECT_LT(k, 7);
  }
  EXPECT_THROW(rng.uniform_int(0), std::invalid_argument);
}
