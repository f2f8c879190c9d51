#include <gtest/gtest.h>

#include <cmath>

#include "convad/kernels.hpp"
#include "convad/random.hpp"
#include "convad/synthetic.hpp"
#include "oracles.hpp"

using namespace convad;

namespace {

Tensor random_t(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  return random_tensor(shape, rng);
}

}  // namespace

TEST(Tensor, ShapeAndData) {
  Tensor t({2, 3, 4}, 1.5f);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.channels(), 2u);
  EXPECT_EQ(t.height(), 3u);
  EXPECT_EQ(t.width(), 4u);
  t(1, 2, 3) = 7.0f;
  EXPECT_EQ(t[23], 7.0f);
  EXPECT_EQ(t.plane(1)(2, 3), 7.0f);
}

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor(Shape{}), ShapeError);
  EXPECT_THROW(Tensor({2, 0, 3}), ShapeError);
  EXPECT_THROW(Tensor({4}, Tensor::Vector::Zero(3)), ShapeError);
  EXPECT_NO_THROW(Tensor({0, 3, 3}));
}

TEST(Tensor, ReshapeKeepsOrder) {
  const Tensor t({1, 2, 2}, {1, 2, 3, 4});
  const Tensor r = t.reshaped({4});
  EXPECT_EQ(r.shape(), Shape{4});
  EXPECT_EQ(r[2], 3.0f);
  EXPECT_THROW(t.reshaped({5}), ShapeError);
}

TEST(Geometry, OutputExtentFormula) {
  EXPECT_EQ(window_output_extent(8, 3, 1, 1, 1, "h"), 8u);
  EXPECT_EQ(window_output_extent(8, 3, 2, 1, 1, "h"), 4u);
  EXPECT_EQ(window_output_extent(9, 3, 2, 2, 2, "h"), 5u);
  EXPECT_THROW(window_output_extent(2, 5, 1, 0, 1, "h"), GeometryError);
  EXPECT_THROW(ConvGeometry::square(0).validate(), GeometryError);
  EXPECT_THROW(ConvGeometry::square(3, 0).validate(), GeometryError);
}

TEST(Geometry, ExtentMatchesEnumeration) {
  for (std::size_t in = 1; in <= 12; ++in) {
    for (std::size_t k = 1; k <= 4; ++k) {
      for (std::size_t s = 1; s <= 3; ++s) {
        for (std::size_t p = 0; p <= 2; ++p) {
          for (std::size_t d = 1; d <= 2; ++d) {
            const std::size_t want = oracle::extent(in, k, s, p, d);
            if (want == 0) {
              EXPECT_THROW(window_output_extent(in, k, s, p, d, "h"), GeometryError);
            } else {
              EXPECT_EQ(window_output_extent(in, k, s, p, d, "h"), want);
            }
          }
        }
      }
    }
  }
}

TEST(Conv2d, IdentityKernel) {
  const Tensor x({1, 3, 3}, 1.0f);
  const Tensor y = conv2d(x, Tensor({1, 1, 1, 1}, 1.0f), Tensor({1}, 0.0f), ConvGeometry::square(1));
  EXPECT_EQ(y, x);
}

TEST(Conv2d, MeanOfFour) {
  const Tensor x({1, 2, 2}, {1, 2, 3, 4});
  const Tensor y = conv2d(x, Tensor({1, 1, 2, 2}, 0.25f), Tensor({1}, 0.0f), ConvGeometry::square(2));
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1}));
  EXPECT_FLOAT_EQ(y[0], 2.5f);
}

TEST(Conv2d, MatchesLoopOracle) {
  const Tensor x = random_t({3, 8, 8}, 1);
  const Tensor w = random_t({4, 3, 3, 3}, 2);
  const Tensor b = random_t({4}, 3);
  const auto g = ConvGeometry::square(3, 1, 1).channels(3, 4);
  // float accumulation of 27 products against a double oracle
  EXPECT_LE(max_abs_diff(conv2d(x, w, b, g), oracle::conv2d(x, w, b, g)), 1e-5f);
}

TEST(Conv2d, RandomGeometriesMatchOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    ConvGeometry g;
    g.kernel_h = static_cast<std::size_t>(rng.integer(1, 4));
    g.kernel_w = static_cast<std::size_t>(rng.integer(1, 4));
    g.stride_h = static_cast<std::size_t>(rng.integer(1, 3));
    g.stride_w = static_cast<std::size_t>(rng.integer(1, 3));
    g.pad_h = static_cast<std::size_t>(rng.integer(0, 2));
    g.pad_w = static_cast<std::size_t>(rng.integer(0, 2));
    g.dilation_h = static_cast<std::size_t>(rng.integer(1, 2));
    g.dilation_w = static_cast<std::size_t>(rng.integer(1, 2));
    const auto cin = static_cast<std::size_t>(rng.integer(1, 3));
    const auto cout = static_cast<std::size_t>(rng.integer(1, 3));
    const Shape in{cin, static_cast<std::size_t>(rng.integer(5, 10)),
                   static_cast<std::size_t>(rng.integer(5, 10))};
    const Tensor x = random_tensor(in, rng);
    const Tensor w = random_tensor({cout, cin, g.kernel_h, g.kernel_w}, rng);
    const Tensor b = random_tensor({cout}, rng);
    if (oracle::extent(in[1], g.kernel_h, g.stride_h, g.pad_h, g.dilation_h) == 0 ||
        oracle::extent(in[2], g.kernel_w, g.stride_w, g.pad_w, g.dilation_w) == 0) {
      EXPECT_THROW(conv2d(x, w, b, g), GeometryError);
      continue;
    }
    const Tensor got = conv2d(x, w, b, g);
    const Tensor want = oracle::conv2d(x, w, b, g);
    ASSERT_EQ(got.shape(), want.shape());
    EXPECT_LE(max_abs_diff(got, want), 1e-5f);
  }
}

TEST(Conv2d, ShapeErrorsNameTheDimension) {
  const Tensor x({3, 5, 5});
  try {
    conv2d(x, Tensor({2, 4, 3, 3}), Tensor({2}), ConvGeometry::square(3));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("input channels"), std::string::npos);
  }
  EXPECT_THROW(conv2d(x, Tensor({2, 3, 3, 3}), Tensor({3}), ConvGeometry::square(3)), ShapeError);
  EXPECT_THROW(conv2d(Tensor({9}), Tensor({2, 3, 3, 3}), Tensor({2}), ConvGeometry::square(3)),
               ShapeError);
}

TEST(Conv2d, Deterministic) {
  const Tensor x = random_t({3, 8, 8}, 5);
  const Tensor w = random_t({2, 3, 3, 3}, 6);
  const Tensor b = random_t({2}, 7);
  EXPECT_EQ(conv2d(x, w, b, ConvGeometry::square(3, 1, 1)),
            conv2d(x, w, b, ConvGeometry::square(3, 1, 1)));
}

TEST(Pool2d, SmallCases) {
  const Tensor x({1, 2, 2}, {1, 2, 3, 4});
  EXPECT_FLOAT_EQ(pool2d(x, ConvGeometry::square(2, 2), PoolMode::max)[0], 4.0f);
  EXPECT_FLOAT_EQ(pool2d(x, ConvGeometry::square(2, 2), PoolMode::avg)[0], 2.5f);
}

TEST(Pool2d, MatchesLoopOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor x = random_t({1, 6, 6}, seed);
    for (const auto& g : {ConvGeometry::square(2, 2), ConvGeometry::square(3, 1, 1),
                          ConvGeometry::square(3, 2, 1)}) {
      EXPECT_LE(max_abs_diff(pool2d(x, g, PoolMode::max), oracle::pool2d(x, g, true)), 1e-6f);
      EXPECT_LE(max_abs_diff(pool2d(x, g, PoolMode::avg), oracle::pool2d(x, g, false)), 1e-6f);
    }
  }
}

TEST(Pool2d, MaxIgnoresPadding) {
  const Tensor x({1, 2, 2}, -5.0f);
  const Tensor y = pool2d(x, ConvGeometry::square(3, 1, 1), PoolMode::max);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], -5.0f);
}

TEST(Elementwise, Activations) {
  const Tensor x({3}, {-1, 0, 2});
  EXPECT_EQ(elementwise(x, Activation::relu), Tensor({3}, {0, 0, 2}));
  EXPECT_FLOAT_EQ(elementwise(Tensor({1}, {0}), Activation::tanh)[0], 0.0f);
  EXPECT_FLOAT_EQ(elementwise(Tensor({1}, {0}), Activation::sigmoid)[0], 0.5f);
  EXPECT_NEAR(elementwise(Tensor({1}, {1}), Activation::silu)[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-6);
}

TEST(Batchnorm, IdentityAndConstant) {
  const Tensor x = random_t({2, 3, 3}, 9);
  const Tensor zero({2}, 0.0f);
  const Tensor one({2}, 1.0f);
  EXPECT_LE(max_abs_diff(batchnorm_infer(x, zero, one, one, zero, 0.0f), x), 1e-7f);

  const Tensor c({2, 3, 3}, 0.7f);
  const Tensor y = batchnorm_infer(c, Tensor({2}, 0.7f), one, one, Tensor({2}, 5.0f), 1e-5f);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_FLOAT_EQ(y[i], 5.0f);
}

TEST(Batchnorm, MatchesFormula) {
  Rng rng(4);
  const Tensor x = random_tensor({3, 4, 4}, rng);
  const Tensor mean = random_tensor({3}, rng);
  const Tensor var = random_tensor({3}, rng, 0.1f, 2.0f);
  const Tensor gamma = random_tensor({3}, rng);
  const Tensor beta = random_tensor({3}, rng);
  const Tensor y = batchnorm_infer(x, mean, var, gamma, beta, 1e-3f);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        const double want = (x(c, i, j) - mean[c]) / std::sqrt(var[c] + 1e-3) * gamma[c] + beta[c];
        EXPECT_NEAR(y(c, i, j), want, 1e-5);
      }
    }
  }
  EXPECT_THROW(batchnorm_infer(x, mean, Tensor({3}, -1.0f), gamma, beta, 1e-3f), ValueError);
}

TEST(Upsample, Replication) {
  EXPECT_EQ(upsample_nearest(Tensor({1, 1, 1}, {3}), 2), Tensor({1, 2, 2}, 3.0f));
  const Tensor y = upsample_nearest(Tensor({1, 2, 2}, {1, 2, 3, 4}), 2);
  EXPECT_EQ(y, Tensor({1, 4, 4}, {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
  EXPECT_THROW(upsample_nearest(y, 1), GeometryError);
}

TEST(Upsample, AvgPoolInverts) {
  const Tensor x = random_t({2, 3, 5}, 12);
  for (std::size_t f : {2u, 3u}) {
    const Tensor back = pool2d(upsample_nearest(x, f), ConvGeometry::square(f, f), PoolMode::avg);
    EXPECT_LE(max_abs_diff(back, x), 1e-6f);
  }
}

TEST(Concat, ChannelsStack) {
  const Tensor y = concat_channels(Tensor({1, 1, 1}, {5}), Tensor({1, 1, 1}, {7}));
  EXPECT_EQ(y, Tensor({2, 1, 1}, {5, 7}));
  const Tensor x = random_t({3, 4, 4}, 1);
  EXPECT_EQ(concat_channels(x, Tensor({0, 4, 4})), x);
  EXPECT_EQ(concat_channels(x, Tensor({2, 4, 4})).shape(), (Shape{5, 4, 4}));
  EXPECT_THROW(concat_channels(x, Tensor({2, 4, 3})), ShapeError);
}

TEST(Dense, Cases) {
  const Tensor x({3}, {1, -2, 3});
  EXPECT_EQ(dense(x, Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), Tensor({3}, 0.0f)), x);
  EXPECT_EQ(dense(Tensor({4}, 9.0f), Tensor({2, 4}, 0.0f), Tensor({2}, {1, 2})), Tensor({2}, {1, 2}));
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor in = random_tensor({17}, rng);
    const Tensor w = random_tensor({6, 17}, rng);
    const Tensor b = random_tensor({6}, rng);
    EXPECT_LE(max_abs_diff(dense(in, w, b), oracle::dense(in, w, b)), 1e-5f);
  }
  EXPECT_THROW(dense(Tensor({1, 2, 2}), Tensor({2, 4}), Tensor({2})), ShapeError);
  EXPECT_THROW(dense(Tensor({3}), Tensor({2, 4}), Tensor({2})), ShapeError);
}

TEST(Softmax, Cases) {
  const Tensor a = softmax(Tensor({2}, {0, 0}));
  EXPECT_FLOAT_EQ(a[0], 0.5f);
  EXPECT_FLOAT_EQ(a[1], 0.5f);
  const Tensor b = softmax(Tensor({2}, {1000, 0}));
  EXPECT_TRUE(std::isfinite(b[0]) && std::isfinite(b[1]));
  EXPECT_NEAR(b[0], 1.0f, 1e-6);
  EXPECT_NEAR(b[1], 0.0f, 1e-6);
  const Tensor c = softmax(random_t({10}, 8));
  double sum = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_GT(c[i], 0.0f);
    sum += c[i];
  }
  EXPECT_NEAR(sum, 1.0, 1e-6);
}
