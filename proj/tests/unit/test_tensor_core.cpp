#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "neuroedge/layers.hpp"
#include "neuroedge/network.hpp"
#include "neuroedge/tensor.hpp"
#include "neuroedge/train.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace neuroedge;
using namespace neuroedge::testing;

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor<double>({2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(Tensor<double>({2, 0}), ShapeError);
  EXPECT_THROW(Tensor<double>({1, 1, 1, 1, 1}), ShapeError);
  Tensor<double> t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_THROW(t.reshaped({5, 5}), ShapeError);
}

TEST(Conv2d, IdentityKernelReproducesInput) {
  Xoshiro256 rng(3);
  const Tensor<double> x = random_tensor({5, 7, 1}, rng);
  ConvLayer<double> conv{Tensor<double>({1, 1, 1, 1}, 1.0), {0.0}, 1, Padding::valid};
  EXPECT_EQ(conv2d_forward(x, conv), x);
}

TEST(Conv2d, AllOnesKernelSumsWindow) {
  const Tensor<double> x({3, 3, 1}, 2.0);
  ConvLayer<double> conv{Tensor<double>({3, 3, 1, 1}, 1.0), {0.0}, 1, Padding::valid};
  const auto y = conv2d_forward(x, conv);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1}));
  EXPECT_DOUBLE_EQ(y[0], 18.0);
}

TEST(Conv2d, MatchesQuadrupleLoopReference) {
  Xoshiro256 rng(11);
  const Tensor<double> x = random_tensor({5, 5, 2}, rng);
  ConvLayer<double> conv{random_tensor({3, 3, 2, 4}, rng), random_vector(4, rng), 1, Padding::valid};
  const auto y = conv2d_forward(x, conv);
  const auto ref = reference_conv(x, conv.kernel, conv.bias, 1, 0, 0, 3, 3);
  ASSERT_EQ(y.shape(), ref.shape());
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(Conv2d, SameAndStridedMatchReference) {
  Xoshiro256 rng(12);
  for (std::size_t stride : {1u, 2u, 3u}) {
    const Tensor<double> x = random_tensor({7, 6, 3}, rng);
    ConvLayer<double> conv{random_tensor({3, 3, 3, 2}, rng), random_vector(2, rng), stride,
                           Padding::same};
    const auto g = conv_geometry(7, 6, 3, 3, stride, Padding::same);
    EXPECT_EQ(g.out_h, (7 + stride - 1) / stride);
    const auto y = conv2d_forward(x, conv);
    const auto ref = reference_conv(x, conv.kernel, conv.bias, stride, g.pad_top, g.pad_left,
                                    g.out_h, g.out_w);
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
  }
}

TEST(Conv2d, ShapeMismatchNamesDimension) {
  ConvLayer<double> conv{Tensor<double>({3, 3, 2, 1}, 1.0), {0.0}, 1, Padding::valid};
  try {
    conv2d_forward(Tensor<double>({5, 5, 3}), conv);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channels"), std::string::npos);
  }
  EXPECT_THROW(conv2d_forward(Tensor<double>({2, 2, 2}), conv), ShapeError);
}

TEST(Conv2d, OutputShapeFormulaProperty) {
  Xoshiro256 rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t h = 1 + rng.below(40), w = 1 + rng.below(40);
    const std::size_t kh = 1 + rng.below(5), kw = 1 + rng.below(5), stride = 1 + rng.below(4);
    const Padding pad = rng.below(2) ? Padding::same : Padding::valid;
    if (pad == Padding::valid && (h < kh || w < kw)) {
      EXPECT_THROW(conv_geometry(h, w, kh, kw, stride, pad), ShapeError);
      continue;
    }
    const auto g = conv_geometry(h, w, kh, kw, stride, pad);
    EXPECT_EQ(g.out_h, (h + g.pad_h - kh) / stride + 1);
    EXPECT_EQ(g.out_w, (w + g.pad_w - kw) / stride + 1);
    EXPECT_GT(g.out_h, 0u);
    EXPECT_GT(g.out_w, 0u);
    if (pad == Padding::same) {
      EXPECT_EQ(g.out_h, (h + stride - 1) / stride);
      EXPECT_EQ(g.out_w, (w + stride - 1) / stride);
    }
  }
}

TEST(Conv2dBackward, ZeroUpstreamGivesZeroGradients) {
  Xoshiro256 rng(5);
  const Tensor<double> x = random_tensor({5, 5, 2}, rng);
  ConvLayer<double> conv{random_tensor({3, 3, 2, 3}, rng), random_vector(3, rng), 1, Padding::same};
  const auto g = conv2d_backward(x, conv, Tensor<double>({5, 5, 3}));
  for (double v : g.input.data()) EXPECT_EQ(v, 0.0);
  for (double v : g.kernel.data()) EXPECT_EQ(v, 0.0);
  for (double v : g.bias) EXPECT_EQ(v, 0.0);
}

TEST(Conv2dBackward, BiasGradientIsChannelSum) {
  Xoshiro256 rng(6);
  const Tensor<double> x = random_tensor({6, 6, 2}, rng);
  ConvLayer<double> conv{random_tensor({3, 3, 2, 3}, rng), random_vector(3, rng), 1, Padding::valid};
  const Tensor<double> up = random_tensor({4, 4, 3}, rng);
  const auto g = conv2d_backward(x, conv, up);
  for (std::size_t co = 0; co < 3; ++co) {
    double sum = 0.0;
    for (std::size_t p = 0; p < 16; ++p) sum += up[p * 3 + co];
    EXPECT_NEAR(g.bias[co], sum, 1e-12);
  }
}

TEST(Conv2dBackward, RejectsWrongUpstreamShape) {
  ConvLayer<double> conv{Tensor<double>({3, 3, 1, 1}, 1.0), {0.0}, 1, Padding::valid};
  EXPECT_THROW(conv2d_backward(Tensor<double>({5, 5, 1}), conv, Tensor<double>({5, 5, 1})),
               ShapeError);
}

TEST(GradientCheck, EveryLayerMatchesFiniteDifferences) {
  for (const GradLayer kind : all_grad_layers()) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      EXPECT_LE(gradient_case(kind, 1000 + seed), 1e-4) << to_string(kind) << " seed " << seed;
    }
  }
}

TEST(Activations, ReluAndSoftmaxExamples) {
  const Tensor<double> x({2}, std::vector<double>{-3.2, 3.2});
  const auto y = relu_forward(x);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 3.2);
  const auto g = relu_backward(x, Tensor<double>({2}, std::vector<double>{5.0, 7.0}));
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 7.0);

  const std::vector<double> zeros(7, 0.0);
  for (double p : softmax<double>(zeros)) EXPECT_NEAR(p, 1.0 / 7.0, 1e-15);
  EXPECT_THROW(softmax<double>(std::vector<double>{}), ShapeError);
  EXPECT_THROW(relu_forward(Tensor<double>{}), ShapeError);
  EXPECT_THROW(cross_entropy_loss<double>(std::vector<double>{}, 0), ShapeError);
}

TEST(Activations, SoftmaxSumsToOneProperty) {
  Xoshiro256 rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto z = random_vector(1 + rng.below(20), rng, -50.0, 50.0);
    const auto p = softmax<double>(z);
    double total = 0.0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(Dense, ForwardAndParamCount) {
  DenseLayer<double> d{Tensor<double>({10, 7}, 0.5), std::vector<double>(7, 1.0)};
  EXPECT_EQ(d.param_count(), 77u);
  const auto y = dense_forward(Tensor<double>({10}, 1.0), d);
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 6.0);
  EXPECT_THROW(dense_forward(Tensor<double>({9}, 1.0), d), ShapeError);
}

namespace {

// Two classes: a bright blob in the left or right half of a dark frame.
std::vector<Example> blob_dataset(std::size_t n, std::uint64_t seed) {
  Xoshiro256 rng(seed);
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % 2;
    Tensor<double> img({48, 48, 1});
    const double cx = (label ? 34.0 : 14.0) + rng.uniform(-4, 4), cy = 24.0 + rng.uniform(-8, 8);
    for (std::size_t y = 0; y < 48; ++y) {
      for (std::size_t x = 0; x < 48; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        img.at(y, x, 0) = std::exp(-d2 / 40.0) + 0.05 * rng.uniform();
      }
    }
    out.push_back({std::move(img), label});
  }
  return out;
}

LayerGraph small_graph(std::size_t classes, std::uint64_t seed) {
  Xoshiro256 rng(seed);
  LayerGraph g({48, 48, 1}, Flavor::ann);
  ConvLayer<double> conv{random_tensor({3, 3, 1, 4}, rng, -0.5, 0.5), std::vector<double>(4, 0.0),
                         2, Padding::same};
  g.add(Conv2D{conv});
  g.add(ReLU{});
  g.add(Pool{PoolKind::max, 2, 2});
  g.add(Flatten{});
  const std::size_t flat = g.output_shape_of_graph()[0];
  g.add(Dense{DenseLayer<double>{random_tensor({flat, classes}, rng, -0.05, 0.05),
                                 std::vector<double>(classes, 0.0)}});
  g.add(Softmax{});
  return g;
}

}  // namespace

TEST(Train, SeparableBlobsReachHighAccuracy) {
  const auto data = blob_dataset(200, 7);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch = 10;
  cfg.lr = 0.02;
  cfg.seed = 1;
  const auto result = train(small_graph(2, 3), data, cfg);
  ASSERT_EQ(result.history.size(), 20u);
  EXPECT_GE(accuracy(result.graph, data), 0.99);
}

TEST(Train, MemorizationLossDecreases) {
  Xoshiro256 rng(17);
  std::vector<Example> data;
  for (std::size_t i = 0; i < 100; ++i) data.push_back({random_tensor({48, 48, 1}, rng, 0, 1), i % 7});
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch = 10;
  cfg.lr = 0.01;
  const auto result = train(small_graph(7, 4), data, cfg);
  int non_decreases = 0;
  for (std::size_t e = 1; e < result.history.size(); ++e) {
    if (!(result.history[e].loss < result.history[e - 1].loss)) ++non_decreases;
  }
  EXPECT_LE(non_decreases, 1);
}

TEST(Train, ZeroLearningRateLeavesWeightsUnchanged) {
  const auto data = blob_dataset(20, 8);
  const LayerGraph g = small_graph(2, 5);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.lr = 0.0;
  EXPECT_EQ(train(g, data, cfg).graph, g);
}

TEST(Train, SameSeedIsBitIdentical) {
  const auto data = blob_dataset(40, 9);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch = 8;
  cfg.seed = 42;
  const auto a = train(small_graph(2, 6), data, cfg);
  cfg.threads = 3;  // thread count must not change the reduction
  const auto b = train(small_graph(2, 6), data, cfg);
  EXPECT_EQ(a.graph, b.graph);
  EXPECT_EQ(a.history.back().loss, b.history.back().loss);
}

TEST(Train, ErrorsAreDistinct) {
  const LayerGraph g = small_graph(2, 5);
  EXPECT_THROW(train(g, std::vector<Example>{}, TrainConfig{}), TrainingError);

  auto bad = blob_dataset(4, 1);
  bad[0].label = 5;
  EXPECT_THROW(train(g, bad, TrainConfig{}), TrainingError);

  TrainConfig wild;
  wild.epochs = 5;
  wild.lr = 1e300;
  EXPECT_THROW(train(g, blob_dataset(20, 2), wild), DivergenceError);
}
