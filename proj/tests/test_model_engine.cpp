#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "advlab/checkpoint.hpp"
#include "advlab/model.hpp"
#include "advlab/ops.hpp"
#include "advlab/rng.hpp"

using namespace advlab;

namespace {

Tensor random_image(const std::vector<int>& shape, Rng& rng) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(0.0, 1.0);
  return t;
}

double max_relative_error(const Tensor& got, const Tensor& want) {
  return linf_distance(got, want) / std::max(linf_distance(want, Tensor(want.shape())), 1e-12);
}

ModelSpec tiny_cnn_spec() {
  ModelSpec spec;
  spec.input_shape = {2, 6, 6};
  spec.num_classes = 3;
  spec.layers = {LayerSpec::conv(3, 3),  LayerSpec::relu(), LayerSpec::avgpool2(),
                 LayerSpec::flatten(),   LayerSpec::dense(3 * 3 * 3, 10), LayerSpec::relu(),
                 LayerSpec::dense(10, 3)};
  return spec;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST(LayerShapes, CompositionGrid) {
  // every layer kind chained through its legal shapes
  ModelSpec spec = tiny_cnn_spec();
  const auto shapes = layer_output_shapes(spec);
  EXPECT_EQ(shapes[0], (std::vector<int>{3, 6, 6}));
  EXPECT_EQ(shapes[2], (std::vector<int>{3, 3, 3}));
  EXPECT_EQ(shapes[3], (std::vector<int>{27}));
  EXPECT_EQ(shapes.back(), (std::vector<int>{3}));

  // mismatched dense input
  spec.layers[4] = LayerSpec::dense(26, 10);
  EXPECT_THROW(layer_output_shapes(spec), std::invalid_argument);

  // pooling odd dims
  ModelSpec odd;
  odd.input_shape = {1, 5, 5};
  odd.num_classes = 2;
  odd.layers = {LayerSpec::avgpool2(), LayerSpec::flatten(), LayerSpec::dense(4, 2)};
  EXPECT_THROW(layer_output_shapes(odd), std::invalid_argument);

  // wrong final width
  ModelSpec wrong;
  wrong.input_shape = {1, 4, 4};
  wrong.num_classes = 2;
  wrong.layers = {LayerSpec::flatten(), LayerSpec::dense(16, 3)};
  EXPECT_THROW(layer_output_shapes(wrong), std::invalid_argument);
}

TEST(Forward, HandComputedDense) {
  ModelSpec spec;
  spec.input_shape = {1, 1, 2};
  spec.num_classes = 2;
  spec.layers = {LayerSpec::flatten(), LayerSpec::dense(2, 2)};
  Model model(spec, 0);

  // overwrite the random init with hand-set parameters via the explicit ctor
  std::vector<Tensor> w = {Tensor(), Tensor({2, 2}, {1.0, 2.0, -3.0, 0.5})};
  std::vector<Tensor> b = {Tensor(), Tensor({2}, {0.25, -1.0})};
  Model fixed(spec, w, b, ModelMetadata{});

  const Tensor x({1, 1, 2}, {1.0, 2.0});
  const Tensor logits = fixed.forward(x);
  EXPECT_DOUBLE_EQ(logits[0], 1.0 * 1 + 2.0 * 2 + 0.25);  // 5.25
  EXPECT_DOUBLE_EQ(logits[1], -3.0 * 1 + 0.5 * 2 - 1.0);  // -3.0
}

TEST(Forward, ZeroWeightsGiveZeroLogits) {
  ModelSpec spec;
  spec.input_shape = {1, 2, 2};
  spec.num_classes = 2;
  spec.layers = {LayerSpec::flatten(), LayerSpec::dense(4, 2)};
  std::vector<Tensor> w = {Tensor(), Tensor({2, 4})};
  std::vector<Tensor> b = {Tensor(), Tensor({2})};
  Model zero(spec, w, b, ModelMetadata{});
  Rng rng(5);
  for (int i = 0; i < 5; ++i) {
    const Tensor logits = zero.forward(random_image(spec.input_shape, rng));
    EXPECT_EQ(logits[0], 0.0);
    EXPECT_EQ(logits[1], 0.0);
  }
}

TEST(Forward, Deterministic) {
  Model model(tiny_cnn_spec(), 77);
  Rng rng(6);
  const Tensor x = random_image({2, 6, 6}, rng);
  EXPECT_TRUE(exactly_equal(model.forward(x), model.forward(x)));
}

TEST(Forward, ShapeMismatchThrows) {
  Model model(tiny_cnn_spec(), 1);
  EXPECT_THROW(model.forward(Tensor({2, 6, 5})), std::invalid_argument);
}

TEST(Loss, UniformLogitsCrossEntropy) {
  for (int k : {2, 3, 7}) {
    const Tensor logits = Tensor::full({k}, 1.25);
    EXPECT_NEAR(loss_value(logits, 0, LossKind::cross_entropy), std::log(k), 1e-12);
  }
}

TEST(Loss, SoftmaxGradientIdentity) {
  // dJ/dz must equal softmax(z) - one_hot(y)
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits({4});
    for (int i = 0; i < 4; ++i) logits[static_cast<std::size_t>(i)] = rng.uniform(-3.0, 3.0);
    const int y = rng.uniform_int(4);
    const Tensor g = loss_grad_logits(logits, y, LossKind::cross_entropy);

    double denom = 0.0;
    for (int i = 0; i < 4; ++i) denom += std::exp(logits[static_cast<std::size_t>(i)]);
    for (int i = 0; i < 4; ++i) {
      const double soft = std::exp(logits[static_cast<std::size_t>(i)]) / denom;
      EXPECT_NEAR(g[static_cast<std::size_t>(i)], soft - (i == y ? 1.0 : 0.0), 1e-12);
    }
  }
}

TEST(Loss, MarginHandComputed) {
  // correctly classified point: z_y clearly on top, margin still positive via kappa
  const Tensor logits({3}, {4.0, 1.5, -2.0});
  // max_{j != 0} z_j - z_0 + 5 = 1.5 - 4.0 + 5 = 2.5
  EXPECT_DOUBLE_EQ(loss_value(logits, 0, LossKind::margin), 2.5);
  const Tensor g = loss_grad_logits(logits, 0, LossKind::margin);
  EXPECT_DOUBLE_EQ(g[0], -1.0);
  EXPECT_DOUBLE_EQ(g[1], 1.0);
  EXPECT_DOUBLE_EQ(g[2], 0.0);

  // margin clamped at zero once the gap exceeds kappa
  const Tensor wide({3}, {9.0, 1.5, -2.0});
  EXPECT_DOUBLE_EQ(loss_value(wide, 0, LossKind::margin), 0.0);
  const Tensor gz = loss_grad_logits(wide, 0, LossKind::margin);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(gz[static_cast<std::size_t>(i)], 0.0);
}

TEST(Loss, InvalidLabel) {
  const Tensor logits({3});
  EXPECT_THROW(loss_value(logits, 3, LossKind::cross_entropy), std::invalid_argument);
  EXPECT_THROW(loss_grad_logits(logits, -1, LossKind::margin), std::invalid_argument);
}

TEST(InputGradient, MatchesFiniteDifferences) {
  Rng rng(101);
  for (int trial = 0; trial < 5; ++trial) {
    Model model(tiny_cnn_spec(), 200 + trial);
    const Tensor x = random_image({2, 6, 6}, rng);
    const int y = rng.uniform_int(3);
    const auto lg = model.loss_and_input_grad(x, y, LossKind::cross_entropy);
    const Tensor fd = finite_diff_grad(model, x, y, LossKind::cross_entropy);
    EXPECT_LE(max_relative_error(lg.input_grad, fd), 1e-6);
  }
}

TEST(InputGradient, MarginLossMatchesFiniteDifferences) {
  Rng rng(102);
  Model model(tiny_cnn_spec(), 300);
  const Tensor x = random_image({2, 6, 6}, rng);
  const auto lg = model.loss_and_input_grad(x, 1, LossKind::margin);
  const Tensor fd = finite_diff_grad(model, x, 1, LossKind::margin);
  EXPECT_LE(max_relative_error(lg.input_grad, fd), 1e-6);
}

TEST(FiniteDiff, FlatAndLinearModels) {
  // zero-weight model: flat loss, zero gradient
  ModelSpec spec;
  spec.input_shape = {1, 1, 2};
  spec.num_classes = 2;
  spec.layers = {LayerSpec::flatten(), LayerSpec::dense(2, 2)};
  Model zero(spec, {Tensor(), Tensor({2, 2})}, {Tensor(), Tensor({2})}, ModelMetadata{});
  const Tensor x({1, 1, 2}, {0.3, 0.7});
  const Tensor fd = finite_diff_grad(zero, x, 0, LossKind::cross_entropy);
  for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_NEAR(fd[i], 0.0, 1e-9);

  // 1-D linear logit difference: margin loss gradient is the weight difference
  Model lin(spec, {Tensor(), Tensor({2, 2}, {0.9, -0.4, 0.1, 0.6})},
            {Tensor(), Tensor({2})}, ModelMetadata{});
  const Tensor fd2 = finite_diff_grad(lin, x, 0, LossKind::margin);
  // d/dx of (z_1 - z_0 + kappa): row1 - row0 = (-0.8, 1.0)
  EXPECT_NEAR(fd2[0], -0.8, 1e-8);
  EXPECT_NEAR(fd2[1], 1.0, 1e-8);
  EXPECT_THROW(finite_diff_grad(lin, x, 0, LossKind::margin, 0.0), std::invalid_argument);
}

TEST(Backward, ParamGradsMatchFiniteDifferences) {
  // spot-check dW for a dense layer against loss differences
  ModelSpec spec;
  spec.input_shape = {1, 1, 3};
  spec.num_classes = 2;
  spec.layers = {LayerSpec::flatten(), LayerSpec::dense(3, 2)};
  Model model(spec, 4242);
  const Tensor x({1, 1, 3}, {0.2, 0.5, 0.8});

  Model::ParamGrads grads = model.zero_param_grads();
  model.backward(x, 1, LossKind::cross_entropy, nullptr, &grads);

  const double h = 1e-6;
  for (std::size_t p = 0; p < 6; ++p) {
    std::vector<Tensor> w = model.weights();
    std::vector<Tensor> b = model.biases();
    w[1][p] += h;
    Model up(spec, w, b, ModelMetadata{});
    w[1][p] -= 2 * h;
    Model down(spec, w, b, ModelMetadata{});
    const double fd = (loss_value(up.forward(x), 1, LossKind::cross_entropy) -
                       loss_value(down.forward(x), 1, LossKind::cross_entropy)) /
                      (2 * h);
    EXPECT_NEAR(grads.weights[1][p], fd, 1e-6);
  }
}

TEST(Model, InitDeterministicPerSeed) {
  Model a(tiny_cnn_spec(), 9), b(tiny_cnn_spec(), 9), c(tiny_cnn_spec(), 10);
  EXPECT_TRUE(exactly_equal(a.weights()[0], b.weights()[0]));
  EXPECT_FALSE(exactly_equal(a.weights()[0], c.weights()[0]));
}

TEST(Checkpoint, RoundTripForwardIdentity) {
  Model model(tiny_cnn_spec(), 55);
  model.metadata().name = "tiny";
  model.metadata().training = "standard";
  model.metadata().train_accuracy = 0.5;

  const auto path = temp_file("advlab_ckpt_roundtrip.json");
  save_checkpoint(model, path.string());
  const Model loaded = load_checkpoint(path.string());

  EXPECT_EQ(loaded.metadata().name, "tiny");
  Rng rng(77);
  for (int i = 0; i < 5; ++i) {
    const Tensor x = random_image({2, 6, 6}, rng);
    EXPECT_LE(linf_distance(model.forward(x), loaded.forward(x)), 1e-12);
  }
  std::filesystem::remove(path);
}

TEST(Checkpoint, TruncatedFileIsStructuredError) {
  Model model(tiny_cnn_spec(), 56);
  const auto path = temp_file("advlab_ckpt_truncated.json");
  save_checkpoint(model, path.string());
  // chop the file in half
  std::ifstream in(path, std::ios::binary);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text.substr(0, text.size() / 2);
  out.close();
  EXPECT_THROW(
      {
        try {
          load_checkpoint(path.string());
        } catch (const std::runtime_error& e) {
          EXPECT_NE(std::string(e.what()).find("malformed"), std::string::npos);
          throw;
        }
      },
      std::runtime_error);
  std::filesystem::remove(path);
}

TEST(Checkpoint, UnknownLayerKindNamesTheKind) {
  Model model(tiny_cnn_spec(), 57);
  const auto path = temp_file("advlab_ckpt_badkind.json");
  save_checkpoint(model, path.string());
  std::ifstream in(path, std::ios::binary);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const auto pos = text.find("\"conv2d\"");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 8, "\"conv9d\"");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  out.close();
  EXPECT_THROW(
      {
        try {
          load_checkpoint(path.string());
        } catch (const std::invalid_argument& e) {
          EXPECT_NE(std::string(e.what()).find("conv9d"), std::string::npos);
          throw;
        }
      },
      std::invalid_argument);
  std::filesystem::remove(path);
}

TEST(Checkpoint, VersionMismatchRejected) {
  Model model(tiny_cnn_spec(), 58);
  const auto path = temp_file("advlab_ckpt_badversion.json");
  save_checkpoint(model, path.string());
  std::ifstream in(path, std::ios::binary);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const auto pos = text.find("\"version\": 1");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 12, "\"version\": 9");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  out.close();
  EXPECT_THROW(load_checkpoint(path.string()), std::runtime_error);
  std::filesystem::remove(path);
}
