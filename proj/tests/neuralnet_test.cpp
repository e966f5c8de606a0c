#include "etd/neuralnet.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "test_util.hpp"

namespace {

using namespace etd;

Tensor tensor3(std::size_t n, std::size_t t, std::size_t c, std::vector<double> data) {
  return Tensor({n, t, c}, std::move(data));
}

TEST(Conv1d, HandComputedCrossCorrelation) {
  // x = [1,2,3], w = [1,0,-1]: single valid position, 1*1 + 2*0 + 3*(-1) = -2.
  const Tensor x = tensor3(1, 3, 1, {1.0, 2.0, 3.0});
  const Tensor w({3, 1, 1}, {1.0, 0.0, -1.0});
  const Tensor b({1}, {0.0});
  const Tensor out = conv1d_forward(x, w, b);
  EXPECT_EQ(out.shape, (std::vector<std::size_t>{1, 1, 1}));
  EXPECT_DOUBLE_EQ(out.data[0], -2.0);
}

TEST(Conv1d, IdentityKernelAddsOnlyBias) {
  const Tensor x = tensor3(2, 4, 1, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0});
  const Tensor w({1, 1, 1}, {1.0});
  const Tensor b({1}, {0.25});
  const Tensor out = conv1d_forward(x, w, b);
  ASSERT_EQ(out.size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(out.data[i], x.data[i] + 0.25);
}

TEST(Conv1d, BiasOnlyOnZeroInput) {
  const Tensor x = tensor3(1, 5, 1, std::vector<double>(5, 0.0));
  const Tensor w({2, 1, 3}, std::vector<double>(6, 0.7));
  const Tensor b({3}, {5.0, 5.0, 5.0});
  const Tensor out = conv1d_forward(x, w, b);
  for (double v : out.data) EXPECT_DOUBLE_EQ(v, 5.0);
}

TEST(Conv1d, RejectsKernelLongerThanInput) {
  const Tensor x = tensor3(1, 2, 1, {1.0, 2.0});
  const Tensor w({3, 1, 1}, {1.0, 1.0, 1.0});
  const Tensor b({1}, {0.0});
  EXPECT_THROW(conv1d_forward(x, w, b), std::invalid_argument);
}

TEST(MaxPool1d, TakesWindowMaxima) {
  const Tensor x = tensor3(1, 4, 1, {1.0, 3.0, 2.0, 5.0});
  const Tensor out = maxpool1d_forward(x, 2);
  EXPECT_EQ(out.shape, (std::vector<std::size_t>{1, 2, 1}));
  EXPECT_DOUBLE_EQ(out.data[0], 3.0);
  EXPECT_DOUBLE_EQ(out.data[1], 5.0);
}

TEST(MaxPool1d, ConstantInputAndRemainderDrop) {
  const Tensor c = tensor3(1, 6, 1, std::vector<double>(6, 2.5));
  for (double v : maxpool1d_forward(c, 3).data) EXPECT_DOUBLE_EQ(v, 2.5);

  const Tensor x = tensor3(1, 3, 1, {1.0, 2.0, 3.0});
  const Tensor out = maxpool1d_forward(x, 2);
  EXPECT_EQ(out.shape, (std::vector<std::size_t>{1, 1, 1}));
  EXPECT_DOUBLE_EQ(out.data[0], 2.0);  // the trailing 3 is dropped
}

TEST(MaxPool1d, TiesBreakToTheLowestIndex) {
  const Tensor x = tensor3(1, 4, 1, {2.0, 2.0, 1.0, 1.0});
  std::vector<std::size_t> argmax;
  maxpool1d_forward(x, 2, &argmax);
  EXPECT_EQ(argmax[0], 0u);
  EXPECT_EQ(argmax[1], 2u);
}

TEST(MaxPool1d, RejectsPoolLargerThanInput) {
  const Tensor x = tensor3(1, 2, 1, {1.0, 2.0});
  EXPECT_THROW(maxpool1d_forward(x, 3), std::invalid_argument);
}

TEST(Dense, HandComputedAffineMap) {
  const Tensor x({1, 2}, {1.0, 1.0});
  const Tensor w({2, 1}, {1.0, 2.0});
  const Tensor b({1}, {0.5});
  EXPECT_DOUBLE_EQ(dense_forward(x, w, b).data[0], 3.5);
}

TEST(Dense, ZeroWeightsGiveZeros) {
  const Tensor x({2, 3}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
  const Tensor w({3, 2}, std::vector<double>(6, 0.0));
  const Tensor b({2}, {0.0, 0.0});
  for (double v : dense_forward(x, w, b).data) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Dense, IdentityMatrixPreservesInput) {
  const Tensor x({2, 2}, {1.5, -2.0, 0.25, 4.0});
  const Tensor w({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const Tensor b({2}, {0.0, 0.0});
  const Tensor out = dense_forward(x, w, b);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(out.data[i], x.data[i]);
}

TEST(Dense, RejectsShapeMismatch) {
  const Tensor x({1, 3}, {1.0, 2.0, 3.0});
  const Tensor w({2, 1}, {1.0, 2.0});
  const Tensor b({1}, {0.0});
  EXPECT_THROW(dense_forward(x, w, b), std::invalid_argument);
}

TEST(Activations, HandValues) {
  EXPECT_DOUBLE_EQ(activate(0.0, Activation::Sigmoid), 0.5);
  EXPECT_DOUBLE_EQ(activate(-3.0, Activation::ReLU), 0.0);
  EXPECT_DOUBLE_EQ(activate(3.0, Activation::ReLU), 3.0);
  EXPECT_DOUBLE_EQ(activate(-1.25, Activation::Linear), -1.25);
}

TEST(Activations, SigmoidSaturatesInsideTheOpenInterval) {
  for (double z : {36.7, -36.7, 500.0, -500.0, 1e12, -1e12}) {
    const double s = activate(z, Activation::Sigmoid);
    EXPECT_GT(s, 0.0) << z;
    EXPECT_LT(s, 1.0) << z;
  }
}

TEST(BceLoss, HandValues) {
  const Tensor half({1, 1}, {0.5});
  EXPECT_NEAR(bce_loss(half, std::vector<double>{1.0}), std::log(2.0), 1e-15);

  const Tensor perfect({2, 1}, {1.0, 0.0});
  EXPECT_LE(bce_loss(perfect, std::vector<double>{1.0, 0.0}), 1e-11);

  const Tensor mixed({2, 1}, {0.5, 0.5});
  EXPECT_NEAR(bce_loss(mixed, std::vector<double>{0.0, 1.0}), std::log(2.0), 1e-15);
}

TEST(ModelBuild, DefaultArchitectureShapeAlgebra) {
  const Model model(default_architecture(), 365, 1);
  // floor((floor((365-7+1)/2) - 3 + 1)/2) * 16
  const std::size_t expected = ((((365 - 7 + 1) / 2) - 3 + 1) / 2) * 16;
  EXPECT_EQ(expected, 1408u);
  EXPECT_EQ(model.head_input_size(), expected);
}

TEST(ModelBuild, RejectsInvalidStacks) {
  // Head must be a single-unit sigmoid.
  EXPECT_THROW(Model({FlattenSpec{}, DenseSpec{2, Activation::Sigmoid}}, 8, 1),
               std::invalid_argument);
  EXPECT_THROW(Model({FlattenSpec{}, DenseSpec{1, Activation::ReLU}}, 8, 1), std::invalid_argument);
  // Dense before flatten.
  EXPECT_THROW(Model({DenseSpec{1, Activation::Sigmoid}}, 8, 1), std::invalid_argument);
  // Conv after flatten.
  EXPECT_THROW(Model({FlattenSpec{}, Conv1DSpec{2, 3, Activation::ReLU},
                      DenseSpec{1, Activation::Sigmoid}},
                     8, 1),
               std::invalid_argument);
  // Kernel longer than what remains.
  EXPECT_THROW(Model({Conv1DSpec{2, 9, Activation::ReLU}, FlattenSpec{},
                      DenseSpec{1, Activation::Sigmoid}},
                     8, 1),
               std::invalid_argument);
  // Pool larger than what remains.
  EXPECT_THROW(Model({MaxPool1DSpec{9}, FlattenSpec{}, DenseSpec{1, Activation::Sigmoid}}, 8, 1),
               std::invalid_argument);
  EXPECT_THROW(Model({}, 8, 1), std::invalid_argument);
}

Tensor random_input(std::uint32_t seed, std::size_t n, std::size_t t) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Tensor x({n, t, 1});
  for (double& v : x.data) v = unit(gen);
  return x;
}

std::vector<double> random_labels(std::uint32_t seed, std::size_t n) {
  std::mt19937 gen(seed);
  std::vector<double> y(n);
  for (double& v : y) v = gen() % 2 ? 1.0 : 0.0;
  return y;
}

TEST(Backward, SingleSigmoidUnitMatchesLogisticRegressionGradient) {
  const std::size_t n = 6, t = 5;
  Model model({FlattenSpec{}, DenseSpec{1, Activation::Sigmoid}}, t, 3);
  const Tensor x = random_input(10, n, t);
  const auto y = random_labels(11, n);
  const BackwardResult res = backward(model, x, y);

  // Closed form: dW = x^T (p - y) / n, db = mean(p - y).
  const Tensor p = predict_proba(model, x);
  std::vector<double> dw(t, 0.0);
  double db = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double delta = (p.data[i] - y[i]) / static_cast<double>(n);
    db += delta;
    for (std::size_t j = 0; j < t; ++j) dw[j] += x.data[i * t + j] * delta;
  }
  ASSERT_EQ(res.grads[1].w.size(), t);
  for (std::size_t j = 0; j < t; ++j) EXPECT_NEAR(res.grads[1].w.data[j], dw[j], 1e-14);
  EXPECT_NEAR(res.grads[1].b.data[0], db, 1e-14);
}

TEST(Backward, SaturatedCorrectPredictionsGiveNearZeroGradients) {
  const std::size_t t = 4;
  Model model({FlattenSpec{}, DenseSpec{1, Activation::Sigmoid}}, t, 5);
  for (auto& p : model.params()) {
    for (double& v : p.w.data) v = 0.0;
    for (double& v : p.b.data) v = 0.0;
  }
  model.params()[1].b.data[0] = 40.0;  // saturate the head at p ~ 1
  const Tensor x = random_input(12, 4, t);
  const std::vector<double> y(4, 1.0);  // labels agree with the hard predictions
  const BackwardResult res = backward(model, x, y);
  for (const auto& g : res.grads) {
    for (double v : g.w.data) EXPECT_LT(std::abs(v), 1e-10);
    for (double v : g.b.data) EXPECT_LT(std::abs(v), 1e-10);
  }
}

struct GradientCase {
  const char* name;
  std::vector<LayerSpec> spec;
  std::size_t input_length;
  double tolerance;
};

std::vector<GradientCase> gradient_cases() {
  return {
      {"dense_head_only", {FlattenSpec{}, DenseSpec{1, Activation::Sigmoid}}, 12, 1e-7},
      {"dense_hidden_relu",
       {FlattenSpec{}, DenseSpec{16, Activation::ReLU}, DenseSpec{1, Activation::Sigmoid}},
       12,
       1e-4},
      {"dense_hidden_sigmoid",
       {FlattenSpec{}, DenseSpec{6, Activation::Sigmoid}, DenseSpec{1, Activation::Sigmoid}},
       12,
       1e-7},
      {"conv_relu",
       {Conv1DSpec{4, 3, Activation::ReLU}, FlattenSpec{}, DenseSpec{1, Activation::Sigmoid}},
       16,
       1e-4},
      {"conv_linear_maxpool",
       {Conv1DSpec{3, 3, Activation::Linear}, MaxPool1DSpec{2}, FlattenSpec{},
        DenseSpec{1, Activation::Sigmoid}},
       16,
       1e-4},
      {"full_stack",
       {Conv1DSpec{8, 5, Activation::ReLU}, MaxPool1DSpec{2}, Conv1DSpec{4, 3, Activation::ReLU},
        MaxPool1DSpec{2}, FlattenSpec{}, DenseSpec{16, Activation::ReLU},
        DenseSpec{1, Activation::Sigmoid}},
       30,
       1e-4},
  };
}

TEST(GradientCheck, EveryLayerTypePassesCentralDifferences) {
  for (const auto& c : gradient_cases()) {
    Model model(c.spec, c.input_length, 99);
    ASSERT_LE(model.parameter_count(), 2000u) << c.name;
    const Tensor x = random_input(41, 8, c.input_length);
    const auto y = random_labels(42, 8);
    const double err = gradient_check(model, x, y);
    EXPECT_LT(err, c.tolerance) << c.name;
  }
}

std::pair<Tensor, std::vector<double>> separable_toy_bag() {
  // Minority rides high, majority rides low; trivially separable.
  std::mt19937 gen(77);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  const std::size_t n = 16, t = 20;
  Tensor x({n, t, 1});
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool theft = i % 2 == 0;
    y[i] = theft ? 1.0 : 0.0;
    for (std::size_t d = 0; d < t; ++d) {
      x.data[i * t + d] = (theft ? 0.9 : 0.1) + jitter(gen);
    }
  }
  return {std::move(x), std::move(y)};
}

std::vector<LayerSpec> toy_spec() {
  return {Conv1DSpec{4, 3, Activation::ReLU}, MaxPool1DSpec{2}, FlattenSpec{},
          DenseSpec{8, Activation::ReLU}, DenseSpec{1, Activation::Sigmoid}};
}

TEST(Train, LearnsTheSeparableToyBag) {
  const auto [x, y] = separable_toy_bag();
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.01;
  cfg.shuffle_seed = 1;
  const TrainResult result = train(toy_spec(), x, y, cfg, 7);
  ASSERT_EQ(result.history.size(), 50u);
  EXPECT_GE(result.history.back().accuracy, 0.99);
  EXPECT_LT(result.history[19].loss, result.history[0].loss);
}

TEST(Train, DeterministicGivenSeeds) {
  const auto [x, y] = separable_toy_bag();
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 4;
  cfg.shuffle_seed = 3;
  const TrainResult a = train(toy_spec(), x, y, cfg, 7);
  const TrainResult b = train(toy_spec(), x, y, cfg, 7);
  EXPECT_TRUE(a.model == b.model);  // bitwise-identical parameters
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    EXPECT_EQ(a.history[e].loss, b.history[e].loss);
  }
  TrainConfig other = cfg;
  other.shuffle_seed = 4;
  EXPECT_FALSE(train(toy_spec(), x, y, other, 7).model == a.model);
}

TEST(Train, RejectsBadConfigs) {
  const auto [x, y] = separable_toy_bag();
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(train(toy_spec(), x, y, cfg, 1), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  EXPECT_THROW(train(toy_spec(), x, y, cfg, 1), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.learning_rate = 0.0;
  EXPECT_THROW(train(toy_spec(), x, y, cfg, 1), std::invalid_argument);
}

TEST(Train, DivergenceRaisesAnActionableError) {
  const auto [x, y] = separable_toy_bag();
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.optimizer = OptimizerKind::SGD;
  cfg.learning_rate = 1e200;
  try {
    train(toy_spec(), x, y, cfg, 7);
    FAIL() << "expected divergence";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("lower learning rate"), std::string::npos) << e.what();
  }
}

TEST(Train, SgdOnLogisticHeadConverges) {
  const auto [x, y] = separable_toy_bag();
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 16;
  cfg.optimizer = OptimizerKind::SGD;
  cfg.learning_rate = 0.5;
  const TrainResult result = train({FlattenSpec{}, DenseSpec{1, Activation::Sigmoid}}, x, y, cfg, 2);
  EXPECT_GE(result.history.back().accuracy, 0.99);
}

TEST(PredictProba, ZeroInitializedHeadGivesOneHalf) {
  Model model({FlattenSpec{}, DenseSpec{1, Activation::Sigmoid}}, 6, 1);
  for (auto& p : model.params()) {
    for (double& v : p.w.data) v = 0.0;
    for (double& v : p.b.data) v = 0.0;
  }
  const Tensor p = predict_proba(model, random_input(1, 3, 6));
  for (double v : p.data) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(PredictProba, OutputsStayInsideTheOpenUnitInterval) {
  Model model(toy_spec(), 20, 3);
  Tensor x = random_input(2, 5, 20);
  for (std::size_t i = 0; i < x.size(); i += 7) x.data[i] = 1000.0;  // extreme but finite
  const Tensor p = predict_proba(model, x);
  for (double v : p.data) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(PredictProba, BatchingDoesNotChangeTheResult) {
  Model model(toy_spec(), 20, 9);
  const Tensor x = random_input(4, 5, 20);
  const Tensor whole = predict_proba(model, x);
  for (std::size_t i = 0; i < 5; ++i) {
    Tensor single({1, 20, 1});
    std::copy(x.data.begin() + i * 20, x.data.begin() + (i + 1) * 20, single.data.begin());
    const Tensor p = predict_proba(model, single);
    EXPECT_NEAR(p.data[0], whole.data[i], 1e-12);
  }
}

TEST(PredictProba, RejectsLengthMismatch) {
  Model model(toy_spec(), 20, 9);
  EXPECT_THROW(predict_proba(model, random_input(1, 2, 19)), std::invalid_argument);
}

TEST(Reshape3d, ShapesAndLabels) {
  std::vector<ProcessedSeries> series;
  for (int i = 0; i < 3; ++i) {
    series.push_back({"u" + std::to_string(i), i == 1 ? Label::Theft : Label::Normal,
                      {0.1, 0.2, 0.3, 0.4, 0.5}});
  }
  const BatchData batch = reshape_3d(series);
  EXPECT_EQ(batch.x.shape, (std::vector<std::size_t>{3, 5, 1}));
  EXPECT_EQ(batch.labels, (std::vector<double>{0.0, 1.0, 0.0}));
  EXPECT_DOUBLE_EQ(batch.x.data[5], 0.1);

  const std::vector<ProcessedSeries> one{{"u", Label::Normal, {0.7}}};
  EXPECT_EQ(reshape_3d(one).x.shape, (std::vector<std::size_t>{1, 1, 1}));
}

TEST(Reshape3d, RejectsRaggedLengths) {
  const std::vector<ProcessedSeries> series{{"a", Label::Normal, {0.1, 0.2, 0.3, 0.4, 0.5}},
                                            {"b", Label::Normal, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}}};
  EXPECT_THROW(reshape_3d(series), std::invalid_argument);
}

TEST(Serialization, RoundTripsBitExactly) {
  const auto [x, y] = separable_toy_bag();
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  const TrainResult result = train(toy_spec(), x, y, cfg, 11);
  const auto path = testutil::temp_path("model.bin");
  save_model(result.model, path);
  const Model loaded = load_model(path);
  EXPECT_TRUE(loaded == result.model);
}

TEST(Serialization, RejectsWrongVersionMagicAndTruncation) {
  Model model(toy_spec(), 20, 1);
  const auto path = testutil::temp_path("model.bin");
  save_model(model, path);

  std::string bytes = testutil::read_file(path);
  std::string bad_version = bytes;
  bad_version[4] = 9;  // version field follows the 4-byte magic
  const auto vpath = testutil::temp_path("bad_version.bin");
  testutil::write_file(vpath, bad_version);
  try {
    load_model(vpath);
    FAIL() << "expected a version error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  const auto mpath = testutil::temp_path("bad_magic.bin");
  testutil::write_file(mpath, bad_magic);
  EXPECT_THROW(load_model(mpath), std::runtime_error);

  const auto tpath = testutil::temp_path("truncated.bin");
  testutil::write_file(tpath, bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_model(tpath), std::runtime_error);
}

TEST(TensorContract, ShapeDataMismatchAndNanInputsAreErrors) {
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);

  Model model(toy_spec(), 20, 1);
  Tensor x = random_input(3, 2, 20);
  x.data[5] = std::nan("");
  EXPECT_THROW(predict_proba(model, x), std::runtime_error);
}

}  // namespace
