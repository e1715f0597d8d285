#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "crowdkit/errors.hpp"
#include "crowdkit/format.hpp"
#include "crowdkit/ops.hpp"
#include "crowdkit/synth.hpp"
#include "crowdkit/train.hpp"

namespace crowdkit {
namespace {

TEST(EuclideanLoss, ZeroOnEqualInputs) {
  Tensor a = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(euclidean_loss(a, b).item(), 0.0);
}

TEST(EuclideanLoss, SinglePixelCase) {
  // Zero prediction against a 2x2 target with one unit pixel: (1/4) * 1.
  Tensor pred = Tensor::zeros({1, 1, 2, 2});
  Tensor gt = Tensor::from_data({1, 1, 2, 2}, {0, 0, 1, 0});
  EXPECT_DOUBLE_EQ(euclidean_loss(pred, gt).item(), 0.25);
}

TEST(EuclideanLoss, QuadraticHomogeneity) {
  Tensor gt = Tensor::zeros({1, 1, 2, 2});
  Tensor r1 = Tensor::from_data({1, 1, 2, 2}, {0.5, -1, 2, 0.25});
  Tensor r2 = ops::scale(r1, 2.0);
  EXPECT_NEAR(euclidean_loss(r2, gt).item(), 4.0 * euclidean_loss(r1, gt).item(),
              1e-12);
}

TEST(EuclideanLoss, ShapeMismatchRejected) {
  EXPECT_THROW(
      euclidean_loss(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 4, 4})),
      ConfigError);
}

ModelParameters single_param(double value) {
  ModelParameters params;
  params.add("p", Tensor::from_data({1}, {value}, true));
  return params;
}

void set_grad(ModelParameters& params, const std::string& name, double g) {
  Tensor& t = params.get(name);
  t.impl()->grad.assign(t.size(), g);
}

TEST(Adam, FirstStepMovesByLrSign) {
  // param 1.0, grad 2.0, lr 0.1: bias-corrected first step is
  // -lr * g / (|g| + eps) = -0.1 (to rounding).
  AdamConfig config;
  config.lr = 0.1;
  AdamState adam(config);
  ModelParameters params = single_param(1.0);
  set_grad(params, "p", 2.0);
  adam.step(params);
  EXPECT_NEAR(params.get("p").item(), 0.9, 1e-6);
}

TEST(Adam, ZeroGradientFreshStateNoChange) {
  AdamState adam;
  ModelParameters params = single_param(3.5);
  set_grad(params, "p", 0.0);
  adam.step(params);
  EXPECT_DOUBLE_EQ(params.get("p").item(), 3.5);
  // Missing gradient behaves the same.
  ModelParameters other = single_param(-2.0);
  AdamState adam2;
  adam2.step(other);
  EXPECT_DOUBLE_EQ(other.get("p").item(), -2.0);
}

TEST(Adam, OppositeGradientsNearlyCancel) {
  AdamConfig config;
  config.lr = 0.05;
  AdamState adam(config);
  ModelParameters params = single_param(1.0);
  set_grad(params, "p", 2.0);
  adam.step(params);
  set_grad(params, "p", -2.0);
  adam.step(params);
  EXPECT_LT(std::fabs(params.get("p").item() - 1.0), config.lr);
}

TEST(Adam, VanishingLearningRate) {
  AdamConfig config;
  config.lr = 0.0;
  AdamState adam(config);
  ModelParameters params = single_param(0.7);
  set_grad(params, "p", 5.0);
  adam.step(params);
  EXPECT_NEAR(params.get("p").item(), 0.7, 1e-12);
}

TEST(Adam, ClosedFormTwoSteps) {
  // Hand-evaluated bias-corrected updates for g = +2 then -2.
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0, v = 0, param = 1.0;
  const double grads[2] = {2.0, -2.0};
  for (int t = 1; t <= 2; ++t) {
    const double g = grads[t - 1];
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double m_hat = m / (1 - std::pow(b1, t));
    const double v_hat = v / (1 - std::pow(b2, t));
    param -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
  AdamConfig config;
  config.lr = lr;
  AdamState adam(config);
  ModelParameters params = single_param(1.0);
  set_grad(params, "p", 2.0);
  adam.step(params);
  set_grad(params, "p", -2.0);
  adam.step(params);
  EXPECT_NEAR(params.get("p").item(), param, 1e-15);
}

TEST(MaeMse, HandExample) {
  auto [mae, mse] = mae_mse({10, 20}, {12, 16});
  EXPECT_DOUBLE_EQ(mae, 3.0);
  EXPECT_NEAR(mse, std::sqrt(10.0), 1e-12);
}

TEST(MaeMse, PerfectAndSingle) {
  auto [mae, mse] = mae_mse({7, 9}, {7, 9});
  EXPECT_DOUBLE_EQ(mae, 0.0);
  EXPECT_DOUBLE_EQ(mse, 0.0);
  auto [mae1, mse1] = mae_mse({10}, {6.5});
  EXPECT_DOUBLE_EQ(mae1, 3.5);
  EXPECT_DOUBLE_EQ(mse1, 3.5);
}

TEST(MaeMse, MaeNeverExceedsMse) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> count(0.0, 100.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> gt, pred;
    for (int i = 0; i < 12; ++i) {
      gt.push_back(count(rng));
      pred.push_back(count(rng));
    }
    auto [mae, mse] = mae_mse(gt, pred);
    EXPECT_LE(mae, mse + 1e-12);
  }
}

class TrainingFixture : public ::testing::Test {
 protected:
  static std::vector<PreparedSample> LoadToySamples(int count) {
    namespace fs = std::filesystem;
    const fs::path dir =
        fs::temp_directory_path() / ("crowdkit_train_fixture_" +
                                     std::to_string(count));
    SynthOptions synth;
    synth.count = count;
    synth.min_points = 5;
    synth.max_points = 12;
    synth.regime = SynthRegime::mixed;
    synth.seed = 7;
    synth.height = 32;
    synth.width = 32;
    make_synthetic(dir.string(), synth);

    std::vector<std::pair<std::string, int>> counts;
    for (const auto& entry : fs::directory_iterator(dir / "images")) {
      const auto records = parse_annotations(
          annotation_path_for_image((dir / "annotations").string(),
                                    entry.path().filename().string()));
      counts.emplace_back(entry.path().filename().string(),
                          static_cast<int>(records.size()));
    }
    const auto manifest = filter_and_split(counts, 1, {1.0, 0.0, 0.0}, 3);
    write_manifest((dir / "manifest.csv").string(), manifest);
    LoadOptions load;
    load.group = CategoryGroup::people;
    load.gt.mode = GtOptions::Mode::fixed;
    load.gt.sigma = 2.0;
    return load_prepared_samples((dir / "manifest.csv").string(),
                                 (dir / "images").string(),
                                 (dir / "annotations").string(), Split::train,
                                 load);
  }

  static ModelConfig ToyConfig() {
    ModelConfig config;
    config.channel_scale = {1, 8};
    config.seed = 21;
    return config;
  }
};

TEST_F(TrainingFixture, ZeroEpochsLeaveModelUntouched) {
  auto samples = LoadToySamples(2);
  SacaModel model = SacaModel::build(ToyConfig());
  SacaModel reference = SacaModel::build(ToyConfig());
  TrainOptions options;
  options.epochs = 0;
  TrainResult result = train(model, samples, options);
  EXPECT_EQ(result.steps_run, 0);
  for (const auto& [name, tensor] : model.params().map()) {
    const Tensor& ref = reference.params().get(name);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      EXPECT_EQ(tensor.data()[i], ref.data()[i]) << name;
    }
  }
}

TEST_F(TrainingFixture, DeterministicLossCurves) {
  auto samples = LoadToySamples(3);
  TrainOptions options;
  options.epochs = 2;
  options.seed = 11;
  SacaModel a = SacaModel::build(ToyConfig());
  TrainResult ra = train(a, samples, options);
  SacaModel b = SacaModel::build(ToyConfig());
  TrainResult rb = train(b, samples, options);
  ASSERT_EQ(ra.log.size(), rb.log.size());
  for (std::size_t i = 0; i < ra.log.size(); ++i) {
    EXPECT_EQ(ra.log[i].loss, rb.log[i].loss);
  }
}

TEST_F(TrainingFixture, FixedBatchLossStrictlyDecreasesEarly) {
  auto samples = LoadToySamples(1);
  SacaModel model = SacaModel::build(ToyConfig());
  TrainOptions options;
  options.epochs = 10;  // one sample -> one step per epoch
  options.seed = 5;
  TrainResult result = train(model, samples, options);
  ASSERT_GE(result.log.size(), 10u);
  for (std::size_t i = 1; i < 10; ++i) {
    EXPECT_LT(result.log[i].loss, result.log[i - 1].loss)
        << "step " << i + 1;
  }
}

TEST_F(TrainingFixture, DivergedLossAborts) {
  auto samples = LoadToySamples(1);
  SacaModel model = SacaModel::build(ToyConfig());
  // An infinite head bias survives the terminal ReLU (a NaN weight would
  // be zeroed by it) and blows the loss up on the very first step.
  Tensor& bias = model.params().get("output.conv.bias");
  bias.mutable_data()[0] = std::numeric_limits<double>::infinity();
  TrainOptions options;
  options.epochs = 1;
  try {
    train(model, samples, options);
    FAIL() << "expected training abort";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
  }
}

TEST_F(TrainingFixture, CheckpointAndLogWritten) {
  namespace fs = std::filesystem;
  auto samples = LoadToySamples(2);
  SacaModel model = SacaModel::build(ToyConfig());
  const fs::path dir = fs::temp_directory_path() / "crowdkit_train_outputs";
  fs::remove_all(dir);
  TrainOptions options;
  options.epochs = 1;
  options.checkpoint_dir = (dir / "ckpt").string();
  options.log_path = (dir / "log.csv").string();
  TrainResult result = train(model, samples, options);
  EXPECT_TRUE(fs::exists(dir / "ckpt" / "checkpoint_epoch_1.ckwt"));
  const std::string log = read_text_file((dir / "log.csv").string());
  EXPECT_NE(log.find("step,loss"), std::string::npos);
  EXPECT_EQ(result.epoch_mae.size(), 1u);
  fs::remove_all(dir);
}

TEST_F(TrainingFixture, EvaluateCountsPoints) {
  auto samples = LoadToySamples(2);
  SacaModel model = SacaModel::build(ToyConfig());
  EvalReport report = evaluate(model, samples);
  ASSERT_EQ(report.entries.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_DOUBLE_EQ(report.entries[i].ground_truth,
                     static_cast<double>(samples[i].points.points.size()));
  }
  EXPECT_LE(report.mae, report.mse + 1e-12);
  const std::string json = eval_report_to_json(report);
  EXPECT_NE(json.find("\"mae\""), std::string::npos);
}

TEST(PerBucketErrors, GroupsByBucket) {
  EvalReport report;
  report.entries = {{"a", 10, 12}, {"b", 20, 16}, {"c", 5, 5}};
  std::map<std::string, int> buckets{{"a", 0}, {"b", 0}, {"c", 2}};
  const auto rows = per_bucket_errors(report, buckets);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].bucket, 0);
  EXPECT_EQ(rows[0].images, 2);
  EXPECT_DOUBLE_EQ(rows[0].mae, 3.0);
  EXPECT_DOUBLE_EQ(rows[1].mae, 0.0);
}

}  // namespace
}  // namespace crowdkit
