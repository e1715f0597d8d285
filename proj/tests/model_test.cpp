#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "crowdkit/checkpoint.hpp"
#include "crowdkit/errors.hpp"
#include "crowdkit/format.hpp"
#include "crowdkit/model.hpp"
#include "crowdkit/ops.hpp"
#include "test_util.hpp"

namespace crowdkit {
namespace {

using testutil::rand_signed;

ModelConfig toy_config(std::uint64_t seed = 42) {
  ModelConfig config;
  config.channel_scale = {1, 8};
  config.seed = seed;
  return config;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void zero_params_with_prefix(SacaModel& model, const std::string& prefix) {
  for (auto& [name, tensor] : model.params().map()) {
    if (name.rfind(prefix, 0) == 0) {
      for (double& v : tensor.mutable_data()) v = 0.0;
    }
  }
}

TEST(ModelConfig, ScaledWidths) {
  ModelConfig config = toy_config();
  EXPECT_EQ(config.scaled(64), 8);
  EXPECT_EQ(config.scaled(128), 16);
  EXPECT_EQ(config.scaled(256), 32);
  EXPECT_EQ(config.scaled(512), 64);
}

TEST(ModelConfig, RejectsNonDivisibleWidth) {
  // 64 * 3/8 = 24 channels: above 16 and not divisible by 16.
  ModelConfig config;
  config.channel_scale = {3, 8};
  EXPECT_THROW(config.validate(), ConfigError);
}

TEST(ModelConfig, RejectsNonIntegralWidth) {
  ModelConfig config;
  config.channel_scale = {1, 3};
  EXPECT_THROW(config.validate(), ConfigError);
}

TEST(ModelConfig, FileRoundTrip) {
  ModelConfig config = toy_config(7);
  config.dilations = {1, 3, 5};
  config.gn_epsilon = 2e-5;
  const std::string path = temp_path("crowdkit_model_config_test.cfg");
  config.save(path);
  ModelConfig loaded = ModelConfig::load(path);
  EXPECT_EQ(loaded.channel_scale.num, 1);
  EXPECT_EQ(loaded.channel_scale.den, 8);
  EXPECT_EQ(loaded.dilations, (std::array<int, 3>{1, 3, 5}));
  EXPECT_DOUBLE_EQ(loaded.gn_epsilon, 2e-5);
  EXPECT_EQ(loaded.seed, 7u);
  std::filesystem::remove(path);
}

TEST(ModelConfig, UnknownKeyRejected) {
  const std::string path = temp_path("crowdkit_model_config_bad.cfg");
  write_text_file(path, "channel_scale = 1/8\nwhat = 3\n");
  EXPECT_THROW(ModelConfig::load(path), ParseError);
  std::filesystem::remove(path);
}

TEST(BuildModel, DeterministicBySeed) {
  SacaModel a = SacaModel::build(toy_config(11));
  SacaModel b = SacaModel::build(toy_config(11));
  ASSERT_EQ(a.params().tensor_count(), b.params().tensor_count());
  for (const auto& [name, tensor] : a.params().map()) {
    const Tensor& other = b.params().get(name);
    ASSERT_EQ(tensor.size(), other.size()) << name;
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      EXPECT_EQ(tensor.data()[i], other.data()[i]) << name;
    }
  }
}

TEST(BuildModel, ParameterCountByConstruction) {
  SacaModel model = SacaModel::build(toy_config());
  // Stem: ten 3x3 convolutions at scaled VGG widths.
  const int widths[10][2] = {{3, 8},   {8, 8},   {8, 16},  {16, 16},
                             {16, 32}, {32, 32}, {32, 32}, {32, 64},
                             {64, 64}, {64, 64}};
  std::size_t expected = 0;
  for (const auto& w : widths) {
    expected += static_cast<std::size_t>(w[1]) * w[0] * 9 + w[1];
  }
  const int c2 = 64;
  const int bw = c2 / 4;
  expected += static_cast<std::size_t>(c2) * (2 * c2) + c2;  // pyramid fuse 1x1
  expected += 2 * c2;                                        // its GN
  // Branches: reduce 1x1 + GN, dilated 3x3 + GN, three 1x1 attention convs.
  expected += 3 * (static_cast<std::size_t>(bw) * c2 + bw + 2 * bw +
                   static_cast<std::size_t>(bw) * bw * 9 + bw + 2 * bw +
                   3 * (static_cast<std::size_t>(bw) * bw + bw));
  // Fusion stages: project 1x1, conv 3x3, GN.
  expected += 2 * (static_cast<std::size_t>(bw) * bw + bw +
                   static_cast<std::size_t>(bw) * bw * 9 + bw + 2 * bw);
  // Backend blocks.
  expected += 2 * (static_cast<std::size_t>(bw) * bw * 9 + bw + 2 * bw);
  // Output conv.
  expected += static_cast<std::size_t>(bw) + 1;
  EXPECT_EQ(model.parameter_count(), expected);
  SacaModel again = SacaModel::build(toy_config());
  EXPECT_EQ(again.parameter_count(), expected);
}

TEST(Pyramid, OutputShapeIsStride8) {
  SacaModel model = SacaModel::build(toy_config());
  std::mt19937_64 rng(3);
  Tensor image = rand_signed({1, 3, 64, 64}, rng);
  Tensor features = model.pyramid_context_forward(image);
  EXPECT_EQ(features.shape(), (Shape{1, 64, 8, 8}));
}

TEST(Pyramid, RejectsIndivisibleInput) {
  SacaModel model = SacaModel::build(toy_config());
  std::mt19937_64 rng(3);
  Tensor image = rand_signed({1, 3, 48, 64}, rng);
  EXPECT_THROW(model.pyramid_context_forward(image), ConfigError);
}

TEST(Pyramid, SharedStemZeroWeightsZeroBothPaths) {
  SacaModel model = SacaModel::build(toy_config());
  zero_params_with_prefix(model, "stem.");
  std::mt19937_64 rng(5);
  Tensor image = rand_signed({1, 3, 32, 32}, rng);
  Tensor full = model.stem_forward(image);
  Tensor low = model.stem_forward(ops::bilinear_resize(image, 8, 8));
  for (double v : full.data()) EXPECT_DOUBLE_EQ(v, 0.0);
  for (double v : low.data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(SelfAttention, UniformWhenQueryAndKeyZero) {
  SacaModel model = SacaModel::build(toy_config());
  zero_params_with_prefix(model, "branch0.attention.query");
  zero_params_with_prefix(model, "branch0.attention.key");
  std::mt19937_64 rng(7);
  const int channels = 16;
  Tensor x = rand_signed({1, channels, 4, 4}, rng);
  const SelfAttentionLayer& attention = model.attention(0);
  Tensor y = attention.forward(x);
  Tensor v = attention.value.forward(x);
  const int positions = 16;
  // Reference accumulated in the same order as the attention matmul.
  const double w = 1.0 / positions;
  for (int c = 0; c < channels; ++c) {
    double mean = 0.0;
    for (int l = 0; l < positions; ++l) {
      mean += w * v.data()[static_cast<std::size_t>(c) * positions + l];
    }
    for (int l = 0; l < positions; ++l) {
      EXPECT_EQ(y.data()[static_cast<std::size_t>(c) * positions + l], mean)
          << "channel " << c << " position " << l;
    }
  }
}

TEST(SelfAttention, RowsSumToOne) {
  SacaModel model = SacaModel::build(toy_config());
  std::mt19937_64 rng(9);
  Tensor x = rand_signed({1, 16, 4, 4}, rng);
  Tensor weights = model.attention(1).attention_matrix(x);
  ASSERT_EQ(weights.shape(), (Shape{1, 16, 16}));
  for (int r = 0; r < 16; ++r) {
    double total = 0.0;
    for (int c = 0; c < 16; ++c) total += weights.at({0, r, c});
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(SelfAttention, SinglePositionReturnsValue) {
  SacaModel model = SacaModel::build(toy_config());
  std::mt19937_64 rng(11);
  Tensor x = rand_signed({1, 16, 1, 1}, rng);
  const SelfAttentionLayer& attention = model.attention(2);
  Tensor y = attention.forward(x);
  Tensor v = attention.value.forward(x);
  for (std::size_t i = 0; i < y.size(); ++i) {
    EXPECT_EQ(y.data()[i], v.data()[i]);
  }
}

TEST(SelfAttention, CapEnforced) {
  SacaModel model = SacaModel::build(toy_config());
  SelfAttentionLayer attention = model.attention(0);
  attention.position_cap = 4;
  std::mt19937_64 rng(13);
  Tensor x = rand_signed({1, 16, 3, 3}, rng);
  EXPECT_THROW(attention.forward(x), UsageError);
}

TEST(SasaBranch, PreservesSpatialSizeAndQuartersChannels) {
  SacaModel model = SacaModel::build(toy_config());
  std::mt19937_64 rng(15);
  Tensor features = rand_signed({1, 64, 6, 5}, rng);
  for (int branch = 0; branch < 3; ++branch) {
    Tensor out = model.sasa_branch_forward(features, branch);
    EXPECT_EQ(out.shape(), (Shape{1, 16, 6, 5})) << "branch " << branch;
  }
}

TEST(SasaBranch, DilationChangesOutputWithSharedWeights) {
  SacaModel model = SacaModel::build(toy_config());
  // Copy branch 0 weights into branches 1 and 2; only dilation differs.
  for (const char* suffix :
       {".reduce.conv.weight", ".reduce.conv.bias", ".reduce.gn.gamma",
        ".reduce.gn.beta", ".dilated.conv.weight", ".dilated.conv.bias",
        ".dilated.gn.gamma", ".dilated.gn.beta", ".attention.query.weight",
        ".attention.query.bias", ".attention.key.weight",
        ".attention.key.bias", ".attention.value.weight",
        ".attention.value.bias"}) {
    const Tensor& src = model.params().get(std::string("branch0") + suffix);
    for (int branch = 1; branch < 3; ++branch) {
      Tensor& dst =
          model.params().get("branch" + std::to_string(branch) + suffix);
      auto out = dst.mutable_data();
      std::copy(src.data().begin(), src.data().end(), out.begin());
    }
  }
  std::mt19937_64 rng(17);
  Tensor features = rand_signed({1, 64, 8, 8}, rng);
  Tensor out0 = model.sasa_branch_forward(features, 0);
  Tensor out1 = model.sasa_branch_forward(features, 1);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < out0.size(); ++i) {
    max_diff = std::max(max_diff,
                        std::fabs(out0.data()[i] - out1.data()[i]));
  }
  EXPECT_GT(max_diff, 1e-9);
}

TEST(HierarchicalFuse, SingleNonNegativeChannel) {
  SacaModel model = SacaModel::build(toy_config());
  std::mt19937_64 rng(19);
  std::array<Tensor, 3> branches{rand_signed({1, 16, 8, 8}, rng),
                                 rand_signed({1, 16, 8, 8}, rng),
                                 rand_signed({1, 16, 8, 8}, rng)};
  Tensor out = model.hierarchical_fuse(branches);
  EXPECT_EQ(out.shape(), (Shape{1, 1, 8, 8}));
  for (double v : out.data()) EXPECT_GE(v, 0.0);
}

TEST(HierarchicalFuse, ShapeMismatchRejected) {
  SacaModel model = SacaModel::build(toy_config());
  std::mt19937_64 rng(21);
  std::array<Tensor, 3> branches{rand_signed({1, 16, 8, 8}, rng),
                                 rand_signed({1, 16, 4, 4}, rng),
                                 rand_signed({1, 16, 8, 8}, rng)};
  EXPECT_THROW(model.hierarchical_fuse(branches), ConfigError);
}

TEST(HierarchicalFuse, ZeroInputsAndBiasesGiveZeroMap) {
  SacaModel model = SacaModel::build(toy_config());
  for (auto& [name, tensor] : model.params().map()) {
    if (name.find(".bias") != std::string::npos ||
        name.find(".beta") != std::string::npos) {
      for (double& v : tensor.mutable_data()) v = 0.0;
    }
  }
  std::array<Tensor, 3> branches{Tensor::zeros({1, 16, 8, 8}),
                                 Tensor::zeros({1, 16, 8, 8}),
                                 Tensor::zeros({1, 16, 8, 8})};
  Tensor out = model.hierarchical_fuse(branches);
  for (double v : out.data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Forward, EndToEndShapeAndRange) {
  SacaModel model = SacaModel::build(toy_config());
  std::mt19937_64 rng(23);
  Tensor image = testutil::rand_positive({1, 3, 64, 64}, rng);
  Tensor density = model.forward(image);
  ASSERT_EQ(density.shape(), (Shape{1, 1, 8, 8}));
  EXPECT_TRUE(density.all_finite());
  for (double v : density.data()) EXPECT_GE(v, 0.0);
}

TEST(Forward, DeterministicBits) {
  std::mt19937_64 rng(25);
  Tensor image = testutil::rand_positive({1, 3, 32, 32}, rng);
  SacaModel a = SacaModel::build(toy_config(99));
  SacaModel b = SacaModel::build(toy_config(99));
  Tensor out_a = a.forward(image);
  Tensor out_b = b.forward(image);
  for (std::size_t i = 0; i < out_a.size(); ++i) {
    EXPECT_EQ(out_a.data()[i], out_b.data()[i]);
  }
}

TEST(PredictCount, SumsPerImage) {
  Tensor zeros = Tensor::zeros({1, 1, 4, 4});
  EXPECT_DOUBLE_EQ(predict_count(zeros)[0], 0.0);
  Tensor single = Tensor::zeros({1, 1, 4, 4});
  single.mutable_data()[5] = 7.5;
  EXPECT_DOUBLE_EQ(predict_count(single)[0], 7.5);
}

TEST(Weights, SaveLoadRoundTrip) {
  const std::string path = temp_path("crowdkit_weights_roundtrip.ckwt");
  SacaModel model = SacaModel::build(toy_config(31));
  std::mt19937_64 rng(33);
  Tensor image = testutil::rand_positive({1, 3, 32, 32}, rng);
  Tensor before = model.forward(image);
  save_weights(model, path);

  SacaModel other = SacaModel::build(toy_config(77));  // different init
  load_weights(other, path);
  Tensor after = other.forward(image);
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(before.data()[i], after.data()[i]);
  }
  std::filesystem::remove(path);
}

TEST(Weights, ShapeMismatchNamesParameter) {
  const std::string path = temp_path("crowdkit_weights_mismatch.ckwt");
  std::map<std::string, Tensor> named;
  named.emplace("output.conv.weight", Tensor::zeros({2, 16, 1, 1}));
  write_ckwt(path, named);
  SacaModel model = SacaModel::build(toy_config());
  try {
    load_weights(model, path, /*partial=*/true);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("output.conv.weight"),
              std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST(Weights, UnknownNameRejected) {
  const std::string path = temp_path("crowdkit_weights_unknown.ckwt");
  std::map<std::string, Tensor> named;
  named.emplace("nonexistent.weight", Tensor::zeros({1}));
  write_ckwt(path, named);
  SacaModel model = SacaModel::build(toy_config());
  EXPECT_THROW(load_weights(model, path, true), ConfigError);
  std::filesystem::remove(path);
}

TEST(Weights, MissingParameterRejectedUnlessPartial) {
  const std::string path = temp_path("crowdkit_weights_partial.ckwt");
  SacaModel source = SacaModel::build(toy_config(41));
  std::map<std::string, Tensor> stem_only;
  for (const auto& [name, tensor] : source.params().map()) {
    if (name.rfind("stem.", 0) == 0) stem_only.emplace(name, tensor);
  }
  write_ckwt(path, stem_only);

  SacaModel target = SacaModel::build(toy_config(43));
  EXPECT_THROW(load_weights(target, path, /*partial=*/false), ConfigError);
  SacaModel fresh = SacaModel::build(toy_config(43));
  load_weights(target, path, /*partial=*/true);
  for (const auto& [name, tensor] : target.params().map()) {
    const bool is_stem = name.rfind("stem.", 0) == 0;
    const Tensor& reference =
        is_stem ? source.params().get(name) : fresh.params().get(name);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      EXPECT_EQ(tensor.data()[i], reference.data()[i]) << name;
    }
  }
  std::filesystem::remove(path);
}

TEST(Weights, CorruptHeaderRejected) {
  const std::string path = temp_path("crowdkit_weights_corrupt.ckwt");
  write_text_file(path, "NOPE");
  EXPECT_THROW(read_ckwt(path), ParseError);
  write_text_file(path, "CKWT");  // truncated version field
  EXPECT_THROW(read_ckwt(path), ParseError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace crowdkit
