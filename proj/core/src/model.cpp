#include "crowdkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "crowdkit/checkpoint.hpp"
#include "crowdkit/errors.hpp"
#include "crowdkit/format.hpp"
#include "crowdkit/ops.hpp"

namespace crowdkit {

Rational Rational::parse(const std::string& text) {
  Rational r;
  const std::size_t slash = text.find('/');
  if (slash == std::string::npos) {
    r.num = static_cast<int>(parse_integer(text, "channel_scale"));
    r.den = 1;
  } else {
    r.num = static_cast<int>(
        parse_integer(text.substr(0, slash), "channel_scale numerator"));
    r.den = static_cast<int>(
        parse_integer(text.substr(slash + 1), "channel_scale denominator"));
  }
  if (r.num <= 0 || r.den <= 0) {
    throw ConfigError("channel_scale must be a positive rational, got '" +
                      text + "'");
  }
  return r;
}

std::string Rational::str() const {
  if (den == 1) return std::to_string(num);
  return std::to_string(num) + "/" + std::to_string(den);
}

int ModelConfig::scaled(int paper_width) const {
  const long long scaled_num =
      static_cast<long long>(paper_width) * channel_scale.num;
  if (scaled_num % channel_scale.den != 0) {
    throw ConfigError("channel_scale " + channel_scale.str() +
                      " makes layer width " + std::to_string(paper_width) +
                      " non-integral");
  }
  const long long width = scaled_num / channel_scale.den;
  if (width <= 0) {
    throw ConfigError("channel_scale " + channel_scale.str() +
                      " collapses layer width " + std::to_string(paper_width));
  }
  if (width > 16 && width % 16 != 0) {
    throw ConfigError("scaled width " + std::to_string(width) +
                      " exceeds 16 channels and is not divisible by 16 "
                      "(group normalization constraint)");
  }
  return static_cast<int>(width);
}

void ModelConfig::validate() const {
  if (channel_scale.num <= 0 || channel_scale.den <= 0) {
    throw ConfigError("channel_scale must be positive");
  }
  if (input_channels != 1 && input_channels != 3) {
    throw ConfigError("input_channels must be 1 or 3, got " +
                      std::to_string(input_channels));
  }
  for (int d : dilations) {
    if (d <= 0) throw ConfigError("dilations must be strictly positive");
  }
  if (gn_epsilon <= 0.0) throw ConfigError("gn_epsilon must be positive");
  if (init_scale <= 0.0) throw ConfigError("init_scale must be positive");
  if (attention_cap <= 0) throw ConfigError("attention_cap must be positive");
  // Every scaled width must exist; branch width is stem output / 4.
  for (int w : {64, 128, 256, 512}) (void)scaled(w);
  const int c2 = scaled(512);
  if (c2 % 4 != 0) {
    throw ConfigError("stem output width " + std::to_string(c2) +
                      " is not divisible by 4 (branch channel reduction)");
  }
  const int branch_width = c2 / 4;
  if (branch_width > 16 && branch_width % 16 != 0) {
    throw ConfigError("branch width " + std::to_string(branch_width) +
                      " exceeds 16 channels and is not divisible by 16 "
                      "(group normalization constraint)");
  }
}

ModelConfig ModelConfig::load(const std::string& path) {
  ModelConfig config;
  std::istringstream in(read_text_file(path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": expected key = value");
      }
      continue;
    }
    auto trim = [](std::string s) {
      const std::size_t b = s.find_first_not_of(" \t\r");
      const std::size_t e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string ctx = path + ":" + std::to_string(line_no);
    if (key == "channel_scale") {
      config.channel_scale = Rational::parse(value);
    } else if (key == "input_channels") {
      config.input_channels = static_cast<int>(parse_integer(value, ctx));
    } else if (key == "dilations") {
      const auto parts = split_csv_line(value);
      if (parts.size() != 3) {
        throw ParseError(ctx + ": dilations needs three comma-separated ints");
      }
      for (int i = 0; i < 3; ++i) {
        config.dilations[static_cast<std::size_t>(i)] =
            static_cast<int>(parse_integer(parts[static_cast<std::size_t>(i)], ctx));
      }
    } else if (key == "gn_epsilon") {
      config.gn_epsilon = parse_real(value, ctx);
    } else if (key == "seed") {
      config.seed = static_cast<std::uint64_t>(parse_integer(value, ctx));
    } else if (key == "init_scale") {
      config.init_scale = parse_real(value, ctx);
    } else if (key == "attention_cap") {
      config.attention_cap = static_cast<int>(parse_integer(value, ctx));
    } else {
      throw ParseError(ctx + ": unknown key '" + key + "'");
    }
  }
  config.validate();
  return config;
}

void ModelConfig::save(const std::string& path) const {
  std::ostringstream out;
  out << "channel_scale = " << channel_scale.str() << "\n";
  out << "input_channels = " << input_channels << "\n";
  out << "dilations = " << dilations[0] << "," << dilations[1] << ","
      << dilations[2] << "\n";
  out << "gn_epsilon = " << format_real(gn_epsilon) << "\n";
  out << "seed = " << seed << "\n";
  out << "init_scale = " << format_real(init_scale) << "\n";
  out << "attention_cap = " << attention_cap << "\n";
  write_text_file(path, out.str());
}

Tensor& ModelParameters::add(const std::string& name, Tensor tensor) {
  auto [it, inserted] = params_.emplace(name, std::move(tensor));
  if (!inserted) {
    throw ConfigError("duplicate parameter name '" + name + "'");
  }
  return it->second;
}

Tensor& ModelParameters::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw ConfigError("unknown parameter '" + name + "'");
  }
  return it->second;
}

const Tensor& ModelParameters::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw ConfigError("unknown parameter '" + name + "'");
  }
  return it->second;
}

bool ModelParameters::contains(const std::string& name) const {
  return params_.count(name) > 0;
}

std::size_t ModelParameters::value_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

void ModelParameters::zero_grads() {
  for (auto& [name, t] : params_) t.zero_grad();
}

Tensor Conv2dLayer::forward(const Tensor& x) const {
  return ops::conv2d(x, weight, bias, stride, padding, dilation);
}

Tensor GroupNormLayer::forward(const Tensor& x) const {
  return ops::group_normalize(x, gamma, beta, epsilon);
}

Tensor SelfAttentionLayer::forward(const Tensor& x) const {
  const Shape& s = x.shape();
  const int batch = s[0], channels = s[1], height = s[2], width = s[3];
  const int positions = height * width;
  if (positions > position_cap) {
    throw UsageError(
        "self-attention over " + std::to_string(positions) +
        " positions exceeds the cap of " + std::to_string(position_cap) +
        "; feed a smaller input or raise attention_cap");
  }
  Tensor q = query.forward(x);   // [B, C, H, W]
  Tensor k = key.forward(x);
  Tensor v = value.forward(x);
  // Flatten to [B, L, C].
  Tensor qm = ops::transpose_last2(ops::reshape(q, {batch, channels, positions}));
  Tensor km = ops::transpose_last2(ops::reshape(k, {batch, channels, positions}));
  Tensor vm = ops::transpose_last2(ops::reshape(v, {batch, channels, positions}));
  Tensor logits = ops::matmul(qm, ops::transpose_last2(km));  // [B, L, L]
  Tensor weights = ops::softmax_rows(logits);
  Tensor y = ops::matmul(weights, vm);  // [B, L, C]
  return ops::reshape(ops::transpose_last2(y), {batch, channels, height, width});
}

Tensor SelfAttentionLayer::attention_matrix(const Tensor& x) const {
  const Shape& s = x.shape();
  const int batch = s[0], channels = s[1];
  const int positions = s[2] * s[3];
  Tensor q = query.forward(x);
  Tensor k = key.forward(x);
  Tensor qm = ops::transpose_last2(ops::reshape(q, {batch, channels, positions}));
  Tensor km = ops::transpose_last2(ops::reshape(k, {batch, channels, positions}));
  return ops::softmax_rows(ops::matmul(qm, ops::transpose_last2(km)));
}

namespace {

// VGG-16 first ten convolutions; -1 marks a 2x2 max pool.
constexpr int kStemPlan[] = {64, 64, -1, 128, 128, -1, 256, 256, 256, -1, 512, 512, 512};

Tensor randn_param(Shape shape, std::mt19937_64& rng, double stddev) {
  return Tensor::randn(std::move(shape), rng, stddev, /*requires_grad=*/true);
}

}  // namespace

SacaModel SacaModel::build(const ModelConfig& config) {
  config.validate();
  SacaModel model;
  model.config_ = config;
  std::mt19937_64 rng(config.seed);
  const double w_std = config.init_scale;

  auto make_conv = [&](const std::string& name, int cin, int cout, int ksize,
                       int padding, int dilation,
                       double bias_init = 0.0) {
    Conv2dLayer layer;
    layer.weight = model.params_.add(
        name + ".weight", randn_param({cout, cin, ksize, ksize}, rng, w_std));
    layer.bias = model.params_.add(
        name + ".bias", Tensor::full({cout}, bias_init, /*requires_grad=*/true));
    layer.stride = 1;
    layer.padding = padding;
    layer.dilation = dilation;
    return layer;
  };
  auto make_gn = [&](const std::string& name, int channels) {
    GroupNormLayer layer;
    layer.gamma = model.params_.add(name + ".gamma",
                                    Tensor::full({channels}, 1.0, true));
    layer.beta = model.params_.add(name + ".beta",
                                   Tensor::zeros({channels}, true));
    layer.epsilon = config.gn_epsilon;
    (void)ops::group_count_for_channels(channels);
    return layer;
  };

  // Front end: conv indices follow the VGG naming (conv1_1 ... conv4_3).
  // The paper warm-starts this stem from pretrained weights; standing in
  // for that, it gets a fan-in-scaled init so activations keep a healthy
  // magnitude through ten conv layers. The Gaussian(0,1) * init_scale draw
  // applies to the non-front-end layers only.
  int cin = config.input_channels;
  int block = 1;
  int conv_in_block = 0;
  for (int entry : kStemPlan) {
    if (entry < 0) {
      ++block;
      conv_in_block = 0;
      continue;
    }
    ++conv_in_block;
    const int cout = config.scaled(entry);
    const std::string name = "stem.conv" + std::to_string(block) + "_" +
                             std::to_string(conv_in_block);
    const double fan_in_std = std::sqrt(2.0 / (9.0 * cin));
    Conv2dLayer layer;
    layer.weight = model.params_.add(
        name + ".weight", randn_param({cout, cin, 3, 3}, rng, fan_in_std));
    layer.bias =
        model.params_.add(name + ".bias", Tensor::zeros({cout}, true));
    layer.padding = 1;
    model.stem_.push_back(layer);
    model.stem_channels_.push_back(cout);
    cin = cout;
  }
  const int c2 = model.stem_channels_.back();

  model.pyramid_fuse_ = make_conv("pyramid.fuse.conv", 2 * c2, c2, 1, 0, 1);
  model.pyramid_fuse_gn_ = make_gn("pyramid.fuse.gn", c2);

  const int branch_width = c2 / 4;
  for (int i = 0; i < 3; ++i) {
    Branch& branch = model.branches_[static_cast<std::size_t>(i)];
    const std::string prefix = "branch" + std::to_string(i);
    branch.dilation = config.dilations[static_cast<std::size_t>(i)];
    branch.reduce = make_conv(prefix + ".reduce.conv", c2, branch_width, 1, 0, 1);
    branch.reduce_gn = make_gn(prefix + ".reduce.gn", branch_width);
    branch.dilated = make_conv(prefix + ".dilated.conv", branch_width,
                               branch_width, 3, branch.dilation,
                               branch.dilation);
    branch.dilated_gn = make_gn(prefix + ".dilated.gn", branch_width);
    branch.attention.query =
        make_conv(prefix + ".attention.query", branch_width, branch_width, 1, 0, 1);
    branch.attention.key =
        make_conv(prefix + ".attention.key", branch_width, branch_width, 1, 0, 1);
    branch.attention.value =
        make_conv(prefix + ".attention.value", branch_width, branch_width, 1, 0, 1);
    branch.attention.position_cap = config.attention_cap;
  }

  // Refinement and backend width floor of 32: at small channel scales the
  // branch width drops to <= 16 where the grouping rule degenerates to one
  // channel per group, and such normalization pins every per-image channel
  // statistic that the count estimate needs. Two or more channels per
  // group keep that information flowing. Paper-scale widths are above the
  // floor already.
  const int fuse_width = std::max(branch_width, 32);
  for (int i = 0; i < 2; ++i) {
    FuseStage& stage = model.fuse_stages_[static_cast<std::size_t>(i)];
    const std::string prefix = "fuse.stage" + std::to_string(i);
    const int acc_width = i == 0 ? branch_width : fuse_width;
    stage.project = make_conv(prefix + ".project", acc_width, branch_width, 1, 0, 1);
    stage.conv = make_conv(prefix + ".conv", branch_width, fuse_width, 3, 1, 1);
    stage.gn = make_gn(prefix + ".gn", fuse_width);
  }
  for (int i = 0; i < 2; ++i) {
    BackendBlock& blockb = model.backend_[static_cast<std::size_t>(i)];
    const std::string prefix = "backend.block" + std::to_string(i);
    blockb.conv = make_conv(prefix + ".conv", fuse_width, fuse_width, 3, 1, 1);
    blockb.gn = make_gn(prefix + ".gn", fuse_width);
  }
  // The head bias starts at a small positive density prior: it keeps the
  // terminal ReLU live, and Adam at the default learning rate can only
  // move a single bias by ~lr per step, so starting near a typical cell
  // mass matters at short training budgets.
  model.output_ = make_conv("output.conv", fuse_width, 1, 1, 0, 1, 0.25);
  return model;
}

Tensor SacaModel::stem_forward(const Tensor& image) const {
  Tensor x = image;
  std::size_t conv_index = 0;
  for (int entry : kStemPlan) {
    if (entry < 0) {
      x = ops::max_pool2(x);
    } else {
      x = ops::relu(stem_[conv_index].forward(x));
      ++conv_index;
    }
  }
  return x;
}

Tensor SacaModel::pyramid_context_forward(const Tensor& image) const {
  const Shape& s = image.shape();
  if (s.size() != 4) throw ConfigError("model input must be 4-D");
  if (s[1] != config_.input_channels) {
    throw ConfigError("model expects " + std::to_string(config_.input_channels) +
                      " input channels, got " + std::to_string(s[1]));
  }
  if (s[2] % 32 != 0 || s[3] % 32 != 0) {
    throw ConfigError("input extents must be divisible by 32, got " +
                      shape_str(s));
  }
  Tensor full_res = stem_forward(image);  // stride 8
  Tensor low_image = ops::bilinear_resize(image, s[2] / 4, s[3] / 4);
  Tensor low_res = stem_forward(low_image);               // stride 32
  Tensor low_up = ops::bilinear_upsample(low_res, 4);     // back to stride 8
  Tensor mixed = ops::channel_shuffle2(
      ops::concat_channels({full_res, low_up}));
  return ops::relu(pyramid_fuse_gn_.forward(pyramid_fuse_.forward(mixed)));
}

Tensor SacaModel::sasa_branch_forward(const Tensor& features,
                                      int branch_index) const {
  if (branch_index < 0 || branch_index > 2) {
    throw ConfigError("branch_index must be 0, 1 or 2");
  }
  if (features.dim(1) % 4 != 0) {
    throw ConfigError("branch input channels must be divisible by 4, got " +
                      std::to_string(features.dim(1)));
  }
  const Branch& branch = branches_[static_cast<std::size_t>(branch_index)];
  Tensor reduced = ops::relu(branch.reduce_gn.forward(branch.reduce.forward(features)));
  Tensor dilated = ops::relu(branch.dilated_gn.forward(branch.dilated.forward(reduced)));
  return branch.attention.forward(dilated);
}

Tensor SacaModel::hierarchical_fuse(
    const std::array<Tensor, 3>& branch_outputs) const {
  const Shape& s0 = branch_outputs[0].shape();
  for (const Tensor& t : branch_outputs) {
    if (t.shape() != s0) {
      throw ConfigError("hierarchical_fuse: branch shapes disagree: " +
                        shape_str(s0) + " vs " + shape_str(t.shape()));
    }
  }
  // Deepest receptive field seeds the estimate; refine toward dilation 1.
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const int da = branches_[static_cast<std::size_t>(a)].dilation;
    const int db = branches_[static_cast<std::size_t>(b)].dilation;
    return da != db ? da > db : a < b;
  });
  Tensor acc = branch_outputs[static_cast<std::size_t>(order[0])];
  for (int stage = 0; stage < 2; ++stage) {
    const FuseStage& fs = fuse_stages_[static_cast<std::size_t>(stage)];
    Tensor projected = fs.project.forward(acc);
    Tensor merged = ops::add(
        projected, branch_outputs[static_cast<std::size_t>(order[stage + 1])]);
    acc = ops::relu(fs.gn.forward(fs.conv.forward(merged)));
  }
  for (const BackendBlock& blockb : backend_) {
    acc = ops::relu(blockb.gn.forward(blockb.conv.forward(acc)));
  }
  return ops::relu(output_.forward(acc));
}

Tensor SacaModel::forward(const Tensor& image) const {
  Tensor features = pyramid_context_forward(image);
  std::array<Tensor, 3> branches{sasa_branch_forward(features, 0),
                                 sasa_branch_forward(features, 1),
                                 sasa_branch_forward(features, 2)};
  return hierarchical_fuse(branches);
}

const SelfAttentionLayer& SacaModel::attention(int branch_index) const {
  if (branch_index < 0 || branch_index > 2) {
    throw ConfigError("branch_index must be 0, 1 or 2");
  }
  return branches_[static_cast<std::size_t>(branch_index)].attention;
}

std::vector<double> predict_count(const Tensor& density) {
  const Shape& s = density.shape();
  if (s.size() != 4 || s[1] != 1) {
    throw ConfigError("predict_count expects a [B, 1, h, w] density map");
  }
  const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
  std::vector<double> counts(static_cast<std::size_t>(s[0]), 0.0);
  const double* p = density.data().data();
  for (int b = 0; b < s[0]; ++b) {
    double acc = 0.0;
    const double* map = p + static_cast<std::size_t>(b) * plane;
    for (std::size_t i = 0; i < plane; ++i) acc += map[i];
    counts[static_cast<std::size_t>(b)] = acc;
  }
  return counts;
}

void save_weights(const SacaModel& model, const std::string& path) {
  write_ckwt(path, model.params().map());
}

void load_weights(SacaModel& model, const std::string& path, bool partial) {
  std::map<std::string, Tensor> named = read_ckwt(path);
  for (const auto& [name, tensor] : named) {
    if (!model.params().contains(name)) {
      throw ConfigError(path + ": unknown parameter '" + name + "'");
    }
    Tensor& dst = model.params().get(name);
    if (dst.shape() != tensor.shape()) {
      throw ConfigError(path + ": shape mismatch for parameter '" + name +
                        "': model has " + shape_str(dst.shape()) +
                        ", file has " + shape_str(tensor.shape()));
    }
  }
  if (!partial) {
    for (const auto& [name, t] : model.params().map()) {
      if (!named.count(name)) {
        throw ConfigError(path + ": missing parameter '" + name +
                          "' (use a partial load to allow subsets)");
      }
    }
  }
  for (const auto& [name, tensor] : named) {
    Tensor& dst = model.params().get(name);
    auto out = dst.mutable_data();
    auto in = tensor.data();
    std::copy(in.begin(), in.end(), out.begin());
  }
}

}  // namespace crowdkit
