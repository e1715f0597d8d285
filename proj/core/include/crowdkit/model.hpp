#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "crowdkit/tensor.hpp"

namespace crowdkit {

// Exact channel scale applied to the paper-width layer counts
// (VGG stem 64/128/256/512). Stored as a fraction so scaled widths are
// validated as integers rather than rounded.
struct Rational {
  int num = 1;
  int den = 1;

  static Rational parse(const std::string& text);  // "1", "3/8", ...
  std::string str() const;
};

struct ModelConfig {
  Rational channel_scale{};
  int input_channels = 3;
  std::array<int, 3> dilations{1, 2, 3};
  double gn_epsilon = 1e-5;
  std::uint64_t seed = 0;
  double init_scale = 0.01;  // multiplier on the unit-Gaussian draw
  int attention_cap = 4096;  // max flattened H*W entering self-attention

  void validate() const;            // throws ConfigError
  int scaled(int paper_width) const;  // integral scaled width or throws

  static ModelConfig load(const std::string& path);
  void save(const std::string& path) const;
};

// Named learnable tensors. std::map keeps iteration in name order, which
// makes checkpoints and optimizer sweeps deterministic.
class ModelParameters {
 public:
  Tensor& add(const std::string& name, Tensor tensor);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::map<std::string, Tensor>& map() { return params_; }
  const std::map<std::string, Tensor>& map() const { return params_; }
  std::size_t tensor_count() const { return params_.size(); }
  std::size_t value_count() const;
  void zero_grads();

 private:
  std::map<std::string, Tensor> params_;
};

struct Conv2dLayer {
  Tensor weight;  // [Cout, Cin, kh, kw]
  Tensor bias;    // [Cout]
  int stride = 1;
  int padding = 0;
  int dilation = 1;

  Tensor forward(const Tensor& x) const;
};

struct GroupNormLayer {
  Tensor gamma;
  Tensor beta;
  double epsilon = 1e-5;

  Tensor forward(const Tensor& x) const;
};

// Spatial self-attention over flattened positions: Y = softmax(Q K^T) V
// with Q, K, V produced by 1x1 convolutions. No 1/sqrt(d) scaling.
struct SelfAttentionLayer {
  Conv2dLayer query;
  Conv2dLayer key;
  Conv2dLayer value;
  int position_cap = 4096;

  Tensor forward(const Tensor& x) const;
  // The row-stochastic [B, L, L] matrix, for inspection.
  Tensor attention_matrix(const Tensor& x) const;
};

class SacaModel {
 public:
  static SacaModel build(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  ModelParameters& params() { return params_; }
  const ModelParameters& params() const { return params_; }
  std::size_t parameter_count() const { return params_.value_count(); }

  // Shared-weight VGG front end (10 convs, 3 pools, stride 8).
  Tensor stem_forward(const Tensor& image) const;
  // Two-resolution front end -> shuffled, fused stride-8 features.
  // H and W must be divisible by 32.
  Tensor pyramid_context_forward(const Tensor& image) const;
  // 1x1 reduce (C/4) + GN + ReLU, dilated 3x3 + GN + ReLU, self-attention.
  Tensor sasa_branch_forward(const Tensor& features, int branch_index) const;
  // Largest-dilation-first refinement cascade, FCN backend, 1-channel
  // non-negative head.
  Tensor hierarchical_fuse(const std::array<Tensor, 3>& branch_outputs) const;

  Tensor forward(const Tensor& image) const;

  const SelfAttentionLayer& attention(int branch_index) const;
  int stem_output_channels() const { return stem_channels_.back(); }

 private:
  SacaModel() = default;

  struct Branch {
    Conv2dLayer reduce;
    GroupNormLayer reduce_gn;
    Conv2dLayer dilated;
    GroupNormLayer dilated_gn;
    SelfAttentionLayer attention;
    int dilation = 1;
  };
  struct FuseStage {
    Conv2dLayer project;
    Conv2dLayer conv;
    GroupNormLayer gn;
  };
  struct BackendBlock {
    Conv2dLayer conv;
    GroupNormLayer gn;
  };

  ModelConfig config_;
  ModelParameters params_;
  std::vector<Conv2dLayer> stem_;  // pools sit after convs 2, 4, 7
  std::vector<int> stem_channels_;
  Conv2dLayer pyramid_fuse_;
  GroupNormLayer pyramid_fuse_gn_;
  std::array<Branch, 3> branches_{};
  std::array<FuseStage, 2> fuse_stages_{};
  std::array<BackendBlock, 2> backend_{};
  Conv2dLayer output_;
};

// Per-image sums of a [B, 1, h, w] density prediction.
std::vector<double> predict_count(const Tensor& density);

void save_weights(const SacaModel& model, const std::string& path);
// Copies matching tensors from a CKWT file into the model. With
// partial=false every parameter must be present; unknown names and shape
// mismatches are always errors.
void load_weights(SacaModel& model, const std::string& path,
                  bool partial = false);

}  // namespace crowdkit
