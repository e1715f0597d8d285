#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crowdkit/dataset.hpp"
#include "crowdkit/model.hpp"
#include "crowdkit/tensor.hpp"

namespace crowdkit {

// Mean squared pixel error (1/N) * sum((pred - gt)^2), N = element count.
Tensor euclidean_loss(const Tensor& pred, const Tensor& gt);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over named parameters. Moment buffers are keyed by
// parameter name and created lazily.
class AdamState {
 public:
  explicit AdamState(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  std::int64_t step_count() const { return t_; }

  // One update from the gradients currently stored on the parameters.
  // Parameters without a gradient are treated as zero-gradient.
  void step(ModelParameters& params);

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::map<std::string, std::vector<double>> first_moment_;
  std::map<std::string, std::vector<double>> second_moment_;
};

struct TrainOptions {
  int epochs = 1;
  int batch_size = 1;
  std::uint64_t seed = 0;
  AdamConfig adam{};
  int max_steps = 0;        // 0 = no cap
  double stop_mae = -1.0;   // early stop when epoch MAE drops below; <0 off
  double flip_prob = 0.0;
  double clip_norm = 0.0;   // 0 = no gradient clipping
  std::string checkpoint_dir;  // empty = no checkpoints
  std::string log_path;        // empty = no CSV log
};

struct TrainLogEntry {
  int step = 0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<TrainLogEntry> log;
  std::vector<double> epoch_mae;
  int steps_run = 0;
};

// Per step: forward, mass-preserving GT pooling to the stride-8 grid,
// Euclidean loss, backward, Adam. Deterministic given the seed. A
// non-finite loss aborts with the failing step in the message.
TrainResult train(SacaModel& model, const std::vector<PreparedSample>& dataset,
                  const TrainOptions& options);

struct EvalEntry {
  std::string id;
  double ground_truth = 0.0;
  double predicted = 0.0;
};

struct EvalReport {
  std::vector<EvalEntry> entries;
  double mae = 0.0;
  double mse = 0.0;  // root of the mean squared count error
};

EvalReport evaluate(const SacaModel& model,
                    const std::vector<PreparedSample>& dataset);

// MAE/MSE from count pairs; shared by evaluate and the report tooling.
std::pair<double, double> mae_mse(const std::vector<double>& ground_truth,
                                  const std::vector<double>& predicted);

std::string eval_report_to_json(const EvalReport& report);

// Per-bucket MAE/MSE rows: bucket id -> (count, mae, mse).
struct BucketRow {
  int bucket = 0;
  int images = 0;
  double mae = 0.0;
  double mse = 0.0;
};
std::vector<BucketRow> per_bucket_errors(
    const EvalReport& report, const std::map<std::string, int>& buckets);

std::string training_log_csv(const std::vector<TrainLogEntry>& log);

}  // namespace crowdkit
