#include "crowdkit/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "crowdkit/autograd.hpp"
#include "crowdkit/errors.hpp"
#include "crowdkit/format.hpp"
#include "crowdkit/ops.hpp"

namespace crowdkit {

Tensor euclidean_loss(const Tensor& pred, const Tensor& gt) {
  if (pred.shape() != gt.shape()) {
    throw ConfigError("euclidean_loss: shape mismatch " +
                      shape_str(pred.shape()) + " vs " + shape_str(gt.shape()));
  }
  Tensor diff = ops::sub(pred, gt);
  return ops::mean_all(ops::mul(diff, diff));
}

void AdamState::step(ModelParameters& params) {
  ++t_;
  const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (auto& [name, tensor] : params.map()) {
    auto& m = first_moment_[name];
    auto& v = second_moment_[name];
    if (m.empty()) m.assign(tensor.size(), 0.0);
    if (v.empty()) v.assign(tensor.size(), 0.0);
    if (m.size() != tensor.size()) {
      throw ConfigError("adam: moment size mismatch for '" + name + "'");
    }
    auto values = tensor.mutable_data();
    const bool has_grad = tensor.has_grad();
    const double* g = has_grad ? tensor.grad().data() : nullptr;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double gi = has_grad ? g[i] : 0.0;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      values[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

namespace {

Tensor pooled_ground_truth(const PreparedSample& sample, int out_h,
                           int out_w) {
  return density_to_tensor(sum_pool_to(sample.density, out_h, out_w));
}

void scale_grads(ModelParameters& params, double factor) {
  for (auto& [name, tensor] : params.map()) {
    if (!tensor.has_grad()) continue;
    for (double& g : tensor.mutable_grad()) g *= factor;
  }
}

void clip_grads(ModelParameters& params, double max_norm) {
  double norm_sq = 0.0;
  for (auto& [name, tensor] : params.map()) {
    if (!tensor.has_grad()) continue;
    for (double g : tensor.grad()) norm_sq += g * g;
  }
  const double norm = std::sqrt(norm_sq);
  if (norm <= max_norm || norm == 0.0) return;
  scale_grads(params, max_norm / norm);
}

}  // namespace

TrainResult train(SacaModel& model, const std::vector<PreparedSample>& dataset,
                  const TrainOptions& options) {
  if (dataset.empty()) throw ConfigError("train: empty dataset");
  if (options.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (options.epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (!options.checkpoint_dir.empty()) {
    std::filesystem::create_directories(options.checkpoint_dir);
  }

  TrainResult result;
  AdamState adam(options.adam);
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  int step = 0;
  bool stopped = false;
  for (int epoch = 0; epoch < options.epochs && !stopped; ++epoch) {
    deterministic_shuffle(order, rng);
    for (std::size_t begin = 0; begin < order.size() && !stopped;
         begin += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end =
          std::min(order.size(),
                   begin + static_cast<std::size_t>(options.batch_size));
      model.params().zero_grads();
      double batch_loss = 0.0;
      for (std::size_t s = begin; s < end; ++s) {
        const PreparedSample& sample = dataset[order[s]];
        Image image = sample.image;
        DensityMap density = sample.density;
        if (options.flip_prob > 0.0) {
          std::uniform_real_distribution<double> dist(0.0, 1.0);
          if (dist(rng) < options.flip_prob) {
            image = flip_horizontal(image);
            density = flip_horizontal(density);
          }
        }
        Tensor x = image_to_tensor(image);
        Tensor pred = model.forward(x);
        Tensor gt = density_to_tensor(
            sum_pool_to(density, pred.dim(2), pred.dim(3)));
        Tensor loss = euclidean_loss(pred, gt);
        loss.backward();
        batch_loss += loss.item();
      }
      const double denom = static_cast<double>(end - begin);
      batch_loss /= denom;
      if (denom > 1.0) scale_grads(model.params(), 1.0 / denom);
      if (!std::isfinite(batch_loss)) {
        throw Error("train: non-finite loss at step " +
                    std::to_string(step + 1) + "; aborting");
      }
      if (options.clip_norm > 0.0) clip_grads(model.params(), options.clip_norm);
      adam.step(model.params());
      ++step;
      result.log.push_back({step, batch_loss});
      if (options.max_steps > 0 && step >= options.max_steps) stopped = true;
    }
    const double epoch_mae = evaluate(model, dataset).mae;
    result.epoch_mae.push_back(epoch_mae);
    if (!options.checkpoint_dir.empty()) {
      const std::string path =
          (std::filesystem::path(options.checkpoint_dir) /
           ("checkpoint_epoch_" + std::to_string(epoch + 1) + ".ckwt"))
              .string();
      save_weights(model, path);
    }
    if (options.stop_mae >= 0.0 && epoch_mae < options.stop_mae) stopped = true;
  }
  result.steps_run = step;
  if (!options.log_path.empty()) {
    write_text_file(options.log_path, training_log_csv(result.log));
  }
  return result;
}

std::pair<double, double> mae_mse(const std::vector<double>& ground_truth,
                                  const std::vector<double>& predicted) {
  if (ground_truth.empty() || ground_truth.size() != predicted.size()) {
    throw ConfigError("mae_mse: count vectors must be non-empty and equal");
  }
  const double n = static_cast<double>(ground_truth.size());
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    const double e = std::fabs(ground_truth[i] - predicted[i]);
    abs_sum += e;
    sq_sum += e * e;
  }
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

EvalReport evaluate(const SacaModel& model,
                    const std::vector<PreparedSample>& dataset) {
  if (dataset.empty()) throw ConfigError("evaluate: empty dataset");
  autograd::NoGradGuard no_grad;
  EvalReport report;
  std::vector<double> gt;
  std::vector<double> pred;
  for (const PreparedSample& sample : dataset) {
    Tensor x = image_to_tensor(sample.image);
    Tensor density = model.forward(x);
    const double predicted = predict_count(density)[0];
    const double truth = static_cast<double>(sample.points.points.size());
    report.entries.push_back({sample.id, truth, predicted});
    gt.push_back(truth);
    pred.push_back(predicted);
  }
  auto [mae, mse] = mae_mse(gt, pred);
  report.mae = mae;
  report.mse = mse;
  return report;
}

std::string eval_report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["mae"] = report.mae;
  j["mse"] = report.mse;
  nlohmann::json entries = nlohmann::json::array();
  for (const EvalEntry& e : report.entries) {
    entries.push_back({{"image", e.id},
                       {"ground_truth", e.ground_truth},
                       {"predicted", e.predicted}});
  }
  j["images"] = entries;
  return j.dump(2) + "\n";
}

std::vector<BucketRow> per_bucket_errors(
    const EvalReport& report, const std::map<std::string, int>& buckets) {
  std::map<int, std::pair<std::vector<double>, std::vector<double>>> grouped;
  for (const EvalEntry& e : report.entries) {
    auto it = buckets.find(e.id);
    if (it == buckets.end()) continue;
    grouped[it->second].first.push_back(e.ground_truth);
    grouped[it->second].second.push_back(e.predicted);
  }
  std::vector<BucketRow> rows;
  for (const auto& [bucket, counts] : grouped) {
    auto [mae, mse] = mae_mse(counts.first, counts.second);
    rows.push_back({bucket, static_cast<int>(counts.first.size()), mae, mse});
  }
  return rows;
}

std::string training_log_csv(const std::vector<TrainLogEntry>& log) {
  std::ostringstream out;
  out << "step,loss\n";
  for (const TrainLogEntry& entry : log) {
    out << entry.step << "," << format_real(entry.loss) << "\n";
  }
  return out.str();
}

}  // namespace crowdkit
