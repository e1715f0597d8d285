// crowdkit command line: annotation conversion, density-map generation,
// dataset statistics and bucketing, splitting, training, evaluation and
// rendering. Every subcommand takes all randomness from a single --seed.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crowdkit/annotations.hpp"
#include "crowdkit/dataset.hpp"
#include "crowdkit/density.hpp"
#include "crowdkit/errors.hpp"
#include "crowdkit/format.hpp"
#include "crowdkit/image.hpp"
#include "crowdkit/model.hpp"
#include "crowdkit/stats.hpp"
#include "crowdkit/synth.hpp"
#include "crowdkit/train.hpp"

namespace fs = std::filesystem;
using namespace crowdkit;

namespace {

struct GtFlags {
  std::string mode = "fixed";
  double sigma = 15.0;
  double beta = 0.3;
  int k = 3;

  GtOptions options() const {
    GtOptions gt;
    if (mode == "fixed") {
      gt.mode = GtOptions::Mode::fixed;
    } else if (mode == "adaptive") {
      gt.mode = GtOptions::Mode::adaptive;
    } else {
      throw ConfigError("unknown ground-truth mode '" + mode + "'");
    }
    gt.sigma = sigma;
    gt.beta = beta;
    gt.k = k;
    return gt;
  }
};

void add_gt_flags(CLI::App* cmd, GtFlags& flags) {
  cmd->add_option("--gt", flags.mode, "Ground-truth kernel: fixed|adaptive")
      ->default_val("fixed");
  cmd->add_option("--sigma", flags.sigma, "Fixed kernel sigma (px)")
      ->default_val(15.0);
  cmd->add_option("--beta", flags.beta, "Adaptive kernel beta")
      ->default_val(0.3);
  cmd->add_option("--k", flags.k, "Adaptive kernel neighbor count")
      ->default_val(3);
}

ModelConfig resolve_config(const std::string& config_path,
                           const std::string& channel_scale,
                           std::uint64_t seed) {
  ModelConfig config;
  if (!config_path.empty()) {
    config = ModelConfig::load(config_path);
  } else {
    config.channel_scale = Rational::parse(channel_scale);
  }
  config.seed = seed;
  config.validate();
  return config;
}

// Sorted annotation files of a directory (or the single file itself).
std::vector<fs::path> annotation_files(const std::string& ann_path) {
  std::vector<fs::path> files;
  if (fs::is_directory(ann_path)) {
    for (const auto& entry : fs::directory_iterator(ann_path)) {
      if (entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::exists(ann_path)) {
    files.push_back(ann_path);
  } else {
    throw IoError("annotation path does not exist: " + ann_path);
  }
  if (files.empty()) {
    throw ConfigError("no .csv annotation files under " + ann_path);
  }
  return files;
}

int run_convert(const std::string& mode, const std::string& in,
                const std::string& out) {
  const CategoryGroup group = category_group_from_string(mode);
  const auto records = parse_annotations(in);
  write_points_csv(out, convert_group(records, group));
  std::cout << "wrote " << out << "\n";
  return 0;
}

int run_density(const std::string& points_path, const std::string& image_path,
                int height, int width, const GtFlags& gt_flags,
                const std::string& out, const std::string& pgm) {
  PointSet points = read_points_csv(points_path);
  if (!image_path.empty()) {
    Image image = read_netpbm(image_path);
    points.height = image.height;
    points.width = image.width;
  } else {
    points.height = height;
    points.width = width;
  }
  if (points.height <= 0 || points.width <= 0) {
    throw ConfigError("density needs --image or positive --height/--width");
  }
  const DensityMap map = build_ground_truth(points, gt_flags.options());
  write_ckdm(out, map);
  if (!pgm.empty()) write_density_pgm(pgm, map);
  std::cout << "points " << points.points.size() << " total_mass "
            << format_real(map.total_mass()) << "\n";
  return 0;
}

int run_split(const std::string& images_dir, const std::string& ann_dir,
              const std::string& mode, int min_count,
              const std::string& ratios_text, std::uint64_t seed,
              const std::string& out) {
  const CategoryGroup group = category_group_from_string(mode);
  const auto parts = split_csv_line(ratios_text);
  if (parts.size() != 3) {
    throw ConfigError("--ratios needs three comma-separated values");
  }
  SplitRatios ratios;
  ratios.train = parse_real(parts[0], "--ratios");
  ratios.val = parse_real(parts[1], "--ratios");
  ratios.test = parse_real(parts[2], "--ratios");

  std::vector<std::pair<std::string, int>> counts;
  for (const auto& entry : fs::directory_iterator(images_dir)) {
    const auto ext = entry.path().extension();
    if (ext != ".ppm" && ext != ".pgm") continue;
    const std::string ann_path =
        annotation_path_for_image(ann_dir, entry.path().filename().string());
    const auto records = parse_annotations(ann_path);
    const PointSet points = convert_group(records, group);
    counts.emplace_back(entry.path().filename().string(),
                        static_cast<int>(points.points.size()));
  }
  if (counts.empty()) {
    throw ConfigError("no .ppm/.pgm images under " + images_dir);
  }
  const auto manifest = filter_and_split(counts, min_count, ratios, seed);
  write_manifest(out, manifest);
  int train = 0, val = 0, test = 0;
  for (const auto& e : manifest) {
    (e.split == Split::train ? train : e.split == Split::val ? val : test)++;
  }
  std::cout << "kept " << manifest.size() << " samples: train " << train
            << ", val " << val << ", test " << test << "\n";
  return 0;
}

int run_stats(const std::string& ann_path, const std::string& mode,
              const std::string& out_dir, std::uint64_t seed) {
  const CategoryGroup group = category_group_from_string(mode);
  const auto files = annotation_files(ann_path);
  fs::create_directories(out_dir);
  std::vector<CrowdStatsReport> reports;
  for (const auto& file : files) {
    const auto records = parse_annotations(file.string());
    const std::string image_name = file.stem().string() + ".ppm";
    CrowdStatsReport report = analyze_image(image_name, records, group, seed);
    write_text_file((fs::path(out_dir) / (file.stem().string() + ".json")).string(),
                    report_to_json(report));
    reports.push_back(std::move(report));
  }
  write_text_file((fs::path(out_dir) / "summary.csv").string(),
                  summary_csv(reports));
  std::cout << "analyzed " << reports.size() << " image(s) into " << out_dir
            << "\n";
  return 0;
}

int run_buckets(const std::string& summary_path, const std::string& out_dir) {
  std::istringstream in(read_text_file(summary_path));
  std::string line;
  if (!std::getline(in, line) || line.rfind("image_path,", 0) != 0) {
    throw ParseError(summary_path + ": expected a stats summary CSV header");
  }
  std::map<int, std::vector<std::string>> by_cv;
  std::map<int, std::vector<std::string>> by_dvi;
  int line_no = 1;
  int rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 6) {
      throw ParseError(summary_path + ":" + std::to_string(line_no) +
                       ": expected 6 columns");
    }
    ++rows;
    by_cv[static_cast<int>(parse_integer(fields[3], "cv_bucket"))].push_back(
        fields[0]);
    if (fields[5] != "NA") {
      by_dvi[static_cast<int>(parse_integer(fields[5], "dvi_bucket"))]
          .push_back(fields[0]);
    }
  }
  if (rows == 0) throw ConfigError(summary_path + ": no data rows");
  fs::create_directories(out_dir);
  auto write_group = [&](const char* prefix, int levels,
                         const std::map<int, std::vector<std::string>>& groups) {
    for (int level = 0; level < levels; ++level) {
      std::ostringstream body;
      body << "image_path\n";
      auto it = groups.find(level);
      if (it != groups.end()) {
        for (const auto& path : it->second) body << path << "\n";
      }
      write_text_file((fs::path(out_dir) / (std::string(prefix) + "_" +
                                            std::to_string(level) + ".csv"))
                          .string(),
                      body.str());
      std::cout << prefix << " " << level << ": "
                << (it == groups.end() ? 0 : it->second.size()) << " image(s)\n";
    }
  };
  write_group("cv_bucket", 5, by_cv);
  write_group("dvi_bucket", 4, by_dvi);
  return 0;
}

int run_synth(const std::string& out_dir, int count, int min_points,
              int max_points, const std::string& regime, std::uint64_t seed,
              int height, int width) {
  SynthOptions options;
  options.count = count;
  options.min_points = min_points;
  options.max_points = max_points;
  options.regime = synth_regime_from_string(regime);
  options.seed = seed;
  options.height = height;
  options.width = width;
  make_synthetic(out_dir, options);
  std::cout << "generated " << count << " image(s) under " << out_dir << "\n";
  return 0;
}

int run_train(const std::string& manifest, const std::string& images_dir,
              const std::string& ann_dir, const std::string& mode,
              const GtFlags& gt_flags, const std::string& config_path,
              const std::string& channel_scale, int epochs, int batch,
              std::uint64_t seed, double lr, int max_steps, double stop_mae,
              double flip_prob, double clip_norm, const std::string& out_dir,
              const std::string& init_weights, bool partial_load) {
  LoadOptions load;
  load.group = category_group_from_string(mode);
  load.gt = gt_flags.options();
  ModelConfig config = resolve_config(config_path, channel_scale, seed);

  const auto samples = load_prepared_samples(manifest, images_dir, ann_dir,
                                             Split::train, load);
  SacaModel model = SacaModel::build(config);
  if (!init_weights.empty()) load_weights(model, init_weights, partial_load);

  fs::create_directories(out_dir);
  TrainOptions options;
  options.epochs = epochs;
  options.batch_size = batch;
  options.seed = seed;
  options.adam.lr = lr;
  options.max_steps = max_steps;
  options.stop_mae = stop_mae;
  options.flip_prob = flip_prob;
  options.clip_norm = clip_norm;
  options.checkpoint_dir = (fs::path(out_dir) / "checkpoints").string();
  options.log_path = (fs::path(out_dir) / "train_log.csv").string();
  const TrainResult result = train(model, samples, options);

  config.save((fs::path(out_dir) / "model.cfg").string());
  save_weights(model, (fs::path(out_dir) / "model.ckwt").string());
  std::cout << "trained " << result.steps_run << " step(s) on "
            << samples.size() << " sample(s)";
  if (!result.epoch_mae.empty()) {
    std::cout << "; final training MAE "
              << format_real(result.epoch_mae.back());
  }
  std::cout << "\n";
  return 0;
}

int run_eval(const std::string& manifest, const std::string& split_name,
             const std::string& images_dir, const std::string& ann_dir,
             const std::string& mode, const GtFlags& gt_flags,
             const std::string& weights, const std::string& config_path,
             const std::string& channel_scale, std::uint64_t seed,
             const std::string& out, bool per_bucket) {
  LoadOptions load;
  load.group = category_group_from_string(mode);
  load.gt = gt_flags.options();
  const Split split = split_from_string(split_name);
  const auto samples =
      load_prepared_samples(manifest, images_dir, ann_dir, split, load);
  ModelConfig config = resolve_config(config_path, channel_scale, seed);
  SacaModel model = SacaModel::build(config);
  load_weights(model, weights);

  EvalReport report = evaluate(model, samples);
  nlohmann::json j = nlohmann::json::parse(eval_report_to_json(report));

  if (per_bucket) {
    std::map<std::string, int> cv_buckets;
    std::map<std::string, int> dvi_buckets;
    for (const EvalEntry& entry : report.entries) {
      const auto records = parse_annotations(
          annotation_path_for_image(ann_dir, entry.id));
      const CrowdStatsReport stats =
          analyze_image(entry.id, records, load.group, seed);
      cv_buckets[entry.id] = stats.cv_bucket;
      if (stats.dvi_bucket) dvi_buckets[entry.id] = *stats.dvi_bucket;
    }
    auto table = [&](const char* title,
                     const std::map<std::string, int>& buckets) {
      nlohmann::json rows = nlohmann::json::array();
      std::printf("%s  images      MAE      MSE\n", title);
      for (const BucketRow& row : per_bucket_errors(report, buckets)) {
        std::printf("%9d  %6d  %7.3f  %7.3f\n", row.bucket, row.images,
                    row.mae, row.mse);
        rows.push_back({{"bucket", row.bucket},
                        {"images", row.images},
                        {"mae", row.mae},
                        {"mse", row.mse}});
      }
      return rows;
    };
    j["cv_buckets"] = table("cv_bucket", cv_buckets);
    j["dvi_buckets"] = table("dvi_bucket", dvi_buckets);
  }
  write_text_file(out, j.dump(2) + "\n");
  std::cout << "MAE " << format_real(report.mae) << " MSE "
            << format_real(report.mse) << " over " << report.entries.size()
            << " image(s)\n";
  return 0;
}

int run_render(const std::string& in, const std::string& out) {
  const DensityMap map = read_ckdm(in);
  write_density_pgm(out, map);
  std::cout << map.width << "x" << map.height << " map, total_mass "
            << format_real(map.total_mass()) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crowd counting toolkit"};
  app.require_subcommand(1);

  // convert
  auto* convert = app.add_subcommand(
      "convert", "Convert detection boxes to counting points");
  std::string convert_mode, convert_in, convert_out;
  convert->add_option("--mode", convert_mode, "people|vehicle")->required();
  convert->add_option("--in", convert_in, "Annotation CSV")->required();
  convert->add_option("--out", convert_out, "Points CSV")->required();

  // density
  auto* density = app.add_subcommand(
      "density", "Rasterize points into a ground-truth density map");
  std::string density_points, density_image, density_out, density_pgm;
  int density_h = 0, density_w = 0;
  GtFlags density_gt;
  density->add_option("--points", density_points, "Points CSV")->required();
  density->add_option("--image", density_image,
                      "Image whose extents set the map size");
  density->add_option("--height", density_h, "Map height (px)");
  density->add_option("--width", density_w, "Map width (px)");
  add_gt_flags(density, density_gt);
  density->add_option("--out", density_out, "Output CKDM file")->required();
  density->add_option("--pgm", density_pgm, "Optional PGM rendering");

  // split
  auto* split = app.add_subcommand(
      "split", "Filter by min count and assign train/val/test splits");
  std::string split_images, split_ann, split_mode, split_ratios = "0.8,0.1,0.1";
  std::string split_out;
  int split_min = 10;
  std::uint64_t split_seed = 0;
  split->add_option("--images-dir", split_images)->required();
  split->add_option("--ann-dir", split_ann)->required();
  split->add_option("--mode", split_mode, "people|vehicle")->required();
  split->add_option("--min-count", split_min)->default_val(10);
  split->add_option("--ratios", split_ratios, "train,val,test");
  split->add_option("--seed", split_seed)->default_val(0);
  split->add_option("--out", split_out, "Manifest CSV")->required();

  // stats
  auto* stats = app.add_subcommand(
      "stats", "Per-image scale/CV and distance/DVI analysis");
  std::string stats_ann, stats_mode, stats_out;
  std::uint64_t stats_seed = 0;
  stats->add_option("--ann", stats_ann, "Annotation CSV file or directory")
      ->required();
  stats->add_option("--mode", stats_mode, "people|vehicle")->required();
  stats->add_option("--out-dir", stats_out)->required();
  stats->add_option("--seed", stats_seed)->default_val(0);

  // buckets
  auto* buckets = app.add_subcommand(
      "buckets", "Split a stats summary into CV/DVI bucket manifests");
  std::string buckets_summary, buckets_out;
  buckets->add_option("--summary", buckets_summary, "summary.csv from stats")
      ->required();
  buckets->add_option("--out-dir", buckets_out)->required();

  // synth
  auto* synth = app.add_subcommand(
      "synth", "Generate a synthetic dataset (images + annotations)");
  std::string synth_out, synth_regime = "mixed";
  int synth_count = 20, synth_min = 5, synth_max = 30;
  int synth_h = 64, synth_w = 64;
  std::uint64_t synth_seed = 0;
  synth->add_option("--out-dir", synth_out)->required();
  synth->add_option("--count", synth_count)->default_val(20);
  synth->add_option("--min-points", synth_min)->default_val(5);
  synth->add_option("--max-points", synth_max)->default_val(30);
  synth->add_option("--regime", synth_regime, "scale-var|isolated|mixed");
  synth->add_option("--seed", synth_seed)->default_val(0);
  synth->add_option("--height", synth_h)->default_val(64);
  synth->add_option("--width", synth_w)->default_val(64);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train on a manifest split");
  std::string train_manifest, train_images, train_ann, train_mode;
  std::string train_config, train_scale = "1/8", train_out, train_init;
  GtFlags train_gt;
  int train_epochs = 25, train_batch = 1, train_max_steps = 0;
  double train_lr = 1e-4, train_stop_mae = -1.0, train_flip = 0.0,
         train_clip = 0.0;
  std::uint64_t train_seed = 0;
  bool train_partial = false;
  train_cmd->add_option("--manifest", train_manifest)->required();
  train_cmd->add_option("--images-dir", train_images)->required();
  train_cmd->add_option("--ann-dir", train_ann)->required();
  train_cmd->add_option("--mode", train_mode, "people|vehicle")->required();
  add_gt_flags(train_cmd, train_gt);
  train_cmd->add_option("--config", train_config, "Model config file");
  train_cmd->add_option("--channel-scale", train_scale,
                        "Channel scale when no --config is given");
  train_cmd->add_option("--epochs", train_epochs)->default_val(25);
  train_cmd->add_option("--batch", train_batch)->default_val(1);
  train_cmd->add_option("--seed", train_seed)->default_val(0);
  train_cmd->add_option("--lr", train_lr)->default_val(1e-4);
  train_cmd->add_option("--max-steps", train_max_steps)->default_val(0);
  train_cmd->add_option("--stop-mae", train_stop_mae)->default_val(-1.0);
  train_cmd->add_option("--flip-prob", train_flip)->default_val(0.0);
  train_cmd->add_option("--clip-norm", train_clip)->default_val(0.0);
  train_cmd->add_option("--out-dir", train_out)->required();
  train_cmd->add_option("--init-weights", train_init, "CKWT warm start");
  train_cmd->add_flag("--partial-load", train_partial,
                      "Allow the warm start to cover a parameter subset");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate MAE/MSE on a split");
  std::string eval_manifest, eval_split = "test", eval_images, eval_ann;
  std::string eval_mode, eval_weights, eval_config, eval_scale = "1/8";
  std::string eval_out;
  GtFlags eval_gt;
  std::uint64_t eval_seed = 0;
  bool eval_buckets = false;
  eval_cmd->add_option("--manifest", eval_manifest)->required();
  eval_cmd->add_option("--split", eval_split, "train|val|test");
  eval_cmd->add_option("--images-dir", eval_images)->required();
  eval_cmd->add_option("--ann-dir", eval_ann)->required();
  eval_cmd->add_option("--mode", eval_mode, "people|vehicle")->required();
  add_gt_flags(eval_cmd, eval_gt);
  eval_cmd->add_option("--weights", eval_weights)->required();
  eval_cmd->add_option("--config", eval_config, "Model config file");
  eval_cmd->add_option("--channel-scale", eval_scale,
                       "Channel scale when no --config is given");
  eval_cmd->add_option("--seed", eval_seed)->default_val(0);
  eval_cmd->add_option("--out", eval_out, "Report JSON")->required();
  eval_cmd->add_flag("--per-bucket", eval_buckets,
                     "Group errors by CV/DVI bucket");

  // render
  auto* render = app.add_subcommand("render", "Render a CKDM map to PGM");
  std::string render_in, render_out;
  render->add_option("--in", render_in, "CKDM file")->required();
  render->add_option("--out", render_out, "PGM file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n"
              << "usage: crowdkit <subcommand> --help\n";
    return 1;
  }

  try {
    if (*convert) return run_convert(convert_mode, convert_in, convert_out);
    if (*density) {
      return run_density(density_points, density_image, density_h, density_w,
                         density_gt, density_out, density_pgm);
    }
    if (*split) {
      return run_split(split_images, split_ann, split_mode, split_min,
                       split_ratios, split_seed, split_out);
    }
    if (*stats) return run_stats(stats_ann, stats_mode, stats_out, stats_seed);
    if (*buckets) return run_buckets(buckets_summary, buckets_out);
    if (*synth) {
      return run_synth(synth_out, synth_count, synth_min, synth_max,
                       synth_regime, synth_seed, synth_h, synth_w);
    }
    if (*train_cmd) {
      return run_train(train_manifest, train_images, train_ann, train_mode,
                       train_gt, train_config, train_scale, train_epochs,
                       train_batch, train_seed, train_lr, train_max_steps,
                       train_stop_mae, train_flip, train_clip, train_out,
                       train_init, train_partial);
    }
    if (*eval_cmd) {
      return run_eval(eval_manifest, eval_split, eval_images, eval_ann,
                      eval_mode, eval_gt, eval_weights, eval_config,
                      eval_scale, eval_seed, eval_out, eval_buckets);
    }
    if (*render) return run_render(render_in, render_out);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
