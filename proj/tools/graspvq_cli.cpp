#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "graspvq/checkpoint.hpp"
#include "graspvq/config.hpp"
#include "graspvq/evaluation.hpp"
#include "graspvq/sweep.hpp"
#include "graspvq/training.hpp"

namespace fs = std::filesystem;
using namespace graspvq;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "experiment config (JSON)");
  cmd->add_option("--seed", c.seed, "overrides the config seeds with this one");
  cmd->add_option("--out", c.out, "output directory (default: config output_dir)");
  cmd->add_flag("--quiet", c.quiet, "no per-epoch log");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(c.config_path);
  if (c.seed) cfg.seeds = {*c.seed};
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (cfg.dataset.kind != "synthetic" && cfg.dataset.path.empty()) cfg.dataset.path = resolve_data_path(cfg.dataset);
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  return cfg;
}

void write_run_json(const ExperimentConfig& cfg, const std::string& command, const nlohmann::json& extra = {}) {
  nlohmann::json run = {{"command", command}, {"config", cfg.to_json()}};
  if (!extra.is_null()) run["details"] = extra;
  std::ofstream(cfg.output_dir / "run.json") << run.dump(2) << '\n';
}

std::function<void(const std::string&)> logger(const Common& c) {
  if (c.quiet) return {};
  return [](const std::string& line) { std::cerr << line << '\n'; };
}

TrainOptions options(const ExperimentConfig& cfg, const Common& c, const char* sub) {
  TrainOptions o;
  o.seed = cfg.seeds.front();
  o.checkpoint_dir = cfg.output_dir / sub;
  o.log = logger(c);
  return o;
}

void write_json(const fs::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised grasp detection with a VQ-VAE bottleneck"};
  app.require_subcommand(1);

  Common vq_c, grasp_c, base_c, eval_c, sweep_c;
  std::string vqvae_ckpt, eval_ckpt, predict_ckpt, predict_image, predict_out;
  std::optional<double> predict_width_scale;
  int synth_count = 300, synth_size = 64;
  std::uint64_t synth_seed = 0;
  std::string synth_out;

  auto* vq = app.add_subcommand("train-vqvae", "train encoder, codebook and decoder on training images");
  add_common(vq, vq_c);
  auto* grasp = app.add_subcommand("train-grasp", "train the grasp head on a frozen VQ-VAE");
  add_common(grasp, grasp_c);
  grasp->add_option("--vqvae", vqvae_ckpt, "VQ-VAE checkpoint directory")->required();
  auto* base = app.add_subcommand("train-baseline", "train the supervised-only baseline");
  add_common(base, base_c);
  auto* eval = app.add_subcommand("evaluate", "test accuracy of a grasp or baseline checkpoint");
  add_common(eval, eval_c);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint directory")->required();
  auto* pred = app.add_subcommand("predict", "grasp maps and decoded grasp for one image");
  pred->add_option("--checkpoint", predict_ckpt, "checkpoint directory")->required();
  pred->add_option("--image", predict_image, "input image")->required();
  pred->add_option("--out", predict_out, "output directory")->required();
  pred->add_option("--width-scale", predict_width_scale, "pixels per unit of the width map");
  auto* sweep = app.add_subcommand("sweep", "labelled-ratio sweep of both methods, writes metrics.csv");
  add_common(sweep, sweep_c);
  auto* synth = app.add_subcommand("synth-data", "write a synthetic dataset directory");
  synth->add_option("--count", synth_count, "number of images");
  synth->add_option("--size", synth_size, "image side in pixels");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*vq) {
      auto cfg = resolve(vq_c);
      auto split = make_split(load_dataset(cfg), cfg, cfg.labelled_ratio, cfg.seeds.front());
      auto r = train_vqvae(split, cfg, options(cfg, vq_c, "vqvae"));
      nlohmann::json hist = nlohmann::json::array();
      for (const auto& e : r.history)
        hist.push_back({{"epoch", e.epoch}, {"reconstruction", e.reconstruction}, {"codebook", e.codebook},
                        {"commitment", e.commitment}, {"total", e.total}, {"perplexity", e.perplexity}});
      write_json(cfg.output_dir / "vqvae_history.json",
                 {{"initial_reconstruction", r.initial_reconstruction},
                  {"kl_constant", kl_constant(cfg.network.codebook_size)},
                  {"epochs", hist}});
      write_run_json(cfg, "train-vqvae", {{"checkpoint", (cfg.output_dir / "vqvae").string()}});
    } else if (*grasp) {
      auto cfg = resolve(grasp_c);
      auto split = make_split(load_dataset(cfg), cfg, cfg.labelled_ratio, cfg.seeds.front());
      auto model = load_vqvae(vqvae_ckpt, cfg.network);
      auto r = train_grasp(split, *model, cfg, options(cfg, grasp_c, "grasp"));
      nlohmann::json hist = nlohmann::json::array();
      for (const auto& e : r.history) hist.push_back({{"epoch", e.epoch}, {"loss", e.loss}});
      write_json(cfg.output_dir / "grasp_history.json", {{"initial_loss", r.initial_loss}, {"epochs", hist}});
      write_run_json(cfg, "train-grasp", {{"vqvae", vqvae_ckpt}, {"checkpoint", (cfg.output_dir / "grasp").string()}});
    } else if (*base) {
      auto cfg = resolve(base_c);
      auto split = make_split(load_dataset(cfg), cfg, cfg.labelled_ratio, cfg.seeds.front());
      auto r = train_baseline(split, cfg, options(cfg, base_c, "baseline"));
      nlohmann::json hist = nlohmann::json::array();
      for (const auto& e : r.history) hist.push_back({{"epoch", e.epoch}, {"loss", e.loss}});
      write_json(cfg.output_dir / "baseline_history.json", {{"initial_loss", r.initial_loss}, {"epochs", hist}});
      write_run_json(cfg, "train-baseline", {{"checkpoint", (cfg.output_dir / "baseline").string()}});
    } else if (*eval) {
      auto cfg = resolve(eval_c);
      auto split = make_split(load_dataset(cfg), cfg, cfg.labelled_ratio, cfg.seeds.front());
      auto predictor = load_predictor(eval_ckpt);
      auto m = evaluate(*predictor, split.test, cfg.width_scale);
      m.labelled_ratio = cfg.labelled_ratio;
      m.seed = cfg.seeds.front();
      m.method = read_manifest(eval_ckpt).at("metadata").at("phase") == "grasp" ? "proposed" : "baseline";
      write_json(cfg.output_dir / "metrics.json", m.to_json());
      write_run_json(cfg, "evaluate", {{"checkpoint", eval_ckpt}});
      std::cout << m.to_json().dump() << '\n';
    } else if (*pred) {
      auto predictor = load_predictor(predict_ckpt);
      const double ws = predict_width_scale.value_or(kDefaultWidthScale);
      auto out = predict(*predictor, predict_image, predict_out, ws);
      write_json(fs::path(predict_out) / "run.json",
                 {{"command", "predict"}, {"checkpoint", predict_ckpt}, {"image", predict_image}, {"width_scale", ws}});
      std::cout << out.json.dump() << '\n';
    } else if (*sweep) {
      auto cfg = resolve(sweep_c);
      auto samples = load_dataset(cfg);
      auto rows = run_sweep(cfg, samples, logger(sweep_c));
      std::ofstream csv(cfg.output_dir / "metrics.csv");
      write_metrics_csv(csv, rows);
      nlohmann::json all = nlohmann::json::array();
      for (const auto& r : rows) all.push_back(r.to_json());
      write_json(cfg.output_dir / "metrics.json", all);
      write_run_json(cfg, "sweep");
      write_metrics_csv(std::cout, rows);
    } else if (*synth) {
      auto samples = synth_generate_detailed(synth_count, synth_size, synth_seed);
      write_synthetic(synth_out, samples);
      write_json(fs::path(synth_out) / "run.json",
                 {{"command", "synth-data"}, {"count", synth_count}, {"size", synth_size}, {"seed", synth_seed}});
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
