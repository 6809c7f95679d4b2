#include "graspvq/config.hpp"

#include <cstdlib>
#include <fstream>

namespace graspvq {

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("experiment config: " + msg); };
  network.validate();
  if (dataset.kind != "synthetic" && dataset.kind != "synthetic-dir" && dataset.kind != "cornell")
    fail("dataset.kind must be synthetic, synthetic-dir or cornell");
  if (dataset.kind == "synthetic" && dataset.synthetic_count < 1) fail("dataset.synthetic_count must be positive");
  if (dataset.kind == "synthetic" && network.input_channels != 1)
    fail("synthetic images are grayscale; set network.input_channels to 1");
  if (dataset.kind == "cornell" && network.input_channels != 3)
    fail("cornell images are RGB; set network.input_channels to 3");
  if (dataset.kind != "synthetic" && resolve_data_path(dataset).empty())
    fail("dataset.path is empty and GRASPVQ_DATA is not set");
  if (!(labelled_ratio > 0.0 && labelled_ratio <= 1.0)) fail("labelled_ratio must be in (0, 1]");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail("test_fraction must be in (0, 1)");
  if (seeds.empty()) fail("seeds must not be empty");
  if (vqvae_epochs < 0 || grasp_epochs < 0) fail("epochs must be non-negative");
  if (batch_size < 1) fail("batch_size must be positive");
  if (!(width_scale > 0.0)) fail("width_scale must be positive");
  for (double r : ratios)
    if (!(r > 0.0 && r <= 1.0)) fail("ratios must lie in (0, 1]");
  for (const auto& m : methods)
    if (m != "proposed" && m != "baseline") fail("unknown method '" + m + "'");
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"dataset",
           {{"kind", dataset.kind},
            {"path", dataset.path},
            {"synthetic_count", dataset.synthetic_count},
            {"synthetic_seed", dataset.synthetic_seed},
            {"object_wise", dataset.object_wise}}},
          {"network", network.to_json()},
          {"optimizer", optimizer.to_json()},
          {"labelled_ratio", labelled_ratio},
          {"test_fraction", test_fraction},
          {"seeds", seeds},
          {"vqvae_epochs", vqvae_epochs},
          {"grasp_epochs", grasp_epochs},
          {"batch_size", batch_size},
          {"width_scale", width_scale},
          {"augment", augment},
          {"output_dir", output_dir.string()},
          {"ratios", ratios},
          {"methods", methods}};
}

namespace {

void reject_unknown(const nlohmann::json& j, const nlohmann::json& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename Field>
void read(const nlohmann::json& j, const char* key, Field& field) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(field);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  const auto known = c.to_json();
  reject_unknown(j, known, "experiment config");
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    reject_unknown(d, known.at("dataset"), "dataset");
    read(d, "kind", c.dataset.kind);
    read(d, "path", c.dataset.path);
    read(d, "synthetic_count", c.dataset.synthetic_count);
    read(d, "synthetic_seed", c.dataset.synthetic_seed);
    read(d, "object_wise", c.dataset.object_wise);
  }
  if (j.contains("network")) c.network = NetworkConfig::from_json(j.at("network"));
  if (j.contains("optimizer")) {
    try {
      c.optimizer = OptimizerConfig::from_json(j.at("optimizer"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  read(j, "labelled_ratio", c.labelled_ratio);
  read(j, "test_fraction", c.test_fraction);
  read(j, "seeds", c.seeds);
  read(j, "vqvae_epochs", c.vqvae_epochs);
  read(j, "grasp_epochs", c.grasp_epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "width_scale", c.width_scale);
  read(j, "augment", c.augment);
  std::string out = c.output_dir.string();
  read(j, "output_dir", out);
  c.output_dir = out;
  read(j, "ratios", c.ratios);
  read(j, "methods", c.methods);
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::string resolve_data_path(const DatasetSpec& spec) {
  if (!spec.path.empty()) return spec.path;
  if (const char* env = std::getenv("GRASPVQ_DATA")) return env;
  return {};
}

std::vector<Sample> load_dataset(const ExperimentConfig& config) {
  const auto& d = config.dataset;
  const int size = config.network.input_size;
  std::vector<Sample> samples;
  if (d.kind == "synthetic") {
    samples = synth_generate(d.synthetic_count, size, d.synthetic_seed);
  } else if (d.kind == "synthetic-dir") {
    samples = read_synthetic(resolve_data_path(d));
  } else {
    samples = load_cornell(resolve_data_path(d), size);
  }
  if (samples.empty()) throw DatasetError("dataset is empty");
  for (const auto& s : samples) {
    if (s.channels() != config.network.input_channels || s.height() != size || s.width() != size)
      throw DatasetError("sample " + s.source_id() + " is " + std::to_string(s.channels()) + "x" +
                         std::to_string(s.height()) + "x" + std::to_string(s.width()) + ", network expects " +
                         std::to_string(config.network.input_channels) + "x" + std::to_string(size) + "x" +
                         std::to_string(size));
  }
  return samples;
}

DatasetSplit make_split(const std::vector<Sample>& samples, const ExperimentConfig& config, double labelled_ratio,
                        std::uint64_t seed) {
  SplitOptions opts;
  if (config.dataset.object_wise) {
    // Approximate object grouping: consecutive ids pcdNNN0..pcdNNN9 stay together.
    opts.group_key = [](const Sample& s) { return s.source_id().substr(0, s.source_id().size() - 1); };
  }
  return split(samples, config.test_fraction, labelled_ratio, seed, opts);
}

}  // namespace graspvq
