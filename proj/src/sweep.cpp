#include "graspvq/sweep.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "graspvq/training.hpp"

namespace graspvq {
namespace {

std::vector<double> curve(const std::vector<VqEpoch>& h) {
  std::vector<double> out;
  for (const auto& e : h) out.push_back(e.total);
  return out;
}

std::vector<double> curve(const std::vector<GraspEpoch>& h) {
  std::vector<double> out;
  for (const auto& e : h) out.push_back(e.loss);
  return out;
}

std::vector<std::string> train_ids(const DatasetSplit& s) {
  std::vector<std::string> ids;
  for (const auto& x : s.labelled) ids.push_back(x.source_id());
  for (const auto& x : s.unlabelled) ids.push_back(x.source_id());
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

std::vector<MetricsRecord> run_sweep(const ExperimentConfig& config, const std::vector<Sample>& samples,
                                     const std::function<void(const std::string&)>& log) {
  config.validate();
  std::vector<MetricsRecord> rows;
  // The VQ-VAE only sees the training images; for one seed they are the
  // same at every ratio, so the trained model is reused across ratios.
  struct Cached {
    std::vector<std::string> ids;
    std::shared_ptr<VqVae> model;
    std::vector<double> curve;
  };
  std::map<std::uint64_t, Cached> vq_cache;

  for (double ratio : config.ratios) {
    for (std::uint64_t seed : config.seeds) {
      auto say = [&](const std::string& m) {
        if (log) log("[ratio " + std::to_string(ratio) + " seed " + std::to_string(seed) + "] " + m);
      };
      MetricsRecord base;
      base.labelled_ratio = ratio;
      base.seed = seed;
      DatasetSplit split;
      std::string split_error;
      try {
        split = make_split(samples, config, ratio, seed);
      } catch (const std::exception& e) {
        split_error = e.what();
      }
      TrainOptions opts;
      opts.seed = seed;
      opts.log = say;

      for (const auto& method : config.methods) {
        MetricsRecord row = base;
        row.method = method;
        try {
          if (!split_error.empty()) throw DatasetError(split_error);
          if (method == "proposed") {
            const auto ids = train_ids(split);
            auto it = vq_cache.find(seed);
            if (it == vq_cache.end() || it->second.ids != ids) {
              auto vq = train_vqvae(split, config, opts);
              it = vq_cache.insert_or_assign(seed, Cached{ids, vq.model, curve(vq.history)}).first;
            }
            // Grasp training freezes parts of the model; later ratios reuse it frozen.
            auto g = train_grasp(split, *it->second.model, config, opts);
            ProposedPredictor predictor(it->second.model, g.head);
            auto m = evaluate(predictor, split.test, config.width_scale);
            row.test_accuracy = m.test_accuracy;
            row.successes = m.successes;
            row.total = m.total;
            row.vq_loss_curve = it->second.curve;
            row.grasp_loss_curve = curve(g.history);
          } else {
            auto b = train_baseline(split, config, opts);
            BaselinePredictor predictor(config.network, b.net);
            auto m = evaluate(predictor, split.test, config.width_scale);
            row.test_accuracy = m.test_accuracy;
            row.successes = m.successes;
            row.total = m.total;
            row.grasp_loss_curve = curve(b.history);
          }
          say(method + " accuracy " + std::to_string(row.test_accuracy));
        } catch (const std::exception& e) {
          row.status = "failed";
          row.test_accuracy = 0.0;
          say(method + " failed: " + e.what());
        }
        rows.push_back(std::move(row));
      }
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const MetricsRecord& a, const MetricsRecord& b) {
    if (a.labelled_ratio != b.labelled_ratio) return a.labelled_ratio < b.labelled_ratio;
    if (a.method != b.method) return a.method < b.method;
    return a.seed < b.seed;
  });
  return rows;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& rows) {
  out << "labelled_ratio,method,seed,test_accuracy,status\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.labelled_ratio);
    out << buf << ',' << r.method << ',' << r.seed << ',';
    if (r.status == "ok") {
      std::snprintf(buf, sizeof buf, "%.6f", r.test_accuracy);
      out << buf;
    }
    out << ',' << r.status << '\n';
  }
}

}  // namespace graspvq
