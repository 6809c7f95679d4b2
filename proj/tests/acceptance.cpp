// Acceptance run: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion numbers...]   (default: all)
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "geometry_oracles.hpp"
#include "graspvq/geometry.hpp"
#include "graspvq/ops.hpp"
#include "graspvq/quantizer.hpp"
#include "graspvq/sweep.hpp"
#include "graspvq/training.hpp"
#include "operator_checks.hpp"
#include "quantizer_oracle.hpp"

using namespace graspvq;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor<double> random_tensor(Shape shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

// Smallest gap between nearest and second-nearest squared distance.
double margin(const Tensor<double>& z, const Tensor<double>& table) {
  const auto D = z.dim(1), hw = z.dim(2) * z.dim(3), K = table.dim(0);
  double m = 1e300;
  for (std::int64_t b = 0; b < z.dim(0); ++b)
    for (std::int64_t p = 0; p < hw; ++p) {
      double best = 1e300, second = 1e300;
      for (std::int64_t k = 0; k < K; ++k) {
        double d2 = 0;
        for (std::int64_t d = 0; d < D; ++d) d2 += std::pow(z[(b * D + d) * hw + p] - table[k * D + d], 2);
        if (d2 < best) {
          second = best;
          best = d2;
        } else if (d2 < second) {
          second = d2;
        }
      }
      m = std::min(m, second - best);
    }
  return m;
}

// Network and data sizes used by the training criteria: 64 x 64 grayscale,
// 16 x 16 latents.
ExperimentConfig desk_config() {
  ExperimentConfig c;
  c.network.input_channels = 1;
  c.network.input_size = 64;
  c.network.embedding_dim = 16;
  c.network.codebook_size = 64;
  c.network.encoder_channels = {16, 32};
  c.network.ggcnn_channels = {16, 16, 16};
  c.network.ggcnn_kernels = {9, 5, 3};
  c.batch_size = 8;
  return c;
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.dataset.synthetic_count = 40;
  c.network.input_channels = 1;
  c.network.input_size = 32;
  c.network.embedding_dim = 8;
  c.network.codebook_size = 16;
  c.network.encoder_channels = {8, 8};
  c.network.residual_blocks = 1;
  c.network.ggcnn_channels = {8, 8, 8};
  c.network.ggcnn_kernels = {5, 3, 3};
  c.network.norm_groups = 4;
  c.vqvae_epochs = 3;
  c.grasp_epochs = 3;
  c.batch_size = 4;
  c.test_fraction = 0.2;
  return c;
}

Outcome quantizer_oracle() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto c = oracle::random_vq_case(rng);
    if (nearest_codes(c.z_e, c.table) != oracle::brute_force_codes(c.z_e, c.table)) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10.0,
          std::to_string(mismatches) + " mismatches in 1000 cases, " + fmt("%.2f", secs) + " s"};
}

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  double worst_vq = 0.0;
  Rng rng(77);
  int checked = 0;
  while (checked < 20) {
    Codebook<double> cb(random_tensor({6, 3}, rng));
    const auto z0 = random_tensor({2, 3, 2, 2}, rng);
    if (margin(z0, cb.embeddings.value()) < 1e-2) continue;  // stay away from assignment boundaries
    ++checked;
    auto z = Var<double>::leaf(z0, true);
    worst_vq = std::max(worst_vq, finite_difference_check([&] { return quantize(z, cb).codebook_loss; },
                                                          cb.embeddings, 1e-6).max_relative_error);
    worst_vq = std::max(worst_vq, finite_difference_check([&] { return quantize(z, cb).commitment_loss; },
                                                          z, 1e-6).max_relative_error);
  }
  const double worst_ops = oracle::worst_operator_error(20);
  const double secs = seconds_since(t0);
  const double worst = std::max(worst_vq, worst_ops);
  return {worst < 1e-3 && secs < 60.0, "max relative error " + fmt("%.2e", worst) + " (loss terms " +
                                           fmt("%.2e", worst_vq) + ", operators " + fmt("%.2e", worst_ops) +
                                           "), " + fmt("%.1f", secs) + " s"};
}

Outcome straight_through_contract() {
  using P = Var<float>;
  int identical = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(5000 + trial);
    const int B = 1 + static_cast<int>(rng.below(2)), D = 1 + static_cast<int>(rng.below(6));
    const int h = 2 + static_cast<int>(rng.below(4));
    auto tensor = [&](Shape s) {
      Tensor<float> t(std::move(s));
      for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-1, 1));
      return t;
    };
    Codebook<float> cb(tensor({2 + static_cast<int>(rng.below(8)), D}));
    auto z_e = P::leaf(tensor({B, D, h, h}), true);
    auto q = quantize(z_e, cb);
    auto zq = q.decoder_input;
    zq.retain_grad();
    // Random downstream graph built on the quantized tensor.
    P y = zq;
    const int depth = 1 + static_cast<int>(rng.below(3));
    for (int layer = 0; layer < depth; ++layer) {
      switch (rng.below(4)) {
        case 0: y = ops::relu(ops::conv2d(y, P::leaf(tensor({D, D, 3, 3})), P::leaf(tensor({D})), 1, 1)); break;
        case 1: y = ops::sigmoid(y); break;
        case 2: y = ops::mul(y, P::leaf(tensor(y.shape()))); break;
        default: y = ops::add(ops::scale(y, 0.5f), ops::mul(y, y)); break;
      }
    }
    backward(ops::sum(ops::mul(y, P::leaf(tensor(y.shape())))));
    const auto ge = z_e.grad(), gq = zq.grad();
    const bool same = ge.shape() == gq.shape() &&
                      std::memcmp(ge.data(), gq.data(), static_cast<std::size_t>(ge.numel()) * sizeof(float)) == 0;
    if (same && !cb.embeddings.has_grad()) ++identical;
  }
  return {identical == 100, std::to_string(identical) + "/100 graphs bit-identical, codebook untouched"};
}

Outcome jaccard_oracle() {
  Rng rng(4242);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto a = make_rectangle(rng.uniform(3, 5), rng.uniform(3, 5), rng.uniform(-2, 2), rng.uniform(0.5, 4),
                            rng.uniform(0.5, 4));
    auto b = make_rectangle(rng.uniform(3, 5), rng.uniform(3, 5), rng.uniform(-2, 2), rng.uniform(0.5, 4),
                            rng.uniform(0.5, 4));
    worst = std::max(worst, std::abs(jaccard(a, b) - oracle::raster_jaccard(a, b, 0.01)));
  }
  const double seventh = std::abs(jaccard(make_rectangle(1, 1, 0, 2, 2), make_rectangle(2, 2, 0, 2, 2)) - 1.0 / 7.0);
  return {worst <= 0.01 && seventh < 1e-9,
          "max |clip - raster| " + fmt("%.2e", worst) + ", 1/7 case error " + fmt("%.1e", seventh)};
}

Outcome map_round_trip() {
  Rng rng(8080);
  double centre = 0, angle = 0, width = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const GraspRectangle r = oracle::random_inbounds_rect(rng, 128);
    const auto g = maps_to_grasp(rectangles_to_maps(std::span(&r, 1), 128, 128), kDefaultWidthScale);
    centre = std::max(centre, std::hypot(g.center_row - r.center_row, g.center_col - r.center_col));
    angle = std::max(angle, oracle::angle_gap(g.angle, r.angle));
    width = std::max(width, std::abs(g.width - r.width) / r.width);
  }
  return {centre <= 1.0 && angle < 1e-6 && width <= 0.01,
          "worst centre " + fmt("%.3f", centre) + " px, angle " + fmt("%.1e", angle) + " rad, width " +
              fmt("%.2f", 100 * width) + "%"};
}

Outcome kl_constant_check() {
  double worst = 0.0;
  for (std::int64_t K : {1, 2, 512}) worst = std::max(worst, std::abs(kl_constant(K) - std::log(static_cast<double>(K))));
  const bool examples = std::abs(kl_constant(512) - 6.238324625039508) < 1e-12 &&
                        std::abs(kl_constant(2) - 0.6931471805599453) < 1e-12 && kl_constant(1) == 0.0;
  return {worst <= 1e-12 && examples, "max |kl_constant(K) - ln K| = " + fmt("%.1e", worst)};
}

Outcome vqvae_smoke() {
  const auto t0 = Clock::now();
  auto c = desk_config();
  c.vqvae_epochs = 30;
  DatasetSplit split;
  split.labelled = synth_generate(200, 64, 7);  // all 200 images are training images
  TrainOptions o;
  o.seed = 7;
  const auto r = train_vqvae(split, c, o);
  const double secs = seconds_since(t0);
  const double last = r.history.back().reconstruction, ppl = r.history.back().perplexity;
  return {last <= 0.5 * r.initial_reconstruction && ppl > 1.5 && secs < 900.0,
          "reconstruction " + fmt("%.5f", r.initial_reconstruction) + " -> " + fmt("%.5f", last) + " (" +
              fmt("%.1f", 100 * last / r.initial_reconstruction) + "%), perplexity " + fmt("%.2f", ppl) + ", " +
              fmt("%.0f", secs) + " s"};
}

ExperimentConfig directional_config() {
  auto c = desk_config();
  c.dataset.synthetic_count = 300;
  c.dataset.synthetic_seed = 1;
  c.test_fraction = 0.1;
  c.ratios = {0.1};
  c.seeds = {0, 1, 2};
  c.vqvae_epochs = 100;
  c.grasp_epochs = 200;
  return c;
}

Outcome semi_supervised_direction() {
  const auto t0 = Clock::now();
  const auto c = directional_config();
  const auto rows = run_sweep(c, load_dataset(c), [](const std::string& line) {
    if (line.find("accuracy") != std::string::npos || line.find("failed") != std::string::npos)
      std::fprintf(stderr, "  %s\n", line.c_str());
  });
  double proposed = 0, baseline = 0;
  int np = 0, nb = 0, failed = 0;
  std::ostringstream per_seed;
  for (const auto& r : rows) {
    if (r.status != "ok") {
      ++failed;
      continue;
    }
    (r.method == "proposed" ? proposed : baseline) += r.test_accuracy;
    (r.method == "proposed" ? np : nb) += 1;
    per_seed << ' ' << r.method[0] << r.seed << '=' << fmt("%.3f", r.test_accuracy);
  }
  proposed /= std::max(np, 1);
  baseline /= std::max(nb, 1);
  const double secs = seconds_since(t0);
  return {failed == 0 && np == 3 && nb == 3 && proposed >= baseline && proposed > 0.5 && secs < 7200.0,
          "mean proposed " + fmt("%.4f", proposed) + " vs baseline " + fmt("%.4f", baseline) + " [" +
              per_seed.str().substr(1) + "], " + fmt("%.0f", secs) + " s"};
}

Outcome freeze_and_isolation() {
  auto c = tiny_config();
  auto samples = load_dataset(c);
  auto split = make_split(samples, c, 0.25, 9);
  for (auto* part : {&split.labelled, &split.unlabelled, &split.test})
    for (auto& s : *part) s.reset_access_counts();
  TrainOptions o;
  o.seed = 9;

  auto vq = train_vqvae(split, c, o);
  std::uint64_t vq_label_reads = 0;
  for (const auto* part : {&split.labelled, &split.unlabelled, &split.test})
    for (const auto& s : *part) vq_label_reads += s.label_reads();

  ParamList frozen;
  frozen.append(vq.model->encoder.params());
  frozen.insert("codebook.embeddings", vq.model->codebook.embeddings);
  const auto before = frozen.snapshot();
  train_grasp(split, *vq.model, c, o);
  const bool unchanged = frozen.snapshot() == before;

  for (auto& s : split.unlabelled) s.reset_access_counts();
  train_baseline(split, c, o);
  std::uint64_t baseline_unlabelled = 0;
  for (const auto& s : split.unlabelled) baseline_unlabelled += s.image_reads() + s.label_reads();

  return {unchanged && vq_label_reads == 0 && baseline_unlabelled == 0,
          std::string("encoder+codebook ") + (unchanged ? "bit-equal" : "CHANGED") + ", VQ-VAE label reads " +
              std::to_string(vq_label_reads) + ", baseline unlabelled reads " + std::to_string(baseline_unlabelled)};
}

Outcome sweep_determinism() {
  auto c = tiny_config();
  c.seeds = {3};
  auto csv = [&] {
    std::ostringstream s;
    write_metrics_csv(s, run_sweep(c, load_dataset(c)));
    return s.str();
  };
  const std::string a = csv(), b = csv();
  const auto lines = std::count(a.begin(), a.end(), '\n');
  return {a == b && lines == 7, std::to_string(lines - 1) + " rows, " + (a == b ? "identical" : "DIFFERENT") + " CSV"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
      {1, {"quantizer oracle equivalence", quantizer_oracle}},
      {2, {"gradient correctness", gradient_checks}},
      {3, {"straight-through contract", straight_through_contract}},
      {4, {"Jaccard oracle", jaccard_oracle}},
      {5, {"map round trip", map_round_trip}},
      {6, {"KL constant", kl_constant_check}},
      {7, {"VQ-VAE smoke training", vqvae_smoke}},
      {8, {"semi-supervised directional result", semi_supervised_direction}},
      {9, {"freeze/isolation invariants", freeze_and_isolation}},
      {10, {"sweep determinism", sweep_determinism}},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (const auto& [id, c] : criteria) selected.push_back(id);

  int failures = 0;
  for (int id : selected) {
    auto it = criteria.find(id);
    if (it == criteria.end()) {
      std::printf("FAIL %d unknown criterion\n", id);
      ++failures;
      continue;
    }
    Outcome out;
    try {
      out = it->second.second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %d %s: %s\n", out.pass ? "PASS" : "FAIL", id, it->second.first, out.detail.c_str());
    std::fflush(stdout);
    failures += out.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
