#include "graspvq/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <tuple>

#include "graspvq/checkpoint.hpp"
#include "graspvq/ops.hpp"
#include "graspvq/optimizer.hpp"

namespace graspvq {
namespace {

enum Stream : std::uint64_t {
  kVqInit = 1,
  kVqShuffle,
  kGraspInit,
  kGraspShuffle,
  kBaselineInit,
  kBaselineShuffle,
  kAugment,
};

std::vector<std::vector<std::size_t>> batches(std::size_t n, int batch_size, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(batch_size))
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  return out;
}

void log_line(const TrainOptions& o, const std::string& line) {
  if (o.log) o.log(line);
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

void put_maps(const GraspMaps& m, float* dst) {
  const std::size_t plane = m.size();
  const std::vector<const std::vector<double>*> ch{&m.quality, &m.angle_sin, &m.angle_cos, &m.width_map};
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < plane; ++i) dst[c * plane + i] = static_cast<float>((*ch[c])[i]);
}

// Labelled samples for one batch, augmented when enabled.
std::vector<Sample> augmented_batch(const std::vector<Sample>& pool, const std::vector<std::size_t>& idx,
                                    bool enabled, Rng& aug) {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) {
    if (enabled) {
      const auto c = draw_augmentation(aug.next());
      out.push_back(augment(pool[i], c.quarter_turns * std::numbers::pi / 2, c.flip));
    } else {
      out.push_back(pool[i]);
    }
  }
  return out;
}

std::vector<const Sample*> pointers(const std::vector<Sample>& v) {
  std::vector<const Sample*> out;
  for (const auto& s : v) out.push_back(&s);
  return out;
}

// Shared loop for the two supervised map regressors.
template <typename Forward>
std::vector<GraspEpoch> fit_maps(const std::vector<Sample>& labelled, const ExperimentConfig& config,
                                 const TrainOptions& options, const char* phase, Stream shuffle_stream,
                                 const ParamList& params, Forward forward, double& initial_loss) {
  if (labelled.empty()) throw DatasetError(std::string(phase) + " training needs labelled samples");
  const auto all = pointers(labelled);

  // Un-augmented inputs and label maps are fixed, so build them once.
  std::vector<Param> x_of(all.size()), y_of(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    x_of[i] = image_batch({all[i]});
    y_of[i] = label_batch({all[i]}, config.width_scale);
  }
  auto stack = [](const std::vector<Param>& parts) {
    const Shape& s = parts[0].shape();
    Tensor<float> t({static_cast<std::int64_t>(parts.size()), s[1], s[2], s[3]});
    std::int64_t off = 0;
    for (const auto& p : parts) {
      std::copy(p.value().values().begin(), p.value().values().end(), t.data() + off);
      off += p.value().numel();
    }
    return Param::leaf(std::move(t));
  };
  auto gather = [&](const std::vector<std::size_t>& idx) {
    std::vector<Param> xs, ys;
    for (std::size_t i : idx) {
      xs.push_back(x_of[i]);
      ys.push_back(y_of[i]);
    }
    return std::pair{stack(xs), stack(ys)};
  };

  double sum = 0.0;
  for (std::size_t i = 0; i < all.size(); i += static_cast<std::size_t>(config.batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t k = i; k < std::min(all.size(), i + config.batch_size); ++k) idx.push_back(k);
    auto [x, y] = gather(idx);
    sum += grasp_loss(forward(x), y).value().item() * static_cast<double>(idx.size());
  }
  initial_loss = sum / static_cast<double>(all.size());
  log_line(options, std::string(phase) + " initial loss " + fmt(initial_loss));

  Rng rng(derive_seed(options.seed, shuffle_stream));
  Rng aug(derive_seed(options.seed, kAugment));
  Optimizer opt(params.vars(), config.optimizer);
  std::vector<GraspEpoch> history;
  for (int epoch = 1; epoch <= config.grasp_epochs; ++epoch) {
    double total = 0.0;
    const auto plan = batches(all.size(), config.batch_size, rng);
    for (std::size_t b = 0; b < plan.size(); ++b) {
      Param x, y;
      if (config.augment) {
        const auto chunk = augmented_batch(labelled, plan[b], true, aug);
        x = image_batch(pointers(chunk));
        y = label_batch(pointers(chunk), config.width_scale);
      } else {
        std::tie(x, y) = gather(plan[b]);
      }
      opt.zero_grad();
      Param loss = grasp_loss(forward(x), y);
      const double v = loss.value().item();
      if (!std::isfinite(v))
        throw TrainingAborted(std::string(phase) + " loss is not finite at epoch " + std::to_string(epoch) +
                              ", batch " + std::to_string(b) + ": grasp loss " + fmt(v));
      backward(loss);
      opt.step();
      total += v * static_cast<double>(plan[b].size());
    }
    history.push_back({epoch, total / static_cast<double>(all.size())});
    log_line(options, std::string(phase) + " epoch " + std::to_string(epoch) + " loss " + fmt(history.back().loss));
  }
  return history;
}

}  // namespace

Param image_batch(const std::vector<const Sample*>& samples) {
  if (samples.empty()) throw DatasetError("empty batch");
  const Tensor<float>& first = samples[0]->image();
  Tensor<float> t({static_cast<std::int64_t>(samples.size()), first.dim(0), first.dim(1), first.dim(2)});
  std::int64_t off = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Tensor<float>& img = i == 0 ? first : samples[i]->image();
    if (img.shape() != first.shape()) throw ShapeError("batch images differ in shape");
    std::copy(img.values().begin(), img.values().end(), t.data() + off);
    off += img.numel();
  }
  return Param::leaf(std::move(t));
}

Param label_batch(const std::vector<const Sample*>& samples, double width_scale) {
  if (samples.empty()) throw DatasetError("empty batch");
  const int h = samples[0]->height(), w = samples[0]->width();
  Tensor<float> t({static_cast<std::int64_t>(samples.size()), 4, h, w});
  const std::int64_t stride = 4LL * h * w;
  for (std::size_t i = 0; i < samples.size(); ++i)
    put_maps(rectangles_to_maps(samples[i]->positive_rects(), h, w, width_scale),
             t.data() + static_cast<std::int64_t>(i) * stride);
  return Param::leaf(std::move(t));
}

VqVaeResult train_vqvae(const DatasetSplit& split, const ExperimentConfig& config, const TrainOptions& options) {
  std::vector<const Sample*> pool;
  for (const auto& s : split.labelled) pool.push_back(&s);
  for (const auto& s : split.unlabelled) pool.push_back(&s);
  if (pool.empty()) throw DatasetError("VQ-VAE training needs at least one training image");
  // Canonical order: the result depends on which images are used, not on how
  // the split happened to partition them.
  std::sort(pool.begin(), pool.end(),
            [](const Sample* a, const Sample* b) { return a->source_id() < b->source_id(); });

  // Images only; augmentation transforms the image without consulting labels.
  std::vector<Tensor<float>> images;
  images.reserve(pool.size());
  for (const auto* s : pool) images.push_back(s->image());
  auto stack = [&](const std::vector<std::size_t>& idx, bool aug_on, Rng& aug) {
    const Shape& s = images[0].shape();
    Tensor<float> t({static_cast<std::int64_t>(idx.size()), s[0], s[1], s[2]});
    std::int64_t off = 0;
    for (std::size_t i : idx) {
      Tensor<float> img = images[i];
      if (aug_on) {
        const auto c = draw_augmentation(aug.next());
        img = transform_image(img, c.quarter_turns, c.flip);
      }
      std::copy(img.values().begin(), img.values().end(), t.data() + off);
      off += img.numel();
    }
    return Param::leaf(std::move(t));
  };

  VqVaeResult result;
  Rng init(derive_seed(options.seed, kVqInit));
  result.model = std::make_shared<VqVae>(config.network, init);
  VqVae& m = *result.model;
  const double beta = config.network.beta;

  {
    Rng unused(0);
    double sum = 0.0;
    for (std::size_t i = 0; i < images.size(); i += static_cast<std::size_t>(config.batch_size)) {
      std::vector<std::size_t> idx;
      for (std::size_t k = i; k < std::min(images.size(), i + config.batch_size); ++k) idx.push_back(k);
      auto x = stack(idx, false, unused);
      auto out = vqvae_forward(m.encoder, m.codebook, m.decoder, x);
      sum += ops::mse_loss(out.reconstruction, x).value().item() * static_cast<double>(idx.size());
    }
    result.initial_reconstruction = sum / static_cast<double>(images.size());
    log_line(options, "vqvae initial reconstruction " + fmt(result.initial_reconstruction));
  }

  Rng rng(derive_seed(options.seed, kVqShuffle));
  Rng aug(derive_seed(options.seed, kAugment));
  Optimizer opt(m.params().vars(), config.optimizer);
  for (int epoch = 1; epoch <= config.vqvae_epochs; ++epoch) {
    VqEpoch e;
    e.epoch = epoch;
    std::vector<std::int32_t> codes;
    const auto plan = batches(images.size(), config.batch_size, rng);
    for (std::size_t b = 0; b < plan.size(); ++b) {
      auto x = stack(plan[b], config.augment, aug);
      opt.zero_grad();
      auto out = vqvae_forward(m.encoder, m.codebook, m.decoder, x);
      auto recon = ops::mse_loss(out.reconstruction, ops::stop_gradient(x));
      auto loss = vq_loss(recon, out.quantization, static_cast<float>(beta));
      const double r = recon.value().item(), c = out.quantization.codebook_loss.value().item(),
                   k = out.quantization.commitment_loss.value().item(), t = loss.value().item();
      if (!std::isfinite(t))
        throw TrainingAborted("vqvae loss is not finite at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(b) + ": reconstruction " + fmt(r) + ", codebook " + fmt(c) +
                              ", commitment " + fmt(k));
      backward(loss);
      opt.step();
      const double n = static_cast<double>(plan[b].size());
      e.reconstruction += r * n;
      e.codebook += c * n;
      e.commitment += k * n;
      e.total += t * n;
      codes.insert(codes.end(), out.quantization.indices.begin(), out.quantization.indices.end());
    }
    const double n = static_cast<double>(images.size());
    e.reconstruction /= n;
    e.codebook /= n;
    e.commitment /= n;
    e.total /= n;
    e.perplexity = perplexity(codes, config.network.codebook_size);
    result.history.push_back(e);
    log_line(options, "vqvae epoch " + std::to_string(epoch) + " reconstruction " + fmt(e.reconstruction) +
                          " codebook " + fmt(e.codebook) + " commitment " + fmt(e.commitment) + " perplexity " +
                          fmt(e.perplexity) + " (kl constant " + fmt(kl_constant(config.network.codebook_size)) +
                          ", not optimized)");
  }

  if (options.checkpoint_dir)
    save_checkpoint(*options.checkpoint_dir, config.network, m.params(),
                    {"vqvae", config.vqvae_epochs, options.seed, {{"initial_reconstruction", result.initial_reconstruction}}});
  return result;
}

ParamList grasp_checkpoint_params(const VqVae& vqvae, const GraspHead& head) {
  ParamList all;
  all.append(vqvae.encoder.params());
  all.insert("codebook.embeddings", vqvae.codebook.embeddings);
  all.append(head.params());
  return all;
}

GraspResult train_grasp(const DatasetSplit& split, VqVae& vqvae, const ExperimentConfig& config,
                        const TrainOptions& options) {
  if (vqvae.config.fingerprint() != config.network.fingerprint())
    throw CheckpointError("VQ-VAE fingerprint " + vqvae.config.fingerprint() + " does not match config " +
                          config.network.fingerprint());
  vqvae.encoder.params().set_trainable(false);
  vqvae.codebook.embeddings.set_requires_grad(false);
  vqvae.codebook.embeddings.zero_grad();
  ParamList frozen;
  frozen.append(vqvae.encoder.params());
  frozen.insert("codebook.embeddings", vqvae.codebook.embeddings);
  const std::vector<float> before = frozen.snapshot();

  GraspResult result;
  Rng init(derive_seed(options.seed, kGraspInit));
  result.head = std::make_shared<GraspHead>(config.network, init);
  if (config.network.init_head_from_decoder) result.head->init_from_decoder(vqvae.decoder);
  GraspHead& head = *result.head;
  auto forward = [&](const Param& x) { return grasp_forward(vqvae.encoder, vqvae.codebook, head, x); };
  result.history = fit_maps(split.labelled, config, options, "grasp", kGraspShuffle, head.params(), forward,
                            result.initial_loss);
  if (frozen.snapshot() != before) throw TrainingAborted("grasp training modified the frozen encoder or codebook");
  if (options.checkpoint_dir)
    save_checkpoint(*options.checkpoint_dir, config.network, grasp_checkpoint_params(vqvae, head),
                    {"grasp", config.grasp_epochs, options.seed, {{"initial_loss", result.initial_loss}}});
  return result;
}

BaselineResult train_baseline(const DatasetSplit& split, const ExperimentConfig& config,
                              const TrainOptions& options) {
  BaselineResult result;
  Rng init(derive_seed(options.seed, kBaselineInit));
  result.net = std::make_shared<BaselineNet>(config.network, init);
  BaselineNet& net = *result.net;
  auto forward = [&](const Param& x) { return net.forward(x); };
  result.history = fit_maps(split.labelled, config, options, "baseline", kBaselineShuffle, net.params(), forward,
                            result.initial_loss);
  if (options.checkpoint_dir)
    save_checkpoint(*options.checkpoint_dir, config.network, net.params(),
                    {"baseline", config.grasp_epochs, options.seed, {{"initial_loss", result.initial_loss}}});
  return result;
}

std::shared_ptr<VqVae> load_vqvae(const std::filesystem::path& dir, const NetworkConfig& config) {
  Rng init(0);
  auto model = std::make_shared<VqVae>(config, init);
  const auto manifest = read_manifest(dir);
  const std::string phase = manifest.at("metadata").at("phase");
  if (phase == "vqvae") {
    auto params = model->params();
    load_checkpoint(dir, config, params);
  } else {
    throw CheckpointError("checkpoint phase '" + phase + "' is not a VQ-VAE");
  }
  return model;
}

}  // namespace graspvq
