#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "graspvq/checkpoint.hpp"
#include "graspvq/dataset.hpp"
#include "graspvq/geometry.hpp"
#include "graspvq/networks.hpp"
#include "graspvq/ops.hpp"
#include "graspvq/optimizer.hpp"

using namespace graspvq;
namespace fs = std::filesystem;

namespace {

NetworkConfig small_config() {
  NetworkConfig c;
  c.input_channels = 1;
  c.input_size = 32;
  c.embedding_dim = 8;
  c.codebook_size = 16;
  c.encoder_channels = {8, 16};
  c.ggcnn_channels = {8, 8, 8};
  c.ggcnn_kernels = {5, 3, 3};
  c.norm_groups = 4;
  return c;
}

Param random_batch(Shape shape, Rng& rng) {
  Tensor<float> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform());
  return Param::leaf(std::move(t));
}

Param batch_of(const std::vector<Sample>& samples) {
  const auto& first = samples[0].image();
  Tensor<float> t({static_cast<std::int64_t>(samples.size()), first.dim(0), first.dim(1), first.dim(2)});
  std::int64_t off = 0;
  for (const auto& s : samples) {
    const auto v = s.image().values();
    std::copy(v.begin(), v.end(), t.data() + off);
    off += static_cast<std::int64_t>(v.size());
  }
  return Param::leaf(std::move(t));
}

Param label_batch(const std::vector<Sample>& samples) {
  const int S = samples[0].height();
  Tensor<float> t({static_cast<std::int64_t>(samples.size()), 4, S, S});
  const std::int64_t plane = static_cast<std::int64_t>(S) * S;
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const auto m = rectangles_to_maps(samples[b].positive_rects(), S, S, kDefaultWidthScale);
    const std::vector<const std::vector<double>*> ch{&m.quality, &m.angle_sin, &m.angle_cos, &m.width_map};
    for (int c = 0; c < 4; ++c)
      for (std::int64_t i = 0; i < plane; ++i) t[(static_cast<std::int64_t>(b) * 4 + c) * plane + i] = static_cast<float>((*ch[c])[i]);
  }
  return Param::leaf(std::move(t));
}

bool in_unit_range(const Tensor<float>& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
}

}  // namespace

TEST_CASE("default-sized shapes") {
  NetworkConfig c;  // C=3, S=128, f=4, D=64
  Rng rng(1);
  VqVae model(c, rng);
  GraspHead head(c, rng);
  auto x = random_batch({2, 3, 128, 128}, rng);
  auto out = vqvae_forward(model.encoder, model.codebook, model.decoder, x);
  CHECK(out.z_e.shape() == Shape{2, 64, 32, 32});
  CHECK(out.reconstruction.shape() == Shape{2, 3, 128, 128});
  CHECK(in_unit_range(out.reconstruction.value()));
  const double loss = vqvae_loss(x, out, c.beta).value().item();
  CHECK(std::isfinite(loss));
  CHECK(loss > 0.0);

  model.encoder.params().set_trainable(false);
  model.codebook.embeddings.set_requires_grad(false);
  auto maps = grasp_forward(model.encoder, model.codebook, head, x);
  CHECK(maps.shape() == Shape{2, 4, 128, 128});
}

TEST_CASE("z_q rows are codebook rows") {
  auto c = small_config();
  Rng rng(2);
  VqVae model(c, rng);
  auto out = vqvae_forward(model.encoder, model.codebook, model.decoder, random_batch({2, 1, 32, 32}, rng));
  const auto& zq = out.quantization.z_q.value();
  const auto& table = model.codebook.embeddings.value();
  const std::int64_t D = c.embedding_dim, hw = zq.dim(2) * zq.dim(3);
  for (std::int64_t b = 0; b < zq.dim(0); ++b)
    for (std::int64_t p = 0; p < hw; ++p) {
      bool found = false;
      for (std::int64_t k = 0; k < table.dim(0) && !found; ++k) {
        bool same = true;
        for (std::int64_t d = 0; d < D; ++d) same = same && zq[(b * D + d) * hw + p] == table[k * D + d];
        found = same;
      }
      CHECK(found);
    }
}

TEST_CASE("zero input gives finite outputs") {
  auto c = small_config();
  Rng rng(3);
  VqVae model(c, rng);
  auto x = Param::leaf(Tensor<float>({1, 1, 32, 32}));
  CHECK(model.encoder.forward(x).value().all_finite());
  auto out = vqvae_forward(model.encoder, model.codebook, model.decoder, x);
  CHECK(out.reconstruction.value().all_finite());
  BaselineNet base(c, rng);
  auto y = base.forward(x);
  CHECK(y.shape() == Shape{1, 4, 32, 32});
  CHECK(y.value().all_finite());
}

TEST_CASE("same seed builds identical parameters") {
  auto c = small_config();
  Rng a(7), b(7), d(8);
  VqVae ma(c, a), mb(c, b), md(c, d);
  CHECK(ma.params().snapshot() == mb.params().snapshot());
  CHECK(ma.params().snapshot() != md.params().snapshot());
  CHECK(ma.params().count() == mb.params().count());
}

TEST_CASE("invalid configs are rejected") {
  auto bad = small_config();
  bad.input_size = 30;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_config();
  bad.downsample_factor = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = small_config();
  bad.encoder_channels = {8};
  Rng rng(1);
  CHECK_THROWS_AS(Encoder(bad, rng), ConfigError);
  CHECK_THROWS_AS(NetworkConfig::from_json({{"no_such_key", 1}}), ConfigError);
}

TEST_CASE("config json round trip and fingerprint") {
  auto c = small_config();
  auto back = NetworkConfig::from_json(c.to_json());
  CHECK(back.fingerprint() == c.fingerprint());
  back.codebook_size = 32;
  CHECK(back.fingerprint() != c.fingerprint());
  CHECK(c.fingerprint().size() == 16);
}

TEST_CASE("grasp head gradients reach its decoder-style trunk") {
  auto c = small_config();
  Rng rng(4);
  VqVae model(c, rng);
  GraspHead head(c, rng);
  model.encoder.params().set_trainable(false);
  model.codebook.embeddings.set_requires_grad(false);
  auto x = random_batch({2, 1, 32, 32}, rng);
  auto maps = grasp_forward(model.encoder, model.codebook, head, x);
  // Quality channel is bounded.
  const std::int64_t plane = 32 * 32;
  for (std::int64_t b = 0; b < 2; ++b)
    for (std::int64_t i = 0; i < plane; ++i) {
      const float q = maps.value()[b * 4 * plane + i];
      CHECK((q >= 0.0f && q <= 1.0f));
    }
  backward(grasp_loss(maps, random_batch({2, 4, 32, 32}, rng)));
  for (const auto& p : head.params().items()) {
    if (p.name.rfind("head.trunk", 0) != 0) continue;
    double norm = 0;
    for (float g : p.var.grad().values()) norm += static_cast<double>(g) * g;
    CHECK_MESSAGE(norm > 0, p.name);
  }
  for (const auto& p : model.encoder.params().items()) CHECK(!p.var.has_grad());
  CHECK(!model.codebook.embeddings.has_grad());
}

TEST_CASE("grasp forward refuses an unfrozen encoder") {
  auto c = small_config();
  Rng rng(5);
  VqVae model(c, rng);
  GraspHead head(c, rng);
  auto x = random_batch({1, 1, 32, 32}, rng);
  CHECK_THROWS_AS(grasp_forward(model.encoder, model.codebook, head, x), ConfigError);
  model.encoder.params().set_trainable(false);
  CHECK_THROWS_AS(grasp_forward(model.encoder, model.codebook, head, x), ConfigError);
}

TEST_CASE("frozen encoder and codebook survive grasp optimizer steps bit-for-bit") {
  auto c = small_config();
  Rng rng(6);
  VqVae model(c, rng);
  GraspHead head(c, rng);
  model.encoder.params().set_trainable(false);
  model.codebook.embeddings.set_requires_grad(false);
  const auto before = model.params().snapshot();
  // The optimizer is handed everything; freezing must still hold.
  auto all = model.params();
  all.append(head.params());
  Optimizer opt(all.vars(), {});
  auto x = random_batch({2, 1, 32, 32}, rng);
  auto y = random_batch({2, 4, 32, 32}, rng);
  const auto head_before = head.params().snapshot();
  for (int i = 0; i < 3; ++i) {
    opt.zero_grad();
    backward(grasp_loss(grasp_forward(model.encoder, model.codebook, head, x), y));
    opt.step();
  }
  CHECK(model.params().snapshot() == before);
  CHECK(head.params().snapshot() != head_before);
}

TEST_CASE("reconstruction loss decreases over 50 steps on 8 synthetic images") {
  auto c = small_config();
  Rng rng(7);
  VqVae model(c, rng);
  auto x = batch_of(synth_generate(8, 32, 1));
  Optimizer opt(model.params().vars(), {});
  double first = 0, last = 0;
  for (int step = 0; step < 50; ++step) {
    opt.zero_grad();
    auto out = vqvae_forward(model.encoder, model.codebook, model.decoder, x);
    auto recon = ops::mse_loss(out.reconstruction, x);
    (step == 0 ? first : last) = recon.value().item();
    backward(vqvae_loss(x, out, c.beta));
    opt.step();
  }
  MESSAGE("recon ", first, " -> ", last);
  CHECK(last < first);
}

TEST_CASE("grasp loss decreases over 100 steps") {
  auto c = small_config();
  Rng rng(8);
  VqVae model(c, rng);
  GraspHead head(c, rng);
  model.encoder.params().set_trainable(false);
  model.codebook.embeddings.set_requires_grad(false);
  auto samples = synth_generate(4, 32, 2);
  auto x = batch_of(samples);
  auto y = label_batch(samples);
  Optimizer opt(head.params().vars(), {});
  double first = 0, last = 0;
  for (int step = 0; step < 100; ++step) {
    opt.zero_grad();
    auto loss = grasp_loss(grasp_forward(model.encoder, model.codebook, head, x), y);
    (step == 0 ? first : last) = loss.value().item();
    backward(loss);
    opt.step();
  }
  MESSAGE("grasp ", first, " -> ", last);
  CHECK(last < first);
}

TEST_CASE("sgd with momentum and adam reduce a quadratic") {
  for (const char* kind : {"sgd", "adam"}) {
    auto w = Param::leaf(Tensor<float>({3}, {1.0f, -2.0f, 3.0f}), true);
    auto frozen = Param::leaf(Tensor<float>({1}, {5.0f}), false);
    OptimizerConfig oc;
    oc.kind = kind;
    oc.learning_rate = 0.05;
    Optimizer opt({w, frozen}, oc);
    for (int i = 0; i < 200; ++i) {
      opt.zero_grad();
      backward(ops::add(ops::sum(ops::mul(w, w)), ops::sum(ops::mul(frozen, frozen))));
      opt.step();
    }
    for (float v : w.value().values()) CHECK(std::abs(v) < 0.1f);
    CHECK(frozen.value()[0] == 5.0f);
  }
  CHECK_THROWS(OptimizerConfig::from_json({{"kind", "rmsprop"}}));
}

TEST_CASE("checkpoint round trip and rejection") {
  auto c = small_config();
  const fs::path dir = fs::temp_directory_path() / "graspvq_ckpt";
  fs::remove_all(dir);
  Rng a(9), b(10);
  VqVae saved(c, a), loaded(c, b);
  save_checkpoint(dir, c, saved.params(), {"vqvae", 3, 9});
  auto params = loaded.params();
  auto meta = load_checkpoint(dir, c, params);
  CHECK(loaded.params().snapshot() == saved.params().snapshot());
  CHECK(meta.phase == "vqvae");
  CHECK(meta.epoch == 3);
  CHECK(meta.seed == 9);
  auto manifest = read_manifest(dir);
  CHECK(manifest.at("parameter_count") == saved.params().count());

  auto other = c;
  other.codebook_size = 8;
  Rng d(1);
  VqVae wrong(other, d);
  auto wp = wrong.params();
  try {
    load_checkpoint(dir, other, wp);
    FAIL("expected rejection");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("fingerprint") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("head warm start copies decoder trunk weights") {
  auto c = small_config();
  Rng rng(11);
  VqVae model(c, rng);
  GraspHead head(c, rng);
  head.init_from_decoder(model.decoder);
  const auto& dec = model.decoder.params().items();
  const auto& hp = head.params().items();
  CHECK(dec[0].name == "decoder.trunk.expand.weight");
  CHECK(hp[0].name == "head.trunk.expand.weight");
  CHECK(hp[0].var.value() == dec[0].var.value());
}
