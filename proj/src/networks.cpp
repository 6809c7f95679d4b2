#include "graspvq/networks.hpp"

#include <bit>
#include <cstdio>

#include "graspvq/ops.hpp"

namespace graspvq {

// ---- NetworkConfig ---------------------------------------------------------

void NetworkConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("network config: " + msg); };
  if (input_channels < 1) fail("input_channels must be positive");
  if (downsample_factor < 2 || !std::has_single_bit(static_cast<unsigned>(downsample_factor)))
    fail("downsample_factor must be a power of 2 (>= 2), got " + std::to_string(downsample_factor));
  if (input_size < 1 || input_size % downsample_factor != 0)
    fail("input_size " + std::to_string(input_size) + " is not divisible by downsample_factor " +
         std::to_string(downsample_factor));
  const int blocks = std::countr_zero(static_cast<unsigned>(downsample_factor));
  if (static_cast<int>(encoder_channels.size()) != blocks)
    fail("encoder_channels needs " + std::to_string(blocks) + " entries (log2 of downsample_factor)");
  for (int c : encoder_channels)
    if (c < 1) fail("encoder_channels must be positive");
  if (embedding_dim < 1) fail("embedding_dim must be positive");
  if (codebook_size < 2) fail("codebook_size must be at least 2");
  if (!(beta >= 0.0)) fail("beta must be non-negative");
  if (residual_blocks < 0) fail("residual_blocks must be non-negative");
  if (ggcnn_channels.size() != 3 || ggcnn_kernels.size() != 3) fail("ggcnn_channels and ggcnn_kernels need 3 entries");
  for (int c : ggcnn_channels)
    if (c < 1) fail("ggcnn_channels must be positive");
  for (int k : ggcnn_kernels)
    if (k < 1 || k % 2 == 0) fail("ggcnn_kernels must be odd");
  if (input_size % 4 != 0) fail("input_size must be divisible by 4 for the baseline network");
  if (norm_groups < 0) fail("norm_groups must be non-negative");
}

nlohmann::json NetworkConfig::to_json() const {
  return {{"input_channels", input_channels},
          {"input_size", input_size},
          {"downsample_factor", downsample_factor},
          {"embedding_dim", embedding_dim},
          {"codebook_size", codebook_size},
          {"beta", beta},
          {"encoder_channels", encoder_channels},
          {"residual_blocks", residual_blocks},
          {"ggcnn_channels", ggcnn_channels},
          {"ggcnn_kernels", ggcnn_kernels},
          {"norm_groups", norm_groups},
          {"init_head_from_decoder", init_head_from_decoder}};
}

NetworkConfig NetworkConfig::from_json(const nlohmann::json& j) {
  NetworkConfig c;
  const auto known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("network config: unknown key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("input_channels", c.input_channels);
  get("input_size", c.input_size);
  get("downsample_factor", c.downsample_factor);
  get("embedding_dim", c.embedding_dim);
  get("codebook_size", c.codebook_size);
  get("beta", c.beta);
  get("encoder_channels", c.encoder_channels);
  get("residual_blocks", c.residual_blocks);
  get("ggcnn_channels", c.ggcnn_channels);
  get("ggcnn_kernels", c.ggcnn_kernels);
  get("norm_groups", c.norm_groups);
  get("init_head_from_decoder", c.init_head_from_decoder);
  return c;
}

std::string NetworkConfig::fingerprint() const {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : to_json().dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- Encoder / decoder -----------------------------------------------------

Encoder::Encoder(const NetworkConfig& config, Rng& rng) {
  config.validate();
  int in = config.input_channels;
  for (std::size_t i = 0; i < config.encoder_channels.size(); ++i) {
    const int out = config.encoder_channels[i];
    const std::string name = "encoder.down" + std::to_string(i);
    down_.emplace_back(params_, name + ".conv", in, out, 4, 2, 1, rng);
    norms_.emplace_back(params_, name + ".norm", out, config.norm_groups);
    in = out;
  }
  for (int i = 0; i < config.residual_blocks; ++i)
    res_.emplace_back(params_, "encoder.res" + std::to_string(i), in, rng);
  project_ = Conv2d(params_, "encoder.project", in, config.embedding_dim, 1, 1, 0, rng);
}

Param Encoder::forward(const Param& x) const {
  Param h = x;
  for (std::size_t i = 0; i < down_.size(); ++i) h = ops::relu(norms_[i].forward(down_[i].forward(h)));
  for (const auto& r : res_) h = r.forward(h);
  if (!res_.empty()) h = ops::relu(h);
  return project_.forward(h);
}

DecoderTrunk::DecoderTrunk(const NetworkConfig& config, const std::string& prefix, ParamList& params,
                           Rng& rng) {
  config.validate();
  const auto& ch = config.encoder_channels;
  int in = ch.back();
  expand_ = Conv2d(params, prefix + ".expand", config.embedding_dim, in, 1, 1, 0, rng);
  for (int i = 0; i < config.residual_blocks; ++i)
    res_.emplace_back(params, prefix + ".res" + std::to_string(i), in, rng);
  // Mirror of the encoder: channels walk back down to ch[0].
  for (std::size_t i = ch.size(); i-- > 0;) {
    const int out = i > 0 ? ch[i - 1] : ch[0];
    const std::string name = prefix + ".up" + std::to_string(ch.size() - 1 - i);
    up_.emplace_back(params, name + ".conv", in, out, 4, 2, 1, rng);
    norms_.emplace_back(params, name + ".norm", out, config.norm_groups);
    in = out;
  }
}

Param DecoderTrunk::forward(const Param& z) const {
  Param h = expand_.forward(z);
  for (const auto& r : res_) h = r.forward(h);
  if (!res_.empty()) h = ops::relu(h);
  for (std::size_t i = 0; i < up_.size(); ++i) h = ops::relu(norms_[i].forward(up_[i].forward(h)));
  return h;
}

Decoder::Decoder(const NetworkConfig& config, Rng& rng) {
  trunk_ = std::make_unique<DecoderTrunk>(config, "decoder.trunk", params_, rng);
  output_ = Conv2d(params_, "decoder.output", config.encoder_channels[0], config.input_channels, 3, 1, 1, rng);
}

Param Decoder::forward(const Param& z) const { return ops::sigmoid(output_.forward(trunk_->forward(z))); }

// ---- Grasp networks --------------------------------------------------------

GraspHeads::GraspHeads(ParamList& params, const std::string& prefix, int in_channels, Rng& rng)
    : quality_(params, prefix + ".quality", in_channels, 1, 1, 1, 0, rng),
      sin_(params, prefix + ".sin", in_channels, 1, 1, 1, 0, rng),
      cos_(params, prefix + ".cos", in_channels, 1, 1, 1, 0, rng),
      width_(params, prefix + ".width", in_channels, 1, 1, 1, 0, rng) {}

Param GraspHeads::forward(const Param& f) const {
  return ops::concat_channels<float>(
      {ops::sigmoid(quality_.forward(f)), sin_.forward(f), cos_.forward(f), width_.forward(f)});
}

GraspHead::GraspHead(const NetworkConfig& config, Rng& rng) {
  trunk_ = std::make_unique<DecoderTrunk>(config, "head.trunk", params_, rng);
  int in = config.encoder_channels[0];
  for (std::size_t i = 0; i < config.ggcnn_channels.size(); ++i) {
    const int k = config.ggcnn_kernels[i];
    stack_.emplace_back(params_, "head.stack" + std::to_string(i), in, config.ggcnn_channels[i], k, 1, k / 2,
                        rng);
    in = config.ggcnn_channels[i];
  }
  heads_ = GraspHeads(params_, "head.out", in, rng);
}

Param GraspHead::forward(const Param& z_q) const {
  Param h = trunk_->forward(z_q);
  for (const auto& c : stack_) h = ops::relu(c.forward(h));
  return heads_.forward(h);
}

void GraspHead::init_from_decoder(const Decoder& decoder) {
  const std::string from = "decoder.trunk", to = "head.trunk";
  for (const auto& src : decoder.params().items()) {
    if (src.name.rfind(from, 0) != 0) continue;
    const std::string target = to + src.name.substr(from.size());
    for (auto& dst : params_.items()) {
      if (dst.name == target) {
        Param v = dst.var;
        v.mutable_value() = src.var.value();
      }
    }
  }
}

BaselineNet::BaselineNet(const NetworkConfig& config, Rng& rng) {
  config.validate();
  const auto& ch = config.ggcnn_channels;
  const auto& k = config.ggcnn_kernels;
  c1_ = Conv2d(params_, "baseline.conv0", config.input_channels, ch[0], k[0], 2, k[0] / 2, rng);
  c2_ = Conv2d(params_, "baseline.conv1", ch[0], ch[1], k[1], 2, k[1] / 2, rng);
  c3_ = Conv2d(params_, "baseline.conv2", ch[1], ch[2], k[2], 1, k[2] / 2, rng);
  t1_ = ConvTranspose2d(params_, "baseline.up0", ch[2], ch[1], 4, 2, 1, rng);
  t2_ = ConvTranspose2d(params_, "baseline.up1", ch[1], ch[0], 4, 2, 1, rng);
  heads_ = GraspHeads(params_, "baseline.out", ch[0], rng);
}

Param BaselineNet::forward(const Param& x) const {
  Param h = ops::relu(c1_.forward(x));
  h = ops::relu(c2_.forward(h));
  h = ops::relu(c3_.forward(h));
  h = ops::relu(t1_.forward(h));
  h = ops::relu(t2_.forward(h));
  return heads_.forward(h);
}

// ---- Composites ------------------------------------------------------------

VqVae::VqVae(const NetworkConfig& cfg, Rng& rng)
    : config(cfg),
      encoder(cfg, rng),
      codebook(Codebook<float>::random(cfg.codebook_size, cfg.embedding_dim, rng)),
      decoder(cfg, rng) {}

ParamList VqVae::params() const {
  ParamList all;
  all.append(encoder.params());
  all.insert("codebook.embeddings", codebook.embeddings);
  all.append(decoder.params());
  return all;
}

namespace {

void check_batch(const Param& x, const char* what) {
  if (x.shape().size() != 4) throw ShapeError(std::string(what) + " expects B x C x H x W, got " + shape_str(x.shape()));
}

}  // namespace

VqVaeOutput vqvae_forward(const Encoder& encoder, const Codebook<float>& codebook, const Decoder& decoder,
                          const Param& x) {
  check_batch(x, "vqvae_forward");
  VqVaeOutput out;
  out.z_e = encoder.forward(x);
  out.quantization = quantize(out.z_e, codebook);
  out.reconstruction = decoder.forward(out.quantization.decoder_input);
  if (out.reconstruction.shape() != x.shape())
    throw ShapeError("reconstruction " + shape_str(out.reconstruction.shape()) + " does not match input " +
                     shape_str(x.shape()));
  return out;
}

Param vqvae_loss(const Param& x, const VqVaeOutput& out, double beta) {
  return vq_loss(ops::mse_loss(out.reconstruction, ops::stop_gradient(x)), out.quantization,
                 static_cast<float>(beta));
}

Param grasp_forward(const Encoder& encoder, const Codebook<float>& codebook, const GraspHead& head,
                    const Param& x) {
  check_batch(x, "grasp_forward");
  if (encoder.params().any_trainable() || codebook.embeddings.requires_grad())
    throw ConfigError("grasp training requires the encoder and codebook to be frozen");
  const Param z_e = encoder.forward(x);
  const auto q = quantize(z_e, codebook);
  return head.forward(q.z_q);
}

Param grasp_loss(const Param& predicted, const Param& target) {
  if (predicted.shape() != target.shape() || predicted.shape().size() != 4 ||
      predicted.shape()[1] != NetworkConfig::grasp_output_channels)
    throw ShapeError("grasp_loss expects matching B x 4 x H x W tensors, got " + shape_str(predicted.shape()) +
                     " and " + shape_str(target.shape()));
  // Mean over all elements is mean over channels; times 4 sums the channel MSEs.
  return ops::scale(ops::mse_loss(predicted, target), 4.0f);
}

}  // namespace graspvq
