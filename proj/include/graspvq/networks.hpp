#pragma once

#include <cstdint>
#include <memory>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "graspvq/layers.hpp"
#include "graspvq/quantizer.hpp"

namespace graspvq {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NetworkConfig {
  static constexpr int grasp_output_channels = 4;

  int input_channels = 3;
  int input_size = 128;
  int downsample_factor = 4;
  int embedding_dim = 64;
  int codebook_size = 512;
  double beta = 0.25;
  std::vector<int> encoder_channels{32, 64};  // one entry per stride-2 block
  int residual_blocks = 2;
  std::vector<int> ggcnn_channels{32, 16, 8};
  std::vector<int> ggcnn_kernels{9, 5, 3};
  int norm_groups = 8;  // 0 disables group normalization
  bool init_head_from_decoder = false;

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;
  int latent_size() const { return input_size / downsample_factor; }

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static NetworkConfig from_json(const nlohmann::json& j);
  /// FNV-1a of the canonical JSON form, as 16 hex digits.
  std::string fingerprint() const;
};

/// C x S x S -> D x S/f x S/f.
class Encoder {
 public:
  Encoder(const NetworkConfig& config, Rng& rng);
  Param forward(const Param& x) const;
  ParamList& params() { return params_; }
  const ParamList& params() const { return params_; }

 private:
  ParamList params_;
  std::vector<Conv2d> down_;
  std::vector<GroupNorm> norms_;
  std::vector<ResidualBlock> res_;
  Conv2d project_;
};

/// Decoder body: D x S/f x S/f -> encoder_channels[0] x S x S.
class DecoderTrunk {
 public:
  DecoderTrunk(const NetworkConfig& config, const std::string& prefix, ParamList& params, Rng& rng);
  Param forward(const Param& z) const;

 private:
  Conv2d expand_;
  std::vector<ResidualBlock> res_;
  std::vector<ConvTranspose2d> up_;
  std::vector<GroupNorm> norms_;
};

/// Trunk followed by a 3x3 projection to C channels and a sigmoid.
class Decoder {
 public:
  Decoder(const NetworkConfig& config, Rng& rng);
  Param forward(const Param& z) const;
  ParamList& params() { return params_; }
  const ParamList& params() const { return params_; }

 private:
  ParamList params_;
  std::unique_ptr<DecoderTrunk> trunk_;
  Conv2d output_;
};

/// Maps 4 channel heads (quality through a sigmoid, the rest linear).
class GraspHeads {
 public:
  GraspHeads() = default;
  GraspHeads(ParamList& params, const std::string& prefix, int in_channels, Rng& rng);
  Param forward(const Param& features) const;

 private:
  Conv2d quality_, sin_, cos_, width_;
};

/// Decoder-architecture trunk, full-resolution convolution stack, four heads.
class GraspHead {
 public:
  GraspHead(const NetworkConfig& config, Rng& rng);
  Param forward(const Param& z_q) const;
  ParamList& params() { return params_; }
  const ParamList& params() const { return params_; }
  /// Copies matching decoder trunk weights in (the optional warm start).
  void init_from_decoder(const Decoder& decoder);

 private:
  ParamList params_;
  std::unique_ptr<DecoderTrunk> trunk_;
  std::vector<Conv2d> stack_;
  GraspHeads heads_;
};

/// Supervised-only image-to-maps network without a bottleneck.
class BaselineNet {
 public:
  BaselineNet(const NetworkConfig& config, Rng& rng);
  Param forward(const Param& x) const;
  ParamList& params() { return params_; }
  const ParamList& params() const { return params_; }

 private:
  ParamList params_;
  Conv2d c1_, c2_, c3_;
  ConvTranspose2d t1_, t2_;
  GraspHeads heads_;
};

/// Encoder, codebook and decoder with one shared config.
struct VqVae {
  NetworkConfig config;
  Encoder encoder;
  Codebook<float> codebook;
  Decoder decoder;

  VqVae(const NetworkConfig& config, Rng& rng);
  /// encoder, codebook, decoder in that order.
  ParamList params() const;
};

struct VqVaeOutput {
  Param reconstruction;
  Param z_e;
  QuantizationResult<float> quantization;
};

VqVaeOutput vqvae_forward(const Encoder& encoder, const Codebook<float>& codebook, const Decoder& decoder,
                          const Param& x);

/// Reconstruction MSE + codebook + beta * commitment.
Param vqvae_loss(const Param& x, const VqVaeOutput& out, double beta);

/// Requires the encoder and codebook to be frozen; throws ConfigError otherwise.
Param grasp_forward(const Encoder& encoder, const Codebook<float>& codebook, const GraspHead& head,
                    const Param& x);

/// Mean squared error per channel, summed over the four channels.
Param grasp_loss(const Param& predicted, const Param& target);

}  // namespace graspvq
