#pragma once

#include <cstdint>
#include <vector>

#include "graspvq/autograd.hpp"
#include "graspvq/rng.hpp"

namespace graspvq {

/// Learned K x D embedding table.
template <typename T>
struct Codebook {
  Var<T> embeddings;

  Codebook() = default;
  explicit Codebook(Tensor<T> table);
  /// Uniform init in [-1/K, 1/K].
  static Codebook random(int K, int D, Rng& rng);

  int size() const { return static_cast<int>(embeddings.shape()[0]); }
  int dim() const { return static_cast<int>(embeddings.shape()[1]); }
};

template <typename T>
struct QuantizationResult {
  Var<T> z_q;                         // B x D x h x w, rows copied from the codebook
  Var<T> decoder_input;               // straight-through of z_e onto z_q
  std::vector<std::int32_t> indices;  // B * h * w, row-major
  Var<T> codebook_loss;
  Var<T> commitment_loss;
};

/// Nearest embedding per spatial position; ties go to the lowest index.
/// z_e: B x D x h x w, or D x h x w (treated as B = 1).
template <typename T>
std::vector<std::int32_t> nearest_codes(const Tensor<T>& z_e, const Tensor<T>& table);

template <typename T>
QuantizationResult<T> quantize(const Var<T>& z_e, const Codebook<T>& codebook);

double vq_loss(double recon_loss, double codebook_loss, double commitment_loss, double beta);
template <typename T>
Var<T> vq_loss(const Var<T>& recon_loss, const QuantizationResult<T>& q, T beta);

/// log K. The KL term against a uniform prior; reported, never optimized.
double kl_constant(std::int64_t K);

/// exp(entropy) of the code usage histogram, in [1, K].
double perplexity(const std::vector<std::int32_t>& indices, int K);

}  // namespace graspvq
