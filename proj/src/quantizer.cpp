#include "graspvq/quantizer.hpp"

#include <cmath>
#include <stdexcept>

#include "graspvq/ops.hpp"

namespace graspvq {

template <typename T>
Codebook<T>::Codebook(Tensor<T> table) {
  if (table.rank() != 2) throw ShapeError("codebook must be K x D, got " + shape_str(table.shape()));
  if (table.dim(0) < 2) throw ShapeError("codebook needs at least 2 embeddings");
  if (!table.all_finite()) throw std::invalid_argument("codebook values must be finite");
  embeddings = Var<T>::leaf(std::move(table), true);
}

template <typename T>
Codebook<T> Codebook<T>::random(int K, int D, Rng& rng) {
  if (K < 2 || D < 1) throw ShapeError("codebook needs K >= 2 and D >= 1");
  Tensor<T> table({K, D});
  const double bound = 1.0 / K;
  for (auto& v : table.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return Codebook(std::move(table));
}

template <typename T>
std::vector<std::int32_t> nearest_codes(const Tensor<T>& z_e, const Tensor<T>& table) {
  const Shape& s = z_e.shape();
  if (s.size() != 3 && s.size() != 4) throw ShapeError("z_e must be B x D x h x w, got " + shape_str(s));
  const std::size_t off = s.size() - 3;
  const std::int64_t B = off ? s[0] : 1, D = s[off], hw = s[off + 1] * s[off + 2];
  const std::int64_t K = table.dim(0);
  if (table.dim(1) != D) {
    throw ShapeError("z_e dimension " + std::to_string(off) + " (channels) is " + std::to_string(D) +
                     " but the codebook dimension is " + std::to_string(table.dim(1)));
  }
  std::vector<std::int32_t> out(static_cast<std::size_t>(B * hw));
  std::vector<double> vec(static_cast<std::size_t>(D));
  for (std::int64_t b = 0; b < B; ++b) {
    const T* base = z_e.data() + b * D * hw;
    for (std::int64_t p = 0; p < hw; ++p) {
      for (std::int64_t d = 0; d < D; ++d) vec[d] = base[d * hw + p];
      std::int32_t best = 0;
      double best_d = 0.0;
      for (std::int64_t k = 0; k < K; ++k) {
        const T* row = table.data() + k * D;
        double dist = 0.0;
        for (std::int64_t d = 0; d < D; ++d) {
          const double diff = vec[d] - static_cast<double>(row[d]);
          dist += diff * diff;
        }
        if (k == 0 || dist < best_d) {
          best_d = dist;
          best = static_cast<std::int32_t>(k);
        }
      }
      out[static_cast<std::size_t>(b * hw + p)] = best;
    }
  }
  return out;
}

template <typename T>
QuantizationResult<T> quantize(const Var<T>& z_e, const Codebook<T>& codebook) {
  Var<T> x = z_e;
  if (z_e.shape().size() == 3) {
    // Unbatched input: view as a batch of one.
    const Shape& s = z_e.shape();
    x = make_op<T>("unsqueeze", z_e.value().reshaped({1, s[0], s[1], s[2]}), {z_e},
                   [src = z_e.shared()](Node<T>& self) { src->accumulate(self.grad.values()); });
  }
  const Shape& s = x.shape();
  QuantizationResult<T> r;
  r.indices = nearest_codes(x.value(), codebook.embeddings.value());
  r.z_q = ops::gather_rows(codebook.embeddings, r.indices, s[0], s[2], s[3]);
  const T per_position = T(1) / static_cast<T>(s[0] * s[2] * s[3]);
  r.codebook_loss = ops::sum_squared_error(ops::stop_gradient(x), r.z_q, per_position);
  r.commitment_loss = ops::sum_squared_error(x, ops::stop_gradient(r.z_q), per_position);
  r.decoder_input = ops::straight_through(x, r.z_q);
  return r;
}

double vq_loss(double recon_loss, double codebook_loss, double commitment_loss, double beta) {
  return recon_loss + codebook_loss + beta * commitment_loss;
}

template <typename T>
Var<T> vq_loss(const Var<T>& recon_loss, const QuantizationResult<T>& q, T beta) {
  return ops::add(ops::add(recon_loss, q.codebook_loss), ops::scale(q.commitment_loss, beta));
}

double kl_constant(std::int64_t K) {
  if (K < 1) throw std::invalid_argument("K must be positive");
  return std::log(static_cast<double>(K));
}

double perplexity(const std::vector<std::int32_t>& indices, int K) {
  if (indices.empty()) return 1.0;
  std::vector<std::size_t> counts(static_cast<std::size_t>(K), 0);
  for (auto i : indices) {
    if (i < 0 || i >= K) throw std::out_of_range("code index " + std::to_string(i) + " outside [0, K)");
    ++counts[static_cast<std::size_t>(i)];
  }
  double entropy = 0.0;
  const double n = static_cast<double>(indices.size());
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

#define GRASPVQ_INSTANTIATE(T)                                                                  \
  template struct Codebook<T>;                                                                  \
  template std::vector<std::int32_t> nearest_codes<T>(const Tensor<T>&, const Tensor<T>&);     \
  template QuantizationResult<T> quantize<T>(const Var<T>&, const Codebook<T>&);                \
  template Var<T> vq_loss<T>(const Var<T>&, const QuantizationResult<T>&, T);
GRASPVQ_INSTANTIATE(float)
GRASPVQ_INSTANTIATE(double)
#undef GRASPVQ_INSTANTIATE

}  // namespace graspvq
