#include "graspvq/layers.hpp"

#include <cmath>
#include <numeric>

#include "graspvq/ops.hpp"

namespace graspvq {

Param ParamList::add(std::string name, Tensor<float> value) {
  for (const auto& p : items_) {
    if (p.name == name) throw std::invalid_argument("duplicate parameter name " + name);
  }
  auto v = Param::leaf(std::move(value), true);
  items_.push_back({std::move(name), v});
  return v;
}

void ParamList::insert(std::string name, Param var) {
  for (const auto& p : items_) {
    if (p.name == name) throw std::invalid_argument("duplicate parameter name " + name);
  }
  items_.push_back({std::move(name), std::move(var)});
}

void ParamList::append(const ParamList& other) {
  for (const auto& p : other.items_) items_.push_back(p);
}

std::vector<Param> ParamList::vars() const {
  std::vector<Param> out;
  for (const auto& p : items_) out.push_back(p.var);
  return out;
}

std::int64_t ParamList::count() const {
  std::int64_t n = 0;
  for (const auto& p : items_) n += p.var.value().numel();
  return n;
}

void ParamList::set_trainable(bool on) {
  for (auto& p : items_) {
    p.var.set_requires_grad(on);
    p.var.zero_grad();
  }
}

bool ParamList::any_trainable() const {
  for (const auto& p : items_)
    if (p.var.requires_grad()) return true;
  return false;
}

std::vector<float> ParamList::snapshot() const {
  std::vector<float> out;
  for (const auto& p : items_) {
    auto v = p.var.value().values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

namespace {

Tensor<float> uniform_weights(Shape shape, int fan_in, Rng& rng) {
  Tensor<float> w(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : w.values()) v = static_cast<float>(rng.uniform(-bound, bound));
  return w;
}

}  // namespace

Conv2d::Conv2d(ParamList& params, const std::string& name, int in, int out, int kernel, int stride,
               int padding, Rng& rng)
    : out_(out), stride_(stride), padding_(padding) {
  weight_ = params.add(name + ".weight", uniform_weights({out, in, kernel, kernel}, in * kernel * kernel, rng));
  bias_ = params.add(name + ".bias", Tensor<float>({out}));
}

Param Conv2d::forward(const Param& x) const { return ops::conv2d(x, weight_, bias_, stride_, padding_); }

ConvTranspose2d::ConvTranspose2d(ParamList& params, const std::string& name, int in, int out, int kernel,
                                 int stride, int padding, Rng& rng)
    : stride_(stride), padding_(padding) {
  // Each output pixel receives about in * (k / stride)^2 contributions.
  const int fan_in = std::max(1, in * (kernel / stride) * (kernel / stride));
  weight_ = params.add(name + ".weight", uniform_weights({in, out, kernel, kernel}, fan_in, rng));
  bias_ = params.add(name + ".bias", Tensor<float>({out}));
}

Param ConvTranspose2d::forward(const Param& x) const {
  return ops::conv2d_transpose(x, weight_, bias_, stride_, padding_);
}

GroupNorm::GroupNorm(ParamList& params, const std::string& name, int channels, int groups)
    : groups_(groups > 0 ? std::gcd(groups, channels) : 0) {
  if (groups_ == 0) return;
  gamma_ = params.add(name + ".gamma", Tensor<float>({channels}, 1.0f));
  beta_ = params.add(name + ".beta", Tensor<float>({channels}));
}

Param GroupNorm::forward(const Param& x) const {
  if (groups_ == 0) return x;
  return ops::group_norm(x, gamma_, beta_, groups_);
}

ResidualBlock::ResidualBlock(ParamList& params, const std::string& name, int channels, Rng& rng)
    : conv3_(params, name + ".conv3", channels, channels, 3, 1, 1, rng),
      conv1_(params, name + ".conv1", channels, channels, 1, 1, 0, rng) {}

Param ResidualBlock::forward(const Param& x) const {
  return ops::add(x, conv1_.forward(ops::relu(conv3_.forward(ops::relu(x)))));
}

}  // namespace graspvq
