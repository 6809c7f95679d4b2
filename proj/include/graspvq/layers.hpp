#pragma once

#include <string>
#include <vector>

#include "graspvq/autograd.hpp"
#include "graspvq/rng.hpp"

namespace graspvq {

using Param = Var<float>;

struct NamedParam {
  std::string name;
  Param var;
};

/// Ordered, named parameter collection. Order is construction order and is
/// what checkpoints serialize.
class ParamList {
 public:
  Param add(std::string name, Tensor<float> value);
  /// Registers an existing variable under a name.
  void insert(std::string name, Param var);
  void append(const ParamList& other);

  const std::vector<NamedParam>& items() const { return items_; }
  std::vector<Param> vars() const;
  std::int64_t count() const;  // total scalar parameters
  void set_trainable(bool on);
  bool any_trainable() const;
  /// Concatenated copy of every value, for bit-equality checks.
  std::vector<float> snapshot() const;

 private:
  std::vector<NamedParam> items_;
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamList& params, const std::string& name, int in, int out, int kernel, int stride, int padding,
         Rng& rng);
  Param forward(const Param& x) const;
  int out_channels() const { return out_; }

 private:
  Param weight_, bias_;
  int out_ = 0, stride_ = 1, padding_ = 0;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParamList& params, const std::string& name, int in, int out, int kernel, int stride,
                  int padding, Rng& rng);
  Param forward(const Param& x) const;

 private:
  Param weight_, bias_;
  int stride_ = 1, padding_ = 0;
};

/// Identity when groups == 0. Groups are reduced to gcd(groups, channels).
class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(ParamList& params, const std::string& name, int channels, int groups);
  Param forward(const Param& x) const;

 private:
  Param gamma_, beta_;
  int groups_ = 0;
};

/// x + conv1x1(relu(conv3x3(relu(x)))).
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(ParamList& params, const std::string& name, int channels, Rng& rng);
  Param forward(const Param& x) const;

 private:
  Conv2d conv3_, conv1_;
};

}  // namespace graspvq
