#include "graspvq/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <memory>

namespace graspvq::ops {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<MatR<T>>;
template <typename T>
using CMap = Eigen::Map<const MatR<T>>;

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": rank mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) {
      throw ShapeError(std::string(op) + ": dimension " + std::to_string(i) + " differs (" +
                       std::to_string(a[i]) + " vs " + std::to_string(b[i]) + ")");
    }
  }
}

void require_rank(const Shape& s, std::size_t rank, const char* op, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + shape_str(s));
  }
}

void require_dim(std::int64_t got, std::int64_t want, const char* op, const std::string& what) {
  if (got != want) {
    throw ShapeError(std::string(op) + ": " + what + " is " + std::to_string(got) + ", expected " +
                     std::to_string(want));
  }
}

// Geometry of one sliding-window pass over a C x H x W image.
struct Window {
  std::int64_t channels, height, width, kernel, stride, padding, out_h, out_w;
};

template <typename T>
void im2col(const T* img, const Window& w, T* cols) {
  const std::int64_t positions = w.out_h * w.out_w;
  for (std::int64_t c = 0; c < w.channels; ++c) {
    for (std::int64_t ky = 0; ky < w.kernel; ++ky) {
      for (std::int64_t kx = 0; kx < w.kernel; ++kx) {
        T* row = cols + ((c * w.kernel + ky) * w.kernel + kx) * positions;
        const T* plane = img + c * w.height * w.width;
        for (std::int64_t oy = 0; oy < w.out_h; ++oy) {
          const std::int64_t iy = oy * w.stride - w.padding + ky;
          T* dst = row + oy * w.out_w;
          if (iy < 0 || iy >= w.height) {
            std::fill(dst, dst + w.out_w, T{0});
            continue;
          }
          const T* src = plane + iy * w.width;
          for (std::int64_t ox = 0; ox < w.out_w; ++ox) {
            const std::int64_t ix = ox * w.stride - w.padding + kx;
            dst[ox] = (ix >= 0 && ix < w.width) ? src[ix] : T{0};
          }
        }
      }
    }
  }
}

// Scatter-add adjoint of im2col.
template <typename T>
void col2im(const T* cols, const Window& w, T* img) {
  const std::int64_t positions = w.out_h * w.out_w;
  for (std::int64_t c = 0; c < w.channels; ++c) {
    for (std::int64_t ky = 0; ky < w.kernel; ++ky) {
      for (std::int64_t kx = 0; kx < w.kernel; ++kx) {
        const T* row = cols + ((c * w.kernel + ky) * w.kernel + kx) * positions;
        T* plane = img + c * w.height * w.width;
        for (std::int64_t oy = 0; oy < w.out_h; ++oy) {
          const std::int64_t iy = oy * w.stride - w.padding + ky;
          if (iy < 0 || iy >= w.height) continue;
          const T* src = row + oy * w.out_w;
          T* dst = plane + iy * w.width;
          for (std::int64_t ox = 0; ox < w.out_w; ++ox) {
            const std::int64_t ix = ox * w.stride - w.padding + kx;
            if (ix >= 0 && ix < w.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const Window& w) { return w.kernel == 1 && w.stride == 1 && w.padding == 0; }

template <typename T>
void add_bias(T* out, const T* bias, std::int64_t channels, std::int64_t plane) {
  for (std::int64_t c = 0; c < channels; ++c) {
    T* p = out + c * plane;
    for (std::int64_t i = 0; i < plane; ++i) p[i] += bias[c];
  }
}

template <typename T>
void accumulate_bias_grad(const T* g, std::int64_t batch, std::int64_t channels, std::int64_t plane,
                          Node<T>& bias) {
  Tensor<T>& gb = bias.grad_buffer();
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t c = 0; c < channels; ++c) {
      const T* p = g + (b * channels + c) * plane;
      T acc{0};
      for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
      gb[c] += acc;
    }
  }
}

template <typename T, typename Fn>
Tensor<T> elementwise(const Var<T>& a, Fn fn) {
  Tensor<T> out(a.shape());
  const T* src = a.value().data();
  T* dst = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) dst[i] = fn(src[i]);
  return out;
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += pb[i];
  return make_op<T>("add", std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad) in->accumulate(self.grad.values());
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] -= pb[i];
  return make_op<T>("sub", std::move(out), {a, b}, [](Node<T>& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad.values());
    if (self.inputs[1]->requires_grad) {
      Tensor<T>& g = self.inputs[1]->grad_buffer();
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= pb[i];
  return make_op<T>("mul", std::move(out), {a, b}, [](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    Node<T>& nb = *self.inputs[1];
    if (na.requires_grad) {
      Tensor<T>& g = na.grad_buffer();
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * nb.value[i];
    }
    if (nb.requires_grad) {
      Tensor<T>& g = nb.grad_buffer();
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * na.value[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = elementwise(a, [factor](T v) { return v * factor; });
  return make_op<T>("scale", std::move(out), {a}, [factor](Node<T>& self) {
    Tensor<T>& g = self.inputs[0]->grad_buffer();
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * factor;
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = elementwise(x, [](T v) { return v > T{0} ? v : T{0}; });
  return make_op<T>("relu", std::move(out), {x}, [](Node<T>& self) {
    Tensor<T>& g = self.inputs[0]->grad_buffer();
    for (std::int64_t i = 0; i < g.numel(); ++i)
      if (self.value[i] > T{0}) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out = elementwise(x, [](T v) { return T{1} / (T{1} + std::exp(-v)); });
  return make_op<T>("sigmoid", std::move(out), {x}, [](Node<T>& self) {
    Tensor<T>& g = self.inputs[0]->grad_buffer();
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      const T s = self.value[i];
      g[i] += self.grad[i] * s * (T{1} - s);
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T acc{0};
  for (T v : x.value().values()) acc += v;
  return make_op<T>("sum", Tensor<T>({1}, {acc}), {x}, [](Node<T>& self) {
    Tensor<T>& g = self.inputs[0]->grad_buffer();
    const T up = self.grad[0];
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += up;
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T{1} / static_cast<T>(x.value().numel()));
}

template <typename T>
Var<T> sum_squared_error(const Var<T>& a, const Var<T>& b, T factor) {
  require_same_shape(a.shape(), b.shape(), "sum_squared_error");
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  T acc{0};
  for (std::int64_t i = 0; i < a.value().numel(); ++i) {
    const T d = pa[i] - pb[i];
    acc += d * d;
  }
  return make_op<T>("mse-loss", Tensor<T>({1}, {factor * acc}), {a, b}, [factor](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    Node<T>& nb = *self.inputs[1];
    const T up = T{2} * factor * self.grad[0];
    const std::int64_t n = na.value.numel();
    if (na.requires_grad) {
      Tensor<T>& g = na.grad_buffer();
      for (std::int64_t i = 0; i < n; ++i) g[i] += up * (na.value[i] - nb.value[i]);
    }
    if (nb.requires_grad) {
      Tensor<T>& g = nb.grad_buffer();
      for (std::int64_t i = 0; i < n; ++i) g[i] -= up * (na.value[i] - nb.value[i]);
    }
  });
}

template <typename T>
Var<T> mse_loss(const Var<T>& a, const Var<T>& b) {
  return sum_squared_error(a, b, T{1} / static_cast<T>(a.value().numel()));
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  require_rank(x.shape(), 2, "linear", "input");
  require_rank(weight.shape(), 2, "linear", "weight");
  const std::int64_t n = x.shape()[0], in = x.shape()[1], out_f = weight.shape()[0];
  require_dim(weight.shape()[1], in, "linear", "weight dimension 1 (input features)");
  if (bias.valid()) require_dim(bias.value().numel(), out_f, "linear", "bias length");

  Tensor<T> out({n, out_f});
  Map<T>(out.data(), n, out_f).noalias() =
      CMap<T>(x.value().data(), n, in) * CMap<T>(weight.value().data(), out_f, in).transpose();
  if (bias.valid()) {
    for (std::int64_t r = 0; r < n; ++r)
      for (std::int64_t c = 0; c < out_f; ++c) out[r * out_f + c] += bias.value()[c];
  }
  std::vector<Var<T>> inputs{x, weight};
  if (bias.valid()) inputs.push_back(bias);
  return make_op<T>("linear", std::move(out), std::move(inputs), [n, in, out_f](Node<T>& self) {
    CMap<T> g(self.grad.data(), n, out_f);
    Node<T>& nx = *self.inputs[0];
    Node<T>& nw = *self.inputs[1];
    if (nx.requires_grad) {
      Map<T>(nx.grad_buffer().data(), n, in).noalias() += g * CMap<T>(nw.value.data(), out_f, in);
    }
    if (nw.requires_grad) {
      Map<T>(nw.grad_buffer().data(), out_f, in).noalias() +=
          g.transpose() * CMap<T>(nx.value.data(), n, in);
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      Tensor<T>& gb = self.inputs[2]->grad_buffer();
      for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t c = 0; c < out_f; ++c) gb[c] += g(r, c);
    }
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding) {
  require_rank(x.shape(), 4, "conv2d", "input");
  require_rank(weight.shape(), 4, "conv2d", "weight");
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
  const std::int64_t batch = x.shape()[0], channels = x.shape()[1];
  const std::int64_t height = x.shape()[2], width = x.shape()[3];
  const std::int64_t out_c = weight.shape()[0], kernel = weight.shape()[2];
  require_dim(weight.shape()[1], channels, "conv2d", "weight dimension 1 (input channels)");
  require_dim(weight.shape()[3], kernel, "conv2d", "weight dimension 3 (kernel width)");
  if (bias.valid()) require_dim(bias.value().numel(), out_c, "conv2d", "bias length");
  const std::int64_t out_h = (height + 2 * padding - kernel) / stride + 1;
  const std::int64_t out_w = (width + 2 * padding - kernel) / stride + 1;
  if (out_h <= 0 || out_w <= 0) {
    throw ShapeError("conv2d: dimension 2/3 (spatial) " + std::to_string(height) + "x" +
                     std::to_string(width) + " too small for kernel " + std::to_string(kernel));
  }
  const Window win{channels, height, width, kernel, stride, padding, out_h, out_w};
  const std::int64_t patch = channels * kernel * kernel, positions = out_h * out_w;
  const bool pointwise = is_pointwise(win);

  Tensor<T> out({batch, out_c, out_h, out_w});
  std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(patch * positions));
  CMap<T> wmat(weight.value().data(), out_c, patch);
  for (std::int64_t b = 0; b < batch; ++b) {
    const T* img = x.value().data() + b * channels * height * width;
    const T* col_ptr = img;
    if (!pointwise) {
      im2col(img, win, cols.data());
      col_ptr = cols.data();
    }
    T* dst = out.data() + b * out_c * positions;
    Map<T>(dst, out_c, positions).noalias() = wmat * CMap<T>(col_ptr, patch, positions);
    if (bias.valid()) add_bias(dst, bias.value().data(), out_c, positions);
  }

  std::vector<Var<T>> inputs{x, weight};
  if (bias.valid()) inputs.push_back(bias);
  return make_op<T>("conv2d", std::move(out), std::move(inputs), [win, batch, out_c](Node<T>& self) {
    Node<T>& nx = *self.inputs[0];
    Node<T>& nw = *self.inputs[1];
    const std::int64_t patch = win.channels * win.kernel * win.kernel;
    const std::int64_t positions = win.out_h * win.out_w;
    const std::int64_t in_plane = win.channels * win.height * win.width;
    const bool pointwise = is_pointwise(win);
    std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(patch * positions));
    MatR<T> dcols;
    for (std::int64_t b = 0; b < batch; ++b) {
      CMap<T> g(self.grad.data() + b * out_c * positions, out_c, positions);
      if (nw.requires_grad) {
        const T* col_ptr = nx.value.data() + b * in_plane;
        if (!pointwise) {
          im2col(col_ptr, win, cols.data());
          col_ptr = cols.data();
        }
        Map<T>(nw.grad_buffer().data(), out_c, patch).noalias() +=
            g * CMap<T>(col_ptr, patch, positions).transpose();
      }
      if (nx.requires_grad) {
        CMap<T> wmat(nw.value.data(), out_c, patch);
        T* gx = nx.grad_buffer().data() + b * in_plane;
        if (pointwise) {
          Map<T>(gx, patch, positions).noalias() += wmat.transpose() * g;
        } else {
          dcols.noalias() = wmat.transpose() * g;
          col2im(dcols.data(), win, gx);
        }
      }
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      accumulate_bias_grad(self.grad.data(), batch, out_c, positions, *self.inputs[2]);
    }
  });
}

template <typename T>
Var<T> conv2d_transpose(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride,
                        int padding) {
  require_rank(x.shape(), 4, "conv2d_transpose", "input");
  require_rank(weight.shape(), 4, "conv2d_transpose", "weight");
  if (stride < 1 || padding < 0) {
    throw ShapeError("conv2d_transpose: stride must be >= 1 and padding >= 0");
  }
  const std::int64_t batch = x.shape()[0], in_c = x.shape()[1];
  const std::int64_t in_h = x.shape()[2], in_w = x.shape()[3];
  const std::int64_t out_c = weight.shape()[1], kernel = weight.shape()[2];
  require_dim(weight.shape()[0], in_c, "conv2d_transpose", "weight dimension 0 (input channels)");
  require_dim(weight.shape()[3], kernel, "conv2d_transpose", "weight dimension 3 (kernel width)");
  if (bias.valid()) require_dim(bias.value().numel(), out_c, "conv2d_transpose", "bias length");
  const std::int64_t out_h = (in_h - 1) * stride - 2 * padding + kernel;
  const std::int64_t out_w = (in_w - 1) * stride - 2 * padding + kernel;
  if (out_h <= 0 || out_w <= 0) {
    throw ShapeError("conv2d_transpose: dimension 2/3 (spatial) output would be empty");
  }
  // The window slides over the output image and visits in_h x in_w positions.
  const Window win{out_c, out_h, out_w, kernel, stride, padding, in_h, in_w};
  const std::int64_t patch = out_c * kernel * kernel, positions = in_h * in_w;

  Tensor<T> out({batch, out_c, out_h, out_w});
  MatR<T> cols;
  CMap<T> wmat(weight.value().data(), in_c, patch);
  for (std::int64_t b = 0; b < batch; ++b) {
    cols.noalias() =
        wmat.transpose() * CMap<T>(x.value().data() + b * in_c * positions, in_c, positions);
    T* dst = out.data() + b * out_c * out_h * out_w;
    col2im(cols.data(), win, dst);
    if (bias.valid()) add_bias(dst, bias.value().data(), out_c, out_h * out_w);
  }

  std::vector<Var<T>> inputs{x, weight};
  if (bias.valid()) inputs.push_back(bias);
  return make_op<T>("conv2d-transpose", std::move(out), std::move(inputs),
                    [win, batch, in_c](Node<T>& self) {
                      Node<T>& nx = *self.inputs[0];
                      Node<T>& nw = *self.inputs[1];
                      const std::int64_t patch = win.channels * win.kernel * win.kernel;
                      const std::int64_t positions = win.out_h * win.out_w;
                      const std::int64_t out_plane = win.channels * win.height * win.width;
                      std::vector<T> gcols(static_cast<std::size_t>(patch * positions));
                      for (std::int64_t b = 0; b < batch; ++b) {
                        im2col(self.grad.data() + b * out_plane, win, gcols.data());
                        CMap<T> gc(gcols.data(), patch, positions);
                        if (nx.requires_grad) {
                          Map<T>(nx.grad_buffer().data() + b * in_c * positions, in_c, positions)
                              .noalias() += CMap<T>(nw.value.data(), in_c, patch) * gc;
                        }
                        if (nw.requires_grad) {
                          Map<T>(nw.grad_buffer().data(), in_c, patch).noalias() +=
                              CMap<T>(nx.value.data() + b * in_c * positions, in_c, positions) *
                              gc.transpose();
                        }
                      }
                      if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                        accumulate_bias_grad(self.grad.data(), batch, win.channels,
                                             win.height * win.width, *self.inputs[2]);
                      }
                    });
}

template <typename T>
Var<T> group_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, int groups, T eps) {
  require_rank(x.shape(), 4, "group_norm", "input");
  const std::int64_t batch = x.shape()[0], channels = x.shape()[1];
  const std::int64_t plane = x.shape()[2] * x.shape()[3];
  if (groups < 1 || channels % groups != 0) {
    throw ShapeError("group_norm: dimension 1 (channels) " + std::to_string(channels) +
                     " not divisible by " + std::to_string(groups) + " groups");
  }
  require_dim(gamma.value().numel(), channels, "group_norm", "gamma length");
  require_dim(beta.value().numel(), channels, "group_norm", "beta length");
  const std::int64_t per_group = channels / groups;
  const std::int64_t group_size = per_group * plane;

  auto normalized = std::make_shared<Tensor<T>>(x.shape());
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(batch * groups));
  Tensor<T> out(x.shape());
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t g = 0; g < groups; ++g) {
      const std::int64_t base = (b * channels + g * per_group) * plane;
      const T* src = x.value().data() + base;
      T mu{0};
      for (std::int64_t i = 0; i < group_size; ++i) mu += src[i];
      mu /= static_cast<T>(group_size);
      T var{0};
      for (std::int64_t i = 0; i < group_size; ++i) var += (src[i] - mu) * (src[i] - mu);
      var /= static_cast<T>(group_size);
      const T is = T{1} / std::sqrt(var + eps);
      (*inv_std)[static_cast<std::size_t>(b * groups + g)] = is;
      for (std::int64_t c = 0; c < per_group; ++c) {
        const std::int64_t ch = g * per_group + c;
        const T gm = gamma.value()[ch], bt = beta.value()[ch];
        for (std::int64_t i = 0; i < plane; ++i) {
          const std::int64_t idx = base + c * plane + i;
          const T xh = (x.value()[idx] - mu) * is;
          (*normalized)[idx] = xh;
          out[idx] = gm * xh + bt;
        }
      }
    }
  }
  return make_op<T>(
      "group-norm", std::move(out), {x, gamma, beta},
      [=](Node<T>& self) {
        Node<T>& nx = *self.inputs[0];
        Node<T>& ng = *self.inputs[1];
        Node<T>& nb = *self.inputs[2];
        const Tensor<T>& xh = *normalized;
        if (ng.requires_grad || nb.requires_grad) {
          Tensor<T>& gg = ng.grad_buffer();
          Tensor<T>& gb = nb.grad_buffer();
          for (std::int64_t b = 0; b < batch; ++b)
            for (std::int64_t c = 0; c < channels; ++c) {
              const std::int64_t base = (b * channels + c) * plane;
              T sg{0}, sb{0};
              for (std::int64_t i = 0; i < plane; ++i) {
                sg += self.grad[base + i] * xh[base + i];
                sb += self.grad[base + i];
              }
              gg[c] += sg;
              gb[c] += sb;
            }
        }
        if (!nx.requires_grad) return;
        Tensor<T>& gx = nx.grad_buffer();
        for (std::int64_t b = 0; b < batch; ++b) {
          for (std::int64_t g = 0; g < groups; ++g) {
            const std::int64_t base = (b * channels + g * per_group) * plane;
            T mean_d{0}, mean_dx{0};
            for (std::int64_t c = 0; c < per_group; ++c) {
              const T gm = ng.value[g * per_group + c];
              for (std::int64_t i = 0; i < plane; ++i) {
                const std::int64_t idx = base + c * plane + i;
                const T d = self.grad[idx] * gm;
                mean_d += d;
                mean_dx += d * xh[idx];
              }
            }
            mean_d /= static_cast<T>(group_size);
            mean_dx /= static_cast<T>(group_size);
            const T is = (*inv_std)[static_cast<std::size_t>(b * groups + g)];
            for (std::int64_t c = 0; c < per_group; ++c) {
              const T gm = ng.value[g * per_group + c];
              for (std::int64_t i = 0; i < plane; ++i) {
                const std::int64_t idx = base + c * plane + i;
                const T d = self.grad[idx] * gm;
                gx[idx] += is * (d - mean_d - xh[idx] * mean_dx);
              }
            }
          }
        }
      });
}

template <typename T>
Var<T> stop_gradient(const Var<T>& x) {
  auto node = std::make_shared<Node<T>>();
  node->value = x.value();
  node->kind = "stop-gradient";
  return Var<T>(std::move(node));
}

template <typename T>
Var<T> straight_through(const Var<T>& continuous, const Var<T>& quantized) {
  require_same_shape(continuous.shape(), quantized.shape(), "straight_through");
  return make_op<T>("straight-through", quantized.value(), {continuous}, [](Node<T>& self) {
    self.inputs[0]->accumulate(self.grad.values());
  });
}

template <typename T>
Var<T> gather_rows(const Var<T>& table, const std::vector<std::int32_t>& indices,
                   std::int64_t batch, std::int64_t height, std::int64_t width) {
  require_rank(table.shape(), 2, "gather_rows", "table");
  const std::int64_t rows = table.shape()[0], dim = table.shape()[1];
  const std::int64_t plane = height * width;
  require_dim(static_cast<std::int64_t>(indices.size()), batch * plane, "gather_rows",
              "index count");
  for (auto idx : indices) {
    if (idx < 0 || idx >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(idx) + " outside dimension 0 of size " +
                       std::to_string(rows));
    }
  }
  Tensor<T> out({batch, dim, height, width});
  const T* tab = table.value().data();
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t p = 0; p < plane; ++p) {
      const T* row = tab + indices[static_cast<std::size_t>(b * plane + p)] * dim;
      for (std::int64_t d = 0; d < dim; ++d) out[(b * dim + d) * plane + p] = row[d];
    }
  return make_op<T>("gather", std::move(out), {table}, [indices, batch, plane, dim](Node<T>& self) {
    Tensor<T>& g = self.inputs[0]->grad_buffer();
    for (std::int64_t b = 0; b < batch; ++b)
      for (std::int64_t p = 0; p < plane; ++p) {
        T* row = g.data() + indices[static_cast<std::size_t>(b * plane + p)] * dim;
        for (std::int64_t d = 0; d < dim; ++d) row[d] += self.grad[(b * dim + d) * plane + p];
      }
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& first = parts.front().shape();
  require_rank(first, 4, "concat_channels", "input 0");
  std::int64_t channels = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Shape& s = parts[i].shape();
    require_rank(s, 4, "concat_channels", "input");
    for (std::size_t axis : {0u, 2u, 3u}) {
      require_dim(s[axis], first[axis], "concat_channels",
                  "input " + std::to_string(i) + " dimension " + std::to_string(axis));
    }
    channels += s[1];
  }
  const std::int64_t batch = first[0], plane = first[2] * first[3];
  Tensor<T> out({batch, channels, first[2], first[3]});
  std::vector<std::int64_t> widths;
  for (std::int64_t b = 0; b < batch; ++b) {
    std::int64_t offset = 0;
    for (const auto& p : parts) {
      const std::int64_t span = p.shape()[1] * plane;
      std::copy_n(p.value().data() + b * span, span, out.data() + b * channels * plane + offset);
      offset += span;
    }
  }
  for (const auto& p : parts) widths.push_back(p.shape()[1] * plane);
  return make_op<T>("concat", std::move(out), parts, [widths, batch, channels, plane](Node<T>& self) {
    for (std::int64_t b = 0; b < batch; ++b) {
      std::int64_t offset = 0;
      for (std::size_t i = 0; i < self.inputs.size(); ++i) {
        Node<T>& in = *self.inputs[i];
        if (in.requires_grad) {
          T* dst = in.grad_buffer().data() + b * widths[i];
          const T* src = self.grad.data() + b * channels * plane + offset;
          for (std::int64_t k = 0; k < widths[i]; ++k) dst[k] += src[k];
        }
        offset += widths[i];
      }
    }
  });
}

#define GRASPVQ_INSTANTIATE(T)                                                                   \
  template Var<T> add(const Var<T>&, const Var<T>&);                                             \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                             \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                             \
  template Var<T> scale(const Var<T>&, T);                                                       \
  template Var<T> relu(const Var<T>&);                                                           \
  template Var<T> sigmoid(const Var<T>&);                                                        \
  template Var<T> sum(const Var<T>&);                                                            \
  template Var<T> mean(const Var<T>&);                                                           \
  template Var<T> mse_loss(const Var<T>&, const Var<T>&);                                        \
  template Var<T> sum_squared_error(const Var<T>&, const Var<T>&, T);                            \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                           \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                 \
  template Var<T> conv2d_transpose(const Var<T>&, const Var<T>&, const Var<T>&, int, int);       \
  template Var<T> group_norm(const Var<T>&, const Var<T>&, const Var<T>&, int, T);               \
  template Var<T> stop_gradient(const Var<T>&);                                                  \
  template Var<T> straight_through(const Var<T>&, const Var<T>&);                                \
  template Var<T> gather_rows(const Var<T>&, const std::vector<std::int32_t>&, std::int64_t,     \
                              std::int64_t, std::int64_t);                                       \
  template Var<T> concat_channels(const std::vector<Var<T>>&);

GRASPVQ_INSTANTIATE(float)
GRASPVQ_INSTANTIATE(double)

}  // namespace graspvq::ops
