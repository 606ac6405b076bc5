#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "splitdp/error.hpp"
#include "splitdp/rng.hpp"
#include "splitdp/tensor.hpp"

namespace splitdp {

// ---------------------------------------------------------------------------
// Layer specifications
// ---------------------------------------------------------------------------

struct Conv {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Tensor weight;  // [out_channels, in_channels, kernel, kernel]
  Tensor bias;    // [out_channels]

  static Conv make(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride = 1,
                   std::size_t padding = 0) {
    return Conv{cin, cout, k, stride, padding, Tensor(Shape{cout, cin, k, k}), Tensor(Shape{cout})};
  }

  double& w(std::size_t co, std::size_t ci, std::size_t ky, std::size_t kx) {
    return weight[((co * in_channels + ci) * kernel + ky) * kernel + kx];
  }
  double w(std::size_t co, std::size_t ci, std::size_t ky, std::size_t kx) const {
    return weight[((co * in_channels + ci) * kernel + ky) * kernel + kx];
  }
};

struct Relu {};

// Max pooling with stride equal to the window size and no padding.
struct MaxPool {
  std::size_t kernel = 2;
};

struct Flatten {};

struct FullyConnected {
  std::size_t in = 0;
  std::size_t out = 0;
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  static FullyConnected make(std::size_t in, std::size_t out) {
    return FullyConnected{in, out, Tensor(Shape{out, in}), Tensor(Shape{out})};
  }
};

using Layer = std::variant<Conv, Relu, MaxPool, Flatten, FullyConnected>;

inline const char* layer_kind_name(const Layer& layer) {
  constexpr const char* names[] = {"conv", "relu", "maxpool", "flatten", "fc"};
  return names[layer.index()];
}

inline bool has_parameters(const Layer& layer) {
  return std::holds_alternative<Conv>(layer) || std::holds_alternative<FullyConnected>(layer);
}

// Output shape of `layer` applied to `in`. `index` is only used to label
// errors.
inline Shape infer_output_shape(const Layer& layer, const Shape& in, std::size_t index) {
  return std::visit(
      [&](const auto& l) -> Shape {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Conv>) {
          if (in.rank() != 3 || in[0] != l.in_channels) {
            throw ShapeError("conv expects [" + std::to_string(l.in_channels) + ",H,W], got " + in.str(),
                             index);
          }
          if (l.kernel == 0 || l.stride == 0) throw ShapeError("conv kernel and stride must be >= 1", index);
          if (l.weight.shape() != Shape{l.out_channels, l.in_channels, l.kernel, l.kernel} ||
              l.bias.shape() != Shape{l.out_channels}) {
            throw ShapeError("conv weight/bias shapes inconsistent with (C_in, C_out, K)", index);
          }
          const std::size_t h = in[1] + 2 * l.padding;
          const std::size_t w = in[2] + 2 * l.padding;
          if (h < l.kernel || w < l.kernel) throw ShapeError("conv kernel larger than padded input " + in.str(), index);
          return Shape{l.out_channels, (h - l.kernel) / l.stride + 1, (w - l.kernel) / l.stride + 1};
        } else if constexpr (std::is_same_v<T, Relu>) {
          return in;
        } else if constexpr (std::is_same_v<T, MaxPool>) {
          if (in.rank() != 3) throw ShapeError("maxpool expects [C,H,W], got " + in.str(), index);
          if (l.kernel == 0 || in[1] < l.kernel || in[2] < l.kernel) {
            throw ShapeError("maxpool window does not fit input " + in.str(), index);
          }
          return Shape{in[0], in[1] / l.kernel, in[2] / l.kernel};
        } else if constexpr (std::is_same_v<T, Flatten>) {
          return Shape{in.elements()};
        } else {
          if (in.rank() != 1 || in[0] != l.in) {
            throw ShapeError("fc expects [" + std::to_string(l.in) + "], got " + in.str(), index);
          }
          if (l.weight.shape() != Shape{l.out, l.in} || l.bias.shape() != Shape{l.out}) {
            throw ShapeError("fc weight/bias shapes inconsistent with (I, O)", index);
          }
          return Shape{l.out};
        }
      },
      layer);
}

// ---------------------------------------------------------------------------
// ModelGraph: a validated chain of layers.
// ---------------------------------------------------------------------------

class ModelGraph {
 public:
  ModelGraph(Shape input_shape, std::vector<Layer> layers)
      : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
    if (layers_.empty()) throw ShapeError("model must have at least one layer");
    shapes_.reserve(layers_.size() + 1);
    shapes_.push_back(input_shape_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      shapes_.push_back(infer_output_shape(layers_[i], shapes_.back(), i + 1));
    }
  }

  std::size_t depth() const noexcept { return layers_.size(); }
  const Shape& input_shape() const noexcept { return input_shape_; }
  // Shape of the activation after layer m (m = 0 is the input).
  const Shape& shape_at(std::size_t m) const {
    if (m > depth()) throw RangeError("layer index " + std::to_string(m) + " out of range [0, " + std::to_string(depth()) + "]");
    return shapes_[m];
  }
  const Shape& output_shape() const noexcept { return shapes_.back(); }

  // Layer m in 1-based numbering, matching activation indices.
  const Layer& layer(std::size_t m) const { return layers_.at(m - 1); }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  // Mutable views of every weight and bias buffer, in layer order (weight
  // then bias). Shapes cannot change through these views.
  std::vector<std::span<double>> parameter_spans() {
    std::vector<std::span<double>> out;
    for (auto& layer : layers_) {
      if (auto* c = std::get_if<Conv>(&layer)) {
        out.push_back(c->weight.values());
        out.push_back(c->bias.values());
      } else if (auto* f = std::get_if<FullyConnected>(&layer)) {
        out.push_back(f->weight.values());
        out.push_back(f->bias.values());
      }
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) {
      if (const auto* c = std::get_if<Conv>(&layer)) n += c->weight.size() + c->bias.size();
      if (const auto* f = std::get_if<FullyConnected>(&layer)) n += f->weight.size() + f->bias.size();
    }
    return n;
  }

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;
};

// Fills every conv/FC weight with He-uniform values and biases with small
// uniform values drawn from `seed`.
inline void randomize_parameters(ModelGraph& model, std::uint64_t seed) {
  Rng rng(seed);
  std::size_t buffer = 0;
  for (std::size_t m = 1; m <= model.depth(); ++m) {
    const Layer& layer = model.layer(m);
    if (!has_parameters(layer)) continue;
    std::size_t fan_in = 0;
    if (const auto* c = std::get_if<Conv>(&layer)) fan_in = c->in_channels * c->kernel * c->kernel;
    if (const auto* f = std::get_if<FullyConnected>(&layer)) fan_in = f->in;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    auto spans = model.parameter_spans();
    for (double& v : spans[buffer]) v = rng.uniform(-limit, limit);
    for (double& v : spans[buffer + 1]) v = rng.uniform(-0.1, 0.1);
    buffer += 2;
  }
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor conv_forward(const Conv& l, const Tensor& in, const Shape& out_shape) {
  Tensor out(out_shape);
  const std::size_t H = in.shape()[1], W = in.shape()[2];
  const std::size_t OH = out_shape[1], OW = out_shape[2];
  const auto pad = static_cast<std::ptrdiff_t>(l.padding);
  for (std::size_t co = 0; co < l.out_channels; ++co) {
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        double acc = l.bias[co];
        for (std::size_t ci = 0; ci < l.in_channels; ++ci) {
          for (std::size_t ky = 0; ky < l.kernel; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * l.stride + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t kx = 0; kx < l.kernel; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * l.stride + kx) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
              acc += l.w(co, ci, ky, kx) * in.at(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
          }
        }
        out.at(co, oy, ox) = acc;
      }
    }
  }
  return out;
}

// Flat index of the first maximum in each pooling window.
inline std::size_t pool_argmax(const Tensor& in, std::size_t c, std::size_t oy, std::size_t ox, std::size_t k) {
  const std::size_t W = in.shape()[2];
  std::size_t best = (c * in.shape()[1] + oy * k) * W + ox * k;
  for (std::size_t ky = 0; ky < k; ++ky) {
    for (std::size_t kx = 0; kx < k; ++kx) {
      const std::size_t idx = (c * in.shape()[1] + oy * k + ky) * W + ox * k + kx;
      if (in[idx] > in[best]) best = idx;
    }
  }
  return best;
}

}  // namespace detail

inline Tensor apply_layer(const Layer& layer, const Tensor& in, const Shape& out_shape) {
  return std::visit(
      [&](const auto& l) -> Tensor {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Conv>) {
          return detail::conv_forward(l, in, out_shape);
        } else if constexpr (std::is_same_v<T, Relu>) {
          Tensor out = in;
          for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
          return out;
        } else if constexpr (std::is_same_v<T, MaxPool>) {
          Tensor out(out_shape);
          for (std::size_t c = 0; c < out_shape[0]; ++c)
            for (std::size_t oy = 0; oy < out_shape[1]; ++oy)
              for (std::size_t ox = 0; ox < out_shape[2]; ++ox)
                out.at(c, oy, ox) = in[detail::pool_argmax(in, c, oy, ox, l.kernel)];
          return out;
        } else if constexpr (std::is_same_v<T, Flatten>) {
          return in.reshaped(out_shape);
        } else {
          Tensor out(out_shape);
          for (std::size_t o = 0; o < l.out; ++o) {
            double acc = l.bias[o];
            const std::size_t row = o * l.in;
            for (std::size_t i = 0; i < l.in; ++i) acc += l.weight[row + i] * in[i];
            out[o] = acc;
          }
          return out;
        }
      },
      layer);
}

namespace detail {

inline void require_shape(const Tensor& t, const Shape& expected, std::size_t layer, const char* what) {
  if (t.shape() != expected) {
    throw ShapeError(std::string(what) + " shape " + t.shape().str() + " does not match expected " + expected.str(),
                     layer);
  }
}

inline void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string(what) + " contains non-finite values");
}

// Runs layers (from, to] starting from activation `v` at index `from`.
inline Tensor run_layers(const ModelGraph& model, Tensor v, std::size_t from, std::size_t to) {
  for (std::size_t j = from + 1; j <= to; ++j) v = apply_layer(model.layer(j), v, model.shape_at(j));
  return v;
}

}  // namespace detail

// All n activations; element j-1 is the output of layer j.
inline std::vector<Tensor> forward(const ModelGraph& model, const Tensor& x) {
  detail::require_shape(x, model.input_shape(), 0, "input");
  detail::require_finite(x, "input");
  std::vector<Tensor> acts;
  acts.reserve(model.depth());
  const Tensor* prev = &x;
  for (std::size_t j = 1; j <= model.depth(); ++j) {
    acts.push_back(apply_layer(model.layer(j), *prev, model.shape_at(j)));
    prev = &acts.back();
  }
  return acts;
}

// Edge-side computation: activation after layer m (m = 0 returns x).
inline Tensor forward_prefix(const ModelGraph& model, const Tensor& x, std::size_t m) {
  if (m > model.depth()) throw RangeError("split index " + std::to_string(m) + " exceeds depth " + std::to_string(model.depth()));
  detail::require_shape(x, model.input_shape(), 0, "input");
  detail::require_finite(x, "input");
  return detail::run_layers(model, x, 0, m);
}

// Cloud-side computation: runs layers m+1..n on the transmitted activation.
inline Tensor forward_suffix(const ModelGraph& model, const Tensor& v, std::size_t m) {
  if (m > model.depth()) throw RangeError("split index " + std::to_string(m) + " exceeds depth " + std::to_string(model.depth()));
  detail::require_shape(v, model.shape_at(m), m, "split activation");
  detail::require_finite(v, "split activation");
  return detail::run_layers(model, v, m, model.depth());
}

// ---------------------------------------------------------------------------
// FLOPs
// ---------------------------------------------------------------------------

// Conv: 2*H*W*(C_in*K^2 + 1)*C_out with H, W the output spatial dims.
// FC: (2I - 1)*O. Activation, pooling and reshaping layers count as zero.
inline std::uint64_t layer_flops(const Layer& layer, const Shape& input_shape) {
  if (const auto* c = std::get_if<Conv>(&layer)) {
    const Shape out = infer_output_shape(layer, input_shape, ShapeError::npos);
    return 2ULL * out[1] * out[2] * (c->in_channels * c->kernel * c->kernel + 1) * c->out_channels;
  }
  if (const auto* f = std::get_if<FullyConnected>(&layer)) {
    return (2ULL * f->in - 1) * f->out;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Reverse mode
// ---------------------------------------------------------------------------

// Gradients for one conv/FC layer; empty tensors for parameter-free layers.
struct LayerParamGrad {
  Tensor weight;
  Tensor bias;
};

namespace detail {

// Propagates grad_out through `layer` (input `in`), returning the gradient
// with respect to `in`. Accumulates parameter gradients into `pg` when given.
// Returns d(loss)/d(in). Parameter gradients are accumulated into *pg when
// given (allocated on first use); the input gradient is skipped when
// `want_input` is false.
inline Tensor backward_layer(const Layer& layer, const Tensor& in, const Tensor& grad_out, LayerParamGrad* pg,
                             bool want_input = true) {
  return std::visit(
      [&](const auto& l) -> Tensor {
        using T = std::decay_t<decltype(l)>;
        Tensor grad_in(in.shape());
        if constexpr (std::is_same_v<T, Conv>) {
          const std::size_t H = in.shape()[1], W = in.shape()[2];
          const std::size_t OH = grad_out.shape()[1], OW = grad_out.shape()[2];
          const auto pad = static_cast<std::ptrdiff_t>(l.padding);
          if (pg && pg->weight.size() == 0) {
            pg->weight = Tensor(l.weight.shape());
            pg->bias = Tensor(l.bias.shape());
          }
          for (std::size_t co = 0; co < l.out_channels; ++co) {
            for (std::size_t oy = 0; oy < OH; ++oy) {
              for (std::size_t ox = 0; ox < OW; ++ox) {
                const double g = grad_out.at(co, oy, ox);
                if (pg) pg->bias[co] += g;
                for (std::size_t ci = 0; ci < l.in_channels; ++ci) {
                  for (std::size_t ky = 0; ky < l.kernel; ++ky) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * l.stride + ky) - pad;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                    for (std::size_t kx = 0; kx < l.kernel; ++kx) {
                      const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * l.stride + kx) - pad;
                      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                      const auto uy = static_cast<std::size_t>(iy);
                      const auto ux = static_cast<std::size_t>(ix);
                      if (want_input) grad_in.at(ci, uy, ux) += l.w(co, ci, ky, kx) * g;
                      if (pg) pg->weight[((co * l.in_channels + ci) * l.kernel + ky) * l.kernel + kx] += in.at(ci, uy, ux) * g;
                    }
                  }
                }
              }
            }
          }
        } else if constexpr (std::is_same_v<T, Relu>) {
          for (std::size_t i = 0; i < in.size(); ++i) grad_in[i] = in[i] > 0.0 ? grad_out[i] : 0.0;
        } else if constexpr (std::is_same_v<T, MaxPool>) {
          const Shape& os = grad_out.shape();
          for (std::size_t c = 0; c < os[0]; ++c)
            for (std::size_t oy = 0; oy < os[1]; ++oy)
              for (std::size_t ox = 0; ox < os[2]; ++ox)
                grad_in[pool_argmax(in, c, oy, ox, l.kernel)] += grad_out.at(c, oy, ox);
        } else if constexpr (std::is_same_v<T, Flatten>) {
          grad_in = grad_out.reshaped(in.shape());
        } else {
          if (pg && pg->weight.size() == 0) {
            pg->weight = Tensor(l.weight.shape());
            pg->bias = Tensor(l.bias.shape());
          }
          for (std::size_t o = 0; o < l.out; ++o) {
            const double g = grad_out[o];
            const std::size_t row = o * l.in;
            if (want_input)
              for (std::size_t i = 0; i < l.in; ++i) grad_in[i] += l.weight[row + i] * g;
            if (pg) {
              pg->bias[o] += g;
              double* w = pg->weight.values().data() + row;
              for (std::size_t i = 0; i < l.in; ++i) w[i] += in[i] * g;
            }
          }
        }
        return grad_in;
      },
      layer);
}

}  // namespace detail

// d(loss)/dx given d(loss)/d(activation m), accumulated through layers m..1.
inline Tensor input_gradient(const ModelGraph& model, std::size_t m, const Tensor& loss_grad_at_m, const Tensor& x) {
  if (m > model.depth()) throw RangeError("split index " + std::to_string(m) + " exceeds depth " + std::to_string(model.depth()));
  detail::require_shape(loss_grad_at_m, model.shape_at(m), m, "loss gradient");
  detail::require_shape(x, model.input_shape(), 0, "input");
  detail::require_finite(x, "input");
  detail::require_finite(loss_grad_at_m, "loss gradient");
  std::vector<Tensor> acts;
  acts.reserve(m + 1);
  acts.push_back(x);
  for (std::size_t j = 1; j < m; ++j) acts.push_back(apply_layer(model.layer(j), acts.back(), model.shape_at(j)));
  Tensor grad = loss_grad_at_m;
  for (std::size_t j = m; j >= 1; --j) grad = detail::backward_layer(model.layer(j), acts[j - 1], grad, nullptr);
  if (!grad.all_finite()) throw NumericError("input gradient is not finite");
  return grad;
}

// Full backward pass through the whole model: input gradient plus per-layer
// parameter gradients (index j-1 for layer j).
struct Backprop {
  Tensor input_grad;
  std::vector<LayerParamGrad> params;
};

inline Backprop backprop(const ModelGraph& model, const Tensor& x, const std::vector<Tensor>& acts,
                         const Tensor& grad_out) {
  detail::require_shape(grad_out, model.output_shape(), model.depth(), "output gradient");
  Backprop result;
  result.params.resize(model.depth());
  Tensor grad = grad_out;
  for (std::size_t j = model.depth(); j >= 1; --j) {
    const Tensor& in = j == 1 ? x : acts[j - 2];
    LayerParamGrad* pg = has_parameters(model.layer(j)) ? &result.params[j - 1] : nullptr;
    grad = detail::backward_layer(model.layer(j), in, grad, pg);
  }
  if (!grad.all_finite()) throw NumericError("backprop produced non-finite gradient");
  result.input_grad = std::move(grad);
  return result;
}

// Adds this sample's parameter gradients to `acc` (index j-1 for layer j)
// without forming the input gradient.
inline void accumulate_parameter_gradients(const ModelGraph& model, const Tensor& x, const std::vector<Tensor>& acts,
                                           const Tensor& grad_out, std::vector<LayerParamGrad>& acc) {
  detail::require_shape(grad_out, model.output_shape(), model.depth(), "output gradient");
  acc.resize(model.depth());
  Tensor grad = grad_out;
  for (std::size_t j = model.depth(); j >= 1; --j) {
    const Tensor& in = j == 1 ? x : acts[j - 2];
    LayerParamGrad* pg = has_parameters(model.layer(j)) ? &acc[j - 1] : nullptr;
    grad = detail::backward_layer(model.layer(j), in, grad, pg, j > 1);
  }
}

}  // namespace splitdp
