#pragma once

// Reconstruction attacks against transmitted partition-layer outputs.
//
// WRA (white-box): minimizes ||f_prefix(x) - observed||^2 + lambda * TV(x)
// by gradient descent with step halving, using the shared edge prefix.
//
// BINA (black-box): learns a decoder from (intermediate, input) query pairs.
// The training and reconstruction entry points only ever see a QueryOracle
// and the decoder, never the target model.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "splitdp/error.hpp"
#include "splitdp/metrics.hpp"
#include "splitdp/model.hpp"
#include "splitdp/rng.hpp"
#include "splitdp/tensor.hpp"

namespace splitdp {

enum class AttackKind { Wra, Bina };

inline const char* attack_name(AttackKind k) { return k == AttackKind::Wra ? "wra" : "bina"; }

struct AttackResult {
  AttackKind kind = AttackKind::Wra;
  Tensor reconstruction;
  std::vector<double> objective_trace;
  std::optional<SimilarityReport> fidelity;  // when the true input is known
};

// ---------------------------------------------------------------------------
// Total variation
// ---------------------------------------------------------------------------

// sum_{c,i,j} (|x[i+1,j] - x[i,j]|^2 + |x[i,j] - x[i,j+1]|^2)^(beta/2), with
// differences past the last row/column taken as zero.
inline double total_variation(const Tensor& x, double beta, Tensor* grad = nullptr) {
  const Shape& s = x.shape();
  if (!s.is_image()) throw ShapeError("total variation needs an image tensor, got " + s.str());
  if (!(beta > 0.0)) throw RangeError("TV exponent beta must be > 0");
  const std::size_t C = s.channels(), H = s.height(), W = s.width();
  if (grad) *grad = Tensor(s);
  double tv = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    const std::size_t base = c * H * W;
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        const std::size_t at = base + i * W + j;
        const double dv = i + 1 < H ? x[at + W] - x[at] : 0.0;
        const double dh = j + 1 < W ? x[at] - x[at + 1] : 0.0;
        const double sq = dv * dv + dh * dh;
        if (sq == 0.0) continue;
        tv += beta == 2.0 ? sq : std::pow(sq, 0.5 * beta);
        if (grad) {
          const double d = beta == 2.0 ? 1.0 : 0.5 * beta * std::pow(sq, 0.5 * beta - 1.0);
          Tensor& g = *grad;
          if (i + 1 < H) {
            g[at + W] += d * 2.0 * dv;
            g[at] -= d * 2.0 * dv;
          }
          if (j + 1 < W) {
            g[at] += d * 2.0 * dh;
            g[at + 1] -= d * 2.0 * dh;
          }
        }
      }
    }
  }
  return tv;
}

// ---------------------------------------------------------------------------
// White-box reconstruction attack
// ---------------------------------------------------------------------------

struct WraConfig {
  enum class Init { Zeros, Uniform };

  double lambda = 0.0;
  double beta = 2.0;
  double step_size = 1e-2;
  double step_growth = 1.2;  // applied after every accepted step
  std::size_t iterations = 2000;
  std::size_t max_halvings = 60;
  Init init = Init::Zeros;
  std::uint64_t init_seed = 0;
  double tolerance = 0.0;  // stop when the relative objective decrease falls below this

  void validate() const {
    if (iterations < 1) throw ConfigError("attack.wra.iterations", "must be >= 1");
    if (!(step_size > 0.0)) throw ConfigError("attack.wra.step_size", "must be > 0");
    if (!(step_growth >= 1.0)) throw ConfigError("attack.wra.step_growth", "must be >= 1");
    if (!(lambda >= 0.0)) throw ConfigError("attack.wra.lambda", "must be >= 0");
    if (!(beta > 0.0)) throw ConfigError("attack.wra.beta", "must be > 0");
    if (!(tolerance >= 0.0)) throw ConfigError("attack.wra.tolerance", "must be >= 0");
  }
};

struct WraObjective {
  double feature_distance = 0.0;  // ||f_prefix(x) - observed||^2
  double tv = 0.0;
  double total = 0.0;
};

// Composite objective at x, with its gradient written to `grad` when given.
inline WraObjective wra_objective(const ModelGraph& model, std::size_t m, const Tensor& observed, const Tensor& x,
                                  double lambda, double beta, Tensor* grad = nullptr) {
  const Tensor v = forward_prefix(model, x, m);
  detail::require_shape(observed, v.shape(), m, "observed");
  Tensor residual = v;
  for (std::size_t i = 0; i < residual.size(); ++i) residual[i] -= observed[i];
  WraObjective obj;
  obj.feature_distance = squared_norm(residual.values());
  Tensor tv_grad;
  if (lambda > 0.0) obj.tv = total_variation(x, beta, grad ? &tv_grad : nullptr);
  obj.total = obj.feature_distance + lambda * obj.tv;
  if (grad) {
    for (double& r : residual.values()) r *= 2.0;
    *grad = input_gradient(model, m, residual, x);
    if (lambda > 0.0)
      for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] += lambda * tv_grad[i];
  }
  return obj;
}

inline AttackResult wra_reconstruct(const ModelGraph& model, std::size_t m, const Tensor& observed, const WraConfig& cfg,
                                    const Tensor* truth = nullptr) {
  cfg.validate();
  detail::require_shape(observed, model.shape_at(m), m, "observed");
  if (!observed.all_finite()) throw NumericError("observed intermediate output is not finite");

  Tensor x(model.input_shape());
  if (cfg.init == WraConfig::Init::Uniform) {
    Rng rng(cfg.init_seed);
    for (double& v : x.values()) v = rng.uniform();
  }

  Tensor grad;
  double f = wra_objective(model, m, observed, x, cfg.lambda, cfg.beta, &grad).total;
  if (!std::isfinite(f)) throw NumericError("WRA objective is not finite at the initial point");

  AttackResult result;
  result.kind = AttackKind::Wra;
  result.objective_trace.push_back(f);
  double step = cfg.step_size;
  Tensor candidate(x.shape());
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    bool accepted = false;
    double f_new = f;
    for (std::size_t h = 0; h <= cfg.max_halvings; ++h) {
      for (std::size_t i = 0; i < x.size(); ++i) candidate[i] = x[i] - step * grad[i];
      f_new = wra_objective(model, m, observed, candidate, cfg.lambda, cfg.beta).total;
      if (std::isfinite(f_new) && f_new < f) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no descent direction at representable step sizes
    const double decrease = (f - f_new) / std::max(f, std::numeric_limits<double>::min());
    std::swap(x, candidate);
    f = wra_objective(model, m, observed, x, cfg.lambda, cfg.beta, &grad).total;
    result.objective_trace.push_back(f);
    step *= cfg.step_growth;
    if (cfg.tolerance > 0.0 && decrease < cfg.tolerance) break;
  }
  result.reconstruction = std::move(x);
  if (truth) result.fidelity = similarity_unit_range(*truth, result.reconstruction);
  return result;
}

// ---------------------------------------------------------------------------
// Black-box inverse-network attack
// ---------------------------------------------------------------------------

struct QueryPair {
  Tensor intermediate;
  Tensor input;
};

// The attacker's only view of the deployed pipeline: submit the i-th query
// and observe what the edge device transmits for it.
class QueryOracle {
 public:
  virtual ~QueryOracle() = default;
  virtual QueryPair query(std::size_t index) const = 0;
};

class FunctionOracle final : public QueryOracle {
 public:
  explicit FunctionOracle(std::function<QueryPair(std::size_t)> fn) : fn_(std::move(fn)) {}
  QueryPair query(std::size_t index) const override { return fn_(index); }

 private:
  std::function<QueryPair(std::size_t)> fn_;
};

struct BinaTrainConfig {
  std::size_t queries = 512;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double step_size = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (queries < 1) throw ConfigError("attack.bina.queries", "must be >= 1");
    if (epochs < 1) throw ConfigError("attack.bina.epochs", "must be >= 1");
    if (batch_size < 1) throw ConfigError("attack.bina.batch_size", "must be >= 1");
    if (!(step_size > 0.0)) throw ConfigError("attack.bina.step_size", "must be > 0");
  }
};

// Decoder architecture plus training settings. The decoder maps the
// intermediate shape to a tensor with as many elements as the model input;
// its output is reshaped to `input_shape`.
struct InverseModelSpec {
  ModelGraph decoder;
  Shape input_shape;
  BinaTrainConfig train;
};

struct TrainedDecoder {
  ModelGraph decoder;
  Shape input_shape;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> loss_trace;  // per epoch, accepted epochs only
};

// Decoder that reverses a prefix: a stride-1 "same" conv prefix (optionally
// with ReLUs) mirrors to convs with swapped channel counts and ReLUs between
// them; anything else falls back to a single fully connected layer. Only
// layer hyperparameters are read.
inline ModelGraph mirror_decoder(std::span<const Layer> prefix, const Shape& intermediate, const Shape& input) {
  std::vector<Layer> reversed;
  bool mirrorable = intermediate.rank() == 3 && input.rank() == 3 && intermediate[1] == input[1] &&
                    intermediate[2] == input[2];
  for (auto it = prefix.rbegin(); mirrorable && it != prefix.rend(); ++it) {
    if (const auto* c = std::get_if<Conv>(&*it)) {
      if (c->stride != 1 || 2 * c->padding + 1 != c->kernel) {
        mirrorable = false;
        break;
      }
      if (!reversed.empty()) reversed.emplace_back(Relu{});
      reversed.emplace_back(Conv::make(c->out_channels, c->in_channels, c->kernel, 1, c->padding));
    } else if (!std::holds_alternative<Relu>(*it)) {
      mirrorable = false;
    }
  }
  if (mirrorable && !reversed.empty()) return ModelGraph(intermediate, std::move(reversed));
  std::vector<Layer> fc;
  if (intermediate.rank() != 1) fc.emplace_back(Flatten{});
  fc.emplace_back(FullyConnected::make(intermediate.elements(), input.elements()));
  return ModelGraph(intermediate, std::move(fc));
}

namespace detail {

inline double decoder_loss(const ModelGraph& dec, const std::vector<QueryPair>& data) {
  double total = 0.0;
  for (const auto& q : data) {
    const Tensor out = forward(dec, q.intermediate).back();
    double e = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) e += (out[i] - q.input[i]) * (out[i] - q.input[i]);
    total += e / static_cast<double>(out.size());
  }
  return total / static_cast<double>(data.size());
}

}  // namespace detail

// Mini-batch gradient descent on the mean squared reconstruction error. An
// epoch that fails to lower the full training loss is rolled back and the
// step halved.
inline TrainedDecoder bina_train(const QueryOracle& oracle, const InverseModelSpec& spec) {
  spec.train.validate();
  const BinaTrainConfig& cfg = spec.train;
  ModelGraph dec = spec.decoder;
  if (dec.output_shape().elements() != spec.input_shape.elements()) {
    throw ShapeError("decoder output " + dec.output_shape().str() + " cannot be reshaped to input " +
                     spec.input_shape.str());
  }

  std::vector<QueryPair> data;
  data.reserve(cfg.queries);
  for (std::size_t i = 0; i < cfg.queries; ++i) {
    QueryPair q = oracle.query(i);
    detail::require_shape(q.intermediate, dec.input_shape(), 0, "query intermediate");
    detail::require_shape(q.input, spec.input_shape, 0, "query input");
    data.push_back(std::move(q));
  }

  randomize_parameters(dec, derive_seed(cfg.seed, 0));
  for (auto span : dec.parameter_spans())
    for (double& v : span) v *= 0.1;

  Rng rng(derive_seed(cfg.seed, 1));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainedDecoder out{dec, spec.input_shape, 0.0, 0.0, {}};
  double loss = detail::decoder_loss(dec, data);
  out.initial_loss = loss;
  double step = cfg.step_size;
  const std::size_t out_elems = dec.output_shape().elements();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    ModelGraph trial = dec;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<LayerParamGrad> acc;
      for (std::size_t b = start; b < end; ++b) {
        const QueryPair& q = data[order[b]];
        const auto acts = forward(trial, q.intermediate);
        Tensor g = acts.back();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = 2.0 * (g[i] - q.input[i]) / static_cast<double>(out_elems);
        accumulate_parameter_gradients(trial, q.intermediate, acts, g, acc);
      }
      const double scale = step / static_cast<double>(end - start);
      auto spans = trial.parameter_spans();
      std::size_t k = 0;
      for (const auto& pg : acc) {
        if (pg.weight.size() == 0) continue;
        for (std::size_t i = 0; i < pg.weight.size(); ++i) spans[k][i] -= scale * pg.weight[i];
        for (std::size_t i = 0; i < pg.bias.size(); ++i) spans[k + 1][i] -= scale * pg.bias[i];
        k += 2;
      }
    }
    const double trial_loss = detail::decoder_loss(trial, data);
    if (std::isfinite(trial_loss) && trial_loss < loss) {
      dec = std::move(trial);
      loss = trial_loss;
      out.loss_trace.push_back(loss);
    } else {
      step *= 0.5;
    }
  }
  out.decoder = std::move(dec);
  out.final_loss = loss;
  return out;
}

inline AttackResult bina_reconstruct(const TrainedDecoder& trained, const Tensor& observed,
                                     const Tensor* truth = nullptr) {
  detail::require_shape(observed, trained.decoder.input_shape(), 0, "observed");
  AttackResult result;
  result.kind = AttackKind::Bina;
  result.reconstruction = forward(trained.decoder, observed).back().reshaped(trained.input_shape);
  if (truth) result.fidelity = similarity_unit_range(*truth, result.reconstruction);
  return result;
}

}  // namespace splitdp
