#pragma once

// Feature-map differential privacy at the partition layer: per-channel
// infinity-norm clipping, rank-proportional budget allocation and Laplace
// noise (Collaborative-DP), plus the uniform-allocation (Native-DP) and
// no-noise (Non-DP) baselines.

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "splitdp/error.hpp"
#include "splitdp/model.hpp"
#include "splitdp/rng.hpp"
#include "splitdp/tensor.hpp"

namespace splitdp {

enum class Mechanism { Collaborative, Native, NonDp };

inline const char* mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::Collaborative: return "collaborative-dp";
    case Mechanism::Native: return "native-dp";
    case Mechanism::NonDp: return "non-dp";
  }
  return "?";
}

inline Mechanism parse_mechanism(const std::string& name) {
  if (name == "collaborative-dp") return Mechanism::Collaborative;
  if (name == "native-dp") return Mechanism::Native;
  if (name == "non-dp") return Mechanism::NonDp;
  throw ConfigError("mechanism", "unknown mechanism '" + name + "'");
}

struct ClipConfig {
  enum class Policy { Fixed, Median };
  Policy policy = Policy::Median;
  double value = 0.0;  // used by Policy::Fixed
};

struct RankEstimationConfig {
  std::size_t batch_size = 32;
  double tolerance = 1e-6;  // singular values <= tolerance * sigma_max are dropped

  void validate() const {
    if (batch_size < 1) throw ConfigError("privacy.calibration_size", "must be >= 1");
    if (!(tolerance > 0.0 && tolerance < 1.0)) throw ConfigError("privacy.rank_tolerance", "must lie in (0, 1)");
  }
};

// Batch-averaged rank per filter. `mean` drives allocation; `rounded()` is
// for display.
struct RankEstimate {
  std::vector<double> mean;

  std::vector<int> rounded() const {
    std::vector<int> out;
    out.reserve(mean.size());
    for (double r : mean) out.push_back(static_cast<int>(std::floor(r + 0.5)));
    return out;
  }
};

struct BudgetAllocation {
  double total = 0.0;
  std::vector<double> per_filter;
  std::vector<double> ranks;

  std::size_t size() const noexcept { return per_filter.size(); }
  double consumed() const { return std::accumulate(per_filter.begin(), per_filter.end(), 0.0); }
};

struct NoisyFeatureMap {
  Tensor tensor;
  Mechanism mechanism = Mechanism::NonDp;
  BudgetAllocation allocation;  // empty for Non-DP
  std::vector<double> noise_scales;
  double clip_threshold = 0.0;  // 0 for Non-DP (no clipping)
  std::uint64_t seed = 0;

  // Total epsilon of this release; Non-DP offers no guarantee.
  double consumed_budget() const {
    if (mechanism == Mechanism::NonDp) return std::numeric_limits<double>::infinity();
    return allocation.consumed();
  }
};

// ---------------------------------------------------------------------------

namespace detail {

inline void require_feature_map(const Tensor& v) {
  if (v.shape().rank() != 3) throw ShapeError("feature map must be [k,h,w], got " + v.shape().str());
}

inline double median(std::vector<double> values) {
  if (values.empty()) throw RangeError("median of empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace detail

// Scales channel i by 1 / max(1, ||v[i]||_inf / C_m).
inline Tensor clip_channels(const Tensor& v, double clip_threshold) {
  detail::require_feature_map(v);
  if (!(clip_threshold > 0.0) || !std::isfinite(clip_threshold)) throw RangeError("clip threshold must be finite and > 0");
  if (!v.all_finite()) throw NumericError("feature map contains non-finite values");
  Tensor out = v;
  for (std::size_t c = 0; c < v.shape()[0]; ++c) {
    auto ch = out.channel(c);
    const double norm = inf_norm(ch);
    if (norm <= clip_threshold) continue;
    const double divisor = norm / clip_threshold;
    for (double& x : ch) x = std::clamp(x / divisor, -clip_threshold, clip_threshold);
  }
  return out;
}

// Median of the per-channel infinity norms of layer-m outputs over a
// calibration batch.
inline double median_clip_threshold(const ModelGraph& model, std::size_t m, const std::vector<Tensor>& calibration) {
  std::vector<double> norms;
  for (const Tensor& x : calibration) {
    const Tensor v = forward_prefix(model, x, m);
    detail::require_feature_map(v);
    for (std::size_t c = 0; c < v.shape()[0]; ++c) norms.push_back(inf_norm(v.channel(c)));
  }
  const double med = detail::median(std::move(norms));
  if (!(med > 0.0)) throw RangeError("median clip threshold is zero; use a fixed threshold");
  return med;
}

inline double resolve_clip_threshold(const ClipConfig& cfg, const ModelGraph& model, std::size_t m,
                                     const std::vector<Tensor>& calibration) {
  if (cfg.policy == ClipConfig::Policy::Fixed) {
    if (!(cfg.value > 0.0)) throw ConfigError("privacy.clip.value", "fixed clip threshold must be > 0");
    return cfg.value;
  }
  return median_clip_threshold(model, m, calibration);
}

// Numerical rank of a rows x cols map stored row-major.
inline int numerical_rank(std::span<const double> map, std::size_t rows, std::size_t cols, double tolerance) {
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> mat(map.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const Eigen::JacobiSVD<RowMajor> svd(mat);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  const double cutoff = tolerance * sv(0);
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++rank;
  return rank;
}

inline RankEstimate estimate_ranks(const ModelGraph& model, std::size_t m, const std::vector<Tensor>& calibration,
                                   const RankEstimationConfig& cfg) {
  cfg.validate();
  if (calibration.empty()) throw RangeError("calibration batch must contain at least one input");
  const Shape& s = model.shape_at(m);
  if (s.rank() != 3) throw ShapeError("rank estimation needs a [k,h,w] partition layer, got " + s.str(), m);
  RankEstimate est;
  est.mean.assign(s[0], 0.0);
  for (const Tensor& x : calibration) {
    const Tensor v = forward_prefix(model, x, m);
    for (std::size_t c = 0; c < s[0]; ++c) est.mean[c] += numerical_rank(v.channel(c), s[1], s[2], cfg.tolerance);
  }
  for (double& r : est.mean) r /= static_cast<double>(calibration.size());
  return est;
}

// eps_i = eps * rank_i / sum_j rank_j, renormalized so the parts sum to eps.
inline BudgetAllocation allocate_budget(const std::vector<double>& ranks, double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw BudgetError("total privacy budget must be finite and > 0");
  if (ranks.empty()) throw BudgetError("no filters to allocate budget to");
  double sum = 0.0;
  for (double r : ranks) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw BudgetError("ranks must be finite and >= 0");
    sum += r;
  }
  if (sum == 0.0) throw BudgetError("no informative filters: every rank is zero");
  BudgetAllocation a;
  a.total = epsilon;
  a.ranks = ranks;
  a.per_filter.reserve(ranks.size());
  for (double r : ranks) a.per_filter.push_back(epsilon * (r / sum));
  const double drift = epsilon / a.consumed();
  for (double& e : a.per_filter) e *= drift;
  return a;
}

inline BudgetAllocation uniform_budget(std::size_t filters, double epsilon) {
  return allocate_budget(std::vector<double>(filters, 1.0), epsilon);
}

// I.i.d. Laplace(0, b) samples by inverse CDF; b = 0 yields zeros.
inline Tensor laplace_noise(const Shape& shape, double scale, std::uint64_t seed) {
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw RangeError("Laplace scale must be finite and >= 0");
  Tensor out(shape);
  if (scale == 0.0) return out;
  Rng rng(seed);
  for (double& x : out.values()) {
    const double u = rng.uniform() - 0.5;
    x = -scale * std::copysign(1.0, u) * std::log1p(-2.0 * std::abs(u));
  }
  return out;
}

// Noise scale 2*C_m/eps_i for each filter; zero-budget filters are
// suppressed entirely and reported with an infinite scale.
inline std::vector<double> noise_scales(const BudgetAllocation& alloc, double clip_threshold) {
  std::vector<double> out;
  out.reserve(alloc.size());
  for (double e : alloc.per_filter) {
    out.push_back(e > 0.0 ? 2.0 * clip_threshold / e : std::numeric_limits<double>::infinity());
  }
  return out;
}

inline NoisyFeatureMap collaborative_dp(const Tensor& v, const BudgetAllocation& alloc, double clip_threshold,
                                       std::uint64_t seed) {
  detail::require_feature_map(v);
  const std::size_t k = v.shape()[0];
  if (alloc.size() != k) {
    throw ShapeError("allocation covers " + std::to_string(alloc.size()) + " filters but feature map has " +
                     std::to_string(k) + " channels");
  }
  NoisyFeatureMap out;
  out.mechanism = Mechanism::Collaborative;
  out.allocation = alloc;
  out.clip_threshold = clip_threshold;
  out.seed = seed;
  out.noise_scales = noise_scales(alloc, clip_threshold);
  out.tensor = clip_channels(v, clip_threshold);
  const Shape plane{v.shape()[1], v.shape()[2]};
  for (std::size_t c = 0; c < k; ++c) {
    auto ch = out.tensor.channel(c);
    if (!(alloc.per_filter[c] > 0.0)) {
      std::fill(ch.begin(), ch.end(), 0.0);
      continue;
    }
    const Tensor noise = laplace_noise(plane, out.noise_scales[c], derive_seed(seed, c));
    for (std::size_t i = 0; i < ch.size(); ++i) ch[i] += noise[i];
  }
  return out;
}

inline NoisyFeatureMap native_dp(const Tensor& v, double epsilon, double clip_threshold, std::uint64_t seed) {
  detail::require_feature_map(v);
  NoisyFeatureMap out = collaborative_dp(v, uniform_budget(v.shape()[0], epsilon), clip_threshold, seed);
  out.mechanism = Mechanism::Native;
  return out;
}

inline NoisyFeatureMap non_dp(const Tensor& v) {
  NoisyFeatureMap out;
  out.tensor = v;
  out.mechanism = Mechanism::NonDp;
  return out;
}

// Sequential (sum) composition over releases of the same source. Cloud-side
// post-processing of a release never adds to the total.
inline double budget_ledger(const std::vector<NoisyFeatureMap>& runs) {
  double total = 0.0;
  for (const auto& run : runs) total += run.consumed_budget();
  return total;
}

}  // namespace splitdp
