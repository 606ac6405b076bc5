#pragma once

#include <cmath>
#include <limits>

#include "splitdp/error.hpp"
#include "splitdp/tensor.hpp"

namespace splitdp {

// Two images of equal shape on a 0..peak scale.
struct ImagePair {
  const Tensor& a;
  const Tensor& b;
  double peak = 255.0;
};

struct SimilarityReport {
  double mse = 0.0;
  double ssim = 1.0;
  double psnr_db = std::numeric_limits<double>::infinity();  // +inf when identical

  bool identical() const noexcept { return std::isinf(psnr_db); }
};

namespace detail {

inline void require_pair(const ImagePair& p) {
  if (p.a.shape() != p.b.shape()) {
    throw ShapeError("image shapes differ: " + p.a.shape().str() + " vs " + p.b.shape().str());
  }
  if (!(p.peak > 0.0)) throw RangeError("peak value must be > 0");
}

}  // namespace detail

inline double mse(const ImagePair& p) {
  detail::require_pair(p);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.a.size(); ++i) {
    const double d = p.a[i] - p.b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(p.a.size());
}

inline double ssim_constant_c1(double peak) { return (0.01 * peak) * (0.01 * peak); }
inline double ssim_constant_c2(double peak) { return (0.03 * peak) * (0.03 * peak); }

// Global (single-window) SSIM per channel with population statistics,
// averaged over channels.
inline double ssim(const ImagePair& p, double c1, double c2) {
  detail::require_pair(p);
  if (!(c1 > 0.0) || !(c2 > 0.0)) throw RangeError("SSIM constants must be > 0");
  const Shape& s = p.a.shape();
  const std::size_t channels = s.rank() == 3 ? s[0] : 1;
  const std::size_t plane = p.a.size() / channels;
  double total = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    const std::size_t off = c * plane;
    double mu_a = 0.0, mu_b = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      mu_a += p.a[off + i];
      mu_b += p.b[off + i];
    }
    mu_a /= static_cast<double>(plane);
    mu_b /= static_cast<double>(plane);
    double var_a = 0.0, var_b = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double da = p.a[off + i] - mu_a;
      const double db = p.b[off + i] - mu_b;
      var_a += da * da;
      var_b += db * db;
      cov += da * db;
    }
    var_a /= static_cast<double>(plane);
    var_b /= static_cast<double>(plane);
    cov /= static_cast<double>(plane);
    total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
             ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
  }
  return total / static_cast<double>(channels);
}

inline double ssim(const ImagePair& p) { return ssim(p, ssim_constant_c1(p.peak), ssim_constant_c2(p.peak)); }

inline double psnr_from_mse(double mse_value, double peak = 255.0) {
  if (mse_value == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse_value);
}

inline double psnr(const ImagePair& p) { return psnr_from_mse(mse(p), p.peak); }

inline SimilarityReport similarity(const ImagePair& p) {
  SimilarityReport r;
  r.mse = mse(p);
  r.ssim = ssim(p);
  r.psnr_db = psnr_from_mse(r.mse, p.peak);
  return r;
}

// Scores images stored on a 0..1 scale after rescaling them to 0..peak.
inline SimilarityReport similarity_unit_range(const Tensor& a, const Tensor& b, double peak = 255.0) {
  Tensor sa = a, sb = b;
  for (double& v : sa.values()) v *= peak;
  for (double& v : sb.values()) v *= peak;
  return similarity(ImagePair{sa, sb, peak});
}

}  // namespace splitdp
