#pragma once

// Desk-scale stand-in model and input distribution used by the privacy and
// attack sweeps.
//
// tinynet: [3,8,8] -> Conv(3->8, 3x3, pad 1) -> ReLU -> MaxPool(2) ->
// Flatten -> FC(128->10). The partition layer is the conv (split index 1).
//
// Inputs are smooth synthetic images whose channels are sums of a constant
// plane and two outer products of smooth profiles, so each channel has
// matrix rank <= 3 and all channels share row/column factors. A 3x3 kernel
// of matrix rank s that is shared across channels (up to a per-channel gain)
// maps such an image to a feature map of rank <= 3s; unshared kernels give
// full-rank 8x8 maps. tinynet's filters span all three regimes, so feature
// map ranks differ between filters in a way that is fixed by the weights.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "splitdp/model.hpp"
#include "splitdp/rng.hpp"

namespace splitdp::tinynet {

inline constexpr std::size_t kSplitLayer = 1;
inline constexpr std::size_t kFilters = 8;
inline constexpr std::size_t kClasses = 10;
inline const Shape kInputShape{3, 8, 8};

// Matrix rank of each filter's 3x3 kernel pattern. Filters with pattern
// rank 3 use independent kernels per input channel.
inline constexpr std::array<std::size_t, kFilters> kKernelRank = {1, 1, 2, 2, 3, 3, 3, 3};

// Relative weight of each filter's pooled response in the classifier head.
// Class evidence is concentrated in the filters whose responses have higher
// rank; low-rank (smoothing) filters contribute weakly.
inline constexpr std::array<double, kFilters> kHeadGain = {0.15, 0.15, 0.5, 0.5, 1.0, 1.0, 1.0, 1.0};

// Class prototype: two separable profile pairs and per-colour amplitudes.
struct Prototype {
  std::array<double, 2> row_freq{}, row_phase{}, col_freq{}, col_phase{};
  std::array<std::array<double, 3>, 2> amplitude{};  // [term][colour], signed
};

inline constexpr std::uint64_t kPrototypeSeed = 0x7a11e7ULL;

inline const std::array<Prototype, kClasses>& prototypes() {
  static const std::array<Prototype, kClasses> table = [] {
    std::array<Prototype, kClasses> out{};
    Rng rng(kPrototypeSeed);
    for (Prototype& p : out) {
      for (std::size_t q = 0; q < 2; ++q) {
        p.row_freq[q] = rng.uniform(0.15, 0.9);
        p.row_phase[q] = rng.uniform(0.0, 2.0 * std::numbers::pi);
        p.col_freq[q] = rng.uniform(0.15, 0.9);
        p.col_phase[q] = rng.uniform(0.0, 2.0 * std::numbers::pi);
        // Unit-norm chromatic part plus a bounded shared luminance part, so
        // every class carries the same colour contrast.
        auto& amp = p.amplitude[q];
        for (double& a : amp) a = rng.uniform(-1.0, 1.0);
        const double mean = (amp[0] + amp[1] + amp[2]) / 3.0;
        double norm = 0.0;
        for (double& a : amp) norm += (a - mean) * (a - mean);
        norm = std::sqrt(norm);
        const double luminance = rng.uniform(-0.4, 0.4);
        for (double& a : amp) a = (a - mean) / norm + luminance;
      }
    }
    return out;
  }();
  return table;
}

// One synthetic [3,8,8] image of class `label` with values in [0, 1].
inline Tensor sample_image(Rng& rng, std::size_t label) {
  constexpr std::size_t n = 8;
  const Prototype& p = prototypes().at(label);
  std::array<std::array<double, n>, 2> rows{}, cols{};
  for (std::size_t q = 0; q < 2; ++q) {
    const double rf = p.row_freq[q] + rng.uniform(-0.05, 0.05);
    const double rp = p.row_phase[q] + rng.uniform(-0.3, 0.3);
    const double cf = p.col_freq[q] + rng.uniform(-0.05, 0.05);
    const double cp = p.col_phase[q] + rng.uniform(-0.3, 0.3);
    for (std::size_t i = 0; i < n; ++i) {
      rows[q][i] = std::cos(rf * static_cast<double>(i) + rp);
      cols[q][i] = std::cos(cf * static_cast<double>(i) + cp);
    }
  }
  Tensor img(kInputShape);
  const double base = rng.uniform(0.35, 0.65);
  const double room = std::min(base, 1.0 - base);
  for (std::size_t c = 0; c < 3; ++c) {
    const double a0 = 0.42 * room * p.amplitude[0][c] * rng.uniform(0.9, 1.1);
    const double a1 = 0.28 * room * p.amplitude[1][c] * rng.uniform(0.9, 1.1);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x)
        img.at(c, y, x) = base + a0 * rows[0][y] * cols[0][x] + a1 * rows[1][y] * cols[1][x];
  }
  return img;
}

// Image of a uniformly drawn class.
inline Tensor sample_image(Rng& rng) { return sample_image(rng, rng.index(kClasses)); }

inline std::vector<Tensor> sample_images(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_image(rng));
  return out;
}

inline ModelGraph build(std::uint64_t seed = 7) {
  Rng rng(seed);
  Conv conv = Conv::make(3, kFilters, 3, 1, 1);
  for (std::size_t f = 0; f < kFilters; ++f) {
    const std::size_t r = kKernelRank[f];
    double norm = 0.0;
    if (r < 3) {
      // Luminance filter: positive separable smoothing profile (plus a
      // weaker signed second term for pattern rank 2), applied with nearly
      // equal gain to every colour channel.
      std::array<double, 3> gain{};
      for (double& g : gain) g = rng.uniform(0.9, 1.1);
      std::array<double, 9> pattern{};
      for (std::size_t t = 0; t < r; ++t) {
        std::array<double, 3> a{}, b{};
        for (double& v : a) v = t == 0 ? rng.uniform(0.2, 1.0) : rng.uniform(-1.0, 1.0);
        for (double& v : b) v = t == 0 ? rng.uniform(0.2, 1.0) : rng.uniform(-1.0, 1.0);
        const double weight = t == 0 ? 1.0 : 0.5;
        for (std::size_t ky = 0; ky < 3; ++ky)
          for (std::size_t kx = 0; kx < 3; ++kx) pattern[ky * 3 + kx] += weight * a[ky] * b[kx];
      }
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t ky = 0; ky < 3; ++ky)
          for (std::size_t kx = 0; kx < 3; ++kx) conv.w(f, c, ky, kx) = gain[c] * pattern[ky * 3 + kx];
    } else {
      // Colour-opponent texture filter: independent kernel per colour
      // channel, with the three kernels summing to zero at every tap so the
      // filter is blind to luminance.
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t k = 0; k < 9; ++k) conv.w(f, c, k / 3, k % 3) = rng.uniform(-1.0, 1.0);
      for (std::size_t k = 0; k < 9; ++k) {
        const double mean = (conv.w(f, 0, k / 3, k % 3) + conv.w(f, 1, k / 3, k % 3) + conv.w(f, 2, k / 3, k % 3)) / 3.0;
        for (std::size_t c = 0; c < 3; ++c) conv.w(f, c, k / 3, k % 3) -= mean;
      }
    }
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t k = 0; k < 9; ++k) norm += std::pow(conv.w(f, c, k / 3, k % 3), 2);
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t k = 0; k < 9; ++k) conv.w(f, c, k / 3, k % 3) /= norm;
  }

  // Normalize every filter so its median peak response over a reference
  // batch is 1; smoothing and texture filters then share one clip scale.
  {
    const ModelGraph probe(kInputShape, {conv});
    Rng ref(derive_seed(seed, 1));
    std::array<std::vector<double>, kFilters> peaks;
    for (std::size_t i = 0; i < 64; ++i) {
      const Tensor v = forward(probe, sample_image(ref)).back();
      for (std::size_t f = 0; f < kFilters; ++f) peaks[f].push_back(inf_norm(v.channel(f)));
    }
    for (std::size_t f = 0; f < kFilters; ++f) {
      std::nth_element(peaks[f].begin(), peaks[f].begin() + 32, peaks[f].end());
      const double scale = peaks[f][32];
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t k = 0; k < 9; ++k) conv.w(f, c, k / 3, k % 3) /= scale;
    }
  }

  // Template head: class o scores the pooled features against its mean
  // deviation from the overall mean, weighted per filter by kHeadGain.
  const ModelGraph trunk(kInputShape, {conv, Relu{}, MaxPool{2}, Flatten{}});
  const std::size_t features = trunk.output_shape().elements();
  std::vector<std::vector<double>> class_mean(kClasses, std::vector<double>(features, 0.0));
  std::vector<double> overall(features, 0.0);
  constexpr std::size_t per_class = 32;
  Rng ref(derive_seed(seed, 2));
  for (std::size_t o = 0; o < kClasses; ++o) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const Tensor z = forward(trunk, sample_image(ref, o)).back();
      for (std::size_t j = 0; j < features; ++j) class_mean[o][j] += z[j] / per_class;
    }
    for (std::size_t j = 0; j < features; ++j) overall[j] += class_mean[o][j] / kClasses;
  }
  FullyConnected head = FullyConnected::make(features, kClasses);
  const std::size_t block = features / kFilters;
  for (std::size_t o = 0; o < kClasses; ++o) {
    double offset = 0.0;
    for (std::size_t j = 0; j < features; ++j) {
      const double w = kHeadGain[j / block] * (class_mean[o][j] - overall[j]);
      head.weight[o * features + j] = w;
      offset += w * 0.5 * (class_mean[o][j] + overall[j]);
    }
    head.bias[o] = -offset;
  }

  return ModelGraph(kInputShape, {std::move(conv), Relu{}, MaxPool{2}, Flatten{}, std::move(head)});
}

}  // namespace splitdp::tinynet
