#pragma once

// Independent reference implementations used as test oracles. None of these
// call into the library's numeric kernels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "splitdp/latency.hpp"
#include "splitdp/model.hpp"
#include "splitdp/tensor.hpp"

namespace oracle {

using splitdp::Conv;
using splitdp::FullyConnected;
using splitdp::Tensor;

// Convolution over an explicitly zero-padded copy of the input.
inline Tensor conv(const Conv& l, const Tensor& x) {
  const std::size_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  const std::size_t P = l.padding, K = l.kernel, S = l.stride;
  const std::size_t PH = H + 2 * P, PW = W + 2 * P;
  std::vector<double> padded(C * PH * PW, 0.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t z = 0; z < W; ++z) padded[(c * PH + y + P) * PW + z + P] = x[(c * H + y) * W + z];
  const std::size_t OH = (PH - K) / S + 1, OW = (PW - K) / S + 1;
  Tensor out(splitdp::Shape{l.out_channels, OH, OW});
  for (std::size_t o = 0; o < l.out_channels; ++o) {
    for (std::size_t y = 0; y < OH; ++y) {
      for (std::size_t z = 0; z < OW; ++z) {
        double acc = l.bias[o];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t a = 0; a < K; ++a)
            for (std::size_t b = 0; b < K; ++b)
              acc += l.weight[((o * C + c) * K + a) * K + b] * padded[(c * PH + y * S + a) * PW + z * S + b];
        out[(o * OH + y) * OW + z] = acc;
      }
    }
  }
  return out;
}

inline Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

inline Tensor maxpool(std::size_t k, const Tensor& x) {
  const std::size_t C = x.shape()[0], H = x.shape()[1] / k, W = x.shape()[2] / k;
  Tensor out(splitdp::Shape{C, H, W});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t z = 0; z < W; ++z) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < k; ++a)
          for (std::size_t b = 0; b < k; ++b) best = std::max(best, x[(c * x.shape()[1] + y * k + a) * x.shape()[2] + z * k + b]);
        out[(c * H + y) * W + z] = best;
      }
  return out;
}

inline Tensor fc(const FullyConnected& l, const Tensor& x) {
  Tensor out(splitdp::Shape{l.out});
  for (std::size_t o = 0; o < l.out; ++o) {
    double acc = l.bias[o];
    for (std::size_t i = 0; i < l.in; ++i) acc += l.weight[o * l.in + i] * x[i];
    out[o] = acc;
  }
  return out;
}

inline std::vector<Tensor> forward(const splitdp::ModelGraph& model, const Tensor& x) {
  std::vector<Tensor> acts;
  Tensor cur = x;
  for (std::size_t j = 1; j <= model.depth(); ++j) {
    const auto& layer = model.layer(j);
    if (const auto* c = std::get_if<Conv>(&layer)) cur = conv(*c, cur);
    else if (std::holds_alternative<splitdp::Relu>(layer)) cur = relu(cur);
    else if (const auto* p = std::get_if<splitdp::MaxPool>(&layer)) cur = maxpool(p->kernel, cur);
    else if (std::holds_alternative<splitdp::Flatten>(layer)) cur = Tensor(splitdp::Shape{cur.size()}, cur.data());
    else cur = fc(std::get<FullyConnected>(layer), cur);
    acts.push_back(cur);
  }
  return acts;
}

// Total latency of split m re-derived from the profile's raw entries.
inline double total_latency(const splitdp::LatencyProfile& p, std::size_t m, double rate) {
  const std::size_t n = p.edge_seconds.size();
  double edge = 0.0, cloud = 0.0;
  for (std::size_t i = 0; i < m; ++i) edge += p.edge_seconds[i];
  for (std::size_t j = m; j < n; ++j) cloud += p.cloud_seconds[j];
  double up = 0.0;
  if (m == 0) up = p.input_bits;
  else if (m < n) up = p.output_bits[m - 1];
  return edge + up / rate + cloud + p.result_bits / rate;
}

// Smallest-index argmin of total_latency over every split.
inline std::pair<std::size_t, double> best_split(const splitdp::LatencyProfile& p, double rate) {
  std::size_t arg = 0;
  double best = total_latency(p, 0, rate);
  for (std::size_t m = 1; m <= p.edge_seconds.size(); ++m) {
    const double t = total_latency(p, m, rate);
    if (t < best) {
      best = t;
      arg = m;
    }
  }
  return {arg, best};
}

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
inline std::vector<double> symmetric_eigenvalues(std::vector<double> a, std::size_t n) {
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off < 1e-300) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i * n + i];
  return ev;
}

// Singular values of a rows x cols matrix from the Gram matrix A^T A.
inline std::vector<double> singular_values(const std::vector<double>& m, std::size_t rows, std::size_t cols) {
  std::vector<double> g(cols * cols, 0.0);
  for (std::size_t i = 0; i < cols; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      for (std::size_t r = 0; r < rows; ++r) g[i * cols + j] += m[r * cols + i] * m[r * cols + j];
  auto ev = symmetric_eigenvalues(g, cols);
  for (double& e : ev) e = std::sqrt(std::max(e, 0.0));
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

inline int rank(const std::vector<double>& m, std::size_t rows, std::size_t cols, double tol) {
  const auto sv = singular_values(m, rows, cols);
  if (sv.empty() || sv[0] == 0.0) return 0;
  return static_cast<int>(std::count_if(sv.begin(), sv.end(), [&](double s) { return s > tol * sv[0]; }));
}

// Solves (A^T A) x = A^T b by Gaussian elimination with partial pivoting.
inline std::vector<double> least_squares(const std::vector<double>& a, std::size_t rows, std::size_t cols,
                                         const std::vector<double>& b) {
  std::vector<double> n(cols * (cols + 1), 0.0);
  for (std::size_t i = 0; i < cols; ++i) {
    for (std::size_t j = 0; j < cols; ++j)
      for (std::size_t r = 0; r < rows; ++r) n[i * (cols + 1) + j] += a[r * cols + i] * a[r * cols + j];
    for (std::size_t r = 0; r < rows; ++r) n[i * (cols + 1) + cols] += a[r * cols + i] * b[r];
  }
  const std::size_t w = cols + 1;
  for (std::size_t k = 0; k < cols; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < cols; ++i)
      if (std::abs(n[i * w + k]) > std::abs(n[piv * w + k])) piv = i;
    for (std::size_t j = 0; j < w; ++j) std::swap(n[k * w + j], n[piv * w + j]);
    for (std::size_t i = k + 1; i < cols; ++i) {
      const double f = n[i * w + k] / n[k * w + k];
      for (std::size_t j = k; j < w; ++j) n[i * w + j] -= f * n[k * w + j];
    }
  }
  std::vector<double> x(cols);
  for (std::size_t k = cols; k-- > 0;) {
    double acc = n[k * w + cols];
    for (std::size_t j = k + 1; j < cols; ++j) acc -= n[k * w + j] * x[j];
    x[k] = acc / n[k * w + k];
  }
  return x;
}

inline double mse(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

// Global SSIM per channel with population statistics, averaged.
inline double ssim(const Tensor& a, const Tensor& b, double peak) {
  const double c1 = std::pow(0.01 * peak, 2), c2 = std::pow(0.03 * peak, 2);
  const std::size_t C = a.shape().rank() == 3 ? a.shape()[0] : 1;
  const std::size_t N = a.size() / C;
  double sum = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < N; ++i) {
      ma += a[c * N + i];
      mb += b[c * N + i];
    }
    ma /= N;
    mb /= N;
    double va = 0, vb = 0, cov = 0;
    for (std::size_t i = 0; i < N; ++i) {
      va += std::pow(a[c * N + i] - ma, 2);
      vb += std::pow(b[c * N + i] - mb, 2);
      cov += (a[c * N + i] - ma) * (b[c * N + i] - mb);
    }
    va /= N;
    vb /= N;
    cov /= N;
    sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return sum / C;
}

inline double psnr(const Tensor& a, const Tensor& b, double peak) {
  const double e = mse(a, b);
  return e == 0.0 ? std::numeric_limits<double>::infinity() : 20.0 * std::log10(peak) - 10.0 * std::log10(e);
}

// Total variation summed over explicit vertical and horizontal neighbour pairs.
inline double total_variation(const Tensor& x, double beta) {
  const std::size_t C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  double tv = 0.0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        auto px = [&](std::size_t r, std::size_t q) { return x[(c * H + r) * W + q]; };
        double sq = 0.0;
        if (i + 1 < H) sq += std::pow(px(i + 1, j) - px(i, j), 2);
        if (j + 1 < W) sq += std::pow(px(i, j) - px(i, j + 1), 2);
        tv += std::pow(sq, beta / 2.0);
      }
  return tv;
}

// Central finite-difference gradient of f at x.
inline Tensor finite_difference(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-5) {
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace oracle
