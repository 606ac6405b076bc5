#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "splitdp/error.hpp"
#include "splitdp/model.hpp"

namespace splitdp {

// Instantaneous link state for the Shannon-Hartley rate.
struct NetworkCondition {
  double bandwidth_hz = 1.0;
  double transmit_power_w = 1.0;
  double channel_gain = 1.0;
  double noise_power_w = 1.0;
  double interference_w = 0.0;
  double timestamp = 0.0;

  // Condition whose Shannon rate is exactly `bits_per_second`: SINR of 1
  // gives log2(2) = 1 bit/s/Hz.
  static NetworkCondition from_rate(double bits_per_second, double t = 0.0) {
    return NetworkCondition{bits_per_second, 1.0, 1.0, 1.0, 0.0, t};
  }

  void validate() const {
    if (!(bandwidth_hz > 0.0)) throw RangeError("bandwidth must be > 0");
    if (!(noise_power_w + interference_w > 0.0)) throw RangeError("noise + interference power must be > 0");
    if (!(transmit_power_w * channel_gain >= 0.0)) throw RangeError("transmit power x channel gain must be >= 0");
  }
};

struct ComputeCapability {
  double edge_flops = 1.0;   // FLOP/s
  double cloud_flops = 1.0;  // FLOP/s

  void validate() const {
    if (!(edge_flops > 0.0) || !(cloud_flops > 0.0)) throw RangeError("compute capabilities must be > 0");
  }
};

// Offline per-layer statistics. Index i-1 holds layer i.
struct LatencyProfile {
  std::vector<double> edge_seconds;
  std::vector<double> cloud_seconds;
  std::vector<double> output_bits;  // D_i
  double input_bits = 0.0;          // D_0, raw input uploaded by cloud-only
  double result_bits = 0.0;         // D_r

  std::size_t depth() const noexcept { return edge_seconds.size(); }

  void validate() const {
    const std::size_t n = edge_seconds.size();
    if (n == 0 || cloud_seconds.size() != n || output_bits.size() != n) {
      throw ShapeError("latency profile vectors must be non-empty and of equal length");
    }
    auto nonneg = [](const std::vector<double>& v) {
      for (double x : v)
        if (!(x >= 0.0)) return false;
      return true;
    };
    if (!nonneg(edge_seconds) || !nonneg(cloud_seconds) || !nonneg(output_bits) || !(input_bits >= 0.0) ||
        !(result_bits >= 0.0)) {
      throw RangeError("latency profile entries must be >= 0");
    }
  }
};

struct LatencyBreakdown {
  double edge_compute = 0.0;
  double uplink = 0.0;
  double cloud_compute = 0.0;
  double downlink = 0.0;

  double total() const noexcept { return edge_compute + uplink + cloud_compute + downlink; }
};

struct PartitionPlan {
  std::size_t split = 0;  // 0 = cloud-only, n = device-only
  double total_seconds = 0.0;
  LatencyBreakdown breakdown;
  double cloud_only_seconds = 0.0;
  double device_only_seconds = 0.0;
  double rate_bps = 0.0;
  double timestamp = 0.0;

  double speedup_vs_device() const noexcept { return device_only_seconds / total_seconds; }
  double speedup_vs_cloud() const noexcept { return cloud_only_seconds / total_seconds; }
};

inline double shannon_rate(const NetworkCondition& cond) {
  cond.validate();
  const double signal = cond.transmit_power_w * cond.channel_gain;
  if (signal == 0.0) return 0.0;
  return cond.bandwidth_hz * std::log2(1.0 + signal / (cond.noise_power_w + cond.interference_w));
}

inline double transmission_latency(double uplink_bits, double result_bits, double rate_bps) {
  if (!(rate_bps > 0.0)) throw LinkDownError("link down: transmission rate " + std::to_string(rate_bps) + " b/s");
  return uplink_bits / rate_bps + result_bits / rate_bps;
}

inline double compute_latency(double flops, double flops_per_second) {
  if (!(flops_per_second > 0.0)) throw RangeError("compute capability must be > 0");
  return flops / flops_per_second;
}

// Per-layer compute times from FLOPs counts, and per-layer output sizes.
inline LatencyProfile profile(const ModelGraph& model, const ComputeCapability& caps, double bits_per_element,
                              std::size_t result_elements) {
  caps.validate();
  if (!(bits_per_element > 0.0)) throw RangeError("bits_per_element must be > 0");
  LatencyProfile p;
  p.input_bits = static_cast<double>(model.input_shape().elements()) * bits_per_element;
  p.result_bits = static_cast<double>(result_elements) * bits_per_element;
  for (std::size_t j = 1; j <= model.depth(); ++j) {
    const auto flops = static_cast<double>(layer_flops(model.layer(j), model.shape_at(j - 1)));
    p.edge_seconds.push_back(compute_latency(flops, caps.edge_flops));
    p.cloud_seconds.push_back(compute_latency(flops, caps.cloud_flops));
    p.output_bits.push_back(static_cast<double>(model.shape_at(j).elements()) * bits_per_element);
  }
  return p;
}

// Latency breakdown for splitting after layer m. The device-only split
// (m = n) uploads nothing and only returns the result.
inline LatencyBreakdown split_breakdown(const LatencyProfile& p, std::size_t m, double rate_bps) {
  const std::size_t n = p.depth();
  if (m > n) throw RangeError("split index " + std::to_string(m) + " exceeds depth " + std::to_string(n));
  if (!(rate_bps > 0.0)) throw LinkDownError("link down: transmission rate " + std::to_string(rate_bps) + " b/s");
  LatencyBreakdown b;
  for (std::size_t i = 1; i <= m; ++i) b.edge_compute += p.edge_seconds[i - 1];
  for (std::size_t j = m + 1; j <= n; ++j) b.cloud_compute += p.cloud_seconds[j - 1];
  const double uplink_bits = m == 0 ? p.input_bits : (m == n ? 0.0 : p.output_bits[m - 1]);
  b.uplink = uplink_bits / rate_bps;
  b.downlink = p.result_bits / rate_bps;
  return b;
}

// Exhaustive linear search over split points 0..n; ties resolve to the
// smallest index.
inline PartitionPlan select_partition(const LatencyProfile& p, double rate_bps) {
  p.validate();
  const std::size_t n = p.depth();
  PartitionPlan plan;
  plan.rate_bps = rate_bps;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m <= n; ++m) {
    const LatencyBreakdown b = split_breakdown(p, m, rate_bps);
    const double total = b.total();
    if (m == 0) plan.cloud_only_seconds = total;
    if (m == n) plan.device_only_seconds = total;
    if (total < best) {
      best = total;
      plan.split = m;
      plan.breakdown = b;
      plan.total_seconds = total;
    }
  }
  return plan;
}

struct TracePoint {
  double timestamp = 0.0;
  NetworkCondition condition;
};

// One plan per trace point; the compute profile is reused and only the
// transmission terms change with the rate.
inline std::vector<PartitionPlan> replan_on_bandwidth_change(const LatencyProfile& p,
                                                             const std::vector<TracePoint>& trace) {
  if (trace.empty()) throw RangeError("bandwidth trace must be non-empty");
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (!(trace[i].timestamp > trace[i - 1].timestamp)) throw RangeError("trace timestamps must be strictly increasing");
  }
  std::vector<PartitionPlan> plans;
  plans.reserve(trace.size());
  for (const auto& point : trace) {
    PartitionPlan plan = select_partition(p, shannon_rate(point.condition));
    plan.timestamp = point.timestamp;
    plans.push_back(plan);
  }
  return plans;
}

inline std::vector<PartitionPlan> replan_on_bandwidth_change(const ModelGraph& model, const ComputeCapability& caps,
                                                             double bits_per_element, std::size_t result_elements,
                                                             const std::vector<TracePoint>& trace) {
  return replan_on_bandwidth_change(profile(model, caps, bits_per_element, result_elements), trace);
}

}  // namespace splitdp
