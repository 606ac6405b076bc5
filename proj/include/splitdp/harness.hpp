#pragma once

// Experiment runners and report emission for scenario files.

#include <openssl/evp.h>

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "splitdp/attacks.hpp"
#include "splitdp/blob.hpp"
#include "splitdp/latency.hpp"
#include "splitdp/metrics.hpp"
#include "splitdp/model.hpp"
#include "splitdp/privacy.hpp"
#include "splitdp/rng.hpp"
#include "splitdp/scenario.hpp"
#include "splitdp/tinynet.hpp"

namespace splitdp {

inline constexpr const char* kToolVersion = "0.1.0";

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Utilities

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

// Rounds to 9 significant digits; non-finite values pass through.
inline double canonical(double x) {
  if (!std::isfinite(x)) return x;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return std::strtod(buf, nullptr);
}

inline std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw RangeError("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Runs fn(0..count-1) on up to `jobs` threads; results are stored by index,
// so the output does not depend on scheduling. The first failure in index
// order is rethrown.
template <class Fn>
auto parallel_map(std::size_t count, std::size_t jobs, Fn&& fn) -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<R> out(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(jobs, 1), std::max<std::size_t>(count, 1));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// Inputs for sweeps: the tinynet image distribution when the model takes
// [3,8,8] inputs, otherwise i.i.d. uniform values in [0, 1].
inline std::vector<Tensor> sample_inputs(const Shape& shape, std::size_t count, std::uint64_t seed) {
  if (shape == tinynet::kInputShape) return tinynet::sample_images(count, seed);
  Rng rng(seed);
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Tensor t(shape);
    for (double& v : t.values()) v = rng.uniform();
    out.push_back(std::move(t));
  }
  return out;
}

// Seed streams derived from the scenario's master seed.
namespace stream {
inline constexpr std::uint64_t kCalibration = 1;
inline constexpr std::uint64_t kPrivacyInputs = 2;
inline constexpr std::uint64_t kPrivacyNoise = 3;
inline constexpr std::uint64_t kWraTargets = 4;
inline constexpr std::uint64_t kWraNoise = 5;
inline constexpr std::uint64_t kBinaQueries = 6;
inline constexpr std::uint64_t kBinaTest = 7;
inline constexpr std::uint64_t kBinaQueryNoise = 8;
inline constexpr std::uint64_t kBinaTestNoise = 9;
inline constexpr std::uint64_t kBinaDecoder = 10;
}  // namespace stream

// ---------------------------------------------------------------------------
// Records

struct ProfileRow {
  std::uint64_t layer = 0;
  std::string kind;
  double flops = 0.0;
  double edge_seconds = 0.0;
  double cloud_seconds = 0.0;
  double output_bits = 0.0;

  template <class Self, class F>
  static void fields(Self& r, F&& f) {
    f("layer", r.layer);
    f("kind", r.kind);
    f("flops", r.flops);
    f("edge_seconds", r.edge_seconds);
    f("cloud_seconds", r.cloud_seconds);
    f("output_bits", r.output_bits);
  }
  bool operator==(const ProfileRow&) const = default;
};

struct PartitionRow {
  std::string source;  // "preset" or "trace"
  std::string network;
  double timestamp = 0.0;
  double rate_bps = 0.0;
  std::uint64_t split = 0;
  double total_seconds = 0.0;
  double edge_compute_seconds = 0.0;
  double uplink_seconds = 0.0;
  double cloud_compute_seconds = 0.0;
  double downlink_seconds = 0.0;
  double device_only_seconds = 0.0;
  double cloud_only_seconds = 0.0;
  double speedup_vs_device = 0.0;
  double speedup_vs_cloud = 0.0;

  template <class Self, class F>
  static void fields(Self& r, F&& f) {
    f("source", r.source);
    f("network", r.network);
    f("timestamp", r.timestamp);
    f("rate_bps", r.rate_bps);
    f("split", r.split);
    f("total_seconds", r.total_seconds);
    f("edge_compute_seconds", r.edge_compute_seconds);
    f("uplink_seconds", r.uplink_seconds);
    f("cloud_compute_seconds", r.cloud_compute_seconds);
    f("downlink_seconds", r.downlink_seconds);
    f("device_only_seconds", r.device_only_seconds);
    f("cloud_only_seconds", r.cloud_only_seconds);
    f("speedup_vs_device", r.speedup_vs_device);
    f("speedup_vs_cloud", r.speedup_vs_cloud);
  }
  bool operator==(const PartitionRow&) const = default;
};

struct PrivacyRow {
  double epsilon = 0.0;  // inf for Non-DP
  std::string mechanism;
  std::uint64_t seed = 0;
  double agreement = 0.0;
  double consumed_budget = 0.0;

  template <class Self, class F>
  static void fields(Self& r, F&& f) {
    f("epsilon", r.epsilon);
    f("mechanism", r.mechanism);
    f("seed", r.seed);
    f("agreement", r.agreement);
    f("consumed_budget", r.consumed_budget);
  }
  bool operator==(const PrivacyRow&) const = default;
};

struct PrivacySummaryRow {
  double epsilon = 0.0;
  std::string mechanism;
  std::uint64_t seeds = 0;
  double median_agreement = 0.0;

  template <class Self, class F>
  static void fields(Self& r, F&& f) {
    f("epsilon", r.epsilon);
    f("mechanism", r.mechanism);
    f("seeds", r.seeds);
    f("median_agreement", r.median_agreement);
  }
  bool operator==(const PrivacySummaryRow&) const = default;
};

struct AllocationRow {
  std::string block;  // "privacy" or "attack"
  double epsilon = 0.0;
  std::string mechanism;
  std::uint64_t filter = 0;
  double rank = 0.0;
  std::uint64_t rank_rounded = 0;
  double epsilon_i = 0.0;
  double noise_scale = 0.0;

  template <class Self, class F>
  static void fields(Self& r, F&& f) {
    f("block", r.block);
    f("epsilon", r.epsilon);
    f("mechanism", r.mechanism);
    f("filter", r.filter);
    f("rank", r.rank);
    f("rank_rounded", r.rank_rounded);
    f("epsilon_i", r.epsilon_i);
    f("noise_scale", r.noise_scale);
  }
  bool operator==(const AllocationRow&) const = default;
};

struct AttackRow {
  std::string attack;
  std::string mechanism;
  double epsilon = 0.0;  // inf for Non-DP
  std::uint64_t seed = 0;
  double lambda = 0.0;   // WRA only
  double objective = 0.0;  // WRA final objective, BINA final training loss
  double mse = 0.0;
  double ssim = 0.0;
  double psnr_db = 0.0;
  std::string tensor;  // reconstruction blob, relative to the output directory

  template <class Self, class F>
  static void fields(Self& r, F&& f) {
    f("attack", r.attack);
    f("mechanism", r.mechanism);
    f("epsilon", r.epsilon);
    f("seed", r.seed);
    f("lambda", r.lambda);
    f("objective", r.objective);
    f("mse", r.mse);
    f("ssim", r.ssim);
    f("psnr_db", r.psnr_db);
    f("tensor", r.tensor);
  }
  bool operator==(const AttackRow&) const = default;
};

struct AttackSummaryRow {
  std::string attack;
  std::string mechanism;
  double epsilon = 0.0;
  std::uint64_t seeds = 0;
  double median_mse = 0.0;
  double median_ssim = 0.0;
  double median_psnr_db = 0.0;

  template <class Self, class F>
  static void fields(Self& r, F&& f) {
    f("attack", r.attack);
    f("mechanism", r.mechanism);
    f("epsilon", r.epsilon);
    f("seeds", r.seeds);
    f("median_mse", r.median_mse);
    f("median_ssim", r.median_ssim);
    f("median_psnr_db", r.median_psnr_db);
  }
  bool operator==(const AttackSummaryRow&) const = default;
};

struct LambdaScoreRow {
  double lambda = 0.0;
  double median_psnr_db = 0.0;
  bool selected = false;

  template <class Self, class F>
  static void fields(Self& r, F&& f) {
    f("lambda", r.lambda);
    f("median_psnr_db", r.median_psnr_db);
    f("selected", r.selected);
  }
  bool operator==(const LambdaScoreRow&) const = default;
};

struct RunRecord {
  std::string tool_version = kToolVersion;
  std::string scenario_name;
  std::string scenario_hash;
  std::uint64_t seed = 0;
  json config;  // scenario echo
  std::string reference_model;
  std::uint64_t reference_model_layers = 0;

  bool has_partition = false;
  std::vector<ProfileRow> profile;
  std::vector<PartitionRow> partition;

  bool has_privacy = false;
  double privacy_clip_threshold = 0.0;
  std::vector<PrivacyRow> privacy;
  std::vector<PrivacySummaryRow> privacy_summary;

  bool has_attack = false;
  double attack_clip_threshold = 0.0;
  std::vector<LambdaScoreRow> wra_lambda;
  std::vector<AttackRow> attack;
  std::vector<AttackSummaryRow> attack_summary;

  std::vector<AllocationRow> allocation;

  // Reconstructions keyed by AttackRow::tensor; written as blobs, not JSON.
  std::map<std::string, Tensor> tensors;

  bool operator==(const RunRecord& o) const {
    return tool_version == o.tool_version && scenario_name == o.scenario_name && scenario_hash == o.scenario_hash &&
           seed == o.seed && config == o.config && reference_model == o.reference_model &&
           reference_model_layers == o.reference_model_layers && has_partition == o.has_partition &&
           profile == o.profile && partition == o.partition && has_privacy == o.has_privacy &&
           privacy_clip_threshold == o.privacy_clip_threshold && privacy == o.privacy &&
           privacy_summary == o.privacy_summary && has_attack == o.has_attack &&
           attack_clip_threshold == o.attack_clip_threshold && wra_lambda == o.wra_lambda && attack == o.attack &&
           attack_summary == o.attack_summary && allocation == o.allocation;
  }
};

namespace detail {

template <class Row>
void canonicalize_row(Row& r) {
  Row::fields(r, [](const char*, auto& v) {
    if constexpr (std::is_same_v<std::decay_t<decltype(v)>, double>) v = canonical(v);
  });
}

template <class Row>
void canonicalize_rows(std::vector<Row>& rows) {
  for (auto& r : rows) canonicalize_row(r);
}

inline ordered_json real_to_json(double x) {
  if (std::isfinite(x)) return canonical(x);
  return format_real(x);
}

inline double real_from_json(const ordered_json& v) {
  if (v.is_number()) return v.get<double>();
  const auto s = v.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  throw ConfigError("", "expected a number, got '" + s + "'");
}

template <class Row>
ordered_json row_to_json(const Row& r) {
  ordered_json o = ordered_json::object();
  Row::fields(r, [&](const char* key, const auto& v) {
    using T = std::decay_t<decltype(v)>;
    if constexpr (std::is_same_v<T, double>) o[key] = real_to_json(v);
    else o[key] = v;
  });
  return o;
}

template <class Row>
Row row_from_json(const ordered_json& o) {
  Row r;
  Row::fields(r, [&](const char* key, auto& v) {
    using T = std::decay_t<decltype(v)>;
    const ordered_json& field = o.at(key);
    if constexpr (std::is_same_v<T, double>) v = real_from_json(field);
    else v = field.template get<T>();
  });
  return r;
}

template <class Row>
ordered_json rows_to_json(const std::vector<Row>& rows) {
  ordered_json a = ordered_json::array();
  for (const auto& r : rows) a.push_back(row_to_json(r));
  return a;
}

template <class Row>
std::vector<Row> rows_from_json(const ordered_json& a) {
  std::vector<Row> rows;
  for (const auto& o : a) rows.push_back(row_from_json<Row>(o));
  return rows;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

template <class Row>
std::string rows_to_csv(const std::vector<Row>& rows) {
  std::string out;
  bool first = true;
  const Row header{};
  Row::fields(header, [&](const char* key, const auto&) {
    if (!first) out += ',';
    out += key;
    first = false;
  });
  out += '\n';
  for (const auto& r : rows) {
    first = true;
    Row::fields(r, [&](const char*, const auto& v) {
      using T = std::decay_t<decltype(v)>;
      if (!first) out += ',';
      first = false;
      if constexpr (std::is_same_v<T, double>) out += format_real(v);
      else if constexpr (std::is_same_v<T, std::string>) out += csv_escape(v);
      else if constexpr (std::is_same_v<T, bool>) out += v ? "true" : "false";
      else out += std::to_string(v);
    });
    out += '\n';
  }
  return out;
}

inline std::string epsilon_tag(double eps) {
  if (std::isinf(eps)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", eps);
  return buf;
}

inline std::vector<AllocationRow> allocation_rows(const std::string& block, double eps, Mechanism mech,
                                                  const BudgetAllocation& alloc, double clip) {
  std::vector<AllocationRow> rows;
  const auto scales = noise_scales(alloc, clip);
  for (std::size_t i = 0; i < alloc.size(); ++i) {
    AllocationRow r;
    r.block = block;
    r.epsilon = eps;
    r.mechanism = mechanism_name(mech);
    r.filter = i;
    r.rank = alloc.ranks[i];
    r.rank_rounded = static_cast<std::uint64_t>(std::floor(alloc.ranks[i] + 0.5));
    r.epsilon_i = alloc.per_filter[i];
    r.noise_scale = scales[i];
    rows.push_back(r);
  }
  return rows;
}

inline BudgetAllocation allocation_for(Mechanism mech, const RankEstimate& ranks, double eps) {
  return mech == Mechanism::Collaborative ? allocate_budget(ranks.mean, eps) : uniform_budget(ranks.mean.size(), eps);
}

// What the edge device transmits for input x under a mechanism.
inline Tensor transmit(const ModelGraph& model, std::size_t m, const Tensor& x, Mechanism mech,
                       const BudgetAllocation* alloc, double clip, std::uint64_t seed) {
  const Tensor v = forward_prefix(model, x, m);
  if (mech == Mechanism::NonDp) return v;
  return collaborative_dp(v, *alloc, clip, seed).tensor;
}

}  // namespace detail

inline RunRecord make_record(const Scenario& s) {
  RunRecord r;
  r.scenario_name = s.name;
  r.seed = s.seed;
  r.config = s.echo;
  r.scenario_hash = sha256_hex(s.echo.dump());
  if (s.reference_model) {
    r.reference_model = *s.reference_model;
    r.reference_model_layers = model_depth_preset(*s.reference_model).layers;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Sweeps

inline std::vector<ProfileRow> profile_rows(const ModelGraph& model, const PartitionBlock& block) {
  const LatencyProfile p = profile(model, block.caps, block.bits_per_element, model.output_shape().elements());
  std::vector<ProfileRow> rows;
  for (std::size_t j = 1; j <= model.depth(); ++j) {
    ProfileRow row;
    row.layer = j;
    row.kind = layer_kind_name(model.layer(j));
    row.flops = static_cast<double>(layer_flops(model.layer(j), model.shape_at(j - 1)));
    row.edge_seconds = p.edge_seconds[j - 1];
    row.cloud_seconds = p.cloud_seconds[j - 1];
    row.output_bits = p.output_bits[j - 1];
    rows.push_back(row);
  }
  detail::canonicalize_rows(rows);
  return rows;
}

inline PartitionRow partition_row(const std::string& source, const std::string& network, const PartitionPlan& plan) {
  PartitionRow row;
  row.source = source;
  row.network = network;
  row.timestamp = plan.timestamp;
  row.rate_bps = plan.rate_bps;
  row.split = plan.split;
  row.total_seconds = plan.total_seconds;
  row.edge_compute_seconds = plan.breakdown.edge_compute;
  row.uplink_seconds = plan.breakdown.uplink;
  row.cloud_compute_seconds = plan.breakdown.cloud_compute;
  row.downlink_seconds = plan.breakdown.downlink;
  row.device_only_seconds = plan.device_only_seconds;
  row.cloud_only_seconds = plan.cloud_only_seconds;
  row.speedup_vs_device = plan.speedup_vs_device();
  row.speedup_vs_cloud = plan.speedup_vs_cloud();
  return row;
}

// One row per network preset, then one per trace point.
inline void run_partition_sweep(const Scenario& s, RunRecord& record) {
  if (!s.partition) throw ConfigError("partition", "scenario has no partition block");
  const PartitionBlock& b = *s.partition;
  const LatencyProfile p = profile(s.model, b.caps, b.bits_per_element, s.model.output_shape().elements());
  record.has_partition = true;
  record.profile = profile_rows(s.model, b);
  record.partition.clear();
  for (const auto& net : b.networks) record.partition.push_back(partition_row("preset", net.name, select_partition(p, net.rate_bps)));
  if (!b.trace.empty()) {
    for (const auto& plan : replan_on_bandwidth_change(p, b.trace)) record.partition.push_back(partition_row("trace", "", plan));
  }
  detail::canonicalize_rows(record.partition);
}

inline RunRecord run_partition_sweep(const Scenario& s) {
  RunRecord r = make_record(s);
  run_partition_sweep(s, r);
  return r;
}

// Argmax agreement with Non-DP over a fixed input batch, for every
// (epsilon, mechanism, seed). Noise streams are shared across epsilons and
// mechanisms for a given (seed, input), so comparisons are paired.
inline void run_privacy_sweep(const Scenario& s, RunRecord& record, std::size_t jobs = 1) {
  if (!s.privacy) throw ConfigError("privacy", "scenario has no privacy block");
  const PrivacyBlock& b = *s.privacy;
  const ModelGraph& model = s.model;
  const std::size_t m = b.split;

  const auto calibration = sample_inputs(model.input_shape(), b.rank.batch_size, derive_seed(s.seed, stream::kCalibration));
  const auto inputs = sample_inputs(model.input_shape(), b.eval_size, derive_seed(s.seed, stream::kPrivacyInputs));
  const double clip = resolve_clip_threshold(b.clip, model, m, calibration);
  const RankEstimate ranks = estimate_ranks(model, m, calibration, b.rank);

  std::vector<Tensor> features;
  std::vector<std::size_t> reference;
  for (const auto& x : inputs) {
    features.push_back(forward_prefix(model, x, m));
    const Tensor out = forward_suffix(model, features.back(), m);
    reference.push_back(static_cast<std::size_t>(std::max_element(out.values().begin(), out.values().end()) - out.values().begin()));
  }

  struct Job {
    double eps;
    Mechanism mech;
    std::size_t seed;
  };
  std::vector<Job> jobs_list;
  for (Mechanism mech : b.mechanisms) {
    if (mech == Mechanism::NonDp) {
      for (std::size_t k = 0; k < b.seeds; ++k) jobs_list.push_back({std::numeric_limits<double>::infinity(), mech, k});
      continue;
    }
    for (double eps : b.epsilons)
      for (std::size_t k = 0; k < b.seeds; ++k) jobs_list.push_back({eps, mech, k});
  }

  record.has_privacy = true;
  record.privacy_clip_threshold = canonical(clip);
  for (Mechanism mech : b.mechanisms) {
    if (mech == Mechanism::NonDp) continue;
    for (double eps : b.epsilons) {
      auto rows = detail::allocation_rows("privacy", eps, mech, detail::allocation_for(mech, ranks, eps), clip);
      record.allocation.insert(record.allocation.end(), rows.begin(), rows.end());
    }
  }

  record.privacy = parallel_map(jobs_list.size(), jobs, [&](std::size_t j) {
    const Job& job = jobs_list[j];
    PrivacyRow row;
    row.epsilon = job.eps;
    row.mechanism = mechanism_name(job.mech);
    row.seed = job.seed;
    if (job.mech == Mechanism::NonDp) {
      row.agreement = 1.0;
      row.consumed_budget = non_dp(features[0]).consumed_budget();
      return row;
    }
    const BudgetAllocation alloc = detail::allocation_for(job.mech, ranks, job.eps);
    const std::uint64_t base = derive_seed(derive_seed(s.seed, stream::kPrivacyNoise), job.seed);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < features.size(); ++i) {
      const NoisyFeatureMap noisy = collaborative_dp(features[i], alloc, clip, derive_seed(base, i));
      const Tensor out = forward_suffix(model, noisy.tensor, m);
      const auto arg = static_cast<std::size_t>(std::max_element(out.values().begin(), out.values().end()) - out.values().begin());
      agree += arg == reference[i];
      row.consumed_budget = noisy.consumed_budget();
    }
    row.agreement = static_cast<double>(agree) / static_cast<double>(features.size());
    return row;
  });
  detail::canonicalize_rows(record.privacy);

  record.privacy_summary.clear();
  for (const auto& row : record.privacy) {
    auto it = std::find_if(record.privacy_summary.begin(), record.privacy_summary.end(), [&](const PrivacySummaryRow& s) {
      return s.mechanism == row.mechanism && s.epsilon == row.epsilon;
    });
    if (it == record.privacy_summary.end()) {
      PrivacySummaryRow sr;
      sr.epsilon = row.epsilon;
      sr.mechanism = row.mechanism;
      std::vector<double> values;
      for (const auto& r : record.privacy)
        if (r.mechanism == row.mechanism && r.epsilon == row.epsilon) values.push_back(r.agreement);
      sr.seeds = values.size();
      sr.median_agreement = median_of(values);
      record.privacy_summary.push_back(sr);
    }
  }
  detail::canonicalize_rows(record.privacy_summary);
  detail::canonicalize_rows(record.allocation);
}

inline RunRecord run_privacy_sweep(const Scenario& s, std::size_t jobs = 1) {
  RunRecord r = make_record(s);
  run_privacy_sweep(s, r, jobs);
  return r;
}

inline ModelGraph attack_decoder(const ModelGraph& model, std::size_t m, DecoderKind kind) {
  const Shape& mid = model.shape_at(m);
  if (kind == DecoderKind::Mirror) {
    std::vector<Layer> prefix(model.layers().begin(), model.layers().begin() + static_cast<std::ptrdiff_t>(m));
    return mirror_decoder(prefix, mid, model.input_shape());
  }
  return ModelGraph(mid, {Flatten{}, FullyConnected::make(mid.elements(), model.input_shape().elements())});
}

// WRA and BINA against every (mechanism, epsilon, seed). WRA's lambda is
// the grid value with the best noiseless median PSNR (the attacker's
// strongest setting); ties go to the earlier grid entry.
inline void run_attack_campaign(const Scenario& s, RunRecord& record, std::size_t jobs = 1) {
  if (!s.attack) throw ConfigError("attack", "scenario has no attack block");
  const AttackBlock& b = *s.attack;
  const ModelGraph& model = s.model;
  const std::size_t m = b.split;
  constexpr double kInf = std::numeric_limits<double>::infinity();

  const auto calibration = sample_inputs(model.input_shape(), b.rank.batch_size, derive_seed(s.seed, stream::kCalibration));
  const double clip = resolve_clip_threshold(b.clip, model, m, calibration);
  const RankEstimate ranks = estimate_ranks(model, m, calibration, b.rank);

  struct Setting {
    Mechanism mech;
    double eps;
  };
  std::vector<Setting> settings;
  for (Mechanism mech : b.mechanisms) {
    if (mech == Mechanism::NonDp) settings.push_back({mech, kInf});
    else
      for (double eps : b.epsilons) settings.push_back({mech, eps});
  }
  std::vector<BudgetAllocation> allocs;
  for (const auto& st : settings) allocs.push_back(st.mech == Mechanism::NonDp ? BudgetAllocation{} : detail::allocation_for(st.mech, ranks, st.eps));

  record.has_attack = true;
  record.attack_clip_threshold = canonical(clip);
  for (std::size_t k = 0; k < settings.size(); ++k) {
    if (settings[k].mech == Mechanism::NonDp) continue;
    auto rows = detail::allocation_rows("attack", settings[k].eps, settings[k].mech, allocs[k], clip);
    record.allocation.insert(record.allocation.end(), rows.begin(), rows.end());
  }
  detail::canonicalize_rows(record.allocation);

  auto tensor_name = [](AttackKind a, const Setting& st, std::size_t seed) {
    return std::string("tensors/") + attack_name(a) + "-" + mechanism_name(st.mech) + "-eps" + detail::epsilon_tag(st.eps) +
           "-seed" + std::to_string(seed) + ".sdpt";
  };

  std::vector<AttackRow> rows;
  for (AttackKind attack : b.attacks) {
    if (attack == AttackKind::Wra) {
      const auto targets = sample_inputs(model.input_shape(), b.seeds, derive_seed(s.seed, stream::kWraTargets));
      auto wra_job = [&](const Tensor& observed, std::size_t seed, double lambda) {
        WraConfig cfg = b.wra;
        cfg.lambda = lambda;
        cfg.init_seed = derive_seed(s.seed, seed);
        return wra_reconstruct(model, m, observed, cfg, &targets[seed]);
      };

      // Lambda selection on noiseless observations.
      const std::size_t grid = b.lambda_grid.size();
      auto clean = parallel_map(grid * b.seeds, jobs, [&](std::size_t j) {
        const std::size_t seed = j % b.seeds;
        return wra_job(forward_prefix(model, targets[seed], m), seed, b.lambda_grid[j / b.seeds]);
      });
      std::size_t best = 0;
      std::vector<double> scores;
      for (std::size_t g = 0; g < grid; ++g) {
        std::vector<double> psnr;
        for (std::size_t k = 0; k < b.seeds; ++k) psnr.push_back(clean[g * b.seeds + k].fidelity->psnr_db);
        scores.push_back(median_of(psnr));
        if (scores[g] > scores[best]) best = g;
      }
      record.wra_lambda.clear();
      for (std::size_t g = 0; g < grid; ++g) record.wra_lambda.push_back({b.lambda_grid[g], scores[g], g == best});
      detail::canonicalize_rows(record.wra_lambda);
      const double lambda = b.lambda_grid[best];

      auto results = parallel_map(settings.size() * b.seeds, jobs, [&](std::size_t j) {
        const Setting& st = settings[j / b.seeds];
        const std::size_t seed = j % b.seeds;
        if (st.mech == Mechanism::NonDp) return clean[best * b.seeds + seed];
        const std::uint64_t noise = derive_seed(derive_seed(s.seed, stream::kWraNoise), seed);
        return wra_job(detail::transmit(model, m, targets[seed], st.mech, &allocs[j / b.seeds], clip, noise), seed, lambda);
      });
      for (std::size_t j = 0; j < results.size(); ++j) {
        const Setting& st = settings[j / b.seeds];
        const std::size_t seed = j % b.seeds;
        AttackRow row;
        row.attack = attack_name(attack);
        row.mechanism = mechanism_name(st.mech);
        row.epsilon = st.eps;
        row.seed = seed;
        row.lambda = lambda;
        row.objective = results[j].objective_trace.empty() ? 0.0 : results[j].objective_trace.back();
        row.mse = results[j].fidelity->mse;
        row.ssim = results[j].fidelity->ssim;
        row.psnr_db = results[j].fidelity->psnr_db;
        row.tensor = tensor_name(attack, st, seed);
        record.tensors[row.tensor] = results[j].reconstruction;
        rows.push_back(row);
      }
    } else {
      struct BinaOutcome {
        double loss = 0.0;
        SimilarityReport score;
        Tensor first;
      };
      auto outcomes = parallel_map(settings.size() * b.seeds, jobs, [&](std::size_t j) {
        const std::size_t k = j / b.seeds;
        const Setting& st = settings[k];
        const std::size_t seed = j % b.seeds;
        const auto train = sample_inputs(model.input_shape(), b.bina.queries,
                                         derive_seed(derive_seed(s.seed, stream::kBinaQueries), seed));
        const auto test = sample_inputs(model.input_shape(), b.test_size,
                                        derive_seed(derive_seed(s.seed, stream::kBinaTest), seed));
        const std::uint64_t qnoise = derive_seed(derive_seed(s.seed, stream::kBinaQueryNoise), seed);
        const std::uint64_t tnoise = derive_seed(derive_seed(s.seed, stream::kBinaTestNoise), seed);
        const FunctionOracle oracle([&](std::size_t i) {
          return QueryPair{detail::transmit(model, m, train.at(i), st.mech, &allocs[k], clip, derive_seed(qnoise, i)), train.at(i)};
        });
        InverseModelSpec spec{attack_decoder(model, m, b.decoder), model.input_shape(), b.bina};
        spec.train.seed = derive_seed(derive_seed(s.seed, stream::kBinaDecoder), seed);
        const TrainedDecoder dec = bina_train(oracle, spec);

        BinaOutcome out;
        out.loss = dec.final_loss;
        double mse_sum = 0.0, ssim_sum = 0.0;
        for (std::size_t i = 0; i < test.size(); ++i) {
          const Tensor observed = detail::transmit(model, m, test[i], st.mech, &allocs[k], clip, derive_seed(tnoise, i));
          const AttackResult r = bina_reconstruct(dec, observed, &test[i]);
          mse_sum += r.fidelity->mse;
          ssim_sum += r.fidelity->ssim;
          if (i == 0) out.first = r.reconstruction;
        }
        out.score.mse = mse_sum / static_cast<double>(test.size());
        out.score.ssim = ssim_sum / static_cast<double>(test.size());
        out.score.psnr_db = psnr_from_mse(out.score.mse);
        return out;
      });
      for (std::size_t j = 0; j < outcomes.size(); ++j) {
        const Setting& st = settings[j / b.seeds];
        const std::size_t seed = j % b.seeds;
        AttackRow row;
        row.attack = attack_name(attack);
        row.mechanism = mechanism_name(st.mech);
        row.epsilon = st.eps;
        row.seed = seed;
        row.objective = outcomes[j].loss;
        row.mse = outcomes[j].score.mse;
        row.ssim = outcomes[j].score.ssim;
        row.psnr_db = outcomes[j].score.psnr_db;
        row.tensor = tensor_name(attack, st, seed);
        record.tensors[row.tensor] = outcomes[j].first;
        rows.push_back(row);
      }
    }
  }
  detail::canonicalize_rows(rows);
  record.attack = std::move(rows);

  record.attack_summary.clear();
  for (AttackKind attack : b.attacks) {
    for (const auto& st : settings) {
      AttackSummaryRow sr;
      sr.attack = attack_name(attack);
      sr.mechanism = mechanism_name(st.mech);
      sr.epsilon = st.eps;
      std::vector<double> mse, ssim, psnr;
      for (const auto& r : record.attack) {
        if (r.attack == sr.attack && r.mechanism == sr.mechanism && r.epsilon == canonical(st.eps)) {
          mse.push_back(r.mse);
          ssim.push_back(r.ssim);
          psnr.push_back(r.psnr_db);
        }
      }
      sr.seeds = mse.size();
      sr.median_mse = median_of(mse);
      sr.median_ssim = median_of(ssim);
      sr.median_psnr_db = median_of(psnr);
      record.attack_summary.push_back(sr);
    }
  }
  detail::canonicalize_rows(record.attack_summary);
}

inline RunRecord run_attack_campaign(const Scenario& s, std::size_t jobs = 1) {
  RunRecord r = make_record(s);
  run_attack_campaign(s, r, jobs);
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

inline ordered_json record_to_json(const RunRecord& r) {
  using detail::rows_to_json;
  ordered_json o;
  o["tool_version"] = r.tool_version;
  o["scenario_name"] = r.scenario_name;
  o["scenario_hash"] = r.scenario_hash;
  o["seed"] = r.seed;
  o["config"] = ordered_json::parse(r.config.dump());
  o["reference_model"] = r.reference_model;
  o["reference_model_layers"] = r.reference_model_layers;
  o["has_partition"] = r.has_partition;
  o["profile"] = rows_to_json(r.profile);
  o["partition"] = rows_to_json(r.partition);
  o["has_privacy"] = r.has_privacy;
  o["privacy_clip_threshold"] = detail::real_to_json(r.privacy_clip_threshold);
  o["privacy"] = rows_to_json(r.privacy);
  o["privacy_summary"] = rows_to_json(r.privacy_summary);
  o["has_attack"] = r.has_attack;
  o["attack_clip_threshold"] = detail::real_to_json(r.attack_clip_threshold);
  o["wra_lambda"] = rows_to_json(r.wra_lambda);
  o["attack"] = rows_to_json(r.attack);
  o["attack_summary"] = rows_to_json(r.attack_summary);
  o["allocation"] = rows_to_json(r.allocation);
  return o;
}

inline RunRecord record_from_json(const ordered_json& o) {
  using detail::rows_from_json;
  RunRecord r;
  r.tool_version = o.at("tool_version").get<std::string>();
  r.scenario_name = o.at("scenario_name").get<std::string>();
  r.scenario_hash = o.at("scenario_hash").get<std::string>();
  r.seed = o.at("seed").get<std::uint64_t>();
  r.config = json::parse(o.at("config").dump());
  r.reference_model = o.at("reference_model").get<std::string>();
  r.reference_model_layers = o.at("reference_model_layers").get<std::uint64_t>();
  r.has_partition = o.at("has_partition").get<bool>();
  r.profile = rows_from_json<ProfileRow>(o.at("profile"));
  r.partition = rows_from_json<PartitionRow>(o.at("partition"));
  r.has_privacy = o.at("has_privacy").get<bool>();
  r.privacy_clip_threshold = detail::real_from_json(o.at("privacy_clip_threshold"));
  r.privacy = rows_from_json<PrivacyRow>(o.at("privacy"));
  r.privacy_summary = rows_from_json<PrivacySummaryRow>(o.at("privacy_summary"));
  r.has_attack = o.at("has_attack").get<bool>();
  r.attack_clip_threshold = detail::real_from_json(o.at("attack_clip_threshold"));
  r.wra_lambda = rows_from_json<LambdaScoreRow>(o.at("wra_lambda"));
  r.attack = rows_from_json<AttackRow>(o.at("attack"));
  r.attack_summary = rows_from_json<AttackSummaryRow>(o.at("attack_summary"));
  r.allocation = rows_from_json<AllocationRow>(o.at("allocation"));
  return r;
}

enum class ReportFormat { Csv, Json, Both };

inline ReportFormat parse_report_format(const std::string& s) {
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  if (s == "both") return ReportFormat::Both;
  throw ConfigError("format", "expected 'csv', 'json' or 'both'");
}

// Writes the record's tables, reconstruction blobs and manifest.json into
// `dir`. Returns the written paths relative to `dir`, sorted.
inline std::vector<std::string> emit_report(const RunRecord& r, const std::filesystem::path& dir, ReportFormat format) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());

  std::map<std::string, std::string> files;
  ordered_json absent = ordered_json::array();
  const bool csv = format != ReportFormat::Json;
  const bool js = format != ReportFormat::Csv;

  auto table = [&](const std::string& name, bool present, const std::string& reason, auto&& make_csv) {
    if (!present) {
      absent.push_back({{"table", name}, {"reason", reason}});
      return;
    }
    if (csv) files[name + ".csv"] = make_csv();
  };
  table("profile", r.has_partition, "no partition block", [&] { return detail::rows_to_csv(r.profile); });
  table("partition", r.has_partition, "no partition block", [&] { return detail::rows_to_csv(r.partition); });
  table("privacy", r.has_privacy, "no privacy block", [&] { return detail::rows_to_csv(r.privacy); });
  table("privacy_summary", r.has_privacy, "no privacy block", [&] { return detail::rows_to_csv(r.privacy_summary); });
  table("attack", r.has_attack, "no attack block", [&] { return detail::rows_to_csv(r.attack); });
  table("attack_summary", r.has_attack, "no attack block", [&] { return detail::rows_to_csv(r.attack_summary); });
  table("wra_lambda", r.has_attack && !r.wra_lambda.empty(), r.has_attack ? "no WRA runs" : "no attack block",
        [&] { return detail::rows_to_csv(r.wra_lambda); });
  table("allocation", !r.allocation.empty(), "no noisy mechanism runs", [&] { return detail::rows_to_csv(r.allocation); });
  if (js) files["record.json"] = record_to_json(r).dump(2) + "\n";
  for (const auto& [name, tensor] : r.tensors) files[name] = encode_tensor_blob(tensor);

  ordered_json manifest;
  manifest["tool_version"] = r.tool_version;
  manifest["scenario_hash"] = r.scenario_hash;
  manifest["seed"] = r.seed;
  ordered_json list = ordered_json::array();
  std::vector<std::string> written;
  for (const auto& [name, bytes] : files) {
    const fs::path path = dir / name;
    fs::create_directories(path.parent_path(), ec);
    detail::write_file(path, bytes);
    list.push_back({{"path", name}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}});
    written.push_back(name);
  }
  manifest["files"] = list;
  manifest["absent"] = absent;
  detail::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  written.push_back("manifest.json");
  std::sort(written.begin(), written.end());
  return written;
}

}  // namespace splitdp
