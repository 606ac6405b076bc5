#pragma once

// Scenario files: JSON documents describing the model, network presets,
// compute capabilities and the privacy/attack experiment blocks.

#include "json.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "splitdp/attacks.hpp"
#include "splitdp/blob.hpp"
#include "splitdp/error.hpp"
#include "splitdp/latency.hpp"
#include "splitdp/model.hpp"
#include "splitdp/privacy.hpp"
#include "splitdp/tinynet.hpp"

namespace splitdp {

using json = nlohmann::json;

inline constexpr int kScenarioVersion = 1;
inline constexpr int kModelSpecVersion = 1;

struct NetworkPreset {
  std::string_view name;
  double uplink_mbps;
};

// Uplink rates of the four emulated network conditions.
inline constexpr std::array<NetworkPreset, 4> kNetworkPresets{{
    {"poor", 0.15},
    {"medium", 1.3},
    {"good", 4.0},
    {"excellence", 15.0},
}};

struct ModelDepthPreset {
  std::string_view name;
  std::size_t layers;
};

// Layer counts of the reference networks. Metadata only: the layer
// granularity behind these counts is not defined.
inline constexpr std::array<ModelDepthPreset, 3> kModelDepthPresets{{
    {"AlexNet", 13},
    {"VGG-16", 34},
    {"MobileNet v1", 54},
}};

inline const NetworkPreset& network_preset(std::string_view name) {
  for (const auto& p : kNetworkPresets)
    if (p.name == name) return p;
  throw ConfigError("networks", "unknown network preset '" + std::string(name) + "'");
}

inline const ModelDepthPreset& model_depth_preset(std::string_view name) {
  for (const auto& p : kModelDepthPresets)
    if (p.name == name) return p;
  throw ConfigError("reference_model", "unknown reference model '" + std::string(name) + "'");
}

inline double mbps_to_bps(double mbps) { return mbps * 1e6; }

// ---------------------------------------------------------------------------
// JSON field access with dotted error paths

namespace detail {

inline std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

inline std::string index_path(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

inline const json& require_field(const json& obj, const std::string& path, const std::string& key) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(join_path(path, key), "missing required field");
  return *it;
}

inline const json* optional_field(const json& obj, const std::string& path, const std::string& key) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

// Reals may be written as numbers or as the strings "inf" / "infinity".
inline double as_real(const json& v, const std::string& path) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  }
  throw ConfigError(path, "expected a number");
}

inline std::uint64_t as_count(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw ConfigError(path, "expected a non-negative integer");
}

inline std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

inline const json& as_array(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path, "expected an array");
  return v;
}

inline double real_or(const json& obj, const std::string& path, const std::string& key, double fallback) {
  const json* v = optional_field(obj, path, key);
  return v ? as_real(*v, join_path(path, key)) : fallback;
}

inline std::uint64_t count_or(const json& obj, const std::string& path, const std::string& key,
                              std::uint64_t fallback) {
  const json* v = optional_field(obj, path, key);
  return v ? as_count(*v, join_path(path, key)) : fallback;
}

inline void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model specs

// {"preset": "tinynet", "seed": 7}
// or {"version": 1, "input_shape": [...], "layers": [...],
//     "weights": {"source": "random", "seed": n} | {"source": "blob", "path": p}}
inline ModelGraph parse_model_spec(const json& spec, const std::filesystem::path& base_dir,
                                   const std::string& path = "model") {
  using namespace detail;
  if (const json* preset = optional_field(spec, path, "preset")) {
    const std::string name = as_string(*preset, join_path(path, "preset"));
    if (name != "tinynet") throw ConfigError(join_path(path, "preset"), "unknown model preset '" + name + "'");
    return tinynet::build(count_or(spec, path, "seed", 7));
  }
  const auto version = count_or(spec, path, "version", kModelSpecVersion);
  require(version == kModelSpecVersion, join_path(path, "version"), "unsupported model spec version");

  std::vector<std::size_t> dims;
  const std::string shape_path = join_path(path, "input_shape");
  const json& shape = as_array(require_field(spec, path, "input_shape"), shape_path);
  for (std::size_t i = 0; i < shape.size(); ++i) {
    const auto d = as_count(shape[i], index_path(shape_path, i));
    require(d > 0, index_path(shape_path, i), "dimension must be > 0");
    dims.push_back(d);
  }
  require(!dims.empty(), shape_path, "must be non-empty");
  Shape current(dims);

  std::vector<Layer> layers;
  const std::string layers_path = join_path(path, "layers");
  const json& list = as_array(require_field(spec, path, "layers"), layers_path);
  require(!list.empty(), layers_path, "must be non-empty");
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string lp = index_path(layers_path, i);
    const std::string type = as_string(require_field(list[i], lp, "type"), join_path(lp, "type"));
    Layer layer;
    if (type == "conv") {
      require(current.rank() == 3, lp, "conv needs a [c,h,w] input, got " + current.str());
      const auto in = count_or(list[i], lp, "in_channels", current[0]);
      require(in == current[0], join_path(lp, "in_channels"), "does not match incoming channels " + std::to_string(current[0]));
      const auto out = as_count(require_field(list[i], lp, "out_channels"), join_path(lp, "out_channels"));
      const auto kernel = as_count(require_field(list[i], lp, "kernel"), join_path(lp, "kernel"));
      const auto stride = count_or(list[i], lp, "stride", 1);
      const auto padding = count_or(list[i], lp, "padding", 0);
      require(out > 0, join_path(lp, "out_channels"), "must be > 0");
      require(kernel > 0, join_path(lp, "kernel"), "must be > 0");
      require(stride > 0, join_path(lp, "stride"), "must be > 0");
      layer = Conv::make(in, out, kernel, stride, padding);
    } else if (type == "relu") {
      layer = Relu{};
    } else if (type == "maxpool") {
      const auto kernel = as_count(require_field(list[i], lp, "kernel"), join_path(lp, "kernel"));
      require(kernel > 0, join_path(lp, "kernel"), "must be > 0");
      layer = MaxPool{kernel};
    } else if (type == "flatten") {
      layer = Flatten{};
    } else if (type == "fc") {
      const auto in = count_or(list[i], lp, "in", current.elements());
      require(current.rank() == 1, lp, "fc needs a flat input, got " + current.str());
      require(in == current.elements(), join_path(lp, "in"), "does not match incoming size " + std::to_string(current.elements()));
      const auto out = as_count(require_field(list[i], lp, "out"), join_path(lp, "out"));
      require(out > 0, join_path(lp, "out"), "must be > 0");
      layer = FullyConnected::make(in, out);
    } else {
      throw ConfigError(join_path(lp, "type"), "unknown layer type '" + type + "'");
    }
    try {
      current = infer_output_shape(layer, current, i + 1);
    } catch (const ShapeError& e) {
      throw ConfigError(lp, e.what());
    }
    layers.push_back(std::move(layer));
  }
  ModelGraph model(Shape(dims), std::move(layers));

  const std::string wp = join_path(path, "weights");
  const json* weights = optional_field(spec, path, "weights");
  const std::string source = weights ? as_string(require_field(*weights, wp, "source"), join_path(wp, "source")) : "random";
  if (source == "random") {
    randomize_parameters(model, weights ? count_or(*weights, wp, "seed", 0) : 0);
  } else if (source == "blob") {
    const std::filesystem::path file = base_dir / as_string(require_field(*weights, wp, "path"), join_path(wp, "path"));
    const std::vector<double> values = decode_parameter_blob(detail::read_file(file), file.string());
    if (values.size() != model.parameter_count()) {
      throw ConfigError(join_path(wp, "path"), "blob holds " + std::to_string(values.size()) +
                                                   " parameters, model needs " + std::to_string(model.parameter_count()));
    }
    std::size_t k = 0;
    for (auto span : model.parameter_spans())
      for (double& v : span) v = values[k++];
  } else {
    throw ConfigError(join_path(wp, "source"), "unknown weight source '" + source + "'");
  }
  return model;
}

// ---------------------------------------------------------------------------
// Scenario

struct NetworkSpec {
  std::string name;
  double rate_bps = 0.0;
};

struct PartitionBlock {
  ComputeCapability caps;
  double bits_per_element = 64.0;
  std::vector<NetworkSpec> networks;
  std::vector<TracePoint> trace;
};

struct PrivacyBlock {
  std::size_t split = 1;
  std::vector<double> epsilons;
  std::vector<Mechanism> mechanisms;
  ClipConfig clip;
  RankEstimationConfig rank;
  std::size_t eval_size = 200;
  std::size_t seeds = 5;
};

enum class DecoderKind { Fc, Mirror };

struct AttackBlock {
  std::size_t split = 1;
  std::vector<AttackKind> attacks;
  std::vector<double> epsilons;
  std::vector<Mechanism> mechanisms;  // Non-DP runs once per seed, ignoring epsilons
  ClipConfig clip;
  RankEstimationConfig rank;
  std::size_t seeds = 10;
  WraConfig wra;
  std::vector<double> lambda_grid{0.0, 1e-3, 1e-2};
  BinaTrainConfig bina;
  DecoderKind decoder = DecoderKind::Fc;
  std::size_t test_size = 16;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 0;
  ModelGraph model{Shape{1}, {Relu{}}};
  std::optional<std::string> reference_model;  // depth-preset metadata
  std::optional<PartitionBlock> partition;
  std::optional<PrivacyBlock> privacy;
  std::optional<AttackBlock> attack;
  std::filesystem::path output_dir = "out";
  json echo;  // the scenario document with model references resolved
};

namespace detail {

inline std::vector<double> parse_epsilons(const json& obj, const std::string& path) {
  const std::string p = join_path(path, "epsilons");
  const json& list = as_array(require_field(obj, path, "epsilons"), p);
  require(!list.empty(), p, "epsilon grid must be non-empty");
  std::vector<double> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const double e = as_real(list[i], index_path(p, i));
    require(e > 0.0 && std::isfinite(e), index_path(p, i), "epsilon must be finite and > 0");
    out.push_back(e);
  }
  return out;
}

inline std::vector<Mechanism> parse_mechanisms(const json& obj, const std::string& path) {
  const json* v = optional_field(obj, path, "mechanisms");
  if (!v) return {Mechanism::Collaborative, Mechanism::Native, Mechanism::NonDp};
  const std::string p = join_path(path, "mechanisms");
  std::vector<Mechanism> out;
  for (std::size_t i = 0; i < as_array(*v, p).size(); ++i) {
    const std::string name = as_string((*v)[i], index_path(p, i));
    try {
      out.push_back(parse_mechanism(name));
    } catch (const ConfigError&) {
      throw ConfigError(index_path(p, i), "unknown mechanism '" + name + "'");
    }
  }
  require(!out.empty(), p, "must be non-empty");
  return out;
}

inline ClipConfig parse_clip(const json& obj, const std::string& path) {
  ClipConfig clip;
  const json* v = optional_field(obj, path, "clip");
  if (!v) return clip;
  const std::string p = join_path(path, "clip");
  const std::string policy = as_string(require_field(*v, p, "policy"), join_path(p, "policy"));
  if (policy == "median") {
    clip.policy = ClipConfig::Policy::Median;
  } else if (policy == "fixed") {
    clip.policy = ClipConfig::Policy::Fixed;
    clip.value = as_real(require_field(*v, p, "value"), join_path(p, "value"));
    require(clip.value > 0.0 && std::isfinite(clip.value), join_path(p, "value"), "must be finite and > 0");
  } else {
    throw ConfigError(join_path(p, "policy"), "expected 'median' or 'fixed'");
  }
  return clip;
}

inline RankEstimationConfig parse_rank(const json& obj, const std::string& path) {
  RankEstimationConfig cfg;
  cfg.batch_size = count_or(obj, path, "calibration_size", cfg.batch_size);
  cfg.tolerance = real_or(obj, path, "rank_tolerance", cfg.tolerance);
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(join_path(path, e.path().substr(e.path().find('.') + 1)), e.message());
  }
  return cfg;
}

inline std::size_t parse_split(const json& obj, const std::string& path, const ModelGraph& model) {
  const auto m = count_or(obj, path, "split", 1);
  require(m >= 1 && m <= model.depth(), join_path(path, "split"),
          "must lie in [1, " + std::to_string(model.depth()) + "]");
  require(model.shape_at(m).rank() == 3, join_path(path, "split"),
          "partition layer output must be a [k,h,w] feature map, got " + model.shape_at(m).str());
  return m;
}

inline PartitionBlock parse_partition(const json& obj, const std::string& path) {
  PartitionBlock b;
  const std::string cp = join_path(path, "compute");
  const json& compute = require_field(obj, path, "compute");
  b.caps.edge_flops = as_real(require_field(compute, cp, "edge_flops"), join_path(cp, "edge_flops"));
  b.caps.cloud_flops = as_real(require_field(compute, cp, "cloud_flops"), join_path(cp, "cloud_flops"));
  require(b.caps.edge_flops > 0.0 && std::isfinite(b.caps.edge_flops), join_path(cp, "edge_flops"), "must be finite and > 0");
  require(b.caps.cloud_flops > 0.0 && std::isfinite(b.caps.cloud_flops), join_path(cp, "cloud_flops"), "must be finite and > 0");
  b.bits_per_element = real_or(obj, path, "bits_per_element", b.bits_per_element);
  require(b.bits_per_element > 0.0 && std::isfinite(b.bits_per_element), join_path(path, "bits_per_element"),
          "must be finite and > 0");

  const std::string np = join_path(path, "networks");
  if (const json* nets = optional_field(obj, path, "networks")) {
    for (std::size_t i = 0; i < as_array(*nets, np).size(); ++i) {
      const json& n = (*nets)[i];
      const std::string ip = index_path(np, i);
      if (n.is_string()) {
        const std::string name = n.get<std::string>();
        try {
          b.networks.push_back({name, mbps_to_bps(network_preset(name).uplink_mbps)});
        } catch (const ConfigError&) {
          throw ConfigError(ip, "unknown network preset '" + name + "'");
        }
        continue;
      }
      NetworkSpec spec;
      spec.name = as_string(require_field(n, ip, "name"), join_path(ip, "name"));
      if (const json* r = optional_field(n, ip, "rate_mbps")) {
        spec.rate_bps = mbps_to_bps(as_real(*r, join_path(ip, "rate_mbps")));
      } else {
        NetworkCondition c;
        c.bandwidth_hz = as_real(require_field(n, ip, "bandwidth_hz"), join_path(ip, "bandwidth_hz"));
        c.transmit_power_w = real_or(n, ip, "transmit_power_w", c.transmit_power_w);
        c.channel_gain = real_or(n, ip, "channel_gain", c.channel_gain);
        c.noise_power_w = real_or(n, ip, "noise_power_w", c.noise_power_w);
        c.interference_w = real_or(n, ip, "interference_w", c.interference_w);
        try {
          spec.rate_bps = shannon_rate(c);
        } catch (const RangeError& e) {
          throw ConfigError(ip, e.what());
        }
      }
      require(spec.rate_bps > 0.0 && std::isfinite(spec.rate_bps), ip, "rate must be finite and > 0");
      b.networks.push_back(std::move(spec));
    }
  } else {
    for (const auto& p : kNetworkPresets) b.networks.push_back({std::string(p.name), mbps_to_bps(p.uplink_mbps)});
  }
  require(!b.networks.empty(), np, "must be non-empty");

  if (const json* trace = optional_field(obj, path, "trace")) {
    const std::string tp = join_path(path, "trace");
    for (std::size_t i = 0; i < as_array(*trace, tp).size(); ++i) {
      const std::string ip = index_path(tp, i);
      const json& pt = (*trace)[i];
      TracePoint point;
      point.timestamp = as_real(require_field(pt, ip, "t"), join_path(ip, "t"));
      if (const json* r = optional_field(pt, ip, "rate_mbps")) {
        point.condition = NetworkCondition::from_rate(mbps_to_bps(as_real(*r, join_path(ip, "rate_mbps"))), point.timestamp);
      } else {
        const std::string preset = as_string(require_field(pt, ip, "preset"), join_path(ip, "preset"));
        try {
          point.condition = NetworkCondition::from_rate(mbps_to_bps(network_preset(preset).uplink_mbps), point.timestamp);
        } catch (const ConfigError&) {
          throw ConfigError(join_path(ip, "preset"), "unknown network preset '" + preset + "'");
        }
      }
      require(point.condition.bandwidth_hz > 0.0, ip, "rate must be > 0");
      if (i > 0) require(point.timestamp > b.trace.back().timestamp, join_path(ip, "t"), "timestamps must strictly increase");
      b.trace.push_back(point);
    }
  }
  return b;
}

inline PrivacyBlock parse_privacy(const json& obj, const std::string& path, const ModelGraph& model) {
  PrivacyBlock b;
  b.split = parse_split(obj, path, model);
  b.epsilons = parse_epsilons(obj, path);
  b.mechanisms = parse_mechanisms(obj, path);
  b.clip = parse_clip(obj, path);
  b.rank = parse_rank(obj, path);
  b.eval_size = count_or(obj, path, "eval_size", b.eval_size);
  b.seeds = count_or(obj, path, "seeds", b.seeds);
  require(b.eval_size >= 1, join_path(path, "eval_size"), "must be >= 1");
  require(b.seeds >= 1, join_path(path, "seeds"), "must be >= 1");
  return b;
}

inline AttackBlock parse_attack(const json& obj, const std::string& path, const ModelGraph& model) {
  AttackBlock b;
  b.split = parse_split(obj, path, model);
  b.epsilons = parse_epsilons(obj, path);
  b.mechanisms = parse_mechanisms(obj, path);
  b.clip = parse_clip(obj, path);
  b.rank = parse_rank(obj, path);
  b.seeds = count_or(obj, path, "seeds", b.seeds);
  require(b.seeds >= 1, join_path(path, "seeds"), "must be >= 1");

  const std::string ap = join_path(path, "attacks");
  if (const json* list = optional_field(obj, path, "attacks")) {
    for (std::size_t i = 0; i < as_array(*list, ap).size(); ++i) {
      const std::string name = as_string((*list)[i], index_path(ap, i));
      if (name == "wra") b.attacks.push_back(AttackKind::Wra);
      else if (name == "bina") b.attacks.push_back(AttackKind::Bina);
      else throw ConfigError(index_path(ap, i), "unknown attack '" + name + "'");
    }
  } else {
    b.attacks = {AttackKind::Wra, AttackKind::Bina};
  }

  if (const json* w = optional_field(obj, path, "wra")) {
    const std::string wp = join_path(path, "wra");
    b.wra.beta = real_or(*w, wp, "beta", b.wra.beta);
    b.wra.step_size = real_or(*w, wp, "step_size", b.wra.step_size);
    b.wra.iterations = count_or(*w, wp, "iterations", b.wra.iterations);
    b.wra.tolerance = real_or(*w, wp, "tolerance", b.wra.tolerance);
    if (const json* init = optional_field(*w, wp, "init")) {
      const std::string s = as_string(*init, join_path(wp, "init"));
      if (s == "zeros") b.wra.init = WraConfig::Init::Zeros;
      else if (s == "uniform") b.wra.init = WraConfig::Init::Uniform;
      else throw ConfigError(join_path(wp, "init"), "expected 'zeros' or 'uniform'");
    }
    if (const json* grid = optional_field(*w, wp, "lambda_grid")) {
      const std::string gp = join_path(wp, "lambda_grid");
      b.lambda_grid.clear();
      for (std::size_t i = 0; i < as_array(*grid, gp).size(); ++i) {
        const double l = as_real((*grid)[i], index_path(gp, i));
        require(l >= 0.0 && std::isfinite(l), index_path(gp, i), "lambda must be finite and >= 0");
        b.lambda_grid.push_back(l);
      }
      require(!b.lambda_grid.empty(), gp, "must be non-empty");
    }
    try {
      b.wra.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(join_path(path, e.path().substr(e.path().find('.') + 1)), e.message());
    }
  }

  if (const json* bi = optional_field(obj, path, "bina")) {
    const std::string bp = join_path(path, "bina");
    b.bina.queries = count_or(*bi, bp, "queries", b.bina.queries);
    b.bina.epochs = count_or(*bi, bp, "epochs", b.bina.epochs);
    b.bina.batch_size = count_or(*bi, bp, "batch_size", b.bina.batch_size);
    b.bina.step_size = real_or(*bi, bp, "step_size", b.bina.step_size);
    b.test_size = count_or(*bi, bp, "test_size", b.test_size);
    require(b.test_size >= 1, join_path(bp, "test_size"), "must be >= 1");
    if (const json* d = optional_field(*bi, bp, "decoder")) {
      const std::string s = as_string(*d, join_path(bp, "decoder"));
      if (s == "fc") b.decoder = DecoderKind::Fc;
      else if (s == "mirror") b.decoder = DecoderKind::Mirror;
      else throw ConfigError(join_path(bp, "decoder"), "expected 'fc' or 'mirror'");
    }
    try {
      b.bina.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(join_path(path, e.path().substr(e.path().find('.') + 1)), e.message());
    }
  }
  return b;
}

}  // namespace detail

// `base_dir` resolves relative model and blob paths.
inline Scenario parse_scenario(const json& doc, const std::filesystem::path& base_dir) {
  using namespace detail;
  if (!doc.is_object()) throw ConfigError("", "scenario must be a JSON object");
  const auto version = as_count(require_field(doc, "", "version"), "version");
  require(version == static_cast<std::uint64_t>(kScenarioVersion), "version",
          "unsupported scenario version " + std::to_string(version));

  Scenario s;
  s.echo = doc;
  if (const json* n = optional_field(doc, "", "name")) s.name = as_string(*n, "name");
  s.seed = count_or(doc, "", "seed", 0);
  if (const json* o = optional_field(doc, "", "output_dir")) s.output_dir = base_dir / as_string(*o, "output_dir");

  const json& model = require_field(doc, "", "model");
  if (model.is_string()) {
    const std::filesystem::path file = base_dir / model.get<std::string>();
    json spec;
    try {
      spec = json::parse(detail::read_file(file));
    } catch (const json::parse_error& e) {
      throw ConfigError("model", "cannot parse " + file.string() + ": " + e.what());
    } catch (const IoError& e) {
      throw ConfigError("model", e.what());
    }
    s.model = parse_model_spec(spec, file.parent_path(), "model");
    s.echo["model"] = spec;
  } else {
    s.model = parse_model_spec(model, base_dir, "model");
  }

  if (const json* r = optional_field(doc, "", "reference_model")) {
    const std::string name = as_string(*r, "reference_model");
    s.reference_model = std::string(model_depth_preset(name).name);
  }
  if (const json* p = optional_field(doc, "", "partition")) s.partition = parse_partition(*p, "partition");
  if (const json* p = optional_field(doc, "", "privacy")) s.privacy = parse_privacy(*p, "privacy", s.model);
  if (const json* p = optional_field(doc, "", "attack")) s.attack = parse_attack(*p, "attack", s.model);
  return s;
}

inline Scenario load_scenario(const std::filesystem::path& file) {
  json doc;
  try {
    doc = json::parse(detail::read_file(file));
  } catch (const json::parse_error& e) {
    throw ConfigError("", "cannot parse " + file.string() + ": " + e.what());
  }
  return parse_scenario(doc, file.parent_path());
}

}  // namespace splitdp
