// SPDX-License-Identifier: Apache-2.0
//
// Hardware and model specifications: types, validation, JSON schema and the
// built-in preset catalog.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace infer_econ {

inline constexpr int kSchemaVersion = 1;

/// Raised for malformed spec files (bad JSON, missing or mistyped fields).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a spec violates one of its invariants.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UnknownPresetError : public std::invalid_argument {
 public:
  explicit UnknownPresetError(const std::string& name)
      : std::invalid_argument("unknown preset: " + name) {}
};

// ---------------------------------------------------------------------------
// AcceleratorSpec
// ---------------------------------------------------------------------------

struct AcceleratorSpec {
  std::string name;
  std::string source;
  std::map<int, double> peak_flops;  // precision bits -> FLOP/s
  double flop_efficiency = 1.0;
  double hbm_capacity_bytes = 0;
  double hbm_bandwidth_bytes_per_s = 0;
  double hbm_efficiency = 1.0;
  double intra_node_bandwidth_bytes_per_s = 0;  // unidirectional reads
  double inter_node_bandwidth_bytes_per_s = 0;
  double ll_protocol_bandwidth_factor = 1.0;
  int node_size = 1;
  double kernel_launch_latency_s = 0;
  double collective_base_latency_s = 0;
  double per_rank_latency_s = 0;
  double per_tree_step_latency_s = 0;
  double hourly_price_usd = 0;

  bool has_precision(int bits) const { return peak_flops.count(bits) != 0; }

  /// Narrowest supported arithmetic precision that can hold `bits`. Formats
  /// without native tensor-core support run at the next wider rate.
  int compute_precision_for(int bits) const {
    auto it = peak_flops.lower_bound(bits);
    if (it == peak_flops.end()) {
      throw ValidationError(name + ": no arithmetic rate for " +
                            std::to_string(bits) + "-bit or wider");
    }
    return it->first;
  }

  double raw_flops(int bits) const {
    auto it = peak_flops.find(bits);
    if (it == peak_flops.end()) {
      throw ValidationError(name + ": no peak_flops entry for " +
                            std::to_string(bits) + "-bit");
    }
    return it->second;
  }

  double flops(int bits, bool apply_efficiency) const {
    return raw_flops(bits) * (apply_efficiency ? flop_efficiency : 1.0);
  }
  double hbm_bandwidth(bool apply_efficiency) const {
    return hbm_bandwidth_bytes_per_s * (apply_efficiency ? hbm_efficiency : 1.0);
  }
  /// Intra-node read bandwidth usable by low-latency collectives.
  double collective_intra_bandwidth() const {
    return intra_node_bandwidth_bytes_per_s / ll_protocol_bandwidth_factor;
  }
  int nodes_for(int n_gpu) const { return (n_gpu + node_size - 1) / node_size; }

  bool operator==(const AcceleratorSpec&) const = default;
};

// ---------------------------------------------------------------------------
// ModelArchitecture
// ---------------------------------------------------------------------------

enum class AttentionVariant { standard, mla };

inline std::string_view to_string(AttentionVariant v) {
  return v == AttentionVariant::mla ? "mla" : "standard";
}

/// Parameter counts as (attention, feedforward, unembedding, embedding).
/// The embedding table is a separate entry so tied and untied vocabularies
/// are both counted once.
struct ParamDecomposition {
  double attention = 0;
  double feedforward = 0;
  double unembedding = 0;
  double embedding = 0;

  double total() const { return attention + feedforward + unembedding + embedding; }
  bool operator==(const ParamDecomposition&) const = default;
};

struct ModelArchitecture {
  std::string name;
  std::string source;
  int n_layers = 0;
  int d_model = 0;
  int n_head = 0;
  int d_head = 0;
  int attention_group_size = 1;  // g = n_head / n_kv_head
  AttentionVariant attention_variant = AttentionVariant::standard;
  int d_latent = 0;
  int d_ff = 0;
  int ff_matrix_count = 2;
  bool parallel_attention = false;
  int n_expert = 1;
  int n_active_expert = 1;
  int vocab_size = 0;
  bool tied_embeddings = false;
  ParamDecomposition params;
  // Entries of `params` given explicitly in the source file rather than
  // derived from dimensions; kept so serialization round-trips.
  std::vector<std::string> param_overrides;
  int weight_bits = 16;
  int activation_bits = 16;

  double sparsity() const {
    return static_cast<double>(n_expert) / static_cast<double>(n_active_expert);
  }
  bool is_dense() const { return n_expert == n_active_expert; }
  int n_kv_head() const { return n_head / attention_group_size; }
  double total_params() const { return params.total(); }
  double weight_bytes_per_param() const { return weight_bits / 8.0; }
  double activation_bytes() const { return activation_bits / 8.0; }

  bool operator==(const ModelArchitecture&) const = default;
};

/// Parameter counts implied by the dimensions (standard attention, uniform
/// experts in every layer).
inline ParamDecomposition derive_params(const ModelArchitecture& m) {
  const double layers = m.n_layers;
  const double dm = m.d_model;
  const double q_width = static_cast<double>(m.n_head) * m.d_head;
  const double kv_width = static_cast<double>(m.n_head / m.attention_group_size) * m.d_head;
  ParamDecomposition p;
  p.attention = layers * (2.0 * dm * q_width + 2.0 * dm * kv_width);
  p.feedforward = static_cast<double>(m.ff_matrix_count) * dm * m.d_ff * m.n_expert * layers;
  p.unembedding = static_cast<double>(m.vocab_size) * dm;
  p.embedding = m.tied_embeddings ? 0.0 : static_cast<double>(m.vocab_size) * dm;
  return p;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

inline void require(bool ok, const std::string& spec, const std::string& what) {
  if (!ok) throw ValidationError(spec + ": " + what);
}

inline bool positive(double x) { return std::isfinite(x) && x > 0; }
inline bool fraction(double x) { return std::isfinite(x) && x > 0 && x <= 1; }

}  // namespace detail

inline void validate(const AcceleratorSpec& a) {
  using detail::positive;
  using detail::require;
  const std::string& n = a.name.empty() ? std::string("accelerator") : a.name;
  require(!a.name.empty(), n, "name must be non-empty");
  require(!a.peak_flops.empty(), n, "peak_flops must have at least one precision");
  for (const auto& [bits, rate] : a.peak_flops) {
    require(bits > 0, n, "peak_flops precision must be positive");
    require(positive(rate), n, "peak_flops rates must be positive");
  }
  require(detail::fraction(a.flop_efficiency), n, "efficiency out of range: flop_efficiency");
  require(detail::fraction(a.hbm_efficiency), n, "efficiency out of range: hbm_efficiency");
  require(positive(a.hbm_capacity_bytes), n, "hbm_capacity_bytes must be positive");
  require(positive(a.hbm_bandwidth_bytes_per_s), n, "hbm_bandwidth_bytes_per_s must be positive");
  require(positive(a.intra_node_bandwidth_bytes_per_s), n,
          "intra_node_bandwidth_bytes_per_s must be positive");
  require(positive(a.inter_node_bandwidth_bytes_per_s), n,
          "inter_node_bandwidth_bytes_per_s must be positive");
  require(positive(a.ll_protocol_bandwidth_factor), n,
          "ll_protocol_bandwidth_factor must be positive");
  require(a.node_size >= 1, n, "node_size must be >= 1");
  require(positive(a.kernel_launch_latency_s), n, "kernel_launch_latency_s must be positive");
  require(positive(a.collective_base_latency_s), n, "collective_base_latency_s must be positive");
  require(positive(a.per_rank_latency_s), n, "per_rank_latency_s must be positive");
  require(positive(a.per_tree_step_latency_s), n, "per_tree_step_latency_s must be positive");
  require(positive(a.hourly_price_usd), n, "hourly_price_usd must be positive");
}

inline void validate(const ModelArchitecture& m) {
  using detail::require;
  const std::string& n = m.name.empty() ? std::string("model") : m.name;
  require(!m.name.empty(), n, "name must be non-empty");
  require(m.n_layers >= 1, n, "n_layers must be >= 1");
  require(m.d_model >= 1, n, "d_model must be >= 1");
  require(m.n_head >= 1, n, "n_head must be >= 1");
  require(m.d_head >= 1, n, "d_head must be >= 1");
  require(m.attention_group_size >= 1, n, "attention_group_size must be >= 1");
  require(m.n_head % m.attention_group_size == 0, n,
          "attention_group_size must divide n_head");
  require(m.attention_variant != AttentionVariant::mla || m.d_latent > 0, n,
          "MLA models need d_latent > 0");
  require(m.d_ff >= 0, n, "d_ff must be >= 0");
  require(m.ff_matrix_count >= 1, n, "ff_matrix_count must be >= 1");
  require(m.n_expert >= 1, n, "n_expert must be >= 1");
  require(m.n_active_expert >= 1, n, "n_active_expert must be >= 1");
  require(m.n_active_expert <= m.n_expert, n, "n_active_expert must not exceed n_expert");
  require(m.vocab_size >= 0, n, "vocab_size must be >= 0");
  require(m.params.attention >= 0 && m.params.feedforward >= 0 &&
              m.params.unembedding >= 0 && m.params.embedding >= 0,
          n, "parameter counts must be >= 0");
  require(m.params.total() > 0, n, "total parameter count must be positive");
  require(m.weight_bits > 0 && m.activation_bits > 0, n, "precisions must be positive");
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

using json = nlohmann::ordered_json;

namespace detail {

template <typename T>
T get_field(const json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key)) throw ParseError(ctx + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(ctx + ": field '" + key + "' has wrong type (" + e.what() + ")");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& ctx) {
  return j.contains(key) ? get_field<T>(j, key, ctx) : fallback;
}

inline void check_header(const json& j, const char* kind, const std::string& ctx) {
  if (!j.is_object()) throw ParseError(ctx + ": top level must be an object");
  const int version = get_field<int>(j, "schema_version", ctx);
  if (version != kSchemaVersion) {
    throw ParseError(ctx + ": unsupported schema_version " + std::to_string(version));
  }
  const auto k = get_field<std::string>(j, "kind", ctx);
  if (k != kind) throw ParseError(ctx + ": expected kind '" + kind + "', got '" + k + "'");
}

}  // namespace detail

inline json to_json(const AcceleratorSpec& a) {
  json flops = json::object();
  for (const auto& [bits, rate] : a.peak_flops) flops[std::to_string(bits)] = rate;
  return json{
      {"schema_version", kSchemaVersion},
      {"kind", "accelerator"},
      {"name", a.name},
      {"source", a.source},
      {"peak_flops_per_s", flops},
      {"flop_efficiency", a.flop_efficiency},
      {"hbm_capacity_bytes", a.hbm_capacity_bytes},
      {"hbm_bandwidth_bytes_per_s", a.hbm_bandwidth_bytes_per_s},
      {"hbm_efficiency", a.hbm_efficiency},
      {"intra_node_bandwidth_bytes_per_s", a.intra_node_bandwidth_bytes_per_s},
      {"inter_node_bandwidth_bytes_per_s", a.inter_node_bandwidth_bytes_per_s},
      {"ll_protocol_bandwidth_factor", a.ll_protocol_bandwidth_factor},
      {"node_size", a.node_size},
      {"kernel_launch_latency_s", a.kernel_launch_latency_s},
      {"collective_base_latency_s", a.collective_base_latency_s},
      {"per_rank_latency_s", a.per_rank_latency_s},
      {"per_tree_step_latency_s", a.per_tree_step_latency_s},
      {"hourly_price_usd", a.hourly_price_usd},
  };
}

inline AcceleratorSpec accelerator_from_json(const json& j, const std::string& ctx = "accelerator") {
  using detail::get_field;
  detail::check_header(j, "accelerator", ctx);
  AcceleratorSpec a;
  a.name = get_field<std::string>(j, "name", ctx);
  a.source = detail::get_or<std::string>(j, "source", "", ctx);
  const json& flops = j.contains("peak_flops_per_s") ? j.at("peak_flops_per_s") : json();
  if (!flops.is_object()) throw ParseError(ctx + ": 'peak_flops_per_s' must be an object");
  for (const auto& [key, value] : flops.items()) {
    int bits = 0;
    try {
      std::size_t used = 0;
      bits = std::stoi(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw ParseError(ctx + ": peak_flops_per_s key '" + key + "' is not an integer bit width");
    }
    if (!value.is_number()) throw ParseError(ctx + ": peak_flops_per_s values must be numbers");
    a.peak_flops[bits] = value.get<double>();
  }
  a.flop_efficiency = get_field<double>(j, "flop_efficiency", ctx);
  a.hbm_capacity_bytes = get_field<double>(j, "hbm_capacity_bytes", ctx);
  a.hbm_bandwidth_bytes_per_s = get_field<double>(j, "hbm_bandwidth_bytes_per_s", ctx);
  a.hbm_efficiency = get_field<double>(j, "hbm_efficiency", ctx);
  a.intra_node_bandwidth_bytes_per_s = get_field<double>(j, "intra_node_bandwidth_bytes_per_s", ctx);
  a.inter_node_bandwidth_bytes_per_s = get_field<double>(j, "inter_node_bandwidth_bytes_per_s", ctx);
  a.ll_protocol_bandwidth_factor = get_field<double>(j, "ll_protocol_bandwidth_factor", ctx);
  a.node_size = get_field<int>(j, "node_size", ctx);
  a.kernel_launch_latency_s = get_field<double>(j, "kernel_launch_latency_s", ctx);
  a.collective_base_latency_s = get_field<double>(j, "collective_base_latency_s", ctx);
  a.per_rank_latency_s = get_field<double>(j, "per_rank_latency_s", ctx);
  a.per_tree_step_latency_s = get_field<double>(j, "per_tree_step_latency_s", ctx);
  a.hourly_price_usd = get_field<double>(j, "hourly_price_usd", ctx);
  validate(a);
  return a;
}

inline json to_json(const ModelArchitecture& m) {
  json j{
      {"schema_version", kSchemaVersion},
      {"kind", "model"},
      {"name", m.name},
      {"source", m.source},
      {"n_layers", m.n_layers},
      {"d_model", m.d_model},
      {"n_head", m.n_head},
      {"d_head", m.d_head},
      {"attention_group_size", m.attention_group_size},
      {"attention_variant", std::string(to_string(m.attention_variant))},
      {"d_latent", m.d_latent},
      {"d_ff", m.d_ff},
      {"ff_matrix_count", m.ff_matrix_count},
      {"parallel_attention", m.parallel_attention},
      {"n_expert", m.n_expert},
      {"n_active_expert", m.n_active_expert},
      {"vocab_size", m.vocab_size},
      {"tied_embeddings", m.tied_embeddings},
      {"weight_bits", m.weight_bits},
      {"activation_bits", m.activation_bits},
  };
  if (!m.param_overrides.empty()) {
    json p = json::object();
    for (const auto& key : m.param_overrides) {
      if (key == "attention") p[key] = m.params.attention;
      if (key == "feedforward") p[key] = m.params.feedforward;
      if (key == "unembedding") p[key] = m.params.unembedding;
      if (key == "embedding") p[key] = m.params.embedding;
    }
    j["params"] = p;
  }
  return j;
}

/// Fills derived parameter counts for every entry not listed in
/// `param_overrides`, then validates.
inline void finalize(ModelArchitecture& m) {
  const ParamDecomposition derived = derive_params(m);
  auto overridden = [&](std::string_view key) {
    for (const auto& k : m.param_overrides)
      if (k == key) return true;
    return false;
  };
  if (!overridden("attention")) m.params.attention = derived.attention;
  if (!overridden("feedforward")) m.params.feedforward = derived.feedforward;
  if (!overridden("unembedding")) m.params.unembedding = derived.unembedding;
  if (!overridden("embedding")) m.params.embedding = derived.embedding;
  validate(m);
}

inline ModelArchitecture model_from_json(const json& j, const std::string& ctx = "model") {
  using detail::get_field;
  using detail::get_or;
  detail::check_header(j, "model", ctx);
  ModelArchitecture m;
  m.name = get_field<std::string>(j, "name", ctx);
  m.source = get_or<std::string>(j, "source", "", ctx);
  m.n_layers = get_field<int>(j, "n_layers", ctx);
  m.d_model = get_field<int>(j, "d_model", ctx);
  m.n_head = get_field<int>(j, "n_head", ctx);
  m.d_head = get_field<int>(j, "d_head", ctx);
  m.attention_group_size = get_field<int>(j, "attention_group_size", ctx);
  const auto variant = get_or<std::string>(j, "attention_variant", "standard", ctx);
  if (variant == "standard") {
    m.attention_variant = AttentionVariant::standard;
  } else if (variant == "mla") {
    m.attention_variant = AttentionVariant::mla;
  } else {
    throw ParseError(ctx + ": attention_variant must be 'standard' or 'mla'");
  }
  m.d_latent = get_or<int>(j, "d_latent", 0, ctx);
  m.d_ff = get_field<int>(j, "d_ff", ctx);
  m.ff_matrix_count = get_or<int>(j, "ff_matrix_count", 2, ctx);
  m.parallel_attention = get_or<bool>(j, "parallel_attention", false, ctx);
  m.n_expert = get_or<int>(j, "n_expert", 1, ctx);
  m.n_active_expert = get_or<int>(j, "n_active_expert", 1, ctx);
  m.vocab_size = get_or<int>(j, "vocab_size", 0, ctx);
  m.tied_embeddings = get_or<bool>(j, "tied_embeddings", false, ctx);
  m.weight_bits = get_or<int>(j, "weight_bits", 16, ctx);
  m.activation_bits = get_or<int>(j, "activation_bits", 16, ctx);
  if (j.contains("params")) {
    const json& p = j.at("params");
    if (!p.is_object()) throw ParseError(ctx + ": 'params' must be an object");
    for (const auto& [key, value] : p.items()) {
      if (!value.is_number()) throw ParseError(ctx + ": params." + key + " must be a number");
      const double v = value.get<double>();
      if (key == "attention") {
        m.params.attention = v;
      } else if (key == "feedforward") {
        m.params.feedforward = v;
      } else if (key == "unembedding") {
        m.params.unembedding = v;
      } else if (key == "embedding") {
        m.params.embedding = v;
      } else {
        throw ParseError(ctx + ": unknown params entry '" + key + "'");
      }
      m.param_overrides.push_back(key);
    }
  }
  finalize(m);
  return m;
}

// ---------------------------------------------------------------------------
// Built-in presets
// ---------------------------------------------------------------------------

namespace presets {

inline AcceleratorSpec h100_sxm() {
  AcceleratorSpec a;
  a.name = "h100-sxm";
  a.source = "https://www.nvidia.com/en-us/data-center/h100/";
  a.peak_flops = {{8, 2e15}, {16, 1e15}};
  a.flop_efficiency = 0.70;
  a.hbm_capacity_bytes = 80e9;
  a.hbm_bandwidth_bytes_per_s = 3.3e12;
  a.hbm_efficiency = 0.75;
  a.intra_node_bandwidth_bytes_per_s = 450e9;
  a.inter_node_bandwidth_bytes_per_s = 50e9;
  a.ll_protocol_bandwidth_factor = 2.0;
  a.node_size = 8;
  a.kernel_launch_latency_s = 4e-6;
  a.collective_base_latency_s = 6.8e-6;
  a.per_rank_latency_s = 1.2e-6;
  a.per_tree_step_latency_s = 10e-6;
  a.hourly_price_usd = 2.1;
  return a;
}

inline AcceleratorSpec a100_sxm() {
  AcceleratorSpec a = h100_sxm();
  a.name = "a100-sxm";
  a.source = "https://www.nvidia.com/en-us/data-center/a100/";
  a.peak_flops = {{8, 624e12}, {16, 312e12}};
  a.hbm_capacity_bytes = 80e9;
  a.hbm_bandwidth_bytes_per_s = 2.039e12;
  a.intra_node_bandwidth_bytes_per_s = 300e9;  // 600 GB/s NVLink, one direction
  a.inter_node_bandwidth_bytes_per_s = 25e9;   // one 200 Gb/s HDR port per GPU
  a.hourly_price_usd = 1.5;
  return a;
}

inline AcceleratorSpec v100_sxm() {
  AcceleratorSpec a = h100_sxm();
  a.name = "v100-sxm";
  a.source = "https://www.nvidia.com/en-us/data-center/v100/";
  a.peak_flops = {{16, 125e12}};  // no 8-bit tensor-core rate
  a.hbm_capacity_bytes = 32e9;
  a.hbm_bandwidth_bytes_per_s = 0.9e12;
  a.intra_node_bandwidth_bytes_per_s = 150e9;   // 300 GB/s NVLink, one direction
  a.inter_node_bandwidth_bytes_per_s = 6.25e9;  // 4x 100 Gb/s EDR per 8 GPUs
  a.hourly_price_usd = 0.42;
  return a;
}

inline ModelArchitecture dense(std::string name, std::string source, int layers, int d_model,
                               int heads, int d_head, int kv_heads, int d_ff, int ff_count,
                               int vocab, bool tied) {
  ModelArchitecture m;
  m.name = std::move(name);
  m.source = std::move(source);
  m.n_layers = layers;
  m.d_model = d_model;
  m.n_head = heads;
  m.d_head = d_head;
  m.attention_group_size = heads / kv_heads;
  m.d_ff = d_ff;
  m.ff_matrix_count = ff_count;
  m.vocab_size = vocab;
  m.tied_embeddings = tied;
  return m;
}

inline ModelArchitecture llama3_8b() {
  auto m = dense("llama3-8b", "https://huggingface.co/meta-llama/Meta-Llama-3-8B/blob/main/config.json",
                 32, 4096, 32, 128, 8, 14336, 3, 128256, false);
  finalize(m);
  return m;
}

inline ModelArchitecture llama3_70b() {
  auto m = dense("llama3-70b", "https://huggingface.co/meta-llama/Meta-Llama-3-70B/blob/main/config.json",
                 80, 8192, 64, 128, 8, 28672, 3, 128256, false);
  finalize(m);
  return m;
}

inline ModelArchitecture llama31_405b() {
  auto m = dense("llama3.1-405b",
                 "https://huggingface.co/meta-llama/Llama-3.1-405B/blob/main/config.json", 126,
                 16384, 128, 128, 8, 53248, 3, 128256, false);
  finalize(m);
  return m;
}

inline ModelArchitecture mixtral_8x22b() {
  auto m = dense("mixtral-8x22b",
                 "https://huggingface.co/mistralai/Mixtral-8x22B-v0.1/blob/main/config.json", 56,
                 6144, 48, 128, 8, 16384, 3, 32000, false);
  m.n_expert = 8;
  m.n_active_expert = 2;
  finalize(m);
  return m;
}

inline ModelArchitecture mistral_large_2() {
  auto m = dense("mistral-large-2",
                 "https://huggingface.co/mistralai/Mistral-Large-Instruct-2407/blob/main/config.json",
                 88, 12288, 96, 128, 8, 28672, 3, 32768, false);
  finalize(m);
  return m;
}

// Routed experts only (256 choose 8). The three dense leading layers and the
// shared expert are folded into the feedforward count, which the
// uniform-routing formulas then treat as routed.
inline ModelArchitecture deepseek_v3() {
  auto m = dense("deepseek-v3", "https://huggingface.co/deepseek-ai/DeepSeek-V3/blob/main/config.json",
                 61, 7168, 128, 128, 1, 2048, 3, 129280, false);
  m.attention_variant = AttentionVariant::mla;
  m.d_latent = 512;
  m.n_expert = 256;
  m.n_active_expert = 8;
  // q_a + q_b + kv_a + kv_b + o projections per layer
  m.params.attention = 61.0 * (7168.0 * 1536 + 1536.0 * 128 * 192 + 7168.0 * 576 +
                               512.0 * 128 * 256 + 128.0 * 128 * 7168);
  // 3 dense layers (d_ff 18432) + 58 MoE layers of 257 experts + routers
  m.params.feedforward =
      3.0 * 3 * 7168 * 18432 + 58.0 * 257 * 3 * 7168 * 2048 + 58.0 * 256 * 7168;
  m.param_overrides = {"attention", "feedforward"};
  finalize(m);
  return m;
}

inline ModelArchitecture gpt3() {
  auto m = dense("gpt3", "https://arxiv.org/abs/2005.14165", 96, 12288, 96, 128, 96, 49152, 2,
                 50257, true);
  finalize(m);
  return m;
}

inline ModelArchitecture palm(std::string name, int layers, int d_model, int heads, int vocab) {
  auto m = dense(std::move(name), "https://arxiv.org/abs/2204.02311", layers, d_model, heads, 256,
                 1, 4 * d_model, 3, vocab, true);
  m.parallel_attention = true;
  finalize(m);
  return m;
}

inline ModelArchitecture palm_8b() { return palm("palm-8b", 32, 4096, 16, 256000); }
inline ModelArchitecture palm_62b() { return palm("palm-62b", 64, 8192, 32, 256000); }
inline ModelArchitecture palm_540b() { return palm("palm-540b", 118, 18432, 48, 256000); }

inline const std::vector<std::string>& accelerator_names() {
  static const std::vector<std::string> names{"h100-sxm", "a100-sxm", "v100-sxm"};
  return names;
}

inline const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names{
      "llama3-8b",  "llama3-70b", "llama3.1-405b", "mixtral-8x22b", "mistral-large-2",
      "deepseek-v3", "gpt3",      "palm-8b",       "palm-62b",      "palm-540b"};
  return names;
}

}  // namespace presets

inline std::optional<AcceleratorSpec> builtin_accelerator(std::string_view name) {
  if (name == "h100-sxm") return presets::h100_sxm();
  if (name == "a100-sxm") return presets::a100_sxm();
  if (name == "v100-sxm") return presets::v100_sxm();
  return std::nullopt;
}

inline std::optional<ModelArchitecture> builtin_model(std::string_view name) {
  if (name == "llama3-8b") return presets::llama3_8b();
  if (name == "llama3-70b") return presets::llama3_70b();
  if (name == "llama3.1-405b") return presets::llama31_405b();
  if (name == "mixtral-8x22b") return presets::mixtral_8x22b();
  if (name == "mistral-large-2") return presets::mistral_large_2();
  if (name == "deepseek-v3") return presets::deepseek_v3();
  if (name == "gpt3") return presets::gpt3();
  if (name == "palm-8b") return presets::palm_8b();
  if (name == "palm-62b") return presets::palm_62b();
  if (name == "palm-540b") return presets::palm_540b();
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

enum class SpecKind { accelerator, model };

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline std::variant<AcceleratorSpec, ModelArchitecture> load_spec(const std::filesystem::path& path,
                                                                  SpecKind kind) {
  const json j = read_json_file(path);
  if (kind == SpecKind::accelerator) return accelerator_from_json(j, path.string());
  return model_from_json(j, path.string());
}

inline AcceleratorSpec load_accelerator(const std::filesystem::path& path) {
  return std::get<AcceleratorSpec>(load_spec(path, SpecKind::accelerator));
}

inline ModelArchitecture load_model(const std::filesystem::path& path) {
  return std::get<ModelArchitecture>(load_spec(path, SpecKind::model));
}

inline constexpr const char* kPresetDirEnv = "INFER_ECON_PRESET_DIR";

/// Returns the built-in preset `name`; a file `<dir>/<kind>s/<name>.json`
/// under $INFER_ECON_PRESET_DIR takes precedence when present.
inline AcceleratorSpec preset_accelerator(const std::string& name) {
  if (const char* dir = std::getenv(kPresetDirEnv)) {
    const auto path = std::filesystem::path(dir) / "accelerators" / (name + ".json");
    if (std::filesystem::exists(path)) return load_accelerator(path);
  }
  if (auto a = builtin_accelerator(name)) return *a;
  throw UnknownPresetError(name);
}

inline ModelArchitecture preset_model(const std::string& name) {
  if (const char* dir = std::getenv(kPresetDirEnv)) {
    const auto path = std::filesystem::path(dir) / "models" / (name + ".json");
    if (std::filesystem::exists(path)) return load_model(path);
  }
  if (auto m = builtin_model(name)) return *m;
  throw UnknownPresetError(name);
}

/// `arg` is either a path to a spec file or a preset name.
inline AcceleratorSpec resolve_accelerator(const std::string& arg) {
  if (std::filesystem::is_regular_file(arg)) return load_accelerator(arg);
  return preset_accelerator(arg);
}

inline ModelArchitecture resolve_model(const std::string& arg) {
  if (std::filesystem::is_regular_file(arg)) return load_model(arg);
  return preset_model(arg);
}

/// Copy of `m` at different precisions (quantization sweeps).
inline ModelArchitecture with_precision(ModelArchitecture m, std::optional<int> weight_bits,
                                        std::optional<int> activation_bits) {
  if (weight_bits) m.weight_bits = *weight_bits;
  if (activation_bits) m.activation_bits = *activation_bits;
  validate(m);
  return m;
}

inline AcceleratorSpec with_price(AcceleratorSpec a, double hourly_price_usd) {
  a.hourly_price_usd = hourly_price_usd;
  validate(a);
  return a;
}

}  // namespace infer_econ
