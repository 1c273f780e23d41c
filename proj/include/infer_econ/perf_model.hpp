// SPDX-License-Identifier: Apache-2.0
//
// Forward-pass cost model for decoding one token per sequence: parameter and
// activation reads, arithmetic, tensor-parallel all-reduces, expert-parallel
// all-to-alls and pipeline boundaries, combined into a per-token latency and
// a cost per token.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

#include "catalog.hpp"
#include "parallelism.hpp"

namespace infer_econ {

struct Workload {
  double context_length = 0;  // tokens already in the KV cache
  int batch_size = 1;
  std::optional<double> demand_cap;  // total tokens/s across all users
};

struct LatencyBreakdown {
  double memory_time = 0;
  double arithmetic_time = 0;
  double collective_latency_time = 0;
  double kernel_launch_time = 0;
  double network_bandwidth_time = 0;
  double pp_boundary_time = 0;
  double token_latency = 0;
  double gpu_seconds_per_token = 0;
  double cost_per_million_tokens = 0;  // USD
  bool feasible = true;
  std::string infeasible_reason;
  double memory_required_bytes = 0;
  double memory_available_bytes = 0;

  double tokens_per_second() const { return feasible ? 1.0 / token_latency : 0.0; }
};

/// GPU-seconds per token to USD per million tokens.
inline double usd_per_million(double gpu_seconds_per_token, double hourly_price_usd) {
  return gpu_seconds_per_token * hourly_price_usd / 3600.0 * 1e6;
}

// ---------------------------------------------------------------------------
// Parameter, FLOP and byte accounting
// ---------------------------------------------------------------------------

/// Parameters touched per token: routed feedforward weights scale with 1/s.
inline double active_params(const ModelArchitecture& m) {
  const auto& p = m.params;
  return p.attention + p.feedforward / m.sparsity() + p.unembedding + p.embedding;
}

/// Expected parameters read for a forward pass over `tokens` independently
/// and uniformly routed tokens.
inline double expected_params_read(const ModelArchitecture& m, double tokens) {
  if (tokens < 1) throw std::invalid_argument("batch size must be >= 1");
  const auto& p = m.params;
  const double untouched = m.is_dense() ? 0.0 : std::pow(1.0 - 1.0 / m.sparsity(), tokens);
  return p.attention + (1.0 - untouched) * p.feedforward + p.unembedding + p.embedding;
}

/// Head width that sets attention arithmetic: MLA attends in latent space.
inline double attention_head_width(const ModelArchitecture& m) {
  return m.attention_variant == AttentionVariant::mla ? m.d_latent : m.d_head;
}

inline double attention_flop(const ModelArchitecture& m, double context_length, double batch) {
  return 4.0 * m.n_layers * m.n_head * attention_head_width(m) * context_length * batch;
}

inline double kv_cache_elements(const ModelArchitecture& m, double context_length, double batch) {
  const double per_position_per_layer =
      m.attention_variant == AttentionVariant::mla
          ? static_cast<double>(m.d_latent)
          : 2.0 * m.n_kv_head() * static_cast<double>(m.d_head);
  return per_position_per_layer * m.n_layers * context_length * batch;
}

inline double kv_cache_bytes(const ModelArchitecture& m, double context_length, double batch) {
  return kv_cache_elements(m, context_length, batch) * m.activation_bytes();
}

/// Activations read and written by the layer matmuls for `tokens` positions.
inline double matmul_io_elements(const ModelArchitecture& m, double tokens) {
  const double q_width = static_cast<double>(m.n_head) * m.d_head;
  const double qkv_width = (1.0 + 2.0 / m.attention_group_size) * q_width;
  return m.n_layers * tokens *
         (2.0 * m.d_model + qkv_width + q_width + 2.0 * m.d_model + 2.0 * m.d_ff);
}

inline double total_flop(const ModelArchitecture& m, const Workload& w) {
  return w.batch_size * (2.0 * active_params(m) + attention_flop(m, w.context_length, 1.0));
}

struct BytesRead {
  double weights = 0;
  double kv_cache = 0;
  double matmul_io = 0;
  double total() const { return weights + kv_cache + matmul_io; }
};

inline BytesRead bytes_read(const ModelArchitecture& m, const Workload& w) {
  BytesRead r;
  r.weights = m.weight_bytes_per_param() * expected_params_read(m, w.batch_size);
  r.kv_cache = kv_cache_bytes(m, w.context_length, w.batch_size);
  r.matmul_io = m.activation_bytes() * matmul_io_elements(m, w.batch_size);
  return r;
}

/// Bytes all-reduced per forward pass by attention blocks (QKV output and
/// the post-attention projection).
inline double attention_bytes_reduced(const ModelArchitecture& m, double tokens) {
  const double qkv_width =
      (1.0 + 2.0 / m.attention_group_size) * static_cast<double>(m.n_head) * m.d_head;
  return (qkv_width + m.d_model) * tokens * m.n_layers * m.activation_bytes();
}

/// Bytes all-reduced per forward pass by feedforward blocks; gated
/// activations add one d_ff-wide output per extra up-projection.
inline double feedforward_bytes_reduced(const ModelArchitecture& m, double tokens) {
  const double width = m.d_model + static_cast<double>(m.ff_matrix_count - 1) * m.d_ff;
  return width * tokens * m.n_layers * m.activation_bytes();
}

inline double bytes_reduced(const ModelArchitecture& m, double tokens) {
  return attention_bytes_reduced(m, tokens) + feedforward_bytes_reduced(m, tokens);
}

// ---------------------------------------------------------------------------
// Collectives
// ---------------------------------------------------------------------------

/// Tree all-reduce latency for `ranks` devices over `nodes` nodes:
/// base + per_rank (ranks/nodes - 1) + per_tree_step log2(nodes).
inline double tree_collective_latency(double ranks, double nodes, const AcceleratorSpec& acc) {
  return acc.collective_base_latency_s + acc.per_rank_latency_s * (ranks / nodes - 1.0) +
         acc.per_tree_step_latency_s * std::log2(nodes);
}

/// Latency of one all-reduce in a 2D tensor-parallel instance of n_gpu devices
/// on n_nodes nodes: each all-reduce spans sqrt(n_gpu) ranks on sqrt(n_nodes)
/// nodes.
inline double collective_latency(double n_gpu, double n_nodes, const AcceleratorSpec& acc) {
  return tree_collective_latency(std::sqrt(n_gpu), std::sqrt(n_nodes), acc);
}

inline double collective_latency(const ParallelismPlan& plan, const AcceleratorSpec& acc) {
  return collective_latency(plan.n_gpu, plan.n_nodes, acc);
}

/// Transfer time of one 1D all-reduce of `bytes` over `ranks` devices at an
/// all-reduce algorithm bandwidth: X (R - 1) / (R bw). The algorithm
/// bandwidth is half the per-device read rate, since 2 X (R - 1) bytes are
/// read in total across R devices.
inline double allreduce_bandwidth_time(double bytes, double ranks, double algorithm_bandwidth) {
  return bytes * (ranks - 1.0) / (ranks * algorithm_bandwidth);
}

struct NetworkReads {
  double inter_node = 0;
  double intra_node = 0;
};

/// Reads implied by all-reducing `bytes` across n_gpu devices on n_nodes
/// nodes under the sqrt-participants approximation.
inline NetworkReads allreduce_reads(double bytes, double n_gpu, double n_nodes) {
  NetworkReads r;
  r.inter_node = 2.0 * (std::sqrt(n_nodes) - 1.0) * bytes;
  r.intra_node = 2.0 * (std::sqrt(n_gpu / n_nodes) - 1.0) * std::sqrt(n_nodes) * bytes;
  return r;
}

inline double allreduce_transfer_time(double bytes, double n_gpu, double n_nodes,
                                      const AcceleratorSpec& acc) {
  const NetworkReads reads = allreduce_reads(bytes, n_gpu, n_nodes);
  return reads.inter_node / (n_gpu * acc.inter_node_bandwidth_bytes_per_s) +
         reads.intra_node / (n_gpu * acc.collective_intra_bandwidth());
}

// ---------------------------------------------------------------------------
// Token latency
// ---------------------------------------------------------------------------

struct ModelOptions {
  // Positions each sequence contributes per forward pass. Values above 1
  // model a speculative verification pass: weights are read once while
  // activations, arithmetic and reductions scale with the position count.
  int tokens_per_sequence = 1;
  std::optional<int> n_reduce;  // defaults to 4, or 2 with parallel attention
};

inline int sequential_reduces(const ModelArchitecture& m, const ModelOptions& opt) {
  return opt.n_reduce.value_or(m.parallel_attention ? 2 : 4);
}

struct NetworkTime {
  double latency = 0;
  double bandwidth = 0;
};

namespace detail {

inline NetworkTime stage_network_time(const ModelArchitecture& m, const ParallelismPlan& plan,
                                      const AcceleratorSpec& acc, double tokens, int n_reduce) {
  NetworkTime t;
  const double stage = plan.stage_size();
  const double stage_nodes = acc.nodes_for(plan.stage_size());
  if (plan.ep == 1) {
    if (stage <= 1) return t;
    t.latency = m.n_layers * n_reduce * collective_latency(stage, stage_nodes, acc);
    t.bandwidth = allreduce_transfer_time(bytes_reduced(m, tokens), stage, stage_nodes, acc);
    return t;
  }
  // Attention stays tensor-parallel over the whole stage; the feedforward
  // all-reduces give way to an all-to-all dispatch and receive.
  const int attention_reduces = std::max(1, n_reduce / 2);
  t.latency = m.n_layers * attention_reduces * collective_latency(stage, stage_nodes, acc);
  t.bandwidth = allreduce_transfer_time(attention_bytes_reduced(m, tokens), stage, stage_nodes, acc);
  const PlanAdjustment ep = ep_adjustment(m, plan, tokens);
  const int a2a_nodes = ep_nodes_spanned(plan, ep.ep_ranks, acc);
  t.latency += m.n_layers * 2.0 * tree_collective_latency(ep.ep_ranks, a2a_nodes, acc);
  const double volume = ep.ep_comm_bytes * m.n_layers;
  const double intra = ep_intra_node_fraction(plan, ep.ep_ranks, acc);
  t.bandwidth += volume * intra / (stage * acc.collective_intra_bandwidth()) +
                 volume * (1.0 - intra) / (stage * acc.inter_node_bandwidth_bytes_per_s);
  return t;
}

}  // namespace detail

/// Collective latency and transfer time per forward pass; zero on one device.
inline NetworkTime network_comm_time(const ModelArchitecture& m, const Workload& w,
                                     const ParallelismPlan& plan, const AcceleratorSpec& acc,
                                     const ModelOptions& opt = {}) {
  const int micro = (w.batch_size + plan.pp - 1) / plan.pp;
  return detail::stage_network_time(m, plan, acc,
                                    static_cast<double>(micro) * opt.tokens_per_sequence,
                                    sequential_reduces(m, opt));
}

/// Bytes that must be resident across the instance: all weights plus the
/// KV cache of every sequence in the batch.
inline double resident_bytes(const ModelArchitecture& m, const Workload& w) {
  return m.weight_bytes_per_param() * m.total_params() +
         kv_cache_bytes(m, w.context_length, w.batch_size);
}

inline LatencyBreakdown token_latency(const ModelArchitecture& m, const Workload& w,
                                      const ParallelismPlan& plan, const AcceleratorSpec& acc,
                                      const ModelOptions& opt = {}) {
  validate(plan, m, acc);
  if (w.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (w.context_length < 0) throw std::invalid_argument("context length must be >= 0");
  if (opt.tokens_per_sequence < 1) throw std::invalid_argument("tokens_per_sequence must be >= 1");

  LatencyBreakdown r;
  r.memory_required_bytes = resident_bytes(m, w);
  r.memory_available_bytes = plan.n_gpu * acc.hbm_capacity_bytes;
  auto infeasible = [&](std::string why) {
    r.feasible = false;
    r.infeasible_reason = std::move(why);
    r.token_latency = std::numeric_limits<double>::infinity();
    r.gpu_seconds_per_token = r.token_latency;
    r.cost_per_million_tokens = r.token_latency;
    return r;
  };
  if (r.memory_required_bytes > r.memory_available_bytes) {
    return infeasible("weights + KV cache need " + std::to_string(r.memory_required_bytes / 1e9) +
                      " GB but the instance has " +
                      std::to_string(r.memory_available_bytes / 1e9) + " GB of HBM");
  }
  if (plan.pp > 1 && w.batch_size < plan.pp) {
    return infeasible("batch smaller than pipeline depth leaves stages idle");
  }

  const PlanAdjustment pp = pp_adjustment(m, plan, acc, w.batch_size, opt.tokens_per_sequence);
  const double sequences = pp.micro_batch;
  const double tokens = sequences * opt.tokens_per_sequence;
  const double stage = plan.stage_size();

  const double bytes = m.weight_bytes_per_param() * expected_params_read(m, tokens) +
                       kv_cache_bytes(m, w.context_length, sequences) +
                       m.activation_bytes() * matmul_io_elements(m, tokens);
  const double flop =
      tokens * (2.0 * active_params(m) + attention_flop(m, w.context_length, 1.0));
  const int compute_bits = acc.compute_precision_for(m.weight_bits);

  // A micro-batch crosses every stage in turn, so per-token time is the
  // whole model's work on one stage's devices.
  r.memory_time = bytes / (stage * acc.hbm_bandwidth(true));
  r.arithmetic_time = flop / (stage * acc.flops(compute_bits, true));
  const int n_reduce = sequential_reduces(m, opt);
  r.kernel_launch_time = m.n_layers * n_reduce * acc.kernel_launch_latency_s;
  const NetworkTime net = detail::stage_network_time(m, plan, acc, tokens, n_reduce);
  r.collective_latency_time = net.latency;
  r.network_bandwidth_time = net.bandwidth;
  r.pp_boundary_time = pp.pp_boundary_time;
  r.token_latency = r.collective_latency_time + r.kernel_launch_time + r.network_bandwidth_time +
                    r.pp_boundary_time + std::max(r.memory_time, r.arithmetic_time);
  r.gpu_seconds_per_token = r.token_latency * plan.n_gpu / w.batch_size;
  r.cost_per_million_tokens = usd_per_million(r.gpu_seconds_per_token, acc.hourly_price_usd);
  return r;
}

// ---------------------------------------------------------------------------
// Long-context bounds
// ---------------------------------------------------------------------------

/// Upper bound on FLOP per byte once KV-cache reads dominate: 2 g / precision.
inline double long_context_arithmetic_intensity_bound(const ModelArchitecture& m) {
  if (m.attention_variant == AttentionVariant::mla) {
    throw std::invalid_argument(m.name +
                                ": the KV-read intensity bound assumes standard attention");
  }
  return 2.0 * m.attention_group_size / m.activation_bytes();
}

/// Cost of the HBM time spent reading one sequence's KV cache per generated
/// token, in USD per million tokens, at raw bandwidth.
inline double kv_read_cost_floor(const ModelArchitecture& m, const AcceleratorSpec& acc,
                                 double context_length) {
  const double seconds = kv_cache_bytes(m, context_length, 1.0) / acc.hbm_bandwidth(false);
  return usd_per_million(seconds, acc.hourly_price_usd);
}

/// Context length at which attention FLOP per token equals pointwise FLOP.
inline double attention_crossover_context(const ModelArchitecture& m) {
  return 2.0 * active_params(m) / attention_flop(m, 1.0, 1.0);
}

}  // namespace infer_econ
