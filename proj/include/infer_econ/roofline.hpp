// SPDX-License-Identifier: Apache-2.0
//
// Toy roofline models for dense decoders: single device, and tensor-parallel
// instances with a per-hop network latency and infinite bandwidth. Closed-form
// optima for these models double as oracles for the full performance model.
//
// Conventions: p is bytes per weight, N the total parameter count, B the HBM
// bandwidth and C the arithmetic rate at the weight precision. Every
// function here uses raw (not derated) accelerator numbers unless asked
// otherwise.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "catalog.hpp"

namespace infer_econ::roofline {

struct ToyResult {
  double token_latency = 0;          // s
  double gpu_seconds_per_token = 0;  // s
  double optimal_instance_size = 1;  // N_GPU*, real-valued
  double critical_batch_size = 0;    // b*
};

namespace detail {

inline void require_dense(const ModelArchitecture& m) {
  if (!m.is_dense()) {
    throw std::invalid_argument(m.name + ": toy models require a dense model");
  }
}

inline double param_read_time(const ModelArchitecture& m, const AcceleratorSpec& acc) {
  return m.weight_bytes_per_param() * m.total_params() / acc.hbm_bandwidth(false);
}

inline double arithmetic_rate(const ModelArchitecture& m, const AcceleratorSpec& acc) {
  return acc.flops(acc.compute_precision_for(m.weight_bits), false);
}

inline double toy_critical_batch(const ModelArchitecture& m, const AcceleratorSpec& acc) {
  return m.weight_bytes_per_param() * arithmetic_rate(m, acc) / (acc.hbm_bandwidth(false) * 2.0);
}

}  // namespace detail

/// Sequential all-reduces per layer: 4, or 2 when attention and feedforward
/// run in parallel.
inline int default_n_reduce(const ModelArchitecture& m) { return m.parallel_attention ? 2 : 4; }

/// b* = p C / (2 B): the batch at which weight reads and arithmetic take
/// equally long on one device.
inline double critical_batch_size(const AcceleratorSpec& acc, int precision_bits,
                                  bool apply_efficiency) {
  const double bytes = precision_bits / 8.0;
  return bytes * acc.flops(precision_bits, apply_efficiency) /
         (acc.hbm_bandwidth(apply_efficiency) * 2.0);
}

inline ToyResult single_device(const ModelArchitecture& m, const AcceleratorSpec& acc,
                               double batch) {
  detail::require_dense(m);
  if (batch < 1) throw std::invalid_argument("batch size must be >= 1");
  const double memory = detail::param_read_time(m, acc);
  const double arithmetic = 2.0 * m.total_params() * batch / detail::arithmetic_rate(m, acc);
  ToyResult r;
  r.token_latency = std::max(memory, arithmetic);
  r.gpu_seconds_per_token = r.token_latency / batch;
  r.optimal_instance_size = 1;
  r.critical_batch_size = detail::toy_critical_batch(m, acc);
  return r;
}

inline double optimal_instance_size(const ModelArchitecture& m, const AcceleratorSpec& acc,
                                    double t_hop, std::optional<int> n_reduce = std::nullopt) {
  detail::require_dense(m);
  const double latency_scale = m.n_layers * n_reduce.value_or(default_n_reduce(m)) * t_hop;
  return std::pow(std::max(detail::param_read_time(m, acc) / latency_scale, 1.0), 2.0 / 3.0);
}

/// Latency of an n_gpu-way tensor-parallel instance whose all-reduces cost
/// 2 (sqrt(n_gpu) - 1) hops each. `batch` may be any positive real; values
/// near zero give the memory-bound limit.
inline ToyResult toy_multi_device(const ModelArchitecture& m, const AcceleratorSpec& acc,
                                  double batch, double n_gpu, double t_hop,
                                  std::optional<int> n_reduce = std::nullopt) {
  detail::require_dense(m);
  if (n_gpu < 1) throw std::invalid_argument("n_gpu must be >= 1");
  if (!(batch > 0)) throw std::invalid_argument("batch size must be positive");
  const int reduces = n_reduce.value_or(default_n_reduce(m));
  const double network = m.n_layers * reduces * t_hop * 2.0 * (std::sqrt(n_gpu) - 1.0);
  const double memory = detail::param_read_time(m, acc) / n_gpu;
  const double arithmetic =
      2.0 * m.total_params() * batch / (n_gpu * detail::arithmetic_rate(m, acc));
  ToyResult r;
  r.token_latency = network + std::max(memory, arithmetic);
  r.gpu_seconds_per_token = r.token_latency * n_gpu / batch;
  r.optimal_instance_size = optimal_instance_size(m, acc, t_hop, reduces);
  r.critical_batch_size = detail::toy_critical_batch(m, acc);
  return r;
}

/// Latency at N_GPU* with b <= b*. With `approximate`, drops the
/// -2 n_layers n_reduce t_hop correction (valid when N_GPU* >> 1).
inline double minimum_token_latency(const ModelArchitecture& m, const AcceleratorSpec& acc,
                                    double t_hop, std::optional<int> n_reduce = std::nullopt,
                                    bool approximate = false) {
  detail::require_dense(m);
  const double latency_scale = m.n_layers * n_reduce.value_or(default_n_reduce(m)) * t_hop;
  const double read_time = detail::param_read_time(m, acc);
  if (optimal_instance_size(m, acc, t_hop, n_reduce) <= 1.0) return read_time;
  const double leading =
      3.0 * std::pow(latency_scale, 2.0 / 3.0) * std::cbrt(read_time);
  return approximate ? leading : leading - 2.0 * latency_scale;
}

struct MinimumLatencyCost {
  double exact = 0;              // GPU-seconds per token: N*/b* x min latency
  double asymptotic = 0;         // 3 x 2N/C
  double arithmetic_floor = 0;   // 2N/C
  double ratio_to_floor = 0;     // exact / arithmetic_floor
};

inline MinimumLatencyCost cost_at_minimum_latency(const ModelArchitecture& m,
                                                  const AcceleratorSpec& acc, double t_hop,
                                                  std::optional<int> n_reduce = std::nullopt) {
  detail::require_dense(m);
  const double n_star = optimal_instance_size(m, acc, t_hop, n_reduce);
  if (n_star <= 1.0) {
    throw std::domain_error(m.name + ": optimal instance size is 1; no multi-device optimum");
  }
  const double c = detail::arithmetic_rate(m, acc);
  const double b_star = detail::toy_critical_batch(m, acc);
  MinimumLatencyCost r;
  r.exact = n_star / b_star * minimum_token_latency(m, acc, t_hop, n_reduce);
  r.arithmetic_floor = 2.0 * m.total_params() / c;
  r.asymptotic = 3.0 * r.arithmetic_floor;
  r.ratio_to_floor = r.exact / r.arithmetic_floor;
  return r;
}

/// Serial speed projected under token latency proportional to sqrt(N).
inline double sqrt_scaling_projection(double ref_params, double ref_tokens_per_s,
                                      double target_params) {
  if (!(ref_params > 0) || !(target_params > 0)) {
    throw std::invalid_argument("parameter counts must be positive");
  }
  return ref_tokens_per_s * std::sqrt(ref_params / target_params);
}

}  // namespace infer_econ::roofline
