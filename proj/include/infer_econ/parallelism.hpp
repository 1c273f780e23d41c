// SPDX-License-Identifier: Apache-2.0
//
// Parallelism plans for one model instance and the pipeline/expert parallel
// adjustments the performance model applies on top of tensor parallelism.

#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "catalog.hpp"

namespace infer_econ {

/// Decomposition of an instance of `n_gpu` devices. Each pipeline stage holds
/// tp * ep devices: attention is tensor-parallel over the whole stage, and
/// the feedforward experts are spread over `ep` groups of `tp` devices.
struct ParallelismPlan {
  int n_gpu = 1;
  int n_nodes = 1;
  int tp = 1;
  int pp = 1;
  int ep = 1;

  int stage_size() const { return tp * ep; }

  auto key() const { return std::tie(n_gpu, n_nodes, tp, pp, ep); }
  bool operator==(const ParallelismPlan& o) const { return key() == o.key(); }
  bool operator<(const ParallelismPlan& o) const { return key() < o.key(); }
};

inline ParallelismPlan make_plan(const AcceleratorSpec& acc, int tp, int pp, int ep) {
  ParallelismPlan p;
  p.tp = tp;
  p.pp = pp;
  p.ep = ep;
  p.n_gpu = tp * pp * ep;
  p.n_nodes = acc.nodes_for(p.n_gpu);
  return p;
}

inline void validate(const ParallelismPlan& p, const ModelArchitecture& m,
                     const AcceleratorSpec& acc) {
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("invalid plan (tp=" + std::to_string(p.tp) +
                                ", pp=" + std::to_string(p.pp) + ", ep=" + std::to_string(p.ep) +
                                "): " + what);
  };
  if (p.tp < 1 || p.pp < 1 || p.ep < 1) fail("degrees must be >= 1");
  if (static_cast<std::int64_t>(p.tp) * p.pp * p.ep != p.n_gpu) fail("tp * pp * ep != n_gpu");
  if (p.n_nodes != acc.nodes_for(p.n_gpu)) fail("n_nodes != ceil(n_gpu / node_size)");
  if (p.ep > m.n_expert) fail("ep exceeds n_expert");
  if (p.pp > m.n_layers) fail("pp exceeds n_layers");
}

namespace detail {

inline std::vector<int> divisors(int n) {
  std::vector<int> out;
  for (int d = 1; static_cast<std::int64_t>(d) * d <= n; ++d) {
    if (n % d != 0) continue;
    out.push_back(d);
    if (d != n / d) out.push_back(n / d);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Expert parallelism takes as many devices as it can (the largest divisor
/// of n_gpu not exceeding n_expert); the rest is split over every (tp, pp)
/// factorization with pp <= n_layers. Dense models always get ep = 1.
inline std::vector<ParallelismPlan> enumerate_plans(const ModelArchitecture& m,
                                                    const AcceleratorSpec& acc, int n_gpu) {
  if (n_gpu < 1) throw std::invalid_argument("n_gpu must be >= 1");
  int ep = 1;
  if (!m.is_dense()) {
    for (int d : detail::divisors(n_gpu))
      if (d <= m.n_expert) ep = d;
  }
  const int residual = n_gpu / ep;
  std::vector<ParallelismPlan> plans;
  for (int pp : detail::divisors(residual)) {
    if (pp > m.n_layers) continue;
    plans.push_back(make_plan(acc, residual / pp, pp, ep));
  }
  std::sort(plans.begin(), plans.end(), [](const auto& a, const auto& b) {
    return std::tie(a.pp, a.tp) < std::tie(b.pp, b.tp);
  });
  plans.erase(std::unique(plans.begin(), plans.end()), plans.end());
  return plans;
}

struct PlanAdjustment {
  int micro_batch = 1;
  double pp_boundary_time = 0;  // s
  double ep_comm_bytes = 0;     // bytes per layer (dispatch + receive)
  int ep_ranks = 1;             // r = min(ep, n_active_expert)
  int effective_tp_degree = 1;  // devices sharing each attention all-reduce
};

/// (n_pp - 1) sequential point-to-point sends of d_model x micro_batch
/// activations, each split over `lanes` parallel links.
inline double pp_boundary_time(int n_pp, double d_model, double micro_batch_tokens,
                               double activation_bytes, double lanes, double link_bandwidth,
                               double p2p_latency) {
  if (n_pp <= 1) return 0.0;
  const double transfer = d_model * micro_batch_tokens * activation_bytes / (lanes * link_bandwidth);
  return (n_pp - 1) * (p2p_latency + transfer);
}

/// Pipeline adjustment for a batch of `batch` sequences, each contributing
/// `tokens_per_sequence` positions per forward pass. Stages are packed
/// contiguously, so at most n_nodes - 1 boundaries cross a node.
inline PlanAdjustment pp_adjustment(const ModelArchitecture& m, const ParallelismPlan& plan,
                                    const AcceleratorSpec& acc, int batch,
                                    int tokens_per_sequence = 1) {
  if (plan.pp < 1) throw std::invalid_argument("pp must be >= 1");
  if (plan.pp > m.n_layers) {
    throw std::invalid_argument("pp (" + std::to_string(plan.pp) + ") exceeds n_layers (" +
                                std::to_string(m.n_layers) + ")");
  }
  PlanAdjustment adj;
  adj.micro_batch = (batch + plan.pp - 1) / plan.pp;
  adj.effective_tp_degree = plan.stage_size();
  if (plan.pp == 1) return adj;
  const double tokens = static_cast<double>(adj.micro_batch) * tokens_per_sequence;
  const double lanes = plan.stage_size();
  const int boundaries = plan.pp - 1;
  const int crossing = std::min(boundaries, plan.n_nodes - 1);
  const double t_p2p = acc.collective_base_latency_s;
  adj.pp_boundary_time =
      pp_boundary_time(crossing + 1, m.d_model, tokens, m.activation_bytes(), lanes,
                       acc.inter_node_bandwidth_bytes_per_s, t_p2p) +
      pp_boundary_time(boundaries - crossing + 1, m.d_model, tokens, m.activation_bytes(), lanes,
                       acc.collective_intra_bandwidth(), t_p2p);
  return adj;
}

/// Expert-parallel dispatch and receive volume: every token's d_model vector
/// goes to at most r = min(ep, n_active_expert) ranks and comes back.
inline PlanAdjustment ep_adjustment(const ModelArchitecture& m, const ParallelismPlan& plan,
                                    double micro_batch_tokens) {
  if (plan.ep < 1) throw std::invalid_argument("ep must be >= 1");
  if (plan.ep > m.n_expert) {
    throw std::invalid_argument("ep (" + std::to_string(plan.ep) + ") exceeds n_expert (" +
                                std::to_string(m.n_expert) + ")");
  }
  PlanAdjustment adj;
  adj.micro_batch = static_cast<int>(micro_batch_tokens);
  adj.effective_tp_degree = plan.stage_size();
  if (plan.ep == 1) return adj;
  adj.ep_ranks = std::min(plan.ep, m.n_active_expert);
  adj.ep_comm_bytes =
      2.0 * adj.ep_ranks * m.d_model * micro_batch_tokens * m.activation_bytes();
  return adj;
}

/// Fraction of expert-parallel traffic that stays inside a node when EP ranks
/// (tp devices each) are packed densely into nodes.
inline double ep_intra_node_fraction(const ParallelismPlan& plan, int ep_ranks,
                                     const AcceleratorSpec& acc) {
  if (acc.nodes_for(plan.stage_size()) <= 1) return 1.0;
  const double ranks_per_node = std::max(1, acc.node_size / plan.tp);
  return std::min(1.0, ranks_per_node / ep_ranks);
}

/// Nodes touched by an all-to-all over `ep_ranks` densely packed EP ranks.
inline int ep_nodes_spanned(const ParallelismPlan& plan, int ep_ranks, const AcceleratorSpec& acc) {
  return std::min(acc.nodes_for(ep_ranks * plan.tp), acc.nodes_for(plan.stage_size()));
}

}  // namespace infer_econ
