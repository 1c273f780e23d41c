// SPDX-License-Identifier: Apache-2.0
//
// Grid search over instance size, batch size and parallelism plan, Pareto
// frontiers of per-request speed against cost, and utility-optimal choice.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "catalog.hpp"
#include "parallelism.hpp"
#include "perf_model.hpp"
#include "specdec.hpp"

namespace infer_econ {

class EmptyFeasibleSetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SpecDetail {
  int gamma = 1;
  double alpha = 0;
  double expected_tokens = 1;
  double draft_token_latency = 0;
  ParallelismPlan draft_plan;
};

struct ParetoPoint {
  double tokens_per_second = 0;        // per request; accepted tokens under speculation
  double cost_per_million_tokens = 0;  // USD
  ParallelismPlan plan;
  int batch_size = 1;
  LatencyBreakdown breakdown;  // target forward pass (verification pass under speculation)
  std::optional<SpecDetail> spec;

  double token_latency() const { return 1.0 / tokens_per_second; }
};

inline bool same_coordinates(const ParetoPoint& a, const ParetoPoint& b) {
  return a.tokens_per_second == b.tokens_per_second &&
         a.cost_per_million_tokens == b.cost_per_million_tokens;
}

struct SearchGrid {
  std::vector<int> n_gpu_values;
  std::vector<int> batch_values;
};

/// n_gpu in {1..8} and multiples of 8 up to 512; batch in powers of two up to 4096.
inline SearchGrid default_grid() {
  SearchGrid g;
  for (int n = 1; n <= 8; ++n) g.n_gpu_values.push_back(n);
  for (int k = 2; k <= 64; ++k) g.n_gpu_values.push_back(8 * k);
  for (int b = 1; b <= 4096; b *= 2) g.batch_values.push_back(b);
  return g;
}

/// Sorts and deduplicates both axes; throws on empty or non-positive values.
inline SearchGrid normalized(SearchGrid g) {
  for (auto* axis : {&g.n_gpu_values, &g.batch_values}) {
    if (axis->empty()) throw std::invalid_argument("search grid axis is empty");
    std::sort(axis->begin(), axis->end());
    axis->erase(std::unique(axis->begin(), axis->end()), axis->end());
    if (axis->front() < 1) throw std::invalid_argument("search grid values must be positive");
  }
  return g;
}

struct SweepOptions {
  std::optional<SpecDecConfig> spec;
  ModelOptions model;
  unsigned threads = 1;  // 0 picks the hardware concurrency
};

/// Evaluates one configuration. Infeasible configurations come back with
/// zero speed and infinite cost.
inline ParetoPoint evaluate(const ModelArchitecture& m, const Workload& w,
                            const ParallelismPlan& plan, const AcceleratorSpec& acc,
                            const SweepOptions& opt = {}) {
  ParetoPoint p;
  p.plan = plan;
  p.batch_size = w.batch_size;
  if (!opt.spec) {
    p.breakdown = token_latency(m, w, plan, acc, opt.model);
    p.tokens_per_second = p.breakdown.tokens_per_second();
    p.cost_per_million_tokens = p.breakdown.cost_per_million_tokens;
    return p;
  }
  const SpecDecResult s = speculative_token_latency(m, w, plan, acc, *opt.spec);
  p.breakdown = s.target;
  if (!s.feasible) {
    p.breakdown.feasible = false;
    p.breakdown.infeasible_reason = s.infeasible_reason;
    p.cost_per_million_tokens = std::numeric_limits<double>::infinity();
    return p;
  }
  p.tokens_per_second = s.tokens_per_second();
  p.cost_per_million_tokens = s.cost_per_million_tokens;
  p.spec = SpecDetail{s.gamma, s.alpha, s.expected_tokens, s.draft.token_latency, s.draft_plan};
  return p;
}

inline bool is_feasible(const ParetoPoint& p) {
  return p.breakdown.feasible && std::isfinite(p.cost_per_million_tokens) &&
         p.tokens_per_second > 0;
}

/// Total throughput of the instance: batch x per-request speed.
inline double instance_throughput(const ParetoPoint& p) {
  return p.batch_size * p.tokens_per_second;
}

/// Evaluates every (n_gpu, batch, plan) combination of the grid, drops
/// infeasible points and points whose total throughput exceeds the demand
/// cap. The result is ordered by (n_gpu, batch, plan enumeration order)
/// whatever the thread count.
inline std::vector<ParetoPoint> sweep(const ModelArchitecture& m, const AcceleratorSpec& acc,
                                      const Workload& tmpl, const SearchGrid& grid_in,
                                      const SweepOptions& opt = {}) {
  const SearchGrid grid = normalized(grid_in);
  if (opt.spec) validate(*opt.spec);
  struct Task {
    ParallelismPlan plan;
    int batch;
  };
  std::vector<Task> tasks;
  for (int n : grid.n_gpu_values) {
    const auto plans = enumerate_plans(m, acc, n);
    for (int b : grid.batch_values)
      for (const auto& plan : plans) tasks.push_back({plan, b});
  }

  std::vector<ParetoPoint> slots(tasks.size());
  auto run = [&](std::size_t i) {
    Workload w = tmpl;
    w.batch_size = tasks[i].batch;
    slots[i] = evaluate(m, w, tasks[i].plan, acc, opt);
  };
  unsigned threads = opt.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                      : opt.threads;
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, tasks.size()));
  if (threads <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i; (i = next.fetch_add(1)) < tasks.size() && !failed;) run(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  std::vector<ParetoPoint> out;
  for (auto& p : slots) {
    if (!is_feasible(p)) continue;
    if (tmpl.demand_cap && instance_throughput(p) > *tmpl.demand_cap) continue;
    out.push_back(std::move(p));
  }
  if (out.empty()) {
    throw EmptyFeasibleSetError("no feasible configuration for " + m.name + " on " + acc.name +
                                (tmpl.demand_cap ? " under the demand cap" : ""));
  }
  return out;
}

/// Points not dominated in (higher speed, lower cost), ordered by speed
/// ascending. Equal-speed points keep the cheaper one; exact duplicates keep
/// the lexicographically smallest (plan, batch).
inline std::vector<ParetoPoint> pareto_frontier(std::vector<ParetoPoint> points) {
  std::sort(points.begin(), points.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    if (a.tokens_per_second != b.tokens_per_second) return a.tokens_per_second > b.tokens_per_second;
    if (a.cost_per_million_tokens != b.cost_per_million_tokens)
      return a.cost_per_million_tokens < b.cost_per_million_tokens;
    return std::tie(a.plan, a.batch_size) < std::tie(b.plan, b.batch_size);
  });
  std::vector<ParetoPoint> frontier;
  double cheapest = std::numeric_limits<double>::infinity();
  for (auto& p : points) {
    if (p.cost_per_million_tokens < cheapest) {
      cheapest = p.cost_per_million_tokens;
      frontier.push_back(std::move(p));
    }
  }
  std::reverse(frontier.begin(), frontier.end());
  return frontier;
}

/// Maximizes speed^alpha_pref / cost, compared in log space; ties go to the
/// faster point. An infinite preference picks the fastest point.
inline ParetoPoint utility_optimal_point(const std::vector<ParetoPoint>& frontier,
                                         double alpha_pref) {
  if (frontier.empty()) throw std::invalid_argument("empty frontier");
  if (!(alpha_pref >= 0)) throw std::invalid_argument("preference exponent must be >= 0");
  auto better = [&](const ParetoPoint& a, const ParetoPoint& b) {
    if (std::isinf(alpha_pref)) {
      if (a.tokens_per_second != b.tokens_per_second) return a.tokens_per_second > b.tokens_per_second;
      return a.cost_per_million_tokens < b.cost_per_million_tokens;
    }
    const double ua = alpha_pref * std::log(a.tokens_per_second) - std::log(a.cost_per_million_tokens);
    const double ub = alpha_pref * std::log(b.tokens_per_second) - std::log(b.cost_per_million_tokens);
    if (ua != ub) return ua > ub;
    return a.tokens_per_second > b.tokens_per_second;
  };
  const ParetoPoint* best = &frontier.front();
  for (const auto& p : frontier)
    if (better(p, *best)) best = &p;
  return *best;
}

/// Fastest batch-1 configuration over the instance sizes of `n_gpu_values`
/// (the default grid's when empty). Ties go to the cheaper point.
inline ParetoPoint max_tokens_per_second(const ModelArchitecture& m, const AcceleratorSpec& acc,
                                         const Workload& tmpl = {},
                                         const SweepOptions& opt = {},
                                         std::vector<int> n_gpu_values = {}) {
  SearchGrid grid;
  grid.n_gpu_values = n_gpu_values.empty() ? default_grid().n_gpu_values : std::move(n_gpu_values);
  grid.batch_values = {1};
  Workload w = tmpl;
  w.demand_cap.reset();
  const auto points = sweep(m, acc, w, grid, opt);
  return utility_optimal_point(pareto_frontier(points), std::numeric_limits<double>::infinity());
}

struct AcceleratorFrontier {
  std::string accelerator;
  std::vector<ParetoPoint> frontier;
};

inline std::vector<AcceleratorFrontier> compare_accelerators(
    const ModelArchitecture& m, const std::vector<AcceleratorSpec>& accs, const Workload& tmpl,
    const SearchGrid& grid, const SweepOptions& opt = {}) {
  if (accs.empty()) throw std::invalid_argument("no accelerators to compare");
  std::vector<AcceleratorFrontier> out;
  for (const auto& acc : accs) out.push_back({acc.name, pareto_frontier(sweep(m, acc, tmpl, grid, opt))});
  return out;
}

/// Cheapest frontier cost at or above `speed`, or nullopt when unreachable.
inline std::optional<double> cost_at_speed(const std::vector<ParetoPoint>& frontier, double speed) {
  for (const auto& p : frontier)
    if (p.tokens_per_second >= speed) return p.cost_per_million_tokens;
  return std::nullopt;
}

/// Fastest frontier speed whose cost does not exceed `cost`, or nullopt.
inline std::optional<double> speed_at_cost(const std::vector<ParetoPoint>& frontier, double cost) {
  std::optional<double> best;
  for (const auto& p : frontier)
    if (p.cost_per_million_tokens <= cost) best = p.tokens_per_second;
  return best;
}

}  // namespace infer_econ
