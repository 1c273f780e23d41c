// SPDX-License-Identifier: Apache-2.0
//
// Speculative decoding: a draft model proposes gamma tokens, the target
// verifies them in one forward pass and each is accepted independently with
// probability alpha.

#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "catalog.hpp"
#include "parallelism.hpp"
#include "perf_model.hpp"

namespace infer_econ {

inline constexpr int kDefaultGammaMax = 64;
inline constexpr double kDefaultAcceptance = 0.8;

struct SpecDecConfig {
  ModelArchitecture draft;
  double alpha = kDefaultAcceptance;
  std::optional<int> gamma;  // fixed draft length; otherwise swept
  int gamma_max = kDefaultGammaMax;
};

inline void validate_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("acceptance probability must be in (0, 1), got " +
                                std::to_string(alpha));
  }
}

inline void validate(const SpecDecConfig& c) {
  validate_alpha(c.alpha);
  if (c.gamma && *c.gamma < 1) throw std::invalid_argument("gamma must be >= 1");
  if (c.gamma_max < 1) throw std::invalid_argument("gamma_max must be >= 1");
}

/// V = (1 - alpha^gamma) / (1 - alpha).
inline double expected_tokens_per_iteration(double alpha, int gamma) {
  validate_alpha(alpha);
  if (gamma < 1) throw std::invalid_argument("gamma must be >= 1");
  return -std::expm1(gamma * std::log(alpha)) / (1.0 - alpha);
}

/// Mean latency per accepted token: (t_P + gamma t_Q) / V.
inline double spec_latency(double t_target, double t_draft, double alpha, int gamma) {
  if (!(t_target > 0) || !(t_draft > 0)) throw std::invalid_argument("latencies must be positive");
  return (t_target + gamma * t_draft) / expected_tokens_per_iteration(alpha, gamma);
}

struct GammaChoice {
  int gamma = 1;
  double latency = 0;          // s per accepted token
  double expected_tokens = 1;  // V at gamma
  double target_latency = 0;   // t_P used at gamma
};

/// Exhaustive sweep over gamma in [1, gamma_max] of a target latency that may
/// depend on gamma; ties go to the smaller gamma.
inline GammaChoice optimal_gamma(const std::function<double(int)>& t_target, double t_draft,
                                 double alpha, int gamma_max = kDefaultGammaMax) {
  if (gamma_max < 1) throw std::invalid_argument("gamma_max must be >= 1");
  GammaChoice best;
  best.latency = std::numeric_limits<double>::infinity();
  for (int g = 1; g <= gamma_max; ++g) {
    const double tp = t_target(g);
    const double lat = spec_latency(tp, t_draft, alpha, g);
    if (lat < best.latency) {
      best = {g, lat, expected_tokens_per_iteration(alpha, g), tp};
    }
  }
  return best;
}

inline GammaChoice optimal_gamma(double t_target, double t_draft, double alpha,
                                 int gamma_max = kDefaultGammaMax) {
  return optimal_gamma([t_target](int) { return t_target; }, t_draft, alpha, gamma_max);
}

// ---------------------------------------------------------------------------
// Acceptance-rate estimation
// ---------------------------------------------------------------------------

struct LogprobPair {
  double p = 0;  // target probability of the sampled token
  double q = 1;  // draft probability of the same token
};

inline void validate(const LogprobPair& r) {
  if (!(r.q > 0.0 && r.q <= 1.0)) throw std::invalid_argument("record q must be in (0, 1]");
  if (!(r.p >= 0.0 && r.p <= 1.0)) throw std::invalid_argument("record p must be in [0, 1]");
}

struct AlphaEstimate {
  double alpha = 0;
  double standard_error = 0;
  std::size_t count = 0;
};

namespace detail {

inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 16) {
    double s = 0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

}  // namespace detail

/// Mean of min(1, p/q) over the records, with its standard error.
inline AlphaEstimate estimate_alpha(const std::vector<LogprobPair>& records) {
  if (records.empty()) throw std::invalid_argument("no log-probability records");
  std::vector<double> ratios;
  ratios.reserve(records.size());
  for (const auto& r : records) {
    validate(r);
    ratios.push_back(std::min(1.0, r.p / r.q));
  }
  // Sorting makes the floating-point result independent of record order.
  std::sort(ratios.begin(), ratios.end());
  const double n = static_cast<double>(ratios.size());
  const double mean = detail::pairwise_sum(ratios) / n;
  std::vector<double> sq(ratios.size());
  for (std::size_t i = 0; i < ratios.size(); ++i) sq[i] = (ratios[i] - mean) * (ratios[i] - mean);
  AlphaEstimate e;
  e.alpha = mean;
  e.count = ratios.size();
  e.standard_error = ratios.size() > 1 ? std::sqrt(detail::pairwise_sum(sq) / (n - 1.0) / n) : 0.0;
  return e;
}

/// One JSON object {"p": ..., "q": ...} per line; blank lines and lines
/// starting with '#' are skipped.
inline std::vector<LogprobPair> read_logprob_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read records file: " + path);
  std::vector<LogprobPair> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LogprobPair r{j.at("p").get<double>(), j.at("q").get<double>()};
      validate(r);
      out.push_back(r);
    } catch (const std::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (out.empty()) throw std::runtime_error("records file has no records: " + path);
  return out;
}

// ---------------------------------------------------------------------------
// Combining target and draft cost models
// ---------------------------------------------------------------------------

struct SpecDecResult {
  bool feasible = false;
  std::string infeasible_reason;
  int gamma = 1;
  double alpha = 0;
  double expected_tokens = 1;
  double token_latency = std::numeric_limits<double>::infinity();  // s per accepted token
  double gpu_seconds_per_token = std::numeric_limits<double>::infinity();
  double cost_per_million_tokens = std::numeric_limits<double>::infinity();
  LatencyBreakdown target;  // verification pass at gamma
  LatencyBreakdown draft;   // one draft step
  ParallelismPlan draft_plan;

  double tokens_per_second() const { return feasible ? 1.0 / token_latency : 0.0; }
};

/// Combines a fixed target and draft breakdown: gamma from the sweep and GPU
/// time per accepted token (cost_P + gamma cost_Q) / V.
inline SpecDecResult spec_frontier_point(const LatencyBreakdown& target,
                                         const LatencyBreakdown& draft, double alpha,
                                         int gamma_max = kDefaultGammaMax) {
  validate_alpha(alpha);
  if (!target.feasible) throw std::invalid_argument("target infeasible: " + target.infeasible_reason);
  if (!draft.feasible) throw std::invalid_argument("draft infeasible: " + draft.infeasible_reason);
  const GammaChoice g = optimal_gamma(target.token_latency, draft.token_latency, alpha, gamma_max);
  SpecDecResult r;
  r.feasible = true;
  r.gamma = g.gamma;
  r.alpha = alpha;
  r.expected_tokens = g.expected_tokens;
  r.token_latency = g.latency;
  r.gpu_seconds_per_token =
      (target.gpu_seconds_per_token + g.gamma * draft.gpu_seconds_per_token) / g.expected_tokens;
  r.cost_per_million_tokens =
      (target.cost_per_million_tokens + g.gamma * draft.cost_per_million_tokens) /
      g.expected_tokens;
  r.target = target;
  r.draft = draft;
  return r;
}

/// Fastest way to run one draft step for the batch on `n_gpu` devices: the
/// devices may be split into data-parallel draft replicas, each running its
/// best plan on its share of the sequences.
inline std::pair<ParallelismPlan, LatencyBreakdown> best_draft_plan(
    const ModelArchitecture& draft, const Workload& w, const AcceleratorSpec& acc, int n_gpu) {
  std::pair<ParallelismPlan, LatencyBreakdown> best;
  best.second.feasible = false;
  best.second.token_latency = std::numeric_limits<double>::infinity();
  best.second.infeasible_reason = "no feasible draft plan";
  for (int k : detail::divisors(n_gpu)) {
    const int replicas = n_gpu / k;
    Workload share = w;
    share.batch_size = (w.batch_size + replicas - 1) / replicas;
    for (const auto& plan : enumerate_plans(draft, acc, k)) {
      const LatencyBreakdown b = token_latency(draft, share, plan, acc);
      if (b.feasible && b.token_latency < best.second.token_latency) best = {plan, b};
    }
  }
  return best;
}

/// Speculative decoding with the draft sharing the target's devices and
/// batch. The target's verify pass sees gamma positions per sequence, so its
/// latency is recomputed for every gamma in the sweep.
inline SpecDecResult speculative_token_latency(const ModelArchitecture& target,
                                               const Workload& w, const ParallelismPlan& plan,
                                               const AcceleratorSpec& acc,
                                               const SpecDecConfig& cfg) {
  validate(cfg);
  SpecDecResult r;
  r.alpha = cfg.alpha;
  const double resident = resident_bytes(target, w) + resident_bytes(cfg.draft, w);
  if (resident > plan.n_gpu * acc.hbm_capacity_bytes) {
    r.infeasible_reason = "target + draft weights and KV caches exceed instance HBM";
    return r;
  }
  auto [draft_plan, draft] = best_draft_plan(cfg.draft, w, acc, plan.n_gpu);
  if (!draft.feasible) {
    r.infeasible_reason = draft.infeasible_reason;
    return r;
  }
  std::vector<LatencyBreakdown> verify(static_cast<std::size_t>(cfg.gamma_max) + 1);
  auto verify_at = [&](int gamma) {
    auto& slot = verify[static_cast<std::size_t>(gamma)];
    if (slot.token_latency == 0) {
      ModelOptions opt;
      opt.tokens_per_sequence = gamma;
      slot = token_latency(target, w, plan, acc, opt);
    }
    return slot;
  };
  if (!verify_at(1).feasible) {
    r.infeasible_reason = verify_at(1).infeasible_reason;
    return r;
  }
  GammaChoice g;
  if (cfg.gamma) {
    if (*cfg.gamma > cfg.gamma_max) verify.resize(static_cast<std::size_t>(*cfg.gamma) + 1);
    const double tp = verify_at(*cfg.gamma).token_latency;
    g = {*cfg.gamma, spec_latency(tp, draft.token_latency, cfg.alpha, *cfg.gamma),
         expected_tokens_per_iteration(cfg.alpha, *cfg.gamma), tp};
  } else {
    g = optimal_gamma([&](int gamma) { return verify_at(gamma).token_latency; },
                      draft.token_latency, cfg.alpha, cfg.gamma_max);
  }
  r.feasible = true;
  r.gamma = g.gamma;
  r.expected_tokens = g.expected_tokens;
  r.token_latency = g.latency;
  r.target = verify_at(g.gamma);
  r.draft = draft;
  r.draft_plan = draft_plan;
  r.gpu_seconds_per_token = r.token_latency * plan.n_gpu / w.batch_size;
  r.cost_per_million_tokens = usd_per_million(r.gpu_seconds_per_token, acc.hourly_price_usd);
  return r;
}

}  // namespace infer_econ
