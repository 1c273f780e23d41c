// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <catch_amalgamated.hpp>

#include "infer_econ/optimizer.hpp"
#include "oracles.hpp"

using namespace infer_econ;
using Catch::Approx;

namespace {

ParetoPoint pt(double speed, double cost, int batch = 1) {
  ParetoPoint p;
  p.tokens_per_second = speed;
  p.cost_per_million_tokens = cost;
  p.batch_size = batch;
  return p;
}

ModelArchitecture single_layer() {
  ModelArchitecture m;
  m.name = "one-layer";
  m.n_layers = 1;
  m.d_model = 256;
  m.n_head = 4;
  m.d_head = 64;
  m.d_ff = 1024;
  m.vocab_size = 1000;
  finalize(m);
  return m;
}

SearchGrid small_grid() { return {{1, 2, 4, 8, 16, 24}, {1, 4, 16, 64, 256}}; }

}  // namespace

TEST_CASE("frontier of a small example") {
  const auto f = pareto_frontier({pt(10, 1), pt(20, 2), pt(15, 3)});
  REQUIRE(f.size() == 2);
  CHECK(f[0].tokens_per_second == 10);
  CHECK(f[1].tokens_per_second == 20);
  const auto one = pareto_frontier({pt(5, 5)});
  REQUIRE(one.size() == 1);
  CHECK(one[0].cost_per_million_tokens == 5);
  CHECK(pareto_frontier({}).empty());

  // Equal speed keeps the cheaper; exact duplicates keep the smaller batch.
  const auto t = pareto_frontier({pt(10, 2, 1), pt(10, 1, 2), pt(10, 1, 1)});
  REQUIRE(t.size() == 1);
  CHECK(t[0].cost_per_million_tokens == 1);
  CHECK(t[0].batch_size == 1);
}

TEST_CASE("frontier equals a brute-force domination filter") {
  std::mt19937_64 rng(42);
  for (int inst = 0; inst < 1000; ++inst) {
    const int n = 1 + static_cast<int>(rng() % 60);
    // Coarse values force ties in both coordinates.
    std::uniform_int_distribution<int> coarse(1, 12);
    std::vector<ParetoPoint> pts;
    std::vector<oracle::Pt> raw;
    for (int i = 0; i < n; ++i) {
      const double s = coarse(rng), c = coarse(rng);
      pts.push_back(pt(s, c, i));
      raw.push_back({s, c});
    }
    const auto f = pareto_frontier(pts);
    const auto expect = oracle::undominated(raw);
    REQUIRE(f.size() == expect.size());
    // Same coordinate set; the oracle keeps the earliest duplicate, which
    // is also the smallest batch tag here.
    std::vector<std::tuple<double, double, int>> got, want;
    for (const auto& p : f) got.emplace_back(p.tokens_per_second, p.cost_per_million_tokens, p.batch_size);
    for (auto i : expect) want.emplace_back(raw[i].speed, raw[i].cost, static_cast<int>(i));
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    CHECK(got == want);
    for (std::size_t i = 1; i < f.size(); ++i) {
      CHECK(f[i].tokens_per_second > f[i - 1].tokens_per_second);
      CHECK(f[i].cost_per_million_tokens > f[i - 1].cost_per_million_tokens);
    }
  }
}

TEST_CASE("utility-optimal choice") {
  const std::vector<ParetoPoint> f{pt(1, 1), pt(2, 2), pt(4, 8), pt(5, 20)};
  CHECK(utility_optimal_point(f, 0).tokens_per_second == 1);
  CHECK(utility_optimal_point(f, std::numeric_limits<double>::infinity()).tokens_per_second == 5);
  CHECK(utility_optimal_point(f, 50).tokens_per_second == 5);
  // alpha 1: ln s - ln c is exactly 0 for the first two; the tie goes to the faster.
  CHECK(utility_optimal_point(f, 1).tokens_per_second == 2);
  CHECK_THROWS(utility_optimal_point({}, 1));
  CHECK_THROWS(utility_optimal_point(f, -1));
}

TEST_CASE("sweep basics") {
  const auto a = preset_accelerator("h100-sxm");
  const auto m = preset_model("llama3-8b");
  const auto one = sweep(m, a, {}, {{1}, {1}});
  REQUIRE(one.size() == 1);
  CHECK(one[0].plan == make_plan(a, 1, 1, 1));

  CHECK_THROWS_AS(sweep(preset_model("llama3.1-405b"), a, {}, {{1}, {1}}), EmptyFeasibleSetError);
  CHECK_THROWS_AS(sweep(m, a, {}, {{}, {1}}), std::invalid_argument);
  CHECK_THROWS_AS(sweep(m, a, {}, {{0}, {1}}), std::invalid_argument);

  Workload capped;
  capped.demand_cap = 1000;
  const auto pts = sweep(m, a, capped, small_grid());
  CHECK(pts.size() < sweep(m, a, {}, small_grid()).size());
  for (const auto& p : pts) CHECK(p.batch_size * p.tokens_per_second <= 1000.0);
  capped.demand_cap = 1e-3;
  CHECK_THROWS_AS(sweep(m, a, capped, small_grid()), EmptyFeasibleSetError);
}

TEST_CASE("sweep is independent of thread count") {
  const auto a = preset_accelerator("h100-sxm");
  const auto m = preset_model("mixtral-8x22b");
  SweepOptions serial, parallel;
  parallel.threads = 7;
  const auto s1 = sweep(m, a, {2048, 1, {}}, default_grid(), serial);
  const auto s2 = sweep(m, a, {2048, 1, {}}, default_grid(), parallel);
  REQUIRE(s1.size() == s2.size());
  for (std::size_t i = 0; i < s1.size(); ++i) {
    CHECK(s1[i].plan == s2[i].plan);
    CHECK(s1[i].batch_size == s2[i].batch_size);
    CHECK(s1[i].tokens_per_second == s2[i].tokens_per_second);
    CHECK(s1[i].cost_per_million_tokens == s2[i].cost_per_million_tokens);
  }
}

TEST_CASE("a larger grid never worsens the frontier") {
  const auto a = preset_accelerator("h100-sxm");
  const auto m = preset_model("llama3-70b");
  const auto small = pareto_frontier(sweep(m, a, {}, {{4, 8}, {1, 16, 256}}));
  const auto big = pareto_frontier(sweep(m, a, {}, {{2, 4, 8, 16, 32}, {1, 2, 16, 64, 256, 1024}}));
  for (const auto& p : small) {
    const auto c = cost_at_speed(big, p.tokens_per_second);
    REQUIRE(c);
    CHECK(*c <= p.cost_per_million_tokens);
  }
}

TEST_CASE("frontier cost rises with speed") {
  const auto a = preset_accelerator("h100-sxm");
  for (const char* name : {"llama3-8b", "llama3-70b", "mixtral-8x22b"}) {
    const auto f = pareto_frontier(sweep(preset_model(name), a, {}, default_grid()));
    for (std::size_t i = 1; i < f.size(); ++i) {
      CHECK(f[i].tokens_per_second > f[i - 1].tokens_per_second);
      CHECK(f[i].cost_per_million_tokens >= f[i - 1].cost_per_million_tokens);
    }
  }
}

TEST_CASE("fastest batch-1 point") {
  const auto a = preset_accelerator("h100-sxm");
  const auto m = single_layer();
  const auto best = max_tokens_per_second(m, a);
  CHECK(best.plan.n_gpu == 1);
  CHECK(best.batch_size == 1);
  CHECK(best.tokens_per_second == Approx(1.0 / token_latency(m, {0, 1, {}}, make_plan(a, 1, 1, 1), a).token_latency));
}

TEST_CASE("accelerator comparison") {
  const auto h = preset_accelerator("h100-sxm");
  const auto v = preset_accelerator("v100-sxm");
  const auto m = with_precision(preset_model("llama3-70b"), 8, std::nullopt);
  const auto grid = small_grid();

  auto twin = h;
  twin.name = "h100-copy";
  const auto same = compare_accelerators(m, {h, twin}, {}, grid);
  REQUIRE(same.size() == 2);
  REQUIRE(same[0].frontier.size() == same[1].frontier.size());
  for (std::size_t i = 0; i < same[0].frontier.size(); ++i) {
    CHECK(same[0].frontier[i].tokens_per_second == same[1].frontier[i].tokens_per_second);
    CHECK(same[0].frontier[i].cost_per_million_tokens == same[1].frontier[i].cost_per_million_tokens);
  }

  // At V100 prices the H100 need not be cheaper, so compare at equal price.
  const auto both = compare_accelerators(m, {h, with_price(v, h.hourly_price_usd)}, {}, default_grid());
  for (const auto& p : both[1].frontier) {
    const auto c = cost_at_speed(both[0].frontier, p.tokens_per_second);
    REQUIRE(c);
    CHECK(*c <= p.cost_per_million_tokens);
  }
  CHECK_THROWS(compare_accelerators(m, {}, {}, grid));
}

TEST_CASE("frontier lookups") {
  const std::vector<ParetoPoint> f{pt(10, 1), pt(20, 2), pt(40, 8)};
  CHECK(*cost_at_speed(f, 15) == 2);
  CHECK_FALSE(cost_at_speed(f, 41));
  CHECK(*speed_at_cost(f, 3) == 20);
  CHECK_FALSE(speed_at_cost(f, 0.5));
}

TEST_CASE("speculative sweep reports accepted-token speed") {
  const auto a = preset_accelerator("h100-sxm");
  SweepOptions opt;
  SpecDecConfig cfg;
  cfg.draft = preset_model("llama3-8b");
  opt.spec = cfg;
  const auto pts = sweep(preset_model("llama3-70b"), a, {}, {{8}, {1, 16}}, opt);
  for (const auto& p : pts) {
    REQUIRE(p.spec);
    CHECK(p.tokens_per_second ==
          Approx(p.spec->expected_tokens /
                 (p.breakdown.token_latency + p.spec->gamma * p.spec->draft_token_latency)));
  }
}
