// SPDX-License-Identifier: Apache-2.0
#include <set>
#include <tuple>

#include <catch_amalgamated.hpp>

#include "infer_econ/parallelism.hpp"

using namespace infer_econ;
using Catch::Approx;

namespace {

std::set<std::pair<int, int>> tp_pp(const std::vector<ParallelismPlan>& plans) {
  std::set<std::pair<int, int>> out;
  for (const auto& p : plans) out.insert({p.tp, p.pp});
  return out;
}

}  // namespace

TEST_CASE("plan enumeration") {
  const auto a = preset_accelerator("h100-sxm");
  const auto dense = preset_model("llama3-70b");

  const auto one = enumerate_plans(dense, a, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == make_plan(a, 1, 1, 1));

  CHECK(tp_pp(enumerate_plans(dense, a, 6)) ==
        std::set<std::pair<int, int>>{{6, 1}, {3, 2}, {2, 3}, {1, 6}});

  const auto mix = enumerate_plans(preset_model("mixtral-8x22b"), a, 16);
  for (const auto& p : mix) CHECK(p.ep == 8);
  CHECK(tp_pp(mix) == std::set<std::pair<int, int>>{{2, 1}, {1, 2}});

  // 12 GPUs, 8 experts: the largest divisor of 12 not above 8 is 6.
  for (const auto& p : enumerate_plans(preset_model("mixtral-8x22b"), a, 12)) CHECK(p.ep == 6);

  CHECK_THROWS(enumerate_plans(dense, a, 0));
}

TEST_CASE("every enumerated plan is valid") {
  const auto a = preset_accelerator("h100-sxm");
  for (const auto& name : presets::model_names()) {
    const auto m = preset_model(name);
    for (int n = 1; n <= 512; n += (n < 16 ? 1 : 8)) {
      const auto plans = enumerate_plans(m, a, n);
      CHECK_FALSE(plans.empty());
      std::set<std::tuple<int, int, int>> seen;
      for (const auto& p : plans) {
        INFO(name << " n=" << n);
        CHECK(p.tp * p.pp * p.ep == n);
        CHECK(p.n_gpu == n);
        CHECK(p.n_nodes == (n + 7) / 8);
        CHECK(p.pp <= m.n_layers);
        CHECK(p.ep <= m.n_expert);
        if (m.is_dense()) CHECK(p.ep == 1);
        CHECK_NOTHROW(validate(p, m, a));
        CHECK(seen.insert({p.tp, p.pp, p.ep}).second);
      }
    }
  }
}

TEST_CASE("pipeline adjustment") {
  const auto a = preset_accelerator("h100-sxm");
  const auto m = preset_model("llama3-70b");
  const auto none = pp_adjustment(m, make_plan(a, 8, 1, 1), a, 37);
  CHECK(none.pp_boundary_time == 0);
  CHECK(none.micro_batch == 37);
  CHECK(pp_adjustment(m, make_plan(a, 1, 4, 1), a, 1).micro_batch == 1);
  CHECK(pp_adjustment(m, make_plan(a, 1, 4, 1), a, 9).micro_batch == 3);

  CHECK(pp_boundary_time(2, 8192, 1, 2, 1, 50e9, 6.8e-6) == Approx(6.8e-6 + 8192.0 * 2 / 50e9));
  CHECK(pp_boundary_time(1, 8192, 1, 2, 1, 50e9, 6.8e-6) == 0);

  ParallelismPlan too_deep = make_plan(a, 1, 81, 1);
  CHECK_THROWS_AS(pp_adjustment(m, too_deep, a, 81), std::invalid_argument);
}

TEST_CASE("pipeline boundary time is nondecreasing in depth") {
  const auto a = preset_accelerator("h100-sxm");
  const auto m = preset_model("llama3-70b");
  for (int b : {1, 16, 256}) {
    for (int tp : {1, 2, 8}) {
      double prev = 0;
      for (int pp = 1; pp <= 80; ++pp) {
        if (80 % pp) continue;
        const double t = pp_adjustment(m, make_plan(a, tp, pp, 1), a, b).pp_boundary_time;
        CHECK(t >= prev);
        prev = t;
      }
    }
  }
}

TEST_CASE("expert-parallel dispatch volume") {
  const auto a = preset_accelerator("h100-sxm");
  auto m = preset_model("deepseek-v3");  // 256 experts, 8 active

  CHECK(ep_adjustment(m, make_plan(a, 1, 1, 1), 16).ep_comm_bytes == 0);
  CHECK(ep_adjustment(m, make_plan(a, 1, 1, 2), 16).ep_ranks == 2);
  const auto r8 = ep_adjustment(m, make_plan(a, 1, 1, 8), 16);
  CHECK(r8.ep_comm_bytes == 2.0 * 8 * m.d_model * 16 * 2);
  for (int ep : {8, 16, 64, 256}) {
    CHECK(ep_adjustment(m, make_plan(a, 1, 1, ep), 16).ep_comm_bytes == r8.ep_comm_bytes);
  }

  auto two = preset_model("mixtral-8x22b");
  two.n_expert = 64;
  CHECK(ep_adjustment(two, make_plan(a, 1, 1, 64), 3).ep_comm_bytes ==
        ep_adjustment(two, make_plan(a, 1, 1, 2), 3).ep_comm_bytes);

  CHECK_THROWS_AS(ep_adjustment(preset_model("mixtral-8x22b"), make_plan(a, 1, 1, 16), 1),
                  std::invalid_argument);
}

TEST_CASE("expert-parallel placement") {
  const auto a = preset_accelerator("h100-sxm");
  CHECK(ep_intra_node_fraction(make_plan(a, 1, 1, 8), 8, a) == 1.0);
  CHECK(ep_intra_node_fraction(make_plan(a, 2, 1, 16), 8, a) == 0.5);
  CHECK(ep_nodes_spanned(make_plan(a, 1, 1, 64), 8, a) == 1);
  CHECK(ep_nodes_spanned(make_plan(a, 4, 1, 64), 8, a) == 4);
}

TEST_CASE("invalid plans are rejected") {
  const auto a = preset_accelerator("h100-sxm");
  const auto m = preset_model("llama3-8b");
  auto p = make_plan(a, 2, 2, 1);
  p.n_gpu = 5;
  CHECK_THROWS(validate(p, m, a));
  CHECK_THROWS(validate(make_plan(a, 1, 1, 2), m, a));
  CHECK_THROWS(validate(make_plan(a, 1, 33, 1), m, a));
}
