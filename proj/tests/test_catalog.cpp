// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <catch_amalgamated.hpp>

#include "infer_econ/catalog.hpp"
#include "infer_econ/perf_model.hpp"

using namespace infer_econ;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("infer_econ_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("h100 preset carries the documented constants") {
  const auto a = preset_accelerator("h100-sxm");
  CHECK(a.hbm_bandwidth_bytes_per_s == 3.3e12);
  CHECK(a.hbm_capacity_bytes == 80e9);
  CHECK(a.flop_efficiency == 0.70);
  CHECK(a.hbm_efficiency == 0.75);
  CHECK(a.intra_node_bandwidth_bytes_per_s == 450e9);
  CHECK(a.inter_node_bandwidth_bytes_per_s == 50e9);
  CHECK(a.node_size == 8);
  CHECK(a.kernel_launch_latency_s == 4e-6);
  CHECK(a.collective_base_latency_s == 6.8e-6);
  CHECK(a.per_rank_latency_s == 1.2e-6);
  CHECK(a.per_tree_step_latency_s == 10e-6);
  CHECK(a.raw_flops(16) == 1e15);
}

TEST_CASE("accelerator prices follow the shipped catalog") {
  CHECK(preset_accelerator("h100-sxm").hourly_price_usd == 2.1);
  CHECK(preset_accelerator("a100-sxm").hourly_price_usd == 1.5);
  CHECK(preset_accelerator("v100-sxm").hourly_price_usd == 0.42);
}

TEST_CASE("every preset validates and round-trips through JSON") {
  for (const auto& n : presets::accelerator_names()) {
    const auto a = preset_accelerator(n);
    CHECK_NOTHROW(validate(a));
    CHECK(accelerator_from_json(json::parse(to_json(a).dump())) == a);
  }
  for (const auto& n : presets::model_names()) {
    const auto m = preset_model(n);
    CHECK_NOTHROW(validate(m));
    CHECK(model_from_json(json::parse(to_json(m).dump())) == m);
  }
}

TEST_CASE("shipped preset files match the built-in catalog") {
  const fs::path root = fs::path(INFER_ECON_SOURCE_DIR) / "presets";
  for (const auto& n : presets::accelerator_names()) {
    INFO(n);
    CHECK(load_accelerator(root / "accelerators" / (n + ".json")) == *builtin_accelerator(n));
  }
  for (const auto& n : presets::model_names()) {
    INFO(n);
    CHECK(load_model(root / "models" / (n + ".json")) == *builtin_model(n));
  }
}

TEST_CASE("preset parameter counts match the published sizes") {
  CHECK(preset_model("llama3-8b").total_params() == Approx(8.03e9).epsilon(0.005));
  CHECK(preset_model("llama3-70b").total_params() == Approx(70.55e9).epsilon(0.005));
  CHECK(preset_model("llama3.1-405b").total_params() == Approx(405.8e9).epsilon(0.01));
  CHECK(preset_model("mixtral-8x22b").total_params() == Approx(141e9).epsilon(0.01));
  CHECK(preset_model("mistral-large-2").total_params() == Approx(123e9).epsilon(0.01));
  CHECK(preset_model("deepseek-v3").total_params() == Approx(671e9).epsilon(0.01));
  CHECK(preset_model("gpt3").total_params() == Approx(175e9).epsilon(0.01));
  CHECK(preset_model("palm-540b").total_params() == Approx(540e9).epsilon(0.01));
}

TEST_CASE("model invariants and derived quantities") {
  const auto mixtral = preset_model("mixtral-8x22b");
  CHECK(mixtral.n_expert == 8);
  CHECK(mixtral.n_active_expert == 2);
  CHECK(mixtral.sparsity() == 4.0);
  // Published active parameter count is about 39B.
  CHECK(active_params(mixtral) == Approx(39e9).epsilon(0.03));

  const auto mistral = preset_model("mistral-large-2");
  CHECK(mistral.is_dense());
  CHECK(mistral.n_kv_head() == 8);
  CHECK(mistral.attention_group_size == 12);

  const auto ds = preset_model("deepseek-v3");
  CHECK(ds.attention_variant == AttentionVariant::mla);
  CHECK(ds.d_head == 128);
  CHECK(ds.d_latent == 512);

  const auto l8 = preset_model("llama3-8b");
  CHECK(l8.params.feedforward ==
        static_cast<double>(l8.ff_matrix_count) * l8.d_model * l8.d_ff * l8.n_expert * l8.n_layers);
}

TEST_CASE("unknown preset names are rejected") {
  CHECK_THROWS_WITH(preset_model("no-such-model"), Catch::Matchers::ContainsSubstring("unknown preset"));
  CHECK_THROWS_AS(preset_accelerator("tpu-v9"), UnknownPresetError);
}

TEST_CASE("spec files: dense default, bad efficiency, malformed input") {
  const auto dir = temp_dir("catalog");
  write(dir / "tiny.json", R"({
    "schema_version": 1, "kind": "model", "name": "tiny",
    "n_layers": 2, "d_model": 64, "n_head": 4, "d_head": 16,
    "attention_group_size": 1, "d_ff": 256, "n_expert": 1, "n_active_expert": 1,
    "vocab_size": 100
  })");
  const auto m = std::get<ModelArchitecture>(load_spec(dir / "tiny.json", SpecKind::model));
  CHECK(m.sparsity() == 1.0);
  CHECK(m.is_dense());
  CHECK(m.params.feedforward == 2.0 * 64 * 256 * 2);

  auto j = to_json(preset_accelerator("h100-sxm"));
  j["hbm_efficiency"] = 1.3;
  write(dir / "bad.json", j.dump());
  CHECK_THROWS_WITH(load_accelerator(dir / "bad.json"),
                    Catch::Matchers::ContainsSubstring("efficiency out of range"));
  CHECK_THROWS_AS(load_accelerator(dir / "bad.json"), ValidationError);

  write(dir / "broken.json", "{ not json");
  CHECK_THROWS_AS(load_model(dir / "broken.json"), ParseError);

  auto mj = to_json(preset_model("llama3-8b"));
  mj["params"] = {{"bogus", 1.0}};
  write(dir / "bogus.json", mj.dump());
  CHECK_THROWS_AS(load_model(dir / "bogus.json"), ParseError);

  auto g = to_json(preset_model("llama3-8b"));
  g["attention_group_size"] = 5;
  write(dir / "badg.json", g.dump());
  CHECK_THROWS_AS(load_model(dir / "badg.json"), ValidationError);
}

TEST_CASE("preset directory override takes precedence") {
  const auto dir = temp_dir("override");
  auto a = preset_accelerator("h100-sxm");
  a.hourly_price_usd = 9.5;
  write(dir / "accelerators" / "h100-sxm.json", to_json(a).dump());
  ::setenv(kPresetDirEnv, dir.c_str(), 1);
  CHECK(preset_accelerator("h100-sxm").hourly_price_usd == 9.5);
  CHECK(preset_accelerator("a100-sxm").hourly_price_usd == 1.5);
  ::unsetenv(kPresetDirEnv);
  CHECK(preset_accelerator("h100-sxm").hourly_price_usd == 2.1);
}

TEST_CASE("compute precision falls back to the next wider rate") {
  const auto v100 = preset_accelerator("v100-sxm");
  CHECK_FALSE(v100.has_precision(8));
  CHECK(v100.compute_precision_for(8) == 16);
  const auto h100 = preset_accelerator("h100-sxm");
  CHECK(h100.compute_precision_for(4) == 8);
  CHECK(h100.compute_precision_for(16) == 16);
  CHECK_THROWS_AS(h100.compute_precision_for(32), ValidationError);
}

TEST_CASE("precision overrides are validated") {
  const auto m = with_precision(preset_model("llama3-70b"), 8, std::nullopt);
  CHECK(m.weight_bits == 8);
  CHECK(m.activation_bits == 16);
  CHECK_THROWS_AS(with_precision(m, 0, std::nullopt), ValidationError);
}
