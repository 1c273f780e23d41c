// SPDX-License-Identifier: Apache-2.0
//
// infer-econ: command-line front end for the inference cost model.
//
// Exit codes: 0 success, 2 input error, 3 empty feasible set.

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "infer_econ/infer_econ.hpp"

namespace ie = infer_econ;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitEmpty = 3;

struct ModelFlags {
  std::string model;
  std::optional<int> weight_bits;
  std::optional<int> act_bits;
};

struct GpuFlags {
  std::optional<double> price;
};

struct SweepFlags {
  double context = 0;
  std::optional<double> demand;
  std::string spec_draft;
  std::optional<int> draft_weight_bits;
  double spec_alpha = ie::kDefaultAcceptance;
  std::optional<int> spec_gamma;
  std::optional<double> pref_alpha;
  std::vector<int> n_gpu_values;
  std::vector<int> batch_values;
  unsigned threads = 0;
  std::string out;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f, const char* name = "--model") {
  cmd->add_option(name, f.model, "model preset name or spec file")->required();
  cmd->add_option("--weight-bits", f.weight_bits, "override weight precision (bits)");
  cmd->add_option("--act-bits", f.act_bits, "override activation precision (bits)");
}

void add_sweep_flags(CLI::App* cmd, SweepFlags& f, const std::string& default_out) {
  f.out = default_out;
  cmd->add_option("--context", f.context, "context length in tokens")->check(CLI::NonNegativeNumber);
  cmd->add_option("--demand", f.demand, "cap on total tokens/s per instance")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--spec-draft", f.spec_draft, "draft model for speculative decoding");
  cmd->add_option("--draft-weight-bits", f.draft_weight_bits, "draft weight precision (bits)");
  cmd->add_option("--spec-alpha", f.spec_alpha, "draft token acceptance probability");
  cmd->add_option("--spec-gamma", f.spec_gamma, "fixed draft length (default: optimized)");
  cmd->add_option("--pref-alpha", f.pref_alpha, "speed preference exponent; marks the utility optimum");
  cmd->add_option("--n-gpu-values", f.n_gpu_values, "instance sizes to search");
  cmd->add_option("--batch-values", f.batch_values, "batch sizes to search");
  cmd->add_option("--threads", f.threads, "worker threads (0 = hardware concurrency)");
  cmd->add_option("--out", f.out, "output path prefix for .csv/.json/.svg");
}

ie::ModelArchitecture load_model(const ModelFlags& f) {
  return ie::with_precision(ie::resolve_model(f.model), f.weight_bits, f.act_bits);
}

ie::AcceleratorSpec load_gpu(const std::string& name, const GpuFlags& f) {
  auto a = ie::resolve_accelerator(name);
  return f.price ? ie::with_price(a, *f.price) : a;
}

ie::SearchGrid grid_from(const SweepFlags& f) {
  ie::SearchGrid g = ie::default_grid();
  if (!f.n_gpu_values.empty()) g.n_gpu_values = f.n_gpu_values;
  if (!f.batch_values.empty()) g.batch_values = f.batch_values;
  return ie::normalized(g);
}

ie::SweepOptions sweep_options(const SweepFlags& f, ie::RunManifest& manifest) {
  ie::SweepOptions opt;
  opt.threads = f.threads;
  if (!f.spec_draft.empty()) {
    ie::SpecDecConfig c;
    c.draft = ie::with_precision(ie::resolve_model(f.spec_draft), f.draft_weight_bits, std::nullopt);
    c.alpha = f.spec_alpha;
    c.gamma = f.spec_gamma;
    ie::validate(c);
    manifest.add("draft", c.draft);
    opt.spec = c;
  }
  return opt;
}

ie::json workload_settings(const SweepFlags& f, const ie::SweepOptions& opt) {
  ie::json s;
  s["context_length"] = f.context;
  s["demand_cap"] = f.demand ? ie::json(*f.demand) : ie::json(nullptr);
  s["pref_alpha"] = f.pref_alpha ? ie::json(*f.pref_alpha) : ie::json(nullptr);
  if (opt.spec) {
    s["speculative"] = {{"draft", opt.spec->draft.name},
                        {"alpha", opt.spec->alpha},
                        {"gamma", opt.spec->gamma ? ie::json(*opt.spec->gamma) : ie::json("auto")},
                        {"gamma_max", opt.spec->gamma_max}};
  } else {
    s["speculative"] = nullptr;
  }
  return s;
}

void append(std::vector<std::string>& to, const std::vector<std::string>& from) {
  to.insert(to.end(), from.begin(), from.end());
}

/// Notes tying the run to modeling choices that move headline numbers.
std::vector<std::string> modeling_notes(const ie::SweepOptions& opt) {
  std::vector<std::string> n{
      "pipeline parallelism: per-token time uses one stage's devices on ceil(b/pp) sequences",
      "intra-node all-reduce reads use the sqrt(n_nodes) coefficient"};
  if (opt.spec) {
    n.push_back(
        "speculative verify pass: gamma positions per sequence scale arithmetic, activation "
        "I/O and reduced bytes; weights and KV cache are read once");
    n.push_back("draft runs on the target's devices, split into data-parallel replicas when faster");
  }
  return n;
}

std::string fmt(double x, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << x;
  return s.str();
}

std::string plan_text(const ie::ParallelismPlan& p) {
  return std::to_string(p.n_gpu) + " GPUs (tp=" + std::to_string(p.tp) + " pp=" +
         std::to_string(p.pp) + " ep=" + std::to_string(p.ep) + ", " + std::to_string(p.n_nodes) +
         (p.n_nodes == 1 ? " node)" : " nodes)");
}

std::string point_text(const ie::ParetoPoint& p) {
  std::string s = fmt(p.tokens_per_second, 1) + " tok/s, $" + fmt(p.cost_per_million_tokens, 3) +
                  "/M, " + plan_text(p.plan) + ", batch " + std::to_string(p.batch_size);
  if (p.spec) s += ", gamma " + std::to_string(p.spec->gamma);
  return s;
}

void print_breakdown(std::ostream& out, const ie::LatencyBreakdown& b) {
  auto row = [&](const char* name, double s) {
    out << "  " << std::left << std::setw(26) << name << std::right << std::setw(12)
        << fmt(s * 1e3, 4) << " ms\n";
  };
  row("memory", b.memory_time);
  row("arithmetic", b.arithmetic_time);
  row("collective latency", b.collective_latency_time);
  row("kernel launch", b.kernel_launch_time);
  row("network bandwidth", b.network_bandwidth_time);
  row("pipeline boundaries", b.pp_boundary_time);
  row("token latency", b.token_latency);
  out << "  " << std::left << std::setw(26) << "tokens/s per request" << std::right
      << std::setw(12) << fmt(1.0 / b.token_latency, 2) << '\n';
  out << "  " << std::left << std::setw(26) << "GPU-seconds per token" << std::right
      << std::setw(12) << fmt(b.gpu_seconds_per_token, 6) << '\n';
  out << "  " << std::left << std::setw(26) << "USD per million tokens" << std::right
      << std::setw(12) << fmt(b.cost_per_million_tokens, 4) << '\n';
}

// ---------------------------------------------------------------------------

struct AnalyzeFlags {
  ModelFlags model;
  GpuFlags gpu_flags;
  std::string gpu;
  int n_gpu = 1;
  int batch = 1;
  double context = 0;
  std::optional<int> tp, pp, ep;
  bool json = false;
  bool toy = false;
  double t_hop = 1e-6;
  std::optional<int> n_reduce;
};

int cmd_analyze(const AnalyzeFlags& f) {
  const auto m = load_model(f.model);
  const auto acc = load_gpu(f.gpu, f.gpu_flags);

  if (f.toy) {
    const auto single = ie::roofline::single_device(m, acc, 1);
    const double n_star = ie::roofline::optimal_instance_size(m, acc, f.t_hop, f.n_reduce);
    const double t_min = ie::roofline::minimum_token_latency(m, acc, f.t_hop, f.n_reduce);
    const int reduces = f.n_reduce.value_or(ie::roofline::default_n_reduce(m));
    if (f.json) {
      ie::json j{{"model", m.name},
                 {"accelerator", acc.name},
                 {"t_hop_s", f.t_hop},
                 {"n_reduce", reduces},
                 {"critical_batch_size", single.critical_batch_size},
                 {"single_device_token_latency_s", single.token_latency},
                 {"optimal_instance_size", n_star},
                 {"minimum_token_latency_s", t_min},
                 {"max_tokens_per_second", 1.0 / t_min}};
      std::cout << j.dump(2) << '\n';
      return 0;
    }
    std::cout << m.name << " on " << acc.name << " (toy model, raw specs, t_hop "
              << fmt(f.t_hop * 1e6, 2) << " us, n_reduce " << reduces << ")\n"
              << "  critical batch size       " << fmt(single.critical_batch_size, 1) << '\n'
              << "  single-device latency     " << fmt(single.token_latency * 1e3, 3) << " ms\n"
              << "  optimal instance size N*  " << fmt(n_star, 2) << '\n'
              << "  minimum token latency     " << fmt(t_min * 1e3, 3) << " ms\n"
              << "  max tokens per second     " << fmt(1.0 / t_min, 1) << '\n';
    return 0;
  }

  ie::Workload w;
  w.batch_size = f.batch;
  w.context_length = f.context;
  ie::ParallelismPlan plan;
  ie::LatencyBreakdown b;
  if (f.tp || f.pp || f.ep) {
    const int pp = f.pp.value_or(1), ep = f.ep.value_or(1);
    int tp = f.tp.value_or(0);
    if (!f.tp) {
      if (f.n_gpu % (pp * ep) != 0) throw std::invalid_argument("pp * ep must divide --n-gpu");
      tp = f.n_gpu / (pp * ep);
    }
    plan = ie::make_plan(acc, tp, pp, ep);
    if (plan.n_gpu != f.n_gpu) throw std::invalid_argument("tp * pp * ep must equal --n-gpu");
    b = ie::token_latency(m, w, plan, acc);
  } else {
    bool found = false;
    for (const auto& p : ie::enumerate_plans(m, acc, f.n_gpu)) {
      const auto candidate = ie::token_latency(m, w, p, acc);
      if (!found || candidate.token_latency < b.token_latency) {
        plan = p;
        b = candidate;
        found = true;
      }
    }
  }

  if (f.json) {
    ie::json j{{"model", m.name},
               {"accelerator", acc.name},
               {"context_length", w.context_length},
               {"batch", w.batch_size},
               {"plan", ie::to_json(plan)},
               {"breakdown", ie::to_json(b)},
               {"notes", ie::precision_notes(m, acc)}};
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << m.name << " (" << m.weight_bits << "-bit weights) on " << acc.name << ", "
              << plan_text(plan) << ", batch " << w.batch_size << ", context "
              << fmt(w.context_length, 0) << '\n';
    for (const auto& n : ie::precision_notes(m, acc)) std::cout << "  note: " << n << '\n';
    if (b.feasible) print_breakdown(std::cout, b);
  }
  if (!b.feasible) {
    std::cerr << "infeasible: " << b.infeasible_reason << '\n';
    return kExitEmpty;
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct FrontierFlags {
  ModelFlags model;
  GpuFlags gpu_flags;
  std::vector<std::string> gpus;
  SweepFlags sweep;
};

int run_frontiers(const std::string& command, const FrontierFlags& f) {
  const auto m = load_model(f.model);
  ie::RunManifest manifest;
  manifest.command = command;
  manifest.add("model", m);
  std::vector<ie::AcceleratorSpec> accs;
  for (const auto& g : f.gpus) {
    accs.push_back(load_gpu(g, f.gpu_flags));
    manifest.add("accelerator", accs.back());
    append(manifest.notes, ie::precision_notes(m, accs.back()));
  }
  const ie::SweepOptions opt = sweep_options(f.sweep, manifest);
  const ie::SearchGrid grid = grid_from(f.sweep);
  manifest.grid = grid;
  manifest.settings = workload_settings(f.sweep, opt);
  append(manifest.notes, modeling_notes(opt));

  ie::Workload w;
  w.context_length = f.sweep.context;
  w.demand_cap = f.sweep.demand;

  std::vector<ie::Series> series;
  for (const auto& acc : accs) {
    ie::Series s;
    s.model = m.name;
    s.accelerator = acc.name;
    s.label = m.name + " on " + acc.name + (opt.spec ? " (speculative)" : "");
    s.points = ie::pareto_frontier(ie::sweep(m, acc, w, grid, opt));
    if (f.sweep.pref_alpha) s.highlight = ie::utility_optimal_point(s.points, *f.sweep.pref_alpha);
    series.push_back(std::move(s));
  }
  ie::write_frontier_outputs(f.sweep.out, series, "Speed vs. cost frontier", manifest);

  for (const auto& s : series) {
    std::cout << s.label << ": " << s.points.size() << " frontier points\n";
    std::cout << "  fastest:  " << point_text(s.points.back()) << '\n';
    std::cout << "  cheapest: " << point_text(s.points.front()) << '\n';
    if (s.highlight) {
      std::cout << "  utility optimum (alpha " << ie::format_number(*f.sweep.pref_alpha)
                << "): " << point_text(*s.highlight) << '\n';
    }
  }
  for (const auto& out : manifest.outputs) std::cout << "wrote " << out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct SpecFlags {
  ModelFlags target;
  GpuFlags gpu_flags;
  std::string gpu = "h100-sxm";
  std::string draft;
  std::optional<int> draft_weight_bits;
  std::optional<double> alpha;
  std::string records;
  double pref_alpha = 3.0;
  double context = 0;
  int gamma_max = ie::kDefaultGammaMax;
  unsigned threads = 0;
  std::string out;
  bool json = false;
};

int cmd_specdec(const SpecFlags& f) {
  if (f.alpha.has_value() == !f.records.empty()) {
    throw std::invalid_argument("give exactly one of --alpha or --records");
  }
  std::optional<ie::AlphaEstimate> estimate;
  double alpha = 0;
  if (f.alpha) {
    alpha = *f.alpha;
    ie::validate_alpha(alpha);
  } else {
    estimate = ie::estimate_alpha(ie::read_logprob_records(f.records));
    alpha = estimate->alpha;
  }

  const auto target = load_model(f.target);
  const auto acc = load_gpu(f.gpu, f.gpu_flags);
  ie::SpecDecConfig cfg;
  cfg.draft = ie::with_precision(ie::resolve_model(f.draft), f.draft_weight_bits, std::nullopt);
  cfg.gamma_max = f.gamma_max;

  ie::json report;
  report["target"] = target.name;
  report["draft"] = cfg.draft.name;
  report["accelerator"] = acc.name;
  report["alpha"] = alpha;
  if (estimate) {
    report["alpha_standard_error"] = estimate->standard_error;
    report["records"] = estimate->count;
  }

  std::cout << "acceptance probability: " << ie::format_number(alpha);
  if (estimate) {
    std::cout << " (estimated from " << estimate->count << " records, standard error "
              << fmt(estimate->standard_error, 4) << ")";
  }
  std::cout << '\n';

  // min(1, p/q) can reach 1 exactly; speculation is then unbounded and
  // there is no cost model to evaluate.
  if (alpha >= 1.0) {
    std::cout << "every draft token is accepted; the optimal draft length is gamma_max\n";
    report["gamma"] = f.gamma_max;
    if (f.json) std::cout << report.dump(2) << '\n';
    return 0;
  }
  cfg.alpha = alpha;

  ie::Workload w;
  w.context_length = f.context;
  ie::SweepOptions base;
  base.threads = f.threads;
  ie::SweepOptions spec = base;
  spec.spec = cfg;

  const auto fast0 = ie::max_tokens_per_second(target, acc, w, base);
  const auto fast1 = ie::max_tokens_per_second(target, acc, w, spec);
  const auto grid = ie::default_grid();
  const auto front0 = ie::pareto_frontier(ie::sweep(target, acc, w, grid, base));
  const auto front1 = ie::pareto_frontier(ie::sweep(target, acc, w, grid, spec));
  const auto util0 = ie::utility_optimal_point(front0, f.pref_alpha);
  const auto util1 = ie::utility_optimal_point(front1, f.pref_alpha);
  const auto same_cost = ie::speed_at_cost(front1, util0.cost_per_million_tokens);
  const double gain = same_cost ? *same_cost / util0.tokens_per_second : 0.0;

  std::cout << "optimal draft length at batch 1: " << fast1.spec->gamma << '\n'
            << "max speed without speculation: " << point_text(fast0) << '\n'
            << "max speed with speculation:    " << point_text(fast1) << '\n'
            << "utility optimum (alpha " << ie::format_number(f.pref_alpha) << ")\n"
            << "  without speculation: " << point_text(util0) << '\n'
            << "  with speculation:    " << point_text(util1) << '\n';
  if (same_cost) {
    std::cout << "speed gain at $" << fmt(util0.cost_per_million_tokens, 3)
              << "/M: " << fmt((gain - 1.0) * 100.0, 1) << "%\n";
  }

  report["gamma_at_max_speed"] = fast1.spec->gamma;
  report["max_speed"] = {{"without", ie::to_json(fast0)}, {"with", ie::to_json(fast1)}};
  report["pref_alpha"] = f.pref_alpha;
  report["utility_optimal"] = {{"without", ie::to_json(util0)}, {"with", ie::to_json(util1)}};
  report["speed_gain_at_fixed_cost"] = same_cost ? ie::json(gain) : ie::json(nullptr);

  if (!f.out.empty()) {
    ie::RunManifest manifest;
    manifest.command = "specdec";
    manifest.add("target", target);
    manifest.add("draft", cfg.draft);
    manifest.add("accelerator", acc);
    manifest.grid = grid;
    manifest.settings = {{"alpha", alpha}, {"pref_alpha", f.pref_alpha}, {"context_length", f.context}};
    append(manifest.notes, ie::precision_notes(target, acc));
    append(manifest.notes, modeling_notes(spec));
    std::vector<ie::Series> series(2);
    series[0] = {target.name + " on " + acc.name, target.name, acc.name, front0, util0};
    series[1] = {target.name + " on " + acc.name + " (speculative)", target.name, acc.name, front1,
                 util1};
    ie::write_frontier_outputs(f.out, series, "Speculative decoding", manifest);
    for (const auto& o : manifest.outputs) std::cout << "wrote " << o << '\n';
  }
  if (f.json) std::cout << report.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_presets(bool list, const std::string& export_dir) {
  if (!export_dir.empty()) {
    namespace fs = std::filesystem;
    for (const auto& n : ie::presets::accelerator_names()) {
      ie::write_text_file(fs::path(export_dir) / "accelerators" / (n + ".json"),
                          ie::to_json(*ie::builtin_accelerator(n)).dump(2) + "\n");
    }
    for (const auto& n : ie::presets::model_names()) {
      ie::write_text_file(fs::path(export_dir) / "models" / (n + ".json"),
                          ie::to_json(*ie::builtin_model(n)).dump(2) + "\n");
    }
    std::cout << "exported " << ie::presets::accelerator_names().size() << " accelerators and "
              << ie::presets::model_names().size() << " models to " << export_dir << '\n';
  }
  if (list || export_dir.empty()) {
    std::cout << "accelerators:\n";
    for (const auto& n : ie::presets::accelerator_names()) std::cout << "  " << n << '\n';
    std::cout << "models:\n";
    for (const auto& n : ie::presets::model_names()) {
      const auto m = ie::preset_model(n);
      std::cout << "  " << std::left << std::setw(16) << n << fmt(m.total_params() / 1e9, 1)
                << "B params, " << m.weight_bits << "-bit weights\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inference economics: token latency and cost of serving LLMs on GPU clusters"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ie::kToolVersion);

  AnalyzeFlags analyze;
  auto* a = app.add_subcommand("analyze", "latency breakdown for one configuration");
  add_model_flags(a, analyze.model);
  a->add_option("--gpu", analyze.gpu, "accelerator preset name or spec file")->required();
  a->add_option("--price", analyze.gpu_flags.price, "hourly price per device (USD)");
  a->add_option("--n-gpu", analyze.n_gpu, "instance size")->check(CLI::PositiveNumber);
  a->add_option("--batch", analyze.batch, "batch size")->check(CLI::PositiveNumber);
  a->add_option("--context", analyze.context, "context length")->check(CLI::NonNegativeNumber);
  a->add_option("--tp", analyze.tp, "tensor-parallel degree");
  a->add_option("--pp", analyze.pp, "pipeline-parallel degree");
  a->add_option("--ep", analyze.ep, "expert-parallel degree");
  a->add_flag("--json", analyze.json, "print JSON");
  a->add_flag("--toy", analyze.toy, "closed-form toy model (raw specs, per-hop latency)");
  a->add_option("--t-hop", analyze.t_hop, "toy model per-hop latency (s)");
  a->add_option("--n-reduce", analyze.n_reduce, "toy model all-reduces per layer");

  FrontierFlags frontier;
  std::string frontier_gpu;
  auto* fr = app.add_subcommand("frontier", "Pareto frontier of speed against cost");
  add_model_flags(fr, frontier.model);
  fr->add_option("--gpu", frontier_gpu, "accelerator preset name or spec file")->required();
  fr->add_option("--price", frontier.gpu_flags.price, "hourly price per device (USD)");
  add_sweep_flags(fr, frontier.sweep, "frontier");

  FrontierFlags compare;
  auto* cg = app.add_subcommand("compare-gpus", "overlay frontiers for several accelerators");
  add_model_flags(cg, compare.model);
  cg->add_option("--gpus", compare.gpus, "accelerator presets or spec files")->required();
  cg->add_option("--price", compare.gpu_flags.price, "hourly price for every device (USD)");
  add_sweep_flags(cg, compare.sweep, "compare");

  SpecFlags spec;
  auto* sd = app.add_subcommand("specdec", "speculative decoding gains");
  add_model_flags(sd, spec.target, "--target,--model");
  sd->add_option("--draft", spec.draft, "draft model preset or spec file")->required();
  sd->add_option("--draft-weight-bits", spec.draft_weight_bits, "draft weight precision (bits)");
  sd->add_option("--gpu", spec.gpu, "accelerator preset name or spec file");
  sd->add_option("--price", spec.gpu_flags.price, "hourly price per device (USD)");
  sd->add_option("--alpha", spec.alpha, "token acceptance probability in (0, 1)");
  sd->add_option("--records", spec.records, "line-delimited {\"p\", \"q\"} records");
  sd->add_option("--pref-alpha", spec.pref_alpha, "speed preference exponent");
  sd->add_option("--context", spec.context, "context length")->check(CLI::NonNegativeNumber);
  sd->add_option("--gamma-max", spec.gamma_max, "largest draft length searched");
  sd->add_option("--threads", spec.threads, "worker threads (0 = hardware concurrency)");
  sd->add_option("--out", spec.out, "also write frontiers to this output prefix");
  sd->add_flag("--json", spec.json, "print JSON");

  bool list = false;
  std::string export_dir;
  auto* ps = app.add_subcommand("presets", "list or export built-in presets");
  ps->add_flag("--list", list, "list preset names");
  ps->add_option("--export", export_dir, "write presets as JSON under this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (a->parsed()) return cmd_analyze(analyze);
    if (fr->parsed()) {
      frontier.gpus = {frontier_gpu};
      return run_frontiers("frontier", frontier);
    }
    if (cg->parsed()) return run_frontiers("compare-gpus", compare);
    if (sd->parsed()) return cmd_specdec(spec);
    if (ps->parsed()) return cmd_presets(list, export_dir);
  } catch (const ie::EmptyFeasibleSetError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitEmpty;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
