// SPDX-License-Identifier: Apache-2.0
//
// Deterministic writers for frontiers and breakdowns: CSV, JSON and a
// log-log SVG plot, plus the manifest recorded alongside every run.

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "catalog.hpp"
#include "optimizer.hpp"
#include "perf_model.hpp"

namespace infer_econ {

inline constexpr const char* kToolVersion = "0.1.0";

/// Shortest decimal that round-trips; "inf"/"nan" for non-finite values.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (res.ec != std::errc{}) throw std::runtime_error("number formatting failed");
  return std::string(buf.data(), res.ptr);
}

inline std::string format_fixed(double x, int digits) {
  std::array<char, 64> buf{};
  const auto res =
      std::to_chars(buf.data(), buf.data() + buf.size(), x, std::chars_format::fixed, digits);
  if (res.ec != std::errc{}) throw std::runtime_error("number formatting failed");
  return std::string(buf.data(), res.ptr);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

template <class Spec>
std::string spec_hash(const Spec& s) {
  return "fnv1a64:" + hex64(fnv1a(to_json(s).dump()));
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct ManifestInput {
  std::string role;  // e.g. "model", "accelerator", "draft"
  std::string name;
  std::string source;
  std::string hash;
};

struct RunManifest {
  std::string command;
  std::string tool_version = kToolVersion;
  std::vector<ManifestInput> inputs;
  std::optional<SearchGrid> grid;
  json settings = json::object();
  std::vector<std::string> outputs;
  std::vector<std::string> notes;

  void add(const std::string& role, const ModelArchitecture& m) {
    inputs.push_back({role, m.name, m.source, spec_hash(m)});
  }
  void add(const std::string& role, const AcceleratorSpec& a) {
    inputs.push_back({role, a.name, a.source, spec_hash(a)});
  }
};

inline json to_json(const SearchGrid& g) {
  return json{{"n_gpu_values", g.n_gpu_values}, {"batch_values", g.batch_values}};
}

inline json to_json(const RunManifest& m) {
  json j;
  j["command"] = m.command;
  j["tool_version"] = m.tool_version;
  json inputs = json::array();
  for (const auto& in : m.inputs) {
    inputs.push_back(
        {{"role", in.role}, {"name", in.name}, {"source", in.source}, {"hash", in.hash}});
  }
  j["inputs"] = inputs;
  j["grid"] = m.grid ? to_json(*m.grid) : json(nullptr);
  j["settings"] = m.settings;
  j["outputs"] = m.outputs;
  j["notes"] = m.notes;
  return j;
}

/// Notes recording arithmetic precision fallbacks for the run.
inline std::vector<std::string> precision_notes(const ModelArchitecture& m,
                                                const AcceleratorSpec& a) {
  std::vector<std::string> out;
  const int bits = a.compute_precision_for(m.weight_bits);
  if (bits != m.weight_bits) {
    out.push_back(a.name + " has no " + std::to_string(m.weight_bits) + "-bit arithmetic rate; " +
                  m.name + " uses " + std::to_string(bits) + "-bit arithmetic with " +
                  std::to_string(m.weight_bits) + "-bit weight reads");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

inline json to_json(const ParallelismPlan& p) {
  return json{{"n_gpu", p.n_gpu}, {"n_nodes", p.n_nodes}, {"tp", p.tp}, {"pp", p.pp}, {"ep", p.ep}};
}

inline json to_json(const LatencyBreakdown& b) {
  json j;
  j["feasible"] = b.feasible;
  if (!b.feasible) j["infeasible_reason"] = b.infeasible_reason;
  auto num = [](double x) { return std::isfinite(x) ? json(x) : json(format_number(x)); };
  j["token_latency_s"] = num(b.token_latency);
  j["gpu_seconds_per_token"] = num(b.gpu_seconds_per_token);
  j["usd_per_million_tokens"] = num(b.cost_per_million_tokens);
  j["memory_time_s"] = b.memory_time;
  j["arithmetic_time_s"] = b.arithmetic_time;
  j["collective_latency_time_s"] = b.collective_latency_time;
  j["kernel_launch_time_s"] = b.kernel_launch_time;
  j["network_bandwidth_time_s"] = b.network_bandwidth_time;
  j["pp_boundary_time_s"] = b.pp_boundary_time;
  j["memory_required_bytes"] = b.memory_required_bytes;
  j["memory_available_bytes"] = b.memory_available_bytes;
  return j;
}

inline json to_json(const ParetoPoint& p) {
  json j;
  j["tokens_per_second"] = p.tokens_per_second;
  j["usd_per_million_tokens"] = p.cost_per_million_tokens;
  j["batch"] = p.batch_size;
  j["plan"] = to_json(p.plan);
  j["breakdown"] = to_json(p.breakdown);
  if (p.spec) {
    j["speculative"] = {{"gamma", p.spec->gamma},
                        {"alpha", p.spec->alpha},
                        {"expected_tokens_per_iteration", p.spec->expected_tokens},
                        {"draft_token_latency_s", p.spec->draft_token_latency},
                        {"draft_plan", to_json(p.spec->draft_plan)}};
  }
  return j;
}

struct Series {
  std::string label;  // legend text
  std::string model;
  std::string accelerator;
  std::vector<ParetoPoint> points;
  std::optional<ParetoPoint> highlight;  // utility-optimal point
};

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{
      "tokens_per_second",       "usd_per_million_tokens",
      "n_gpu",                   "n_nodes",
      "tp",                      "pp",
      "ep",                      "batch",
      "token_latency_s",         "gpu_seconds_per_token",
      "memory_time_s",           "arithmetic_time_s",
      "collective_latency_time_s", "kernel_launch_time_s",
      "network_bandwidth_time_s", "pp_boundary_time_s",
      "gamma",                   "expected_tokens_per_iteration",
      "model",                   "accelerator"};
  return cols;
}

/// One row per frontier point; the column set is fixed whatever the run.
inline void write_csv(std::ostream& out, const std::vector<Series>& series) {
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      const auto& b = p.breakdown;
      const std::vector<std::string> row{
          format_number(p.tokens_per_second),
          format_number(p.cost_per_million_tokens),
          std::to_string(p.plan.n_gpu),
          std::to_string(p.plan.n_nodes),
          std::to_string(p.plan.tp),
          std::to_string(p.plan.pp),
          std::to_string(p.plan.ep),
          std::to_string(p.batch_size),
          format_number(p.token_latency()),
          format_number(p.token_latency() * p.plan.n_gpu / p.batch_size),
          format_number(b.memory_time),
          format_number(b.arithmetic_time),
          format_number(b.collective_latency_time),
          format_number(b.kernel_launch_time),
          format_number(b.network_bandwidth_time),
          format_number(b.pp_boundary_time),
          p.spec ? std::to_string(p.spec->gamma) : "",
          p.spec ? format_number(p.spec->expected_tokens) : "1",
          s.model,
          s.accelerator};
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
      out << '\n';
    }
  }
}

inline json series_json(const std::vector<Series>& series) {
  json arr = json::array();
  for (const auto& s : series) {
    json j;
    j["label"] = s.label;
    j["model"] = s.model;
    j["accelerator"] = s.accelerator;
    json pts = json::array();
    for (const auto& p : s.points) pts.push_back(to_json(p));
    j["frontier"] = pts;
    j["utility_optimal"] = s.highlight ? to_json(*s.highlight) : json(nullptr);
    arr.push_back(j);
  }
  return arr;
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

namespace detail {

struct LogAxis {
  double lo, hi;  // log10 bounds
  double px0, px1;
  double map(double v) const { return px0 + (std::log10(v) - lo) / (hi - lo) * (px1 - px0); }
};

inline LogAxis make_axis(double vmin, double vmax, double px0, double px1) {
  double lo = std::floor(std::log10(vmin));
  double hi = std::ceil(std::log10(vmax));
  if (hi <= lo) hi = lo + 1;
  return {lo, hi, px0, px1};
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string tick_label(double v) {
  if (v >= 1) return format_number(std::round(v));
  return format_number(std::stod(format_fixed(v, 3)));
}

}  // namespace detail

/// Log-log plot of cost per million tokens against tokens per second, one
/// polyline per series and a ring on each highlighted point.
inline void write_svg(std::ostream& out, const std::vector<Series>& series,
                      const std::string& title) {
  static const std::array<const char*, 8> palette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                  "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  const double W = 760, H = 500, left = 80, right = 200, top = 40, bottom = 60;
  double xmin = INFINITY, xmax = 0, ymin = INFINITY, ymax = 0;
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      xmin = std::min(xmin, p.tokens_per_second);
      xmax = std::max(xmax, p.tokens_per_second);
      ymin = std::min(ymin, p.cost_per_million_tokens);
      ymax = std::max(ymax, p.cost_per_million_tokens);
    }
  }
  if (!(xmax > 0)) xmin = 1, xmax = 10, ymin = 1, ymax = 10;
  const auto xa = detail::make_axis(xmin, xmax, left, W - right);
  const auto ya = detail::make_axis(ymin, ymax, H - bottom, top);
  auto f = [](double v) { return format_fixed(v, 2); };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << f(W / 2 - right / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << detail::xml_escape(title) << "</text>\n";

  for (int axis = 0; axis < 2; ++axis) {
    const auto& a = axis == 0 ? xa : ya;
    for (int e = static_cast<int>(a.lo); e <= static_cast<int>(a.hi); ++e) {
      for (int m : {1, 2, 5}) {
        const double v = m * std::pow(10.0, e);
        if (std::log10(v) > a.hi + 1e-12) continue;
        const double px = a.map(v);
        const char* stroke = m == 1 ? "#bbbbbb" : "#eeeeee";
        if (axis == 0) {
          out << "<line x1=\"" << f(px) << "\" y1=\"" << top << "\" x2=\"" << f(px) << "\" y2=\""
              << H - bottom << "\" stroke=\"" << stroke << "\"/>\n";
          out << "<text x=\"" << f(px) << "\" y=\"" << H - bottom + 16
              << "\" text-anchor=\"middle\">" << detail::tick_label(v) << "</text>\n";
        } else {
          out << "<line x1=\"" << left << "\" y1=\"" << f(px) << "\" x2=\"" << W - right
              << "\" y2=\"" << f(px) << "\" stroke=\"" << stroke << "\"/>\n";
          out << "<text x=\"" << left - 6 << "\" y=\"" << f(px + 4)
              << "\" text-anchor=\"end\">" << detail::tick_label(v) << "</text>\n";
        }
      }
    }
  }
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << W - left - right
      << "\" height=\"" << H - top - bottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<text x=\"" << f((left + W - right) / 2) << "\" y=\"" << H - 18
      << "\" text-anchor=\"middle\">tokens per second per request</text>\n";
  out << "<text x=\"18\" y=\"" << f((top + H - bottom) / 2)
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << f((top + H - bottom) / 2)
      << ")\">USD per million output tokens</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = palette[i % palette.size()];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < s.points.size(); ++k) {
      out << (k ? " " : "") << f(xa.map(s.points[k].tokens_per_second)) << ','
          << f(ya.map(s.points[k].cost_per_million_tokens));
    }
    out << "\"/>\n";
    for (const auto& p : s.points) {
      out << "<circle cx=\"" << f(xa.map(p.tokens_per_second)) << "\" cy=\""
          << f(ya.map(p.cost_per_million_tokens)) << "\" r=\"2\" fill=\"" << color << "\"/>\n";
    }
    if (s.highlight) {
      out << "<circle cx=\"" << f(xa.map(s.highlight->tokens_per_second)) << "\" cy=\""
          << f(ya.map(s.highlight->cost_per_million_tokens)) << "\" r=\"6\" fill=\"none\" stroke=\""
          << color << "\" stroke-width=\"2\"/>\n";
    }
    const double ly = top + 10 + 20.0 * static_cast<double>(i);
    out << "<line x1=\"" << W - right + 12 << "\" y1=\"" << f(ly) << "\" x2=\"" << W - right + 36
        << "\" y2=\"" << f(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << W - right + 42 << "\" y=\"" << f(ly + 4) << "\">"
        << detail::xml_escape(s.label) << "</text>\n";
  }
  out << "</svg>\n";
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Writes <prefix>.csv, <prefix>.svg and <prefix>.json (frontiers plus the
/// manifest) and records the paths in the manifest.
inline void write_frontier_outputs(const std::string& prefix, const std::vector<Series>& series,
                                   const std::string& title, RunManifest& manifest) {
  const std::string csv = prefix + ".csv", svg = prefix + ".svg", js = prefix + ".json";
  manifest.outputs = {csv, js, svg};
  std::ostringstream c, s;
  write_csv(c, series);
  write_svg(s, series, title);
  write_text_file(csv, c.str());
  write_text_file(svg, s.str());
  json j;
  j["manifest"] = to_json(manifest);
  j["series"] = series_json(series);
  write_text_file(js, j.dump(2) + "\n");
}

}  // namespace infer_econ
