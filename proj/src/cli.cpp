// SPDX-License-Identifier: Apache-2.0

#include "soma/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

namespace soma {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Hardware

std::vector<std::string> hardware_preset_names() { return {"edge", "cloud"}; }

HardwareConfig hardware_preset(std::string_view name) {
  HardwareConfig hw;
  if (name == "edge") {
    // 128x64 MAC array at 1 GHz, 8 MiB buffer, 16 GB/s DRAM.
    hw.name = "edge";
    hw.parallel_k = 128;
    hw.parallel_c = 64;
    hw.gbuf_bytes = std::int64_t{8} << 20;
    hw.dram_read_bytes_per_cycle = 16.0;
    hw.dram_write_bytes_per_cycle = 16.0;
  } else if (name == "cloud") {
    hw.name = "cloud";
    hw.parallel_k = 256;
    hw.parallel_c = 256;
    hw.gbuf_bytes = std::int64_t{32} << 20;
    hw.dram_read_bytes_per_cycle = 128.0;
    hw.dram_write_bytes_per_cycle = 128.0;
  } else {
    throw std::invalid_argument("unknown hardware preset '" + std::string(name) +
                                "' (known: edge, cloud)");
  }
  return hw;
}

HardwareConfig parse_hardware_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("hardware: ") + e.what());
  }
  HardwareConfig hw;
  try {
    if (doc.contains("preset")) hw = hardware_preset(doc.at("preset").get<std::string>());
    hw.name = doc.value("name", hw.name);
    hw.parallel_k = doc.value("parallel_k", hw.parallel_k);
    hw.parallel_c = doc.value("parallel_c", hw.parallel_c);
    hw.frequency_hz = doc.value("frequency_hz", hw.frequency_hz);
    if (doc.contains("gbuf_bytes")) {
      const auto& v = doc.at("gbuf_bytes");
      hw.gbuf_bytes = v.is_string() ? parse_byte_size(v.get<std::string>()) : v.get<std::int64_t>();
    }
    hw.dram_read_bytes_per_cycle = doc.value("dram_read_bytes_per_cycle", hw.dram_read_bytes_per_cycle);
    hw.dram_write_bytes_per_cycle =
        doc.value("dram_write_bytes_per_cycle", hw.dram_write_bytes_per_cycle);
    hw.e_mac = doc.value("e_mac", hw.e_mac);
    hw.e_dram_read = doc.value("e_dram_read", hw.e_dram_read);
    hw.e_dram_write = doc.value("e_dram_write", hw.e_dram_write);
    hw.e_gbuf_access = doc.value("e_gbuf_access", hw.e_gbuf_access);
  } catch (const json::exception& e) {
    throw ParseError(std::string("hardware: ") + e.what());
  }
  if (auto v = validate_hardware(hw); !v.empty()) {
    throw ValidationError("hardware: " + v.front(), v);
  }
  return hw;
}

std::string serialize_hardware(const HardwareConfig& hw) {
  json doc = {{"name", hw.name},
              {"parallel_k", hw.parallel_k},
              {"parallel_c", hw.parallel_c},
              {"peak_macs_per_cycle", hw.peak_macs_per_cycle()},
              {"frequency_hz", hw.frequency_hz},
              {"gbuf_bytes", hw.gbuf_bytes},
              {"dram_read_bytes_per_cycle", hw.dram_read_bytes_per_cycle},
              {"dram_write_bytes_per_cycle", hw.dram_write_bytes_per_cycle},
              {"e_mac", hw.e_mac},
              {"e_dram_read", hw.e_dram_read},
              {"e_dram_write", hw.e_dram_write},
              {"e_gbuf_access", hw.e_gbuf_access}};
  return doc.dump(2) + "\n";
}

std::int64_t parse_byte_size(std::string_view text) {
  std::string s(text);
  s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }),
          s.end());
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(s, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("invalid size '" + std::string(text) + "'");
  }
  std::string unit = s.substr(used);
  std::transform(unit.begin(), unit.end(), unit.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  double scale = 1.0;
  if (unit.empty() || unit == "b") scale = 1.0;
  else if (unit == "kib" || unit == "k" || unit == "kb") scale = 1024.0;
  else if (unit == "mib" || unit == "m" || unit == "mb") scale = 1024.0 * 1024.0;
  else if (unit == "gib" || unit == "g" || unit == "gb") scale = 1024.0 * 1024.0 * 1024.0;
  else throw std::invalid_argument("unknown size unit in '" + std::string(text) + "'");
  if (!(value > 0)) throw std::invalid_argument("size must be positive: '" + std::string(text) + "'");
  return static_cast<std::int64_t>(std::llround(value * scale));
}

double gbps_to_bytes_per_cycle(double gbps, double frequency_hz) {
  return gbps * 1e9 / frequency_hz;
}

// ---------------------------------------------------------------------------
// Configuration

void apply_config_json(RunConfig& cfg, std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  try {
    cfg.model_path = doc.value("model", cfg.model_path);
    cfg.workload = doc.value("workload", cfg.workload);
    cfg.batch = doc.value("batch", cfg.batch);
    cfg.hw_path = doc.value("hw", cfg.hw_path);
    cfg.preset = doc.value("preset", cfg.preset);
    if (doc.contains("gbuf")) {
      const auto& v = doc.at("gbuf");
      cfg.gbuf_override = v.is_string() ? parse_byte_size(v.get<std::string>()) : v.get<std::int64_t>();
    }
    cfg.sa.seed = doc.value("seed", cfg.sa.seed);
    cfg.out_dir = doc.value("out", cfg.out_dir);
    cfg.log_search = doc.value("log_search", cfg.log_search);
    cfg.jobs = doc.value("jobs", cfg.jobs);
    if (doc.contains("objective")) {
      const auto& o = doc.at("objective");
      cfg.alloc.objective.n = o.value("n", cfg.alloc.objective.n);
      cfg.alloc.objective.m = o.value("m", cfg.alloc.objective.m);
    }
    if (doc.contains("sa")) {
      const auto& s = doc.at("sa");
      cfg.sa.t0 = s.value("t0", cfg.sa.t0);
      cfg.sa.alpha = s.value("alpha", cfg.sa.alpha);
      cfg.sa.lfa_beta = s.value("lfa_beta", cfg.sa.lfa_beta);
      cfg.sa.dlsa_beta = s.value("dlsa_beta", cfg.sa.dlsa_beta);
      cfg.sa.post_limit_iters = s.value("post_limit_iters", cfg.sa.post_limit_iters);
      if (s.contains("wall_clock_seconds")) {
        cfg.sa.wall_clock_limit =
            std::chrono::duration<double>(s.at("wall_clock_seconds").get<double>());
      }
    }
    if (doc.contains("allocator")) {
      const auto& a = doc.at("allocator");
      cfg.alloc.shrink = a.value("shrink", cfg.alloc.shrink);
      cfg.alloc.stop_after_non_improving =
          a.value("stop_after_non_improving", cfg.alloc.stop_after_non_improving);
    }
    if (doc.contains("baseline")) {
      cfg.baseline.tile_cycle_quantum =
          doc.at("baseline").value("tile_cycle_quantum", cfg.baseline.tile_cycle_quantum);
    }
    if (doc.contains("bandwidths")) {
      cfg.bandwidths_gbps = doc.at("bandwidths").get<std::vector<double>>();
    }
    if (doc.contains("buffers")) {
      cfg.buffers.clear();
      for (const auto& v : doc.at("buffers")) {
        cfg.buffers.push_back(v.is_string() ? parse_byte_size(v.get<std::string>())
                                            : v.get<std::int64_t>());
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
}

std::vector<std::string> validate_run_config(const RunConfig& cfg) {
  std::vector<std::string> out;
  if (cfg.model_path.empty() && cfg.workload.empty()) {
    out.emplace_back("no model given (use --model or --workload)");
  }
  if (!cfg.model_path.empty() && !fs::exists(cfg.model_path)) {
    out.push_back("model file not found: " + cfg.model_path);
  }
  if (!cfg.hw_path.empty() && !fs::exists(cfg.hw_path)) {
    out.push_back("hardware file not found: " + cfg.hw_path);
  }
  if (!cfg.encoding_path.empty() && !fs::exists(cfg.encoding_path)) {
    out.push_back("encoding file not found: " + cfg.encoding_path);
  }
  if (cfg.batch < 1) out.emplace_back("batch must be >= 1");
  if (cfg.alloc.objective.n < 0 || cfg.alloc.objective.m < 0) {
    out.emplace_back("objective exponents must be >= 0");
  }
  if (!(cfg.alloc.shrink > 0 && cfg.alloc.shrink < 1)) out.emplace_back("shrink must be in (0, 1)");
  if (cfg.alloc.stop_after_non_improving < 1) {
    out.emplace_back("stop_after_non_improving must be >= 1");
  }
  for (auto& v : validate_sa_params(cfg.sa)) out.push_back(std::move(v));
  return out;
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string format_double(double v, int precision = 6) {
  if (std::isinf(v)) return "inf";
  std::ostringstream ss;
  ss << std::setprecision(precision) << v;
  return ss.str();
}

}  // namespace

ModelGraph load_model(const RunConfig& cfg) {
  if (!cfg.model_path.empty()) return parse_model_file(cfg.model_path);
  return builtin_workload(cfg.workload, cfg.batch);
}

HardwareConfig load_hardware(const RunConfig& cfg) {
  HardwareConfig hw =
      cfg.hw_path.empty() ? hardware_preset(cfg.preset) : parse_hardware_json(read_file(cfg.hw_path));
  if (cfg.gbuf_override) hw.gbuf_bytes = *cfg.gbuf_override;
  return hw;
}

// ---------------------------------------------------------------------------
// schedule

ScheduleResult run_schedule(const ModelGraph& graph, const HardwareConfig& hw,
                            const RunConfig& cfg) {
  SAParams sa = cfg.sa;
  sa.record_log = cfg.log_search;
  if (!cfg.encoding_path.empty()) {
    const auto enc = parse_encoding_json(read_file(cfg.encoding_path));
    if (auto v = validate_encoding(graph, enc); !v.empty()) {
      throw ValidationError("invalid encoding: " + v.front(), v);
    }
    SearchState s;
    s.graph = std::make_shared<const ModelGraph>(graph);
    s.budget_bytes = hw.gbuf_bytes;
    s.best_plan = s.current_plan = parse_encoding(graph, enc);
    s.best = s.current = s.best_plan.encoding();
    s.best_report = simulate(s.best_plan, hw, hw.gbuf_bytes);
    s.best_cost = s.current_cost = cost(s.best_report, cfg.alloc.objective.n, cfg.alloc.objective.m);
    s.buffer_max = s.best_report.peak_buffer_bytes;
    return {std::move(s), "encoding"};
  }
  if (cfg.use_baseline) {
    return {baseline_schedule(graph, hw, sa, cfg.alloc.objective, cfg.baseline), "baseline"};
  }
  return {buffer_allocator_loop(graph, hw, cfg.alloc, sa), "soma"};
}

std::string schedule_summary(const ScheduleResult& r, const HardwareConfig& hw) {
  const auto& rep = r.state.best_report;
  std::ostringstream s;
  s << "mode: " << r.mode << "\n";
  s << "hardware: " << hw.name << " (" << hw.peak_macs_per_cycle() << " MAC/cycle, "
    << hw.gbuf_bytes << " B buffer)\n";
  s << "valid: " << (rep.valid ? "yes" : "no");
  if (!rep.valid) s << " (" << rep.invalid_reason << ")";
  s << "\n";
  s << "cost: " << format_double(r.state.best_cost, 10) << "\n";
  s << "latency_cycles: "
    << (rep.valid ? std::to_string(rep.latency_cycles) : std::string("inf")) << "\n";
  s << "energy_pj: " << format_double(rep.energy_total, 10) << " (compute "
    << format_double(rep.energy.compute) << ", dram " << format_double(rep.energy.dram)
    << ", gbuf " << format_double(rep.energy.gbuf) << ")\n";
  s << "peak_buffer_bytes: " << rep.peak_buffer_bytes << "\n";
  s << "avg_buffer_bytes: " << format_double(rep.avg_buffer_bytes, 10) << "\n";
  s << "compute_utilization: " << format_double(rep.compute_utilization) << "\n";
  s << "dram_utilization: " << format_double(rep.dram_utilization) << "\n";
  s << "theoretical_max_utilization: " << format_double(rep.theoretical_max_utilization) << "\n";
  s << "lower_bound_cycles: " << rep.lower_bound_cycles << "\n";
  if (rep.valid && rep.lower_bound_cycles > 0) {
    const double gap = static_cast<double>(rep.latency_cycles - rep.lower_bound_cycles) /
                       static_cast<double>(rep.lower_bound_cycles);
    s << "gap_to_lower_bound: " << format_double(gap * 100.0, 4) << "%\n";
  }
  s << "fused_groups: " << r.state.best.flg_count()
    << ", layer_fusion_groups: " << r.state.best.dram_cut_set.size() + 1
    << ", tiles: " << rep.tile_count << ", dram_tensors: " << rep.tensor_count << "\n";
  s << "search_iterations: " << r.state.iterations << ", evaluations: " << r.state.evaluations
    << ", outer_iterations: " << r.state.outer_iterations << "\n";
  return s.str();
}

int cmd_schedule(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (auto v = validate_run_config(cfg); !v.empty()) {
    for (const auto& msg : v) err << "error: " << msg << "\n";
    return 2;
  }
  try {
    const auto graph = load_model(cfg);
    const auto hw = load_hardware(cfg);
    const auto result = run_schedule(graph, hw, cfg);
    fs::create_directories(cfg.out_dir);
    const fs::path dir(cfg.out_dir);
    write_file(dir / "report.json", serialize_report(result.state.best_report));
    write_file(dir / "encoding.json", serialize_encoding(result.state.best));
    write_file(dir / "events.csv", events_csv(result.state.best_report));
    write_file(dir / "hardware.json", serialize_hardware(hw));
    if (cfg.log_search) write_file(dir / "search_log.csv", search_log_csv(result.state.log));
    const auto summary = schedule_summary(result, hw);
    write_file(dir / "summary.txt", summary);
    out << summary;
    if (!result.state.feasible()) {
      err << "error: no valid schedule found within the buffer budget\n";
      return 1;
    }
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

// ---------------------------------------------------------------------------
// dse

std::vector<DseRow> run_dse(const ModelGraph& graph, const HardwareConfig& base,
                            const RunConfig& cfg) {
  struct Point {
    double gbps;
    std::int64_t buffer;
    bool baseline;
  };
  std::vector<Point> points;
  for (auto buffer : cfg.buffers) {
    for (double gbps : cfg.bandwidths_gbps) {
      points.push_back({gbps, buffer, false});
      if (cfg.dse_baseline) points.push_back({gbps, buffer, true});
    }
  }
  auto hw_for = [&](double gbps, std::int64_t buffer) {
    HardwareConfig hw = base;
    hw.dram_read_bytes_per_cycle = gbps_to_bytes_per_cycle(gbps, hw.frequency_hz);
    hw.dram_write_bytes_per_cycle = hw.dram_read_bytes_per_cycle;
    hw.gbuf_bytes = buffer;
    return hw;
  };
  auto fill = [](DseRow& row, const EvalReport& rep, double c) {
    row.valid = rep.valid;
    row.latency_cycles = rep.valid ? rep.latency_cycles : 0;
    row.energy_pj = rep.energy_total;
    row.cost = c;
    row.peak_buffer_bytes = rep.peak_buffer_bytes;
    row.lower_bound_cycles = rep.lower_bound_cycles;
    row.compute_utilization = rep.compute_utilization;
    if (!rep.valid) row.error = rep.invalid_reason;
  };

  std::vector<DseRow> rows(points.size());
  std::vector<ExecutionPlan> plans(points.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      const auto& p = points[i];
      auto& row = rows[i];
      row.mode = p.baseline ? "baseline" : "soma";
      row.bandwidth_gbps = p.gbps;
      row.buffer_bytes = p.buffer;
      try {
        const auto hw = hw_for(p.gbps, p.buffer);
        row.bandwidth_bytes_per_cycle = hw.dram_read_bytes_per_cycle;
        RunConfig local = cfg;
        local.use_baseline = p.baseline;
        local.log_search = false;
        const auto r = run_schedule(graph, hw, local);
        fill(row, r.state.best_report, r.state.best_cost);
        plans[i] = r.state.best_plan;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
    }
  };
  unsigned jobs = cfg.jobs > 0 ? static_cast<unsigned>(cfg.jobs)
                               : std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(1, points.size())));
  std::vector<std::thread> pool;
  for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  // Fixed-plan rows: the plan found at each buffer's first bandwidth,
  // re-simulated across the bandwidth axis.
  for (auto buffer : cfg.buffers) {
    std::size_t ref = points.size();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!points[i].baseline && points[i].buffer == buffer) {
        ref = i;
        break;
      }
    }
    for (double gbps : cfg.bandwidths_gbps) {
      DseRow row;
      row.mode = "fixed_plan";
      row.bandwidth_gbps = gbps;
      row.buffer_bytes = buffer;
      const auto hw = hw_for(gbps, buffer);
      row.bandwidth_bytes_per_cycle = hw.dram_read_bytes_per_cycle;
      if (ref == points.size() || !rows[ref].valid) {
        row.error = "no valid reference plan";
      } else {
        const auto rep = simulate(plans[ref], hw, buffer, {.record_timeline = false});
        fill(row, rep, cost(rep, cfg.alloc.objective.n, cfg.alloc.objective.m));
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string dse_csv(const std::vector<DseRow>& rows) {
  std::ostringstream out;
  out << kDseSchema
      << ",mode,bandwidth_gbps,bandwidth_bytes_per_cycle,buffer_bytes,valid,latency_cycles,"
         "energy_pj,cost,peak_buffer_bytes,lower_bound_cycles,compute_utilization,error\n";
  std::size_t i = 0;
  for (const auto& r : rows) {
    std::string error = r.error;
    std::replace(error.begin(), error.end(), ',', ';');
    out << i++ << ',' << r.mode << ',' << format_double(r.bandwidth_gbps, 10) << ','
        << format_double(r.bandwidth_bytes_per_cycle, 10) << ',' << r.buffer_bytes << ','
        << (r.valid ? 1 : 0) << ',' << (r.valid ? std::to_string(r.latency_cycles) : "inf") << ','
        << format_double(r.energy_pj, 12) << ',' << format_double(r.cost, 12) << ','
        << r.peak_buffer_bytes << ',' << r.lower_bound_cycles << ','
        << format_double(r.compute_utilization, 8) << ',' << error << '\n';
  }
  return out.str();
}

int cmd_dse(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  auto issues = validate_run_config(cfg);
  if (cfg.bandwidths_gbps.empty()) issues.emplace_back("--bandwidths is empty");
  if (cfg.buffers.empty()) issues.emplace_back("--buffers is empty");
  if (!issues.empty()) {
    for (const auto& msg : issues) err << "error: " << msg << "\n";
    return 2;
  }
  try {
    const auto graph = load_model(cfg);
    const auto hw = load_hardware(cfg);
    const auto rows = run_dse(graph, hw, cfg);
    fs::create_directories(cfg.out_dir);
    write_file(fs::path(cfg.out_dir) / "dse.csv", dse_csv(rows));
    std::size_t ok = 0, searched = 0;
    for (const auto& r : rows) {
      if (r.mode == "fixed_plan") continue;
      ++searched;
      if (r.valid) ++ok;
    }
    out << "dse: " << ok << "/" << searched << " points scheduled, " << rows.size()
        << " rows written to " << (fs::path(cfg.out_dir) / "dse.csv").string() << "\n";
    return ok == 0 ? 1 : 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

// ---------------------------------------------------------------------------
// trace

TraceFormat parse_trace_format(std::string_view text) {
  if (text == "csv") return TraceFormat::csv;
  if (text == "gantt_svg" || text == "svg") return TraceFormat::gantt_svg;
  throw std::invalid_argument("unknown trace format '" + std::string(text) +
                              "' (known: csv, gantt_svg)");
}

std::string gantt_svg(const EvalReport& report) {
  constexpr double kWidth = 1200.0;
  constexpr double kLeft = 90.0;
  constexpr double kLaneH = 28.0;
  constexpr double kDramY = 30.0;
  constexpr double kComputeY = 80.0;
  constexpr double kBufTop = 130.0;
  constexpr double kBufH = 120.0;
  std::int64_t span = 1;
  for (const auto& e : report.timeline) span = std::max(span, e.end);
  const double scale = (kWidth - kLeft - 10.0) / static_cast<double>(span);
  auto x = [&](std::int64_t t) { return kLeft + static_cast<double>(t) * scale; };
  auto esc = [](const std::string& s) {
    std::string o;
    for (char c : s) {
      if (c == '<') o += "&lt;";
      else if (c == '>') o += "&gt;";
      else if (c == '&') o += "&amp;";
      else if (c == '"') o += "&quot;";
      else o += c;
    }
    return o;
  };
  std::ostringstream s;
  s << std::fixed << std::setprecision(3);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
    << kBufTop + kBufH + 40 << "\" data-span=\"" << span << "\">\n";
  s << "<style>text{font:11px sans-serif}.load{fill:#4c78a8}.store{fill:#f58518}"
       ".compute{fill:#54a24b}.flc-marker{stroke:#888;stroke-dasharray:4 3}"
       ".dram-cut-marker{stroke:#d62728;stroke-width:1.5}</style>\n";
  s << "<text x=\"4\" y=\"" << kDramY + 18 << "\">DRAM</text>\n";
  s << "<text x=\"4\" y=\"" << kComputeY + 18 << "\">COMPUTE</text>\n";
  s << "<text x=\"4\" y=\"" << kBufTop + 18 << "\">BUFFER</text>\n";

  std::vector<const TimelineEvent*> tiles(static_cast<std::size_t>(report.tile_count), nullptr);
  for (const auto& e : report.timeline) {
    const double y = e.kind == EventKind::compute ? kComputeY : kDramY;
    s << "<rect class=\"" << to_string(e.kind) << "\" data-kind=\"" << to_string(e.kind)
      << "\" data-id=\"" << e.id << "\" data-name=\"" << esc(e.name) << "\" data-start=\""
      << e.start << "\" data-end=\"" << e.end << "\" x=\"" << x(e.start) << "\" y=\"" << y
      << "\" width=\"" << std::max(0.0, x(e.end) - x(e.start)) << "\" height=\"" << kLaneH
      << "\"><title>" << esc(e.name) << " [" << e.start << ", " << e.end << ")</title></rect>\n";
    if (e.kind == EventKind::compute && e.id >= 0 && e.id < report.tile_count) {
      tiles[static_cast<std::size_t>(e.id)] = &e;
    }
  }

  auto marker = [&](const char* cls, int tile) {
    if (tile < 0 || tile >= report.tile_count || !tiles[static_cast<std::size_t>(tile)]) return;
    const double mx = x(tiles[static_cast<std::size_t>(tile)]->start);
    s << "<line class=\"" << cls << "\" data-tile=\"" << tile << "\" x1=\"" << mx << "\" y1=\""
      << kDramY - 6 << "\" x2=\"" << mx << "\" y2=\"" << kBufTop + kBufH << "\"/>\n";
  };
  for (std::size_t i = 1; i < report.flg_first_tiles.size(); ++i) {
    const int t = report.flg_first_tiles[i];
    const bool lg = std::find(report.lg_first_tiles.begin(), report.lg_first_tiles.end(), t) !=
                    report.lg_first_tiles.end();
    marker(lg ? "dram-cut-marker" : "flc-marker", t);
  }

  std::int64_t peak = std::max<std::int64_t>(1, std::max(report.peak_buffer_bytes, report.budget_bytes));
  auto by = [&](std::int64_t b) {
    return kBufTop + kBufH - static_cast<double>(b) / static_cast<double>(peak) * kBufH;
  };
  s << "<polyline class=\"buffer\" fill=\"none\" stroke=\"#72b7b2\" stroke-width=\"1.5\" points=\"";
  for (int t = 0; t < report.tile_count && static_cast<std::size_t>(t) < report.buffer_occupancy.size(); ++t) {
    const auto* ev = tiles[static_cast<std::size_t>(t)];
    if (!ev) break;
    const double yb = by(report.buffer_occupancy[static_cast<std::size_t>(t)]);
    s << x(ev->start) << ',' << yb << ' ' << x(ev->end) << ',' << yb << ' ';
  }
  s << "\"/>\n";
  if (report.budget_bytes > 0) {
    s << "<line class=\"budget\" stroke=\"#e45756\" stroke-dasharray=\"2 2\" x1=\"" << kLeft
      << "\" y1=\"" << by(report.budget_bytes) << "\" x2=\"" << kWidth - 10 << "\" y2=\""
      << by(report.budget_bytes) << "\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

int cmd_trace_export(const std::string& report_path, TraceFormat format,
                     const std::string& out_path, std::ostream& out, std::ostream& err) {
  EvalReport report;
  try {
    report = parse_report_json(read_file(report_path));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  const std::string text = format == TraceFormat::csv ? events_csv(report) : gantt_svg(report);
  if (out_path.empty()) {
    out << text;
    return 0;
  }
  try {
    write_file(out_path, text);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Argument handling

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Flags {
  std::string config;
  std::string model, workload, hw, preset, gbuf, out, bandwidths, buffers;
  std::int64_t batch = 1;
  std::uint64_t seed = 1;
  double n = 1, m = 1, t0 = 0.5, alpha = 2.0, lfa_beta = 100, dlsa_beta = 1000;
  double wall_clock = 0;
  std::int64_t post_limit = 1000;
  double shrink = 0.1;
  int stop_after = 2;
  std::int64_t quantum = 4096;
  int jobs = 0;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file");
  cmd->add_option("--model", f.model, "workload JSON file");
  cmd->add_option("--workload", f.workload, "builtin workload (toy5, resnet_block_chain, transformer_block)");
  cmd->add_option("--batch", f.batch, "batch size for builtin workloads");
  cmd->add_option("--hw", f.hw, "hardware JSON file");
  cmd->add_option("--preset", f.preset, "hardware preset (edge, cloud)");
  cmd->add_option("--gbuf", f.gbuf, "override buffer capacity, e.g. 8MiB");
  cmd->add_option("--seed", f.seed, "RNG seed (SOMA_SEED overrides)");
  cmd->add_option("--n", f.n, "energy exponent");
  cmd->add_option("--m", f.m, "delay exponent");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--t0", f.t0, "initial temperature");
  cmd->add_option("--alpha", f.alpha, "cooling rate");
  cmd->add_option("--lfa-beta", f.lfa_beta, "stage-1 iterations per layer");
  cmd->add_option("--dlsa-beta", f.dlsa_beta, "stage-2 iterations per DRAM tensor");
  cmd->add_option("--time-limit", f.wall_clock, "wall-clock limit per search stage, seconds");
  cmd->add_option("--post-limit-iters", f.post_limit, "greedy iterations after the time limit");
  cmd->add_option("--shrink", f.shrink, "buffer limit reduction per allocator iteration");
  cmd->add_option("--stop-after", f.stop_after, "non-improving allocator iterations before stopping");
  cmd->add_option("--tile-quantum", f.quantum, "baseline target cycles per tile");
}

RunConfig build_config(CLI::App* cmd, const Flags& f) {
  RunConfig cfg;
  if (!f.config.empty()) apply_config_json(cfg, read_file(f.config));
  auto given = [&](const char* name) {
    const auto* opt = cmd->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  if (given("--model")) cfg.model_path = f.model;
  if (given("--workload")) cfg.workload = f.workload;
  if (given("--batch")) cfg.batch = f.batch;
  if (given("--hw")) cfg.hw_path = f.hw;
  if (given("--preset")) cfg.preset = f.preset;
  if (given("--gbuf")) cfg.gbuf_override = parse_byte_size(f.gbuf);
  if (given("--seed")) cfg.sa.seed = f.seed;
  if (given("--n")) cfg.alloc.objective.n = f.n;
  if (given("--m")) cfg.alloc.objective.m = f.m;
  if (given("--out")) cfg.out_dir = f.out;
  if (given("--t0")) cfg.sa.t0 = f.t0;
  if (given("--alpha")) cfg.sa.alpha = f.alpha;
  if (given("--lfa-beta")) cfg.sa.lfa_beta = f.lfa_beta;
  if (given("--dlsa-beta")) cfg.sa.dlsa_beta = f.dlsa_beta;
  if (given("--time-limit")) cfg.sa.wall_clock_limit = std::chrono::duration<double>(f.wall_clock);
  if (given("--post-limit-iters")) cfg.sa.post_limit_iters = f.post_limit;
  if (given("--shrink")) cfg.alloc.shrink = f.shrink;
  if (given("--stop-after")) cfg.alloc.stop_after_non_improving = f.stop_after;
  if (given("--tile-quantum")) cfg.baseline.tile_cycle_quantum = f.quantum;
  if (given("--bandwidths")) {
    cfg.bandwidths_gbps.clear();
    for (const auto& v : split_list(f.bandwidths)) cfg.bandwidths_gbps.push_back(std::stod(v));
  }
  if (given("--buffers")) {
    cfg.buffers.clear();
    for (const auto& v : split_list(f.buffers)) cfg.buffers.push_back(parse_byte_size(v));
  }
  if (given("--jobs")) cfg.jobs = f.jobs;
  if (const char* env = std::getenv("SOMA_SEED"); env && *env) {
    cfg.sa.seed = std::stoull(env);
  }
  return cfg;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"soma: layer-fusion and DRAM-timing scheduler for DNN accelerators"};
  app.require_subcommand(1);
  Flags f;

  auto* schedule = app.add_subcommand("schedule", "search a schedule (buffer allocator + two-stage SA)");
  add_common(schedule, f);
  bool baseline_flag = false;
  bool log_search = false;
  schedule->add_flag("--baseline", baseline_flag, "run the fusion-only baseline instead");
  schedule->add_flag("--log-search", log_search, "write search_log.csv");
  std::string encoding_path;
  schedule->add_option("--encoding", encoding_path, "evaluate this encoding.json instead of searching");

  auto* baseline = app.add_subcommand("baseline", "run the fusion-only baseline scheduler");
  add_common(baseline, f);
  baseline->add_flag("--log-search", log_search, "write search_log.csv");

  auto* dse = app.add_subcommand("dse", "sweep DRAM bandwidth x buffer size");
  add_common(dse, f);
  dse->add_option("--bandwidths", f.bandwidths, "comma list of GB/s values")->required();
  dse->add_option("--buffers", f.buffers, "comma list of sizes, e.g. 4MiB,8MiB")->required();
  bool dse_baseline = false;
  dse->add_flag("--with-baseline", dse_baseline, "add baseline rows");
  dse->add_option("--jobs", f.jobs, "worker threads (0: hardware threads)");

  auto* trace = app.add_subcommand("trace", "export a report timeline");
  std::string report_path, format = "csv", trace_out;
  trace->add_option("--report", report_path, "report.json from schedule")->required();
  trace->add_option("--format", format, "csv or gantt_svg");
  trace->add_option("--out", trace_out, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (trace->parsed()) {
      return cmd_trace_export(report_path, parse_trace_format(format), trace_out, out, err);
    }
    CLI::App* cmd = schedule->parsed() ? schedule : baseline->parsed() ? baseline : dse;
    RunConfig cfg = build_config(cmd, f);
    if (cmd == dse) {
      cfg.dse_baseline = dse_baseline;
      return cmd_dse(cfg, out, err);
    }
    cfg.use_baseline = baseline_flag || cmd == baseline;
    if (cmd == schedule) cfg.encoding_path = encoding_path;
    cfg.log_search = cfg.log_search || log_search;
    return cmd_schedule(cfg, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace soma
