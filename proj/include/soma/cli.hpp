// SPDX-License-Identifier: Apache-2.0
//
// Command layer behind the `soma` executable: configuration, scheduling runs,
// design-space sweeps and trace export.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "soma/evaluator.hpp"
#include "soma/explorer.hpp"
#include "soma/model.hpp"

namespace soma {

std::vector<std::string> hardware_preset_names();
// Throws std::invalid_argument listing the known presets.
HardwareConfig hardware_preset(std::string_view name);

// Keys mirror HardwareConfig; "preset" picks the base values.
HardwareConfig parse_hardware_json(std::string_view text);
std::string serialize_hardware(const HardwareConfig& hw);

// "8MiB", "512KiB", "1GiB" or a plain byte count.
std::int64_t parse_byte_size(std::string_view text);
// GB/s (1e9 bytes per second) to bytes per cycle at the given clock.
double gbps_to_bytes_per_cycle(double gbps, double frequency_hz);

struct RunConfig {
  std::string model_path;
  std::string workload;  // builtin name when no model file is given
  std::int64_t batch = 1;
  std::string hw_path;
  std::string preset = "edge";
  std::optional<std::int64_t> gbuf_override;

  SAParams sa;
  AllocatorParams alloc;
  BaselineParams baseline;

  std::string out_dir = "soma_out";
  bool log_search = false;
  bool use_baseline = false;
  std::string encoding_path;  // evaluate this encoding instead of searching

  std::vector<double> bandwidths_gbps;
  std::vector<std::int64_t> buffers;
  bool dse_baseline = false;
  int jobs = 0;  // 0: one worker per hardware thread

  std::string report_path;
  std::string format = "csv";
  std::string trace_out;
};

// Applies a JSON config document on top of cfg.
void apply_config_json(RunConfig& cfg, std::string_view text);
std::vector<std::string> validate_run_config(const RunConfig& cfg);

ModelGraph load_model(const RunConfig& cfg);
HardwareConfig load_hardware(const RunConfig& cfg);

struct ScheduleResult {
  SearchState state;
  std::string mode;  // "soma", "baseline" or "encoding"
};
ScheduleResult run_schedule(const ModelGraph& graph, const HardwareConfig& hw,
                            const RunConfig& cfg);
std::string schedule_summary(const ScheduleResult& r, const HardwareConfig& hw);

int cmd_schedule(const RunConfig& cfg, std::ostream& out, std::ostream& err);

struct DseRow {
  std::string mode;  // soma, baseline, fixed_plan
  double bandwidth_gbps = 0.0;
  double bandwidth_bytes_per_cycle = 0.0;
  std::int64_t buffer_bytes = 0;
  bool valid = false;
  std::int64_t latency_cycles = 0;
  double energy_pj = 0.0;
  double cost = kInfiniteCost;
  std::int64_t peak_buffer_bytes = 0;
  std::int64_t lower_bound_cycles = 0;
  double compute_utilization = 0.0;
  std::string error;
};

std::vector<DseRow> run_dse(const ModelGraph& graph, const HardwareConfig& base,
                            const RunConfig& cfg);
std::string dse_csv(const std::vector<DseRow>& rows);
int cmd_dse(const RunConfig& cfg, std::ostream& out, std::ostream& err);

enum class TraceFormat { csv, gantt_svg };
TraceFormat parse_trace_format(std::string_view text);
std::string gantt_svg(const EvalReport& report);
int cmd_trace_export(const std::string& report_path, TraceFormat format,
                     const std::string& out_path, std::ostream& out, std::ostream& err);

inline constexpr std::string_view kDseSchema = "soma.dse.v1";

// Full argument handling; returns the process exit status.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace soma
