// SPDX-License-Identifier: Apache-2.0
//
// Cost model and discrete-event simulation of an execution plan.
//
// One DRAM channel serves tensors strictly in DRAM order; one compute engine
// runs tiles in sequence. Energies are in pJ, time in cycles.

#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "soma/notation.hpp"

namespace soma {

struct HardwareConfig {
  std::string name = "custom";
  std::int64_t parallel_k = 16;  // output-channel lanes
  std::int64_t parallel_c = 16;  // input-channel lanes
  double frequency_hz = 1e9;
  std::int64_t gbuf_bytes = 8 << 20;
  double dram_read_bytes_per_cycle = 16.0;
  double dram_write_bytes_per_cycle = 16.0;
  double e_mac = 0.2;            // pJ per MAC
  double e_dram_read = 8.0;      // pJ per byte
  double e_dram_write = 8.0;     // pJ per byte
  double e_gbuf_access = 0.5;    // pJ per byte

  std::int64_t peak_macs_per_cycle() const { return parallel_k * parallel_c; }
};

std::vector<std::string> validate_hardware(const HardwareConfig& hw);

inline constexpr std::int64_t kInfiniteLatency = std::numeric_limits<std::int64_t>::max();
inline constexpr double kInfiniteCost = std::numeric_limits<double>::infinity();

struct TileCost {
  std::int64_t cycles = 0;
  double energy = 0.0;      // compute + gbuf
  double mac_energy = 0.0;
  double gbuf_energy = 0.0;
};

TileCost tile_compute_model(const Layer& layer, const LayerTile& tile, const HardwareConfig& hw);
TileCost tile_compute_model(const ExecutionPlan& plan, int tile, const HardwareConfig& hw);

struct TensorCost {
  std::int64_t cycles = 0;
  double energy = 0.0;
};

TensorCost dram_tensor_model(const DramTensor& tensor, const HardwareConfig& hw);

enum class EventKind { compute, load, store };
std::string_view to_string(EventKind kind);

struct TimelineEvent {
  EventKind kind = EventKind::compute;
  int id = 0;  // tile index or DRAM tensor id
  std::string name;
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::int64_t bytes = 0;
  std::int64_t ops = 0;

  bool operator==(const TimelineEvent&) const = default;
};

struct EnergyBreakdown {
  double compute = 0.0;
  double dram = 0.0;
  double gbuf = 0.0;
  double total() const { return compute + dram + gbuf; }
  bool operator==(const EnergyBreakdown&) const = default;
};

struct EvalReport {
  bool valid = false;
  bool deadlock = false;
  bool over_budget = false;
  std::string invalid_reason;

  std::int64_t latency_cycles = kInfiniteLatency;
  std::int64_t simulated_latency_cycles = 0;  // filled even when over budget
  double energy_total = 0.0;
  EnergyBreakdown energy;

  std::int64_t budget_bytes = 0;
  std::int64_t peak_buffer_bytes = 0;
  double avg_buffer_bytes = 0.0;  // weighted by tile compute time
  std::vector<std::int64_t> buffer_occupancy;  // per tile

  std::int64_t network_ops = 0;
  std::int64_t total_compute_cycles = 0;
  std::int64_t total_dram_cycles = 0;
  std::int64_t lower_bound_cycles = 0;
  std::int64_t stall_cycles = 0;
  double compute_utilization = 0.0;  // network ops / (peak * latency)
  double compute_busy_ratio = 0.0;   // compute time / latency
  double dram_utilization = 0.0;     // DRAM time / latency
  double theoretical_max_utilization = 0.0;

  std::vector<TimelineEvent> timeline;  // tiles in sequence, then tensors in DRAM order
  std::vector<int> flg_first_tiles;
  std::vector<int> lg_first_tiles;
  int tile_count = 0;
  int tensor_count = 0;
};

struct SimulateOptions {
  bool record_timeline = true;
};

EvalReport simulate(const ExecutionPlan& plan, const HardwareConfig& hw, std::int64_t budget_bytes,
                    const SimulateOptions& options = {});

// Occupancy per tile: DRAM tensors alive at the tile plus on-chip fmaps.
std::vector<std::int64_t> buffer_timeline(const ExecutionPlan& plan);

std::int64_t latency_lower_bound(const ExecutionPlan& plan, const HardwareConfig& hw);

double cost(const EvalReport& report, double n, double m);

std::string serialize_report(const EvalReport& report);
EvalReport parse_report_json(std::string_view text);
std::string events_csv(const EvalReport& report);

inline constexpr std::string_view kEventsSchema = "soma.events.v1";

}  // namespace soma
