// SPDX-License-Identifier: Apache-2.0
//
// Two-stage simulated-annealing search over schedule encodings, the buffer
// allocation outer loop, and a fusion-only baseline scheduler.

#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "soma/evaluator.hpp"
#include "soma/notation.hpp"

namespace soma {

using Rng = std::mt19937_64;

struct Objective {
  double n = 1.0;  // energy exponent
  double m = 1.0;  // delay exponent
};

struct SAParams {
  double t0 = 0.5;
  double alpha = 2.0;
  double lfa_beta = 100.0;    // stage-1 iterations per layer
  double dlsa_beta = 1000.0;  // stage-2 iterations per DRAM tensor
  std::optional<std::chrono::duration<double>> wall_clock_limit;
  std::int64_t post_limit_iters = 1000;  // greedy iterations after the wall clock runs out
  std::uint64_t seed = 1;
  bool record_log = false;  // keep one EvalLogEntry per iteration
};

std::vector<std::string> validate_sa_params(const SAParams& p);

struct AllocatorParams {
  double shrink = 0.10;            // fraction of Buffer_max removed per iteration
  int stop_after_non_improving = 2;
  Objective objective;
};

struct BaselineParams {
  // Target compute cycles per tile for the fixed tiling heuristic.
  std::int64_t tile_cycle_quantum = 4096;
};

enum class SearchStage { stage1, stage2, baseline };
std::string_view to_string(SearchStage stage);

struct EvalLogEntry {
  SearchStage stage = SearchStage::stage1;
  int outer_iteration = 1;
  std::int64_t iteration = 0;
  std::string move;
  double temperature = 0.0;
  double cost = kInfiniteCost;
  bool accepted = false;
  double best_cost = kInfiniteCost;
};

struct SearchState {
  std::shared_ptr<const ModelGraph> graph;
  ScheduleEncoding current;
  ExecutionPlan current_plan;
  double current_cost = kInfiniteCost;

  ScheduleEncoding best;
  ExecutionPlan best_plan;
  EvalReport best_report;
  double best_cost = kInfiniteCost;

  std::int64_t buffer_max = 0;  // peak buffer of the best scheme
  std::int64_t budget_bytes = 0;
  std::int64_t iterations = 0;
  std::int64_t evaluations = 0;
  int outer_iterations = 0;
  std::vector<EvalLogEntry> log;

  bool feasible() const { return best_cost < kInfiniteCost; }
};

double sa_temperature(std::int64_t n, std::int64_t total, double t0, double alpha);
bool sa_accept(double cost, double candidate, double temperature, Rng& rng);

// One candidate evaluation: simulate without a timeline and apply the objective.
struct Evaluation {
  EvalReport report;
  double cost = kInfiniteCost;
};
Evaluation evaluate_plan(const ExecutionPlan& plan, const HardwareConfig& hw,
                         std::int64_t budget_bytes, const Objective& obj);

enum class LfaMoveKind { order, tiling, flc, dram_cut };
std::string_view to_string(LfaMoveKind kind);

struct LfaMove {
  ScheduleEncoding encoding;
  bool noop = false;
  std::string description;
};

bool lfa_move_applicable(const ModelGraph& graph, const ScheduleEncoding& enc, LfaMoveKind kind);
LfaMove propose_lfa_move(const ModelGraph& graph, const ScheduleEncoding& enc, LfaMoveKind kind,
                         Rng& rng);

// Tiling inherited by two merged fused groups; layer-count weighted.
std::int64_t merged_tiling(std::int64_t left_tiling, std::size_t left_layers,
                           std::int64_t right_tiling, std::size_t right_layers, Rng& rng);

// Tiling of one fused group doubled or halved; nullopt when out of bounds.
std::optional<ScheduleEncoding> change_tiling(const ModelGraph& graph, const ScheduleEncoding& enc,
                                              std::size_t group, bool multiply);

// Halves each group's tiling until its geometry is feasible.
void repair_tilings(const ModelGraph& graph, ScheduleEncoding& enc);

enum class DlsaMoveKind { order, duration };
std::string_view to_string(DlsaMoveKind kind);

struct DlsaMove {
  ExecutionPlan plan;
  bool noop = false;
  int tensor = -1;
  std::string description;
};

// Tensor picked with probability proportional to bytes.
int pick_tensor(const ExecutionPlan& plan, Rng& rng);
DlsaMove propose_dlsa_move(const ExecutionPlan& plan, DlsaMoveKind kind, Rng& rng);
DlsaMove propose_dlsa_move(const ExecutionPlan& plan, DlsaMoveKind kind, int tensor, Rng& rng);

SearchState stage1_explore(std::shared_ptr<const ModelGraph> graph, const HardwareConfig& hw,
                           std::int64_t budget_bytes, const SAParams& sa, const Objective& obj,
                           Rng& rng);
SearchState stage1_explore(const ModelGraph& graph, const HardwareConfig& hw,
                           std::int64_t budget_bytes, const SAParams& sa,
                           const Objective& obj = {});

// Keeps the layer-fusion attributes of state.best; searches DRAM attributes only.
SearchState stage2_explore(const SearchState& state, const HardwareConfig& hw,
                           std::int64_t budget_bytes, const SAParams& sa, const Objective& obj,
                           Rng& rng);
SearchState stage2_explore(const SearchState& state, const HardwareConfig& hw,
                           std::int64_t budget_bytes, const SAParams& sa,
                           const Objective& obj = {});

// Stage-1 buffer limit for outer iteration k (1-based).
std::int64_t stage1_limit(std::int64_t buffer_max, int k, double shrink);

SearchState buffer_allocator_loop(const ModelGraph& graph, const HardwareConfig& hw,
                                  const AllocatorParams& alloc, const SAParams& sa);

// Fixed per-group tiling from compute parallelism alone.
std::int64_t baseline_tiling(const ModelGraph& graph, const std::vector<int>& group,
                             const HardwareConfig& hw, const BaselineParams& params);

SearchState baseline_schedule(const ModelGraph& graph, const HardwareConfig& hw,
                              const SAParams& sa, const Objective& obj = {},
                              const BaselineParams& params = {});

std::string search_log_csv(const std::vector<EvalLogEntry>& log);

inline constexpr std::string_view kSearchLogSchema = "soma.search_log.v1";

}  // namespace soma
