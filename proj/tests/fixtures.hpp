// SPDX-License-Identifier: Apache-2.0
//
// Shared test fixtures: small hardware, the hand-scheduled toy5 plan, and
// random valid-plan generators.

#pragma once

#include <memory>
#include <random>
#include <stdexcept>
#include <string>

#include "soma/evaluator.hpp"
#include "soma/explorer.hpp"
#include "soma/notation.hpp"

namespace soma::testing {

// 16x8 MAC array, 16 B/cycle each way, 8 MiB buffer. Narrow enough that
// I_C2 of the hand plan starts while E1 is still computing.
inline HardwareConfig toy_hw() {
  HardwareConfig hw;
  hw.name = "toy";
  hw.parallel_k = 16;
  hw.parallel_c = 8;
  return hw;
}

inline int tensor_id(const ExecutionPlan& plan, const std::string& name) {
  for (std::size_t id = 0; id < plan.tensor_count(); ++id) {
    if (plan.tensor_info(static_cast<int>(id)).name == name) return static_cast<int>(id);
  }
  throw std::out_of_range("no tensor " + name);
}

inline int tile_id(const ExecutionPlan& plan, const std::string& name) {
  for (int t = 0; t < plan.tile_count(); ++t) {
    if (plan.tile_sequence()[static_cast<std::size_t>(t)].name == name) return t;
  }
  throw std::out_of_range("no tile " + name);
}

// Order A,B,C,E,D; groups [A],[B],[C,E,D]; tilings 2/1/2; DRAM cut after B.
inline ScheduleEncoding toy5_fused_encoding() {
  ScheduleEncoding e;
  e.computing_order = {0, 1, 2, 4, 3};
  e.flc_set = {1, 2};
  e.tiling_numbers = {2, 1, 2};
  e.dram_cut_set = {2};
  return e;
}

// Hand-set DRAM attributes for the fused toy5 plan: W_E prefetched from B,
// W_D ahead of I_C2 in the DRAM order, I_C2 allowed from C1, O_E1 due by D1.
inline ExecutionPlan toy5_hand_plan(const ModelGraph& graph) {
  const auto lfa = parse_lfa(graph, toy5_fused_encoding());
  auto durations = double_buffer_dlsa(lfa).living_durations();
  auto set = [&](const char* name, int start, int end) {
    durations[static_cast<std::size_t>(tensor_id(lfa, name))] = {start, end};
  };
  const int B = tile_id(lfa, "B"), C1 = tile_id(lfa, "C1"), D1 = tile_id(lfa, "D1");
  const int D2 = tile_id(lfa, "D2");
  set("W_B", B, C1);
  set("W_E", B, D2);
  set("W_D", C1, D2 + 1);
  set("I_C1", B, C1 + 1);
  set("I_C2", C1, tile_id(lfa, "C2") + 1);
  set("O_E1", tile_id(lfa, "E1"), D1);
  std::vector<int> order;
  for (const char* name : {"W_A", "I_A1", "I_A2", "W_B", "O_B1", "I_C1", "W_E", "W_D", "I_C2",
                           "O_E1", "O_D1", "O_E2", "O_D2"}) {
    order.push_back(tensor_id(lfa, name));
  }
  return apply_dlsa(lfa, order, durations);
}

// A random valid layer-fusion encoding reached by a random walk of moves.
inline ScheduleEncoding random_lfa(const ModelGraph& graph, Rng& rng, int steps = 12) {
  ScheduleEncoding enc = initial_encoding(graph);
  const LfaMoveKind kinds[] = {LfaMoveKind::order, LfaMoveKind::tiling, LfaMoveKind::flc,
                               LfaMoveKind::dram_cut};
  for (int i = 0; i < steps; ++i) {
    const auto kind = kinds[std::uniform_int_distribution<int>(0, 3)(rng)];
    enc = propose_lfa_move(graph, enc, kind, rng).encoding;
  }
  return enc;
}

// A random plan: random LFA, then random DRAM moves away from double buffer.
inline ExecutionPlan random_plan(std::shared_ptr<const ModelGraph> graph, Rng& rng,
                                 int lfa_steps = 12, int dlsa_steps = 20) {
  auto plan = double_buffer_dlsa(parse_lfa(graph, random_lfa(*graph, rng, lfa_steps)));
  for (int i = 0; i < dlsa_steps; ++i) {
    const auto kind = std::uniform_int_distribution<int>(0, 1)(rng) == 0 ? DlsaMoveKind::order
                                                                         : DlsaMoveKind::duration;
    plan = propose_dlsa_move(plan, kind, rng).plan;
  }
  return plan;
}

}  // namespace soma::testing
