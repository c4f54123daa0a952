// SPDX-License-Identifier: Apache-2.0

#include "oracles/enumerate.hpp"

#include <algorithm>
#include <numeric>

namespace soma::oracle {

std::vector<std::vector<int>> all_topological_orders(const ModelGraph& graph) {
  std::vector<int> ids;
  for (const auto& l : graph.layers()) ids.push_back(l.id);
  std::sort(ids.begin(), ids.end());
  std::vector<std::vector<int>> out;
  do {
    bool ok = true;
    for (std::size_t i = 0; i < ids.size() && ok; ++i) {
      for (int pred : graph.layer(ids[i]).predecessors) {
        if (std::find(ids.begin() + static_cast<std::ptrdiff_t>(i), ids.end(), pred) != ids.end()) {
          ok = false;
          break;
        }
      }
    }
    if (ok) out.push_back(ids);
  } while (std::next_permutation(ids.begin(), ids.end()));
  return out;
}

std::int64_t for_each_lfa(const ModelGraph& graph, std::int64_t max_tiling,
                          const std::function<void(const ScheduleEncoding&)>& visit) {
  const int n = static_cast<int>(graph.size());
  const int cuts = n - 1;
  std::int64_t count = 0;
  for (const auto& order : all_topological_orders(graph)) {
    for (int flc_mask = 0; flc_mask < (1 << cuts); ++flc_mask) {
      // Every submask of the FLC mask is a DRAM-cut set.
      for (int dram_mask = flc_mask;; dram_mask = (dram_mask - 1) & flc_mask) {
        ScheduleEncoding enc;
        enc.computing_order = order;
        for (int p = 1; p <= cuts; ++p) {
          if (flc_mask & (1 << (p - 1))) enc.flc_set.insert(p);
          if (dram_mask & (1 << (p - 1))) enc.dram_cut_set.insert(p);
        }
        const auto groups = fused_groups(enc);
        std::vector<std::vector<std::int64_t>> choices;
        for (const auto& g : groups) {
          std::vector<std::int64_t> c;
          for (std::int64_t t = 1; t <= max_tiling; t *= 2) {
            if (geometry_feasible(graph, g, t)) c.push_back(t);
          }
          choices.push_back(std::move(c));
        }
        std::vector<std::size_t> idx(groups.size(), 0);
        while (true) {
          enc.tiling_numbers.clear();
          for (std::size_t g = 0; g < groups.size(); ++g) enc.tiling_numbers.push_back(choices[g][idx[g]]);
          visit(enc);
          ++count;
          std::size_t g = 0;
          while (g < idx.size() && ++idx[g] == choices[g].size()) idx[g++] = 0;
          if (g == idx.size()) break;
        }
        if (dram_mask == 0) break;
      }
    }
  }
  return count;
}

Optimum exhaustive_lfa_optimum(const ModelGraph& graph, const HardwareConfig& hw,
                               std::int64_t budget, const Objective& obj,
                               std::int64_t max_tiling) {
  Optimum best;
  auto g = std::make_shared<const ModelGraph>(graph);
  best.evaluated = for_each_lfa(graph, max_tiling, [&](const ScheduleEncoding& enc) {
    const auto plan = double_buffer_dlsa(parse_lfa(g, enc));
    const auto rep = simulate(plan, hw, budget, {.record_timeline = false});
    const double c = cost(rep, obj.n, obj.m);
    if (c < best.cost) {
      best.cost = c;
      best.encoding = plan.encoding();
    }
  });
  return best;
}

Optimum exhaustive_dlsa_optimum(const ExecutionPlan& plan, const HardwareConfig& hw,
                                std::int64_t budget, const Objective& obj) {
  const int nd = static_cast<int>(plan.tensor_count());
  const int vend = plan.virtual_end();
  // Candidate durations per tensor.
  std::vector<std::vector<LivingDuration>> choices(static_cast<std::size_t>(nd));
  for (int id = 0; id < nd; ++id) {
    const auto& t = plan.tensor_info(id);
    if (t.kind == TensorKind::ofmap_store) {
      for (int e = t.producer + 1; e <= vend; ++e) choices[static_cast<std::size_t>(id)].push_back({t.producer, e});
    } else {
      for (int s = 0; s <= t.first_consumer; ++s) {
        choices[static_cast<std::size_t>(id)].push_back({s, t.last_consumer + 1});
      }
    }
  }
  Optimum best;
  std::vector<int> order(static_cast<std::size_t>(nd));
  std::iota(order.begin(), order.end(), 0);
  ExecutionPlan p = plan;
  do {
    std::vector<std::size_t> idx(static_cast<std::size_t>(nd), 0);
    std::vector<LivingDuration> durations(static_cast<std::size_t>(nd));
    while (true) {
      for (int id = 0; id < nd; ++id) {
        durations[static_cast<std::size_t>(id)] = choices[static_cast<std::size_t>(id)][idx[static_cast<std::size_t>(id)]];
      }
      p.set_dlsa(order, durations);
      const auto rep = simulate(p, hw, budget, {.record_timeline = false});
      const double c = cost(rep, obj.n, obj.m);
      ++best.evaluated;
      if (c < best.cost) {
        best.cost = c;
        best.encoding = p.encoding();
      }
      std::size_t k = 0;
      while (k < idx.size() && ++idx[k] == choices[k].size()) idx[k++] = 0;
      if (k == idx.size()) break;
    }
  } while (std::next_permutation(order.begin(), order.end()));
  return best;
}

}  // namespace soma::oracle
