// SPDX-License-Identifier: Apache-2.0

#include "oracles/reference_simulator.hpp"

#include <algorithm>
#include <queue>

namespace soma::oracle {

std::int64_t ref_tile_cycles(const Layer& layer, const LayerTile& tile, const HardwareConfig& hw) {
  const std::int64_t b = tile.out_region.batch.end - tile.out_region.batch.begin;
  const std::int64_t h = tile.out_region.height.end - tile.out_region.height.begin;
  const std::int64_t w = tile.out_region.width.end - tile.out_region.width.begin;
  if (b <= 0 || h <= 0 || w <= 0) return 0;
  if (layer.kind == LayerKind::conv || layer.kind == LayerKind::matmul) {
    std::int64_t kc = 0;
    for (std::int64_t k = 0; k < layer.out_channels; k += hw.parallel_k) ++kc;
    std::int64_t cc = 0;
    for (std::int64_t c = 0; c < layer.in_channels; c += hw.parallel_c) ++cc;
    return kc * cc * layer.kernel_h * layer.kernel_w * b * h * w;
  }
  const std::int64_t elems = b * h * w * layer.out_channels;
  const std::int64_t lanes = hw.parallel_k * hw.parallel_c;
  return elems / lanes + (elems % lanes != 0 ? 1 : 0);
}

std::int64_t ref_tensor_cycles(const DramTensor& t, const HardwareConfig& hw) {
  const double bw = t.kind == TensorKind::ofmap_store ? hw.dram_write_bytes_per_cycle
                                                      : hw.dram_read_bytes_per_cycle;
  std::int64_t c = static_cast<std::int64_t>(static_cast<double>(t.bytes) / bw);
  while (static_cast<double>(c) * bw < static_cast<double>(t.bytes)) ++c;
  return c;
}

// Nodes 0..NT-1 are tiles, NT..NT+ND-1 are DRAM positions. Every start
// condition becomes an edge "must finish before"; longest path gives times.
RefTimeline reference_timeline(const ExecutionPlan& plan, const HardwareConfig& hw) {
  const int nt = plan.tile_count();
  const int nd = static_cast<int>(plan.tensor_count());
  const auto& order = plan.dram_tensor_order();
  const auto& graph = plan.graph();
  std::vector<int> pos_of(static_cast<std::size_t>(nd));
  for (int k = 0; k < nd; ++k) pos_of[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = k;

  const int total = nt + nd;
  std::vector<std::vector<int>> preds(static_cast<std::size_t>(total));
  std::vector<std::int64_t> dur(static_cast<std::size_t>(total));
  auto dram_node = [&](int tensor_id) { return nt + pos_of[static_cast<std::size_t>(tensor_id)]; };
  for (int t = 0; t < nt; ++t) {
    const auto& tile = plan.tile_sequence()[static_cast<std::size_t>(t)];
    dur[static_cast<std::size_t>(t)] = ref_tile_cycles(graph.layer(tile.layer_id), tile.work, hw);
    if (t > 0) preds[static_cast<std::size_t>(t)].push_back(t - 1);
    for (int id : tile.loads) preds[static_cast<std::size_t>(t)].push_back(dram_node(id));
    for (int id = 0; id < nd; ++id) {
      if (plan.duration(id).end <= t) preds[static_cast<std::size_t>(t)].push_back(dram_node(id));
    }
  }
  for (int k = 0; k < nd; ++k) {
    const int node = nt + k;
    const auto& tensor = plan.tensor_info(order[static_cast<std::size_t>(k)]);
    dur[static_cast<std::size_t>(node)] = ref_tensor_cycles(tensor, hw);
    if (k > 0) preds[static_cast<std::size_t>(node)].push_back(node - 1);
    if (tensor.kind == TensorKind::ofmap_store) {
      preds[static_cast<std::size_t>(node)].push_back(tensor.producer);
    } else {
      const int start = plan.duration(tensor.id).start;
      for (int t = 0; t < start && t < nt; ++t) preds[static_cast<std::size_t>(node)].push_back(t);
      for (int s : tensor.after_stores) preds[static_cast<std::size_t>(node)].push_back(dram_node(s));
    }
  }

  std::vector<int> indegree(static_cast<std::size_t>(total), 0);
  std::vector<std::vector<int>> succs(static_cast<std::size_t>(total));
  for (int v = 0; v < total; ++v) {
    for (int u : preds[static_cast<std::size_t>(v)]) {
      succs[static_cast<std::size_t>(u)].push_back(v);
      ++indegree[static_cast<std::size_t>(v)];
    }
  }
  std::queue<int> ready;
  for (int v = 0; v < total; ++v) {
    if (indegree[static_cast<std::size_t>(v)] == 0) ready.push(v);
  }
  std::vector<std::int64_t> start(static_cast<std::size_t>(total), 0), finish(static_cast<std::size_t>(total), 0);
  int done = 0;
  while (!ready.empty()) {
    const int v = ready.front();
    ready.pop();
    ++done;
    for (int u : preds[static_cast<std::size_t>(v)]) {
      start[static_cast<std::size_t>(v)] = std::max(start[static_cast<std::size_t>(v)], finish[static_cast<std::size_t>(u)]);
    }
    finish[static_cast<std::size_t>(v)] = start[static_cast<std::size_t>(v)] + dur[static_cast<std::size_t>(v)];
    for (int w : succs[static_cast<std::size_t>(v)]) {
      if (--indegree[static_cast<std::size_t>(w)] == 0) ready.push(w);
    }
  }
  RefTimeline r;
  if (done < total) {
    r.deadlock = true;
    return r;
  }
  for (int t = 0; t < nt; ++t) {
    r.tile_start.push_back(start[static_cast<std::size_t>(t)]);
    r.tile_end.push_back(finish[static_cast<std::size_t>(t)]);
  }
  for (int k = 0; k < nd; ++k) {
    r.dram_start.push_back(start[static_cast<std::size_t>(nt + k)]);
    r.dram_end.push_back(finish[static_cast<std::size_t>(nt + k)]);
  }
  for (auto f : finish) r.latency = std::max(r.latency, f);
  return r;
}

std::vector<std::int64_t> reference_occupancy(const ExecutionPlan& plan) {
  const int nt = plan.tile_count();
  std::vector<std::int64_t> occ(static_cast<std::size_t>(nt), 0);
  for (int t = 0; t < nt; ++t) {
    std::vector<bool> counted(plan.tensor_count(), false);
    for (const auto& life : plan.onchip_lifetimes()) {
      int to = life.alive_to;
      if (life.linked_store) {
        counted[static_cast<std::size_t>(*life.linked_store)] = true;
        to = std::max(to, plan.duration(*life.linked_store).end);
      }
      if (life.alive_from <= t && t < to) occ[static_cast<std::size_t>(t)] += life.bytes;
    }
    for (std::size_t id = 0; id < plan.tensor_count(); ++id) {
      if (counted[id]) continue;
      const auto& d = plan.duration(static_cast<int>(id));
      if (d.start <= t && t < d.end) occ[static_cast<std::size_t>(t)] += plan.tensor_info(static_cast<int>(id)).bytes;
    }
  }
  return occ;
}

double reference_energy(const ExecutionPlan& plan, const HardwareConfig& hw) {
  double e = 0.0;
  for (const auto& tile : plan.tile_sequence()) {
    e += static_cast<double>(tile.work.ops) * hw.e_mac;
    e += static_cast<double>(tile.work.ifmap_bytes + tile.work.weight_bytes + tile.work.ofmap_bytes) *
         hw.e_gbuf_access;
  }
  for (std::size_t id = 0; id < plan.tensor_count(); ++id) {
    const auto& t = plan.tensor_info(static_cast<int>(id));
    e += static_cast<double>(t.bytes) *
         (t.kind == TensorKind::ofmap_store ? hw.e_dram_write : hw.e_dram_read);
  }
  return e;
}

}  // namespace soma::oracle
