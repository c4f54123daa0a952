// SPDX-License-Identifier: Apache-2.0

#include "soma/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace soma {

using nlohmann::json;

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

std::int64_t transfer_cycles(std::int64_t bytes, double bytes_per_cycle) {
  if (bytes <= 0) return 0;
  return static_cast<std::int64_t>(std::ceil(static_cast<double>(bytes) / bytes_per_cycle));
}

}  // namespace

std::vector<std::string> validate_hardware(const HardwareConfig& hw) {
  std::vector<std::string> out;
  if (hw.parallel_k <= 0 || hw.parallel_c <= 0) out.emplace_back("parallelism must be positive");
  if (!(hw.frequency_hz > 0)) out.emplace_back("frequency must be positive");
  if (hw.gbuf_bytes <= 0) out.emplace_back("GBUF capacity must be positive");
  if (!(hw.dram_read_bytes_per_cycle > 0) || !(hw.dram_write_bytes_per_cycle > 0)) {
    out.emplace_back("DRAM bandwidth must be positive");
  }
  if (!(hw.e_mac > 0) || !(hw.e_dram_read > 0) || !(hw.e_dram_write > 0) ||
      !(hw.e_gbuf_access > 0)) {
    out.emplace_back("unit energies must be positive");
  }
  return out;
}

TileCost tile_compute_model(const Layer& layer, const LayerTile& tile, const HardwareConfig& hw) {
  TileCost c;
  const std::int64_t out_elems = tile.out_region.elements();
  if (out_elems == 0) return c;
  const std::int64_t positions =
      tile.out_region.batch.size() * tile.out_region.height.size() * tile.out_region.width.size();
  if (layer.has_weights()) {
    c.cycles = ceil_div(layer.out_channels, hw.parallel_k) *
               ceil_div(layer.in_channels, hw.parallel_c) * layer.kernel_h * layer.kernel_w *
               positions;
  } else {
    c.cycles = ceil_div(out_elems, hw.peak_macs_per_cycle());
  }
  c.mac_energy = static_cast<double>(tile.ops) * hw.e_mac;
  c.gbuf_energy =
      static_cast<double>(tile.ifmap_bytes + tile.weight_bytes + tile.ofmap_bytes) *
      hw.e_gbuf_access;
  c.energy = c.mac_energy + c.gbuf_energy;
  return c;
}

TileCost tile_compute_model(const ExecutionPlan& plan, int tile, const HardwareConfig& hw) {
  const auto& t = plan.tile_sequence()[static_cast<std::size_t>(tile)];
  return tile_compute_model(plan.graph().layer(t.layer_id), t.work, hw);
}

TensorCost dram_tensor_model(const DramTensor& tensor, const HardwareConfig& hw) {
  TensorCost c;
  if (tensor.is_load()) {
    c.cycles = transfer_cycles(tensor.bytes, hw.dram_read_bytes_per_cycle);
    c.energy = static_cast<double>(tensor.bytes) * hw.e_dram_read;
  } else {
    c.cycles = transfer_cycles(tensor.bytes, hw.dram_write_bytes_per_cycle);
    c.energy = static_cast<double>(tensor.bytes) * hw.e_dram_write;
  }
  return c;
}

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::compute: return "compute";
    case EventKind::load: return "load";
    case EventKind::store: return "store";
  }
  return "?";
}

std::vector<std::int64_t> buffer_timeline(const ExecutionPlan& plan) {
  const int n = plan.tile_count();
  std::vector<std::int64_t> diff(static_cast<std::size_t>(n) + 1, 0);
  auto add = [&](int from, int to, std::int64_t bytes) {
    from = std::clamp(from, 0, n);
    to = std::clamp(to, 0, n);
    if (from >= to) return;
    diff[static_cast<std::size_t>(from)] += bytes;
    diff[static_cast<std::size_t>(to)] -= bytes;
  };
  std::vector<bool> linked(plan.tensor_count(), false);
  for (const auto& life : plan.onchip_lifetimes()) {
    int to = life.alive_to;
    if (life.linked_store) {
      // On-chip copy and pending store hold the same bytes.
      linked[static_cast<std::size_t>(*life.linked_store)] = true;
      to = std::max(to, plan.duration(*life.linked_store).end);
    }
    add(life.alive_from, to, life.bytes);
  }
  for (std::size_t id = 0; id < plan.tensor_count(); ++id) {
    if (linked[id]) continue;
    const auto& d = plan.duration(static_cast<int>(id));
    add(d.start, d.end, plan.tensor_info(static_cast<int>(id)).bytes);
  }
  std::vector<std::int64_t> occupancy(static_cast<std::size_t>(n), 0);
  std::int64_t running = 0;
  for (int t = 0; t < n; ++t) {
    running += diff[static_cast<std::size_t>(t)];
    occupancy[static_cast<std::size_t>(t)] = running;
  }
  return occupancy;
}

std::int64_t latency_lower_bound(const ExecutionPlan& plan, const HardwareConfig& hw) {
  std::int64_t compute = 0;
  for (int t = 0; t < plan.tile_count(); ++t) compute += tile_compute_model(plan, t, hw).cycles;
  std::int64_t dram = 0;
  for (std::size_t id = 0; id < plan.tensor_count(); ++id) {
    dram += dram_tensor_model(plan.tensor_info(static_cast<int>(id)), hw).cycles;
  }
  return std::max(compute, dram);
}

EvalReport simulate(const ExecutionPlan& plan, const HardwareConfig& hw, std::int64_t budget_bytes,
                    const SimulateOptions& options) {
  EvalReport r;
  const int nt = plan.tile_count();
  const int nd = static_cast<int>(plan.tensor_count());
  const auto& order = plan.dram_tensor_order();
  const auto& tiles = plan.tile_sequence();
  r.budget_bytes = budget_bytes;
  r.tile_count = nt;
  r.tensor_count = nd;
  r.flg_first_tiles = plan.structure().flg_first_tile;
  for (std::size_t g = 0; g < r.flg_first_tiles.size(); ++g) {
    if (g == 0 || plan.structure().flg_lg[g] != plan.structure().flg_lg[g - 1]) {
      r.lg_first_tiles.push_back(r.flg_first_tiles[g]);
    }
  }
  for (const auto& layer : plan.graph().layers()) r.network_ops += layer_ops(layer);

  // Buffer feasibility first; the SA loop rejects on it without timing.
  r.buffer_occupancy = buffer_timeline(plan);
  for (auto b : r.buffer_occupancy) r.peak_buffer_bytes = std::max(r.peak_buffer_bytes, b);
  r.over_budget = r.peak_buffer_bytes > budget_bytes;

  std::vector<std::int64_t> tile_cycles(static_cast<std::size_t>(nt));
  for (int t = 0; t < nt; ++t) {
    const auto c = tile_compute_model(plan, t, hw);
    tile_cycles[static_cast<std::size_t>(t)] = c.cycles;
    r.total_compute_cycles += c.cycles;
    r.energy.compute += c.mac_energy;
    r.energy.gbuf += c.gbuf_energy;
  }
  std::vector<std::int64_t> dram_cycles(static_cast<std::size_t>(nd));
  for (int k = 0; k < nd; ++k) {
    const auto c = dram_tensor_model(plan.tensor_info(order[static_cast<std::size_t>(k)]), hw);
    dram_cycles[static_cast<std::size_t>(k)] = c.cycles;
    r.total_dram_cycles += c.cycles;
    r.energy.dram += c.energy;
  }
  r.energy_total = r.energy.total();
  r.lower_bound_cycles = std::max(r.total_compute_cycles, r.total_dram_cycles);

  if (r.over_budget) r.invalid_reason = "buffer occupancy exceeds budget";
  if (r.over_budget && !options.record_timeline) return r;

  std::vector<int> pos(static_cast<std::size_t>(nd));
  for (int k = 0; k < nd; ++k) pos[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = k;

  // Highest DRAM position each tile must wait for: its own loads and every
  // tensor whose End is at or before it.
  std::vector<int> need_dram(static_cast<std::size_t>(nt), -1);
  {
    std::vector<int> by_end(static_cast<std::size_t>(nt) + 1, -1);
    for (int id = 0; id < nd; ++id) {
      const int e = std::clamp(plan.duration(id).end, 0, nt);
      auto& slot = by_end[static_cast<std::size_t>(e)];
      slot = std::max(slot, pos[static_cast<std::size_t>(id)]);
    }
    int running = -1;
    for (int t = 0; t < nt; ++t) {
      running = std::max(running, by_end[static_cast<std::size_t>(t)]);
      int need = running;
      for (int id : tiles[static_cast<std::size_t>(t)].loads) {
        need = std::max(need, pos[static_cast<std::size_t>(id)]);
      }
      need_dram[static_cast<std::size_t>(t)] = need;
    }
  }
  // Last tile each DRAM position must wait for, and whether its stored
  // source data comes earlier in the DRAM order.
  std::vector<int> need_tile(static_cast<std::size_t>(nd), -1);
  std::vector<bool> blocked(static_cast<std::size_t>(nd), false);
  for (int k = 0; k < nd; ++k) {
    const auto& t = plan.tensor_info(order[static_cast<std::size_t>(k)]);
    if (t.is_load()) {
      need_tile[static_cast<std::size_t>(k)] = plan.duration(t.id).start - 1;
      for (int s : t.after_stores) {
        if (pos[static_cast<std::size_t>(s)] > k) blocked[static_cast<std::size_t>(k)] = true;
      }
    } else {
      need_tile[static_cast<std::size_t>(k)] = t.producer;
    }
  }

  std::vector<std::int64_t> tile_start(static_cast<std::size_t>(nt)), tile_end(static_cast<std::size_t>(nt));
  std::vector<std::int64_t> dram_start(static_cast<std::size_t>(nd)), dram_end(static_cast<std::size_t>(nd));
  int ti = 0;
  int di = 0;
  while (ti < nt || di < nd) {
    bool progressed = false;
    while (di < nd && !blocked[static_cast<std::size_t>(di)] &&
           need_tile[static_cast<std::size_t>(di)] < ti) {
      const auto k = static_cast<std::size_t>(di);
      std::int64_t start = di > 0 ? dram_end[k - 1] : 0;
      if (need_tile[k] >= 0) start = std::max(start, tile_end[static_cast<std::size_t>(need_tile[k])]);
      dram_start[k] = start;
      dram_end[k] = start + dram_cycles[k];
      ++di;
      progressed = true;
    }
    while (ti < nt && need_dram[static_cast<std::size_t>(ti)] < di) {
      const auto t = static_cast<std::size_t>(ti);
      std::int64_t start = ti > 0 ? tile_end[t - 1] : 0;
      if (need_dram[t] >= 0) start = std::max(start, dram_end[static_cast<std::size_t>(need_dram[t])]);
      tile_start[t] = start;
      tile_end[t] = start + tile_cycles[t];
      ++ti;
      progressed = true;
    }
    if (!progressed) break;
  }

  if (ti < nt || di < nd) {
    r.deadlock = true;
    r.invalid_reason = "deadlock: no runnable tile or DRAM tensor (tile " + std::to_string(ti) +
                       ", DRAM position " + std::to_string(di) + ")";
  } else {
    r.simulated_latency_cycles = std::max(nt > 0 ? tile_end.back() : 0, nd > 0 ? dram_end.back() : 0);
  }

  if (options.record_timeline) {
    r.timeline.reserve(static_cast<std::size_t>(ti + di));
    for (int t = 0; t < ti; ++t) {
      const auto& tile = tiles[static_cast<std::size_t>(t)];
      r.timeline.push_back({EventKind::compute, t, tile.name, tile_start[static_cast<std::size_t>(t)],
                            tile_end[static_cast<std::size_t>(t)],
                            tile.work.ifmap_bytes + tile.work.weight_bytes + tile.work.ofmap_bytes,
                            tile.work.ops});
    }
    for (int k = 0; k < di; ++k) {
      const auto& t = plan.tensor_info(order[static_cast<std::size_t>(k)]);
      r.timeline.push_back({t.is_load() ? EventKind::load : EventKind::store, t.id, t.name,
                            dram_start[static_cast<std::size_t>(k)], dram_end[static_cast<std::size_t>(k)],
                            t.bytes, 0});
    }
  }

  r.valid = !r.deadlock && !r.over_budget;
  if (!r.deadlock && r.simulated_latency_cycles > 0) {
    const double lat = static_cast<double>(r.simulated_latency_cycles);
    const double peak = static_cast<double>(hw.peak_macs_per_cycle());
    r.compute_utilization = static_cast<double>(r.network_ops) / (peak * lat);
    r.compute_busy_ratio = static_cast<double>(r.total_compute_cycles) / lat;
    r.dram_utilization = static_cast<double>(r.total_dram_cycles) / lat;
    r.stall_cycles = r.simulated_latency_cycles - r.total_compute_cycles;
  }
  if (r.lower_bound_cycles > 0) {
    r.theoretical_max_utilization =
        static_cast<double>(r.network_ops) /
        (static_cast<double>(hw.peak_macs_per_cycle()) * static_cast<double>(r.lower_bound_cycles));
  }
  double weighted = 0.0;
  for (int t = 0; t < nt; ++t) {
    weighted += static_cast<double>(r.buffer_occupancy[static_cast<std::size_t>(t)]) *
                static_cast<double>(tile_cycles[static_cast<std::size_t>(t)]);
  }
  if (r.total_compute_cycles > 0) {
    r.avg_buffer_bytes = weighted / static_cast<double>(r.total_compute_cycles);
  }
  r.latency_cycles = r.valid ? r.simulated_latency_cycles : kInfiniteLatency;
  return r;
}

double cost(const EvalReport& report, double n, double m) {
  if (!report.valid || report.latency_cycles == kInfiniteLatency) return kInfiniteCost;
  return std::pow(report.energy_total, n) * std::pow(static_cast<double>(report.latency_cycles), m);
}

// ---------------------------------------------------------------------------
// Serialization

std::string serialize_report(const EvalReport& r) {
  json events = json::array();
  for (const auto& e : r.timeline) {
    events.push_back({{"kind", to_string(e.kind)},
                      {"id", e.id},
                      {"name", e.name},
                      {"start", e.start},
                      {"end", e.end},
                      {"bytes", e.bytes},
                      {"ops", e.ops}});
  }
  json doc = {
      {"schema", "soma.report.v1"},
      {"valid", r.valid},
      {"deadlock", r.deadlock},
      {"over_budget", r.over_budget},
      {"invalid_reason", r.invalid_reason},
      {"latency_cycles", r.valid ? json(r.latency_cycles) : json(nullptr)},
      {"simulated_latency_cycles", r.simulated_latency_cycles},
      {"energy_total_pj", r.energy_total},
      {"energy_pj", {{"compute", r.energy.compute}, {"dram", r.energy.dram}, {"gbuf", r.energy.gbuf}}},
      {"budget_bytes", r.budget_bytes},
      {"peak_buffer_bytes", r.peak_buffer_bytes},
      {"avg_buffer_bytes", r.avg_buffer_bytes},
      {"buffer_occupancy", r.buffer_occupancy},
      {"network_ops", r.network_ops},
      {"total_compute_cycles", r.total_compute_cycles},
      {"total_dram_cycles", r.total_dram_cycles},
      {"lower_bound_cycles", r.lower_bound_cycles},
      {"stall_cycles", r.stall_cycles},
      {"compute_utilization", r.compute_utilization},
      {"compute_busy_ratio", r.compute_busy_ratio},
      {"dram_utilization", r.dram_utilization},
      {"theoretical_max_utilization", r.theoretical_max_utilization},
      {"tile_count", r.tile_count},
      {"tensor_count", r.tensor_count},
      {"flg_first_tiles", r.flg_first_tiles},
      {"lg_first_tiles", r.lg_first_tiles},
      {"timeline", events}};
  return doc.dump(2) + "\n";
}

EvalReport parse_report_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
  EvalReport r;
  try {
    r.valid = doc.at("valid").get<bool>();
    r.deadlock = doc.value("deadlock", false);
    r.over_budget = doc.value("over_budget", false);
    r.invalid_reason = doc.value("invalid_reason", std::string{});
    const auto& lat = doc.at("latency_cycles");
    r.latency_cycles = lat.is_null() ? kInfiniteLatency : lat.get<std::int64_t>();
    r.simulated_latency_cycles = doc.value("simulated_latency_cycles", std::int64_t{0});
    r.energy_total = doc.at("energy_total_pj").get<double>();
    const auto& e = doc.at("energy_pj");
    r.energy = {e.at("compute").get<double>(), e.at("dram").get<double>(), e.at("gbuf").get<double>()};
    r.budget_bytes = doc.value("budget_bytes", std::int64_t{0});
    r.peak_buffer_bytes = doc.at("peak_buffer_bytes").get<std::int64_t>();
    r.avg_buffer_bytes = doc.value("avg_buffer_bytes", 0.0);
    r.buffer_occupancy = doc.value("buffer_occupancy", std::vector<std::int64_t>{});
    r.network_ops = doc.value("network_ops", std::int64_t{0});
    r.total_compute_cycles = doc.value("total_compute_cycles", std::int64_t{0});
    r.total_dram_cycles = doc.value("total_dram_cycles", std::int64_t{0});
    r.lower_bound_cycles = doc.value("lower_bound_cycles", std::int64_t{0});
    r.stall_cycles = doc.value("stall_cycles", std::int64_t{0});
    r.compute_utilization = doc.value("compute_utilization", 0.0);
    r.compute_busy_ratio = doc.value("compute_busy_ratio", 0.0);
    r.dram_utilization = doc.value("dram_utilization", 0.0);
    r.theoretical_max_utilization = doc.value("theoretical_max_utilization", 0.0);
    r.tile_count = doc.value("tile_count", 0);
    r.tensor_count = doc.value("tensor_count", 0);
    r.flg_first_tiles = doc.value("flg_first_tiles", std::vector<int>{});
    r.lg_first_tiles = doc.value("lg_first_tiles", std::vector<int>{});
    if (!doc.contains("timeline")) throw ParseError("report has no timeline");
    for (const auto& ev : doc.at("timeline")) {
      TimelineEvent out;
      const auto kind = ev.at("kind").get<std::string>();
      if (kind == "compute") out.kind = EventKind::compute;
      else if (kind == "load") out.kind = EventKind::load;
      else if (kind == "store") out.kind = EventKind::store;
      else throw ParseError("report: unknown event kind '" + kind + "'");
      out.id = ev.at("id").get<int>();
      out.name = ev.at("name").get<std::string>();
      out.start = ev.at("start").get<std::int64_t>();
      out.end = ev.at("end").get<std::int64_t>();
      out.bytes = ev.value("bytes", std::int64_t{0});
      out.ops = ev.value("ops", std::int64_t{0});
      r.timeline.push_back(std::move(out));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
  return r;
}

std::string events_csv(const EvalReport& report) {
  std::ostringstream out;
  out << kEventsSchema << ",kind,id,name,start,end,bytes,ops\n";
  std::size_t row = 0;
  for (const auto& e : report.timeline) {
    out << row++ << ',' << to_string(e.kind) << ',' << e.id << ',' << e.name << ',' << e.start
        << ',' << e.end << ',' << e.bytes << ',' << e.ops << '\n';
  }
  return out.str();
}

}  // namespace soma
