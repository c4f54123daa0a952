// SPDX-License-Identifier: Apache-2.0

#include "soma/notation.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>

#include "json.hpp"

namespace soma {

using nlohmann::json;

std::string_view to_string(TensorKind kind) {
  switch (kind) {
    case TensorKind::weight_load: return "weight_load";
    case TensorKind::ifmap_load: return "ifmap_load";
    case TensorKind::ofmap_store: return "ofmap_store";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// ExecutionPlan

ExecutionPlan::ExecutionPlan(std::shared_ptr<const PlanStructure> structure)
    : structure_(std::move(structure)) {
  const auto& tensors = structure_->tensors;
  order_.resize(tensors.size());
  std::iota(order_.begin(), order_.end(), 0);
  durations_.reserve(tensors.size());
  for (const auto& t : tensors) durations_.push_back({t.start, t.end});
}

std::vector<DramTensor> ExecutionPlan::dram_tensors() const {
  std::vector<DramTensor> out;
  out.reserve(order_.size());
  for (int id : order_) {
    DramTensor t = tensor_info(id);
    t.start = duration(id).start;
    t.end = duration(id).end;
    out.push_back(std::move(t));
  }
  return out;
}

ScheduleEncoding ExecutionPlan::encoding() const {
  ScheduleEncoding enc = structure_->lfa;
  if (has_dlsa_) {
    enc.dram_tensor_order = order_;
    enc.living_durations = durations_;
  }
  return enc;
}

void ExecutionPlan::set_dlsa(std::vector<int> order, std::vector<LivingDuration> durations) {
  order_ = std::move(order);
  durations_ = std::move(durations);
  has_dlsa_ = true;
}

std::int64_t ExecutionPlan::total_dram_bytes() const {
  std::int64_t total = 0;
  for (const auto& t : structure_->tensors) total += t.bytes;
  return total;
}

// ---------------------------------------------------------------------------
// Encoding validity

ScheduleEncoding initial_encoding(const ModelGraph& graph) {
  ScheduleEncoding enc;
  enc.computing_order = topological_order(graph);
  for (int pos = 1; pos < static_cast<int>(graph.size()); ++pos) {
    enc.flc_set.insert(pos);
    enc.dram_cut_set.insert(pos);
  }
  const auto groups = fused_groups(enc);
  for (const auto& group : groups) {
    std::vector<Layer> layers;
    for (int id : group) layers.push_back(graph.layer(id));
    enc.tiling_numbers.push_back(min_tiling_number(layers));
  }
  return enc;
}

std::vector<std::vector<int>> fused_groups(const ScheduleEncoding& enc) {
  std::vector<std::vector<int>> groups(1);
  for (std::size_t pos = 0; pos < enc.computing_order.size(); ++pos) {
    if (pos > 0 && enc.flc_set.count(static_cast<int>(pos))) groups.emplace_back();
    groups.back().push_back(enc.computing_order[pos]);
  }
  if (groups.back().empty()) groups.pop_back();
  return groups;
}

namespace {

std::vector<std::string> validate_lfa(const ModelGraph& graph, const ScheduleEncoding& enc) {
  std::vector<std::string> out;
  const int n = static_cast<int>(graph.size());
  const auto& order = enc.computing_order;
  if (static_cast<int>(order.size()) != n) {
    out.push_back("computing order has " + std::to_string(order.size()) + " entries, graph has " +
                  std::to_string(n) + " layers");
    return out;
  }
  std::vector<int> position(static_cast<std::size_t>(n), -1);
  for (int pos = 0; pos < n; ++pos) {
    const int id = order[static_cast<std::size_t>(pos)];
    if (!graph.contains(id)) {
      out.push_back("computing order references unknown layer " + std::to_string(id));
      return out;
    }
    auto& slot = position[graph.index_of(id)];
    if (slot >= 0) {
      out.push_back("computing order lists layer " + std::to_string(id) + " twice");
      return out;
    }
    slot = pos;
  }
  for (const auto& layer : graph.layers()) {
    for (int pred : layer.predecessors) {
      if (position[graph.index_of(pred)] > position[graph.index_of(layer.id)]) {
        out.push_back("dependency " + graph.layer(pred).name + " -> " + layer.name +
                      " goes right to left in the computing order");
      }
    }
  }
  for (int cut : enc.flc_set) {
    if (cut < 1 || cut >= n) out.push_back("FLC position " + std::to_string(cut) + " out of range");
  }
  for (int cut : enc.dram_cut_set) {
    if (!enc.flc_set.count(cut)) {
      out.push_back("DRAM cut " + std::to_string(cut) + " is not in the FLC set");
    }
  }
  if (!out.empty()) return out;

  const auto groups = fused_groups(enc);
  if (enc.tiling_numbers.size() != groups.size()) {
    out.push_back("expected " + std::to_string(groups.size()) + " tiling numbers, got " +
                  std::to_string(enc.tiling_numbers.size()));
    return out;
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto t = enc.tiling_numbers[g];
    if (!is_power_of_two(t)) {
      out.push_back("tiling number " + std::to_string(t) + " of group " + std::to_string(g) +
                    " is not a power of two >= 1");
    } else if (!geometry_feasible(graph, groups[g], t)) {
      out.push_back("group " + std::to_string(g) + " cannot be split into " + std::to_string(t) +
                    " tiles");
    }
  }
  return out;
}

std::string piece_suffix(int tile_index) { return std::to_string(tile_index + 1); }

}  // namespace

std::vector<std::string> validate_dlsa(const ExecutionPlan& plan, const std::vector<int>& order,
                                       const std::vector<LivingDuration>& durations) {
  std::vector<std::string> out;
  const auto n = plan.tensor_count();
  if (order.size() != n) {
    out.push_back("DRAM tensor order has " + std::to_string(order.size()) + " entries, plan has " +
                  std::to_string(n) + " tensors");
    return out;
  }
  std::vector<bool> seen(n, false);
  for (int id : order) {
    if (id < 0 || static_cast<std::size_t>(id) >= n || seen[static_cast<std::size_t>(id)]) {
      out.push_back("DRAM tensor order is not a permutation of the plan's tensors");
      return out;
    }
    seen[static_cast<std::size_t>(id)] = true;
  }
  if (durations.size() != n) {
    out.push_back("expected " + std::to_string(n) + " living durations, got " +
                  std::to_string(durations.size()));
    return out;
  }
  const int vend = plan.virtual_end();
  for (std::size_t id = 0; id < n; ++id) {
    const auto& t = plan.tensor_info(static_cast<int>(id));
    const auto& d = durations[id];
    if (t.is_load()) {
      if (d.end != t.last_consumer + 1) {
        out.push_back(t.name + ": End must stay at " + std::to_string(t.last_consumer + 1));
      } else if (d.start < 0 || d.start > t.first_consumer) {
        out.push_back(t.name + ": Start " + std::to_string(d.start) + " outside [0, " +
                      std::to_string(t.first_consumer) + "]");
      }
    } else {
      if (d.start != t.producer) {
        out.push_back(t.name + ": Start must stay at producing tile " +
                      std::to_string(t.producer));
      } else if (d.end <= t.producer || d.end > vend) {
        out.push_back(t.name + ": End " + std::to_string(d.end) + " outside (" +
                      std::to_string(t.producer) + ", " + std::to_string(vend) + "]");
      }
    }
  }
  return out;
}

std::vector<std::string> validate_encoding(const ModelGraph& graph, const ScheduleEncoding& enc) {
  auto out = validate_lfa(graph, enc);
  if (!out.empty() || (!enc.has_dlsa() && enc.living_durations.empty())) return out;
  const auto plan = parse_lfa(graph, enc);
  return validate_dlsa(plan, enc.dram_tensor_order, enc.living_durations);
}

// ---------------------------------------------------------------------------
// Stage 1: layer-fusion attributes

ExecutionPlan parse_lfa(const ModelGraph& graph, const ScheduleEncoding& enc) {
  return parse_lfa(std::make_shared<const ModelGraph>(graph), enc);
}

ExecutionPlan parse_lfa(std::shared_ptr<const ModelGraph> gp, const ScheduleEncoding& enc) {
  const ModelGraph& graph = *gp;
  if (auto violations = validate_lfa(graph, enc); !violations.empty()) {
    const std::string what = "invalid encoding: " + violations.front();
    throw ValidationError(what, std::move(violations));
  }
  auto s = std::make_shared<PlanStructure>();
  s->graph = std::move(gp);
  s->lfa.computing_order = enc.computing_order;
  s->lfa.flc_set = enc.flc_set;
  s->lfa.tiling_numbers = enc.tiling_numbers;
  s->lfa.dram_cut_set = enc.dram_cut_set;
  s->flg_boundaries.assign(enc.flc_set.begin(), enc.flc_set.end());
  s->lg_boundaries.assign(enc.dram_cut_set.begin(), enc.dram_cut_set.end());

  const auto groups = fused_groups(enc);
  const std::size_t n = graph.size();
  std::vector<int> flg_of(n), lg_of(n);
  std::vector<std::int64_t> tiles_of_layer(n);
  {
    int pos = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const int lg = static_cast<int>(std::count_if(enc.dram_cut_set.begin(),
                                                    enc.dram_cut_set.end(),
                                                    [&](int c) { return c <= pos; }));
      s->flg_lg.push_back(lg);
      for (int id : groups[g]) {
        const auto idx = graph.index_of(id);
        flg_of[idx] = static_cast<int>(g);
        lg_of[idx] = lg;
        tiles_of_layer[idx] = enc.tiling_numbers[g];
      }
      pos += static_cast<int>(groups[g].size());
    }
  }

  // Global tile sequence: groups in order, tile-major within a group.
  std::vector<std::vector<int>> tile_of(n);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    s->geometries.push_back(
        flg_tile_geometry(graph, groups[g], enc.tiling_numbers[g], static_cast<int>(g)));
    const auto& geo = s->geometries.back();
    s->flg_first_tile.push_back(static_cast<int>(s->tiles.size()));
    for (std::int64_t t = 0; t < geo.tiling_number; ++t) {
      for (const auto& lg : geo.layers) {
        const auto& layer = graph.layer(lg.layer_id);
        PlanTile tile;
        tile.layer_id = layer.id;
        tile.tile_index = static_cast<int>(t);
        tile.flg = static_cast<int>(g);
        tile.lg = s->flg_lg[g];
        tile.name = geo.tiling_number > 1 ? layer.name + piece_suffix(static_cast<int>(t))
                                          : layer.name;
        tile.work = lg.tiles[static_cast<std::size_t>(t)];
        tile_of[graph.index_of(layer.id)].push_back(static_cast<int>(s->tiles.size()));
        s->tiles.push_back(std::move(tile));
      }
    }
  }

  std::vector<bool> needs_store(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& layer = graph.layers()[i];
    needs_store[i] = layer.is_network_output_producer;
    for (int succ : graph.successors(layer.id)) {
      if (lg_of[graph.index_of(succ)] != lg_of[i]) needs_store[i] = true;
    }
  }

  // DRAM tensors, declared in tile order: weight, ifmap pieces, ofmap piece.
  std::vector<std::vector<int>> store_of(n);
  auto& tensors = s->tensors;
  for (std::size_t gt = 0; gt < s->tiles.size(); ++gt) {
    auto& tile = s->tiles[gt];
    const auto& layer = graph.layer(tile.layer_id);
    const auto li = graph.index_of(layer.id);
    const int g = static_cast<int>(gt);
    if (tile.tile_index == 0 && layer.has_weights()) {
      DramTensor w;
      w.id = static_cast<int>(tensors.size());
      w.kind = TensorKind::weight_load;
      w.owner_layer = layer.id;
      w.bytes = tensor_sizes(layer).weight_bytes;
      w.first_consumer = tile_of[li].front();
      w.last_consumer = tile_of[li].back();
      w.start = w.first_consumer;
      w.end = w.last_consumer + 1;
      w.name = "W_" + layer.name;
      for (int consumer : tile_of[li]) s->tiles[static_cast<std::size_t>(consumer)].loads.push_back(w.id);
      tensors.push_back(std::move(w));
    }
    std::vector<std::optional<int>> sources;
    for (int pred : layer.predecessors) sources.emplace_back(pred);
    if (layer.is_network_input_consumer) sources.emplace_back(std::nullopt);
    int dram_inputs = 0;
    for (const auto& src : sources) {
      if (!src || lg_of[graph.index_of(*src)] != lg_of[li]) ++dram_inputs;
    }
    for (std::size_t k = 0; k < sources.size(); ++k) {
      const auto& src = sources[k];
      if (src && lg_of[graph.index_of(*src)] == lg_of[li]) continue;
      DramTensor in;
      in.id = static_cast<int>(tensors.size());
      in.kind = TensorKind::ifmap_load;
      in.owner_layer = layer.id;
      in.tile_index = tile.tile_index;
      in.source_layer = src;
      in.bytes = tile.work.in_regions[k].elements() * layer.bytes_per_element;
      in.first_consumer = in.last_consumer = g;
      in.start = g;
      in.end = g + 1;
      in.name = "I_" + layer.name + piece_suffix(tile.tile_index);
      if (dram_inputs > 1) in.name += "@" + (src ? graph.layer(*src).name : std::string("input"));
      if (src) {
        const auto si = graph.index_of(*src);
        for (std::size_t ps = 0; ps < store_of[si].size(); ++ps) {
          const auto& producer_tile = s->tiles[static_cast<std::size_t>(tile_of[si][ps])];
          if (intersects(producer_tile.work.out_region, tile.work.in_regions[k])) {
            in.after_stores.push_back(store_of[si][ps]);
          }
        }
      }
      tile.loads.push_back(in.id);
      tensors.push_back(std::move(in));
    }
    if (needs_store[li]) {
      DramTensor out;
      out.id = static_cast<int>(tensors.size());
      out.kind = TensorKind::ofmap_store;
      out.owner_layer = layer.id;
      out.tile_index = tile.tile_index;
      out.bytes = tile.work.ofmap_bytes;
      out.producer = g;
      out.start = g;
      out.end = g + 1;
      out.name = "O_" + layer.name + piece_suffix(tile.tile_index);
      store_of[li].push_back(out.id);
      tensors.push_back(std::move(out));
    }
  }

  // On-chip fmaps: tile-granular inside a fused group, aggregated across
  // groups until the consumer's last tile.
  for (std::size_t li = 0; li < n; ++li) {
    const auto& layer = graph.layers()[li];
    std::vector<int> onchip_consumers;
    for (int succ : graph.successors(layer.id)) {
      if (lg_of[graph.index_of(succ)] == lg_of[li]) onchip_consumers.push_back(succ);
    }
    if (onchip_consumers.empty()) continue;
    for (std::size_t t = 0; t < tile_of[li].size(); ++t) {
      const int produced = tile_of[li][t];
      OnchipLifetime life;
      life.tensor = "O_" + layer.name + piece_suffix(static_cast<int>(t));
      life.producer_layer = layer.id;
      life.tile_index = static_cast<int>(t);
      life.bytes = s->tiles[static_cast<std::size_t>(produced)].work.ofmap_bytes;
      life.alive_from = produced;
      life.alive_to = produced + 1;
      for (int c : onchip_consumers) {
        const auto ci = graph.index_of(c);
        const int last_use = flg_of[ci] == flg_of[li] ? tile_of[ci][t] : tile_of[ci].back();
        life.alive_to = std::max(life.alive_to, last_use + 1);
        if (flg_of[ci] != flg_of[li]) life.aggregated = true;
      }
      if (needs_store[li]) life.linked_store = store_of[li][t];
      s->onchip_lifetimes.push_back(std::move(life));
    }
  }

  for (std::size_t li = 0; li < n; ++li) {
    const auto& layer = graph.layers()[li];
    if (!layer.has_weights()) continue;
    s->weight_residency.push_back({layer.id, tile_of[li].front(), tile_of[li].back() + 1});
  }
  return ExecutionPlan(std::move(s));
}

// ---------------------------------------------------------------------------
// Stage 2: DRAM attributes

ExecutionPlan double_buffer_dlsa(const ExecutionPlan& plan) {
  const int vend = plan.virtual_end();
  const auto n = plan.tensor_count();
  std::vector<LivingDuration> durations(n);
  std::vector<std::tuple<int, int, int>> keys;
  keys.reserve(n);
  for (std::size_t id = 0; id < n; ++id) {
    const auto& t = plan.tensor_info(static_cast<int>(id));
    if (t.is_load()) {
      durations[id] = {std::max(0, t.first_consumer - 1), t.last_consumer + 1};
      keys.emplace_back(t.first_consumer, 0, t.id);
    } else {
      durations[id] = {t.producer, std::min(t.producer + 1, vend)};
      keys.emplace_back(t.producer, 1, t.id);
    }
  }
  std::sort(keys.begin(), keys.end());
  std::vector<int> order;
  order.reserve(n);
  for (const auto& k : keys) order.push_back(std::get<2>(k));
  ExecutionPlan out = plan;
  out.set_dlsa(std::move(order), std::move(durations));
  return out;
}

ExecutionPlan apply_dlsa(const ExecutionPlan& plan, const std::vector<int>& order,
                         const std::vector<LivingDuration>& durations) {
  if (auto violations = validate_dlsa(plan, order, durations); !violations.empty()) {
    throw DlsaError(violations.front());
  }
  ExecutionPlan out = plan;
  out.set_dlsa(order, durations);
  return out;
}

ExecutionPlan parse_encoding(const ModelGraph& graph, const ScheduleEncoding& enc) {
  auto plan = parse_lfa(graph, enc);
  if (!enc.has_dlsa()) return double_buffer_dlsa(plan);
  return apply_dlsa(plan, enc.dram_tensor_order, enc.living_durations);
}

// ---------------------------------------------------------------------------
// JSON

std::string serialize_encoding(const ScheduleEncoding& enc) {
  json durations = json::array();
  for (const auto& d : enc.living_durations) durations.push_back({d.start, d.end});
  json doc = {{"schema", "soma.encoding.v1"},
              {"computing_order", enc.computing_order},
              {"flc_set", enc.flc_set},
              {"tiling_numbers", enc.tiling_numbers},
              {"dram_cut_set", enc.dram_cut_set},
              {"dram_tensor_order", enc.dram_tensor_order},
              {"living_durations", durations}};
  return doc.dump(2) + "\n";
}

ScheduleEncoding parse_encoding_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("encoding: ") + e.what());
  }
  ScheduleEncoding enc;
  try {
    enc.computing_order = doc.at("computing_order").get<std::vector<int>>();
    for (int c : doc.at("flc_set").get<std::vector<int>>()) enc.flc_set.insert(c);
    enc.tiling_numbers = doc.at("tiling_numbers").get<std::vector<std::int64_t>>();
    for (int c : doc.at("dram_cut_set").get<std::vector<int>>()) enc.dram_cut_set.insert(c);
    enc.dram_tensor_order = doc.value("dram_tensor_order", std::vector<int>{});
    for (const auto& d : doc.value("living_durations", json::array())) {
      enc.living_durations.push_back({d.at(0).get<int>(), d.at(1).get<int>()});
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("encoding: ") + e.what());
  }
  return enc;
}

}  // namespace soma
