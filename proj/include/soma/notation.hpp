// SPDX-License-Identifier: Apache-2.0
//
// Six-attribute schedule encoding and its two parsing stages.
//
// Layer-fusion attributes (computing order, fine-grained cut set, tiling
// numbers, DRAM cut set) determine the global tile sequence, the set of DRAM
// tensors, and the on-chip lifetimes. DRAM attributes (tensor order and
// living durations) determine when each DRAM tensor moves and how long it
// occupies the buffer.
//
// Tiles are addressed by their index in the global tile sequence. Index
// tile_count() is a virtual end-of-sequence marker usable as an End.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "soma/model.hpp"
#include "soma/tiling.hpp"

namespace soma {

struct LivingDuration {
  int start = 0;
  int end = 0;  // exclusive: alive while start <= tile < end
  bool operator==(const LivingDuration&) const = default;
};

struct ScheduleEncoding {
  std::vector<int> computing_order;  // layer ids
  std::set<int> flc_set;             // position i: cut after the i-th layer (1-based)
  std::vector<std::int64_t> tiling_numbers;
  std::set<int> dram_cut_set;
  std::vector<int> dram_tensor_order;             // tensor ids; empty until assigned
  std::vector<LivingDuration> living_durations;  // indexed by tensor id

  bool has_dlsa() const { return !dram_tensor_order.empty(); }
  std::size_t flg_count() const { return flc_set.size() + 1; }
  bool same_lfa(const ScheduleEncoding& other) const {
    return computing_order == other.computing_order && flc_set == other.flc_set &&
           tiling_numbers == other.tiling_numbers && dram_cut_set == other.dram_cut_set;
  }
  bool operator==(const ScheduleEncoding&) const = default;
};

enum class TensorKind { weight_load, ifmap_load, ofmap_store };
std::string_view to_string(TensorKind kind);

struct DramTensor {
  int id = 0;
  TensorKind kind = TensorKind::weight_load;
  int owner_layer = 0;
  std::optional<int> tile_index;    // per-tile fmap pieces only
  std::optional<int> source_layer;  // ifmap pieces read from a stored layer; nullopt = network input
  std::int64_t bytes = 0;
  int start = 0;
  int end = 0;
  std::string name;

  // Bounds fixed by the layer-fusion attributes.
  int first_consumer = 0;  // loads
  int last_consumer = 0;   // loads
  int producer = 0;        // stores
  std::vector<int> after_stores;  // ifmap pieces: stores whose data they read

  bool is_load() const { return kind != TensorKind::ofmap_store; }
  // Load: the fixed End. Store: the fixed Start.
  int fixed_bound() const { return is_load() ? last_consumer + 1 : producer; }
};

struct PlanTile {
  int layer_id = 0;
  int tile_index = 0;
  int flg = 0;
  int lg = 0;
  std::string name;
  LayerTile work;
  std::vector<int> loads;  // DRAM load ids this tile reads
};

struct OnchipLifetime {
  std::string tensor;
  int producer_layer = 0;
  int tile_index = 0;
  std::int64_t bytes = 0;
  int alive_from = 0;
  int alive_to = 0;  // exclusive
  bool aggregated = false;   // read by a later fused group of the same layer-fusion group
  std::optional<int> linked_store;  // same data also stored to DRAM
};

struct WeightResidency {
  int layer_id = 0;
  int alive_from = 0;
  int alive_to = 0;  // exclusive
};

// Everything the layer-fusion attributes determine. Shared between plans
// that differ only in DRAM attributes.
struct PlanStructure {
  std::shared_ptr<const ModelGraph> graph;
  ScheduleEncoding lfa;  // DLSA fields empty
  std::vector<TileGeometry> geometries;  // one per fused group
  std::vector<PlanTile> tiles;
  std::vector<DramTensor> tensors;  // by id; start/end hold provisional values
  std::vector<OnchipLifetime> onchip_lifetimes;
  std::vector<WeightResidency> weight_residency;
  std::vector<int> flg_first_tile;  // first tile of each fused group
  std::vector<int> flg_lg;          // layer-fusion group of each fused group
  std::vector<int> flg_boundaries;  // cut positions (same as flc_set)
  std::vector<int> lg_boundaries;   // cut positions (same as dram_cut_set)
};

class ExecutionPlan {
 public:
  ExecutionPlan() = default;
  explicit ExecutionPlan(std::shared_ptr<const PlanStructure> structure);

  const PlanStructure& structure() const { return *structure_; }
  std::shared_ptr<const PlanStructure> shared_structure() const { return structure_; }
  const ModelGraph& graph() const { return *structure_->graph; }

  int tile_count() const { return static_cast<int>(structure_->tiles.size()); }
  int virtual_end() const { return tile_count(); }
  const std::vector<PlanTile>& tile_sequence() const { return structure_->tiles; }
  std::size_t tensor_count() const { return structure_->tensors.size(); }
  const DramTensor& tensor_info(int id) const {
    return structure_->tensors[static_cast<std::size_t>(id)];
  }
  // Tensors in DRAM order with their current living durations.
  std::vector<DramTensor> dram_tensors() const;
  const std::vector<OnchipLifetime>& onchip_lifetimes() const {
    return structure_->onchip_lifetimes;
  }

  bool has_dlsa() const { return has_dlsa_; }
  const std::vector<int>& dram_tensor_order() const { return order_; }
  const std::vector<LivingDuration>& living_durations() const { return durations_; }
  const LivingDuration& duration(int id) const {
    return durations_[static_cast<std::size_t>(id)];
  }

  ScheduleEncoding encoding() const;

  // Mutators used by the DLSA stage. No validation; see apply_dlsa.
  void set_dlsa(std::vector<int> order, std::vector<LivingDuration> durations);

  std::int64_t total_dram_bytes() const;

 private:
  std::shared_ptr<const PlanStructure> structure_;
  std::vector<int> order_;
  std::vector<LivingDuration> durations_;
  bool has_dlsa_ = false;
};

class DlsaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Unfused starting point: each layer its own group, one tile each.
ScheduleEncoding initial_encoding(const ModelGraph& graph);

// Layer-fusion attribute checks plus, when present, DRAM attribute checks.
std::vector<std::string> validate_encoding(const ModelGraph& graph, const ScheduleEncoding& enc);

// Fused groups as lists of layer ids in computing order.
std::vector<std::vector<int>> fused_groups(const ScheduleEncoding& enc);

// Stage 1 parsing. Throws ValidationError if the layer-fusion attributes are invalid.
ExecutionPlan parse_lfa(const ModelGraph& graph, const ScheduleEncoding& enc);
ExecutionPlan parse_lfa(std::shared_ptr<const ModelGraph> graph, const ScheduleEncoding& enc);

// Prefetch during the previous tile, store by the next tile.
ExecutionPlan double_buffer_dlsa(const ExecutionPlan& plan);

// Throws DlsaError naming the offending tensor.
ExecutionPlan apply_dlsa(const ExecutionPlan& plan, const std::vector<int>& order,
                         const std::vector<LivingDuration>& durations);

// Both stages: DRAM attributes from the encoding if present, else double buffer.
ExecutionPlan parse_encoding(const ModelGraph& graph, const ScheduleEncoding& enc);

// Checks order/durations against the plan's fixed bounds; empty if valid.
std::vector<std::string> validate_dlsa(const ExecutionPlan& plan, const std::vector<int>& order,
                                       const std::vector<LivingDuration>& durations);

std::string serialize_encoding(const ScheduleEncoding& enc);
ScheduleEncoding parse_encoding_json(std::string_view text);

}  // namespace soma
