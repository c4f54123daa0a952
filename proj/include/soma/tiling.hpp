// SPDX-License-Identifier: Apache-2.0
//
// Tile partitioning of fused layer groups and halo back-propagation.
//
// A fused group is computed tile by tile. The tile grid (batch x height x
// width split counts) comes from the group's last layer; every layer without
// an in-group consumer is split with the same grid, and the regions of the
// remaining layers are derived from what their in-group consumers demand.
// Channels are never split.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "soma/model.hpp"

namespace soma {

struct IndexRange {
  std::int64_t begin = 0;
  std::int64_t end = 0;  // exclusive

  std::int64_t size() const { return end > begin ? end - begin : 0; }
  bool empty() const { return end <= begin; }
  bool operator==(const IndexRange&) const = default;
};

struct TileRegion {
  IndexRange batch;
  IndexRange channel;
  IndexRange height;
  IndexRange width;

  std::int64_t elements() const {
    return batch.size() * channel.size() * height.size() * width.size();
  }
  bool empty() const { return elements() == 0; }
  bool operator==(const TileRegion&) const = default;
};

// Full output (or input) region of a layer.
TileRegion full_output_region(const Layer& layer);
TileRegion full_input_region(const Layer& layer);

bool intersects(const TileRegion& a, const TileRegion& b);
// Smallest box containing both operands; an empty operand is ignored.
TileRegion bounding_union(const TileRegion& a, const TileRegion& b);

// Split counts along batch, height, and width. count() == tiling number.
struct TileGrid {
  std::int64_t batch = 1;
  std::int64_t height = 1;
  std::int64_t width = 1;

  std::int64_t count() const { return batch * height * width; }
  bool operator==(const TileGrid&) const = default;
};

// Batch first, then height/width with the most square tiles; throws
// std::invalid_argument when the layer cannot be split into that many tiles.
TileGrid choose_tile_grid(const Layer& layer, std::int64_t tiling_number);
bool grid_fits(const Layer& layer, const TileGrid& grid);

// Splits [0, extent) into `parts` contiguous ranges, larger parts first.
std::vector<IndexRange> split_evenly(std::int64_t extent, std::int64_t parts);

std::vector<TileRegion> partition_output_tiles(const Layer& last_layer,
                                               std::int64_t tiling_number);
std::vector<TileRegion> partition_with_grid(const Layer& layer, const TileGrid& grid);

// Input region needed to produce `out_region` (receptive field, clamped).
TileRegion backprop_input_region(const Layer& layer, const TileRegion& out_region);

bool is_power_of_two(std::int64_t value);
std::int64_t min_tiling_number(std::span<const Layer> flg_layers);
// Largest power of two the group can be split into (>= 1).
std::int64_t max_tiling_number(const ModelGraph& graph, std::span<const int> flg_layer_ids);

struct LayerTile {
  TileRegion out_region;
  std::vector<TileRegion> in_regions;  // one per input source: predecessors, then network input
  std::int64_t ops = 0;                // MACs (conv/matmul) or output elements
  std::int64_t ifmap_bytes = 0;        // all input regions
  std::int64_t weight_bytes = 0;
  std::int64_t ofmap_bytes = 0;
};

struct LayerGeometry {
  int layer_id = 0;
  std::vector<LayerTile> tiles;  // indexed by tile
};

struct TileGeometry {
  int flg_id = 0;
  std::int64_t tiling_number = 1;
  TileGrid grid;
  std::vector<LayerGeometry> layers;  // in the group's computing order

  const LayerGeometry& of(int layer_id) const;
  std::int64_t total_ops() const;
};

// True when the group can be split into `tiling_number` tiles.
bool geometry_feasible(const ModelGraph& graph, std::span<const int> flg_layer_ids,
                       std::int64_t tiling_number);

// flg_layer_ids must be in computing order. Throws std::invalid_argument if
// the group cannot be split into `tiling_number` tiles.
TileGeometry flg_tile_geometry(const ModelGraph& graph, std::span<const int> flg_layer_ids,
                               std::int64_t tiling_number, int flg_id = 0);

}  // namespace soma
