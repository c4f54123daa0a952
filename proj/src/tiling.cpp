// SPDX-License-Identifier: Apache-2.0

#include "soma/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace soma {

TileRegion full_output_region(const Layer& layer) {
  return {{0, layer.batch}, {0, layer.out_channels}, {0, layer.out_height}, {0, layer.out_width}};
}

TileRegion full_input_region(const Layer& layer) {
  return {{0, layer.batch}, {0, layer.in_channels}, {0, layer.in_height}, {0, layer.in_width}};
}

namespace {

bool overlaps(const IndexRange& a, const IndexRange& b) {
  return a.begin < b.end && b.begin < a.end;
}

IndexRange hull(const IndexRange& a, const IndexRange& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  return {std::min(a.begin, b.begin), std::max(a.end, b.end)};
}

IndexRange backprop_range(const IndexRange& out, std::int64_t kernel, std::int64_t stride,
                          std::int64_t pad, std::int64_t in_extent) {
  if (out.empty()) return {0, 0};
  const std::int64_t begin = out.begin * stride - pad;
  const std::int64_t end = (out.end - 1) * stride - pad + kernel;
  return {std::clamp<std::int64_t>(begin, 0, in_extent),
          std::clamp<std::int64_t>(end, 0, in_extent)};
}

}  // namespace

bool intersects(const TileRegion& a, const TileRegion& b) {
  return overlaps(a.batch, b.batch) && overlaps(a.channel, b.channel) &&
         overlaps(a.height, b.height) && overlaps(a.width, b.width);
}

TileRegion bounding_union(const TileRegion& a, const TileRegion& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  return {hull(a.batch, b.batch), hull(a.channel, b.channel), hull(a.height, b.height),
          hull(a.width, b.width)};
}

std::vector<IndexRange> split_evenly(std::int64_t extent, std::int64_t parts) {
  std::vector<IndexRange> out;
  if (parts <= 0) return out;
  out.reserve(static_cast<std::size_t>(parts));
  const std::int64_t base = extent / parts;
  const std::int64_t extra = extent % parts;
  std::int64_t pos = 0;
  for (std::int64_t i = 0; i < parts; ++i) {
    const std::int64_t len = base + (i < extra ? 1 : 0);
    out.push_back({pos, pos + len});
    pos += len;
  }
  return out;
}

bool grid_fits(const Layer& layer, const TileGrid& grid) {
  return grid.batch >= 1 && grid.height >= 1 && grid.width >= 1 && grid.batch <= layer.batch &&
         grid.height <= layer.out_height && grid.width <= layer.out_width;
}

TileGrid choose_tile_grid(const Layer& layer, std::int64_t tiling_number) {
  if (tiling_number < 1) throw std::invalid_argument("tiling number must be >= 1");
  const std::int64_t limit = layer.batch * layer.out_height * layer.out_width;
  if (tiling_number > limit) {
    throw std::invalid_argument("tiling number " + std::to_string(tiling_number) +
                                " exceeds the " + std::to_string(limit) +
                                " output positions of layer '" + layer.name + "'");
  }
  // The batch takes as many splits as it can; it adds no halo.
  for (std::int64_t nb = std::min(tiling_number, layer.batch); nb >= 1; --nb) {
    if (tiling_number % nb != 0) continue;
    const std::int64_t rest = tiling_number / nb;
    std::optional<TileGrid> best;
    double best_aspect = 0.0;
    for (std::int64_t nh = rest; nh >= 1; --nh) {
      if (rest % nh != 0) continue;
      const std::int64_t nw = rest / nh;
      if (nh > layer.out_height || nw > layer.out_width) continue;
      const double th = static_cast<double>(layer.out_height) / static_cast<double>(nh);
      const double tw = static_cast<double>(layer.out_width) / static_cast<double>(nw);
      const double aspect = std::max(th, tw) / std::min(th, tw);
      // Strict improvement only: on ties the larger height split (seen first) wins.
      if (!best || aspect < best_aspect - 1e-12) {
        best = TileGrid{nb, nh, nw};
        best_aspect = aspect;
      }
    }
    if (best) return *best;
  }
  throw std::invalid_argument("layer '" + layer.name + "' cannot be split into " +
                              std::to_string(tiling_number) + " tiles");
}

std::vector<TileRegion> partition_with_grid(const Layer& layer, const TileGrid& grid) {
  if (!grid_fits(layer, grid)) {
    throw std::invalid_argument("tile grid does not fit layer '" + layer.name + "'");
  }
  const auto bs = split_evenly(layer.batch, grid.batch);
  const auto hs = split_evenly(layer.out_height, grid.height);
  const auto ws = split_evenly(layer.out_width, grid.width);
  std::vector<TileRegion> out;
  out.reserve(static_cast<std::size_t>(grid.count()));
  for (const auto& b : bs) {
    for (const auto& h : hs) {
      for (const auto& w : ws) out.push_back({b, {0, layer.out_channels}, h, w});
    }
  }
  return out;
}

std::vector<TileRegion> partition_output_tiles(const Layer& last_layer,
                                               std::int64_t tiling_number) {
  return partition_with_grid(last_layer, choose_tile_grid(last_layer, tiling_number));
}

TileRegion backprop_input_region(const Layer& layer, const TileRegion& out_region) {
  if (out_region.empty()) return {};
  return {out_region.batch,
          {0, layer.in_channels},
          backprop_range(out_region.height, layer.kernel_h, layer.stride_h, layer.pad_h,
                         layer.in_height),
          backprop_range(out_region.width, layer.kernel_w, layer.stride_w, layer.pad_w,
                         layer.in_width)};
}

bool is_power_of_two(std::int64_t value) { return value > 0 && (value & (value - 1)) == 0; }

std::int64_t min_tiling_number(std::span<const Layer> flg_layers) {
  // One tile is always a valid split; the search refines from there.
  std::int64_t t = 1;
  for (const auto& layer : flg_layers) {
    while (t > 1 && t > layer.batch * layer.out_height * layer.out_width) t /= 2;
  }
  return t;
}

const LayerGeometry& TileGeometry::of(int layer_id) const {
  for (const auto& lg : layers) {
    if (lg.layer_id == layer_id) return lg;
  }
  throw std::out_of_range("layer " + std::to_string(layer_id) + " not in fused group");
}

std::int64_t TileGeometry::total_ops() const {
  std::int64_t total = 0;
  for (const auto& lg : layers) {
    for (const auto& t : lg.tiles) total += t.ops;
  }
  return total;
}

namespace {

struct DimRanges {
  std::vector<IndexRange> batch, height, width;
};

bool in_group(std::span<const int> ids, int id) {
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

// Per-dimension ranges for every layer of the group, or nullopt when the
// grid does not fit some layer that has no in-group consumer.
std::optional<std::vector<DimRanges>> group_ranges(const ModelGraph& graph,
                                                   std::span<const int> ids,
                                                   const TileGrid& grid) {
  std::vector<DimRanges> ranges(ids.size());
  for (std::size_t i = ids.size(); i-- > 0;) {
    const auto& layer = graph.layer(ids[i]);
    std::vector<int> consumers;
    for (int succ : graph.successors(layer.id)) {
      if (in_group(ids, succ)) consumers.push_back(succ);
    }
    auto& r = ranges[i];
    if (consumers.empty()) {
      if (!grid_fits(layer, grid)) return std::nullopt;
      r.batch = split_evenly(layer.batch, grid.batch);
      r.height = split_evenly(layer.out_height, grid.height);
      r.width = split_evenly(layer.out_width, grid.width);
      continue;
    }
    r.batch.assign(static_cast<std::size_t>(grid.batch), {});
    r.height.assign(static_cast<std::size_t>(grid.height), {});
    r.width.assign(static_cast<std::size_t>(grid.width), {});
    for (int cid : consumers) {
      const auto pos = static_cast<std::size_t>(
          std::find(ids.begin(), ids.end(), cid) - ids.begin());
      const auto& c = graph.layer(cid);
      const auto& cr = ranges[pos];
      for (std::size_t k = 0; k < r.batch.size(); ++k) r.batch[k] = hull(r.batch[k], cr.batch[k]);
      for (std::size_t k = 0; k < r.height.size(); ++k) {
        r.height[k] = hull(r.height[k], backprop_range(cr.height[k], c.kernel_h, c.stride_h,
                                                       c.pad_h, c.in_height));
      }
      for (std::size_t k = 0; k < r.width.size(); ++k) {
        r.width[k] = hull(r.width[k], backprop_range(cr.width[k], c.kernel_w, c.stride_w,
                                                     c.pad_w, c.in_width));
      }
    }
    // Close gaps (e.g. strided consumers skip rows) so every output element
    // is produced by some tile.
    auto cover = [](std::vector<IndexRange>& v, std::int64_t extent) {
      v.front().begin = 0;
      v.back().end = extent;
      for (std::size_t k = 0; k + 1 < v.size(); ++k) {
        if (v[k].end < v[k + 1].begin) v[k].end = v[k + 1].begin;
      }
    };
    cover(r.batch, layer.batch);
    cover(r.height, layer.out_height);
    cover(r.width, layer.out_width);
  }
  return ranges;
}

}  // namespace

bool geometry_feasible(const ModelGraph& graph, std::span<const int> flg_layer_ids,
                       std::int64_t tiling_number) {
  if (flg_layer_ids.empty() || tiling_number < 1) return false;
  TileGrid grid;
  try {
    grid = choose_tile_grid(graph.layer(flg_layer_ids.back()), tiling_number);
  } catch (const std::invalid_argument&) {
    return false;
  }
  return group_ranges(graph, flg_layer_ids, grid).has_value();
}

std::int64_t max_tiling_number(const ModelGraph& graph, std::span<const int> flg_layer_ids) {
  std::int64_t t = 1;
  while (geometry_feasible(graph, flg_layer_ids, t * 2)) t *= 2;
  return t;
}

TileGeometry flg_tile_geometry(const ModelGraph& graph, std::span<const int> flg_layer_ids,
                               std::int64_t tiling_number, int flg_id) {
  if (flg_layer_ids.empty()) throw std::invalid_argument("empty fused group");
  TileGeometry geo;
  geo.flg_id = flg_id;
  geo.tiling_number = tiling_number;
  geo.grid = choose_tile_grid(graph.layer(flg_layer_ids.back()), tiling_number);
  auto ranges = group_ranges(graph, flg_layer_ids, geo.grid);
  if (!ranges) {
    throw std::invalid_argument("fused group cannot be split into " +
                                std::to_string(tiling_number) + " tiles");
  }
  for (std::size_t i = 0; i < flg_layer_ids.size(); ++i) {
    const auto& layer = graph.layer(flg_layer_ids[i]);
    const auto& r = (*ranges)[i];
    const auto sizes = tensor_sizes(layer);
    LayerGeometry lg;
    lg.layer_id = layer.id;
    lg.tiles.reserve(static_cast<std::size_t>(tiling_number));
    for (const auto& b : r.batch) {
      for (const auto& h : r.height) {
        for (const auto& w : r.width) {
          LayerTile tile;
          tile.out_region = {b, {0, layer.out_channels}, h, w};
          const auto in = backprop_input_region(layer, tile.out_region);
          tile.in_regions.assign(layer.input_count(), in);
          const std::int64_t out_elems = tile.out_region.elements();
          tile.ops = layer.has_weights()
                         ? out_elems * layer.in_channels * layer.kernel_h * layer.kernel_w
                         : out_elems;
          tile.ifmap_bytes = static_cast<std::int64_t>(tile.in_regions.size()) * in.elements() *
                             layer.bytes_per_element;
          tile.weight_bytes = sizes.weight_bytes;
          tile.ofmap_bytes = out_elems * layer.bytes_per_element;
          lg.tiles.push_back(std::move(tile));
        }
      }
    }
    geo.layers.push_back(std::move(lg));
  }
  return geo;
}

}  // namespace soma
