// SPDX-License-Identifier: Apache-2.0

#include <vector>

#include "doctest.h"
#include "soma/tiling.hpp"

using namespace soma;

namespace {

Layer make_layer(LayerKind kind, std::int64_t batch, std::int64_t ch, std::int64_t in_h,
                 std::int64_t in_w, std::int64_t k, std::int64_t s, std::int64_t p) {
  Layer l;
  l.kind = kind;
  l.batch = batch;
  l.in_channels = l.out_channels = ch;
  l.in_height = in_h;
  l.in_width = in_w;
  l.kernel_h = l.kernel_w = k;
  l.stride_h = l.stride_w = s;
  l.pad_h = l.pad_w = p;
  l.out_height = conv_output_extent(in_h, k, s, p);
  l.out_width = conv_output_extent(in_w, k, s, p);
  l.is_network_input_consumer = true;
  l.is_network_output_producer = true;
  return l;
}

// Every output element of every layer is produced by some tile.
bool covers_all(const ModelGraph& g, const TileGeometry& geo) {
  for (const auto& lg : geo.layers) {
    const auto& layer = g.layer(lg.layer_id);
    std::vector<char> hit(static_cast<std::size_t>(layer.batch * layer.out_height * layer.out_width), 0);
    for (const auto& t : lg.tiles) {
      if (t.out_region.channel != IndexRange{0, layer.out_channels}) return false;
      for (auto b = t.out_region.batch.begin; b < t.out_region.batch.end; ++b)
        for (auto h = t.out_region.height.begin; h < t.out_region.height.end; ++h)
          for (auto w = t.out_region.width.begin; w < t.out_region.width.end; ++w)
            hit[static_cast<std::size_t>((b * layer.out_height + h) * layer.out_width + w)] = 1;
    }
    for (char c : hit) {
      if (!c) return false;
    }
  }
  return true;
}

std::int64_t count_overlap(const std::vector<LayerTile>& tiles) {
  std::int64_t n = 0;
  for (std::size_t i = 0; i < tiles.size(); ++i)
    for (std::size_t j = i + 1; j < tiles.size(); ++j)
      if (intersects(tiles[i].out_region, tiles[j].out_region)) ++n;
  return n;
}

}  // namespace

TEST_CASE("min_tiling_number examples") {
  const auto conv = make_layer(LayerKind::conv, 1, 8, 32, 32, 3, 1, 1);
  CHECK(min_tiling_number(std::vector<Layer>{conv}) == 1);
  const auto tiny = make_layer(LayerKind::conv, 1, 8, 1, 1, 1, 1, 0);
  CHECK(min_tiling_number(std::vector<Layer>{tiny}) == 1);
  const auto b4 = make_layer(LayerKind::conv, 4, 8, 8, 8, 1, 1, 0);
  CHECK(min_tiling_number(std::vector<Layer>{b4}) == 1);
}

TEST_CASE("partition_output_tiles examples") {
  const auto b4 = make_layer(LayerKind::conv, 4, 8, 16, 16, 1, 1, 0);
  const auto two = partition_output_tiles(b4, 2);
  REQUIRE(two.size() == 2);
  CHECK(two[0].batch == IndexRange{0, 2});
  CHECK(two[1].batch == IndexRange{2, 4});
  for (const auto& r : two) {
    CHECK(r.height == IndexRange{0, 16});
    CHECK(r.width == IndexRange{0, 16});
    CHECK(r.channel == IndexRange{0, 8});
  }

  const auto square = make_layer(LayerKind::conv, 1, 8, 32, 32, 1, 1, 0);
  const auto four = partition_output_tiles(square, 4);
  REQUIRE(four.size() == 4);
  CHECK(four[0].height == IndexRange{0, 16});
  CHECK(four[0].width == IndexRange{0, 16});
  CHECK(four[1].height == IndexRange{0, 16});
  CHECK(four[1].width == IndexRange{16, 32});
  CHECK(four[3].height == IndexRange{16, 32});
  CHECK(four[3].width == IndexRange{16, 32});

  const auto seven = make_layer(LayerKind::conv, 1, 8, 7, 1, 1, 1, 0);
  const auto halves = partition_output_tiles(seven, 2);
  REQUIRE(halves.size() == 2);
  CHECK(halves[0].height == IndexRange{0, 4});
  CHECK(halves[1].height == IndexRange{4, 7});

  CHECK(partition_output_tiles(square, 1)[0] == full_output_region(square));
  CHECK_THROWS_AS(partition_output_tiles(seven, 8), std::invalid_argument);
}

TEST_CASE("backprop_input_region examples") {
  const auto conv = make_layer(LayerKind::conv, 1, 8, 10, 10, 3, 1, 0);
  TileRegion out{{0, 1}, {0, 8}, {0, 4}, {0, 8}};
  const auto in = backprop_input_region(conv, out);
  CHECK(in.height == IndexRange{0, 6});
  CHECK(in.width == IndexRange{0, 10});
  CHECK(in.channel == IndexRange{0, 8});

  const auto one = make_layer(LayerKind::conv, 2, 8, 9, 9, 1, 1, 0);
  TileRegion r{{1, 2}, {0, 8}, {3, 7}, {2, 5}};
  CHECK(backprop_input_region(one, r) == r);

  const auto pool = make_layer(LayerKind::pool, 1, 8, 16, 16, 2, 2, 0);
  TileRegion pr{{0, 1}, {0, 8}, {2, 4}, {0, 8}};
  CHECK(backprop_input_region(pool, pr).height == IndexRange{4, 8});
}

TEST_CASE("flg_tile_geometry examples on toy5") {
  const auto g = builtin_workload("toy5", 1);
  const std::vector<int> a{0};
  const auto ga = flg_tile_geometry(g, a, 2);
  REQUIRE(ga.layers.size() == 1);
  CHECK(ga.layers[0].tiles[0].out_region.height == IndexRange{0, 16});
  CHECK(ga.layers[0].tiles[1].out_region.height == IndexRange{16, 32});
  CHECK(covers_all(g, ga));
  CHECK(count_overlap(ga.layers[0].tiles) == 0);

  // Receptive field of a 3x3 pad-1 conv: one halo row toward the split.
  const std::vector<int> ab{0, 1};
  const auto gab = flg_tile_geometry(g, ab, 2);
  const auto& b = gab.of(1).tiles;
  const auto& atiles = gab.of(0).tiles;
  CHECK(b[0].out_region.height == IndexRange{0, 16});
  CHECK(b[1].out_region.height == IndexRange{16, 32});
  CHECK(atiles[0].out_region.height == IndexRange{0, 17});
  CHECK(atiles[1].out_region.height == IndexRange{15, 32});

  const auto single = flg_tile_geometry(g, a, 1);
  const auto& t = single.layers[0].tiles[0];
  const auto sizes = tensor_sizes(g.layer(0));
  CHECK(t.out_region == full_output_region(g.layer(0)));
  CHECK(t.ofmap_bytes == sizes.ofmap_bytes);
  CHECK(t.ifmap_bytes == sizes.ifmap_bytes);
  CHECK(t.weight_bytes == sizes.weight_bytes);
  CHECK(t.ops == layer_ops(g.layer(0)));
}

TEST_CASE("fan-out inside a group takes the union of consumer demands") {
  const auto g = builtin_workload("toy5", 1);
  const std::vector<int> ced{2, 4, 3};  // C feeds both E (1x1) and D (3x3)
  const auto geo = flg_tile_geometry(g, ced, 2);
  const auto& c = geo.of(2).tiles;
  CHECK(c[0].out_region.height == IndexRange{0, 9});
  CHECK(c[1].out_region.height == IndexRange{7, 16});
  CHECK(geo.of(2).tiles[0].in_regions[0].height == IndexRange{0, 18});
  CHECK(covers_all(g, geo));
}

TEST_CASE("property: coverage, sink disjointness and halo monotonicity") {
  for (const auto& name : builtin_workload_names()) {
    const auto g = builtin_workload(name, 2);
    // Every contiguous group of up to four layers in declaration order.
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (std::size_t len = 1; len <= 4 && i + len <= g.size(); ++len) {
        std::vector<int> ids;
        for (std::size_t k = i; k < i + len; ++k) ids.push_back(g.layers()[k].id);
        std::int64_t prev_ops = -1;
        bool has_kernel = false;
        for (int id : ids) has_kernel |= g.layer(id).kernel_h > 1;
        const auto cap = max_tiling_number(g, ids);
        for (std::int64_t t = 1; t <= std::min<std::int64_t>(cap, 64); t *= 2) {
          CAPTURE(name);
          CAPTURE(i);
          CAPTURE(len);
          CAPTURE(t);
          const auto geo = flg_tile_geometry(g, ids, t);
          CHECK(covers_all(g, geo));
          CHECK(count_overlap(geo.layers.back().tiles) == 0);
          const auto ops = geo.total_ops();
          if (prev_ops >= 0) {
            if (has_kernel) CHECK(ops >= prev_ops);
          }
          if (!has_kernel) {
            std::int64_t untiled = 0;
            for (int id : ids) untiled += layer_ops(g.layer(id));
            CHECK(ops == untiled);
          }
          prev_ops = ops;
        }
      }
    }
  }
}
