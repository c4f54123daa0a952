// SPDX-License-Identifier: Apache-2.0
//
// Workload graphs: layers, shapes, and per-layer tensor sizes.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace soma {

enum class LayerKind { conv, pool, matmul, eltwise };

std::string_view to_string(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(std::string_view text);

struct Layer {
  int id = 0;
  std::string name;
  LayerKind kind = LayerKind::conv;
  std::int64_t batch = 1;
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  std::int64_t in_height = 1;
  std::int64_t in_width = 1;
  std::int64_t out_height = 1;
  std::int64_t out_width = 1;
  std::int64_t kernel_h = 1;
  std::int64_t kernel_w = 1;
  std::int64_t stride_h = 1;
  std::int64_t stride_w = 1;
  std::int64_t pad_h = 0;
  std::int64_t pad_w = 0;
  std::int64_t bytes_per_element = 1;
  std::vector<int> predecessors;
  bool is_network_input_consumer = false;
  bool is_network_output_producer = false;

  bool has_weights() const { return kind == LayerKind::conv || kind == LayerKind::matmul; }
  // Number of distinct ifmap sources: predecessors plus the network input.
  std::size_t input_count() const {
    return predecessors.size() + (is_network_input_consumer ? 1 : 0);
  }

  bool operator==(const Layer&) const = default;
};

struct TensorSizes {
  std::int64_t weight_bytes = 0;
  std::int64_t ifmap_bytes = 0;  // one input operand
  std::int64_t ofmap_bytes = 0;

  bool operator==(const TensorSizes&) const = default;
};

TensorSizes tensor_sizes(const Layer& layer);

// Total operations of a layer when computed untiled: MACs for conv/matmul,
// output elements for pool/eltwise.
std::int64_t layer_ops(const Layer& layer);

class ModelGraph {
 public:
  ModelGraph() = default;
  ModelGraph(std::string name, std::vector<Layer> layers);

  const std::string& name() const { return name_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t size() const { return layers_.size(); }

  // Index into layers() for a layer id; throws std::out_of_range if absent.
  std::size_t index_of(int id) const;
  const Layer& layer(int id) const { return layers_[index_of(id)]; }
  bool contains(int id) const;

  // Successor ids per layer, in declaration order.
  const std::vector<int>& successors(int id) const { return successors_[index_of(id)]; }

  bool operator==(const ModelGraph& other) const {
    return name_ == other.name_ && layers_ == other.layers_;
  }

 private:
  std::string name_;
  std::vector<Layer> layers_;
  std::vector<std::vector<int>> successors_;
  std::vector<std::pair<int, std::size_t>> index_;  // sorted (id, index)
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
 public:
  ValidationError(const std::string& what, std::vector<std::string> violations)
      : std::runtime_error(what), violations_(std::move(violations)) {}
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

// Checks every layer and graph invariant. Empty result means valid.
std::vector<std::string> validate_graph(const ModelGraph& graph);

// Kahn's algorithm, ties broken by declaration index. Empty if cyclic.
std::vector<int> topological_order(const ModelGraph& graph);

// Recomputes out_height/out_width from the input dims and kernel geometry.
std::int64_t conv_output_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride,
                                std::int64_t pad);

ModelGraph parse_model_json(std::string_view text);
ModelGraph parse_model_file(const std::filesystem::path& path);
std::string serialize_model(const ModelGraph& graph);

std::vector<std::string> builtin_workload_names();
ModelGraph builtin_workload(std::string_view name, std::int64_t batch);

}  // namespace soma
