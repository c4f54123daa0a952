// SPDX-License-Identifier: Apache-2.0

#include "soma/model.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"

namespace soma {

using nlohmann::json;

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::pool: return "pool";
    case LayerKind::matmul: return "matmul";
    case LayerKind::eltwise: return "eltwise";
  }
  return "?";
}

std::optional<LayerKind> parse_layer_kind(std::string_view text) {
  for (auto kind : {LayerKind::conv, LayerKind::pool, LayerKind::matmul, LayerKind::eltwise}) {
    if (to_string(kind) == text) return kind;
  }
  return std::nullopt;
}

TensorSizes tensor_sizes(const Layer& layer) {
  TensorSizes sizes;
  const auto bpe = layer.bytes_per_element;
  switch (layer.kind) {
    case LayerKind::conv:
      sizes.weight_bytes =
          layer.kernel_h * layer.kernel_w * layer.in_channels * layer.out_channels * bpe;
      break;
    case LayerKind::matmul:
      sizes.weight_bytes = layer.in_channels * layer.out_channels * bpe;
      break;
    case LayerKind::pool:
    case LayerKind::eltwise:
      break;
  }
  sizes.ifmap_bytes = layer.batch * layer.in_channels * layer.in_height * layer.in_width * bpe;
  sizes.ofmap_bytes = layer.batch * layer.out_channels * layer.out_height * layer.out_width * bpe;
  return sizes;
}

std::int64_t layer_ops(const Layer& layer) {
  const std::int64_t out_elems =
      layer.batch * layer.out_channels * layer.out_height * layer.out_width;
  if (layer.has_weights()) return out_elems * layer.in_channels * layer.kernel_h * layer.kernel_w;
  return out_elems;
}

std::int64_t conv_output_extent(std::int64_t in, std::int64_t kernel, std::int64_t stride,
                                std::int64_t pad) {
  const std::int64_t span = in + 2 * pad - kernel;
  if (span < 0 || stride <= 0) return 0;
  return span / stride + 1;
}

ModelGraph::ModelGraph(std::string name, std::vector<Layer> layers)
    : name_(std::move(name)), layers_(std::move(layers)) {
  index_.reserve(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) index_.emplace_back(layers_[i].id, i);
  std::sort(index_.begin(), index_.end());
  successors_.assign(layers_.size(), {});
  for (const auto& layer : layers_) {
    for (int pred : layer.predecessors) {
      if (contains(pred)) successors_[index_of(pred)].push_back(layer.id);
    }
  }
}

std::size_t ModelGraph::index_of(int id) const {
  auto it = std::lower_bound(index_.begin(), index_.end(), std::make_pair(id, std::size_t{0}));
  if (it == index_.end() || it->first != id) {
    throw std::out_of_range("unknown layer id " + std::to_string(id));
  }
  return it->second;
}

bool ModelGraph::contains(int id) const {
  auto it = std::lower_bound(index_.begin(), index_.end(), std::make_pair(id, std::size_t{0}));
  return it != index_.end() && it->first == id;
}

std::vector<int> topological_order(const ModelGraph& graph) {
  const auto& layers = graph.layers();
  std::vector<int> indegree(layers.size(), 0);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (int pred : layers[i].predecessors) {
      if (graph.contains(pred)) ++indegree[i];
    }
  }
  std::vector<int> order;
  std::vector<bool> done(layers.size(), false);
  // Quadratic but stable by declaration index; graphs here are small.
  while (order.size() < layers.size()) {
    bool progressed = false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (done[i] || indegree[i] != 0) continue;
      done[i] = true;
      order.push_back(layers[i].id);
      for (int succ : graph.successors(layers[i].id)) --indegree[graph.index_of(succ)];
      progressed = true;
      break;
    }
    if (!progressed) return {};
  }
  return order;
}

namespace {

std::string layer_label(const Layer& layer) {
  return "layer '" + layer.name + "' (id " + std::to_string(layer.id) + ")";
}

// Finds one back edge with an iterative-colour DFS; returns "X -> Y".
std::optional<std::string> find_back_edge(const ModelGraph& graph) {
  const auto& layers = graph.layers();
  std::vector<int> colour(layers.size(), 0);
  std::optional<std::string> found;
  std::function<void(std::size_t)> visit = [&](std::size_t i) {
    colour[i] = 1;
    for (int succ : graph.successors(layers[i].id)) {
      if (found) return;
      const auto j = graph.index_of(succ);
      if (colour[j] == 1) {
        found = layers[i].name + " -> " + layers[j].name;
        return;
      }
      if (colour[j] == 0) visit(j);
    }
    colour[i] = 2;
  };
  for (std::size_t i = 0; i < layers.size() && !found; ++i) {
    if (colour[i] == 0) visit(i);
  }
  return found;
}

void check_shape(const Layer& layer, std::vector<std::string>& out) {
  const auto label = layer_label(layer);
  for (auto [value, field] : {std::pair{layer.batch, "batch"},
                              {layer.in_channels, "in_channels"},
                              {layer.out_channels, "out_channels"},
                              {layer.in_height, "in_height"},
                              {layer.in_width, "in_width"},
                              {layer.out_height, "out_height"},
                              {layer.out_width, "out_width"},
                              {layer.kernel_h, "kernel_h"},
                              {layer.kernel_w, "kernel_w"},
                              {layer.stride_h, "stride_h"},
                              {layer.stride_w, "stride_w"},
                              {layer.bytes_per_element, "bytes_per_element"}}) {
    if (value <= 0) {
      out.push_back(label + ": " + field + " must be positive");
      return;
    }
  }
  if (layer.pad_h < 0 || layer.pad_w < 0) {
    out.push_back(label + ": padding must be non-negative");
    return;
  }
  switch (layer.kind) {
    case LayerKind::conv:
    case LayerKind::pool: {
      const auto oh = conv_output_extent(layer.in_height, layer.kernel_h, layer.stride_h, layer.pad_h);
      const auto ow = conv_output_extent(layer.in_width, layer.kernel_w, layer.stride_w, layer.pad_w);
      if (oh != layer.out_height || ow != layer.out_width) {
        out.push_back(label + ": output " + std::to_string(layer.out_height) + "x" +
                      std::to_string(layer.out_width) + " inconsistent with expected " +
                      std::to_string(oh) + "x" + std::to_string(ow));
      }
      if (layer.kind == LayerKind::pool && layer.in_channels != layer.out_channels) {
        out.push_back(label + ": pool must preserve channel count");
      }
      break;
    }
    case LayerKind::matmul:
    case LayerKind::eltwise:
      if (layer.kernel_h != 1 || layer.kernel_w != 1 || layer.stride_h != 1 ||
          layer.stride_w != 1 || layer.pad_h != 0 || layer.pad_w != 0) {
        out.push_back(label + ": " + std::string(to_string(layer.kind)) +
                      " requires kernel=stride=1 and pad=0");
      }
      if (layer.in_height != layer.out_height || layer.in_width != layer.out_width) {
        out.push_back(label + ": " + std::string(to_string(layer.kind)) +
                      " must preserve spatial shape");
      }
      if (layer.kind == LayerKind::eltwise && layer.in_channels != layer.out_channels) {
        out.push_back(label + ": eltwise must preserve channel count");
      }
      break;
  }
}

}  // namespace

std::vector<std::string> validate_graph(const ModelGraph& graph) {
  std::vector<std::string> out;
  const auto& layers = graph.layers();
  if (layers.empty()) {
    out.emplace_back("graph has no layers");
    return out;
  }
  std::vector<int> ids;
  for (const auto& layer : layers) ids.push_back(layer.id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    out.emplace_back("duplicate layer ids");
    return out;
  }

  for (const auto& layer : layers) {
    const auto label = layer_label(layer);
    check_shape(layer, out);
    bool preds_ok = true;
    for (int pred : layer.predecessors) {
      if (!graph.contains(pred)) {
        out.push_back(label + ": predecessor " + std::to_string(pred) + " does not exist");
        preds_ok = false;
      } else if (pred == layer.id) {
        out.push_back(label + ": depends on itself");
        preds_ok = false;
      }
    }
    const auto inputs = layer.input_count();
    if (inputs == 0) {
      out.push_back(label + ": has no input (no predecessors and not a network input consumer)");
    } else if (layer.kind == LayerKind::eltwise) {
      if (inputs > 2) out.push_back(label + ": eltwise accepts at most 2 inputs");
    } else if (inputs != 1) {
      out.push_back(label + ": " + std::string(to_string(layer.kind)) +
                    " requires exactly one input");
    }
    if (!preds_ok) continue;
    for (int pred_id : layer.predecessors) {
      const auto& pred = graph.layer(pred_id);
      if (pred.batch != layer.batch || pred.out_channels != layer.in_channels ||
          pred.out_height != layer.in_height || pred.out_width != layer.in_width) {
        out.push_back(label + ": input shape does not match output of '" + pred.name + "'");
      }
    }
    if (graph.successors(layer.id).empty() && !layer.is_network_output_producer) {
      out.push_back(label + ": output is never consumed and is not a network output");
    }
  }
  if (auto edge = find_back_edge(graph)) out.push_back("cycle detected at edge " + *edge);
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

std::int64_t get_count(const json& obj, const char* field, std::size_t index,
                       std::optional<std::int64_t> fallback = std::nullopt) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    if (fallback) return *fallback;
    throw ParseError("layers[" + std::to_string(index) + "]: missing field '" + field + "'");
  }
  if (!it->is_number_integer()) {
    throw ParseError("layers[" + std::to_string(index) + "]: field '" + field +
                     "' must be an integer");
  }
  return it->get<std::int64_t>();
}

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + offset, '\n'));
}

}  // namespace

ModelGraph parse_model_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("line " + std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
  }
  if (!doc.is_object()) throw ParseError("workload must be a JSON object");
  auto layers_it = doc.find("layers");
  if (layers_it == doc.end() || !layers_it->is_array()) {
    throw ParseError("missing field 'layers' (array)");
  }
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < layers_it->size(); ++i) {
    const auto& obj = (*layers_it)[i];
    if (!obj.is_object()) throw ParseError("layers[" + std::to_string(i) + "] must be an object");
    Layer layer;
    layer.id = static_cast<int>(get_count(obj, "id", i));
    layer.name = obj.value("name", std::string("L") + std::to_string(layer.id));
    auto kind_it = obj.find("kind");
    if (kind_it == obj.end() || !kind_it->is_string()) {
      throw ParseError("layers[" + std::to_string(i) + "]: missing field 'kind'");
    }
    auto kind = parse_layer_kind(kind_it->get<std::string>());
    if (!kind) {
      throw ParseError("layers[" + std::to_string(i) + "]: unknown kind '" +
                       kind_it->get<std::string>() + "'");
    }
    layer.kind = *kind;
    layer.batch = get_count(obj, "batch", i);
    layer.in_channels = get_count(obj, "in_channels", i);
    layer.out_channels = get_count(obj, "out_channels", i);
    layer.in_height = get_count(obj, "in_height", i);
    layer.in_width = get_count(obj, "in_width", i);
    layer.out_height = get_count(obj, "out_height", i);
    layer.out_width = get_count(obj, "out_width", i);
    layer.kernel_h = get_count(obj, "kernel_h", i, 1);
    layer.kernel_w = get_count(obj, "kernel_w", i, 1);
    layer.stride_h = get_count(obj, "stride_h", i, 1);
    layer.stride_w = get_count(obj, "stride_w", i, 1);
    layer.pad_h = get_count(obj, "pad_h", i, 0);
    layer.pad_w = get_count(obj, "pad_w", i, 0);
    layer.bytes_per_element = get_count(obj, "bytes_per_element", i, 1);
    if (auto p = obj.find("predecessors"); p != obj.end()) {
      if (!p->is_array()) {
        throw ParseError("layers[" + std::to_string(i) + "]: 'predecessors' must be an array");
      }
      for (const auto& v : *p) {
        if (!v.is_number_integer()) {
          throw ParseError("layers[" + std::to_string(i) + "]: predecessor ids must be integers");
        }
        layer.predecessors.push_back(v.get<int>());
      }
    }
    layer.is_network_input_consumer = obj.value("is_network_input_consumer", false);
    layer.is_network_output_producer = obj.value("is_network_output_producer", false);
    layers.push_back(std::move(layer));
  }
  ModelGraph graph(doc.value("name", std::string("model")), std::move(layers));
  auto violations = validate_graph(graph);
  if (!violations.empty()) {
    std::string what = "invalid workload: " + violations.front();
    throw ValidationError(what, std::move(violations));
  }
  return graph;
}

ModelGraph parse_model_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open workload file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_model_json(buffer.str());
}

std::string serialize_model(const ModelGraph& graph) {
  json layers = json::array();
  for (const auto& l : graph.layers()) {
    layers.push_back({{"id", l.id},
                      {"name", l.name},
                      {"kind", to_string(l.kind)},
                      {"batch", l.batch},
                      {"in_channels", l.in_channels},
                      {"out_channels", l.out_channels},
                      {"in_height", l.in_height},
                      {"in_width", l.in_width},
                      {"out_height", l.out_height},
                      {"out_width", l.out_width},
                      {"kernel_h", l.kernel_h},
                      {"kernel_w", l.kernel_w},
                      {"stride_h", l.stride_h},
                      {"stride_w", l.stride_w},
                      {"pad_h", l.pad_h},
                      {"pad_w", l.pad_w},
                      {"bytes_per_element", l.bytes_per_element},
                      {"predecessors", l.predecessors},
                      {"is_network_input_consumer", l.is_network_input_consumer},
                      {"is_network_output_producer", l.is_network_output_producer}});
  }
  json doc = {{"name", graph.name()}, {"layers", layers}};
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Builtin workloads

namespace {

class GraphBuilder {
 public:
  GraphBuilder(std::string name, std::int64_t batch) : name_(std::move(name)), batch_(batch) {}

  int conv(const std::string& name, int pred, std::int64_t out_ch, std::int64_t k,
           std::int64_t stride, std::int64_t pad) {
    Layer l = from(name, LayerKind::conv, pred);
    l.out_channels = out_ch;
    l.kernel_h = l.kernel_w = k;
    l.stride_h = l.stride_w = stride;
    l.pad_h = l.pad_w = pad;
    l.out_height = conv_output_extent(l.in_height, k, stride, pad);
    l.out_width = conv_output_extent(l.in_width, k, stride, pad);
    return push(std::move(l));
  }

  int pool(const std::string& name, int pred, std::int64_t k, std::int64_t stride) {
    Layer l = from(name, LayerKind::pool, pred);
    l.out_channels = l.in_channels;
    l.kernel_h = l.kernel_w = k;
    l.stride_h = l.stride_w = stride;
    l.out_height = conv_output_extent(l.in_height, k, stride, 0);
    l.out_width = conv_output_extent(l.in_width, k, stride, 0);
    return push(std::move(l));
  }

  int matmul(const std::string& name, int pred, std::int64_t out_features) {
    Layer l = from(name, LayerKind::matmul, pred);
    l.out_channels = out_features;
    return push(std::move(l));
  }

  int eltwise(const std::string& name, std::vector<int> preds, bool reads_network_input = false) {
    Layer l = from(name, LayerKind::eltwise, preds.empty() ? -1 : preds.front());
    l.predecessors = std::move(preds);
    l.is_network_input_consumer = reads_network_input || l.predecessors.empty();
    return push(std::move(l));
  }

  // Declares the shape seen by the next layer built with pred = -1.
  void set_input(std::int64_t channels, std::int64_t height, std::int64_t width) {
    input_ = {channels, height, width};
  }

  ModelGraph finish() {
    for (auto& l : layers_) {
      bool consumed = false;
      for (const auto& other : layers_) {
        if (std::find(other.predecessors.begin(), other.predecessors.end(), l.id) !=
            other.predecessors.end()) {
          consumed = true;
        }
      }
      if (!consumed) l.is_network_output_producer = true;
    }
    return ModelGraph(name_, std::move(layers_));
  }

 private:
  Layer from(const std::string& name, LayerKind kind, int pred) {
    Layer l;
    l.id = static_cast<int>(layers_.size());
    l.name = name;
    l.kind = kind;
    l.batch = batch_;
    if (pred < 0) {
      l.in_channels = input_[0];
      l.in_height = input_[1];
      l.in_width = input_[2];
      l.is_network_input_consumer = true;
    } else {
      const auto& p = layers_[static_cast<std::size_t>(pred)];
      l.in_channels = p.out_channels;
      l.in_height = p.out_height;
      l.in_width = p.out_width;
      l.predecessors = {pred};
    }
    l.out_channels = l.in_channels;
    l.out_height = l.in_height;
    l.out_width = l.in_width;
    return l;
  }

  int push(Layer l) {
    layers_.push_back(std::move(l));
    return layers_.back().id;
  }

  std::string name_;
  std::int64_t batch_;
  std::array<std::int64_t, 3> input_ = {1, 1, 1};
  std::vector<Layer> layers_;
};

ModelGraph make_toy5(std::int64_t batch) {
  GraphBuilder b("toy5", batch);
  b.set_input(16, 32, 32);
  const int a = b.conv("A", -1, 32, 3, 1, 1);
  const int bb = b.conv("B", a, 32, 3, 1, 1);
  const int c = b.pool("C", bb, 2, 2);
  b.conv("D", c, 64, 3, 1, 1);
  b.conv("E", c, 64, 1, 1, 0);
  return b.finish();
}

ModelGraph make_resnet_block_chain(std::int64_t batch) {
  GraphBuilder b("resnet_block_chain", batch);
  b.set_input(64, 56, 56);
  const int stem = b.conv("conv1", -1, 64, 3, 1, 1);
  const int b1c1 = b.conv("res1_conv1", stem, 64, 3, 1, 1);
  const int b1c2 = b.conv("res1_conv2", b1c1, 64, 3, 1, 1);
  const int b1 = b.eltwise("res1_add", {b1c2, stem});
  const int b2c1 = b.conv("res2_conv1", b1, 128, 3, 2, 1);
  const int b2c2 = b.conv("res2_conv2", b2c1, 128, 3, 1, 1);
  const int b2s = b.conv("res2_short", b1, 128, 1, 2, 0);
  const int b2 = b.eltwise("res2_add", {b2c2, b2s});
  const int b3c1 = b.conv("res3_conv1", b2, 256, 3, 2, 1);
  const int b3c2 = b.conv("res3_conv2", b3c1, 256, 3, 1, 1);
  const int b3s = b.conv("res3_short", b2, 256, 1, 2, 0);
  b.eltwise("res3_add", {b3c2, b3s});
  return b.finish();
}

// Matmuls carry the sequence as height with width 1. The attention score and
// context products are modelled as shape-preserving eltwise combinations.
ModelGraph make_transformer_block(std::int64_t batch) {
  constexpr std::int64_t seq = 512;
  constexpr std::int64_t hidden = 768;
  GraphBuilder b("transformer_block", batch);
  b.set_input(hidden, seq, 1);
  const int ln1 = b.eltwise("ln1", {});
  const int q = b.matmul("q_proj", ln1, hidden);
  const int k = b.matmul("k_proj", ln1, hidden);
  const int v = b.matmul("v_proj", ln1, hidden);
  const int scores = b.eltwise("attn_scores", {q, k});
  const int context = b.eltwise("attn_context", {scores, v});
  const int out = b.matmul("out_proj", context, hidden);
  const int res1 = b.eltwise("residual1", {out}, /*reads_network_input=*/true);
  const int ln2 = b.eltwise("ln2", {res1});
  const int up = b.matmul("ffn_up", ln2, 4 * hidden);
  const int gelu = b.eltwise("gelu", {up});
  const int down = b.matmul("ffn_down", gelu, hidden);
  b.eltwise("residual2", {down, res1});
  return b.finish();
}

}  // namespace

std::vector<std::string> builtin_workload_names() {
  return {"toy5", "resnet_block_chain", "transformer_block"};
}

ModelGraph builtin_workload(std::string_view name, std::int64_t batch) {
  if (batch <= 0) throw std::invalid_argument("batch must be positive");
  if (name == "toy5") return make_toy5(batch);
  if (name == "resnet_block_chain") return make_resnet_block_chain(batch);
  if (name == "transformer_block") return make_transformer_block(batch);
  std::string supported;
  for (const auto& n : builtin_workload_names()) supported += (supported.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown workload '" + std::string(name) +
                              "'; supported: " + supported);
}

}  // namespace soma
