#include "convad/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <utility>

#include "convad/kernels.hpp"

namespace convad {
namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 13> kKindNames = {{
    {LayerKind::conv, "conv"},
    {LayerKind::relu, "relu"},
    {LayerKind::tanh, "tanh"},
    {LayerKind::sigmoid, "sigmoid"},
    {LayerKind::silu, "silu"},
    {LayerKind::batchnorm, "batchnorm"},
    {LayerKind::maxpool, "maxpool"},
    {LayerKind::avgpool, "avgpool"},
    {LayerKind::upsample, "upsample"},
    {LayerKind::concat, "concat"},
    {LayerKind::flatten, "flatten"},
    {LayerKind::dense, "dense"},
    {LayerKind::softmax, "softmax"},
}};

std::string where(std::size_t index, const LayerSpec& layer) {
  return "layers[" + std::to_string(index) + "] (" + std::string(to_string(layer.kind)) + ")";
}

const Tensor& param_tensor(const WeightStore& weights, std::size_t index,
                           const LayerSpec& layer, const std::string& role) {
  const auto it = layer.params.find(role);
  if (it == layer.params.end()) {
    throw SchemaError(where(index, layer) + ": missing params." + role);
  }
  if (!weights.contains(it->second)) {
    throw DanglingRefError(where(index, layer) + ": params." + role + " refers to blob '" +
                           it->second + "' which is not in the weight file");
  }
  return weights.get(it->second);
}

void expect_shape(const Tensor& t, const Shape& want, std::size_t index, const LayerSpec& layer,
                  const std::string& role) {
  if (t.shape() != want) {
    throw ShapeError(where(index, layer) + ": params." + role + " has shape " +
                     shape_to_string(t.shape()) + ", expected " + shape_to_string(want));
  }
  if (!t.values().allFinite()) {
    throw NonFiniteError(where(index, layer) + ": params." + role + " contains non-finite values");
  }
}

void expect_rank3(const Shape& in, std::size_t index, const LayerSpec& layer) {
  if (in.size() != 3) {
    throw ShapeError(where(index, layer) + ": expects a (C,H,W) input, got " +
                     shape_to_string(in));
  }
}

Activation activation_of(LayerKind kind) {
  switch (kind) {
    case LayerKind::relu: return Activation::relu;
    case LayerKind::tanh: return Activation::tanh;
    case LayerKind::sigmoid: return Activation::sigmoid;
    default: return Activation::silu;
  }
}

// Output shape of layer `index`, validating its parameters on the way.
Shape layer_output_shape(const ModelGraph& graph, const WeightStore& weights, std::size_t index,
                         const Shape& in, const std::vector<Shape>& shapes) {
  const LayerSpec& layer = graph.layers[index];
  switch (layer.kind) {
    case LayerKind::conv: {
      expect_rank3(in, index, layer);
      const ConvGeometry& g = layer.geometry;
      try {
        g.validate();
      } catch (const GeometryError& e) {
        throw SchemaError(where(index, layer) + ": " + e.what());
      }
      if (g.in_channels != in[0]) {
        throw ShapeError(where(index, layer) + ": geometry.in_channels is " +
                         std::to_string(g.in_channels) + " but the input has " +
                         std::to_string(in[0]) + " channels");
      }
      expect_shape(param_tensor(weights, index, layer, "weight"),
                   {g.out_channels, g.in_channels, g.kernel_h, g.kernel_w}, index, layer, "weight");
      expect_shape(param_tensor(weights, index, layer, "bias"), {g.out_channels}, index, layer,
                   "bias");
      try {
        const auto [oh, ow] = output_hw(g, in[1], in[2]);
        return {g.out_channels, oh, ow};
      } catch (const GeometryError& e) {
        throw ShapeError(where(index, layer) + ": " + e.what());
      }
    }
    case LayerKind::relu:
    case LayerKind::tanh:
    case LayerKind::sigmoid:
    case LayerKind::silu:
    case LayerKind::softmax:
      return in;
    case LayerKind::batchnorm: {
      expect_rank3(in, index, layer);
      for (const char* role : {"mean", "var", "gamma", "beta"}) {
        const Tensor& t = param_tensor(weights, index, layer, role);
        expect_shape(t, {in[0]}, index, layer, role);
        if (std::string(role) == "var" && (t.values().array() < 0.0f).any()) {
          throw ValueError(where(index, layer) + ": params.var has a negative entry");
        }
      }
      return in;
    }
    case LayerKind::maxpool:
    case LayerKind::avgpool: {
      expect_rank3(in, index, layer);
      try {
        const auto [oh, ow] = output_hw(layer.geometry, in[1], in[2]);
        return {in[0], oh, ow};
      } catch (const GeometryError& e) {
        throw ShapeError(where(index, layer) + ": " + e.what());
      }
    }
    case LayerKind::upsample:
      expect_rank3(in, index, layer);
      if (layer.factor < 2) throw SchemaError(where(index, layer) + ": factor must be >= 2");
      return {in[0], in[1] * layer.factor, in[2] * layer.factor};
    case LayerKind::concat: {
      expect_rank3(in, index, layer);
      if (!layer.concat_source || *layer.concat_source >= index) {
        throw SchemaError(where(index, layer) + ": concat_source must name an earlier layer");
      }
      const Shape& other = shapes[*layer.concat_source + 1];
      if (other.size() != 3 || other[1] != in[1] || other[2] != in[2]) {
        throw ShapeError(where(index, layer) + ": source layer output " + shape_to_string(other) +
                         " does not match spatial extent of " + shape_to_string(in));
      }
      return {in[0] + other[0], in[1], in[2]};
    }
    case LayerKind::flatten:
      return {shape_product(in)};
    case LayerKind::dense: {
      if (in.size() != 1) {
        throw ShapeError(where(index, layer) + ": expects a flat input, got " +
                         shape_to_string(in));
      }
      const Tensor& w = param_tensor(weights, index, layer, "weight");
      if (w.rank() != 2 || w.dim(1) != in[0]) {
        throw ShapeError(where(index, layer) + ": params.weight has shape " +
                         shape_to_string(w.shape()) + ", expected (M," + std::to_string(in[0]) +
                         ")");
      }
      expect_shape(w, w.shape(), index, layer, "weight");
      expect_shape(param_tensor(weights, index, layer, "bias"), {w.dim(0)}, index, layer, "bias");
      return {w.dim(0)};
    }
  }
  throw SchemaError(where(index, layer) + ": unknown layer kind");
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<LayerKind> parse_layer_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

bool is_dimension_altering(LayerKind kind) {
  return kind == LayerKind::maxpool || kind == LayerKind::avgpool ||
         kind == LayerKind::upsample || kind == LayerKind::concat || kind == LayerKind::flatten;
}

const std::string& LayerSpec::param(const std::string& role) const {
  const auto it = params.find(role);
  if (it == params.end()) throw SchemaError("layer has no params." + role);
  return it->second;
}

bool ModelGraph::is_checkpoint(std::size_t position) const {
  return std::binary_search(checkpoints.begin(), checkpoints.end(), position);
}

std::size_t ModelGraph::final_checkpoint() const {
  return checkpoints.empty() ? 0 : checkpoints.back();
}

void WeightStore::add(const std::string& name, Tensor tensor) {
  if (!blobs_.emplace(name, std::move(tensor)).second) {
    throw SchemaError("duplicate weight blob '" + name + "'");
  }
}

const Tensor& WeightStore::get(const std::string& name) const {
  const auto it = blobs_.find(name);
  if (it == blobs_.end()) throw DanglingRefError("no weight blob named '" + name + "'");
  return it->second;
}

std::vector<std::size_t> annotate_checkpoints(const ModelGraph& graph) {
  std::set<std::size_t> positions;
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerKind kind = graph.layers[i].kind;
    if (kind == LayerKind::conv) positions.insert(i);
    if (is_dimension_altering(kind)) {
      positions.insert(i);
      positions.insert(i + 1);
    }
  }
  return {positions.begin(), positions.end()};
}

void finalize(ModelGraph& graph, const WeightStore& weights) {
  if (graph.input_shape.size() != 3) {
    throw SchemaError("input_shape must be [C,H,W], got " + shape_to_string(graph.input_shape));
  }
  for (std::size_t d : graph.input_shape) {
    if (d == 0) throw SchemaError("input_shape dimensions must be >= 1");
  }
  if (graph.layers.empty()) throw SchemaError("layers must not be empty");
  const std::size_t channels = graph.input_shape[0];
  auto& pre = graph.preprocess;
  if (pre.mean.empty()) pre.mean.assign(channels, 0.0f);
  if (pre.std.empty()) pre.std.assign(channels, 1.0f);
  if (pre.mean.size() != channels || pre.std.size() != channels) {
    throw SchemaError("preprocess.mean/std must have one entry per input channel");
  }
  for (float s : pre.std) {
    if (!(s > 0.0f) || !std::isfinite(s)) throw SchemaError("preprocess.std entries must be > 0");
  }

  std::vector<Shape> shapes{graph.input_shape};
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    shapes.push_back(layer_output_shape(graph, weights, i, shapes.back(), shapes));
  }
  const Shape& out = shapes.back();
  if (!graph.labels.empty() && shape_product(out) != graph.labels.size()) {
    throw SchemaError("labels has " + std::to_string(graph.labels.size()) +
                      " entries but the network emits " + std::to_string(shape_product(out)) +
                      " scores");
  }
  graph.shapes = std::move(shapes);
  graph.checkpoints = annotate_checkpoints(graph);
}

Tensor run_layer(const ModelGraph& graph, const WeightStore& weights, std::size_t index,
                 const Tensor& z, std::span<const Tensor> outputs) {
  const LayerSpec& layer = graph.layers[index];
  switch (layer.kind) {
    case LayerKind::conv:
      return conv2d(z, weights.get(layer.param("weight")), weights.get(layer.param("bias")),
                    layer.geometry);
    case LayerKind::relu:
    case LayerKind::tanh:
    case LayerKind::sigmoid:
    case LayerKind::silu:
      return elementwise(z, activation_of(layer.kind));
    case LayerKind::batchnorm:
      return batchnorm_infer(z, weights.get(layer.param("mean")), weights.get(layer.param("var")),
                             weights.get(layer.param("gamma")),
                             weights.get(layer.param("beta")), layer.eps);
    case LayerKind::maxpool:
      return pool2d(z, layer.geometry, PoolMode::max);
    case LayerKind::avgpool:
      return pool2d(z, layer.geometry, PoolMode::avg);
    case LayerKind::upsample:
      return upsample_nearest(z, layer.factor);
    case LayerKind::concat:
      return concat_channels(z, outputs[*layer.concat_source]);
    case LayerKind::flatten:
      return z.reshaped({z.size()});
    case LayerKind::dense:
      return dense(z, weights.get(layer.param("weight")), weights.get(layer.param("bias")));
    case LayerKind::softmax:
      return softmax(z);
  }
  throw SchemaError("unknown layer kind");
}

void require_input_shape(const ModelGraph& graph, const Tensor& input) {
  if (input.shape() != graph.input_shape) {
    throw ShapeError("input shape " + shape_to_string(input.shape()) +
                     " does not match model input_shape " + shape_to_string(graph.input_shape));
  }
}

Tensor forward(const ModelGraph& graph, const WeightStore& weights, const Tensor& input,
               std::vector<Tensor>* trace) {
  require_input_shape(graph, input);
  std::vector<Tensor> outputs;
  outputs.reserve(graph.layers.size());
  if (trace) trace->assign(1, input);
  Tensor z = input;
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    z = run_layer(graph, weights, i, z, outputs);
    outputs.push_back(z);
    if (trace) trace->push_back(z);
  }
  return z;
}

Tensor forward_from(const ModelGraph& graph, const WeightStore& weights, std::size_t first,
                    Tensor z, std::vector<Tensor> outputs) {
  outputs.resize(first);
  for (std::size_t i = first; i < graph.layers.size(); ++i) {
    z = run_layer(graph, weights, i, z, outputs);
    outputs.push_back(z);
  }
  return z;
}

Tensor normalize_input(const ModelGraph& graph, const Tensor& image) {
  require_input_shape(graph, image);
  Tensor out(image.shape());
  for (std::size_t c = 0; c < image.channels(); ++c) {
    out.plane(c) = (image.plane(c) - graph.preprocess.mean[c]) / graph.preprocess.std[c];
  }
  return out;
}

std::size_t argmax(const Tensor& scores) {
  Eigen::Index best = 0;
  scores.values().maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

}  // namespace convad
