#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "convad/geometry.hpp"
#include "convad/tensor.hpp"

namespace convad {

enum class LayerKind {
  conv,
  relu,
  tanh,
  sigmoid,
  silu,
  batchnorm,
  maxpool,
  avgpool,
  upsample,
  concat,
  flatten,
  dense,
  softmax,
};

std::string_view to_string(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(std::string_view name);

/// Pooling, upsampling, concatenation and flatten change the shape of the
/// representation between two convolutions.
bool is_dimension_altering(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  ConvGeometry geometry;        // conv, maxpool, avgpool
  std::size_t factor = 2;       // upsample
  float eps = 1e-5f;            // batchnorm
  // Role -> blob name. conv/dense: weight, bias. batchnorm: mean, var, gamma, beta.
  std::map<std::string, std::string> params;
  std::optional<std::size_t> concat_source;  // concat: index of an earlier layer

  const std::string& param(const std::string& role) const;
};

struct Preprocess {
  std::vector<float> mean;
  std::vector<float> std;
};

/// Positions are numbered 0..layers.size(): position p sits between layer
/// p-1 and layer p, so position 0 is the network input.
struct ModelGraph {
  std::vector<LayerSpec> layers;
  Shape input_shape;
  std::vector<std::string> labels;
  Preprocess preprocess;

  // Derived by finalize().
  std::vector<std::size_t> checkpoints;
  std::vector<Shape> shapes;  // shapes[p] is the activation shape at position p

  bool is_checkpoint(std::size_t position) const;
  std::size_t final_checkpoint() const;
};

class WeightStore {
 public:
  void add(const std::string& name, Tensor tensor);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return blobs_.count(name) != 0; }
  const std::map<std::string, Tensor>& blobs() const { return blobs_; }

 private:
  std::map<std::string, Tensor> blobs_;
};

struct Model {
  ModelGraph graph;
  WeightStore weights;
};

/// Checkpoint positions: one immediately before every convolution, and one
/// immediately before and after every dimension-altering layer. Depends only
/// on layer kinds and order.
std::vector<std::size_t> annotate_checkpoints(const ModelGraph& graph);

/// Validates the graph against its weights, propagates shapes and annotates
/// checkpoints. Throws SchemaError, ShapeError, DanglingRefError or
/// NonFiniteError naming the offending layer.
void finalize(ModelGraph& graph, const WeightStore& weights);

/// Runs layer `index` on `z`. `outputs` holds the outputs of all earlier
/// layers (needed for concat).
Tensor run_layer(const ModelGraph& graph, const WeightStore& weights, std::size_t index,
                 const Tensor& z, std::span<const Tensor> outputs);

/// Plain inference. When `trace` is given it receives the activation at
/// every position (input first, output last).
Tensor forward(const ModelGraph& graph, const WeightStore& weights, const Tensor& input,
               std::vector<Tensor>* trace = nullptr);

/// Runs layers [first, end) on `z`, with `outputs` supplying earlier layer
/// outputs for concat sources.
Tensor forward_from(const ModelGraph& graph, const WeightStore& weights, std::size_t first,
                    Tensor z, std::vector<Tensor> outputs);

/// (x - mean) / std per channel, using the manifest preprocessing block.
Tensor normalize_input(const ModelGraph& graph, const Tensor& image);

std::size_t argmax(const Tensor& scores);

void require_input_shape(const ModelGraph& graph, const Tensor& input);

}  // namespace convad
