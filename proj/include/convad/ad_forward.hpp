#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "convad/mask.hpp"
#include "convad/model.hpp"
#include "convad/tensor.hpp"

namespace convad {

struct ADConfig {
  double tau = 0.0;
  // Whether a concatenated skip branch contributes its unmasked positions.
  bool include_external = true;

  void validate() const;
};

/// Activation at a position together with the mask that accompanies it.
struct ADState {
  Tensor activation;
  BinaryMask mask;
};

/// Test hook: clears the first row of the mask applied at `position`.
/// Used to check that equivalence verification catches a broken checkpoint.
struct CheckpointFault {
  std::size_t position = 0;
};

struct ADOptions {
  std::vector<ADState>* trace = nullptr;  // one entry per position
  std::optional<CheckpointFault> fault;
};

/// Activation-deactivation forward pass. After every convolution and every
/// dimension-altering layer the mask is carried forward by position
/// attribution and thresholding; at every checkpoint the activation is
/// multiplied by the mask. Layers after the final checkpoint run unmasked.
Tensor ad_forward(const ModelGraph& graph, const WeightStore& weights, const Tensor& input,
                  const BinaryMask& mask, const ADConfig& cfg, const ADOptions& options = {});

enum class OcclusionPolicy { min, max, avg, zero };

/// Replaces masked pixels with the per-channel minimum, maximum or mean of
/// the image, or with literal zero.
Tensor occlude(const Tensor& input, const BinaryMask& mask, OcclusionPolicy policy);

Tensor occlusion_forward(const ModelGraph& graph, const WeightStore& weights, const Tensor& input,
                         const BinaryMask& mask, OcclusionPolicy policy);

enum class Engine { ad, min, max, avg, zero };

std::string_view to_string(Engine engine);
std::optional<Engine> parse_engine(std::string_view name);
std::optional<OcclusionPolicy> parse_policy(std::string_view name);

/// Class scores of the input restricted to `mask` under the given engine.
Tensor run_engine(Engine engine, const ModelGraph& graph, const WeightStore& weights,
                  const Tensor& input, const BinaryMask& mask, const ADConfig& cfg);

}  // namespace convad
