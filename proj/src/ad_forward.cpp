#include "convad/ad_forward.hpp"

#include <string>

#include "convad/attribution.hpp"

namespace convad {
namespace {

void require_mask_matches(const ModelGraph& graph, const BinaryMask& mask) {
  if (mask.rows() != graph.input_shape[1] || mask.cols() != graph.input_shape[2]) {
    throw ShapeError("mask " + mask_shape_string(mask) + " does not match input spatial size " +
                     std::to_string(graph.input_shape[1]) + "x" +
                     std::to_string(graph.input_shape[2]));
  }
}

// Carries the mask across layer `index`. Only convolutions and
// dimension-altering layers change it.
BinaryMask propagate_mask(const ModelGraph& graph, std::size_t index, const BinaryMask& mask,
                          const Tensor& input_activation, const std::vector<ADState>& states,
                          const ADConfig& cfg) {
  const LayerSpec& layer = graph.layers[index];
  switch (layer.kind) {
    case LayerKind::conv:
      return threshold_mask(position_attribution_conv(mask, layer.geometry), cfg.tau);
    case LayerKind::maxpool:
    case LayerKind::avgpool:
      return threshold_mask(position_attribution_pool(mask, layer.geometry), cfg.tau);
    case LayerKind::upsample:
      return threshold_mask(position_attribution_upsample(mask, layer.factor), cfg.tau);
    case LayerKind::concat:
      return position_attribution_concat(mask, states[*layer.concat_source + 1].mask,
                                         cfg.include_external);
    case LayerKind::flatten:
      return position_attribution_flatten(mask, input_activation.rank() == 3
                                                    ? input_activation.channels()
                                                    : 1);
    default:
      return mask;
  }
}

}  // namespace

void ADConfig::validate() const {
  if (!(tau >= 0.0 && tau < 1.0)) {
    throw ValueError("tau must lie in [0, 1), got " + std::to_string(tau));
  }
}

Tensor ad_forward(const ModelGraph& graph, const WeightStore& weights, const Tensor& input,
                  const BinaryMask& mask, const ADConfig& cfg, const ADOptions& options) {
  cfg.validate();
  require_input_shape(graph, input);
  require_mask_matches(graph, mask);

  const std::size_t last = graph.final_checkpoint();
  auto checkpoint = [&](std::size_t position, Tensor& z, const BinaryMask& m) {
    if (!graph.is_checkpoint(position)) return;
    if (options.fault && options.fault->position == position) {
      BinaryMask broken = m;
      for (std::size_t c = 0; c < broken.cols(); ++c) broken.set(0, c, false);
      apply_mask(z, broken);
      return;
    }
    apply_mask(z, m);
  };

  std::vector<ADState> states;
  states.reserve(graph.layers.size() + 1);
  std::vector<Tensor> outputs;
  outputs.reserve(graph.layers.size());

  Tensor z = input;
  BinaryMask current = mask;
  checkpoint(0, z, current);
  states.push_back({z, current});

  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    Tensor next = run_layer(graph, weights, i, z, outputs);
    if (i < last) {
      current = propagate_mask(graph, i, current, z, states, cfg);
      checkpoint(i + 1, next, current);
    } else {
      const auto [rows, cols] = spatial_extent(next.shape());
      current = BinaryMask::ones(rows, cols);
    }
    z = std::move(next);
    outputs.push_back(z);
    states.push_back({z, current});
  }

  if (options.trace) *options.trace = std::move(states);
  return z;
}

Tensor occlude(const Tensor& input, const BinaryMask& mask, OcclusionPolicy policy) {
  if (input.rank() != 3 || mask.rows() != input.height() || mask.cols() != input.width()) {
    throw ShapeError("mask " + mask_shape_string(mask) + " does not match image " +
                     shape_to_string(input.shape()));
  }
  Tensor out = input;
  const auto keep = mask.cells().cast<float>();
  for (std::size_t c = 0; c < input.channels(); ++c) {
    const auto plane = input.plane(c);
    float fill = 0.0f;
    switch (policy) {
      case OcclusionPolicy::min: fill = plane.minCoeff(); break;
      case OcclusionPolicy::max: fill = plane.maxCoeff(); break;
      case OcclusionPolicy::avg: fill = plane.mean(); break;
      case OcclusionPolicy::zero: fill = 0.0f; break;
    }
    out.plane(c) = (keep > 0.5f).select(plane, fill);
  }
  return out;
}

Tensor occlusion_forward(const ModelGraph& graph, const WeightStore& weights, const Tensor& input,
                         const BinaryMask& mask, OcclusionPolicy policy) {
  require_input_shape(graph, input);
  require_mask_matches(graph, mask);
  return forward(graph, weights, occlude(input, mask, policy));
}

std::string_view to_string(Engine engine) {
  switch (engine) {
    case Engine::ad: return "ad";
    case Engine::min: return "min";
    case Engine::max: return "max";
    case Engine::avg: return "avg";
    case Engine::zero: return "zero";
  }
  return "unknown";
}

std::optional<Engine> parse_engine(std::string_view name) {
  for (Engine e : {Engine::ad, Engine::min, Engine::max, Engine::avg, Engine::zero}) {
    if (to_string(e) == name) return e;
  }
  return std::nullopt;
}

std::optional<OcclusionPolicy> parse_policy(std::string_view name) {
  if (name == "min") return OcclusionPolicy::min;
  if (name == "max") return OcclusionPolicy::max;
  if (name == "avg") return OcclusionPolicy::avg;
  if (name == "zero") return OcclusionPolicy::zero;
  return std::nullopt;
}

Tensor run_engine(Engine engine, const ModelGraph& graph, const WeightStore& weights,
                  const Tensor& input, const BinaryMask& mask, const ADConfig& cfg) {
  switch (engine) {
    case Engine::ad: return ad_forward(graph, weights, input, mask, cfg);
    case Engine::min: return occlusion_forward(graph, weights, input, mask, OcclusionPolicy::min);
    case Engine::max: return occlusion_forward(graph, weights, input, mask, OcclusionPolicy::max);
    case Engine::avg: return occlusion_forward(graph, weights, input, mask, OcclusionPolicy::avg);
    case Engine::zero: return occlusion_forward(graph, weights, input, mask, OcclusionPolicy::zero);
  }
  throw ValueError("unknown engine");
}

}  // namespace convad
