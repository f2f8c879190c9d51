#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "convad/ad_forward.hpp"
#include "convad/mask.hpp"
#include "convad/model.hpp"

namespace convad {

struct ExplainConfig {
  ADConfig ad;
  std::size_t iterations = 20;
  std::size_t min_cell = 4;         // regions of at most this many pixels are not split
  std::size_t superpixel_side = 2;  // greedy search adds one superpixel at a time
  std::size_t jobs = 1;

  void validate() const;
};

/// Per-pixel accumulated degree of responsibility.
using SaliencyLandscape = AttributionMap;

struct Explanation {
  BinaryMask pixel_set;  // 1 = pixel belongs to the explanation
  double confidence = 0.0;
  double gamma = 0.0;
  double size_fraction = 0.0;
  Engine engine = Engine::ad;
  std::uint64_t seed = 0;
  std::size_t target_class = 0;
  double original_confidence = 0.0;
};

struct Classification {
  std::size_t label = 0;
  double confidence = 0.0;
};

/// Top-1 class and its probability for the input restricted to `mask`.
Classification classify(Engine engine, const ModelGraph& graph, const WeightStore& weights,
                        const Tensor& input, const BinaryMask& mask, const ADConfig& cfg);

/// Iterative partition-and-test responsibility ranking. Each iteration
/// splits the image into (up to) four parts at seeded random offsets, tests
/// every subset of parts through the engine, credits 1/|subset| to every
/// part of every minimal subset that keeps the original top-1 class, and
/// recurses into those parts until regions reach `min_cell` pixels.
SaliencyLandscape build_landscape(const ModelGraph& graph, const WeightStore& weights,
                                  const Tensor& input, Engine engine, const ExplainConfig& cfg,
                                  std::uint64_t seed);

/// Superpixels in the order the greedy search adds them: descending mean
/// responsibility, ties by row-major superpixel index. Superpixels with zero
/// responsibility are not candidates.
std::vector<std::size_t> rank_superpixels(const SaliencyLandscape& landscape,
                                          std::size_t superpixel_side);

/// Pixel mask of a set of superpixels.
BinaryMask superpixel_mask(std::size_t rows, std::size_t cols, std::size_t superpixel_side,
                           const std::vector<std::size_t>& superpixels);

/// Greedy prefix search over ranked superpixels until the restricted input
/// keeps the original class at confidence >= gamma * c0, followed by one
/// backward pruning sweep. Falls back to the full image when the landscape
/// singles out nothing.
Explanation extract_explanation(const SaliencyLandscape& landscape, const ModelGraph& graph,
                                const WeightStore& weights, const Tensor& input, Engine engine,
                                double gamma, const ExplainConfig& cfg);

/// Length of the greedy prefix (before pruning) for the given gamma.
std::size_t greedy_prefix_length(const SaliencyLandscape& landscape, const ModelGraph& graph,
                                 const WeightStore& weights, const Tensor& input, Engine engine,
                                 double gamma, const ExplainConfig& cfg);

double explanation_confidence(const Explanation& explanation, const ModelGraph& graph,
                              const WeightStore& weights, const Tensor& input, Engine engine,
                              const ADConfig& cfg);

/// Sufficiency: the pixel set alone keeps the class at >= gamma * c0.
bool satisfies_sufficiency(const BinaryMask& pixel_set, std::size_t target_class,
                           double threshold_confidence, Engine engine, const ModelGraph& graph,
                           const WeightStore& weights, const Tensor& input, const ADConfig& cfg);

/// Counterfactual dependence: removing the pixel set from the full input
/// (keeping only its complement) loses the class or drops confidence below
/// the threshold.
bool satisfies_counterfactual(const BinaryMask& pixel_set, std::size_t target_class,
                              double threshold_confidence, Engine engine, const ModelGraph& graph,
                              const WeightStore& weights, const Tensor& input, const ADConfig& cfg);

}  // namespace convad
