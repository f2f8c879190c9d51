#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "convad/explainer.hpp"
#include "convad/model.hpp"

namespace convad {

enum class BackgroundKind { solid_color, iid };

struct LabeledImage {
  std::string name;
  Tensor image;  // (C,H,W) pixel values in [0,1]
  std::size_t label = 0;
};

struct BackgroundSet {
  BackgroundKind kind = BackgroundKind::solid_color;
  std::vector<Tensor> items;
  std::uint64_t seed = 0;
};

/// solid_color: `count` constant images, one uniform [0,1] value per channel.
/// iid: `count` pool images drawn without replacement, skipping any whose
/// label equals `exclude_label`. Throws when the eligible pool is too small.
BackgroundSet make_backgrounds(BackgroundKind kind, std::uint64_t seed, std::size_t count,
                               const Shape& shape, std::span<const LabeledImage> pool = {},
                               std::optional<std::size_t> exclude_label = std::nullopt);

/// Explanation pixels from `original`, everything else from `background`.
Tensor plant(const BinaryMask& pixel_set, const Tensor& original, const Tensor& background);

struct Robustness {
  double rho = 0.0;
  std::vector<std::size_t> predictions;  // plain top-1 class of each composite
};

/// Fraction of backgrounds whose composite is classified (plain forward) as
/// the explanation's target class. Inputs are in model input space.
Robustness rho_robustness(const Explanation& explanation, const Tensor& original,
                          std::span<const Tensor> backgrounds, const ModelGraph& graph,
                          const WeightStore& weights);

struct EvalRow {
  Engine engine = Engine::ad;
  double gamma = 0.0;
  double rho_solid = 0.0;
  double rho_iid = 0.0;
  double mean_size = 0.0;
  double mean_confidence = 0.0;
  std::size_t sample_count = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::uint64_t seed = 0;
  std::size_t background_count = 0;
};

inline constexpr const char* kReportHeader =
    "engine,gamma,rho_solid,rho_iid,mean_size,mean_confidence,n";

struct SuiteConfig {
  std::vector<Engine> engines{Engine::ad, Engine::min, Engine::max, Engine::avg, Engine::zero};
  std::vector<double> gammas{0.0, 0.1, 0.3, 0.5, 0.7, 0.9};
  ExplainConfig explain;
  std::uint64_t seed = 0;
  std::size_t background_count = 100;
  std::optional<std::filesystem::path> iid_pool;  // defaults to the dataset itself
  std::filesystem::path out_dir = ".";
  bool write_explanations = true;
  std::size_t jobs = 1;
};

/// Images in `dir` (png/ppm/pgm, sorted by name), resized to the model input.
/// Labels come from `labels.csv` (file,label) when present, otherwise from
/// the model's own prediction. Unreadable files are skipped with a warning.
std::vector<LabeledImage> load_dataset(const std::filesystem::path& dir, const ModelGraph& graph,
                                       const WeightStore& weights);

EvalReport run_suite(std::span<const LabeledImage> dataset, std::span<const LabeledImage> iid_pool,
                     const ModelGraph& graph, const WeightStore& weights, const SuiteConfig& cfg);

EvalReport run_suite(const std::filesystem::path& dataset_dir, const ModelGraph& graph,
                     const WeightStore& weights, const SuiteConfig& cfg);

std::string report_to_csv(const EvalReport& report);

std::string format_gamma(double gamma);

}  // namespace convad
