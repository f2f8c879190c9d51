#include "convad/explainer.hpp"

#include <algorithm>
#include <bit>
#include <deque>
#include <future>
#include <numeric>
#include <string>

#include "convad/random.hpp"

namespace convad {
namespace {

struct Rect {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t area() const { return rows * cols; }
};

struct Region {
  Rect rect;
  BinaryMask context;  // pixels kept present while this region is tested
};

void paint(BinaryMask& mask, const Rect& r) {
  for (std::size_t y = r.row; y < r.row + r.rows; ++y) {
    for (std::size_t x = r.col; x < r.col + r.cols; ++x) mask.set(y, x, true);
  }
}

// Split point for an extent of n >= 2: around the middle, shifted by a
// random offset of up to n/4, never producing an empty side.
std::size_t split_point(std::size_t n, Rng& rng) {
  const auto quarter = static_cast<std::int64_t>(n / 4);
  const std::int64_t offset = rng.integer(-quarter, quarter);
  const std::int64_t split = static_cast<std::int64_t>(n / 2) + offset;
  return static_cast<std::size_t>(std::clamp<std::int64_t>(split, 1, static_cast<std::int64_t>(n) - 1));
}

std::vector<Rect> split(const Rect& r, Rng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> row_spans{{r.row, r.rows}};
  std::vector<std::pair<std::size_t, std::size_t>> col_spans{{r.col, r.cols}};
  if (r.rows >= 2) {
    const std::size_t s = split_point(r.rows, rng);
    row_spans = {{r.row, s}, {r.row + s, r.rows - s}};
  }
  if (r.cols >= 2) {
    const std::size_t s = split_point(r.cols, rng);
    col_spans = {{r.col, s}, {r.col + s, r.cols - s}};
  }
  std::vector<Rect> parts;
  for (const auto& [row, rows] : row_spans) {
    for (const auto& [col, cols] : col_spans) parts.push_back({row, col, rows, cols});
  }
  return parts;
}

template <typename Fn>
std::vector<Classification> evaluate_all(std::size_t count, std::size_t jobs, Fn&& fn) {
  std::vector<Classification> out(count);
  if (jobs <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::future<void>> workers;
  const std::size_t n = std::min(jobs, count);
  for (std::size_t t = 0; t < n; ++t) {
    workers.push_back(std::async(std::launch::async, [&, t] {
      for (std::size_t i = t; i < count; i += n) out[i] = fn(i);
    }));
  }
  for (auto& w : workers) w.get();
  return out;
}

bool meets(const Classification& c, std::size_t target, double threshold) {
  return c.label == target && c.confidence >= threshold;
}

}  // namespace

void ExplainConfig::validate() const {
  ad.validate();
  if (iterations == 0) throw ValueError("iterations must be >= 1");
  if (min_cell == 0) throw ValueError("min_cell must be >= 1");
  if (superpixel_side == 0) throw ValueError("superpixel_side must be >= 1");
}

Classification classify(Engine engine, const ModelGraph& graph, const WeightStore& weights,
                        const Tensor& input, const BinaryMask& mask, const ADConfig& cfg) {
  const Tensor scores = run_engine(engine, graph, weights, input, mask, cfg);
  const std::size_t label = argmax(scores);
  return {label, static_cast<double>(scores[label])};
}

SaliencyLandscape build_landscape(const ModelGraph& graph, const WeightStore& weights,
                                  const Tensor& input, Engine engine, const ExplainConfig& cfg,
                                  std::uint64_t seed) {
  cfg.validate();
  require_input_shape(graph, input);
  const std::size_t rows = graph.input_shape[1];
  const std::size_t cols = graph.input_shape[2];
  const std::size_t target =
      classify(engine, graph, weights, input, BinaryMask::ones(rows, cols), cfg.ad).label;

  SaliencyLandscape landscape = SaliencyLandscape::Zero(static_cast<Eigen::Index>(rows),
                                                        static_cast<Eigen::Index>(cols));
  Rng rng(seed);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::deque<Region> pending;
    pending.push_back({{0, 0, rows, cols}, BinaryMask::zeros(rows, cols)});
    while (!pending.empty()) {
      const Region region = std::move(pending.front());
      pending.pop_front();
      const std::vector<Rect> parts = split(region.rect, rng);
      if (parts.size() < 2) continue;

      const std::size_t subsets = std::size_t{1} << parts.size();
      auto subset_mask = [&](std::size_t s) {
        BinaryMask m = region.context;
        for (std::size_t p = 0; p < parts.size(); ++p) {
          if (s & (std::size_t{1} << p)) paint(m, parts[p]);
        }
        return m;
      };
      const auto results = evaluate_all(subsets, cfg.jobs, [&](std::size_t s) {
        return classify(engine, graph, weights, input, subset_mask(s), cfg.ad);
      });
      std::vector<bool> passes(subsets);
      for (std::size_t s = 0; s < subsets; ++s) passes[s] = results[s].label == target;
      // The class survives without this region: none of its parts is a cause.
      if (passes[0]) continue;

      std::vector<std::size_t> minimal;
      for (std::size_t s = 1; s < subsets; ++s) {
        if (!passes[s]) continue;
        bool is_minimal = true;
        for (std::size_t t = (s - 1) & s; t != 0; t = (t - 1) & s) {
          if (passes[t]) {
            is_minimal = false;
            break;
          }
        }
        if (is_minimal) minimal.push_back(s);
      }

      std::vector<std::size_t> witness(parts.size(), 0);  // first minimal subset per part
      for (std::size_t s : minimal) {
        const double share = 1.0 / static_cast<double>(std::popcount(s));
        for (std::size_t p = 0; p < parts.size(); ++p) {
          if (!(s & (std::size_t{1} << p))) continue;
          const Rect& r = parts[p];
          landscape.block(static_cast<Eigen::Index>(r.row), static_cast<Eigen::Index>(r.col),
                          static_cast<Eigen::Index>(r.rows), static_cast<Eigen::Index>(r.cols)) +=
              share;
          if (witness[p] == 0) witness[p] = s;
        }
      }
      for (std::size_t p = 0; p < parts.size(); ++p) {
        if (witness[p] == 0 || parts[p].area() <= cfg.min_cell) continue;
        pending.push_back({parts[p], subset_mask(witness[p] & ~(std::size_t{1} << p))});
      }
    }
  }
  return landscape;
}

std::vector<std::size_t> rank_superpixels(const SaliencyLandscape& landscape,
                                          std::size_t superpixel_side) {
  const auto rows = static_cast<std::size_t>(landscape.rows());
  const auto cols = static_cast<std::size_t>(landscape.cols());
  const std::size_t grid_rows = (rows + superpixel_side - 1) / superpixel_side;
  const std::size_t grid_cols = (cols + superpixel_side - 1) / superpixel_side;
  std::vector<double> score(grid_rows * grid_cols);
  for (std::size_t gy = 0; gy < grid_rows; ++gy) {
    for (std::size_t gx = 0; gx < grid_cols; ++gx) {
      const std::size_t y0 = gy * superpixel_side;
      const std::size_t x0 = gx * superpixel_side;
      const auto h = static_cast<Eigen::Index>(std::min(superpixel_side, rows - y0));
      const auto w = static_cast<Eigen::Index>(std::min(superpixel_side, cols - x0));
      score[gy * grid_cols + gx] =
          landscape.block(static_cast<Eigen::Index>(y0), static_cast<Eigen::Index>(x0), h, w).mean();
    }
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < score.size(); ++i) {
    if (score[i] > 0.0) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  return order;
}

BinaryMask superpixel_mask(std::size_t rows, std::size_t cols, std::size_t superpixel_side,
                           const std::vector<std::size_t>& superpixels) {
  const std::size_t grid_cols = (cols + superpixel_side - 1) / superpixel_side;
  BinaryMask mask = BinaryMask::zeros(rows, cols);
  for (std::size_t idx : superpixels) {
    const std::size_t y0 = (idx / grid_cols) * superpixel_side;
    const std::size_t x0 = (idx % grid_cols) * superpixel_side;
    paint(mask, {y0, x0, std::min(superpixel_side, rows - y0), std::min(superpixel_side, cols - x0)});
  }
  return mask;
}

namespace {

struct GreedyResult {
  std::vector<std::size_t> chosen;  // superpixels, in ranked order
  std::size_t prefix = 0;
  bool found = false;
};

GreedyResult greedy_search(const SaliencyLandscape& landscape, const ModelGraph& graph,
                           const WeightStore& weights, const Tensor& input, Engine engine,
                           const ExplainConfig& cfg, std::size_t target, double threshold,
                           bool prune) {
  const std::size_t rows = graph.input_shape[1];
  const std::size_t cols = graph.input_shape[2];
  const std::vector<std::size_t> ranked = rank_superpixels(landscape, cfg.superpixel_side);
  auto sufficient = [&](const std::vector<std::size_t>& set) {
    const BinaryMask m = superpixel_mask(rows, cols, cfg.superpixel_side, set);
    return meets(classify(engine, graph, weights, input, m, cfg.ad), target, threshold);
  };

  GreedyResult result;
  std::vector<std::size_t> prefix;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    prefix.push_back(ranked[k]);
    if (sufficient(prefix)) {
      result.found = true;
      result.prefix = prefix.size();
      break;
    }
  }
  if (!result.found) return result;

  if (prune) {
    for (std::size_t j = prefix.size(); j-- > 0;) {
      if (prefix.size() == 1) break;
      std::vector<std::size_t> candidate = prefix;
      candidate.erase(candidate.begin() + static_cast<std::ptrdiff_t>(j));
      if (sufficient(candidate)) prefix = std::move(candidate);
    }
  }
  result.chosen = std::move(prefix);
  return result;
}

}  // namespace

Explanation extract_explanation(const SaliencyLandscape& landscape, const ModelGraph& graph,
                                const WeightStore& weights, const Tensor& input, Engine engine,
                                double gamma, const ExplainConfig& cfg) {
  cfg.validate();
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValueError("gamma must lie in [0, 1]");
  require_input_shape(graph, input);
  const std::size_t rows = graph.input_shape[1];
  const std::size_t cols = graph.input_shape[2];
  if (static_cast<std::size_t>(landscape.rows()) != rows ||
      static_cast<std::size_t>(landscape.cols()) != cols) {
    throw ShapeError("landscape does not match the input spatial size");
  }

  const Classification original =
      classify(engine, graph, weights, input, BinaryMask::ones(rows, cols), cfg.ad);
  const double threshold = gamma * original.confidence;
  const GreedyResult greedy = greedy_search(landscape, graph, weights, input, engine, cfg,
                                            original.label, threshold, true);

  Explanation e;
  e.pixel_set = greedy.found ? superpixel_mask(rows, cols, cfg.superpixel_side, greedy.chosen)
                             : BinaryMask::ones(rows, cols);
  e.gamma = gamma;
  e.engine = engine;
  e.target_class = original.label;
  e.original_confidence = original.confidence;
  e.size_fraction = static_cast<double>(e.pixel_set.count()) / static_cast<double>(rows * cols);
  e.confidence = explanation_confidence(e, graph, weights, input, engine, cfg.ad);
  return e;
}

std::size_t greedy_prefix_length(const SaliencyLandscape& landscape, const ModelGraph& graph,
                                 const WeightStore& weights, const Tensor& input, Engine engine,
                                 double gamma, const ExplainConfig& cfg) {
  const std::size_t rows = graph.input_shape[1];
  const std::size_t cols = graph.input_shape[2];
  const Classification original =
      classify(engine, graph, weights, input, BinaryMask::ones(rows, cols), cfg.ad);
  const GreedyResult greedy = greedy_search(landscape, graph, weights, input, engine, cfg,
                                            original.label, gamma * original.confidence, false);
  return greedy.found ? greedy.prefix : rank_superpixels(landscape, cfg.superpixel_side).size() + 1;
}

double explanation_confidence(const Explanation& explanation, const ModelGraph& graph,
                              const WeightStore& weights, const Tensor& input, Engine engine,
                              const ADConfig& cfg) {
  const Tensor scores = run_engine(engine, graph, weights, input, explanation.pixel_set, cfg);
  if (explanation.target_class >= scores.size()) throw ValueError("target class out of range");
  return static_cast<double>(scores[explanation.target_class]);
}

bool satisfies_sufficiency(const BinaryMask& pixel_set, std::size_t target_class,
                           double threshold_confidence, Engine engine, const ModelGraph& graph,
                           const WeightStore& weights, const Tensor& input, const ADConfig& cfg) {
  return meets(classify(engine, graph, weights, input, pixel_set, cfg), target_class,
               threshold_confidence);
}

bool satisfies_counterfactual(const BinaryMask& pixel_set, std::size_t target_class,
                              double threshold_confidence, Engine engine, const ModelGraph& graph,
                              const WeightStore& weights, const Tensor& input, const ADConfig& cfg) {
  return !meets(classify(engine, graph, weights, input, pixel_set.complement(), cfg), target_class,
                threshold_confidence);
}

}  // namespace convad
