#include "convad/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "convad/image_io.hpp"
#include "convad/model_io.hpp"

namespace convad {
namespace {

// Quadrant score scale and the "none" class bias. A quadrant wins once its
// pooled response exceeds kBias / kScale, which takes a clear majority of a
// planted square.
constexpr float kScale = 118.0f;
constexpr float kBias = 6.0f;

// Pixels respond to mean intensity through a triangle peaking at the square's
// tone and vanishing below kBandLow and above kBandHigh.
constexpr float kBandLow = 0.6f;
constexpr float kBandPeak = 0.75f;
constexpr float kBandHigh = 0.9f;
constexpr std::size_t kSide = 6;
constexpr std::size_t kSaltPixels = 6;

class Builder {
 public:
  Builder(Shape input, std::uint64_t seed) : rng_(seed) {
    model_.graph.input_shape = std::move(input);
    shape_ = model_.graph.input_shape;
  }

  Builder& conv(std::size_t out, std::size_t k, std::size_t stride = 1, std::size_t pad = 0,
                std::size_t dilation = 1) {
    LayerSpec l;
    l.kind = LayerKind::conv;
    l.geometry = ConvGeometry::square(k, stride, pad, dilation).channels(shape_[0], out);
    const double scale = 1.0 / std::sqrt(static_cast<double>(shape_[0] * k * k));
    add_param(l, "weight", random_normal({out, shape_[0], k, k}, scale));
    add_param(l, "bias", random_normal({out}, 0.1));
    return push(std::move(l));
  }

  Builder& plain(LayerKind kind) {
    LayerSpec l;
    l.kind = kind;
    return push(std::move(l));
  }

  Builder& batchnorm() {
    LayerSpec l;
    l.kind = LayerKind::batchnorm;
    const Shape c{shape_[0]};
    add_param(l, "mean", random_normal(c, 0.2));
    add_param(l, "var", random_tensor(c, rng_, 0.5f, 1.5f));
    add_param(l, "gamma", random_tensor(c, rng_, 0.5f, 1.5f));
    add_param(l, "beta", random_normal(c, 0.1));
    return push(std::move(l));
  }

  Builder& pool(LayerKind kind, std::size_t k, std::size_t stride, std::size_t pad = 0) {
    LayerSpec l;
    l.kind = kind;
    l.geometry = ConvGeometry::square(k, stride, pad);
    return push(std::move(l));
  }

  Builder& upsample(std::size_t factor) {
    LayerSpec l;
    l.kind = LayerKind::upsample;
    l.factor = factor;
    return push(std::move(l));
  }

  Builder& concat(std::size_t source) {
    LayerSpec l;
    l.kind = LayerKind::concat;
    l.concat_source = source;
    return push(std::move(l));
  }

  Builder& dense(std::size_t out) {
    LayerSpec l;
    l.kind = LayerKind::dense;
    const std::size_t in = shape_[0];
    add_param(l, "weight", random_normal({out, in}, 1.0 / std::sqrt(static_cast<double>(in))));
    add_param(l, "bias", random_normal({out}, 0.1));
    return push(std::move(l));
  }

  Builder& fixed(LayerSpec l, const std::vector<std::pair<std::string, Tensor>>& params) {
    for (const auto& [role, t] : params) add_param(l, role, t);
    return push(std::move(l));
  }

  Model finish(std::vector<std::string> labels = {}) {
    model_.graph.labels = std::move(labels);
    finalize(model_.graph, model_.weights);
    return std::move(model_);
  }

 private:
  Tensor random_normal(const Shape& shape, double scale) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng_.normal() * scale);
    return t;
  }

  void add_param(LayerSpec& l, const std::string& role, Tensor t) {
    const std::string name = "l" + std::to_string(model_.graph.layers.size()) + "." + role;
    l.params[role] = name;
    model_.weights.add(name, std::move(t));
  }

  Builder& push(LayerSpec l) {
    model_.graph.layers.push_back(std::move(l));
    // Finalizing a prefix propagates shapes for the next layer's parameters.
    ModelGraph partial = model_.graph;
    finalize(partial, model_.weights);
    shape_ = partial.shapes.back();
    return *this;
  }

  Rng rng_;
  Model model_;
  Shape shape_;
};

const std::vector<std::string> kSquareLabels{"none", "top_left", "top_right", "bottom_left",
                                             "bottom_right"};

Model square_family(float scale, float bias) {
  const std::size_t s = kSquareSide;
  Builder b({3, s, s}, 0);

  LayerSpec ramps;
  ramps.kind = LayerKind::conv;
  ramps.geometry = ConvGeometry::square(1).channels(3, 3);
  b.fixed(ramps, {{"weight", Tensor({3, 3, 1, 1}, 1.0f / 3.0f)},
                  {"bias", Tensor({3}, {-kBandLow, -kBandPeak, -kBandHigh})}});
  b.plain(LayerKind::relu);
  LayerSpec band;
  band.kind = LayerKind::conv;
  band.geometry = ConvGeometry::square(1).channels(3, 1);
  b.fixed(band, {{"weight", Tensor({1, 3, 1, 1}, {1.0f, -2.0f, 1.0f})}, {"bias", Tensor({1}, 0.0f)}});
  b.pool(LayerKind::avgpool, s / 2, s / 2);
  b.plain(LayerKind::flatten);

  LayerSpec dense;
  dense.kind = LayerKind::dense;
  Tensor w({5, 4}, 0.0f);
  Tensor dense_bias({5}, 0.0f);
  dense_bias[0] = bias;
  for (std::size_t q = 0; q < 4; ++q) {
    for (std::size_t j = 0; j < 4; ++j) w[(q + 1) * 4 + j] = q == j ? scale : -scale / 3.0f;
  }
  b.fixed(dense, {{"weight", w}, {"bias", dense_bias}});
  b.plain(LayerKind::softmax);
  return b.finish(kSquareLabels);
}

}  // namespace

Model bright_square_model() { return square_family(kScale, kBias); }

Model constant_model() { return square_family(0.0f, kBias); }

SquareImage square_image(Rng& rng, std::size_t quadrant) {
  if (quadrant > 4) throw ValueError("quadrant must be in 0..4");
  const std::size_t s = kSquareSide;
  SquareImage out{Tensor({3, s, s}), BinaryMask::zeros(s, s), 0};
  for (std::size_t i = 0; i < out.image.size(); ++i) {
    out.image[i] = static_cast<float>(rng.uniform(0.0, 0.35));
  }
  if (quadrant < 4) {
    const std::size_t half = s / 2;
    const std::size_t r0 = (quadrant / 2) * half + static_cast<std::size_t>(rng.integer(0, half - kSide));
    const std::size_t c0 = (quadrant % 2) * half + static_cast<std::size_t>(rng.integer(0, half - kSide));
    for (std::size_t c = 0; c < 3; ++c) {
      const auto value = static_cast<float>(rng.uniform(kBandPeak - 0.03, kBandPeak + 0.03));
      for (std::size_t y = r0; y < r0 + kSide; ++y) {
        for (std::size_t x = c0; x < c0 + kSide; ++x) out.image(c, y, x) = value;
      }
    }
    for (std::size_t y = r0; y < r0 + kSide; ++y) {
      for (std::size_t x = c0; x < c0 + kSide; ++x) out.square.set(y, x, true);
    }
    out.label = quadrant + 1;
  }
  // White specks outside the square: brighter than the square, outside the band.
  for (std::size_t placed = 0; placed < kSaltPixels;) {
    const auto y = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(s) - 1));
    const auto x = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(s) - 1));
    if (out.square(y, x) || out.image(0, y, x) == 1.0f) continue;
    for (std::size_t c = 0; c < 3; ++c) out.image(c, y, x) = 1.0f;
    ++placed;
  }
  return out;
}

std::vector<LabeledImage> square_dataset(std::uint64_t seed, std::size_t count, bool include_empty) {
  Rng rng(seed);
  const std::size_t kinds = include_empty ? 5 : 4;
  std::vector<LabeledImage> out;
  for (std::size_t i = 0; i < count; ++i) {
    SquareImage img = square_image(rng, i % kinds);
    char name[32];
    std::snprintf(name, sizeof name, "img_%03zu.ppm", i);
    out.push_back({name, std::move(img.image), img.label});
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<LabeledImage>& images,
                   const ModelGraph& graph) {
  std::string csv = "file,label\n";
  for (const LabeledImage& item : images) {
    write_pnm(dir / item.name, item.image);
    const std::string label =
        item.label < graph.labels.size() ? graph.labels[item.label] : std::to_string(item.label);
    csv += item.name + "," + label + "\n";
  }
  write_text_file(dir / "labels.csv", csv);
}

std::string_view to_string(Architecture arch) {
  switch (arch) {
    case Architecture::conv_only: return "conv_only";
    case Architecture::conv_pool: return "conv_pool";
    case Architecture::conv_upsample: return "conv_upsample";
    case Architecture::conv_concat: return "conv_concat";
    case Architecture::conv_dense: return "conv_dense";
    case Architecture::mixed: return "mixed";
  }
  return "?";
}

Model random_model(Architecture arch, std::uint64_t seed) {
  Builder b({3, 12, 12}, seed);
  switch (arch) {
    case Architecture::conv_only:
      b.conv(4, 3, 1, 1).plain(LayerKind::relu);
      b.conv(4, 3, 2, 1).plain(LayerKind::tanh);
      b.conv(2, 3, 1, 2, 2).plain(LayerKind::sigmoid);
      break;
    case Architecture::conv_pool:
      b.conv(4, 3, 1, 1).batchnorm().plain(LayerKind::relu);
      b.pool(LayerKind::maxpool, 2, 2);
      b.conv(4, 3, 1, 1).plain(LayerKind::silu);
      b.pool(LayerKind::avgpool, 3, 1, 1);
      b.conv(3, 1);
      break;
    case Architecture::conv_upsample:
      b.conv(4, 3, 2, 1).plain(LayerKind::relu);
      b.upsample(2);
      b.conv(2, 3, 1, 1).plain(LayerKind::tanh);
      break;
    case Architecture::conv_concat:
      b.conv(4, 3, 1, 1).plain(LayerKind::relu);
      b.conv(4, 3, 1, 1).plain(LayerKind::relu);
      b.concat(1);
      b.conv(3, 3, 1, 1);
      break;
    case Architecture::conv_dense:
      b.conv(4, 3, 1, 1).plain(LayerKind::relu);
      b.pool(LayerKind::maxpool, 2, 2);
      b.conv(4, 3).plain(LayerKind::relu);
      b.plain(LayerKind::flatten);
      b.dense(10).plain(LayerKind::relu);
      b.dense(5).plain(LayerKind::softmax);
      break;
    case Architecture::mixed:
      b.conv(4, 3, 1, 1).plain(LayerKind::relu);
      b.pool(LayerKind::maxpool, 2, 2);
      b.conv(4, 3, 1, 1).plain(LayerKind::silu);
      b.upsample(2);
      b.concat(1);
      b.conv(2, 3, 1, 1).plain(LayerKind::relu);
      b.plain(LayerKind::flatten);
      b.dense(4).plain(LayerKind::softmax);
      break;
  }
  return b.finish();
}

Tensor random_tensor(const Shape& shape, Rng& rng, float lo, float hi) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

BinaryMask random_mask(std::size_t rows, std::size_t cols, Rng& rng, double density) {
  BinaryMask m = BinaryMask::zeros(rows, cols);
  for (std::size_t y = 0; y < rows; ++y) {
    for (std::size_t x = 0; x < cols; ++x) m.set(y, x, rng.uniform() < density);
  }
  return m;
}

}  // namespace convad
