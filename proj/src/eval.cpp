#include "convad/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <future>
#include <iostream>
#include <map>
#include <sstream>

#include "convad/image_io.hpp"
#include "convad/model_io.hpp"
#include "convad/random.hpp"

namespace convad {
namespace {

bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".png" || ext == ".ppm" || ext == ".pgm";
}

std::map<std::string, std::string> read_labels_csv(const std::filesystem::path& path) {
  std::map<std::string, std::string> labels;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    std::string file = line.substr(0, comma);
    std::string label = line.substr(comma + 1);
    if (file == "file" && label == "label") continue;
    labels[file] = label;
  }
  return labels;
}

std::optional<std::size_t> resolve_label(const std::string& text, const ModelGraph& graph) {
  const auto it = std::find(graph.labels.begin(), graph.labels.end(), text);
  if (it != graph.labels.end()) return static_cast<std::size_t>(it - graph.labels.begin());
  try {
    std::size_t used = 0;
    const unsigned long v = std::stoul(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

struct ImageOutcome {
  // Indexed [engine][gamma].
  std::vector<std::vector<Explanation>> explanations;
  std::vector<std::vector<Robustness>> solid;
  std::vector<std::vector<Robustness>> iid;
};

std::string stem_of(const std::string& name) { return std::filesystem::path(name).stem().string(); }

}  // namespace

std::string format_gamma(double gamma) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", gamma);
  return buf;
}

BackgroundSet make_backgrounds(BackgroundKind kind, std::uint64_t seed, std::size_t count,
                               const Shape& shape, std::span<const LabeledImage> pool,
                               std::optional<std::size_t> exclude_label) {
  if (shape.size() != 3) throw ShapeError("backgrounds need a (C,H,W) shape");
  BackgroundSet set{kind, {}, seed};
  Rng rng(seed);
  if (kind == BackgroundKind::solid_color) {
    for (std::size_t i = 0; i < count; ++i) {
      Tensor bg(shape);
      for (std::size_t c = 0; c < shape[0]; ++c) {
        bg.plane(c).setConstant(static_cast<float>(rng.uniform()));
      }
      set.items.push_back(std::move(bg));
    }
    return set;
  }

  if (pool.empty()) throw ValueError("IID backgrounds need a non-empty image pool");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (exclude_label && pool[i].label == *exclude_label) continue;
    eligible.push_back(i);
  }
  if (eligible.size() < count) {
    throw ValueError("IID pool has " + std::to_string(eligible.size()) +
                     " eligible images but " + std::to_string(count) + " backgrounds were requested");
  }
  // Partial Fisher-Yates: the first `count` entries are the sample.
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = static_cast<std::size_t>(
        rng.integer(static_cast<std::int64_t>(i), static_cast<std::int64_t>(eligible.size()) - 1));
    std::swap(eligible[i], eligible[j]);
    const Tensor& img = pool[eligible[i]].image;
    if (img.shape() != shape) {
      throw ShapeError("pool image '" + pool[eligible[i]].name + "' has shape " +
                       shape_to_string(img.shape()) + ", expected " + shape_to_string(shape));
    }
    set.items.push_back(img);
  }
  return set;
}

Tensor plant(const BinaryMask& pixel_set, const Tensor& original, const Tensor& background) {
  if (original.shape() != background.shape() || original.rank() != 3) {
    throw ShapeError("plant: original " + shape_to_string(original.shape()) + " and background " +
                     shape_to_string(background.shape()) + " differ");
  }
  if (pixel_set.rows() != original.height() || pixel_set.cols() != original.width()) {
    throw ShapeError("plant: explanation mask " + mask_shape_string(pixel_set) +
                     " does not match image " + shape_to_string(original.shape()));
  }
  Tensor out(original.shape());
  const auto keep = pixel_set.cells() != 0;
  for (std::size_t c = 0; c < original.channels(); ++c) {
    out.plane(c) = keep.select(original.plane(c), background.plane(c));
  }
  return out;
}

Robustness rho_robustness(const Explanation& explanation, const Tensor& original,
                          std::span<const Tensor> backgrounds, const ModelGraph& graph,
                          const WeightStore& weights) {
  if (backgrounds.empty()) throw ValueError("rho_robustness needs at least one background");
  Robustness r;
  std::size_t hits = 0;
  for (const Tensor& bg : backgrounds) {
    const std::size_t label = argmax(forward(graph, weights, plant(explanation.pixel_set, original, bg)));
    r.predictions.push_back(label);
    if (label == explanation.target_class) ++hits;
  }
  r.rho = static_cast<double>(hits) / static_cast<double>(backgrounds.size());
  return r;
}

std::vector<LabeledImage> load_dataset(const std::filesystem::path& dir, const ModelGraph& graph,
                                       const WeightStore& weights) {
  if (!std::filesystem::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  std::map<std::string, std::string> labels;
  if (std::filesystem::exists(dir / "labels.csv")) labels = read_labels_csv(dir / "labels.csv");

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<LabeledImage> out;
  for (const auto& path : files) {
    LabeledImage item;
    item.name = path.filename().string();
    try {
      Tensor img = read_image(path);
      if (img.channels() != graph.input_shape[0]) {
        throw IoError("has " + std::to_string(img.channels()) + " channels, model expects " +
                      std::to_string(graph.input_shape[0]));
      }
      item.image = resize_nearest(img, graph.input_shape[1], graph.input_shape[2]);
    } catch (const Error& e) {
      std::cerr << "warning: skipping " << path.string() << ": " << e.what() << "\n";
      continue;
    }
    const auto it = labels.find(item.name);
    std::optional<std::size_t> label;
    if (it != labels.end()) label = resolve_label(it->second, graph);
    item.label = label ? *label : argmax(forward(graph, weights, normalize_input(graph, item.image)));
    out.push_back(std::move(item));
  }
  return out;
}

EvalReport run_suite(std::span<const LabeledImage> dataset, std::span<const LabeledImage> iid_pool,
                     const ModelGraph& graph, const WeightStore& weights, const SuiteConfig& cfg) {
  if (dataset.empty()) throw ValueError("evaluation dataset is empty");
  if (cfg.engines.empty() || cfg.gammas.empty()) throw ValueError("engines and gammas must be non-empty");
  cfg.explain.validate();

  const Shape& shape = graph.input_shape;
  std::vector<Tensor> solid;
  for (Tensor& bg : make_backgrounds(BackgroundKind::solid_color, mix_seed(cfg.seed, 0),
                                     cfg.background_count, shape)
                        .items) {
    solid.push_back(normalize_input(graph, bg));
  }

  ExplainConfig explain = cfg.explain;
  explain.jobs = 1;
  const bool pool_is_dataset = iid_pool.data() == dataset.data();
  auto process = [&](std::size_t index) {
    const LabeledImage& item = dataset[index];
    const Tensor input = normalize_input(graph, item.image);
    const std::uint64_t image_seed = mix_seed(cfg.seed, index + 1);
    ImageOutcome outcome;
    std::optional<std::vector<Tensor>> iid;
    for (Engine engine : cfg.engines) {
      const SaliencyLandscape landscape =
          build_landscape(graph, weights, input, engine, explain, image_seed);
      auto& row_e = outcome.explanations.emplace_back();
      auto& row_s = outcome.solid.emplace_back();
      auto& row_i = outcome.iid.emplace_back();
      for (double gamma : cfg.gammas) {
        Explanation e = extract_explanation(landscape, graph, weights, input, engine, gamma, explain);
        e.seed = image_seed;
        if (!iid) {
          // Exclude the explained class; with an unlabeled pool the labels
          // are the model's own predictions.
          std::vector<LabeledImage> pool;
          for (const LabeledImage& p : iid_pool) {
            if (!pool_is_dataset || p.name != item.name) pool.push_back(p);
          }
          iid.emplace();
          for (Tensor& bg : make_backgrounds(BackgroundKind::iid, image_seed, cfg.background_count,
                                             shape, pool, e.target_class)
                                .items) {
            iid->push_back(normalize_input(graph, bg));
          }
        }
        row_s.push_back(rho_robustness(e, input, solid, graph, weights));
        row_i.push_back(rho_robustness(e, input, *iid, graph, weights));
        row_e.push_back(std::move(e));
      }
    }
    return outcome;
  };

  std::vector<ImageOutcome> outcomes(dataset.size());
  if (cfg.jobs <= 1) {
    for (std::size_t i = 0; i < dataset.size(); ++i) outcomes[i] = process(i);
  } else {
    std::vector<std::future<void>> workers;
    const std::size_t n = std::min(cfg.jobs, dataset.size());
    for (std::size_t t = 0; t < n; ++t) {
      workers.push_back(std::async(std::launch::async, [&, t] {
        for (std::size_t i = t; i < dataset.size(); i += n) outcomes[i] = process(i);
      }));
    }
    for (auto& w : workers) w.get();
  }

  EvalReport report;
  report.seed = cfg.seed;
  report.background_count = cfg.background_count;
  for (std::size_t e = 0; e < cfg.engines.size(); ++e) {
    for (std::size_t g = 0; g < cfg.gammas.size(); ++g) {
      EvalRow row;
      row.engine = cfg.engines[e];
      row.gamma = cfg.gammas[g];
      for (const ImageOutcome& o : outcomes) {
        row.rho_solid += o.solid[e][g].rho;
        row.rho_iid += o.iid[e][g].rho;
        row.mean_size += o.explanations[e][g].size_fraction;
        row.mean_confidence += o.explanations[e][g].confidence;
      }
      row.sample_count = outcomes.size();
      const auto n = static_cast<double>(outcomes.size());
      row.rho_solid /= n;
      row.rho_iid /= n;
      row.mean_size /= n;
      row.mean_confidence /= n;
      report.rows.push_back(row);
    }
  }

  std::filesystem::create_directories(cfg.out_dir);
  write_text_file(cfg.out_dir / "report.csv", report_to_csv(report));
  if (cfg.write_explanations) {
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      for (std::size_t e = 0; e < cfg.engines.size(); ++e) {
        for (std::size_t g = 0; g < cfg.gammas.size(); ++g) {
          const Explanation& x = outcomes[i].explanations[e][g];
          const std::string base = stem_of(dataset[i].name) + "_" +
                                   std::string(to_string(x.engine)) + "_" + format_gamma(x.gamma);
          const auto dir = cfg.out_dir / "explanations";
          write_mask_pgm(dir / (base + ".pgm"), x.pixel_set);
          nlohmann::json side = {
              {"engine", std::string(to_string(x.engine))},
              {"gamma", x.gamma},
              {"confidence", x.confidence},
              {"size_fraction", x.size_fraction},
              {"seed", x.seed},
              {"image", dataset[i].name},
              {"target_class", x.target_class},
              {"original_confidence", x.original_confidence},
              {"rho_solid", outcomes[i].solid[e][g].rho},
              {"rho_iid", outcomes[i].iid[e][g].rho},
              {"solid_predictions", outcomes[i].solid[e][g].predictions},
              {"iid_predictions", outcomes[i].iid[e][g].predictions},
          };
          write_text_file(dir / (base + ".json"), side.dump(2) + "\n");
        }
      }
    }
  }
  return report;
}

EvalReport run_suite(const std::filesystem::path& dataset_dir, const ModelGraph& graph,
                     const WeightStore& weights, const SuiteConfig& cfg) {
  const std::vector<LabeledImage> dataset = load_dataset(dataset_dir, graph, weights);
  if (dataset.empty()) throw ValueError("no readable images in " + dataset_dir.string());
  if (cfg.iid_pool) {
    const std::vector<LabeledImage> pool = load_dataset(*cfg.iid_pool, graph, weights);
    return run_suite(dataset, pool, graph, weights, cfg);
  }
  return run_suite(dataset, dataset, graph, weights, cfg);
}

std::string report_to_csv(const EvalReport& report) {
  std::string out = std::string(kReportHeader) + "\n";
  char buf[256];
  for (const EvalRow& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%.6f,%.6f,%zu\n",
                  std::string(to_string(r.engine)).c_str(), format_gamma(r.gamma).c_str(),
                  r.rho_solid, r.rho_iid, r.mean_size, r.mean_confidence, r.sample_count);
    out += buf;
  }
  return out;
}

}  // namespace convad
