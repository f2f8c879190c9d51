// convad: inference, explanation and evaluation front end.
//
// Exit codes: 0 success, 1 failed check (verify-equivalence), 2 usage or I/O error.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <sstream>

#include "convad/ad_forward.hpp"
#include "convad/eval.hpp"
#include "convad/explainer.hpp"
#include "convad/image_io.hpp"
#include "convad/model_io.hpp"
#include "convad/random.hpp"
#include "convad/synthetic.hpp"

namespace {

using namespace convad;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

class UsageError : public Error {
 public:
  using Error::Error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_number(const std::string& text, const char* what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || !std::isfinite(v)) {
    throw UsageError(std::string("invalid ") + what + " '" + text + "'");
  }
  return v;
}

std::vector<double> parse_numbers(const std::vector<std::string>& items, const char* what) {
  std::vector<double> out;
  for (const auto& item : items) {
    for (const auto& part : split_list(item)) out.push_back(parse_number(part, what));
  }
  return out;
}

Engine engine_or_throw(const std::string& name) {
  const auto e = parse_engine(name);
  if (!e) throw UsageError("unknown engine '" + name + "' (expected ad, min, max, avg or zero)");
  return *e;
}

Tensor load_input(const Model& model, const std::string& path) {
  Tensor image = read_image(path);
  const Shape& shape = model.graph.input_shape;
  if (image.channels() != shape[0]) {
    throw ShapeError(path + " has " + std::to_string(image.channels()) +
                     " channels, model expects " + std::to_string(shape[0]));
  }
  return normalize_input(model.graph, resize_nearest(image, shape[1], shape[2]));
}

std::string label_name(const ModelGraph& graph, std::size_t index) {
  return index < graph.labels.size() ? graph.labels[index] : std::to_string(index);
}

// ---- infer ----------------------------------------------------------------

struct InferArgs {
  std::string model;
  std::string image;
  std::string mask;
  bool ad = false;
  std::string occlude;
  double tau = 0.0;
  std::size_t top_k = 5;
};

int run_infer(const InferArgs& a) {
  if (a.ad && !a.occlude.empty()) throw UsageError("--ad and --occlude are mutually exclusive");
  if ((a.ad || !a.occlude.empty()) && a.mask.empty()) {
    throw UsageError("--mask is required with --ad or --occlude");
  }
  const Model model = load_model(a.model);
  const Tensor input = load_input(model, a.image);

  Tensor scores;
  if (a.mask.empty()) {
    scores = forward(model.graph, model.weights, input);
  } else {
    const BinaryMask mask = load_mask(a.mask);
    if (!a.occlude.empty()) {
      const auto policy = parse_policy(a.occlude);
      if (!policy) throw UsageError("unknown occlusion policy '" + a.occlude + "'");
      scores = occlusion_forward(model.graph, model.weights, input, mask, *policy);
    } else {
      ADConfig cfg;
      cfg.tau = a.tau;
      scores = ad_forward(model.graph, model.weights, input, mask, cfg);
    }
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return scores[x] > scores[y]; });
  const std::size_t k = std::min(a.top_k, order.size());
  for (std::size_t r = 0; r < k; ++r) {
    std::printf("%zu\t%s\t%.6f\n", order[r], label_name(model.graph, order[r]).c_str(),
                static_cast<double>(scores[order[r]]));
  }
  return kExitOk;
}

// ---- explain --------------------------------------------------------------

struct ExplainArgs {
  std::string model;
  std::string image;
  std::string engine = "ad";
  std::vector<std::string> gammas;
  std::uint64_t seed = 0;
  std::string out;
  double tau = 0.0;
  std::size_t iterations = 20;
  std::size_t min_cell = 4;
  std::size_t jobs = 1;
};

int run_explain(const ExplainArgs& a) {
  const Engine engine = engine_or_throw(a.engine);
  const std::vector<double> gammas = parse_numbers(a.gammas, "gamma");
  ExplainConfig cfg;
  cfg.ad.tau = a.tau;
  cfg.iterations = a.iterations;
  cfg.min_cell = a.min_cell;
  cfg.jobs = a.jobs;
  cfg.validate();
  for (double g : gammas) {
    if (g < 0.0 || g > 1.0) throw UsageError("gamma must lie in [0, 1]");
  }

  const Model model = load_model(a.model);
  const Tensor input = load_input(model, a.image);
  const SaliencyLandscape landscape =
      build_landscape(model.graph, model.weights, input, engine, cfg, a.seed);

  const std::string stem = std::filesystem::path(a.image).stem().string();
  const std::filesystem::path out(a.out);
  for (double gamma : gammas) {
    Explanation e = extract_explanation(landscape, model.graph, model.weights, input, engine, gamma, cfg);
    e.seed = a.seed;
    const std::string base = stem + "_" + std::string(to_string(engine)) + "_" + format_gamma(gamma);
    write_mask_pgm(out / (base + ".pgm"), e.pixel_set);
    const nlohmann::json side = {
        {"engine", std::string(to_string(engine))},
        {"gamma", gamma},
        {"confidence", e.confidence},
        {"size_fraction", e.size_fraction},
        {"seed", e.seed},
        {"target_class", e.target_class},
        {"label", label_name(model.graph, e.target_class)},
        {"original_confidence", e.original_confidence},
    };
    write_text_file(out / (base + ".json"), side.dump(2) + "\n");
    std::printf("%s\tgamma=%s\tsize=%.6f\tconfidence=%.6f\n", base.c_str(),
                format_gamma(gamma).c_str(), e.size_fraction, e.confidence);
  }
  return kExitOk;
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  std::string model;
  std::string dataset;
  std::string engines = "ad,min,max,avg,zero";
  std::string gammas = "0,0.1,0.3,0.5,0.7,0.9";
  std::size_t backgrounds = 100;
  std::uint64_t seed = 0;
  std::string out;
  std::string iid_pool;
  double tau = 0.0;
  std::size_t iterations = 20;
  std::size_t jobs = 1;
  bool no_explanations = false;
};

int run_evaluate(const EvaluateArgs& a) {
  SuiteConfig cfg;
  cfg.engines.clear();
  for (const auto& name : split_list(a.engines)) cfg.engines.push_back(engine_or_throw(name));
  cfg.gammas = parse_numbers({a.gammas}, "gamma");
  if (a.backgrounds == 0) throw UsageError("--backgrounds must be >= 1");
  cfg.background_count = a.backgrounds;
  cfg.seed = a.seed;
  cfg.out_dir = a.out;
  if (!a.iid_pool.empty()) cfg.iid_pool = a.iid_pool;
  cfg.explain.ad.tau = a.tau;
  cfg.explain.iterations = a.iterations;
  cfg.jobs = a.jobs;
  cfg.write_explanations = !a.no_explanations;

  const Model model = load_model(a.model);
  const EvalReport report = run_suite(a.dataset, model.graph, model.weights, cfg);
  std::fputs(report_to_csv(report).c_str(), stdout);
  return kExitOk;
}

// ---- verify-equivalence ---------------------------------------------------

struct VerifyArgs {
  std::string model;
  std::size_t trials = 100;
  std::string taus = "0,0.25,0.49";
  std::uint64_t seed = 0;
  double tolerance = 1e-5;
  long corrupt_checkpoint = -1;
};

int run_verify(const VerifyArgs& a) {
  const std::vector<double> taus = parse_numbers({a.taus}, "tau");
  const Model model = load_model(a.model);
  const ModelGraph& graph = model.graph;

  ADOptions options;
  if (a.corrupt_checkpoint >= 0) {
    const auto pos = static_cast<std::size_t>(a.corrupt_checkpoint);
    if (!graph.is_checkpoint(pos)) {
      throw UsageError("position " + std::to_string(pos) + " is not a checkpoint");
    }
    options.fault = CheckpointFault{pos};
  }

  const BinaryMask ones = BinaryMask::ones(graph.input_shape[1], graph.input_shape[2]);
  Rng rng(a.seed);
  bool ok = true;
  for (double tau : taus) {
    ADConfig cfg;
    cfg.tau = tau;
    double worst = 0.0;
    std::optional<std::size_t> first_bad;
    std::size_t bad_trial = 0;
    for (std::size_t t = 0; t < a.trials; ++t) {
      const Tensor input = normalize_input(graph, random_tensor(graph.input_shape, rng, 0.0f, 1.0f));
      std::vector<Tensor> plain;
      forward(graph, model.weights, input, &plain);
      std::vector<ADState> masked;
      ADOptions opt = options;
      opt.trace = &masked;
      ad_forward(graph, model.weights, input, ones, cfg, opt);
      for (std::size_t p = 0; p < plain.size(); ++p) {
        const double d = max_abs_diff(plain[p], masked[p].activation);
        if (p + 1 == plain.size()) worst = std::max(worst, d);
        if (d > a.tolerance && !first_bad) {
          first_bad = p;
          bad_trial = t;
        }
      }
    }
    if (first_bad) {
      ok = false;
      std::printf("tau=%g\tFAIL\tmax_output_diff=%.3g\tfirst_divergence=position %zu (trial %zu)\n",
                  tau, worst, *first_bad, bad_trial);
    } else {
      std::printf("tau=%g\tPASS\tmax_output_diff=%.3g\ttrials=%zu\n", tau, worst, a.trials);
    }
  }
  return ok ? kExitOk : kExitCheckFailed;
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string name = "square";
  std::string out;
  std::uint64_t seed = 0;
  std::size_t count = 20;
  bool with_empty = false;
};

int run_synth_model(const SynthArgs& a) {
  Model model;
  if (a.name == "square") {
    model = bright_square_model();
  } else if (a.name == "constant") {
    model = constant_model();
  } else {
    bool found = false;
    for (Architecture arch : kAllArchitectures) {
      if (to_string(arch) == a.name) {
        model = random_model(arch, a.seed);
        found = true;
      }
    }
    if (!found) throw UsageError("unknown synthetic model '" + a.name + "'");
  }
  save_model(model, a.out);
  std::fprintf(stderr, "wrote %s.json and %s.bin\n", a.out.c_str(), a.out.c_str());
  return kExitOk;
}

int run_synth_dataset(const SynthArgs& a) {
  const Model model = bright_square_model();
  write_dataset(a.out, square_dataset(a.seed, a.count, a.with_empty), model.graph);
  std::fprintf(stderr, "wrote %zu images to %s\n", a.count, a.out.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked CNN inference, causal explanations and robustness evaluation"};
  app.require_subcommand(1);

  InferArgs infer;
  auto* cmd_infer = app.add_subcommand("infer", "Classify an image, optionally under a mask");
  cmd_infer->add_option("--model", infer.model, "Model prefix (<prefix>.json + <prefix>.bin)")->required();
  cmd_infer->add_option("--image", infer.image, "PNG/PPM/PGM image")->required()->check(CLI::ExistingFile);
  cmd_infer->add_option("--mask", infer.mask, "PGM mask, RLE JSON file or inline RLE JSON");
  cmd_infer->add_flag("--ad", infer.ad, "Activation-deactivation forward under --mask");
  cmd_infer->add_option("--occlude", infer.occlude, "Occlusion policy under --mask: min, max, avg, zero");
  cmd_infer->add_option("--tau", infer.tau, "Deactivation threshold in [0,1)");
  cmd_infer->add_option("--top-k", infer.top_k, "Number of classes to print");

  ExplainArgs explain;
  auto* cmd_explain = app.add_subcommand("explain", "Extract explanations at confidence thresholds");
  cmd_explain->add_option("--model", explain.model, "Model prefix")->required();
  cmd_explain->add_option("--image", explain.image, "Input image")->required()->check(CLI::ExistingFile);
  cmd_explain->add_option("--engine", explain.engine, "ad, min, max, avg or zero");
  cmd_explain->add_option("--gamma", explain.gammas, "Confidence threshold(s), repeatable or comma separated")
      ->required();
  cmd_explain->add_option("--seed", explain.seed, "Seed for the responsibility ranking")->required();
  cmd_explain->add_option("--out", explain.out, "Output directory")->required();
  cmd_explain->add_option("--tau", explain.tau, "Deactivation threshold for the ad engine");
  cmd_explain->add_option("--iterations", explain.iterations, "Ranking iterations");
  cmd_explain->add_option("--min-cell", explain.min_cell, "Smallest region (pixels) that is split");
  cmd_explain->add_option("--jobs", explain.jobs, "Worker threads");

  EvaluateArgs evaluate;
  auto* cmd_evaluate = app.add_subcommand("evaluate", "Robustness and size report over a dataset");
  cmd_evaluate->add_option("--model", evaluate.model, "Model prefix")->required();
  cmd_evaluate->add_option("--dataset", evaluate.dataset, "Image directory")->required()->check(CLI::ExistingDirectory);
  cmd_evaluate->add_option("--engines", evaluate.engines, "Comma separated engines");
  cmd_evaluate->add_option("--gammas", evaluate.gammas, "Comma separated thresholds");
  cmd_evaluate->add_option("--backgrounds", evaluate.backgrounds, "Backgrounds per kind");
  cmd_evaluate->add_option("--seed", evaluate.seed, "Base seed")->required();
  cmd_evaluate->add_option("--out", evaluate.out, "Output directory")->required();
  cmd_evaluate->add_option("--iid-pool", evaluate.iid_pool, "Image directory for IID backgrounds")
      ->check(CLI::ExistingDirectory);
  cmd_evaluate->add_option("--tau", evaluate.tau, "Deactivation threshold for the ad engine");
  cmd_evaluate->add_option("--iterations", evaluate.iterations, "Ranking iterations");
  cmd_evaluate->add_option("--jobs", evaluate.jobs, "Worker threads (images in parallel)");
  cmd_evaluate->add_flag("--no-explanations", evaluate.no_explanations, "Only write report.csv");

  VerifyArgs verify;
  auto* cmd_verify = app.add_subcommand("verify-equivalence",
                                        "Check that an all-ones mask reproduces plain inference");
  cmd_verify->add_option("--model", verify.model, "Model prefix")->required();
  cmd_verify->add_option("--trials", verify.trials, "Random inputs per tau");
  cmd_verify->add_option("--tau", verify.taus, "Comma separated thresholds");
  cmd_verify->add_option("--seed", verify.seed, "Seed for the random inputs");
  cmd_verify->add_option("--tolerance", verify.tolerance, "Maximum absolute deviation");
  cmd_verify->add_option("--corrupt-checkpoint", verify.corrupt_checkpoint,
                         "Test hook: break the mask at this checkpoint position")
      ->group("");

  SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synth", "Write synthetic models and datasets");
  cmd_synth->require_subcommand(1);
  auto* cmd_synth_model = cmd_synth->add_subcommand("model", "Synthetic model");
  cmd_synth_model->add_option("--name", synth.name,
                              "square, constant, conv_only, conv_pool, conv_upsample, conv_concat, "
                              "conv_dense or mixed");
  cmd_synth_model->add_option("--out", synth.out, "Output prefix")->required();
  cmd_synth_model->add_option("--seed", synth.seed, "Weight seed for random architectures");
  auto* cmd_synth_data = cmd_synth->add_subcommand("dataset", "Bright-square images with labels.csv");
  cmd_synth_data->add_option("--out", synth.out, "Output directory")->required();
  cmd_synth_data->add_option("--seed", synth.seed, "Image seed");
  cmd_synth_data->add_option("--count", synth.count, "Number of images");
  cmd_synth_data->add_flag("--with-empty", synth.with_empty, "Include images without a square");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (cmd_infer->parsed()) return run_infer(infer);
    if (cmd_explain->parsed()) return run_explain(explain);
    if (cmd_evaluate->parsed()) return run_evaluate(evaluate);
    if (cmd_verify->parsed()) return run_verify(verify);
    if (cmd_synth_model->parsed()) return run_synth_model(synth);
    if (cmd_synth_data->parsed()) return run_synth_dataset(synth);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
