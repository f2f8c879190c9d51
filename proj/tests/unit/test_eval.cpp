#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "convad/eval.hpp"
#include "convad/image_io.hpp"
#include "convad/model_io.hpp"
#include "convad/random.hpp"
#include "convad/synthetic.hpp"

using namespace convad;
namespace fs = std::filesystem;

namespace {

const Shape kImageShape{3, kSquareSide, kSquareSide};

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("convad_eval_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SuiteConfig small_suite(const fs::path& out) {
  SuiteConfig cfg;
  cfg.engines = {Engine::ad, Engine::zero};
  cfg.gammas = {0.0, 0.9};
  cfg.seed = 17;
  cfg.background_count = 10;
  cfg.out_dir = out;
  return cfg;
}

}  // namespace

TEST(Backgrounds, SolidReproducible) {
  const auto a = make_backgrounds(BackgroundKind::solid_color, 7, 3, kImageShape);
  const auto b = make_backgrounds(BackgroundKind::solid_color, 7, 3, kImageShape);
  ASSERT_EQ(a.items.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.items[i], b.items[i]);
    for (std::size_t c = 0; c < 3; ++c) {
      const auto plane = a.items[i].plane(c);
      EXPECT_EQ(plane.minCoeff(), plane.maxCoeff());
    }
  }
  const auto other = make_backgrounds(BackgroundKind::solid_color, 8, 3, kImageShape);
  EXPECT_NE(a.items[0], other.items[0]);
}

TEST(Backgrounds, SolidChannelMeansNearHalf) {
  const auto set = make_backgrounds(BackgroundKind::solid_color, 7, 1000, kImageShape);
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (const Tensor& t : set.items) {
      const float v = t.plane(c)(0, 0);
      EXPECT_TRUE(v >= 0.0f && v <= 1.0f);
      sum += v;
    }
    EXPECT_NEAR(sum / 1000.0, 0.5, 0.05);
  }
}

TEST(Backgrounds, IidPoolTooSmall) {
  const auto pool = square_dataset(1, 50);
  EXPECT_THROW(make_backgrounds(BackgroundKind::iid, 1, 100, kImageShape, pool), ValueError);
  EXPECT_THROW(make_backgrounds(BackgroundKind::iid, 1, 1, kImageShape, {}), ValueError);
}

TEST(Backgrounds, IidExcludesLabelWithoutRepeats) {
  const auto pool = square_dataset(2, 60, true);
  const auto set = make_backgrounds(BackgroundKind::iid, 3, 30, kImageShape, pool, std::size_t{1});
  ASSERT_EQ(set.items.size(), 30u);
  std::vector<const LabeledImage*> used;
  for (const Tensor& t : set.items) {
    const LabeledImage* match = nullptr;
    for (const auto& p : pool) {
      if (p.image == t) match = &p;
    }
    ASSERT_NE(match, nullptr);
    EXPECT_NE(match->label, 1u);
    EXPECT_EQ(std::count(used.begin(), used.end(), match), 0);
    used.push_back(match);
  }
  const auto again = make_backgrounds(BackgroundKind::iid, 3, 30, kImageShape, pool, std::size_t{1});
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(set.items[i], again.items[i]);
}

TEST(Plant, Cases) {
  Rng rng(4);
  const Tensor original = random_tensor(kImageShape, rng, 0, 1);
  const Tensor background = random_tensor(kImageShape, rng, 0, 1);
  EXPECT_EQ(plant(BinaryMask::ones(16, 16), original, background), original);
  EXPECT_EQ(plant(BinaryMask::zeros(16, 16), original, background), background);

  const BinaryMask m = random_mask(16, 16, rng);
  const Tensor planted = plant(m, original, background);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < 16; ++y) {
      for (std::size_t x = 0; x < 16; ++x) {
        EXPECT_EQ(planted(c, y, x), m(y, x) ? original(c, y, x) : background(c, y, x));
      }
    }
  }
  EXPECT_EQ(plant(m, planted, background), planted);
  EXPECT_THROW(plant(BinaryMask::ones(8, 8), original, background), ShapeError);
  EXPECT_THROW(plant(m, original, Tensor({1, 16, 16})), ShapeError);
}

TEST(Rho, FullAndEmptyExplanations) {
  const Model model = bright_square_model();
  Rng rng(5);
  const SquareImage img = square_image(rng, 2);
  Explanation e;
  e.target_class = img.label;
  e.pixel_set = BinaryMask::ones(16, 16);
  const auto pool = square_dataset(9, 40);
  const auto others = make_backgrounds(BackgroundKind::iid, 1, 20, kImageShape, pool, img.label);
  EXPECT_EQ(rho_robustness(e, img.image, others.items, model.graph, model.weights).rho, 1.0);

  // Backgrounds that hold a square in another quadrant keep their own class.
  e.pixel_set = BinaryMask::zeros(16, 16);
  const Robustness r = rho_robustness(e, img.image, others.items, model.graph, model.weights);
  EXPECT_EQ(r.rho, 0.0);
  EXPECT_THROW(rho_robustness(e, img.image, {}, model.graph, model.weights), ValueError);
}

TEST(Rho, MatchesRecount) {
  const Model model = bright_square_model();
  Rng rng(6);
  const SquareImage img = square_image(rng, 0);
  Explanation e;
  e.target_class = img.label;
  e.pixel_set = img.square;
  const auto solid = make_backgrounds(BackgroundKind::solid_color, 2, 50, kImageShape);
  const Robustness r = rho_robustness(e, img.image, solid.items, model.graph, model.weights);
  ASSERT_EQ(r.predictions.size(), 50u);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    const std::size_t label = argmax(forward(model.graph, model.weights, plant(e.pixel_set, img.image, solid.items[i])));
    EXPECT_EQ(label, r.predictions[i]);
    hits += label == e.target_class;
  }
  EXPECT_DOUBLE_EQ(r.rho, hits / 50.0);
}

TEST(Suite, SmallRunShapeAndDeterminism) {
  const Model model = bright_square_model();
  const auto data = square_dataset(11, 5);
  const auto pool = square_dataset(12, 60, true);
  const fs::path out = scratch_dir("small");
  const SuiteConfig cfg = small_suite(out);
  const EvalReport report = run_suite(data, pool, model.graph, model.weights, cfg);
  ASSERT_EQ(report.rows.size(), 4u);
  for (const EvalRow& row : report.rows) {
    EXPECT_EQ(row.sample_count, 5u);
    EXPECT_TRUE(row.rho_solid >= 0.0 && row.rho_solid <= 1.0);
    EXPECT_TRUE(row.rho_iid >= 0.0 && row.rho_iid <= 1.0);
    EXPECT_TRUE(row.mean_size > 0.0 && row.mean_size <= 1.0);
  }
  EXPECT_EQ(report.rows[0].engine, Engine::ad);
  EXPECT_EQ(report.rows[1].gamma, 0.9);
  EXPECT_EQ(report.rows[2].engine, Engine::zero);
  EXPECT_LE(report.rows[0].mean_size, report.rows[1].mean_size);

  const std::string csv = report_to_csv(report);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kReportHeader);
  EXPECT_EQ(read_text_file(out / "report.csv"), csv);

  SuiteConfig threaded = cfg;
  threaded.jobs = 3;
  threaded.out_dir = scratch_dir("small_threaded");
  EXPECT_EQ(report_to_csv(run_suite(data, pool, model.graph, model.weights, threaded)), csv);
}

TEST(Suite, SidecarPredictionsReproduceRho) {
  const Model model = bright_square_model();
  const auto data = square_dataset(13, 2);
  const auto pool = square_dataset(14, 40, true);
  const fs::path out = scratch_dir("sidecar");
  SuiteConfig cfg = small_suite(out);
  cfg.engines = {Engine::ad};
  cfg.gammas = {0.5};
  run_suite(data, pool, model.graph, model.weights, cfg);
  const auto side = nlohmann::json::parse(read_text_file(out / "explanations" / "img_000_ad_0.5.json"));
  std::size_t hits = 0;
  for (const auto& p : side["solid_predictions"]) hits += p.get<std::size_t>() == side["target_class"].get<std::size_t>();
  EXPECT_DOUBLE_EQ(side["rho_solid"].get<double>(), hits / 10.0);
  const BinaryMask mask = read_mask_pgm(out / "explanations" / "img_000_ad_0.5.pgm");
  EXPECT_DOUBLE_EQ(side["size_fraction"].get<double>(), mask.count() / 256.0);
}

TEST(Suite, DirectoryLoadingSkipsUnreadable) {
  const Model model = bright_square_model();
  const fs::path dir = scratch_dir("dataset");
  write_dataset(dir, square_dataset(15, 3), model.graph);
  write_text_file(dir / "zz_broken.png", "not an image");
  const auto loaded = load_dataset(dir, model.graph, model.weights);
  ASSERT_EQ(loaded.size(), 3u);
  const auto original = square_dataset(15, 3);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(loaded[i].label, original[i].label);

  SuiteConfig cfg = small_suite(scratch_dir("dataset_out"));
  cfg.background_count = 1;
  cfg.write_explanations = false;
  const EvalReport report = run_suite(dir, model.graph, model.weights, cfg);
  EXPECT_EQ(report.rows[0].sample_count, 3u);
  EXPECT_FALSE(fs::exists(cfg.out_dir / "explanations"));
}

TEST(Suite, EmptyDatasetIsAnError) {
  const Model model = bright_square_model();
  const fs::path dir = scratch_dir("empty");
  EXPECT_THROW(run_suite(dir, model.graph, model.weights, small_suite(scratch_dir("empty_out"))), Error);
}

TEST(Format, Gamma) {
  EXPECT_EQ(format_gamma(0.0), "0");
  EXPECT_EQ(format_gamma(0.9), "0.9");
  EXPECT_EQ(format_gamma(1.0), "1");
}
