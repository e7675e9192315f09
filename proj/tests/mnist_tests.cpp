// Tests that need the real MNIST files (SCOPED_ATTACK_DATA_DIR) and a trained
// single-layer model. The model is trained once and cached on disk
// (SCOPED_ATTACK_CACHE_DIR) so reruns are cheap.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <vector>

#include "scoped_attack/analysis.hpp"
#include "scoped_attack/attack.hpp"
#include "scoped_attack/idx.hpp"
#include "scoped_attack/model_io.hpp"
#include "scoped_attack/photo.hpp"
#include "scoped_attack/train.hpp"

namespace sa = scoped_attack;
namespace fs = std::filesystem;

namespace {

fs::path data_dir() {
  const char* env = std::getenv("SCOPED_ATTACK_DATA_DIR");
  REQUIRE(env != nullptr);
  return env;
}

fs::path cache_dir() {
  const char* env = std::getenv("SCOPED_ATTACK_CACHE_DIR");
  fs::path p = env && *env ? fs::path(env) : fs::temp_directory_path() / "scoped_attack_cache";
  fs::create_directories(p);
  return p;
}

const sa::Dataset& train_set() {
  static sa::Dataset ds = sa::load_mnist(data_dir(), sa::Split::train);
  return ds;
}

const sa::Dataset& test_set() {
  static sa::Dataset ds = sa::load_mnist(data_dir(), sa::Split::test);
  return ds;
}

// Default-configuration logistic regression, trained once per cache.
const sa::LogRegModel& logreg() {
  static sa::LogRegModel model = [] {
    sa::TrainConfig cfg = sa::default_logreg_config();
    fs::path path = cache_dir() / ("logreg_seed" + std::to_string(cfg.rng_seed) + "_ep" +
                                   std::to_string(cfg.epochs) + ".bin");
    if (fs::exists(path)) return sa::load_logreg(path);
    sa::LogRegModel m = sa::train_logreg(train_set(), cfg);
    sa::save_model(m, path);
    return m;
  }();
  return model;
}

// First test image of true class `cls` that the model classifies as `cls`.
const sa::Image& first_eligible(int cls) {
  for (const sa::LabeledImage& item : test_set().items) {
    if (item.label == cls && sa::logreg_forward(logreg(), item.image).predicted_class == cls) {
      return item.image;
    }
  }
  FAIL("no eligible image of class " + std::to_string(cls));
  static sa::Image dummy;
  return dummy;
}

// Renders an MNIST digit as an ink-on-paper photograph: 4x nearest upscale
// placed on a white canvas.
sa::Photo render_as_photo(const sa::Image& digit) {
  const int scale = 4;
  const int margin = 14;
  const int side = 28 * scale + 2 * margin;
  sa::Photo photo;
  photo.width = side;
  photo.height = side;
  photo.channels = 1;
  photo.data.assign(static_cast<std::size_t>(side) * side, 255);
  for (int r = 0; r < 28; ++r) {
    for (int c = 0; c < 28; ++c) {
      auto ink = static_cast<std::uint8_t>(255 - std::lround(digit.at(r, c) * 255.0));
      for (int dr = 0; dr < scale; ++dr) {
        for (int dc = 0; dc < scale; ++dc) {
          photo.data[(margin + r * scale + dr) * static_cast<std::size_t>(side) +
                     (margin + c * scale + dc)] = ink;
        }
      }
    }
  }
  return photo;
}

}  // namespace

TEST_CASE("canonical MNIST splits load with the expected sizes", "[mnist]") {
  REQUIRE(train_set().size() == 60000);
  REQUIRE(test_set().size() == 10000);
  REQUIRE(train_set().split == sa::Split::train);

  for (int i = 0; i < 100; ++i) {
    REQUIRE(sa::image_in_range(test_set().items[i].image));
    REQUIRE(test_set().items[i].label >= 0);
    REQUIRE(test_set().items[i].label <= 9);
  }

  // Direct parse of the test-images file.
  auto bytes = sa::read_file_bytes(
      [] {
        for (const char* suffix : {"", ".gz"}) {
          fs::path p = data_dir() / (std::string("t10k-images-idx3-ubyte") + suffix);
          if (fs::exists(p)) return p;
        }
        throw std::runtime_error("missing t10k images");
      }());
  REQUIRE(sa::parse_idx_images(bytes).size() == 10000);
}

TEST_CASE("trained logistic regression clears the accuracy floor", "[mnist]") {
  double train_acc = sa::evaluate_accuracy(logreg(), train_set());
  double test_acc = sa::evaluate_accuracy(logreg(), test_set());
  std::cout << "logreg train_accuracy=" << train_acc << " test_accuracy=" << test_acc << "\n";
  REQUIRE(test_acc >= 0.90);
}

TEST_CASE("logreg training is reproducible and its loss decreases", "[mnist]") {
  sa::Dataset subset;
  subset.items.assign(train_set().items.begin(), train_set().items.begin() + 10000);

  sa::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.rng_seed = 0;
  sa::LogRegModel a = sa::train_logreg(subset, cfg);
  sa::LogRegModel b = sa::train_logreg(subset, cfg);
  REQUIRE(a.weights == b.weights);
  REQUIRE(a.bias == b.bias);

  cfg.epochs = 3;
  std::vector<double> losses;
  sa::train_logreg(subset, cfg, &losses);
  REQUIRE(losses.size() == 3);
  REQUIRE(losses[1] < losses[0]);
  REQUIRE(losses[2] < losses[1]);
}

TEST_CASE("model file round-trip preserves every test prediction", "[mnist]") {
  fs::path path = cache_dir() / "roundtrip_check.bin";
  sa::save_model(logreg(), path);
  sa::LogRegModel loaded = sa::load_logreg(path);
  REQUIRE(loaded.weights == logreg().weights);
  for (int i = 0; i < 10000; i += 13) {
    const sa::Image& img = test_set().items[i].image;
    REQUIRE(sa::logreg_forward(loaded, img).predicted_class ==
            sa::logreg_forward(logreg(), img).predicted_class);
  }
}

TEST_CASE("class-0 weight map shows an annulus", "[mnist]") {
  auto maps = sa::class_weight_maps(logreg());
  const sa::Image& map0 = maps[0];
  double ring_sum = 0, center_sum = 0;
  int ring_n = 0, center_n = 0;
  for (int r = 0; r < 28; ++r) {
    for (int c = 0; c < 28; ++c) {
      double dist = std::hypot(r - 13.5, c - 13.5);
      if (dist >= 8.0 && dist <= 11.0) {
        ring_sum += map0.at(r, c);
        ++ring_n;
      }
    }
  }
  for (int r = 12; r <= 15; ++r) {
    for (int c = 12; c <= 15; ++c) {
      center_sum += map0.at(r, c);
      ++center_n;
    }
  }
  REQUIRE(ring_sum / ring_n > center_sum / center_n);
}

TEST_CASE("9 minus 4 weight difference concentrates below the digit", "[mnist]") {
  sa::SignedMap map = sa::weight_difference_map(logreg(), 9, 4);
  double mass = 0, row_mass = 0;
  for (int r = 0; r < 28; ++r) {
    for (int c = 0; c < 28; ++c) {
      double v = std::max(map.values[r * 28 + c], 0.0);
      mass += v;
      row_mass += v * r;
    }
  }
  double centroid_row = row_mass / mass;
  std::cout << "w9-w4 positive centroid row=" << centroid_row << "\n";
  REQUIRE(centroid_row > 18.0);

  // The same structure through the attack-direction map: the strongest
  // positive directions sit in the lower half of the frame.
  auto delta = sa::delta_map(logreg(), 4, 9, 0.5);
  std::vector<std::pair<double, int>> positives;
  for (int i = 0; i < sa::kImagePixels; ++i) {
    if (delta[i] > 0) positives.push_back({delta[i], i});
  }
  std::sort(positives.rbegin(), positives.rend());
  std::size_t top = std::max<std::size_t>(1, sa::kImagePixels / 20);  // top 5%
  top = std::min(top, positives.size());
  double rows = 0;
  for (std::size_t k = 0; k < top; ++k) rows += positives[k].second / 28;
  REQUIRE(rows / top > 13.5);
}

TEST_CASE("seven to two attack with a wide scope", "[mnist]") {
  const sa::Image& seven = first_eligible(7);
  sa::AttackConfig cfg;
  cfg.alpha = 0.5;
  cfg.min_difference = 0.0;
  cfg.step = 0.02;
  cfg.max_steps = 10;
  sa::AttackOutcome out = sa::run_attack(logreg(), seven, 2, cfg);
  std::cout << "7->2 wide scope: success=" << out.success << " ssim=" << out.ssim_score
            << " steps=" << out.steps_used << "\n";
  REQUIRE(out.success);
  REQUIRE(out.ssim_score >= 0.88);
  REQUIRE(out.ssim_score <= 0.97);
}

TEST_CASE("seven to two attack with a tight scope touches few pixels", "[mnist]") {
  const sa::Image& seven = first_eligible(7);
  sa::AttackConfig cfg;
  cfg.alpha = 0.5;
  cfg.min_difference = 0.65;
  cfg.step = 0.25;
  cfg.max_steps = 10;
  sa::AttackOutcome out = sa::run_attack(logreg(), seven, 2, cfg);
  int modified = sa::count_modified_pixels(seven, out.adversarial);
  std::cout << "7->2 tight scope: success=" << out.success << " ssim=" << out.ssim_score
            << " modified=" << modified << "\n";
  REQUIRE(out.success);
  REQUIRE(modified <= 10);
  REQUIRE(out.ssim_score >= 0.88);
}

TEST_CASE("rendered digits survive the photo pipeline", "[mnist]") {
  sa::Rng rng(0xf00d);
  int total = 0, preserved = 0;
  std::set<int> used;
  while (total < 100) {
    int idx = static_cast<int>(rng.below(test_set().size()));
    if (!used.insert(idx).second) continue;
    const sa::LabeledImage& item = test_set().items[idx];
    ++total;
    sa::Image processed = sa::preprocess_photo(render_as_photo(item.image));
    REQUIRE(sa::image_in_range(processed));
    if (sa::logreg_forward(logreg(), processed).predicted_class == item.label) ++preserved;
  }
  std::cout << "photo round-trip preserved " << preserved << "/100 labels\n";
  REQUIRE(preserved >= 90);
}

TEST_CASE("one epoch of the 5-layer network beats the single layer", "[mnist]") {
  sa::TrainConfig cfg = sa::default_mlp_config();
  cfg.epochs = 1;
  sa::Mlp5Model model = sa::train_mlp(train_set(), cfg);
  double acc = sa::evaluate_accuracy(model, test_set());
  std::cout << "mlp 1-epoch test_accuracy=" << acc << "\n";
  REQUIRE(acc > 0.90);

  // Round-trip the trained state and compare eval probabilities.
  fs::path path = cache_dir() / "mlp_1epoch_check.bin";
  sa::save_model(model, path);
  sa::Mlp5Model loaded = sa::load_mlp5(path);
  for (int i = 0; i < 50; ++i) {
    REQUIRE(sa::mlp_forward(loaded, test_set().items[i].image).probs ==
            sa::mlp_forward(model, test_set().items[i].image).probs);
  }
}

TEST_CASE("intermediate classes appear on the 6 to 1 attack path", "[mnist]") {
  int found_with_intermediate = 0;
  std::set<int> intermediate_classes;
  int checked = 0;
  for (const sa::LabeledImage& item : test_set().items) {
    if (checked >= 50) break;
    if (item.label != 6) continue;
    if (sa::logreg_forward(logreg(), item.image).predicted_class != 6) continue;
    ++checked;

    sa::AttackConfig cfg;
    cfg.alpha = 0.5;
    cfg.min_difference = 0.0;
    cfg.step = 0.05;
    cfg.max_steps = 100;
    sa::AttackOutcome out = sa::run_attack(logreg(), item.image, 1, cfg);
    if (!out.success) continue;
    for (const sa::Image& step_img : out.trajectory) {
      int cls = sa::logreg_forward(logreg(), step_img).predicted_class;
      if (cls != 6 && cls != 1) {
        ++found_with_intermediate;
        intermediate_classes.insert(cls);
        break;
      }
    }
  }
  std::cout << "6->1 intermediates over " << checked << " sixes: " << found_with_intermediate
            << " (classes:";
  for (int cls : intermediate_classes) std::cout << " " << cls;
  std::cout << ")\n";
  REQUIRE(found_with_intermediate >= 1);
}

TEST_CASE("pca projection of the 6-1 study is well formed", "[mnist]") {
  std::vector<sa::Image> fit_samples;
  std::vector<sa::LabeledImage> background;
  for (const sa::LabeledImage& item : test_set().items) {
    if (item.label == 1 || item.label == 2 || item.label == 6) {
      fit_samples.push_back(item.image);
      if (background.size() < 600) background.push_back(item);
    }
  }
  sa::PcaBasis basis = sa::pca_fit(fit_samples);

  const sa::Image& six = first_eligible(6);
  sa::AttackConfig cfg;
  cfg.alpha = 0.5;
  cfg.step = 0.05;
  cfg.max_steps = 100;
  sa::AttackOutcome out = sa::run_attack(logreg(), six, 1, cfg);
  sa::TrajectoryProjection proj = sa::project_trajectory(basis, out.trajectory, background);
  REQUIRE(proj.trajectory.size() == out.trajectory.size());
  REQUIRE(proj.background.size() == background.size());

  // Orthonormal basis and dominant first component.
  double n1 = 0, n2 = 0, cross = 0;
  for (int i = 0; i < sa::kImagePixels; ++i) {
    n1 += basis.component1[i] * basis.component1[i];
    n2 += basis.component2[i] * basis.component2[i];
    cross += basis.component1[i] * basis.component2[i];
  }
  REQUIRE(std::abs(n1 - 1.0) < 1e-8);
  REQUIRE(std::abs(n2 - 1.0) < 1e-8);
  REQUIRE(std::abs(cross) < 1e-8);
  REQUIRE(basis.eigenvalue1 >= basis.eigenvalue2);
}
