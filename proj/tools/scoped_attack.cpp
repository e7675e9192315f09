// Command-line front end: train models, run scoped attacks, regenerate the
// aggregate reports, run black-box transfer, build importance maps, and
// preprocess photos. Every run writes a manifest next to its artifacts.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scoped_attack/analysis.hpp"
#include "scoped_attack/attack.hpp"
#include "scoped_attack/csv.hpp"
#include "scoped_attack/errors.hpp"
#include "scoped_attack/idx.hpp"
#include "scoped_attack/manifest.hpp"
#include "scoped_attack/model_io.hpp"
#include "scoped_attack/photo.hpp"
#include "scoped_attack/pnm.hpp"
#include "scoped_attack/train.hpp"
#include "scoped_attack/transfer.hpp"

namespace sa = scoped_attack;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitMissingInput = 2;
constexpr int kExitUsage = 64;
constexpr int kExitDomain = 65;

// Thrown for problems that map to "missing input" (exit 2).
struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path resolve_data_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("SCOPED_ATTACK_DATA_DIR")) {
    if (*env) return env;
  }
  throw MissingInput("no data directory: pass --data-dir or set SCOPED_ATTACK_DATA_DIR");
}

void require_exists(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw MissingInput(what + " not found: " + p.string());
}

fs::path mnist_member(const fs::path& dir, const std::string& stem) {
  for (const char* suffix : {"", ".gz"}) {
    fs::path p = dir / (stem + suffix);
    if (fs::exists(p)) return p;
  }
  throw MissingInput("MNIST file not found: " + (dir / stem).string() + "[.gz]");
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

void stamp_mnist_inputs(sa::RunManifest& manifest, const fs::path& data_dir) {
  for (const char* stem : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                           "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"}) {
    manifest.inputs.push_back(sa::stamp_file(mnist_member(data_dir, stem)));
  }
}

std::string join_doubles(const std::vector<double>& vs) {
  std::string out;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (i) out += ";";
    out += sa::format_double(vs[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string arch;
  std::string data_dir;
  std::string out;
  int epochs = -1;  // -1: architecture default
  int batch_size = 128;
  double learning_rate = 1e-3;
  double dropout = 0.3;
  std::string optimizer = "adam";
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& args) {
  Timer timer;
  fs::path data_dir = resolve_data_dir(args.data_dir);
  fs::path out_dir = args.out;
  fs::create_directories(out_dir);

  sa::TrainConfig cfg =
      args.arch == "mlp5" ? sa::default_mlp_config() : sa::default_logreg_config();
  if (args.epochs > 0) cfg.epochs = args.epochs;
  cfg.batch_size = args.batch_size;
  cfg.learning_rate = args.learning_rate;
  cfg.dropout_rate = args.dropout;
  cfg.optimizer = args.optimizer == "sgd" ? sa::TrainConfig::Optimizer::sgd
                                          : sa::TrainConfig::Optimizer::adam;
  cfg.rng_seed = args.seed;

  sa::Dataset train = sa::load_mnist(data_dir, sa::Split::train);
  sa::Dataset test = sa::load_mnist(data_dir, sa::Split::test);

  fs::path model_path = out_dir / "model.bin";
  double train_acc = 0, test_acc = 0;
  if (args.arch == "logreg") {
    sa::LogRegModel model = sa::train_logreg(train, cfg);
    sa::save_model(model, model_path);
    train_acc = sa::evaluate_accuracy(model, train);
    test_acc = sa::evaluate_accuracy(model, test);
  } else {
    sa::Mlp5Model model = sa::train_mlp(train, cfg);
    sa::save_model(model, model_path);
    train_acc = sa::evaluate_accuracy(model, train);
    test_acc = sa::evaluate_accuracy(model, test);
  }

  sa::RunManifest manifest;
  manifest.subcommand = "train";
  manifest.seed = args.seed;
  manifest.parameters = {{"arch", args.arch},
                         {"epochs", std::to_string(cfg.epochs)},
                         {"batch_size", std::to_string(cfg.batch_size)},
                         {"learning_rate", sa::format_double(cfg.learning_rate)},
                         {"optimizer", args.optimizer},
                         {"dropout", sa::format_double(cfg.dropout_rate)},
                         {"seed", std::to_string(args.seed)}};
  stamp_mnist_inputs(manifest, data_dir);
  manifest.outputs = {model_path.string()};
  manifest.wall_seconds = timer.seconds();
  sa::write_manifest(manifest, out_dir / "manifest.json");

  std::cout << "arch=" << args.arch << " epochs=" << cfg.epochs
            << " train_accuracy=" << sa::format_double(train_acc)
            << " test_accuracy=" << sa::format_double(test_acc) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// attack
// ---------------------------------------------------------------------------

struct AttackArgs {
  std::string model;
  std::string data_dir;
  std::string image_file;
  int image_index = -1;
  int target = -1;  // -1: non-targeted
  double alpha = 0.5;
  double min_difference = 0.0;
  double step = 0.05;
  int max_steps = 100;
  std::string out;
};

sa::Image image_from_pgm(const fs::path& path) {
  sa::Photo photo = sa::read_pnm(path);
  if (photo.channels != 1 || photo.width != sa::kImageCols || photo.height != sa::kImageRows) {
    throw sa::FormatError("expected a 28x28 grayscale PGM: " + path.string());
  }
  sa::Image img;
  for (int i = 0; i < sa::kImagePixels; ++i) img[i] = photo.data[i] / 255.0;
  return img;
}

int run_attack_cmd(const AttackArgs& args) {
  Timer timer;
  require_exists(args.model, "model file");
  fs::path out_dir = args.out;
  fs::create_directories(out_dir);

  sa::LogRegModel model = sa::load_logreg(args.model);

  sa::Image source;
  std::string image_desc;
  if (!args.image_file.empty()) {
    require_exists(args.image_file, "image file");
    source = image_from_pgm(args.image_file);
    image_desc = args.image_file;
  } else if (args.image_index >= 0) {
    fs::path data_dir = resolve_data_dir(args.data_dir);
    sa::Dataset test = sa::load_mnist(data_dir, sa::Split::test);
    if (static_cast<std::size_t>(args.image_index) >= test.size()) {
      throw std::invalid_argument("--image-index out of range");
    }
    source = test.items[args.image_index].image;
    image_desc = "test[" + std::to_string(args.image_index) + "]";
  } else {
    throw CLI::ValidationError("attack", "need --image-index or --image-file");
  }

  sa::AttackConfig cfg;
  cfg.alpha = args.alpha;
  cfg.min_difference = args.min_difference;
  cfg.step = args.step;
  cfg.max_steps = args.max_steps;
  cfg.validate();

  std::optional<int> target;
  if (args.target >= 0) target = args.target;
  if (cfg.alpha > 0 && !target.has_value()) {
    throw CLI::ValidationError("attack", "--alpha > 0 requires --target");
  }

  int source_class = sa::logreg_forward(model, source).predicted_class;
  sa::AttackOutcome outcome = sa::run_attack(model, source, target, cfg);

  sa::write_pgm(out_dir / "adversarial.pgm", outcome.adversarial);
  sa::Image diff;
  for (int i = 0; i < sa::kImagePixels; ++i) {
    diff[i] = std::clamp(0.5 + (outcome.adversarial[i] - source[i]) / 2.0, 0.0, 1.0);
  }
  sa::write_pgm(out_dir / "difference.pgm", diff);
  for (std::size_t t = 0; t < outcome.trajectory.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "trajectory_%03zu.pgm", t);
    sa::write_pgm(out_dir / name, outcome.trajectory[t]);
  }

  sa::CsvWriter csv(out_dir / "outcome.csv",
                    {"source_label", "target", "alpha", "min_difference", "step", "steps_used",
                     "success", "ssim", "modified_pixels"});
  csv.row({std::to_string(source_class), target ? std::to_string(*target) : "",
           sa::format_double(cfg.alpha), sa::format_double(cfg.min_difference),
           sa::format_double(cfg.step), std::to_string(outcome.steps_used),
           outcome.success ? "1" : "0", sa::format_double(outcome.ssim_score),
           std::to_string(sa::count_modified_pixels(source, outcome.adversarial))});

  sa::RunManifest manifest;
  manifest.subcommand = "attack";
  manifest.parameters = {{"model", args.model},
                         {"image", image_desc},
                         {"target", target ? std::to_string(*target) : "none"},
                         {"alpha", sa::format_double(cfg.alpha)},
                         {"min_difference", sa::format_double(cfg.min_difference)},
                         {"step", sa::format_double(cfg.step)},
                         {"max_steps", std::to_string(cfg.max_steps)}};
  manifest.inputs.push_back(sa::stamp_file(args.model));
  manifest.outputs = {(out_dir / "adversarial.pgm").string(), (out_dir / "difference.pgm").string(),
                      (out_dir / "outcome.csv").string()};
  manifest.wall_seconds = timer.seconds();
  sa::write_manifest(manifest, out_dir / "manifest.json");

  std::cout << "source_class=" << source_class
            << " final_class=" << outcome.final_class
            << " success=" << (outcome.success ? 1 : 0)
            << " steps_used=" << outcome.steps_used
            << " ssim=" << sa::format_double(outcome.ssim_score)
            << " modified_pixels=" << sa::count_modified_pixels(source, outcome.adversarial)
            << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string model;
  std::string data_dir;
  std::string mode;
  std::string out;
  int n_per_pair = 50;
  int n_per_class = 100;
  int n_images = 20;  // scope-curve images per source class
  int jobs = 1;
  double alpha = -1;  // -1: mode default
  double step = 0.05;
  int max_steps = 100;
  double min_difference = -1;  // -1: mode default
  std::vector<double> grid;
};

std::vector<double> default_report_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(i * 0.1);
  return g;
}

int run_report(const ReportArgs& args) {
  Timer timer;
  require_exists(args.model, "model file");
  fs::path data_dir = resolve_data_dir(args.data_dir);
  fs::path out_dir = args.out;
  fs::create_directories(out_dir);

  sa::LogRegModel model = sa::load_logreg(args.model);
  sa::Dataset test = sa::load_mnist(data_dir, sa::Split::test);

  std::vector<double> grid = args.grid.empty() ? default_report_grid() : args.grid;

  sa::RunManifest manifest;
  manifest.subcommand = "report";
  manifest.parameters = {{"model", args.model},
                         {"mode", args.mode},
                         {"n_per_pair", std::to_string(args.n_per_pair)},
                         {"jobs", std::to_string(args.jobs)},
                         {"step", sa::format_double(args.step)},
                         {"max_steps", std::to_string(args.max_steps)},
                         {"grid", join_doubles(grid)}};
  manifest.inputs.push_back(sa::stamp_file(args.model));
  stamp_mnist_inputs(manifest, data_dir);

  if (args.mode == "heatmap-fixed" || args.mode == "heatmap-auto") {
    sa::HeatmapParams params;
    params.mode = args.mode == "heatmap-fixed" ? sa::ScopeMode::fixed : sa::ScopeMode::automatic;
    params.min_difference = args.min_difference >= 0 ? args.min_difference : 0.5;
    params.grid = grid;
    params.alpha = args.alpha >= 0 ? args.alpha : 0.5;
    params.step = args.step;
    params.max_steps = args.max_steps;
    params.n_per_pair = args.n_per_pair;
    params.jobs = args.jobs;
    sa::HeatmapReport report = sa::ssim_heatmap(model, test, params);

    std::string stem = args.mode == "heatmap-fixed" ? "fig6a_heatmap" : "fig6b_heatmap";
    sa::write_heatmap_csv(report.ssim_cells, out_dir / (stem + ".csv"));
    sa::write_heatmap_csv(report.success_cells, out_dir / (stem + "_success.csv"));
    manifest.outputs = {(out_dir / (stem + ".csv")).string(),
                        (out_dir / (stem + "_success.csv")).string()};
    manifest.parameters["alpha"] = sa::format_double(params.alpha);
    manifest.parameters["min_difference"] = sa::format_double(params.min_difference);
    std::cout << "mode=" << args.mode << " mean_ssim=" << sa::format_double(report.mean_ssim)
              << " cell_mean_ssim=" << sa::format_double(report.ssim_cells.mean_defined())
              << " success_rate=" << sa::format_double(report.success_rate()) << "\n";
  } else if (args.mode == "nontargeted") {
    double md = args.min_difference >= 0 ? args.min_difference : 0.0;
    sa::NontargetedReport report = sa::nontargeted_stats(model, test, md, args.step,
                                                         args.max_steps, args.n_per_class, args.jobs);
    sa::CsvWriter csv(out_dir / "fig7_nontargeted_stats.csv",
                      {"class", "n", "mean", "min", "q1", "median", "q3", "max"});
    for (const sa::ClassSummary& s : report.per_class) {
      csv.row({std::to_string(s.cls), std::to_string(s.n), sa::format_double(s.mean),
               sa::format_double(s.min), sa::format_double(s.q1), sa::format_double(s.median),
               sa::format_double(s.q3), sa::format_double(s.max)});
    }
    manifest.outputs = {(out_dir / "fig7_nontargeted_stats.csv").string()};
    manifest.parameters["min_difference"] = sa::format_double(md);
    manifest.parameters["n_per_class"] = std::to_string(args.n_per_class);
    std::cout << "mode=nontargeted mean_ssim=" << sa::format_double(report.grand_mean)
              << " success_rate="
              << sa::format_double(report.attacks_attempted > 0
                                       ? static_cast<double>(report.attacks_succeeded) /
                                             report.attacks_attempted
                                       : 0.0)
              << "\n";
  } else if (args.mode == "scope-curve") {
    double alpha = args.alpha >= 0 ? args.alpha : 1.0;
    manifest.parameters["alpha"] = sa::format_double(alpha);
    manifest.parameters["n_images"] = std::to_string(args.n_images);
    for (int cls = 0; cls < sa::kNumClasses; ++cls) {
      sa::ScopeCurve curve = sa::scope_curve(model, test, cls, grid, alpha, args.step,
                                             args.max_steps, args.n_images, args.jobs);
      fs::path path = out_dir / ("fig8_scope_curve_class" + std::to_string(cls) + ".csv");
      sa::CsvWriter csv(path, {"min_difference", "mean_ssim", "success_rate", "n_success"});
      for (const sa::ScopeCurvePoint& p : curve.points) {
        csv.row({sa::format_double(p.min_difference), sa::format_double(p.mean_ssim),
                 sa::format_double(p.success_rate), std::to_string(p.n_success)});
      }
      manifest.outputs.push_back(path.string());
      std::cout << "class=" << cls;
      for (const sa::ScopeCurvePoint& p : curve.points) {
        std::cout << " ssim@" << sa::format_double(p.min_difference) << "="
                  << sa::format_double(p.mean_ssim);
      }
      std::cout << "\n";
    }
  } else if (args.mode == "baseline-ifgm") {
    sa::HeatmapReport report =
        sa::ifgm_heatmap(model, test, args.step, args.max_steps, args.n_per_pair, args.jobs);
    sa::write_heatmap_csv(report.ssim_cells, out_dir / "baseline_ifgm_heatmap.csv");
    sa::write_heatmap_csv(report.success_cells, out_dir / "baseline_ifgm_success.csv");
    manifest.outputs = {(out_dir / "baseline_ifgm_heatmap.csv").string(),
                        (out_dir / "baseline_ifgm_success.csv").string()};
    std::cout << "mode=baseline-ifgm mean_ssim=" << sa::format_double(report.mean_ssim)
              << " success_rate=" << sa::format_double(report.success_rate()) << "\n";
  } else {
    throw CLI::ValidationError("report", "unknown --mode " + args.mode);
  }

  manifest.wall_seconds = timer.seconds();
  sa::write_manifest(manifest, out_dir / "manifest.json");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// transfer
// ---------------------------------------------------------------------------

struct TransferArgs {
  std::string source_model;
  std::string target_model;
  std::string data_dir;
  std::string mode = "sweep";
  std::string out;
  int n_per_pair = 20;
  int overshoot = 4;
  int jobs = 1;
  double alpha = 1.0;
  double step = 0.4;
  int max_steps = 10;
  double naive_min_difference = 0.2;
  std::vector<double> sweep;
};

int run_transfer(const TransferArgs& args) {
  Timer timer;
  require_exists(args.source_model, "source model file");
  require_exists(args.target_model, "target model file");
  fs::path data_dir = resolve_data_dir(args.data_dir);
  fs::path out_dir = args.out;
  fs::create_directories(out_dir);

  sa::LogRegModel source = sa::load_logreg(args.source_model);
  sa::AnyModel target_any = sa::load_model(args.target_model);
  std::unique_ptr<sa::BlackBoxTarget> target =
      std::holds_alternative<sa::Mlp5Model>(target_any)
          ? sa::make_black_box(std::get<sa::Mlp5Model>(std::move(target_any)))
          : sa::make_black_box(std::get<sa::LogRegModel>(std::move(target_any)));

  sa::Dataset test = sa::load_mnist(data_dir, sa::Split::test);

  sa::TransferConfig cfg;
  cfg.overshoot_steps = args.overshoot;
  if (!args.sweep.empty()) cfg.sweep = args.sweep;
  cfg.alpha = args.alpha;
  cfg.step = args.step;
  cfg.max_steps = args.max_steps;
  cfg.naive_min_difference = args.naive_min_difference;

  sa::TransferMode mode = args.mode == "naive" ? sa::TransferMode::naive : sa::TransferMode::sweep;
  sa::TransferReport report =
      sa::transfer_matrix(source, *target, test, args.n_per_pair, cfg, mode, args.jobs);

  sa::write_heatmap_csv(report.rates, out_dir / "transfer_matrix.csv");
  sa::CsvWriter csv(out_dir / "transfer_per_image.csv",
                    {"source", "target", "image_index", "success", "queries", "ssim",
                     "min_difference"});
  for (const sa::TransferItemResult& item : report.items) {
    csv.row({std::to_string(item.source), std::to_string(item.target),
             std::to_string(item.image_index), item.success ? "1" : "0",
             std::to_string(item.queries), sa::format_double(item.ssim),
             sa::format_double(item.min_difference)});
  }

  sa::RunManifest manifest;
  manifest.subcommand = "transfer";
  manifest.parameters = {{"source_model", args.source_model},
                         {"target_model", args.target_model},
                         {"mode", args.mode},
                         {"n_per_pair", std::to_string(args.n_per_pair)},
                         {"overshoot", std::to_string(cfg.overshoot_steps)},
                         {"alpha", sa::format_double(cfg.alpha)},
                         {"step", sa::format_double(cfg.step)},
                         {"max_steps", std::to_string(cfg.max_steps)},
                         {"naive_min_difference", sa::format_double(cfg.naive_min_difference)},
                         {"sweep", join_doubles(cfg.sweep)},
                         {"jobs", std::to_string(args.jobs)}};
  manifest.inputs.push_back(sa::stamp_file(args.source_model));
  manifest.inputs.push_back(sa::stamp_file(args.target_model));
  stamp_mnist_inputs(manifest, data_dir);
  manifest.outputs = {(out_dir / "transfer_matrix.csv").string(),
                      (out_dir / "transfer_per_image.csv").string()};
  manifest.wall_seconds = timer.seconds();
  sa::write_manifest(manifest, out_dir / "manifest.json");

  std::cout << "mode=" << args.mode << " transfer_rate=" << sa::format_double(report.overall_rate())
            << " mean_queries=" << sa::format_double(report.mean_queries)
            << " max_queries=" << report.max_queries_per_image
            << " mean_ssim=" << sa::format_double(report.mean_ssim)
            << " target_queries_total=" << target->query_count() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// importance / preprocess
// ---------------------------------------------------------------------------

struct ImportanceArgs {
  std::string model;
  int source = 0;
  int target = 0;
  double min_difference = 0.0;
  bool positive_only = false;
  std::string out;
};

int run_importance(const ImportanceArgs& args) {
  Timer timer;
  require_exists(args.model, "model file");
  fs::path out_dir = args.out;
  fs::create_directories(out_dir);

  sa::LogRegModel model = sa::load_logreg(args.model);
  sa::ImportanceMap map =
      sa::importance_map(model, args.source, args.target, args.min_difference, args.positive_only);

  sa::write_pgm(out_dir / "importance_map.pgm", sa::render_importance_map(map));
  sa::CsvWriter csv(out_dir / "importance_map.csv", {"row", "col", "mask"});
  for (int r = 0; r < sa::kImageRows; ++r) {
    for (int c = 0; c < sa::kImageCols; ++c) {
      csv.row({std::to_string(r), std::to_string(c),
               std::to_string(static_cast<int>(map.mask[r * sa::kImageCols + c]))});
    }
  }

  sa::RunManifest manifest;
  manifest.subcommand = "importance";
  manifest.parameters = {{"model", args.model},
                         {"source", std::to_string(args.source)},
                         {"target", std::to_string(args.target)},
                         {"min_difference", sa::format_double(args.min_difference)},
                         {"positive_only", args.positive_only ? "true" : "false"}};
  manifest.inputs.push_back(sa::stamp_file(args.model));
  manifest.outputs = {(out_dir / "importance_map.pgm").string(),
                      (out_dir / "importance_map.csv").string()};
  manifest.wall_seconds = timer.seconds();
  sa::write_manifest(manifest, out_dir / "manifest.json");

  std::cout << "density=" << sa::format_double(map.density())
            << " nonzero=" << map.nonzero_count() << "\n";
  return kExitOk;
}

struct PreprocessArgs {
  std::string photo;
  std::string model;
  std::string out;
};

int run_preprocess(const PreprocessArgs& args) {
  Timer timer;
  require_exists(args.photo, "photo file");
  fs::path out_dir = args.out;
  fs::create_directories(out_dir);

  sa::Photo photo = sa::read_pnm(args.photo);
  sa::Image image = sa::preprocess_photo(photo);
  sa::write_pgm(out_dir / "preprocessed.pgm", image);

  sa::RunManifest manifest;
  manifest.subcommand = "preprocess";
  manifest.parameters = {{"photo", args.photo}};
  manifest.inputs.push_back(sa::stamp_file(args.photo));
  manifest.outputs = {(out_dir / "preprocessed.pgm").string()};

  if (!args.model.empty()) {
    require_exists(args.model, "model file");
    sa::AnyModel any = sa::load_model(args.model);
    sa::Prediction p = std::holds_alternative<sa::LogRegModel>(any)
                           ? sa::logreg_forward(std::get<sa::LogRegModel>(any), image)
                           : sa::mlp_forward(std::get<sa::Mlp5Model>(any), image);
    manifest.parameters["model"] = args.model;
    std::cout << "predicted_class=" << p.predicted_class
              << " probability=" << sa::format_double(p.probs[p.predicted_class]) << "\n";
  } else {
    std::cout << "preprocessed=" << (out_dir / "preprocessed.pgm").string() << "\n";
  }

  manifest.wall_seconds = timer.seconds();
  sa::write_manifest(manifest, out_dir / "manifest.json");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MNIST scoped adversarial attacks: training, attacks, reports, transfer"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train a classifier on MNIST");
  train->add_option("--arch", train_args.arch, "Architecture")
      ->required()
      ->check(CLI::IsMember({"logreg", "mlp5"}));
  train->add_option("--data-dir", train_args.data_dir, "MNIST directory");
  train->add_option("--epochs", train_args.epochs, "Training epochs (default: 50 logreg, 100 mlp5)");
  train->add_option("--batch-size", train_args.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  train->add_option("--lr", train_args.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
  train->add_option("--dropout", train_args.dropout, "Dropout rate (mlp5)");
  train->add_option("--optimizer", train_args.optimizer, "Optimizer")
      ->check(CLI::IsMember({"adam", "sgd"}));
  train->add_option("--seed", train_args.seed, "RNG seed");
  train->add_option("--out", train_args.out, "Output directory")->required();

  AttackArgs attack_args;
  CLI::App* attack = app.add_subcommand("attack", "Run one scoped attack");
  attack->add_option("--model", attack_args.model, "Trained logreg model file")->required();
  attack->add_option("--data-dir", attack_args.data_dir, "MNIST directory");
  attack->add_option("--image-index", attack_args.image_index, "Test-set image index");
  attack->add_option("--image-file", attack_args.image_file, "28x28 PGM image");
  attack->add_option("--target", attack_args.target, "Target class (omit for non-targeted)")
      ->check(CLI::Range(0, 9));
  attack->add_option("--alpha", attack_args.alpha, "Attack mode: 0, 0.5 or 1")
      ->check(CLI::IsMember({0.0, 0.5, 1.0}));
  attack->add_option("--min-difference", attack_args.min_difference, "Scope threshold")
      ->check(CLI::Range(0.0, 2.0));
  attack->add_option("--step", attack_args.step, "Step size")->check(CLI::PositiveNumber);
  attack->add_option("--max-steps", attack_args.max_steps, "Step limit")->check(CLI::PositiveNumber);
  attack->add_option("--out", attack_args.out, "Output directory")->required();

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand("report", "Aggregate attack statistics");
  report->add_option("--model", report_args.model, "Trained logreg model file")->required();
  report->add_option("--data-dir", report_args.data_dir, "MNIST directory");
  report->add_option("--mode", report_args.mode, "Report kind")
      ->required()
      ->check(CLI::IsMember(
          {"heatmap-fixed", "heatmap-auto", "nontargeted", "scope-curve", "baseline-ifgm"}));
  report->add_option("--n-per-pair", report_args.n_per_pair, "Images per class pair")
      ->check(CLI::PositiveNumber);
  report->add_option("--n-per-class", report_args.n_per_class, "Images per class (nontargeted)")
      ->check(CLI::PositiveNumber);
  report->add_option("--n-images", report_args.n_images, "Images per class (scope-curve)")
      ->check(CLI::PositiveNumber);
  report->add_option("--jobs", report_args.jobs, "Worker threads")->check(CLI::PositiveNumber);
  report->add_option("--alpha", report_args.alpha, "Attack mode (default: 0.5; scope-curve: 1)");
  report->add_option("--step", report_args.step, "Step size")->check(CLI::PositiveNumber);
  report->add_option("--max-steps", report_args.max_steps, "Step limit")->check(CLI::PositiveNumber);
  report->add_option("--min-difference", report_args.min_difference,
                     "Scope threshold (heatmap-fixed / nontargeted)");
  report->add_option("--grid", report_args.grid, "Scope grid (heatmap-auto / scope-curve)");
  report->add_option("--out", report_args.out, "Output directory")->required();

  TransferArgs transfer_args;
  CLI::App* transfer = app.add_subcommand("transfer", "Black-box transfer evaluation");
  transfer->add_option("--source-model", transfer_args.source_model, "White-box logreg model")
      ->required();
  transfer->add_option("--target-model", transfer_args.target_model, "Opaque target model")
      ->required();
  transfer->add_option("--data-dir", transfer_args.data_dir, "MNIST directory");
  transfer->add_option("--mode", transfer_args.mode, "naive or sweep")
      ->check(CLI::IsMember({"naive", "sweep"}));
  transfer->add_option("--n-per-pair", transfer_args.n_per_pair, "Images per class pair")
      ->check(CLI::PositiveNumber);
  transfer->add_option("--overshoot", transfer_args.overshoot, "Extra steps after source success")
      ->check(CLI::NonNegativeNumber);
  transfer->add_option("--jobs", transfer_args.jobs, "Worker threads")->check(CLI::PositiveNumber);
  transfer->add_option("--alpha", transfer_args.alpha, "Attack mode")
      ->check(CLI::IsMember({0.0, 0.5, 1.0}));
  transfer->add_option("--step", transfer_args.step, "Step size")->check(CLI::PositiveNumber);
  transfer->add_option("--max-steps", transfer_args.max_steps, "Step limit")
      ->check(CLI::PositiveNumber);
  transfer->add_option("--naive-min-difference", transfer_args.naive_min_difference,
                       "Scope for naive mode")
      ->check(CLI::Range(0.0, 2.0));
  transfer->add_option("--sweep", transfer_args.sweep, "Sweep thresholds");
  transfer->add_option("--out", transfer_args.out, "Output directory")->required();

  ImportanceArgs importance_args;
  CLI::App* importance = app.add_subcommand("importance", "Binary importance map");
  importance->add_option("--model", importance_args.model, "Trained logreg model file")->required();
  importance->add_option("--source", importance_args.source, "Source class")
      ->required()
      ->check(CLI::Range(0, 9));
  importance->add_option("--target", importance_args.target, "Target class")
      ->required()
      ->check(CLI::Range(0, 9));
  importance->add_option("--min-difference", importance_args.min_difference, "Scope threshold")
      ->check(CLI::Range(0.0, 2.0));
  importance->add_flag("--positive-only", importance_args.positive_only,
                       "Keep only brightness-increase pixels");
  importance->add_option("--out", importance_args.out, "Output directory")->required();

  PreprocessArgs preprocess_args;
  CLI::App* preprocess = app.add_subcommand("preprocess", "Photo to 28x28 network input");
  preprocess->add_option("--photo", preprocess_args.photo, "PGM/PPM photo")->required();
  preprocess->add_option("--model", preprocess_args.model, "Optional model for a prediction");
  preprocess->add_option("--out", preprocess_args.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
    if (train->parsed()) return run_train(train_args);
    if (attack->parsed()) return run_attack_cmd(attack_args);
    if (report->parsed()) return run_report(report_args);
    if (transfer->parsed()) return run_transfer(transfer_args);
    if (importance->parsed()) return run_importance(importance_args);
    if (preprocess->parsed()) return run_preprocess(preprocess_args);
    return kExitUsage;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const MissingInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  }
}
