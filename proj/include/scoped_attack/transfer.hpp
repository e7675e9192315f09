#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "scoped_attack/attack.hpp"
#include "scoped_attack/errors.hpp"
#include "scoped_attack/heatmap.hpp"
#include "scoped_attack/image.hpp"
#include "scoped_attack/models.hpp"
#include "scoped_attack/parallel.hpp"

namespace scoped_attack {

// Opaque prediction oracle. The only way through is query(), which counts
// every call; weights and architecture stay hidden behind the interface.
class BlackBoxTarget {
 public:
  virtual ~BlackBoxTarget() = default;

  Prediction query(const Image& image) {
    queries_.fetch_add(1, std::memory_order_relaxed);
    return predict(image);
  }

  std::uint64_t query_count() const { return queries_.load(std::memory_order_relaxed); }

 private:
  virtual Prediction predict(const Image& image) = 0;

  std::atomic<std::uint64_t> queries_{0};
};

namespace detail {

class LogRegBlackBox final : public BlackBoxTarget {
 public:
  explicit LogRegBlackBox(LogRegModel model) : model_(std::move(model)) {}

 private:
  Prediction predict(const Image& image) override { return logreg_forward(model_, image); }
  LogRegModel model_;
};

class MlpBlackBox final : public BlackBoxTarget {
 public:
  explicit MlpBlackBox(Mlp5Model model) : model_(std::move(model)) {}

 private:
  Prediction predict(const Image& image) override { return mlp_forward(model_, image); }
  Mlp5Model model_;
};

}  // namespace detail

inline std::unique_ptr<BlackBoxTarget> make_black_box(LogRegModel model) {
  return std::make_unique<detail::LogRegBlackBox>(std::move(model));
}

inline std::unique_ptr<BlackBoxTarget> make_black_box(Mlp5Model model) {
  return std::make_unique<detail::MlpBlackBox>(std::move(model));
}

struct TransferConfig {
  int overshoot_steps = 4;                     // extra steps after the source model folds
  std::vector<double> sweep = default_sweep();  // thresholds tried per image
  double alpha = 1.0;
  double step = 0.4;
  int max_steps = 10;
  double naive_min_difference = 0.2;  // scope for the single-shot protocol

  static std::vector<double> default_sweep() {
    std::vector<double> g;
    for (int i = 0; i <= 12; ++i) g.push_back(i * 0.1);
    return g;
  }

  void validate() const {
    if (overshoot_steps < 0) throw std::invalid_argument("overshoot_steps must be >= 0");
    if (sweep.empty()) throw std::invalid_argument("sweep is empty");
    for (std::size_t i = 0; i < sweep.size(); ++i) {
      if (sweep[i] < 0) throw std::invalid_argument("sweep values must be non-negative");
      if (i > 0 && sweep[i] <= sweep[i - 1]) {
        throw std::invalid_argument("sweep values must be strictly increasing");
      }
    }
  }
};

struct TransferOutcome {
  bool success = false;
  Image best_image{};
  double best_min_difference = std::numeric_limits<double>::quiet_NaN();
  int target_queries_used = 0;
  double source_ssim = 0.0;
};

// Single-shot transfer: one white-box attack, one target query. A failed
// source attack is reported as a failed transfer without spending any query.
inline TransferOutcome naive_transfer(const LogRegModel& source_model, BlackBoxTarget& target,
                                      const Image& image, int target_class,
                                      const TransferConfig& config) {
  config.validate();
  AttackConfig attack_cfg;
  attack_cfg.alpha = config.alpha;
  attack_cfg.min_difference = config.naive_min_difference;
  attack_cfg.step = config.step;
  attack_cfg.max_steps = config.max_steps;

  AttackOutcome source_outcome = run_attack(source_model, image, target_class, attack_cfg);

  TransferOutcome out;
  out.best_image = source_outcome.adversarial;
  out.source_ssim = source_outcome.ssim_score;
  if (!source_outcome.success) return out;

  out.best_min_difference = config.naive_min_difference;
  Prediction p = target.query(out.best_image);
  out.target_queries_used = 1;
  out.success = p.predicted_class == target_class;
  return out;
}

// Query-budgeted transfer: for every sweep threshold whose white-box attack
// succeeds, push the image `overshoot_steps` further past the source decision
// boundary and spend exactly one target query on it. The candidate with the
// highest target-side probability of the wanted class wins.
inline TransferOutcome sweep_transfer(const LogRegModel& source_model, BlackBoxTarget& target,
                                      const Image& image, int target_class,
                                      const TransferConfig& config) {
  config.validate();
  const int source_class = logreg_forward(source_model, image).predicted_class;
  const std::array<double, kImagePixels> delta =
      delta_map(source_model, source_class,
                config.alpha > 0 ? std::optional<int>(target_class) : std::nullopt, config.alpha);

  TransferOutcome out;
  double best_score = -1.0;
  int best_predicted = -1;

  for (double md : config.sweep) {
    AttackConfig attack_cfg;
    attack_cfg.alpha = config.alpha;
    attack_cfg.min_difference = md;
    attack_cfg.step = config.step;
    attack_cfg.max_steps = config.max_steps;

    AttackOutcome source_outcome = run_attack(source_model, image, target_class, attack_cfg);
    if (!source_outcome.success) continue;

    Image candidate = source_outcome.adversarial;
    for (int k = 0; k < config.overshoot_steps; ++k) {
      candidate = attack_step(candidate, delta, attack_cfg);
    }

    Prediction p = target.query(candidate);
    ++out.target_queries_used;
    double score = p.probs[target_class];
    if (score > best_score) {
      best_score = score;
      best_predicted = p.predicted_class;
      out.best_image = candidate;
      out.best_min_difference = md;
    }
  }

  if (out.target_queries_used == 0) {
    out.best_image = image;
    out.source_ssim = 1.0;
    return out;  // every source attack failed; no queries spent
  }
  out.success = best_predicted == target_class;
  out.source_ssim = ssim(image, out.best_image);
  return out;
}

enum class TransferMode { naive, sweep };

struct TransferItemResult {
  int source = 0;
  int target = 0;
  int image_index = 0;  // position within the per-class pool
  bool success = false;
  int queries = 0;
  double ssim = 0;
  double min_difference = std::numeric_limits<double>::quiet_NaN();
};

struct TransferReport {
  Heatmap rates;  // per-pair transfer success rate
  std::vector<TransferItemResult> items;
  long images_attempted = 0;
  long images_transferred = 0;
  double mean_queries = 0.0;   // over attempted images
  double mean_ssim = 0.0;      // over transferred images
  int max_queries_per_image = 0;
  bool all_outputs_in_range = true;

  double overall_rate() const {
    return images_attempted > 0 ? static_cast<double>(images_transferred) / images_attempted : 0.0;
  }
};

// Per-(source, target) transfer rates over the usual deterministic image
// selection. Distinct images run in parallel; the target's query counter is
// atomic, so accounting stays exact.
inline TransferReport transfer_matrix(const LogRegModel& source_model, BlackBoxTarget& target,
                                      const Dataset& test_data, int images_per_pair,
                                      const TransferConfig& config, TransferMode mode,
                                      int jobs = 1) {
  if (images_per_pair < 1) throw std::invalid_argument("images_per_pair must be >= 1");
  config.validate();

  std::array<std::vector<const Image*>, kNumClasses> pools;
  for (int s = 0; s < kNumClasses; ++s) {
    pools[s] = select_eligible(source_model, test_data, s, images_per_pair);
  }

  struct WorkItem {
    int source;
    int target;
    int index;
    const Image* image;
  };
  std::vector<WorkItem> items;
  for (int s = 0; s < kNumClasses; ++s) {
    for (int t = 0; t < kNumClasses; ++t) {
      if (s == t) continue;
      for (std::size_t i = 0; i < pools[s].size(); ++i) {
        items.push_back({s, t, static_cast<int>(i), pools[s][i]});
      }
    }
  }

  std::vector<TransferOutcome> outcomes(items.size());
  parallel_for(items.size(), jobs, [&](std::size_t i) {
    const WorkItem& item = items[i];
    outcomes[i] = mode == TransferMode::naive
                      ? naive_transfer(source_model, target, *item.image, item.target, config)
                      : sweep_transfer(source_model, target, *item.image, item.target, config);
  });

  TransferReport report;
  report.rates.statistic = Heatmap::Stat::transfer_rate;
  report.rates.n_per_cell = images_per_pair;

  std::array<std::array<long, kNumClasses>, kNumClasses> attempted{};
  std::array<std::array<long, kNumClasses>, kNumClasses> transferred{};
  long total_queries = 0;
  double ssim_sum = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const WorkItem& item = items[i];
    const TransferOutcome& out = outcomes[i];
    report.all_outputs_in_range = report.all_outputs_in_range && image_in_range(out.best_image);
    report.items.push_back({item.source, item.target, item.index, out.success,
                            out.target_queries_used, out.source_ssim, out.best_min_difference});
    ++attempted[item.source][item.target];
    if (out.success) {
      ++transferred[item.source][item.target];
      ssim_sum += out.source_ssim;
      ++report.images_transferred;
    }
    ++report.images_attempted;
    total_queries += out.target_queries_used;
    report.max_queries_per_image = std::max(report.max_queries_per_image, out.target_queries_used);
  }
  for (int s = 0; s < kNumClasses; ++s) {
    for (int t = 0; t < kNumClasses; ++t) {
      if (s == t || attempted[s][t] == 0) continue;
      report.rates.cell(s, t) = static_cast<double>(transferred[s][t]) / attempted[s][t];
    }
  }
  report.mean_queries = report.images_attempted > 0
                            ? static_cast<double>(total_queries) / report.images_attempted
                            : 0.0;
  report.mean_ssim = report.images_transferred > 0 ? ssim_sum / report.images_transferred : 0.0;
  return report;
}

}  // namespace scoped_attack
