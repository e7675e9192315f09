#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "scoped_attack/attack.hpp"
#include "scoped_attack/errors.hpp"
#include "scoped_attack/heatmap.hpp"
#include "scoped_attack/image.hpp"
#include "scoped_attack/metrics.hpp"
#include "scoped_attack/models.hpp"
#include "scoped_attack/parallel.hpp"
#include "scoped_attack/rng.hpp"

namespace scoped_attack {

// ---------------------------------------------------------------------------
// Weight maps
// ---------------------------------------------------------------------------

// Each weight column min-max rescaled into [0, 1] for rendering. A constant
// column (nothing to rescale) renders flat gray.
inline std::array<Image, kNumClasses> class_weight_maps(const LogRegModel& model) {
  std::array<Image, kNumClasses> maps;
  for (int k = 0; k < kNumClasses; ++k) {
    double lo = model.weight(0, k), hi = model.weight(0, k);
    for (int i = 1; i < kImagePixels; ++i) {
      lo = std::min(lo, model.weight(i, k));
      hi = std::max(hi, model.weight(i, k));
    }
    for (int i = 0; i < kImagePixels; ++i) {
      maps[k][i] = hi > lo ? (model.weight(i, k) - lo) / (hi - lo) : 0.5;
    }
  }
  return maps;
}

struct SignedMap {
  std::array<double, kImagePixels> values{};
};

// W[:, class_a] - W[:, class_b], antisymmetric in its arguments.
inline SignedMap weight_difference_map(const LogRegModel& model, int class_a, int class_b) {
  if (class_a == class_b) throw DegenerateAttack("weight difference of a class with itself");
  SignedMap map;
  for (int i = 0; i < kImagePixels; ++i) {
    map.values[i] = model.weight(i, class_a) - model.weight(i, class_b);
  }
  return map;
}

// Positive and negative parts as two images, both scaled by the same
// max-magnitude so the layers stay comparable.
inline std::pair<Image, Image> render_signed_map(const SignedMap& map) {
  double peak = 0;
  for (double v : map.values) peak = std::max(peak, std::abs(v));
  Image pos, neg;
  if (peak > 0) {
    for (int i = 0; i < kImagePixels; ++i) {
      pos[i] = map.values[i] > 0 ? map.values[i] / peak : 0.0;
      neg[i] = map.values[i] < 0 ? -map.values[i] / peak : 0.0;
    }
  }
  return {pos, neg};
}

// ---------------------------------------------------------------------------
// Aggregate attack statistics
// ---------------------------------------------------------------------------

enum class ScopeMode { fixed, automatic };

struct HeatmapParams {
  ScopeMode mode = ScopeMode::fixed;
  double min_difference = 0.5;          // fixed mode
  std::vector<double> grid = default_grid();  // automatic mode
  double alpha = 0.5;
  double step = 0.05;
  int max_steps = 100;
  int n_per_pair = 50;
  int jobs = 1;

  static std::vector<double> default_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 10; ++i) g.push_back(i * 0.1);
    return g;
  }
};

struct HeatmapReport {
  Heatmap ssim_cells;     // mean SSIM over successful attacks
  Heatmap success_cells;  // success rate
  long attacks_attempted = 0;
  long attacks_succeeded = 0;
  double mean_ssim = 0.0;  // over all successful attacks
  bool all_outputs_in_range = true;

  double success_rate() const {
    return attacks_attempted > 0 ? static_cast<double>(attacks_succeeded) / attacks_attempted : 0.0;
  }
};

namespace detail {

struct PairItem {
  int source;
  int target;
  const Image* image;
};

inline std::vector<PairItem> pair_work_items(const LogRegModel& model, const Dataset& test_data,
                                             int n_per_pair) {
  std::array<std::vector<const Image*>, kNumClasses> pools;
  for (int s = 0; s < kNumClasses; ++s) pools[s] = select_eligible(model, test_data, s, n_per_pair);
  std::vector<PairItem> items;
  for (int s = 0; s < kNumClasses; ++s) {
    for (int t = 0; t < kNumClasses; ++t) {
      if (s == t) continue;
      for (const Image* img : pools[s]) items.push_back({s, t, img});
    }
  }
  return items;
}

struct CellAccumulator {
  std::array<std::array<long, kNumClasses>, kNumClasses> attempted{};
  std::array<std::array<long, kNumClasses>, kNumClasses> succeeded{};
  std::array<std::array<double, kNumClasses>, kNumClasses> ssim_sum{};

  void add(int s, int t, bool success, double ssim_value) {
    ++attempted[s][t];
    if (success) {
      ++succeeded[s][t];
      ssim_sum[s][t] += ssim_value;
    }
  }

  HeatmapReport finish(int n_per_pair) const {
    HeatmapReport report;
    report.ssim_cells.statistic = Heatmap::Stat::mean_ssim;
    report.ssim_cells.n_per_cell = n_per_pair;
    report.success_cells.statistic = Heatmap::Stat::success_rate;
    report.success_cells.n_per_cell = n_per_pair;
    double total_ssim = 0;
    for (int s = 0; s < kNumClasses; ++s) {
      for (int t = 0; t < kNumClasses; ++t) {
        if (s == t || attempted[s][t] == 0) continue;
        report.attacks_attempted += attempted[s][t];
        report.attacks_succeeded += succeeded[s][t];
        total_ssim += ssim_sum[s][t];
        report.success_cells.cell(s, t) =
            static_cast<double>(succeeded[s][t]) / attempted[s][t];
        if (succeeded[s][t] > 0) {
          report.ssim_cells.cell(s, t) = ssim_sum[s][t] / succeeded[s][t];
        }
      }
    }
    report.mean_ssim = report.attacks_succeeded > 0
                           ? total_ssim / static_cast<double>(report.attacks_succeeded)
                           : std::numeric_limits<double>::quiet_NaN();
    return report;
  }
};

}  // namespace detail

// Targeted attack aggregates for every ordered class pair, either at a fixed
// scope threshold or with the automatic per-image threshold selection.
inline HeatmapReport ssim_heatmap(const LogRegModel& model, const Dataset& test_data,
                                  const HeatmapParams& params) {
  if (params.n_per_pair < 1) throw std::invalid_argument("n_per_pair must be >= 1");
  std::vector<detail::PairItem> items = detail::pair_work_items(model, test_data, params.n_per_pair);

  struct Result {
    bool success;
    double ssim;
    bool in_range;
  };
  std::vector<Result> results(items.size());
  parallel_for(items.size(), params.jobs, [&](std::size_t i) {
    const detail::PairItem& item = items[i];
    AttackOutcome outcome;
    if (params.mode == ScopeMode::fixed) {
      AttackConfig cfg;
      cfg.alpha = params.alpha;
      cfg.min_difference = params.min_difference;
      cfg.step = params.step;
      cfg.max_steps = params.max_steps;
      outcome = run_attack(model, *item.image, item.target, cfg);
    } else {
      outcome = auto_scope_attack(model, *item.image, item.target, params.alpha, params.step,
                                  params.max_steps, params.grid);
    }
    results[i] = {outcome.success, outcome.ssim_score, image_in_range(outcome.adversarial)};
  });

  detail::CellAccumulator acc;
  bool all_in_range = true;
  for (std::size_t i = 0; i < items.size(); ++i) {
    acc.add(items[i].source, items[i].target, results[i].success, results[i].ssim);
    all_in_range = all_in_range && results[i].in_range;
  }
  HeatmapReport report = acc.finish(params.n_per_pair);
  report.all_outputs_in_range = all_in_range;
  return report;
}

// Iterative-gradient baseline over the same pair protocol.
inline HeatmapReport ifgm_heatmap(const LogRegModel& model, const Dataset& test_data, double step,
                                  int max_steps, int n_per_pair, int jobs = 1) {
  if (n_per_pair < 1) throw std::invalid_argument("n_per_pair must be >= 1");
  std::vector<detail::PairItem> items = detail::pair_work_items(model, test_data, n_per_pair);

  struct Result {
    bool success;
    double ssim;
    bool in_range;
  };
  std::vector<Result> results(items.size());
  parallel_for(items.size(), jobs, [&](std::size_t i) {
    const detail::PairItem& item = items[i];
    AttackOutcome outcome = ifgm_l2_attack(model, *item.image, item.target, step, max_steps);
    results[i] = {outcome.success, outcome.ssim_score, image_in_range(outcome.adversarial)};
  });

  detail::CellAccumulator acc;
  bool all_in_range = true;
  for (std::size_t i = 0; i < items.size(); ++i) {
    acc.add(items[i].source, items[i].target, results[i].success, results[i].ssim);
    all_in_range = all_in_range && results[i].in_range;
  }
  HeatmapReport report = acc.finish(n_per_pair);
  report.all_outputs_in_range = all_in_range;
  return report;
}

struct ClassSummary {
  int cls = 0;
  int n = 0;
  double mean = 0, min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

struct NontargetedReport {
  std::array<ClassSummary, kNumClasses> per_class{};
  double grand_mean = std::numeric_limits<double>::quiet_NaN();
  long attacks_attempted = 0;
  long attacks_succeeded = 0;
  bool all_outputs_in_range = true;
};

namespace detail {

// Linear-interpolation quantile on a sorted vector.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  double pos = q * (static_cast<double>(sorted.size()) - 1.0);
  std::size_t lo = static_cast<std::size_t>(pos);
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace detail

// Non-targeted attack quality per source class: five-number summaries of the
// SSIM of successful attacks plus the grand mean.
inline NontargetedReport nontargeted_stats(const LogRegModel& model, const Dataset& test_data,
                                           double min_difference, double step, int max_steps,
                                           int n_per_class, int jobs = 1) {
  if (n_per_class < 1) throw std::invalid_argument("n_per_class must be >= 1");

  struct WorkItem {
    int cls;
    const Image* image;
  };
  std::vector<WorkItem> items;
  for (int cls = 0; cls < kNumClasses; ++cls) {
    for (const Image* img : select_eligible(model, test_data, cls, n_per_class)) {
      items.push_back({cls, img});
    }
  }

  struct Result {
    bool success;
    double ssim;
    bool in_range;
  };
  std::vector<Result> results(items.size());
  parallel_for(items.size(), jobs, [&](std::size_t i) {
    AttackConfig cfg;
    cfg.alpha = 0.0;
    cfg.min_difference = min_difference;
    cfg.step = step;
    cfg.max_steps = max_steps;
    AttackOutcome outcome = run_attack(model, *items[i].image, std::nullopt, cfg);
    results[i] = {outcome.success, outcome.ssim_score, image_in_range(outcome.adversarial)};
  });

  NontargetedReport report;
  std::array<std::vector<double>, kNumClasses> ssims;
  double total = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    ++report.attacks_attempted;
    report.all_outputs_in_range = report.all_outputs_in_range && results[i].in_range;
    if (results[i].success) {
      ++report.attacks_succeeded;
      ssims[items[i].cls].push_back(results[i].ssim);
      total += results[i].ssim;
    }
  }
  for (int cls = 0; cls < kNumClasses; ++cls) {
    ClassSummary& s = report.per_class[cls];
    s.cls = cls;
    s.n = static_cast<int>(ssims[cls].size());
    if (s.n == 0) continue;
    std::sort(ssims[cls].begin(), ssims[cls].end());
    double sum = 0;
    for (double v : ssims[cls]) sum += v;
    s.mean = sum / s.n;
    s.min = ssims[cls].front();
    s.max = ssims[cls].back();
    s.q1 = detail::quantile_sorted(ssims[cls], 0.25);
    s.median = detail::quantile_sorted(ssims[cls], 0.5);
    s.q3 = detail::quantile_sorted(ssims[cls], 0.75);
  }
  if (report.attacks_succeeded > 0) report.grand_mean = total / report.attacks_succeeded;
  return report;
}

// ---------------------------------------------------------------------------
// Scope curve
// ---------------------------------------------------------------------------

struct ScopeCurvePoint {
  double min_difference = 0;
  double mean_ssim = std::numeric_limits<double>::quiet_NaN();  // over successful attacks
  double success_rate = 0;
  int n_success = 0;
};

struct ScopeCurve {
  int source_class = 0;
  std::vector<double> grid;
  std::vector<ScopeCurvePoint> points;
  // Raw per-attack results, indexed [grid][attack] with a fixed attack order,
  // so callers can compare thresholds on mutually successful attacks.
  std::vector<std::vector<std::uint8_t>> success;
  std::vector<std::vector<double>> ssim_values;
  bool all_outputs_in_range = true;
};

// Targeted attacks from one source class to every other class, repeated for
// each scope threshold in the grid.
inline ScopeCurve scope_curve(const LogRegModel& model, const Dataset& test_data, int source_class,
                              std::span<const double> grid, double alpha, double step,
                              int max_steps, int n_images, int jobs = 1) {
  if (grid.empty()) throw std::invalid_argument("scope grid is empty");
  if (n_images < 1) throw std::invalid_argument("n_images must be >= 1");

  std::vector<const Image*> pool = select_eligible(model, test_data, source_class, n_images);
  struct WorkItem {
    const Image* image;
    int target;
  };
  std::vector<WorkItem> attacks;
  for (const Image* img : pool) {
    for (int t = 0; t < kNumClasses; ++t) {
      if (t != source_class) attacks.push_back({img, t});
    }
  }

  ScopeCurve curve;
  curve.source_class = source_class;
  curve.grid.assign(grid.begin(), grid.end());
  curve.success.assign(grid.size(), std::vector<std::uint8_t>(attacks.size(), 0));
  curve.ssim_values.assign(grid.size(), std::vector<double>(attacks.size(), 0.0));

  std::vector<std::uint8_t> in_range(attacks.size() * grid.size(), 1);
  parallel_for(attacks.size() * grid.size(), jobs, [&](std::size_t flat) {
    std::size_t g = flat / attacks.size();
    std::size_t a = flat % attacks.size();
    AttackConfig cfg;
    cfg.alpha = alpha;
    cfg.min_difference = curve.grid[g];
    cfg.step = step;
    cfg.max_steps = max_steps;
    AttackOutcome outcome = run_attack(model, *attacks[a].image, attacks[a].target, cfg);
    curve.success[g][a] = outcome.success ? 1 : 0;
    curve.ssim_values[g][a] = outcome.ssim_score;
    in_range[flat] = image_in_range(outcome.adversarial) ? 1 : 0;
  });
  for (std::uint8_t ok : in_range) curve.all_outputs_in_range = curve.all_outputs_in_range && ok;

  for (std::size_t g = 0; g < grid.size(); ++g) {
    ScopeCurvePoint point;
    point.min_difference = curve.grid[g];
    double sum = 0;
    int n_success = 0;
    for (std::size_t a = 0; a < attacks.size(); ++a) {
      if (curve.success[g][a]) {
        sum += curve.ssim_values[g][a];
        ++n_success;
      }
    }
    point.n_success = n_success;
    point.success_rate = attacks.empty() ? 0.0 : static_cast<double>(n_success) / attacks.size();
    if (n_success > 0) point.mean_ssim = sum / n_success;
    curve.points.push_back(point);
  }
  return curve;
}

// Mean SSIM at two thresholds over the attacks that succeed at both.
inline std::optional<std::pair<double, double>> mutual_success_means(const ScopeCurve& curve,
                                                                     double md_a, double md_b) {
  auto find = [&](double md) -> std::optional<std::size_t> {
    for (std::size_t g = 0; g < curve.grid.size(); ++g) {
      if (curve.grid[g] == md) return g;
    }
    return std::nullopt;
  };
  auto ga = find(md_a), gb = find(md_b);
  if (!ga || !gb) return std::nullopt;
  double sum_a = 0, sum_b = 0;
  int n = 0;
  for (std::size_t a = 0; a < curve.success[*ga].size(); ++a) {
    if (curve.success[*ga][a] && curve.success[*gb][a]) {
      sum_a += curve.ssim_values[*ga][a];
      sum_b += curve.ssim_values[*gb][a];
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return std::make_pair(sum_a / n, sum_b / n);
}

// ---------------------------------------------------------------------------
// Importance maps
// ---------------------------------------------------------------------------

// Ternary per-pixel mask: +1 where a brightness increase pushes the
// prediction toward the target, -1 where a decrease does, 0 out of scope.
struct ImportanceMap {
  std::array<std::int8_t, kImagePixels> mask{};
  double threshold = 0;

  int nonzero_count() const {
    int n = 0;
    for (auto v : mask) n += v != 0 ? 1 : 0;
    return n;
  }
  double density() const { return static_cast<double>(nonzero_count()) / kImagePixels; }
};

inline ImportanceMap importance_map(const LogRegModel& model, int source, int target,
                                    double min_difference, bool positive_only) {
  std::array<double, kImagePixels> delta = delta_map(model, source, target, 1.0);
  ImportanceMap map;
  map.threshold = min_difference;
  for (int i = 0; i < kImagePixels; ++i) {
    if (std::abs(delta[i]) > min_difference) {
      map.mask[i] = delta[i] > 0 ? 1 : -1;
    }
  }
  if (positive_only) {
    for (auto& v : map.mask) {
      if (v < 0) v = 0;
    }
  }
  return map;
}

// White = draw here (increase), black = out of scope, gray = decrease.
inline Image render_importance_map(const ImportanceMap& map) {
  Image img;
  for (int i = 0; i < kImagePixels; ++i) {
    img[i] = map.mask[i] > 0 ? 1.0 : (map.mask[i] < 0 ? 0.5 : 0.0);
  }
  return img;
}

// ---------------------------------------------------------------------------
// Principal component analysis
// ---------------------------------------------------------------------------

struct PcaBasis {
  std::array<double, kImagePixels> mean{};
  std::array<double, kImagePixels> component1{};
  std::array<double, kImagePixels> component2{};
  double eigenvalue1 = 0;
  double eigenvalue2 = 0;
};

struct ProjectedPoint {
  double x = 0;
  double y = 0;
  int label = -1;  // class for background points
  int step = -1;   // step index for trajectory points
};

struct TrajectoryProjection {
  PcaBasis basis;
  std::vector<ProjectedPoint> background;
  std::vector<ProjectedPoint> trajectory;
};

namespace detail {

// Power iteration on a symmetric matrix, orthogonalized against previously
// found components each step. Seeded start vector, tolerance 1e-10.
inline std::pair<double, Eigen::VectorXd> power_iteration(
    const Eigen::MatrixXd& m, const std::vector<Eigen::VectorXd>& previous) {
  const Eigen::Index n = m.rows();
  Rng rng(0x5ca1ab1eULL);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform() - 0.5;
  auto orthogonalize = [&](Eigen::VectorXd& u) {
    for (const auto& p : previous) u -= p.dot(u) * p;
  };
  orthogonalize(v);
  double norm = v.norm();
  if (norm == 0) throw DegenerateBasis("degenerate start vector");
  v /= norm;

  double lambda = 0;
  for (int iter = 0; iter < 50000; ++iter) {
    Eigen::VectorXd w = m * v;
    orthogonalize(w);
    double wnorm = w.norm();
    if (wnorm < 1e-300) throw DegenerateBasis("matrix annihilates the search space");
    w /= wnorm;
    double new_lambda = w.dot(m * w);
    bool converged = std::abs(new_lambda - lambda) <= 1e-10 * std::max(std::abs(new_lambda), 1.0) &&
                     iter > 0;
    v = std::move(w);
    lambda = new_lambda;
    if (converged) break;
  }
  return {lambda, v};
}

inline void fix_sign(Eigen::VectorXd& v) {
  Eigen::Index peak = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (std::abs(v(i)) > std::abs(v(peak))) peak = i;
  }
  if (v(peak) < 0) v = -v;
}

}  // namespace detail

// Top-2 principal components of the sample covariance, via seeded power
// iteration with deflation. Collinear or constant sample sets have no second
// direction and are rejected.
inline PcaBasis pca_fit(std::span<const Image> samples) {
  if (samples.size() < 2) throw DegenerateBasis("need at least 2 samples");
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());

  Eigen::MatrixXd x(n, kImagePixels);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (int i = 0; i < kImagePixels; ++i) x(r, i) = samples[r][i];
  }
  Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - mean;
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

  double scale = cov.diagonal().sum();
  if (!(scale > 1e-18)) throw DegenerateBasis("samples are identical");

  auto [lambda1, u1] = detail::power_iteration(cov, {});
  if (!(lambda1 > 0)) throw DegenerateBasis("covariance has no positive direction");

  // Rank check in data space: residual after removing the first direction.
  double max_residual = 0, max_norm = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    double proj = centered.row(r).dot(u1);
    double res2 = centered.row(r).squaredNorm() - proj * proj;
    max_residual = std::max(max_residual, std::sqrt(std::max(res2, 0.0)));
    max_norm = std::max(max_norm, centered.row(r).norm());
  }
  if (max_residual <= 1e-12 * std::max(max_norm, 1e-300)) {
    throw DegenerateBasis("samples are collinear");
  }

  auto [lambda2, u2] = detail::power_iteration(cov, {u1});
  detail::fix_sign(u1);
  detail::fix_sign(u2);
  // Final cleanup pass keeps the pair orthonormal to machine precision.
  u2 -= u1.dot(u2) * u1;
  u2.normalize();

  PcaBasis basis;
  for (int i = 0; i < kImagePixels; ++i) {
    basis.mean[i] = mean(i);
    basis.component1[i] = u1(i);
    basis.component2[i] = u2(i);
  }
  basis.eigenvalue1 = lambda1;
  basis.eigenvalue2 = lambda2;
  return basis;
}

inline ProjectedPoint project_point(const PcaBasis& basis, const Image& img) {
  ProjectedPoint p;
  double px = 0, py = 0;
  for (int i = 0; i < kImagePixels; ++i) {
    double c = img[i] - basis.mean[i];
    px += c * basis.component1[i];
    py += c * basis.component2[i];
  }
  p.x = px;
  p.y = py;
  return p;
}

// Mean-centered coordinates of the background class samples and of every
// attack trajectory step in the component plane.
inline TrajectoryProjection project_trajectory(const PcaBasis& basis,
                                               std::span<const Image> trajectory,
                                               std::span<const LabeledImage> background) {
  TrajectoryProjection proj;
  proj.basis = basis;
  for (const LabeledImage& item : background) {
    ProjectedPoint p = project_point(basis, item.image);
    p.label = item.label;
    proj.background.push_back(p);
  }
  int step = 0;
  for (const Image& img : trajectory) {
    ProjectedPoint p = project_point(basis, img);
    p.step = step++;
    proj.trajectory.push_back(p);
  }
  return proj;
}

}  // namespace scoped_attack
