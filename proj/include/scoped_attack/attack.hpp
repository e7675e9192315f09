#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "scoped_attack/errors.hpp"
#include "scoped_attack/image.hpp"
#include "scoped_attack/metrics.hpp"
#include "scoped_attack/models.hpp"

namespace scoped_attack {

struct AttackConfig {
  double alpha = 0.5;           // attack mode: 0 suppress source, 1 amplify target, 0.5 both
  double min_difference = 0.0;  // scope threshold on |delta|
  double step = 0.05;           // per-iteration brightness change scale
  int max_steps = 100;
  SsimConfig ssim;              // configuration used to score the outcome

  void validate() const {
    if (alpha != 0.0 && alpha != 0.5 && alpha != 1.0) {
      throw std::invalid_argument("alpha must be one of 0, 0.5, 1");
    }
    if (!(min_difference >= 0.0 && min_difference <= 2.0)) {
      throw std::invalid_argument("min_difference must lie in [0, 2]");
    }
    if (!(step > 0)) throw std::invalid_argument("step must be positive");
    if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
    ssim.validate();
  }
};

struct AttackOutcome {
  bool success = false;
  Image adversarial{};
  int steps_used = 0;
  int final_class = -1;
  double ssim_score = 1.0;
  std::vector<Image> trajectory;  // source first, then one image per executed step
};

// Per-pixel attack direction: alpha * W[:, target] - (1 - alpha) * W[:, source].
inline std::array<double, kImagePixels> delta_map(const LogRegModel& model, int source,
                                                  std::optional<int> target, double alpha) {
  if (alpha != 0.0 && alpha != 0.5 && alpha != 1.0) {
    throw std::invalid_argument("alpha must be one of 0, 0.5, 1");
  }
  if (alpha > 0.0 && !target.has_value()) {
    throw MissingTarget("alpha > 0 requires a target class");
  }
  if (target.has_value() && *target == source) {
    throw DegenerateAttack("source and target classes coincide");
  }
  std::array<double, kImagePixels> delta;
  for (int i = 0; i < kImagePixels; ++i) {
    double d = -(1.0 - alpha) * model.weight(i, source);
    if (target.has_value() && alpha > 0.0) d += alpha * model.weight(i, *target);
    delta[i] = d;
  }
  return delta;
}

// One scoped step: pixels whose |delta| exceeds the threshold move by
// step * delta and are clamped into [0, 1]; everything else is untouched.
inline Image attack_step(const Image& image, const std::array<double, kImagePixels>& delta,
                         const AttackConfig& config) {
  Image out = image;
  for (int i = 0; i < kImagePixels; ++i) {
    if (std::abs(delta[i]) > config.min_difference) {
      out[i] = std::clamp(image[i] + config.step * delta[i], 0.0, 1.0);
    }
  }
  return out;
}

namespace detail {

inline bool attack_succeeded(int predicted, int source, std::optional<int> target) {
  return target.has_value() ? predicted == *target : predicted != source;
}

}  // namespace detail

// Iterates attack_step, re-evaluating the prediction after every step and
// stopping at the first success. The trajectory keeps every visited image,
// source first. Pure function of its arguments.
inline AttackOutcome run_attack(const LogRegModel& model, const Image& image,
                                std::optional<int> target, const AttackConfig& config) {
  config.validate();
  Prediction initial = logreg_forward(model, image);
  const int source = initial.predicted_class;
  if (target.has_value() && *target == source) {
    throw DegenerateAttack("image is already classified as the target class");
  }

  const std::array<double, kImagePixels> delta =
      delta_map(model, source, target, config.alpha);

  AttackOutcome outcome;
  outcome.final_class = source;
  outcome.trajectory.reserve(static_cast<std::size_t>(config.max_steps) + 1);
  outcome.trajectory.push_back(image);

  Image current = image;
  for (int t = 1; t <= config.max_steps; ++t) {
    Image next = attack_step(current, delta, config);
    bool stuck = next == current;  // empty scope or all scoped pixels clamped
    current = next;
    outcome.trajectory.push_back(current);
    outcome.steps_used = t;

    Prediction p = logreg_forward(model, current);
    outcome.final_class = p.predicted_class;
    if (detail::attack_succeeded(p.predicted_class, source, target)) {
      outcome.success = true;
      break;
    }
    if (stuck) break;  // the step is a fixed point; further iterations cannot move
  }

  outcome.adversarial = current;
  outcome.ssim_score = ssim(image, outcome.adversarial, config.ssim);
  return outcome;
}

// Runs the attack once per grid value and keeps, among the successful runs,
// the one with the best structural similarity (ties favor the smaller
// threshold). When nothing succeeds, reports the failed run at the smallest
// grid value.
inline AttackOutcome auto_scope_attack(const LogRegModel& model, const Image& image,
                                       std::optional<int> target, double alpha, double step,
                                       int max_steps, std::span<const double> grid,
                                       double* chosen_min_difference = nullptr) {
  if (grid.empty()) throw std::invalid_argument("scope grid is empty");

  AttackOutcome best;
  double best_md = 0.0;
  bool have_success = false;

  double smallest = grid[0];
  AttackOutcome smallest_outcome;

  for (double md : grid) {
    AttackConfig cfg;
    cfg.alpha = alpha;
    cfg.min_difference = md;
    cfg.step = step;
    cfg.max_steps = max_steps;
    AttackOutcome outcome = run_attack(model, image, target, cfg);

    if (md <= smallest) {
      smallest = md;
      smallest_outcome = outcome;
    }

    if (outcome.success) {
      bool better = !have_success || outcome.ssim_score > best.ssim_score ||
                    (outcome.ssim_score == best.ssim_score && md < best_md);
      if (better) {
        best = std::move(outcome);
        best_md = md;
        have_success = true;
      }
    }
  }

  if (!have_success) {
    if (chosen_min_difference) *chosen_min_difference = smallest;
    return smallest_outcome;
  }
  if (chosen_min_difference) *chosen_min_difference = best_md;
  return best;
}

// Iterative gradient baseline: x <- clamp(x - step * g / |g|_2) with g the
// input gradient of the targeted cross-entropy, recomputed each step. A
// vanishing gradient stalls the attack, which is then reported as failed.
inline AttackOutcome ifgm_l2_attack(const LogRegModel& model, const Image& image, int target,
                                    double step, int max_steps,
                                    const SsimConfig& ssim_cfg = {}) {
  if (!(step > 0)) throw std::invalid_argument("step must be positive");
  if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
  Prediction initial = logreg_forward(model, image);
  if (initial.predicted_class == target) {
    throw DegenerateAttack("image is already classified as the target class");
  }

  AttackOutcome outcome;
  outcome.final_class = initial.predicted_class;
  outcome.trajectory.push_back(image);

  Image current = image;
  for (int t = 1; t <= max_steps; ++t) {
    std::array<double, kImagePixels> grad = input_gradient(model, current, target);
    double norm = 0;
    for (double g : grad) norm += g * g;
    norm = std::sqrt(norm);
    if (norm < 1e-12) break;  // numeric stall

    Image next = current;
    for (int i = 0; i < kImagePixels; ++i) {
      next[i] = std::clamp(current[i] - step * grad[i] / norm, 0.0, 1.0);
    }
    bool stuck = next == current;
    current = next;
    outcome.trajectory.push_back(current);
    outcome.steps_used = t;

    Prediction p = logreg_forward(model, current);
    outcome.final_class = p.predicted_class;
    if (p.predicted_class == target) {
      outcome.success = true;
      break;
    }
    if (stuck) break;
  }

  outcome.adversarial = current;
  outcome.ssim_score = ssim(image, outcome.adversarial, ssim_cfg);
  return outcome;
}

// Reporting helper: pixels that differ beyond noise level.
inline int count_modified_pixels(const Image& source, const Image& adversarial) {
  int count = 0;
  for (int i = 0; i < kImagePixels; ++i) {
    if (std::abs(source[i] - adversarial[i]) > 1e-9) ++count;
  }
  return count;
}

}  // namespace scoped_attack
