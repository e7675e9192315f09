#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "scoped_attack/image.hpp"

namespace scoped_attack {

// Structural similarity configuration: 11x11 Gaussian window with sigma 1.5,
// K1 = 0.01, K2 = 0.03, dynamic range 1.0 (intensities live in [0, 1]).
struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  void validate() const {
    if (window < 1 || window % 2 == 0) throw std::invalid_argument("SSIM window must be odd and positive");
    if (!(sigma > 0)) throw std::invalid_argument("SSIM sigma must be positive");
    if (!(k1 > 0) || !(k2 > 0)) throw std::invalid_argument("SSIM k1/k2 must be positive");
    if (!(dynamic_range > 0)) throw std::invalid_argument("SSIM dynamic range must be positive");
    if (window > kImageRows || window > kImageCols) throw std::invalid_argument("SSIM window larger than image");
  }
};

namespace detail {

inline std::vector<double> gaussian_window(int side, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(side) * side);
  double half = (side - 1) / 2.0;
  double sum = 0;
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      double dr = r - half, dc = c - half;
      double g = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      w[static_cast<std::size_t>(r) * side + c] = g;
      sum += g;
    }
  }
  for (double& x : w) x /= sum;
  return w;
}

}  // namespace detail

// Mean of local SSIM over all fully interior window positions (18x18 of them
// on a 28x28 image with the default window). Symmetric in its arguments and
// exactly 1 for identical images.
inline double ssim(const Image& a, const Image& b, const SsimConfig& cfg = {}) {
  cfg.validate();
  const int side = cfg.window;
  const std::vector<double> w = detail::gaussian_window(side, cfg.sigma);
  const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
  const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);

  const int positions_r = kImageRows - side + 1;
  const int positions_c = kImageCols - side + 1;
  double total = 0;
  for (int pr = 0; pr < positions_r; ++pr) {
    for (int pc = 0; pc < positions_c; ++pc) {
      double mu_a = 0, mu_b = 0, saa = 0, sbb = 0, sab = 0;
      for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
          double wt = w[static_cast<std::size_t>(r) * side + c];
          double va = a.at(pr + r, pc + c);
          double vb = b.at(pr + r, pc + c);
          mu_a += wt * va;
          mu_b += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      }
      double var_a = saa - mu_a * mu_a;
      double var_b = sbb - mu_b * mu_b;
      double cov = sab - mu_a * mu_b;
      double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
      double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
      total += num / den;
    }
  }
  return total / (static_cast<double>(positions_r) * positions_c);
}

inline double mae(const Image& a, const Image& b) {
  double sum = 0;
  for (int i = 0; i < kImagePixels; ++i) sum += std::abs(a[i] - b[i]);
  return sum / kImagePixels;
}

// 10 log10(L^2 / MSE) with L = 1; +infinity for identical images.
inline double psnr(const Image& a, const Image& b) {
  double mse = 0;
  for (int i = 0; i < kImagePixels; ++i) {
    double d = a[i] - b[i];
    mse += d * d;
  }
  mse /= kImagePixels;
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace scoped_attack
