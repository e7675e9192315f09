#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "scoped_attack/errors.hpp"
#include "scoped_attack/image.hpp"

namespace scoped_attack {

namespace detail {

// Plain row-major grayscale buffer used by the photo pipeline.
struct GrayBuffer {
  int width = 0;
  int height = 0;
  std::vector<double> v;  // arbitrary nonnegative intensities

  double at(int row, int col) const { return v[static_cast<std::size_t>(row) * width + col]; }
  double& at(int row, int col) { return v[static_cast<std::size_t>(row) * width + col]; }
};

// Otsu's threshold over a 256-bin histogram. Returns -1 when the histogram is
// degenerate (single occupied bin), i.e. nothing separates from background.
inline int otsu_threshold(const std::vector<double>& values) {
  std::array<std::int64_t, 256> hist{};
  for (double x : values) {
    int bin = static_cast<int>(std::lround(std::clamp(x, 0.0, 255.0)));
    ++hist[bin];
  }
  int occupied = 0;
  for (auto h : hist) occupied += h > 0 ? 1 : 0;
  if (occupied < 2) return -1;

  std::int64_t total = static_cast<std::int64_t>(values.size());
  double sum_all = 0;
  for (int i = 0; i < 256; ++i) sum_all += static_cast<double>(i) * hist[i];

  double best_var = -1.0;
  int best_t = 0;
  std::int64_t w0 = 0;
  double sum0 = 0;
  for (int t = 0; t < 255; ++t) {
    w0 += hist[t];
    if (w0 == 0) continue;
    std::int64_t w1 = total - w0;
    if (w1 == 0) break;
    sum0 += static_cast<double>(t) * hist[t];
    double mu0 = sum0 / w0;
    double mu1 = (sum_all - sum0) / w1;
    double between = static_cast<double>(w0) * static_cast<double>(w1) * (mu0 - mu1) * (mu0 - mu1);
    if (between > best_var) {
      best_var = between;
      best_t = t;
    }
  }
  return best_t;
}

// Bilinear resample with pixel-center alignment.
inline GrayBuffer resample_bilinear(const GrayBuffer& src, int new_w, int new_h) {
  GrayBuffer dst;
  dst.width = new_w;
  dst.height = new_h;
  dst.v.assign(static_cast<std::size_t>(new_w) * new_h, 0.0);
  double sx = static_cast<double>(src.width) / new_w;
  double sy = static_cast<double>(src.height) / new_h;
  for (int r = 0; r < new_h; ++r) {
    double fy = (r + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y1 = y0 + 1;
    y0 = std::clamp(y0, 0, src.height - 1);
    y1 = std::clamp(y1, 0, src.height - 1);
    for (int c = 0; c < new_w; ++c) {
      double fx = (c + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x1 = x0 + 1;
      x0 = std::clamp(x0, 0, src.width - 1);
      x1 = std::clamp(x1, 0, src.width - 1);
      double top = src.at(y0, x0) * (1.0 - wx) + src.at(y0, x1) * wx;
      double bot = src.at(y1, x0) * (1.0 - wx) + src.at(y1, x1) * wx;
      dst.at(r, c) = top * (1.0 - wy) + bot * wy;
    }
  }
  return dst;
}

}  // namespace detail

// Converts a photograph of a pen-written digit into a network-ready image:
// grayscale, color-inverted (ink becomes bright), background removed with a
// threshold relative to the photo's own histogram, rescaled so the ink
// bounding box fits the conventional 20x20 region, and placed in the 28x28
// frame with the intensity mass center at the middle.
inline Image preprocess_photo(const Photo& photo) {
  if (photo.width <= 0 || photo.height <= 0 ||
      photo.data.size() != static_cast<std::size_t>(photo.width) * photo.height * photo.channels) {
    throw FormatError("inconsistent photo dimensions");
  }

  detail::GrayBuffer gray;
  gray.width = photo.width;
  gray.height = photo.height;
  gray.v.resize(static_cast<std::size_t>(photo.width) * photo.height);
  for (std::size_t i = 0; i < gray.v.size(); ++i) {
    double g;
    if (photo.channels == 3) {
      g = 0.299 * photo.data[3 * i] + 0.587 * photo.data[3 * i + 1] + 0.114 * photo.data[3 * i + 2];
    } else {
      g = photo.data[i];
    }
    gray.v[i] = 255.0 - g;  // invert: ink bright, paper dark
  }

  int threshold = detail::otsu_threshold(gray.v);
  if (threshold < 0) throw EmptyForeground("photo has no distinguishable foreground");

  // Keep only above-threshold pixels; everything else becomes clean background.
  int min_r = gray.height, max_r = -1, min_c = gray.width, max_c = -1;
  for (int r = 0; r < gray.height; ++r) {
    for (int c = 0; c < gray.width; ++c) {
      if (gray.at(r, c) > threshold) {
        min_r = std::min(min_r, r);
        max_r = std::max(max_r, r);
        min_c = std::min(min_c, c);
        max_c = std::max(max_c, c);
      } else {
        gray.at(r, c) = 0.0;
      }
    }
  }
  if (max_r < 0) throw EmptyForeground("photo has no distinguishable foreground");

  for (double& x : gray.v) x /= 255.0;

  // Fit the ink bounding box into 20x20, preserving aspect ratio.
  int box_h = max_r - min_r + 1;
  int box_w = max_c - min_c + 1;
  double scale = 20.0 / std::max(box_h, box_w);
  int new_w = std::max(1, static_cast<int>(std::lround(gray.width * scale)));
  int new_h = std::max(1, static_cast<int>(std::lround(gray.height * scale)));
  detail::GrayBuffer scaled = detail::resample_bilinear(gray, new_w, new_h);

  // Intensity-weighted mass center of the scaled ink.
  double mass = 0, mr = 0, mc = 0;
  for (int r = 0; r < scaled.height; ++r) {
    for (int c = 0; c < scaled.width; ++c) {
      double w = scaled.at(r, c);
      mass += w;
      mr += w * r;
      mc += w * c;
    }
  }
  if (mass <= 0) throw EmptyForeground("photo foreground vanished during rescale");
  mr /= mass;
  mc /= mass;

  int off_r = static_cast<int>(std::lround((kImageRows - 1) / 2.0 - mr));
  int off_c = static_cast<int>(std::lround((kImageCols - 1) / 2.0 - mc));

  Image out;
  for (int r = 0; r < kImageRows; ++r) {
    for (int c = 0; c < kImageCols; ++c) {
      int sr = r - off_r;
      int sc = c - off_c;
      double v = 0.0;
      if (sr >= 0 && sr < scaled.height && sc >= 0 && sc < scaled.width) {
        v = std::clamp(scaled.at(sr, sc), 0.0, 1.0);
      }
      out.at(r, c) = v;
    }
  }
  return out;
}

}  // namespace scoped_attack
