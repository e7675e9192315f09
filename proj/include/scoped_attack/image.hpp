#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace scoped_attack {

inline constexpr int kImageRows = 28;
inline constexpr int kImageCols = 28;
inline constexpr int kImagePixels = kImageRows * kImageCols;
inline constexpr int kNumClasses = 10;

// Flat 28x28 grayscale image, row-major, intensities in [0, 1].
struct Image {
  std::array<double, kImagePixels> pixels{};

  double& operator[](int i) { return pixels[i]; }
  double operator[](int i) const { return pixels[i]; }
  double& at(int row, int col) { return pixels[row * kImageCols + col]; }
  double at(int row, int col) const { return pixels[row * kImageCols + col]; }

  bool operator==(const Image& other) const { return pixels == other.pixels; }
};

inline bool image_in_range(const Image& img) {
  for (double v : img.pixels) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
  }
  return true;
}

struct LabeledImage {
  Image image;
  int label = 0;  // 0..9
};

enum class Split { train, test };

struct Dataset {
  std::vector<LabeledImage> items;
  Split split = Split::train;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
};

// Raw photograph as read from disk, 8-bit samples, 1 (gray) or 3 (RGB)
// interleaved channels.
struct Photo {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;
};

}  // namespace scoped_attack
