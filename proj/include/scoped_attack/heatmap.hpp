#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "scoped_attack/csv.hpp"
#include "scoped_attack/image.hpp"
#include "scoped_attack/models.hpp"

namespace scoped_attack {

// 10x10 grid of per-(source, target) statistics. The diagonal carries NaN:
// a class cannot be attacked into itself.
struct Heatmap {
  enum class Stat { mean_ssim, success_rate, transfer_rate };

  std::array<double, kNumClasses * kNumClasses> values;
  Stat statistic = Stat::mean_ssim;
  int n_per_cell = 0;

  Heatmap() { values.fill(std::numeric_limits<double>::quiet_NaN()); }

  double& cell(int source, int target) { return values[source * kNumClasses + target]; }
  double cell(int source, int target) const { return values[source * kNumClasses + target]; }

  // Mean over defined (non-NaN, off-diagonal) cells.
  double mean_defined() const {
    double sum = 0;
    int n = 0;
    for (int s = 0; s < kNumClasses; ++s) {
      for (int t = 0; t < kNumClasses; ++t) {
        if (s == t) continue;
        double v = cell(s, t);
        if (!std::isnan(v)) {
          sum += v;
          ++n;
        }
      }
    }
    return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
  }
};

inline void write_heatmap_csv(const Heatmap& map, const std::filesystem::path& path) {
  std::vector<std::string> header = {"source"};
  for (int t = 0; t < kNumClasses; ++t) header.push_back("target_" + std::to_string(t));
  CsvWriter csv(path, header);
  for (int s = 0; s < kNumClasses; ++s) {
    std::vector<std::string> row = {std::to_string(s)};
    for (int t = 0; t < kNumClasses; ++t) row.push_back(format_double(map.cell(s, t)));
    csv.row(row);
  }
}

// First n test images of true class `cls` that the model also classifies as
// `cls`, in dataset order. Deterministic sampling policy for every aggregate.
inline std::vector<const Image*> select_eligible(const LogRegModel& model, const Dataset& data,
                                                 int cls, int n) {
  std::vector<const Image*> out;
  for (const LabeledImage& item : data.items) {
    if (static_cast<int>(out.size()) >= n) break;
    if (item.label != cls) continue;
    if (logreg_forward(model, item.image).predicted_class == cls) out.push_back(&item.image);
  }
  return out;
}

}  // namespace scoped_attack
