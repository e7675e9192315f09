#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "scoped_attack/errors.hpp"
#include "scoped_attack/image.hpp"
#include "scoped_attack/rng.hpp"

namespace scoped_attack {

// ---------------------------------------------------------------------------
// Model types
// ---------------------------------------------------------------------------

// Single dense layer (logistic regression): z = softmax(x W + b).
// W is stored pixel-major: weights[pixel * kNumClasses + class]. Each column
// W[:, k] reads directly as a per-pixel importance map for class k.
struct LogRegModel {
  std::vector<double> weights;
  std::vector<double> bias;

  LogRegModel()
      : weights(static_cast<std::size_t>(kImagePixels) * kNumClasses, 0.0),
        bias(kNumClasses, 0.0) {}

  double weight(int pixel, int cls) const {
    return weights[static_cast<std::size_t>(pixel) * kNumClasses + cls];
  }
  double& weight(int pixel, int cls) {
    return weights[static_cast<std::size_t>(pixel) * kNumClasses + cls];
  }
};

struct DenseLayer {
  int in = 0;
  int out = 0;
  std::vector<double> W;  // row-major, W[r * out + c]
  std::vector<double> b;

  void resize(int in_, int out_) {
    in = in_;
    out = out_;
    W.assign(static_cast<std::size_t>(in) * out, 0.0);
    b.assign(out, 0.0);
  }
};

struct BatchNorm {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;

  void resize(int n) {
    gamma.assign(n, 1.0);
    beta.assign(n, 0.0);
    running_mean.assign(n, 0.0);
    running_var.assign(n, 1.0);
  }
};

inline constexpr std::array<int, 6> kMlpWidths = {784, 200, 100, 60, 30, 10};
inline constexpr double kBnEpsilon = 1e-5;

// Fully connected 784-200-100-60-30-10 network: batch normalization after the
// first layer, dropout after the second, ReLU on hidden layers, softmax output.
struct Mlp5Model {
  std::array<DenseLayer, 5> layers;
  BatchNorm bn;  // over the 200 outputs of layers[0]
  double dropout_rate = 0.3;

  Mlp5Model() {
    for (int l = 0; l < 5; ++l) layers[l].resize(kMlpWidths[l], kMlpWidths[l + 1]);
    bn.resize(kMlpWidths[1]);
  }
};

struct Prediction {
  std::array<double, kNumClasses> probs{};
  int predicted_class = 0;
};

enum class ForwardMode { train, eval };

// ---------------------------------------------------------------------------
// Core operations
// ---------------------------------------------------------------------------

// Lowest index attaining the maximum.
template <typename Container>
int argmax(const Container& v) {
  int best = 0;
  for (std::size_t i = 1; i < std::size(v); ++i) {
    if (v[i] > v[best]) best = static_cast<int>(i);
  }
  return best;
}

// Numerically stable softmax (max subtraction). Output sums to 1.
inline std::vector<double> softmax(const std::vector<double>& logits) {
  for (double z : logits) {
    if (!std::isfinite(z)) throw NumericError("non-finite logit");
  }
  double zmax = logits[0];
  for (double z : logits) zmax = std::max(zmax, z);
  std::vector<double> out(logits.size());
  double sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - zmax);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

inline std::array<double, kNumClasses> softmax(const std::array<double, kNumClasses>& logits) {
  for (double z : logits) {
    if (!std::isfinite(z)) throw NumericError("non-finite logit");
  }
  double zmax = logits[0];
  for (double z : logits) zmax = std::max(zmax, z);
  std::array<double, kNumClasses> out;
  double sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - zmax);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

inline constexpr double kLogFloor = 1e-12;

// -sum_k y_k log(max(p_k, floor)). The floor avoids -inf on saturated outputs.
inline double cross_entropy(const std::vector<double>& probs, const std::vector<double>& onehot) {
  if (probs.size() != onehot.size()) throw InvalidTarget("probability/target size mismatch");
  int ones = 0;
  for (double y : onehot) {
    if (y == 1.0) {
      ++ones;
    } else if (y != 0.0) {
      throw InvalidTarget("target vector is not one-hot");
    }
  }
  if (ones != 1) throw InvalidTarget("target vector is not one-hot");
  double loss = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (onehot[k] == 1.0) loss -= std::log(std::max(probs[k], kLogFloor));
  }
  return loss;
}

inline Prediction make_prediction(const std::array<double, kNumClasses>& probs) {
  Prediction p;
  p.probs = probs;
  p.predicted_class = argmax(probs);
  return p;
}

inline Prediction logreg_forward(const LogRegModel& model, const Image& image) {
  std::array<double, kNumClasses> logits;
  for (int k = 0; k < kNumClasses; ++k) logits[k] = model.bias[k];
  for (int i = 0; i < kImagePixels; ++i) {
    double x = image[i];
    if (x != 0.0) {
      const double* row = &model.weights[static_cast<std::size_t>(i) * kNumClasses];
      for (int k = 0; k < kNumClasses; ++k) logits[k] += x * row[k];
    }
  }
  return make_prediction(softmax(logits));
}

// Gradient of the cross-entropy toward `target` with respect to the input:
// W (z - e_target) for z = softmax(x W + b).
inline std::array<double, kImagePixels> input_gradient(const LogRegModel& model, const Image& image,
                                                       int target) {
  Prediction p = logreg_forward(model, image);
  std::array<double, kNumClasses> residual = p.probs;
  residual[target] -= 1.0;
  std::array<double, kImagePixels> grad;
  for (int i = 0; i < kImagePixels; ++i) {
    const double* row = &model.weights[static_cast<std::size_t>(i) * kNumClasses];
    double g = 0;
    for (int k = 0; k < kNumClasses; ++k) g += row[k] * residual[k];
    grad[i] = g;
  }
  return grad;
}

// Single-image forward pass. Eval mode (the default) normalizes with the
// running statistics and skips dropout, so it is deterministic. Train mode
// uses the statistics of the single-image batch (so normalized activations
// collapse to beta) and applies inverted dropout when a generator is given;
// batch training uses its own batched path instead.
inline Prediction mlp_forward(const Mlp5Model& model, const Image& image,
                              ForwardMode mode = ForwardMode::eval, Rng* dropout_rng = nullptr) {
  for (double rv : model.bn.running_var) {
    if (!(rv > 0)) throw ModelCorrupt("non-positive running variance");
  }

  std::vector<double> act(image.pixels.begin(), image.pixels.end());
  for (int l = 0; l < 5; ++l) {
    const DenseLayer& layer = model.layers[l];
    std::vector<double> z(layer.out, 0.0);
    for (int k = 0; k < layer.out; ++k) z[k] = layer.b[k];
    for (int r = 0; r < layer.in; ++r) {
      double x = act[r];
      if (x != 0.0) {
        const double* row = &layer.W[static_cast<std::size_t>(r) * layer.out];
        for (int k = 0; k < layer.out; ++k) z[k] += x * row[k];
      }
    }

    if (l == 0) {
      for (int k = 0; k < layer.out; ++k) {
        double xhat;
        if (mode == ForwardMode::eval) {
          xhat = (z[k] - model.bn.running_mean[k]) / std::sqrt(model.bn.running_var[k] + kBnEpsilon);
        } else {
          xhat = 0.0;  // batch of one: z equals the batch mean
        }
        z[k] = model.bn.gamma[k] * xhat + model.bn.beta[k];
      }
    }

    if (l < 4) {
      for (double& v : z) v = v > 0 ? v : 0.0;  // ReLU
      if (l == 1 && mode == ForwardMode::train && dropout_rng != nullptr && model.dropout_rate > 0) {
        double keep = 1.0 - model.dropout_rate;
        for (double& v : z) {
          v = dropout_rng->uniform() < keep ? v / keep : 0.0;
        }
      }
      act = std::move(z);
    } else {
      std::array<double, kNumClasses> logits;
      for (int k = 0; k < kNumClasses; ++k) logits[k] = z[k];
      return make_prediction(softmax(logits));
    }
  }
  throw ModelCorrupt("unreachable");
}

}  // namespace scoped_attack
