#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "scoped_attack/errors.hpp"
#include "scoped_attack/image.hpp"
#include "scoped_attack/models.hpp"
#include "scoped_attack/rng.hpp"

namespace scoped_attack {

struct TrainConfig {
  int batch_size = 128;
  int epochs = 50;
  enum class Optimizer { sgd, adam };
  Optimizer optimizer = Optimizer::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t rng_seed = 0;

  // Multi-layer network only.
  double dropout_rate = 0.3;
  double bn_momentum = 0.9;

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
  }
};

inline TrainConfig default_logreg_config() { return TrainConfig{}; }

inline TrainConfig default_mlp_config() {
  TrainConfig cfg;
  cfg.epochs = 100;
  return cfg;
}

namespace detail {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

// First-order optimizer state for one parameter block.
template <typename Mat>
class AdamT {
 public:
  AdamT(Eigen::Index rows, Eigen::Index cols, const TrainConfig& cfg) : cfg_(cfg) {
    m_.setZero(rows, cols);
    v_.setZero(rows, cols);
  }

  void update(Mat& param, const Mat& grad) {
    if (cfg_.optimizer == TrainConfig::Optimizer::sgd) {
      param -= cfg_.learning_rate * grad;
      return;
    }
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
    double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    param -= (cfg_.learning_rate / bc1) *
             (m_.array() / ((v_.array() / bc2).sqrt() + cfg_.adam_epsilon)).matrix();
  }

 private:
  Mat m_, v_;
  TrainConfig cfg_;
  long t_ = 0;
};

using Adam = AdamT<Matrix>;
using AdamRow = AdamT<RowVector>;

inline std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);
  return order;
}

inline void gather_batch(const Dataset& data, const std::vector<std::size_t>& order,
                         std::size_t begin, std::size_t end, Matrix& x, Matrix& y) {
  Eigen::Index m = static_cast<Eigen::Index>(end - begin);
  x.resize(m, kImagePixels);
  y.setZero(m, kNumClasses);
  for (Eigen::Index r = 0; r < m; ++r) {
    const LabeledImage& item = data.items[order[begin + r]];
    for (int i = 0; i < kImagePixels; ++i) x(r, i) = item.image[i];
    y(r, item.label) = 1.0;
  }
}

// Row-wise softmax in place, with max subtraction.
inline void softmax_rows(Matrix& z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    double zmax = z.row(r).maxCoeff();
    z.row(r) = (z.row(r).array() - zmax).exp().matrix();
    z.row(r) /= z.row(r).sum();
  }
}

inline double batch_cross_entropy(const Matrix& probs, const Matrix& y) {
  double loss = 0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    for (Eigen::Index k = 0; k < probs.cols(); ++k) {
      if (y(r, k) == 1.0) loss -= std::log(std::max(probs(r, k), kLogFloor));
    }
  }
  return loss / static_cast<double>(probs.rows());
}

}  // namespace detail

// Trains the single-layer network with zero initialization (the objective is
// convex, so the start point is immaterial) and a seeded shuffle per epoch.
// Bit-for-bit deterministic for a fixed seed. Per-epoch mean batch loss is
// appended to *epoch_losses when given.
inline LogRegModel train_logreg(const Dataset& data, const TrainConfig& cfg,
                                std::vector<double>* epoch_losses = nullptr) {
  cfg.validate();
  if (data.empty()) throw EmptyData("training set is empty");

  using detail::Matrix;
  Matrix W = Matrix::Zero(kImagePixels, kNumClasses);
  Matrix b = Matrix::Zero(1, kNumClasses);
  detail::Adam opt_w(kImagePixels, kNumClasses, cfg);
  detail::Adam opt_b(1, kNumClasses, cfg);

  Rng shuffle_rng(substream_seed(cfg.rng_seed, "logreg/shuffle"));
  const std::size_t n = data.size();
  Matrix x, y, z, dz;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = detail::epoch_order(n, shuffle_rng);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      std::size_t end = std::min(n, begin + static_cast<std::size_t>(cfg.batch_size));
      detail::gather_batch(data, order, begin, end, x, y);
      const double m = static_cast<double>(end - begin);

      z.noalias() = x * W;
      z.rowwise() += b.row(0);
      detail::softmax_rows(z);
      loss_sum += detail::batch_cross_entropy(z, y);
      ++batches;

      dz = (z - y) / m;
      Matrix gw = x.transpose() * dz;
      Matrix gb = dz.colwise().sum();
      opt_w.update(W, gw);
      opt_b.update(b, gb);
    }
    if (epoch_losses) epoch_losses->push_back(loss_sum / static_cast<double>(batches));
  }

  LogRegModel model;
  for (int i = 0; i < kImagePixels; ++i) {
    for (int k = 0; k < kNumClasses; ++k) model.weight(i, k) = W(i, k);
  }
  for (int k = 0; k < kNumClasses; ++k) model.bias[k] = b(0, k);
  return model;
}

namespace detail {

// Batched eval-mode forward returning class probabilities; shared by accuracy
// evaluation and the black-box target wrapper's bulk paths.
inline Matrix mlp_eval_probs(const Mlp5Model& model, const Matrix& x) {
  Matrix a = x;
  for (int l = 0; l < 5; ++l) {
    const DenseLayer& layer = model.layers[l];
    // layer.W is row-major (in x out); a column-major map with swapped
    // dimensions reads it as the transpose.
    Eigen::Map<const Matrix> wt(layer.W.data(), layer.out, layer.in);
    Matrix z = a * wt.transpose();
    for (int k = 0; k < layer.out; ++k) z.col(k).array() += layer.b[k];
    if (l == 0) {
      for (int k = 0; k < layer.out; ++k) {
        double inv = 1.0 / std::sqrt(model.bn.running_var[k] + kBnEpsilon);
        z.col(k) = ((z.col(k).array() - model.bn.running_mean[k]) * inv * model.bn.gamma[k] +
                    model.bn.beta[k])
                       .matrix();
      }
    }
    if (l < 4) {
      z = z.cwiseMax(0.0);
    } else {
      softmax_rows(z);
    }
    a = std::move(z);
  }
  return a;
}

}  // namespace detail

// Trains the 5-layer network: He-initialized weights, Adam, batch
// normalization after layer 1 (batch statistics during training, running
// statistics at eval), inverted dropout after layer 2. Deterministic per seed.
inline Mlp5Model train_mlp(const Dataset& data, const TrainConfig& cfg,
                           std::vector<double>* epoch_losses = nullptr) {
  cfg.validate();
  if (data.empty()) throw EmptyData("training set is empty");
  if (!(cfg.dropout_rate >= 0 && cfg.dropout_rate < 1)) {
    throw std::invalid_argument("dropout rate must be in [0, 1)");
  }

  using detail::Matrix;
  using detail::RowVector;

  Rng init_rng(substream_seed(cfg.rng_seed, "mlp/init"));
  Rng shuffle_rng(substream_seed(cfg.rng_seed, "mlp/shuffle"));
  Rng dropout_rng(substream_seed(cfg.rng_seed, "mlp/dropout"));

  std::array<Matrix, 5> W;
  std::array<RowVector, 5> b;
  std::vector<std::unique_ptr<detail::Adam>> opt_w;
  std::vector<std::unique_ptr<detail::AdamRow>> opt_b;
  for (int l = 0; l < 5; ++l) {
    int in = kMlpWidths[l], out = kMlpWidths[l + 1];
    W[l].resize(in, out);
    double sd = std::sqrt(2.0 / in);  // He initialization
    for (int r = 0; r < in; ++r) {
      for (int c = 0; c < out; ++c) W[l](r, c) = sd * init_rng.gaussian();
    }
    b[l] = RowVector::Zero(out);
    opt_w.push_back(std::make_unique<detail::Adam>(in, out, cfg));
    opt_b.push_back(std::make_unique<detail::AdamRow>(1, out, cfg));
  }

  const int bn_n = kMlpWidths[1];
  RowVector gamma = RowVector::Ones(bn_n), beta = RowVector::Zero(bn_n);
  RowVector run_mean = RowVector::Zero(bn_n), run_var = RowVector::Ones(bn_n);
  detail::AdamRow opt_gamma(1, bn_n, cfg), opt_beta(1, bn_n, cfg);

  const std::size_t n = data.size();
  const double keep = 1.0 - cfg.dropout_rate;

  Matrix x, y;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = detail::epoch_order(n, shuffle_rng);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      std::size_t end = std::min(n, begin + static_cast<std::size_t>(cfg.batch_size));
      detail::gather_batch(data, order, begin, end, x, y);
      const double m = static_cast<double>(end - begin);

      // ---- forward ----
      Matrix z1 = x * W[0];
      z1.rowwise() += b[0];
      RowVector mu = z1.colwise().mean();
      Matrix z1c = z1.rowwise() - mu;
      RowVector var = z1c.array().square().colwise().mean().matrix();
      RowVector inv_sd = (var.array() + kBnEpsilon).sqrt().inverse().matrix();
      Matrix xhat = (z1c.array().rowwise() * inv_sd.array()).matrix();
      Matrix a1 = (xhat.array().rowwise() * gamma.array()).matrix();
      a1.rowwise() += beta;
      run_mean = cfg.bn_momentum * run_mean + (1.0 - cfg.bn_momentum) * mu;
      run_var = cfg.bn_momentum * run_var + (1.0 - cfg.bn_momentum) * var;
      Matrix r1 = a1.cwiseMax(0.0);

      Matrix z2 = r1 * W[1];
      z2.rowwise() += b[1];
      Matrix r2 = z2.cwiseMax(0.0);
      Matrix mask;
      if (cfg.dropout_rate > 0) {
        mask.resize(r2.rows(), r2.cols());
        for (Eigen::Index rr = 0; rr < mask.rows(); ++rr) {
          for (Eigen::Index cc = 0; cc < mask.cols(); ++cc) {
            mask(rr, cc) = dropout_rng.uniform() < keep ? 1.0 / keep : 0.0;
          }
        }
        r2 = r2.cwiseProduct(mask);
      }

      Matrix z3 = r2 * W[2];
      z3.rowwise() += b[2];
      Matrix r3 = z3.cwiseMax(0.0);
      Matrix z4 = r3 * W[3];
      z4.rowwise() += b[3];
      Matrix r4 = z4.cwiseMax(0.0);
      Matrix probs = r4 * W[4];
      probs.rowwise() += b[4];
      detail::softmax_rows(probs);
      loss_sum += detail::batch_cross_entropy(probs, y);
      ++batches;

      // ---- backward ----
      Matrix d5 = (probs - y) / m;
      Matrix gW5 = r4.transpose() * d5;
      RowVector gb5 = d5.colwise().sum();
      Matrix d4 = (d5 * W[4].transpose()).cwiseProduct((z4.array() > 0).cast<double>().matrix());
      Matrix gW4 = r3.transpose() * d4;
      RowVector gb4 = d4.colwise().sum();
      Matrix d3 = (d4 * W[3].transpose()).cwiseProduct((z3.array() > 0).cast<double>().matrix());
      Matrix gW3 = r2.transpose() * d3;
      RowVector gb3 = d3.colwise().sum();
      Matrix d2 = d3 * W[2].transpose();
      if (cfg.dropout_rate > 0) d2 = d2.cwiseProduct(mask);
      d2 = d2.cwiseProduct((z2.array() > 0).cast<double>().matrix());
      Matrix gW2 = r1.transpose() * d2;
      RowVector gb2 = d2.colwise().sum();
      Matrix da1 = (d2 * W[1].transpose()).cwiseProduct((a1.array() > 0).cast<double>().matrix());

      // batch-norm backward
      RowVector gbeta = da1.colwise().sum();
      RowVector ggamma = da1.cwiseProduct(xhat).colwise().sum();
      Matrix dxhat = (da1.array().rowwise() * gamma.array()).matrix();
      RowVector mean_dxhat = dxhat.colwise().mean();
      RowVector mean_dxhat_xhat = dxhat.cwiseProduct(xhat).colwise().mean();
      Matrix dz1 = dxhat;
      dz1.rowwise() -= mean_dxhat;
      dz1 -= (xhat.array().rowwise() * mean_dxhat_xhat.array()).matrix();
      dz1 = (dz1.array().rowwise() * inv_sd.array()).matrix();

      Matrix gW1 = x.transpose() * dz1;
      RowVector gb1 = dz1.colwise().sum();

      opt_w[4]->update(W[4], gW5);
      opt_b[4]->update(b[4], gb5);
      opt_w[3]->update(W[3], gW4);
      opt_b[3]->update(b[3], gb4);
      opt_w[2]->update(W[2], gW3);
      opt_b[2]->update(b[2], gb3);
      opt_w[1]->update(W[1], gW2);
      opt_b[1]->update(b[1], gb2);
      opt_w[0]->update(W[0], gW1);
      opt_b[0]->update(b[0], gb1);
      opt_gamma.update(gamma, ggamma);
      opt_beta.update(beta, gbeta);
    }
    if (epoch_losses) epoch_losses->push_back(loss_sum / static_cast<double>(batches));
  }

  Mlp5Model model;
  model.dropout_rate = cfg.dropout_rate;
  for (int l = 0; l < 5; ++l) {
    for (int r = 0; r < model.layers[l].in; ++r) {
      for (int c = 0; c < model.layers[l].out; ++c) {
        model.layers[l].W[static_cast<std::size_t>(r) * model.layers[l].out + c] = W[l](r, c);
      }
    }
    for (int c = 0; c < model.layers[l].out; ++c) model.layers[l].b[c] = b[l](c);
  }
  for (int k = 0; k < bn_n; ++k) {
    model.bn.gamma[k] = gamma(k);
    model.bn.beta[k] = beta(k);
    model.bn.running_mean[k] = run_mean(k);
    model.bn.running_var[k] = run_var(k);
  }
  return model;
}

inline double evaluate_accuracy(const LogRegModel& model, const Dataset& data) {
  if (data.empty()) throw EmptyData("evaluation set is empty");
  std::size_t correct = 0;
  for (const LabeledImage& item : data.items) {
    if (logreg_forward(model, item.image).predicted_class == item.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

inline double evaluate_accuracy(const Mlp5Model& model, const Dataset& data) {
  if (data.empty()) throw EmptyData("evaluation set is empty");
  const std::size_t chunk = 1024;
  std::size_t correct = 0;
  detail::Matrix x;
  for (std::size_t begin = 0; begin < data.size(); begin += chunk) {
    std::size_t end = std::min(data.size(), begin + chunk);
    x.resize(static_cast<Eigen::Index>(end - begin), kImagePixels);
    for (std::size_t r = begin; r < end; ++r) {
      for (int i = 0; i < kImagePixels; ++i) {
        x(static_cast<Eigen::Index>(r - begin), i) = data.items[r].image[i];
      }
    }
    detail::Matrix probs = detail::mlp_eval_probs(model, x);
    for (std::size_t r = begin; r < end; ++r) {
      Eigen::Index row = static_cast<Eigen::Index>(r - begin);
      Eigen::Index best = 0;
      probs.row(row).maxCoeff(&best);
      if (static_cast<int>(best) == data.items[r].label) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace scoped_attack
