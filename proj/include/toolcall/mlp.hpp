#pragma once

// Binary MLP classifier: rectified-linear hidden layers, logistic output,
// cross-entropy plus L2 loss, Adam updates, and early stopping on a
// stratified held-out validation split.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "toolcall/errors.hpp"
#include "toolcall/random.hpp"
#include "toolcall/standardizer.hpp"

namespace toolcall {

struct MlpSpec {
  std::vector<std::size_t> hidden_layers;
  double learning_rate = 1e-3;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  std::uint64_t seed = 42;
  double l2_penalty = 1e-4;
  std::size_t batch_size = 200;  // effective size is min(batch_size, n)
  double validation_fraction = 0.1;
  double improvement_tolerance = 1e-4;

  std::string label() const {
    std::string s = "(";
    for (std::size_t i = 0; i < hidden_layers.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(hidden_layers[i]);
    }
    char lr[32];
    std::snprintf(lr, sizeof lr, "%g", learning_rate);
    return s + ") lr=" + lr;
  }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

// Hidden sizes {(), (128), (256), (128,64), (1024,64)} x rates {1e-3, 1e-4}.
inline std::vector<MlpSpec> default_grid() {
  const std::vector<std::vector<std::size_t>> shapes = {{}, {128}, {256}, {128, 64}, {1024, 64}};
  std::vector<MlpSpec> grid;
  for (const auto& h : shapes) {
    for (double lr : {1e-3, 1e-4}) {
      MlpSpec s;
      s.hidden_layers = h;
      s.learning_rate = lr;
      grid.push_back(s);
    }
  }
  return grid;
}

struct MlpLayer {
  Matrix weights;  // fan_in x fan_out
  Vector bias;     // fan_out
};

struct MlpModel {
  std::vector<MlpLayer> layers;
  MlpSpec spec;
  std::size_t epochs_run = 0;
  bool stopped_early = false;

  std::size_t input_dim() const { return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weights.rows()); }
};

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

struct Activations {
  std::vector<Matrix> values;  // values[0] = input, values[i+1] = output of layer i (post-activation; last = logits)
};

inline Activations forward(const std::vector<MlpLayer>& layers, const Matrix& x) {
  Activations a;
  a.values.reserve(layers.size() + 1);
  a.values.push_back(x);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Matrix z = a.values.back() * layers[i].weights;
    z.rowwise() += layers[i].bias.transpose();
    if (i + 1 < layers.size()) z = z.cwiseMax(0.0);
    a.values.push_back(std::move(z));
  }
  return a;
}

}  // namespace detail

struct LossAndGradients {
  double loss = 0.0;
  std::vector<MlpLayer> gradients;
};

// Mean cross-entropy over the rows of x plus 0.5 * l2 * sum(W^2) / rows.
// Biases are not penalized.
inline LossAndGradients mlp_loss_and_gradients(const std::vector<MlpLayer>& layers, const Matrix& x,
                                               const Vector& y, double l2) {
  const auto n = static_cast<double>(x.rows());
  auto act = detail::forward(layers, x);
  const Matrix& logits = act.values.back();
  LossAndGradients out;
  Matrix delta(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double z = logits(i, 0);
    out.loss += detail::softplus(z) - y(i) * z;
    delta(i, 0) = (detail::sigmoid(z) - y(i)) / n;
  }
  out.loss /= n;
  double sq = 0.0;
  for (const auto& l : layers) sq += l.weights.squaredNorm();
  out.loss += 0.5 * l2 * sq / n;

  out.gradients.resize(layers.size());
  for (std::size_t li = layers.size(); li-- > 0;) {
    const Matrix& input = act.values[li];
    out.gradients[li].weights = input.transpose() * delta + (l2 / n) * layers[li].weights;
    out.gradients[li].bias = delta.colwise().sum().transpose();
    if (li > 0) {
      Matrix back = delta * layers[li].weights.transpose();
      // ReLU derivative: the stored post-activation is positive where active.
      delta = back.cwiseProduct((act.values[li].array() > 0.0).cast<double>().matrix());
    }
  }
  return out;
}

inline Vector mlp_logits(const MlpModel& m, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != m.input_dim()) throw InvalidArgument("mlp: input dimension mismatch");
  return detail::forward(m.layers, x).values.back().col(0);
}

// Probabilities for standardized rows, kept strictly inside (0,1).
inline Vector mlp_proba(const MlpModel& m, const Matrix& x) {
  Vector z = mlp_logits(m, x);
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  return z.unaryExpr([&](double v) { return std::clamp(detail::sigmoid(v), lo, hi); });
}

inline double predict_proba(const MlpModel& m, const Standardizer& st, std::span<const double> x) {
  if (x.size() != st.dim() || x.size() != m.input_dim()) throw InvalidArgument("predict_proba: dimension mismatch");
  Vector v = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
  Matrix row = st.apply(v).transpose();
  return mlp_proba(m, row)(0);
}

inline int predict_label(double p) { return p >= 0.5 ? 1 : 0; }

namespace detail {

inline std::vector<MlpLayer> init_layers(std::size_t input_dim, const std::vector<std::size_t>& hidden, Rng& rng) {
  std::vector<std::size_t> sizes{input_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  std::vector<MlpLayer> layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const auto fan_in = sizes[i], fan_out = sizes[i + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    MlpLayer l{Matrix(fan_in, fan_out), Vector(fan_out)};
    for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
      for (Eigen::Index r = 0; r < l.weights.rows(); ++r) l.weights(r, c) = uniform(rng, -bound, bound);
    for (Eigen::Index c = 0; c < l.bias.size(); ++c) l.bias(c) = uniform(rng, -bound, bound);
    layers.push_back(std::move(l));
  }
  return layers;
}

struct Adam {
  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t t = 0;
  std::vector<MlpLayer> m, v;

  Adam(double lr_, const std::vector<MlpLayer>& shape) : lr(lr_) {
    for (const auto& l : shape) {
      m.push_back({Matrix::Zero(l.weights.rows(), l.weights.cols()), Vector::Zero(l.bias.size())});
      v.push_back(m.back());
    }
  }

  void step(std::vector<MlpLayer>& params, const std::vector<MlpLayer>& grads) {
    ++t;
    const double lr_t =
        lr * std::sqrt(1.0 - std::pow(beta2, static_cast<double>(t))) / (1.0 - std::pow(beta1, static_cast<double>(t)));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto update = [&](auto& p, auto& mm, auto& vv, const auto& g) {
        mm = beta1 * mm + (1.0 - beta1) * g;
        vv = beta2 * vv + (1.0 - beta2) * g.cwiseProduct(g);
        p.array() -= lr_t * mm.array() / (vv.array().sqrt() + eps);
      };
      update(params[i].weights, m[i].weights, v[i].weights, grads[i].weights);
      update(params[i].bias, m[i].bias, v[i].bias, grads[i].bias);
    }
  }
};

inline double accuracy(const MlpModel& m, const Matrix& x, const Vector& y) {
  const Vector z = mlp_logits(m, x);
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) hits += ((detail::sigmoid(z(i)) >= 0.5 ? 1.0 : 0.0) == y(i));
  return static_cast<double>(hits) / static_cast<double>(z.size());
}

inline double log_loss(const MlpModel& m, const Matrix& x, const Vector& y) {
  const Vector z = mlp_logits(m, x);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) loss += softplus(z(i)) - y(i) * z(i);
  return loss / static_cast<double>(z.size());
}

inline Matrix take_rows(const Matrix& x, const std::vector<std::size_t>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

inline Vector take(const Vector& y, const std::vector<std::size_t>& idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(idx[i]));
  return out;
}

}  // namespace detail

// x must already be standardized; y holds 0/1 labels.
inline MlpModel train_mlp(const Matrix& x, const Vector& y, const MlpSpec& spec) {
  if (x.rows() != y.size()) throw InvalidArgument("train_mlp: row/label count mismatch");
  if (x.rows() == 0) throw InvalidArgument("train_mlp: empty training set");
  std::vector<std::size_t> by_class[2];
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw InvalidArgument("train_mlp: labels must be 0 or 1");
    by_class[y(i) == 1.0].push_back(static_cast<std::size_t>(i));
  }
  if (by_class[0].empty() || by_class[1].empty()) throw InvalidArgument("train_mlp: both classes must be present");
  for (auto h : spec.hidden_layers)
    if (h == 0) throw InvalidArgument("train_mlp: hidden widths must be positive");
  if (!(spec.learning_rate > 0.0)) throw InvalidArgument("train_mlp: learning rate must be positive");

  Rng rng(spec.seed);
  MlpModel model;
  model.spec = spec;
  model.layers = detail::init_layers(static_cast<std::size_t>(x.cols()), spec.hidden_layers, rng);

  // Stratified validation split; early stopping needs both classes on each side.
  std::vector<std::size_t> train_idx, val_idx;
  bool early_stopping = spec.validation_fraction > 0.0;
  for (auto& cls : by_class) {
    auto idx = cls;
    shuffle(idx, rng);
    auto n_val = static_cast<std::size_t>(std::llround(spec.validation_fraction * static_cast<double>(idx.size())));
    if (early_stopping) n_val = std::max<std::size_t>(n_val, 1);
    if (n_val >= idx.size()) early_stopping = false;
    for (std::size_t i = 0; i < idx.size(); ++i) (i < n_val ? val_idx : train_idx).push_back(idx[i]);
  }
  if (!early_stopping) {
    train_idx.clear();
    val_idx.clear();
    for (Eigen::Index i = 0; i < x.rows(); ++i) train_idx.push_back(static_cast<std::size_t>(i));
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  const Matrix x_val = detail::take_rows(x, val_idx);
  const Vector y_val = detail::take(y, val_idx);

  const std::size_t batch = std::min(spec.batch_size, train_idx.size());
  detail::Adam adam(spec.learning_rate, model.layers);
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<MlpLayer> best_layers = model.layers;
  std::size_t stale = 0;

  for (std::size_t epoch = 0; epoch < spec.max_epochs; ++epoch) {
    shuffle(train_idx, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < train_idx.size(); start += batch) {
      const std::size_t end = std::min(start + batch, train_idx.size());
      std::vector<std::size_t> b(train_idx.begin() + static_cast<std::ptrdiff_t>(start),
                                 train_idx.begin() + static_cast<std::ptrdiff_t>(end));
      auto lg = mlp_loss_and_gradients(model.layers, detail::take_rows(x, b), detail::take(y, b), spec.l2_penalty);
      epoch_loss += lg.loss * static_cast<double>(end - start);
      adam.step(model.layers, lg.gradients);
    }
    epoch_loss /= static_cast<double>(train_idx.size());
    model.epochs_run = epoch + 1;

    // Negated held-out cross-entropy when available, else negated training loss.
    const double score = early_stopping ? -detail::log_loss(model, x_val, y_val) : -epoch_loss;
    if (score < best_score + spec.improvement_tolerance) {
      ++stale;
    } else {
      stale = 0;
    }
    if (score > best_score) {
      best_score = score;
      if (early_stopping) best_layers = model.layers;
    }
    if (stale >= spec.patience) {
      model.stopped_early = true;
      break;
    }
  }
  if (early_stopping) model.layers = std::move(best_layers);
  return model;
}

}  // namespace toolcall
