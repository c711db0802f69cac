#pragma once

// Minibatch Adam on the weighted negative average log likelihood with
// early stopping on a held-out split. Works for any model that provides
// params()/set_params() and the free functions log_prob_batch/loss_and_grad.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "lfi/matrix.hpp"
#include "lfi/optim.hpp"
#include "lfi/rng.hpp"

namespace lfi {

/// N×D targets optionally paired with an N×C context (C = 0 when unconditional).
struct Dataset {
  Matrix targets;
  Matrix context;

  std::size_t size() const noexcept { return targets.rows(); }
  Matrix context_rows(std::span<const std::size_t> idx) const {
    return context.cols() == 0 ? Matrix(idx.size(), 0) : select_rows(context, idx);
  }
};

struct TrainConfig {
  std::size_t minibatch = 100;
  std::size_t max_epochs = 500;
  std::size_t patience = 20;
  double validation_fraction = 0.1;
  AdamSettings adam{};
  double log_scale_clip = 7.0;

  void validate() const {
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      throw ConfigError("E_CONFIG_TRAIN", "validation fraction must lie in (0, 1)");
    if (patience < 1) throw ConfigError("E_CONFIG_TRAIN", "patience must be at least 1");
    if (minibatch < 1) throw ConfigError("E_CONFIG_TRAIN", "minibatch must be at least 1");
  }
};

struct TrainTrace {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

template <class M>
struct TrainResult {
  M model;
  TrainTrace trace;
};

template <class M>
concept TrainableDensity = requires(M& m, const M& cm, const Matrix& t, const Matrix& c,
                                    std::span<const double> w, std::span<const double> p) {
  { cm.params() } -> std::same_as<Vector>;
  m.set_params(p);
  { log_prob_batch(cm, t, c) } -> std::same_as<Vector>;
  { loss_and_grad(cm, t, c, w) } -> std::same_as<std::pair<double, Vector>>;
};

/// Seeded Fisher–Yates permutation of 0..n−1.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, RngStream& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
  return idx;
}

template <TrainableDensity M>
double weighted_nll(const M& model, const Dataset& data, std::span<const std::size_t> idx,
                    std::span<const double> weights) {
  const Vector lp = log_prob_batch(model, select_rows(data.targets, idx), data.context_rows(idx));
  double s = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) s -= (weights.empty() ? 1.0 : weights[idx[k]]) * lp[k];
  return s / static_cast<double>(idx.size());
}

template <TrainableDensity M>
TrainResult<M> train_mle(M model, const Dataset& data, std::span<const double> weights, const TrainConfig& cfg,
                         RngStream& rng) {
  cfg.validate();
  if constexpr (requires { model.set_log_scale_clip(1.0); }) model.set_log_scale_clip(cfg.log_scale_clip);
  TrainResult<M> out{std::move(model), {}};
  if (cfg.max_epochs == 0) return out;
  const std::size_t n = data.size();
  if (n < 2) throw InsufficientDataError("train_mle needs at least 2 rows");
  if (!weights.empty()) {
    if (weights.size() != n) throw ShapeError("train_mle: one weight per row required");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw DegenerateDataError("train_mle: weights must be finite and non-negative");
      total += w;
    }
    if (!(total > 0.0)) throw DegenerateDataError("train_mle: all weights are zero");
  }
  if (!data.targets.all_finite() || !data.context.all_finite())
    throw NumericError("train_mle: training data contains non-finite values");

  std::vector<std::size_t> order = shuffled_indices(n, rng);
  std::size_t n_val = static_cast<std::size_t>(std::round(cfg.validation_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  std::vector<std::size_t> val(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
  std::vector<std::size_t> train(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
  const std::size_t batch = std::min(cfg.minibatch, train.size());

  M& m = out.model;
  Vector params = m.params();
  AdamState adam(params.size(), cfg.adam);
  Vector best = params;
  double best_val = weighted_nll(m, data, val, weights);
  if (!std::isfinite(best_val)) best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<double> batch_w;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = train.size(); i > 1; --i) std::swap(train[i - 1], train[rng.uniform_index(i)]);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + batch <= train.size(); start += batch) {
      std::span<const std::size_t> idx(train.data() + start, batch);
      const Matrix t = select_rows(data.targets, idx);
      const Matrix c = data.context_rows(idx);
      batch_w.clear();
      if (!weights.empty())
        for (std::size_t k : idx) batch_w.push_back(weights[k]);
      auto [loss, grad] = loss_and_grad(m, t, c, batch_w);
      if (!std::isfinite(loss)) throw TrainingError("training loss diverged", epoch);
      try {
        adam_update(adam, params, grad);
      } catch (const NumericError&) {
        throw TrainingError("non-finite gradient during training", epoch);
      }
      m.set_params(params);
      epoch_loss += loss;
      ++batches;
    }
    const double v = weighted_nll(m, data, val, weights);
    if (std::isnan(v)) throw TrainingError("validation loss is NaN", epoch);
    out.trace.train_loss.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(batches, 1)));
    out.trace.validation_loss.push_back(v);
    out.trace.epochs_run = epoch;
    if (v < best_val) {
      best_val = v;
      best = params;
      out.trace.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  m.set_params(best);
  return out;
}

}  // namespace lfi
