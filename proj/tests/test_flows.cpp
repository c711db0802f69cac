#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lfi/classic_density.hpp"
#include "lfi/io.hpp"
#include "lfi/maf.hpp"
#include "lfi/training.hpp"
#include "test_util.hpp"

using namespace lfi;
using lfi::testing::rel_err;

namespace {

template <class M>
void randomize(M& m, RngStream& rng, double scale) {
  Vector p = m.params();
  for (double& v : p) v = scale * rng.normal();
  m.set_params(p);
}

Matrix rows_with_context(std::span<const double> ctx, std::size_t n) { return broadcast_context(ctx, n); }

// Reachability from input column j to output row o through the masked graph.
std::vector<std::vector<bool>> reachability(const MadeMasks& mm) {
  const Matrix& first = mm.masks.front();
  std::vector<std::vector<bool>> reach(first.rows(), std::vector<bool>(first.cols()));
  for (std::size_t k = 0; k < first.rows(); ++k)
    for (std::size_t j = 0; j < first.cols(); ++j) reach[k][j] = first(k, j) != 0.0;
  for (std::size_t l = 1; l < mm.masks.size(); ++l) {
    const Matrix& m = mm.masks[l];
    std::vector<std::vector<bool>> next(m.rows(), std::vector<bool>(first.cols(), false));
    for (std::size_t o = 0; o < m.rows(); ++o)
      for (std::size_t k = 0; k < m.cols(); ++k)
        if (m(o, k) != 0.0)
          for (std::size_t j = 0; j < first.cols(); ++j) next[o][j] = next[o][j] || reach[k][j];
    reach = std::move(next);
  }
  return reach;
}

}  // namespace

TEST(BuildMasks, FirstDimensionSeesNoInputs) {
  RngStream rng(1, 0);
  const MadeMasks mm = build_masks(2, 0, std::vector<std::size_t>{8}, std::vector<std::size_t>{0, 1}, rng);
  const Matrix& out = mm.masks.back();
  for (std::size_t k = 0; k < out.cols(); ++k) {
    EXPECT_EQ(out(0, k), 0.0);
    EXPECT_EQ(out(2, k), 0.0);
  }
}

TEST(BuildMasks, MasksAreBinaryAndHiddenDegreesInRange) {
  RngStream rng(2, 0);
  for (std::size_t ctx : {0u, 2u}) {
    const MadeMasks mm = build_masks(5, ctx, std::vector<std::size_t>{20, 20}, natural_order(5), rng);
    for (const auto& m : mm.masks)
      for (double v : m.data()) EXPECT_TRUE(v == 0.0 || v == 1.0);
    for (const auto& layer : mm.hidden_degrees)
      for (int g : layer) {
        EXPECT_GE(g, ctx ? 0 : 1);
        EXPECT_LE(g, 4);
      }
  }
}

TEST(BuildMasks, ReachabilityMatchesDegrees) {
  RngStream rng(3, 0);
  const std::vector<std::size_t> order{2, 0, 3, 1};
  const MadeMasks mm = build_masks(4, 0, std::vector<std::size_t>{16}, order, rng);
  const auto reach = reachability(mm);
  for (std::size_t half = 0; half < 2; ++half)
    for (std::size_t d = 0; d < 4; ++d)
      for (std::size_t j = 0; j < 4; ++j) {
        if (reach[half * 4 + d][j]) {
          EXPECT_LT(mm.input_degrees[j], mm.input_degrees[d]);
        }
      }
}

TEST(BuildMasks, RejectsZeroDimensionAndZeroHidden) {
  RngStream rng(4, 0);
  EXPECT_THROW(build_masks(0, 0, std::vector<std::size_t>{4}, std::vector<std::size_t>{}, rng), ShapeError);
  EXPECT_THROW(build_masks(2, 0, std::vector<std::size_t>{0}, natural_order(2), rng), ShapeError);
}

TEST(BuildMasks, OneDimensionDependsOnContextOnly) {
  RngStream rng(5, 0);
  MadeNet m(1, 2, {6}, natural_order(1), rng);
  randomize(m, rng, 1.0);
  Matrix s1, a1, s2, a2;
  m.conditionals(Matrix{{0.3}}, Matrix{{1.0, -1.0}}, s1, a1);
  m.conditionals(Matrix{{-4.0}}, Matrix{{1.0, -1.0}}, s2, a2);
  EXPECT_EQ(s1, s2);
  EXPECT_EQ(a1, a2);
  m.conditionals(Matrix{{0.3}}, Matrix{{0.0, 2.0}}, s2, a2);
  EXPECT_NE(s1, s2);
}

class AutoregressiveProperty : public ::testing::TestWithParam<std::size_t> {};

TEST_P(AutoregressiveProperty, LaterInputsNeverChangeEarlierOutputs) {
  const std::size_t ctx = GetParam();
  RngStream rng(6, ctx);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t dim = 2 + rng.uniform_index(4);
    std::vector<std::size_t> order = natural_order(dim);
    for (std::size_t i = dim; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    MadeNet m(dim, ctx, {10, 10}, order, rng);
    randomize(m, rng, 1.0);
    Matrix x(1, dim), c(1, ctx);
    for (double& v : x.data()) v = rng.normal();
    for (double& v : c.data()) v = rng.normal();
    Matrix s0, a0;
    m.conditionals(x, c, s0, a0);
    for (std::size_t k = 0; k < dim; ++k) {
      Matrix xp = x;
      for (std::size_t j = k; j < dim; ++j) xp(0, order[j]) += rng.uniform(-5, 5);
      Matrix s, a;
      m.conditionals(xp, c, s, a);
      for (std::size_t i = 0; i <= k; ++i) {
        ASSERT_EQ(s(0, order[i]), s0(0, order[i]));
        ASSERT_EQ(a(0, order[i]), a0(0, order[i]));
      }
    }
  }
}

INSTANTIATE_TEST_SUITE_P(WithAndWithoutContext, AutoregressiveProperty, ::testing::Values(0u, 3u));

TEST(AutoregressiveProperty, HoldsAfterTraining) {
  RngStream rng(7, 0);
  Matrix data(300, 3);
  for (std::size_t r = 0; r < 300; ++r) {
    data(r, 0) = rng.normal();
    data(r, 1) = data(r, 0) * data(r, 0) + 0.3 * rng.normal();
    data(r, 2) = std::sin(data(r, 1)) + 0.3 * rng.normal();
  }
  TrainConfig cfg;
  cfg.max_epochs = 5;
  MadeNet m = train_mle(MadeNet(3, 0, {20}, {1, 2, 0}, rng), Dataset{data, {}}, {}, cfg, rng).model;
  const Matrix none(1, 0);
  Matrix s0, a0, s, a;
  m.conditionals(Matrix{{0.1, 0.2, 0.3}}, none, s0, a0);
  // order (1, 2, 0): perturbing dim 0 leaves dims 1 and 2 intact
  m.conditionals(Matrix{{9.0, 0.2, 0.3}}, none, s, a);
  for (std::size_t d : {1u, 2u}) {
    EXPECT_EQ(s(0, d), s0(0, d));
    EXPECT_EQ(a(0, d), a0(0, d));
  }
}

TEST(MadeLogProb, ZeroParametersIsStandardNormal) {
  RngStream rng(8, 0);
  MadeNet m(3, 0, {8}, natural_order(3), rng);
  m.zero_parameters();
  const Vector x{0.5, -1.0, 2.0};
  const MadeDensity d = made_log_prob(m, x);
  EXPECT_EQ(d.u, x);
  double expected = 0.0;
  for (double v : x) expected += std_normal_log_pdf(v);
  EXPECT_DOUBLE_EQ(d.log_prob, expected);
}

TEST(MadeLogProb, FixedAffineHandEvaluation) {
  RngStream rng(9, 0);
  MadeNet m(1, 0, {}, natural_order(1), rng);
  m.zero_parameters();
  m.layers().back().bias = {1.0, std::log(2.0)};
  const MadeDensity d = made_log_prob(m, std::array{7.0});
  EXPECT_DOUBLE_EQ(d.u[0], 3.0);
  EXPECT_NEAR(d.log_prob, std_normal_log_pdf(3.0) - std::log(2.0), 1e-14);
}

TEST(MadeLogProb, DimensionMismatchThrows) {
  RngStream rng(10, 0);
  MadeNet m(2, 1, {4}, natural_order(2), rng);
  EXPECT_THROW(made_log_prob(m, std::array{1.0}), ShapeError);
  EXPECT_THROW(made_log_prob(m, std::array{1.0, 2.0}), ShapeError);
}

TEST(MadeLogProb, QuadratureIsOne) {
  RngStream rng(11, 0);
  MadeNet m(1, 2, {10}, natural_order(1), rng);
  randomize(m, rng, 0.5);
  const Vector ctx{0.4, -0.8};
  const double mass = lfi::testing::integrate_1d(
      [&](double x) { return std::exp(made_log_prob(m, std::array{x}, ctx).log_prob); }, -40, 40, 200000);
  EXPECT_NEAR(mass, 1.0, 1e-3);
}

TEST(MadeSample, IdentityModelReturnsBaseDraws) {
  RngStream rng(12, 0);
  MadeNet m(3, 0, {8}, natural_order(3), rng);
  m.zero_parameters();
  RngStream a(13, 0), b(13, 0);
  const Matrix x = made_sample(m, 50, {}, a);
  for (double v : x.data()) ASSERT_EQ(v, b.normal());
}

TEST(MadeSample, ShiftOnly) {
  RngStream rng(14, 0);
  MadeNet m(2, 0, {}, natural_order(2), rng);
  m.zero_parameters();
  m.layers().back().bias = {1.5, -2.0, 0.0, 0.0};
  RngStream a(15, 0), b(15, 0);
  const Matrix x = made_sample(m, 20, {}, a);
  for (std::size_t r = 0; r < 20; ++r) {
    ASSERT_EQ(x(r, 0), b.normal() + 1.5);
    ASSERT_EQ(x(r, 1), b.normal() - 2.0);
  }
}

TEST(MadeSample, DensityRecoversBaseDraws) {
  RngStream rng(16, 0);
  MadeNet m(4, 2, {12, 12}, {3, 1, 0, 2}, rng);
  randomize(m, rng, 0.4);
  const Vector ctx{0.3, 1.2};
  RngStream a(17, 0), b(17, 0);
  const Matrix x = made_sample(m, 200, ctx, a);
  for (std::size_t r = 0; r < 200; ++r) {
    const MadeDensity d = made_log_prob(m, x.row(r), ctx);
    for (std::size_t k = 0; k < 4; ++k) ASSERT_NEAR(d.u[k], b.normal(), 1e-10);
  }
}

TEST(MadeSample, TrainedOneDimensionalKolmogorovSmirnov) {
  RngStream rng(18, 0);
  Matrix data(2000, 1);
  for (double& v : data.data()) v = 1.0 + 2.0 * rng.normal();
  TrainConfig cfg;
  cfg.max_epochs = 30;
  cfg.adam.learning_rate = 0.01;
  MafModel m = train_mle(MafModel(1, 0, 2, {10}, rng), Dataset{data, {}}, {}, cfg, rng).model;
  const std::size_t n = 100000;
  Matrix s = maf_sample(m, n, {}, rng);
  Vector xs(s.data().begin(), s.data().end());
  std::sort(xs.begin(), xs.end());
  // model CDF by cumulative midpoint quadrature on a fine grid
  const double lo = xs.front() - 5.0, hi = xs.back() + 5.0;
  const std::size_t cells = 400000;
  const double h = (hi - lo) / static_cast<double>(cells);
  double cdf = 0.0, ks = 0.0;
  std::size_t k = 0;
  for (std::size_t c = 0; c < cells; ++c) {
    const double right = lo + static_cast<double>(c + 1) * h;
    cdf += h * std::exp(maf_log_prob(m, std::array{right - 0.5 * h}));
    while (k < n && xs[k] <= right) {
      ks = std::max({ks, std::abs(static_cast<double>(k + 1) / n - cdf), std::abs(static_cast<double>(k) / n - cdf)});
      ++k;
    }
  }
  EXPECT_LT(ks, 0.01);
}

TEST(MafLogProb, SingleLayerEqualsMade) {
  RngStream rng(19, 0);
  MafModel maf(3, 1, 1, {10}, rng);
  randomize(maf, rng, 0.5);
  const Vector x{0.2, -0.7, 1.1}, c{0.5};
  EXPECT_EQ(maf_log_prob(maf, x, c), made_log_prob(maf.layers()[0], x, c).log_prob);
}

TEST(MafLogProb, IdentityStackIsStandardNormal) {
  RngStream rng(20, 0);
  MafModel maf(3, 0, 4, {10}, rng);
  maf.zero_parameters();
  const Vector x{1.2, 0.1, -0.4};
  double expected = 0.0;
  for (double v : x) expected += std_normal_log_pdf(v);
  EXPECT_NEAR(maf_log_prob(maf, x), expected, 1e-14);
}

TEST(MafLogProb, LogDetMatchesNumericalJacobian) {
  RngStream rng(21, 0);
  for (std::size_t dim = 1; dim <= 4; ++dim) {
    MafModel maf(dim, 2, 3, {12}, rng);
    randomize(maf, rng, 0.4);
    const Vector c{0.1, -0.3};
    Vector x(dim);
    for (double& v : x) v = rng.normal();
    const Vector u = maf_to_base(maf, x, c);
    double base = 0.0;
    for (double v : u) base += std_normal_log_pdf(v);
    const double implied = maf_log_prob(maf, x, c) - base;
    Matrix jac(dim, dim);
    const double h = 1e-6;
    for (std::size_t j = 0; j < dim; ++j) {
      Vector xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const Vector up = maf_to_base(maf, xp, c), um = maf_to_base(maf, xm, c);
      for (std::size_t i = 0; i < dim; ++i) jac(i, j) = (up[i] - um[i]) / (2 * h);
    }
    // |det| via LU with partial pivoting
    double logdet = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      std::size_t p = k;
      for (std::size_t i = k + 1; i < dim; ++i)
        if (std::abs(jac(i, k)) > std::abs(jac(p, k))) p = i;
      for (std::size_t j = 0; j < dim; ++j) std::swap(jac(k, j), jac(p, j));
      logdet += std::log(std::abs(jac(k, k)));
      for (std::size_t i = k + 1; i < dim; ++i) {
        const double f = jac(i, k) / jac(k, k);
        for (std::size_t j = k; j < dim; ++j) jac(i, j) -= f * jac(k, j);
      }
    }
    EXPECT_NEAR(implied, logdet, 1e-4) << "D=" << dim;
  }
}

TEST(MafSample, IdentityStackReturnsBaseDraws) {
  RngStream rng(22, 0);
  MafModel maf(2, 0, 3, {6}, rng);
  maf.zero_parameters();
  RngStream a(23, 0), b(23, 0);
  const Matrix x = maf_sample(maf, 30, {}, a);
  // reversal between an odd number of layers swaps column order back and forth
  const Matrix u = maf.forward(x, Matrix(30, 0)).u;
  for (double v : u.data()) ASSERT_NEAR(v, b.normal(), 1e-15);
}

TEST(MafSample, RoundTripThousandPoints) {
  RngStream rng(24, 0);
  MafModel maf(3, 2, 3, {16}, rng);
  randomize(maf, rng, 0.4);
  Matrix x(1000, 3), c(1000, 2);
  for (double& v : x.data()) v = rng.normal();
  for (double& v : c.data()) v = rng.normal();
  const Matrix u = maf.forward(x, c).u;
  const Matrix back = maf.inverse(u, c);
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(back.data()[i], x.data()[i], 1e-8);
  RngStream a(25, 0), b(25, 0);
  const Vector ctx{0.5, 0.5};
  const Matrix s = maf_sample(maf, 200, ctx, a);
  const Matrix us = maf.forward(s, rows_with_context(ctx, 200)).u;
  for (double v : us.data()) ASSERT_NEAR(v, b.normal(), 1e-8);
}

TEST(MafSample, TrainedMomentsMatchTarget) {
  RngStream rng(26, 0);
  Matrix data(5000, 1);
  for (double& v : data.data()) v = 3.0 + 0.5 * rng.normal();
  TrainConfig cfg;
  cfg.max_epochs = 100;
  cfg.adam.learning_rate = 0.01;
  MafModel m = train_mle(MafModel(1, 0, 2, {10}, rng), Dataset{data, {}}, {}, cfg, rng).model;
  const Matrix s = maf_sample(m, 100000, {}, rng);
  const Vector mu = column_mean(s);
  const Matrix cov = column_covariance(s, mu);
  EXPECT_NEAR(mu[0], 3.0, 0.05);
  EXPECT_NEAR(cov(0, 0), 0.25, 0.05);
}

TEST(TrainMle, SingleMadeRecoversGaussian) {
  RngStream rng(27, 0);
  const double mu = 2.0, sigma = 0.5;
  Matrix data(10000, 1);
  for (double& v : data.data()) v = mu + sigma * rng.normal();
  TrainConfig cfg;
  cfg.max_epochs = 100;
  cfg.adam.learning_rate = 0.01;
  MadeNet m = train_mle(MadeNet(1, 0, {}, natural_order(1), rng), Dataset{data, {}}, {}, cfg, rng).model;
  const MadeDensity d = made_log_prob(m, std::array{0.0});
  // u = (0 − β) e^{−α}: recover β and α from two evaluations
  const double beta_over = -d.u[0];
  const double u1 = made_log_prob(m, std::array{1.0}).u[0];
  const double inv_scale = u1 - d.u[0];
  const double beta = beta_over / inv_scale;
  const double alpha = -std::log(inv_scale);
  EXPECT_LT(rel_err(beta, mu), 0.05);
  EXPECT_LT(rel_err(alpha, std::log(sigma)), 0.05);
}

TEST(TrainMle, ZeroEpochsLeavesModelUnchanged) {
  RngStream rng(28, 0);
  MafModel maf(2, 0, 2, {8}, rng);
  const Vector before = maf.params();
  TrainConfig cfg;
  cfg.max_epochs = 0;
  const Matrix data = lfi::testing::random_matrix(50, 2, rng);
  EXPECT_EQ(train_mle(maf, Dataset{data, {}}, {}, cfg, rng).model.params(), before);
}

TEST(TrainMle, InvalidConfigIsRejected) {
  RngStream rng(29, 0);
  TrainConfig cfg;
  cfg.validation_fraction = 1.0;
  EXPECT_THROW(train_mle(MadeNet(1, 0, {}, natural_order(1), rng), Dataset{Matrix(10, 1), {}}, {}, cfg, rng),
               ConfigError);
  cfg = TrainConfig{};
  cfg.patience = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(TrainMle, DivergenceRaisesTrainingError) {
  RngStream rng(30, 0);
  Matrix data(200, 1);
  for (double& v : data.data()) v = 1e200 * rng.normal();
  TrainConfig cfg;
  cfg.max_epochs = 5;
  EXPECT_THROW(train_mle(MadeNet(1, 0, {}, natural_order(1), rng), Dataset{data, {}}, {}, cfg, rng), TrainingError);
}

TEST(TrainMle, BeatsGaussianOnBimodalData) {
  RngStream rng(31, 0);
  auto draw = [&](std::size_t n) {
    Matrix m(n, 2);
    for (std::size_t r = 0; r < n; ++r) {
      const double c = rng.uniform() < 0.5 ? -2.0 : 2.0;
      m(r, 0) = c + 0.5 * rng.normal();
      m(r, 1) = c + 0.5 * rng.normal();
    }
    return m;
  };
  const Matrix train = draw(3000), test = draw(2000);
  TrainConfig cfg;
  cfg.max_epochs = 150;
  cfg.adam.learning_rate = 0.005;
  const MafModel maf = train_mle(MafModel(2, 0, 5, {30}, rng), Dataset{train, {}}, {}, cfg, rng).model;
  const GaussianModel g = gaussian_mle_fit(train);
  double lm = 0.0, lg = 0.0;
  const Vector lp = maf_log_prob_batch(maf, test, Matrix(test.rows(), 0));
  for (std::size_t r = 0; r < test.rows(); ++r) {
    lm += lp[r];
    lg += g.log_prob(test.row(r));
  }
  EXPECT_GE(lm / 2000.0, lg / 2000.0);
}

TEST(TrainMle, EarlyStoppingReturnsBestSnapshot) {
  RngStream rng(32, 0);
  Matrix data(60, 1);
  for (double& v : data.data()) v = rng.normal();
  TrainConfig cfg;
  cfg.max_epochs = 200;
  cfg.patience = 3;
  cfg.minibatch = 10;
  cfg.adam.learning_rate = 0.05;
  const auto res = train_mle(MafModel(1, 0, 2, {20}, rng), Dataset{data, {}}, {}, cfg, rng);
  ASSERT_GT(res.trace.epochs_run, 0u);
  const auto& v = res.trace.validation_loss;
  const double best = *std::min_element(v.begin(), v.end());
  if (res.trace.best_epoch > 0) {
    EXPECT_EQ(v[res.trace.best_epoch - 1], best);
  }
}

TEST(ChangeOfVariables, QuadratureOneDimension) {
  RngStream rng(33, 0);
  MafModel maf(1, 1, 3, {8}, rng);
  randomize(maf, rng, 0.3);
  const Vector c{0.7};
  const double mass = lfi::testing::integrate_1d(
      [&](double x) { return std::exp(maf_log_prob(maf, std::array{x}, c)); }, -60, 60, 300000);
  EXPECT_NEAR(mass, 1.0, 1e-3);
}

class TwoDimensionalMass : public ::testing::TestWithParam<bool> {};

TEST_P(TwoDimensionalMass, QuadratureTwoDimensions) {
  RngStream rng(34, GetParam());
  MafModel maf(2, 0, 3, {10}, rng, Activation::tanh, GetParam());
  randomize(maf, rng, 0.25);
  // centre the grid on the sample mean to keep the box tight
  const Matrix s = maf_sample(maf, 2000, {}, rng);
  const Vector mu = column_mean(s);
  const double mass = lfi::testing::integrate_2d(
      [&](double x, double y) { return std::exp(maf_log_prob(maf, std::array{x + mu[0], y + mu[1]})); }, -25, 25, 1000);
  EXPECT_NEAR(mass, 1.0, 1e-3);
}

INSTANTIATE_TEST_SUITE_P(WithAndWithoutReversal, TwoDimensionalMass, ::testing::Bool());

TEST(GradientProperty, MadeAndMafMatchFiniteDifferences) {
  RngStream rng(35, 0);
  auto check = [&](const auto& model, const Matrix& t, const Matrix& c, const Vector& w) {
    auto [loss, grad] = loss_and_grad(model, t, c, w);
    auto copy = model;
    const Vector fd = finite_diff_grad(
        [&](std::span<const double> p) {
          copy.set_params(p);
          return loss_and_grad(copy, t, c, w).first;
        },
        model.params(), 1e-6);
    for (std::size_t i = 0; i < fd.size(); ++i) ASSERT_LE(rel_err(grad[i], fd[i]), 1e-5) << "param " << i;
  };
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t dim = 1 + rng.uniform_index(3), ctx = rng.uniform_index(3);
    MadeNet made(dim, ctx, {6}, natural_order(dim), rng);
    randomize(made, rng, 0.5);
    MafModel maf(dim, ctx, 2, {5}, rng);
    randomize(maf, rng, 0.5);
    const Matrix t = lfi::testing::random_matrix(4, dim, rng, -2, 2);
    const Matrix c = lfi::testing::random_matrix(4, ctx, rng, -2, 2);
    Vector w(4);
    for (double& v : w) v = rng.uniform(0.2, 2.0);
    check(made, t, c, w);
    check(maf, t, c, Vector{});
  }
}

TEST(SamplingDensityAgreement, EntropySelfConsistency) {
  RngStream rng(36, 0);
  MafModel maf(2, 1, 3, {10}, rng);
  randomize(maf, rng, 0.3);
  const Vector c{0.2};
  const std::size_t n = 10000;
  auto batch_stats = [&](RngStream& r) {
    const Vector lp = maf_log_prob_batch(maf, maf_sample(maf, n, c, r), rows_with_context(c, n));
    double m = 0.0, m2 = 0.0;
    for (double v : lp) m += v;
    m /= n;
    for (double v : lp) m2 += (v - m) * (v - m);
    return std::pair{m, m2 / (n - 1)};
  };
  RngStream a(37, 0), b(37, 1);
  const auto [ma, va] = batch_stats(a);
  const auto [mb, vb] = batch_stats(b);
  EXPECT_LT(std::abs(ma - mb), 3.0 * std::sqrt(va / n + vb / n));
}

TEST(FlowSerialization, MafRoundTripIsBitExact) {
  RngStream rng(38, 0);
  MafModel maf(3, 2, 3, {7, 5}, rng);
  randomize(maf, rng, 0.7);
  maf.set_log_scale_clip(5.0);
  const MafModel back = io::maf_from_json(io::json::parse(io::to_json(maf).dump()));
  EXPECT_EQ(back.params(), maf.params());
  EXPECT_EQ(back.permutations(), maf.permutations());
  const Vector x{0.3, -0.2, 0.9}, c{1.0, 2.0};
  EXPECT_EQ(maf_log_prob(back, x, c), maf_log_prob(maf, x, c));
}

TEST(FlowSerialization, WrongKindIsRejected) {
  RngStream rng(39, 0);
  const auto j = io::to_json(MadeNet(2, 0, {4}, natural_order(2), rng));
  EXPECT_THROW(io::maf_from_json(j), ShapeError);
}

TEST(MafModel, RejectsInconsistentLayers) {
  RngStream rng(40, 0);
  std::vector<MadeNet> layers{MadeNet(2, 0, {4}, natural_order(2), rng), MadeNet(3, 0, {4}, natural_order(3), rng)};
  EXPECT_THROW(MafModel(layers, {reversed_permutation(2)}), ShapeError);
  std::vector<MadeNet> ok{MadeNet(2, 0, {4}, natural_order(2), rng), MadeNet(2, 0, {4}, natural_order(2), rng)};
  EXPECT_THROW(MafModel(ok, {Permutation{0, 0}}), ShapeError);
}

TEST(MadeLogScale, ClippedAtSeven) {
  RngStream rng(41, 0);
  MadeNet m(1, 0, {}, natural_order(1), rng);
  m.zero_parameters();
  m.layers().back().bias = {0.0, 50.0};
  Matrix s, a;
  m.conditionals(Matrix{{0.0}}, Matrix(1, 0), s, a);
  EXPECT_EQ(a(0, 0), 7.0);
}
