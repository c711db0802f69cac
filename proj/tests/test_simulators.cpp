#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <thread>

#include "lfi/simulators.hpp"
#include "test_util.hpp"

using namespace lfi;

TEST(GaussianToy, TextbookPosterior) {
  const GaussianToy sim;
  const GaussianDensity p = *sim.exact_posterior(Vector{1.0});
  EXPECT_DOUBLE_EQ(p.mean()[0], 0.5);
  EXPECT_DOUBLE_EQ(p.covariance()(0, 0), 0.5);
}

TEST(GaussianToy, UninformativeLikelihoodGivesPrior) {
  const GaussianToy sim({1, 0.3, 2.0, 1e12});
  const GaussianDensity p = *sim.exact_posterior(Vector{5.0});
  EXPECT_NEAR(p.mean()[0], 0.3, 1e-9);
  EXPECT_NEAR(p.covariance()(0, 0), 2.0, 1e-9);
}

TEST(GaussianToy, ExactObservationLimit) {
  const GaussianToy sim({1, 0.0, 1.0, 1e-12});
  EXPECT_NEAR(sim.exact_posterior(Vector{2.5})->mean()[0], 2.5, 1e-9);
}

TEST(GaussianToy, PosteriorMatchesQuadrature) {
  RngStream rng(1, 0);
  for (int t = 0; t < 10; ++t) {
    const GaussianToySettings s{1, rng.uniform(-1, 1), rng.uniform(0.3, 3.0), rng.uniform(0.2, 2.0)};
    const GaussianToy sim(s);
    const double x0 = rng.uniform(-2, 2);
    auto joint = [&](double th) {
      const double lik = -0.5 * (x0 - th) * (x0 - th) / s.noise_variance - 0.5 * std::log(2 * std::numbers::pi * s.noise_variance);
      return std::exp(sim.prior_log_prob(std::array{th}) + lik);
    };
    const double z = lfi::testing::integrate_1d(joint, -40, 40, 400000);
    const GaussianDensity post = *sim.exact_posterior(std::array{x0});
    for (double th = -3.0; th <= 3.0; th += 0.25)
      EXPECT_NEAR(joint(th) / z, std::exp(post.log_prob(std::array{th})), 1e-8);
  }
}

TEST(GaussianToy, InvalidSettings) {
  EXPECT_THROW(GaussianToy({1, 0.0, 0.0, 1.0}), ConfigError);
  EXPECT_THROW(GaussianToy({0, 0.0, 1.0, 1.0}), ConfigError);
}

TEST(LotkaVolterra, FrozenDynamics) {
  const LotkaVolterra sim;
  RngStream rng(2, 0);
  const LvTrajectory tr = sim.simulate_rates(std::array{0.0, 0.0, 0.0, 0.0}, rng);
  for (double v : tr.prey) EXPECT_EQ(v, 50.0);
  for (double v : tr.predators) EXPECT_EQ(v, 100.0);
  EXPECT_EQ(tr.events, 0u);
  const Vector s = LotkaVolterra::raw_summaries(tr);
  EXPECT_EQ(s[2], 0.0);
  EXPECT_EQ(s[3], 0.0);
}

TEST(LotkaVolterra, BirthOnlyIsMonotone) {
  LotkaVolterraSettings st;
  st.duration = 2.0;
  const LotkaVolterra sim(st);
  RngStream rng(3, 0);
  const LvTrajectory tr = sim.simulate_rates(std::array{1.0, 0.0, 0.0, 0.0}, rng);
  for (std::size_t k = 1; k < tr.prey.size(); ++k) EXPECT_GE(tr.prey[k], tr.prey[k - 1]);
  EXPECT_GT(tr.prey.back(), tr.prey.front());
  for (double v : tr.predators) EXPECT_EQ(v, 100.0);
}

TEST(LotkaVolterra, PredationCountersBalance) {
  const LotkaVolterra sim;
  RngStream rng(4, 0);
  for (int t = 0; t < 20; ++t) {
    const Vector theta = sim.prior_sample(rng);
    const std::array rates{std::exp(theta[0]), std::exp(theta[1]), std::exp(theta[2]), std::exp(theta[3])};
    const LvTrajectory tr = sim.simulate_rates(rates, rng);
    ASSERT_EQ(tr.predator_births, tr.prey_deaths_by_predation);
    for (double v : tr.prey) ASSERT_GE(v, 0.0);
    for (double v : tr.predators) ASSERT_GE(v, 0.0);
  }
}

TEST(LotkaVolterra, EventCapTruncates) {
  LotkaVolterraSettings st;
  st.max_events = 500;
  const LotkaVolterra sim(st);
  RngStream rng(5, 0);
  const LvTrajectory tr = sim.simulate_rates(std::array{5.0, 0.01, 1.0, 0.0}, rng);
  EXPECT_TRUE(tr.truncated);
  EXPECT_EQ(tr.events, 500u);
  EXPECT_EQ(tr.prey.size(), st.grid_size);
}

TEST(LotkaVolterra, SummaryShapeAndPrior) {
  const LotkaVolterra sim;
  RngStream rng(6, 0);
  const Vector theta{std::log(0.01), std::log(0.5), std::log(1.0), std::log(0.01)};
  const Vector x = sim.simulate(theta, rng);
  EXPECT_EQ(x.size(), 9u);
  for (double v : x) EXPECT_TRUE(std::isfinite(v));
  EXPECT_TRUE(std::isfinite(sim.prior_log_prob(theta)));
  EXPECT_EQ(sim.prior_log_prob(Vector{3.0, 0.0, 0.0, 0.0}), neg_inf);
  EXPECT_THROW(sim.simulate(Vector{0.0}, rng), ShapeError);
}

TEST(LotkaVolterra, InvalidSettings) {
  LotkaVolterraSettings st;
  st.duration = 0.0;
  EXPECT_THROW(LotkaVolterra{st}, ConfigError);
  st = {};
  st.log_rate_low = 2.0;
  EXPECT_THROW(LotkaVolterra{st}, ConfigError);
}

TEST(Mg1, SaturatedDeterministicService) {
  const Mg1 sim;
  RngStream rng(7, 0);
  const Vector x = sim.simulate(Vector{2.0, 2.0, 1e9}, rng);
  for (double v : x) EXPECT_NEAR(v, 2.0, 1e-6);
}

TEST(Mg1, IdleQueueGapsFollowArrivals) {
  Mg1Settings st;
  st.customers = 500;
  const Mg1 sim(st);
  RngStream rng(8, 0);
  const double rate = 1e-3;
  const Vector x = sim.simulate(Vector{0.0, 1.0, rate}, rng);
  // median of Exp(rate) is ln 2 / rate
  EXPECT_GE(x[2], 0.8 * std::log(2.0) / rate);
}

TEST(Mg1, DeparturesOrderedAndAfterArrivals) {
  const Mg1 sim;
  RngStream rng(9, 0);
  for (int t = 0; t < 100; ++t) {
    const Mg1Trajectory tr = sim.simulate_detailed(sim.prior_sample(rng), rng);
    for (std::size_t i = 0; i < tr.departures.size(); ++i) {
      ASSERT_GE(tr.departures[i], tr.arrivals[i]);
      if (i) {
        ASSERT_GE(tr.departures[i], tr.departures[i - 1]);
      }
    }
  }
}

TEST(Mg1, QuantilesAreSorted) {
  const Mg1 sim;
  RngStream rng(10, 0);
  for (int t = 0; t < 50; ++t) {
    const Vector x = sim.simulate(sim.prior_sample(rng), rng);
    ASSERT_EQ(x.size(), 5u);
    for (std::size_t k = 1; k < 5; ++k) ASSERT_GE(x[k], x[k - 1]);
  }
}

TEST(Mg1, PriorSupport) {
  const Mg1 sim;
  EXPECT_TRUE(std::isfinite(sim.prior_log_prob(Vector{1.0, 3.0, 0.2})));
  EXPECT_EQ(sim.prior_log_prob(Vector{3.0, 1.0, 0.2}), neg_inf);
  EXPECT_EQ(sim.prior_log_prob(Vector{1.0, 3.0, 0.5}), neg_inf);
  EXPECT_THROW(Mg1(Mg1Settings{5, 10, 10, 1.0 / 3.0}), ConfigError);
}

TEST(SimulatorPurity, RepeatCallsAreBitIdentical) {
  const GaussianToy toy({3, 0.0, 1.0, 1.0});
  const LotkaVolterra lv;
  const Mg1 mg1;
  const std::vector<const Simulator*> sims{&toy, &lv, &mg1};
  RngStream prior(11, 0);
  for (const Simulator* s : sims) {
    for (int t = 0; t < 5; ++t) {
      const Vector theta = s->prior_sample(prior);
      RngStream a(12, static_cast<std::uint64_t>(t)), b(12, static_cast<std::uint64_t>(t));
      ASSERT_EQ(s->simulate(theta, a), s->simulate(theta, b)) << s->name();
    }
  }
}

TEST(SimulatorPurity, ConcurrentCallsMatchSequential) {
  const Mg1 sim;
  const Vector theta{1.0, 4.0, 0.2};
  std::vector<Vector> seq(16), par(16);
  for (std::size_t i = 0; i < 16; ++i) {
    RngStream r(13, i);
    seq[i] = sim.simulate(theta, r);
  }
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < 16; ++i)
    pool.emplace_back([&, i] {
      RngStream r(13, i);
      par[i] = sim.simulate(theta, r);
    });
  for (auto& t : pool) t.join();
  EXPECT_EQ(seq, par);
}

TEST(LvConstants, ScalesArePositive) {
  for (double s : lv_constants::summary_scale) EXPECT_GT(s, 0.0);
  EXPECT_EQ(lv_constants::n_simulations, 10000u);
}
