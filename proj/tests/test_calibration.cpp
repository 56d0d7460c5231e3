#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "pricequake/calibration.hpp"
#include "support/gen.hpp"

using namespace pricequake;
using namespace pricequake::calibration;

namespace {

struct Sample {
  std::vector<ExchangeSpec> ex;
  EventCalendar cal;
  std::vector<std::optional<double>> obs;
};

Sample simulated(std::uint64_t seed, std::size_t n, int days, const ModelParams& base = {}) {
  pqtest::Gen gen(seed);
  Sample s;
  s.ex = gen.exchanges(n, false);
  s.cal = build_calendar(s.ex, days);
  ModelParams p = base;
  p.seed = seed;
  s.obs = observed_returns(s.cal, simulate(s.cal, p, s.ex).outcomes);
  return s;
}

double normal_logpdf(double x, double var) {
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - x * x / (2.0 * var);
}

SearchSpace small_space() {
  SearchSpace s;
  s.gamma = Axis{0.2, 2.0, 4};
  s.tau = Axis{5.0, 40.0, 4};
  s.threshold = Axis{0.015, 0.06, 4};
  s.refinements = 1;
  s.refine_points = 5;
  s.threads = 1;
  return s;
}

}  // namespace

TEST(Likelihood, ZeroReturns) {
  pqtest::Gen gen(71);
  const auto ex = gen.exchanges(3);
  const auto cal = build_calendar(ex, 10);
  std::vector<std::optional<double>> obs(cal.size(), 0.0);
  ModelParams p;
  const double expect = static_cast<double>(cal.size()) * std::log(1.0 / std::sqrt(2.0 * std::numbers::pi * 0.0006));
  EXPECT_NEAR(log_likelihood(obs, cal, ex, p), expect, 1e-9 * std::abs(expect));
}

TEST(Likelihood, ClosedGatesScoreTheRawReturns) {
  auto s = simulated(72, 4, 30);
  ModelParams p;
  p.threshold = 1e6;
  double expect = 0.0;
  for (const auto& v : s.obs)
    if (v) expect += normal_logpdf(*v, p.noise_variance());
  EXPECT_NEAR(log_likelihood(s.obs, s.cal, s.ex, p), expect, 1e-9 * std::abs(expect));
}

TEST(Likelihood, PerExchangeSigmas) {
  auto s = simulated(73, 3, 20);
  ModelParams p;
  p.noise_sds = {0.01, 0.02, 0.03};
  const auto rep = replay(s.cal, s.obs, p, s.ex);
  double expect = 0.0;
  for (const auto& o : rep.outcomes) expect += normal_logpdf(o.noise, std::pow(p.noise_sds[o.event.exchange], 2));
  EXPECT_NEAR(log_likelihood(s.obs, s.cal, s.ex, p), expect, 1e-9 * std::abs(expect));
}

TEST(Likelihood, ZeroSigma) {
  auto s = simulated(74, 3, 5);
  ModelParams p;
  p.noise_sd = 0.0;
  EXPECT_EQ(log_likelihood(s.obs, s.cal, s.ex, p), -std::numeric_limits<double>::infinity());
}

TEST(Profile, SigmaIsTheMeanSquaredResidual) {
  auto s = simulated(75, 5, 40);
  Candidate c{1.1, 12.0, 0.025};
  profile(c, s.obs, s.cal, s.ex, ModelParams{});
  ModelParams p;
  p.cap_scale = c.gamma;
  p.zone_scale = c.tau;
  p.threshold = c.threshold;
  const auto res = replay(s.cal, s.obs, p, s.ex).residuals();
  double sq = 0.0;
  for (double r : res) sq += r * r;
  EXPECT_NEAR(c.sigma2, sq / static_cast<double>(res.size()), 1e-15);
  p.noise_sd = std::sqrt(c.sigma2);
  EXPECT_NEAR(c.log_likelihood, log_likelihood(s.obs, s.cal, s.ex, p), 1e-8 * std::abs(c.log_likelihood));
  // and the profiled sigma is the maximiser
  for (double f : {0.9, 1.1}) {
    p.noise_sd = std::sqrt(c.sigma2 * f);
    EXPECT_LT(log_likelihood(s.obs, s.cal, s.ex, p), c.log_likelihood);
  }
}

TEST(GateRecords, ScoreMatchesReplayExactly) {
  pqtest::Gen gen(76);
  for (int trial = 0; trial < 10; ++trial) {
    auto s = simulated(gen.bits(), static_cast<std::size_t>(gen.integer(2, 9)), 30);
    for (auto& v : s.obs)
      if (gen.coin(0.05)) v.reset();
    ModelParams p;
    p.threshold = gen.uniform(0.01, 0.05);
    const auto rec = record_gates(s.obs, s.cal, s.ex, p);
    for (int k = 0; k < 5; ++k) {
      p.cap_scale = gen.uniform(0.1, 3.0);
      p.zone_scale = gen.uniform(1.0, 50.0);
      const CouplingWeights w(s.ex, p);
      const auto a = score(rec, w);
      const auto b = replay_moments(s.cal, s.obs, p, w);
      ASSERT_EQ(a.count, b.count);
      ASSERT_EQ(a.sum, b.sum);
      ASSERT_EQ(a.sum_sq, b.sum_sq);
    }
  }
}

TEST(GateRecords, ThresholdMismatchRejected) {
  auto s = simulated(77, 3, 5);
  const auto rec = record_gates(s.obs, s.cal, s.ex, ModelParams{});
  Candidate c{0.8, 20.0, 0.04};
  EXPECT_THROW(profile(c, rec, s.ex, ModelParams{}), InputError);
}

TEST(Fit, SingleExchangeIsFlat) {
  auto s = simulated(78, 1, 300);
  const auto r = fit(s.obs, s.cal, s.ex, small_space());
  EXPECT_TRUE(r.flat);
  EXPECT_EQ(r.residual_summary.residuals.count, 600u);
  EXPECT_EQ(r.residual_summary.coupling.variance, 0.0);
  EXPECT_NEAR(r.params.noise_variance(), 0.0006, 0.0001);
}

TEST(Fit, RefinementNeverLosesAndIsReproducible) {
  auto s = simulated(79, 6, 150);
  auto space = small_space();
  const auto r = fit(s.obs, s.cal, s.ex, space);
  EXPECT_FALSE(r.flat);
  double grid_best = -INFINITY;
  for (std::size_t k = 0; k < 64; ++k) grid_best = std::max(grid_best, r.search_trace[k].log_likelihood);
  EXPECT_GE(r.log_likelihood, grid_best);
  for (const auto& c : r.search_trace) EXPECT_LE(c.log_likelihood, r.log_likelihood);

  space.threads = 4;
  const auto again = fit(s.obs, s.cal, s.ex, space);
  EXPECT_EQ(again.log_likelihood, r.log_likelihood);
  EXPECT_EQ(again.params.threshold, r.params.threshold);
  EXPECT_EQ(again.params.cap_scale, r.params.cap_scale);
  EXPECT_EQ(again.params.zone_scale, r.params.zone_scale);
  EXPECT_EQ(again.search_trace.size(), r.search_trace.size());
}

TEST(Fit, TruthBeatsDistantThresholds) {
  auto s = simulated(80, 10, 300);
  ModelParams truth;
  const double ll = log_likelihood(s.obs, s.cal, s.ex, truth);
  for (double rc : {0.015, 0.06}) {
    ModelParams q = truth;
    q.threshold = rc;
    EXPECT_LT(log_likelihood(s.obs, s.cal, s.ex, q), ll) << rc;
  }
}

TEST(Fit, EmptySpaceRejected) {
  auto s = simulated(81, 2, 5);
  auto space = small_space();
  space.tau.points = 0;
  EXPECT_THROW(fit(s.obs, s.cal, s.ex, space), ConfigError);
  space = small_space();
  space.gamma = Axis{2.0, 1.0, 3};
  EXPECT_THROW(fit(s.obs, s.cal, s.ex, space), ConfigError);
}

TEST(Axes, Values) {
  const Axis a{1.0, 100.0, 3};
  const auto v = a.values();
  ASSERT_EQ(v.size(), 3u);
  EXPECT_DOUBLE_EQ(v[1], 10.0);
  EXPECT_DOUBLE_EQ(a.step_ratio(), 10.0);
  EXPECT_EQ(Axis({0.5, 0.5, 1}).values(), std::vector<double>{0.5});
  Axis lin{1.0, 3.0, 3, false};
  EXPECT_DOUBLE_EQ(lin.values()[1], 2.0);
}

TEST(Diagnostic, MomentsAndHistogram) {
  pqtest::Gen gen(82);
  std::vector<double> r, c, e;
  for (int k = 0; k < 500; ++k) {
    e.push_back(gen.normal(0.02));
    c.push_back(gen.coin(0.2) ? gen.normal(0.03) : 0.0);
    r.push_back(e.back() + c.back());
  }
  const auto d = residual_diagnostic(r, c, e);
  std::size_t nr = 0, nc = 0, ne = 0;
  for (const auto& h : d.histogram) {
    nr += h.returns;
    nc += h.coupling;
    ne += h.residuals;
  }
  EXPECT_EQ(nr, 500u);
  EXPECT_EQ(nc, 500u);
  EXPECT_EQ(ne, 500u);
  double mean = 0.0;
  for (double v : e) mean += v;
  mean /= 500.0;
  double var = 0.0;
  for (double v : e) var += (v - mean) * (v - mean);
  var /= 499.0;
  EXPECT_NEAR(d.residuals.mean, mean, 1e-15);
  EXPECT_NEAR(d.residuals.variance, var, 1e-15);
  EXPECT_GT(d.returns.excess_kurtosis, d.residuals.excess_kurtosis);
  EXPECT_THROW(residual_diagnostic(r, c, std::vector<double>(99, 0.0)), InputError);
}
