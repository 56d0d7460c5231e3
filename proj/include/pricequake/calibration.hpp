#pragma once

// Maximum-likelihood calibration of (gamma, tau, R_C, sigma^2).
//
// Replaying observed returns through the stress dynamics leaves the local news
// terms eta as residuals, which the model says are i.i.d. Gaussian(0, sigma^2).
// For fixed (gamma, tau, R_C) the likelihood is maximized in closed form at
// sigma^2 = mean(eta^2), so the search runs over three coordinates only. The
// gate makes the likelihood piecewise constant in R_C, hence a grid followed
// by coordinate-wise refinement rather than a gradient method.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "pricequake/engine.hpp"
#include "pricequake/errors.hpp"
#include "pricequake/market_network.hpp"

namespace pricequake::calibration {

struct Axis {
  double lo = 1.0;
  double hi = 1.0;
  int points = 1;
  bool log_spaced = true;

  std::vector<double> values() const {
    std::vector<double> v;
    if (points < 1 || !(lo > 0.0) || !(hi >= lo)) return v;
    if (points == 1) return {lo};
    for (int k = 0; k < points; ++k) {
      const double f = static_cast<double>(k) / (points - 1);
      v.push_back(log_spaced ? lo * std::pow(hi / lo, f) : lo + (hi - lo) * f);
    }
    return v;
  }
  // Ratio between neighbouring log-spaced points.
  double step_ratio() const { return points > 1 ? std::pow(hi / lo, 1.0 / (points - 1)) : 1.0; }
};

struct SearchSpace {
  Axis gamma{0.1, 3.0, 20};
  Axis tau{1.0, 50.0, 20};
  Axis threshold{0.005, 0.10, 20};
  int refinements = 2;
  int refine_points = 9;  // per coordinate and refinement round
  unsigned threads = 0;   // 0 = hardware concurrency
  int warmup_days = 0;    // replay starts from a zero tensor; no events are dropped
};

struct Candidate {
  double gamma = 0.0;
  double tau = 0.0;
  double threshold = 0.0;
  double sigma2 = 0.0;  // profiled
  double log_likelihood = -std::numeric_limits<double>::infinity();
};

struct Moments {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;  // unbiased sample variance
  double excess_kurtosis = 0.0;
};

inline Moments moments(std::span<const double> x) {
  Moments m;
  m.count = x.size();
  if (x.empty()) return m;
  double s = 0.0;
  for (double v : x) s += v;
  m.mean = s / static_cast<double>(x.size());
  double m2 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - m.mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  const double n = static_cast<double>(x.size());
  m.variance = x.size() > 1 ? m2 / (n - 1.0) : 0.0;
  const double pop_var = m2 / n;
  m.excess_kurtosis = pop_var > 0.0 ? (m4 / n) / (pop_var * pop_var) - 3.0 : 0.0;
  return m;
}

struct HistogramRow {
  double center = 0.0;
  std::size_t returns = 0;
  std::size_t coupling = 0;
  std::size_t residuals = 0;
};

struct ResidualDiagnostic {
  std::vector<HistogramRow> histogram;
  Moments returns;
  Moments coupling;
  Moments residuals;
};

// Common-bin histogram of observed returns, coupling terms and residuals.
inline ResidualDiagnostic residual_diagnostic(std::span<const double> returns,
                                              std::span<const double> coupling,
                                              std::span<const double> residuals, int bins = 61) {
  if (residuals.size() < 100) throw InputError("residual diagnostic needs at least 100 residuals");
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  ResidualDiagnostic d;
  d.returns = moments(returns);
  d.coupling = moments(coupling);
  d.residuals = moments(residuals);
  double extent = 0.0;
  for (auto series : {returns, coupling, residuals})
    for (double v : series) extent = std::max(extent, std::abs(v));
  if (extent == 0.0) extent = 1.0;
  const double width = 2.0 * extent / bins;
  d.histogram.resize(static_cast<std::size_t>(bins));
  for (int b = 0; b < bins; ++b) d.histogram[static_cast<std::size_t>(b)].center = -extent + (b + 0.5) * width;
  const auto bin_of = [&](double v) {
    auto b = static_cast<long>(std::floor((v + extent) / width));
    return static_cast<std::size_t>(std::clamp(b, 0L, static_cast<long>(bins) - 1));
  };
  for (double v : returns) ++d.histogram[bin_of(v)].returns;
  for (double v : coupling) ++d.histogram[bin_of(v)].coupling;
  for (double v : residuals) ++d.histogram[bin_of(v)].residuals;
  return d;
}

namespace detail {

inline double gaussian_log_likelihood(double sum_sq, std::size_t count, double sigma2) {
  if (count == 0) return 0.0;
  if (sigma2 == 0.0)
    return sum_sq == 0.0 ? std::numeric_limits<double>::infinity()
                         : -std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(count);
  return -0.5 * n * std::log(2.0 * std::numbers::pi * sigma2) - 0.5 * sum_sq / sigma2;
}

}  // namespace detail

// Gaussian(0, sigma^2) log-likelihood of the replay residuals, with sigma taken
// from the candidate (per exchange when it carries a sigma list).
inline double log_likelihood(std::span<const std::optional<double>> observed,
                             const EventCalendar& calendar, std::span<const ExchangeSpec> exchanges,
                             const ModelParams& candidate) {
  validate(candidate, exchanges.size());
  if (candidate.noise_sds.empty()) {
    const CouplingWeights w(exchanges, candidate);
    const auto m = replay_moments(calendar, observed, candidate, w);
    return detail::gaussian_log_likelihood(m.sum_sq, m.count, candidate.noise_variance());
  }
  const auto rep = replay(calendar, observed, candidate, exchanges);
  double ll = 0.0;
  for (const auto& o : rep.outcomes) {
    const double s = candidate.sigma_for(o.event.exchange);
    ll += detail::gaussian_log_likelihood(o.noise * o.noise, 1, s * s);
  }
  return ll;
}

// Log-likelihood with sigma^2 profiled out; fills sigma2 and log_likelihood.
inline void profile(Candidate& c, std::span<const std::optional<double>> observed,
                    const EventCalendar& calendar, std::span<const ExchangeSpec> exchanges,
                    const ModelParams& base) {
  ModelParams p = base;
  p.cap_scale = c.gamma;
  p.zone_scale = c.tau;
  p.threshold = c.threshold;
  const CouplingWeights w(exchanges, p);
  const auto m = replay_moments(calendar, observed, p, w);
  c.sigma2 = m.count ? m.sum_sq / static_cast<double>(m.count) : 0.0;
  c.log_likelihood = detail::gaussian_log_likelihood(m.sum_sq, m.count, c.sigma2);
}

// For a fixed R_C the gates a replay opens do not depend on gamma or tau,
// because the tensor is driven by the observed returns alone. One pass records
// the open gates of every observed event; any (gamma, tau) is then scored
// from the record with the same arithmetic as a full replay.
struct GateRecord {
  double threshold = 0.0;
  std::vector<double> ret;
  std::vector<ExchangeId> exchange;
  std::vector<std::size_t> offset{0};  // entries of event e: [offset[e], offset[e + 1])
  std::vector<ExchangeId> counterpart;
  std::vector<double> stress;
};

inline GateRecord record_gates(std::span<const std::optional<double>> observed,
                               const EventCalendar& calendar, std::span<const ExchangeSpec> exchanges,
                               const ModelParams& params) {
  if (observed.size() != calendar.size())
    throw InputError("replay needs one observation slot per calendar event");
  GateRecord rec;
  rec.threshold = params.threshold;
  const CouplingWeights w(exchanges, params);
  StressTensor tensor(exchanges.size());
  struct Policy {
    std::span<const std::optional<double>> observed;
    GateRecord& rec;
    void before_group(std::size_t, const StressTensor&) {}
    bool participates(const MarketEvent& ev) { return observed[ev.seq].has_value(); }
    double resolve(const MarketEvent& ev, double) { return *observed[ev.seq]; }
    void emit(const MarketEvent& ev, double ret, double, std::span<const ActiveEntry> active,
              std::span<const TensorIndex>) {
      rec.ret.push_back(ret);
      rec.exchange.push_back(ev.exchange);
      for (const auto& a : active) {
        rec.counterpart.push_back(a.counterpart);
        rec.stress.push_back(a.stress);
      }
      rec.offset.push_back(rec.counterpart.size());
    }
  } policy{observed, rec};
  pricequake::detail::drive(calendar, params, w, tensor, policy);
  return rec;
}

inline ResidualMoments score(const GateRecord& rec, const CouplingWeights& w) {
  ResidualMoments m;
  for (std::size_t e = 0; e < rec.ret.size(); ++e) {
    const ExchangeId i = rec.exchange[e];
    const std::size_t lo = rec.offset[e], hi = rec.offset[e + 1];
    double sum = 0.0;
    for (std::size_t k = lo; k < hi; ++k) sum += w(i, rec.counterpart[k]) * rec.stress[k];
    const double coupling = hi > lo ? sum / static_cast<double>(hi - lo) : 0.0;
    const double eta = rec.ret[e] - coupling;
    ++m.count;
    m.sum += eta;
    m.sum_sq += eta * eta;
  }
  return m;
}

// profile() from a gate record of the candidate's threshold.
inline void profile(Candidate& c, const GateRecord& rec, std::span<const ExchangeSpec> exchanges,
                    const ModelParams& base) {
  if (c.threshold != rec.threshold) throw InputError("gate record belongs to another threshold");
  ModelParams p = base;
  p.cap_scale = c.gamma;
  p.zone_scale = c.tau;
  p.threshold = c.threshold;
  const auto m = score(rec, CouplingWeights(exchanges, p));
  c.sigma2 = m.count ? m.sum_sq / static_cast<double>(m.count) : 0.0;
  c.log_likelihood = detail::gaussian_log_likelihood(m.sum_sq, m.count, c.sigma2);
}

struct CalibrationResult {
  ModelParams params;
  double log_likelihood = 0.0;
  ResidualDiagnostic residual_summary;
  std::vector<Candidate> search_trace;
  bool flat = false;  // every evaluated candidate scored the same
};

namespace detail {

// Scores a batch, recording the gates once per distinct threshold.
inline void evaluate_all(std::vector<Candidate>& batch,
                         std::span<const std::optional<double>> observed,
                         const EventCalendar& calendar, std::span<const ExchangeSpec> exchanges,
                         const ModelParams& base, unsigned threads) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  std::vector<double> thresholds;
  for (const auto& c : batch) thresholds.push_back(c.threshold);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  for (double rc : thresholds) {
    ModelParams p = base;
    p.threshold = rc;
    const GateRecord rec = record_gates(observed, calendar, exchanges, p);
    std::vector<Candidate*> mine;
    for (auto& c : batch)
      if (c.threshold == rc) mine.push_back(&c);
    std::atomic<std::size_t> next{0};
    const auto work = [&] {
      for (std::size_t k = next++; k < mine.size(); k = next++) profile(*mine[k], rec, exchanges, base);
    };
    const unsigned t = std::min<unsigned>(threads, static_cast<unsigned>(mine.size()));
    if (t <= 1) {
      work();
      continue;
    }
    std::vector<std::jthread> pool;
    for (unsigned k = 0; k < t; ++k) pool.emplace_back(work);
  }
}

// Best by log-likelihood; the earliest wins ties so results are order-stable.
inline std::size_t best_index(std::span<const Candidate> batch) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < batch.size(); ++k)
    if (batch[k].log_likelihood > batch[best].log_likelihood) best = k;
  return best;
}

}  // namespace detail

inline CalibrationResult fit(std::span<const std::optional<double>> observed,
                             const EventCalendar& calendar, std::span<const ExchangeSpec> exchanges,
                             const SearchSpace& space, const ModelParams& base = {}) {
  validate(exchanges);
  const auto gs = space.gamma.values();
  const auto ts = space.tau.values();
  const auto rs = space.threshold.values();
  if (gs.empty() || ts.empty() || rs.empty()) throw ConfigError("calibration search space is empty");
  ModelParams fixed = base;
  fixed.noise_sds.clear();
  fixed.warmup_days = space.warmup_days;

  CalibrationResult result;
  std::vector<Candidate> batch;
  for (double g : gs)
    for (double t : ts)
      for (double r : rs) batch.push_back(Candidate{g, t, r});
  detail::evaluate_all(batch, observed, calendar, exchanges, fixed, space.threads);
  result.search_trace = batch;
  Candidate best = batch[detail::best_index(batch)];

  // Coordinate refinement: each round searches a shrinking log-window around
  // the incumbent along R_C, then gamma, then tau.
  double shrink = 1.0;
  for (int round = 0; round < space.refinements; ++round) {
    for (int axis = 0; axis < 3; ++axis) {
      const Axis& ax = axis == 0 ? space.threshold : axis == 1 ? space.gamma : space.tau;
      const double ratio = std::pow(ax.step_ratio(), shrink);
      if (ratio <= 1.0 || space.refine_points < 2) continue;
      const double centre = axis == 0 ? best.threshold : axis == 1 ? best.gamma : best.tau;
      batch.clear();
      for (int k = 0; k < space.refine_points; ++k) {
        const double f = -1.0 + 2.0 * k / (space.refine_points - 1);
        Candidate c = best;
        const double v = centre * std::pow(ratio, f);
        (axis == 0 ? c.threshold : axis == 1 ? c.gamma : c.tau) = v;
        batch.push_back(c);
      }
      detail::evaluate_all(batch, observed, calendar, exchanges, fixed, space.threads);
      result.search_trace.insert(result.search_trace.end(), batch.begin(), batch.end());
      const auto& challenger = batch[detail::best_index(batch)];
      if (challenger.log_likelihood > best.log_likelihood) best = challenger;
    }
    shrink /= static_cast<double>(space.refine_points - 1) / 2.0;
  }

  result.params = fixed;
  result.params.cap_scale = best.gamma;
  result.params.zone_scale = best.tau;
  result.params.threshold = best.threshold;
  result.params.noise_sd = std::sqrt(best.sigma2);
  result.log_likelihood = best.log_likelihood;

  const auto lo = std::min_element(result.search_trace.begin(), result.search_trace.end(),
                                   [](const Candidate& a, const Candidate& b) {
                                     return a.log_likelihood < b.log_likelihood;
                                   });
  result.flat = lo->log_likelihood == best.log_likelihood;

  const auto rep = replay(calendar, observed, result.params, exchanges);
  std::vector<double> rets, coup, res;
  for (const auto& o : rep.outcomes) {
    rets.push_back(o.ret);
    coup.push_back(o.coupling);
    res.push_back(o.noise);
  }
  if (res.size() >= 100) result.residual_summary = residual_diagnostic(rets, coup, res);
  return result;
}

}  // namespace pricequake::calibration
