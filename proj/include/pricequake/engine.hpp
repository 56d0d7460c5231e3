#pragma once

// Price-quake dynamics on the N x N stress tensor.
//
// Entry (i, j) of the tensor accumulates the returns of exchange j that
// exchange i has not yet priced in. When i opens or closes, every entry of
// row i whose magnitude exceeds the threshold enters i's return, weighted by
// capitalization and time-zone proximity, and is reset. The resulting return
// is then pushed down column i to every other exchange; a column entry that is
// already over threshold when the push arrives is reset before the addition.
//
// Events of one simultaneous group are evaluated against the same pre-group
// tensor; all resets of the group are applied before any push.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pricequake/errors.hpp"
#include "pricequake/market_network.hpp"

namespace pricequake {

struct ModelParams {
  double threshold = 0.03;                   // R_C
  double zone_scale = 20.0;                  // tau, hours
  double cap_scale = 0.8;                    // gamma
  double noise_sd = 0.024494897427831780;    // sigma, sqrt(0.0006)
  std::uint64_t seed = 0;
  std::vector<double> noise_sds;             // optional per-exchange sigma_i
  int warmup_days = 250;
  bool circular_zones = false;

  // Reference values (a maximum-likelihood fit to daily index data).
  static ModelParams reference() { return ModelParams{}; }

  double noise_variance() const { return noise_sd * noise_sd; }
  double sigma_for(ExchangeId i) const { return noise_sds.empty() ? noise_sd : noise_sds[i]; }
};

inline void validate(const ModelParams& p, std::size_t num_exchanges) {
  if (!(p.threshold > 0.0)) throw ConfigError("threshold R_C must be positive");
  if (!(p.zone_scale > 0.0)) throw ConfigError("zone scale tau must be positive");
  if (!(p.cap_scale > 0.0)) throw ConfigError("capitalization scale gamma must be positive");
  if (!(p.noise_sd >= 0.0) || !std::isfinite(p.noise_sd))
    throw ConfigError("noise standard deviation must be finite and >= 0");
  if (!p.noise_sds.empty()) {
    if (p.noise_sds.size() != num_exchanges)
      throw ConfigError("per-exchange sigma list has " + std::to_string(p.noise_sds.size()) +
                        " entries for " + std::to_string(num_exchanges) + " exchanges");
    for (double s : p.noise_sds)
      if (!(s >= 0.0) || !std::isfinite(s))
        throw ConfigError("per-exchange sigma must be finite and >= 0");
  }
  if (p.warmup_days < 0) throw ConfigError("warm-up days must be >= 0");
}

// Capitalization weight 1 - exp(-K_j / (K_i gamma)): how strongly j moves i.
inline double alpha_weight(const ExchangeSpec& i, const ExchangeSpec& j, const ModelParams& p) {
  return -std::expm1(-j.capitalization / (i.capitalization * p.cap_scale));
}

// Time-zone weight exp(-|z_i - z_j| / tau).
inline double beta_weight(const ExchangeSpec& i, const ExchangeSpec& j, const ModelParams& p) {
  return std::exp(-time_zone_gap(i, j, p.circular_zones) / p.zone_scale);
}

// Precomputed alpha_ij * beta_ij; the diagonal is zero.
class CouplingWeights {
 public:
  CouplingWeights() = default;
  CouplingWeights(std::span<const ExchangeSpec> exchanges, const ModelParams& p)
      : n_(exchanges.size()), w_(n_ * n_, 0.0) {
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        if (i != j)
          w_[i * n_ + j] =
              alpha_weight(exchanges[i], exchanges[j], p) * beta_weight(exchanges[i], exchanges[j], p);
  }

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return w_[i * n_ + j]; }

 private:
  std::size_t n_ = 0;
  std::vector<double> w_;
};

class StressTensor {
 public:
  StressTensor() = default;
  explicit StressTensor(std::size_t n) : n_(n), cum_(n * n, 0.0) {}

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return cum_[i * n_ + j]; }

  void set(std::size_t i, std::size_t j, double v) {
    if (i == j) throw ProtocolError("stress tensor diagonal is fixed at zero");
    cum_[i * n_ + j] = v;
  }
  void add(std::size_t i, std::size_t j, double v) { cum_[i * n_ + j] += v; }
  std::span<const double> raw() const { return cum_; }

  friend bool operator==(const StressTensor&, const StressTensor&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> cum_;
};

struct ActiveEntry {
  ExchangeId counterpart = 0;  // j
  double stress = 0.0;         // pre-event R^cum_ij
  double weight = 0.0;         // alpha_ij * beta_ij

  double contribution() const { return weight * stress; }
  friend bool operator==(const ActiveEntry&, const ActiveEntry&) = default;
};

struct TensorIndex {
  ExchangeId row = 0;
  ExchangeId col = 0;
  friend bool operator==(const TensorIndex&, const TensorIndex&) = default;
};

struct EventOutcome {
  MarketEvent event;
  double ret = 0.0;       // R_i(t)
  double noise = 0.0;     // eta_i(t); the residual in replay
  double coupling = 0.0;  // (1/N*) sum over the active set of alpha beta R^cum
  std::vector<ActiveEntry> active;
  std::vector<TensorIndex> resets;
  bool warmup = false;

  std::size_t n_active() const { return active.size(); }
  friend bool operator==(const EventOutcome&, const EventOutcome&) = default;
};

namespace detail {

// Row i of the pre-event tensor: gated entries and the coupling term.
inline double gather_active(const StressTensor& t, ExchangeId i, const ModelParams& p,
                            const CouplingWeights& w, std::vector<ActiveEntry>& active) {
  active.clear();
  double sum = 0.0;
  for (std::size_t j = 0; j < t.size(); ++j) {
    if (j == i) continue;
    const double r = t(i, j);
    if (std::abs(r) > p.threshold) {
      active.push_back(ActiveEntry{j, r, w(i, j)});
      sum += w(i, j) * r;
    }
  }
  return active.empty() ? 0.0 : sum / static_cast<double>(active.size());
}

struct PendingPush {
  ExchangeId exchange;
  double ret;
};

// Walks the calendar. The policy decides, per event, whether it takes part and
// what its return is, and receives each evaluated event.
//
//   bool participates(const MarketEvent&)
//   double resolve(const MarketEvent&, double coupling)      -> return R_i
//   void emit(const MarketEvent&, double ret, double coupling,
//             std::span<const ActiveEntry>, std::span<const TensorIndex> resets)
//   void before_group(std::size_t g, const StressTensor&)     (snapshot hook)
template <class Policy>
void drive(const EventCalendar& calendar, const ModelParams& p, const CouplingWeights& w,
           StressTensor& tensor, Policy& policy) {
  const std::size_t n = tensor.size();
  std::vector<ActiveEntry> active;
  std::vector<TensorIndex> resets;
  std::vector<TensorIndex> group_resets;
  std::vector<PendingPush> pushes;
  for (std::size_t g = 0; g < calendar.groups().size(); ++g) {
    policy.before_group(g, tensor);
    group_resets.clear();
    pushes.clear();
    for (const auto& ev : calendar.group_events(g)) {
      if (!policy.participates(ev)) continue;
      const ExchangeId i = ev.exchange;
      const double coupling = gather_active(tensor, i, p, w, active);
      const double ret = policy.resolve(ev, coupling);
      if (!std::isfinite(ret))
        throw NumericalError("non-finite return at event " + std::to_string(ev.seq));
      resets.clear();
      for (const auto& a : active) resets.push_back(TensorIndex{i, a.counterpart});
      for (std::size_t k = 0; k < n; ++k)
        if (k != i && std::abs(tensor(k, i)) > p.threshold) resets.push_back(TensorIndex{k, i});
      group_resets.insert(group_resets.end(), resets.begin(), resets.end());
      pushes.push_back(PendingPush{i, ret});
      policy.emit(ev, ret, coupling, active, resets);
    }
    for (const auto& r : group_resets) tensor.set(r.row, r.col, 0.0);
    for (const auto& push : pushes)
      for (std::size_t k = 0; k < n; ++k)
        if (k != push.exchange) tensor.add(k, push.exchange, push.ret);
  }
}

inline std::size_t warmup_event_count(const EventCalendar& calendar, int warmup_days) {
  std::size_t count = 0;
  for (const auto& ev : calendar.events())
    if (ev.day < warmup_days) ++count;
  return count;
}

}  // namespace detail

// One event against a tensor: returns the outcome and the post-event tensor.
inline std::pair<EventOutcome, StressTensor> evaluate_event(const StressTensor& tensor,
                                                            const MarketEvent& event, double news,
                                                            const ModelParams& p,
                                                            const CouplingWeights& w) {
  if (!std::isfinite(news)) throw InputError("news term must be finite");
  if (event.exchange >= tensor.size()) throw InputError("event exchange outside the tensor");
  EventOutcome out;
  out.event = event;
  out.coupling = detail::gather_active(tensor, event.exchange, p, w, out.active);
  out.noise = news;
  out.ret = out.coupling + news;
  if (!std::isfinite(out.ret)) throw NumericalError("non-finite return");
  StressTensor next = tensor;
  const ExchangeId i = event.exchange;
  for (const auto& a : out.active) out.resets.push_back(TensorIndex{i, a.counterpart});
  for (std::size_t k = 0; k < tensor.size(); ++k)
    if (k != i && std::abs(tensor(k, i)) > p.threshold) out.resets.push_back(TensorIndex{k, i});
  for (const auto& r : out.resets) next.set(r.row, r.col, 0.0);
  for (std::size_t k = 0; k < tensor.size(); ++k)
    if (k != i) next.add(k, i, out.ret);
  return {std::move(out), std::move(next)};
}

struct PricePoint {
  std::size_t seq = 0;
  double price = 1.0;
  double ret = 0.0;
};

// Per exchange, P_i(t) = P_i(t-1) exp(R_i(t)) starting from initial_price.
struct PriceSeries {
  std::vector<std::vector<PricePoint>> by_exchange;
};

// Gaussian local news, one independent stream per exchange derived from the
// top-level seed and the exchange id, consumed in that exchange's event order.
class GaussianNews {
 public:
  GaussianNews(const ModelParams& p, std::size_t num_exchanges) {
    streams_.reserve(num_exchanges);
    sigmas_.reserve(num_exchanges);
    for (std::size_t i = 0; i < num_exchanges; ++i) {
      std::seed_seq seq{static_cast<std::uint32_t>(p.seed), static_cast<std::uint32_t>(p.seed >> 32),
                        static_cast<std::uint32_t>(i), 0x70717561u};
      streams_.emplace_back(seq);
      sigmas_.push_back(p.sigma_for(i));
    }
    normals_.resize(num_exchanges);
  }

  double operator()(const MarketEvent& ev) {
    const double z = normals_[ev.exchange](streams_[ev.exchange]);
    return sigmas_[ev.exchange] * z;
  }

 private:
  std::vector<std::mt19937_64> streams_;
  std::vector<std::normal_distribution<double>> normals_;
  std::vector<double> sigmas_;
};

struct SimulationOptions {
  // Starting tensor; defaults to all zeros.
  std::optional<StressTensor> initial_tensor;
  // Replaces the Gaussian news streams (hand-built scenarios, sign-flip checks).
  std::function<double(const MarketEvent&)> news;
  // Observes the tensor before each simultaneous group.
  std::function<void(std::size_t group, const StressTensor&)> on_group;
  double initial_price = 1.0;
};

struct SimulationResult {
  std::vector<EventOutcome> outcomes;
  PriceSeries prices;
  std::size_t warmup_events = 0;  // leading outcomes flagged warmup
  StressTensor final_tensor;

  std::span<const EventOutcome> steady_state() const {
    return std::span<const EventOutcome>(outcomes).subspan(warmup_events);
  }
};

inline SimulationResult simulate(const EventCalendar& calendar, const ModelParams& params,
                                 std::span<const ExchangeSpec> exchanges,
                                 const SimulationOptions& options = {}) {
  validate(exchanges);
  validate(params, exchanges.size());
  if (calendar.exchange_count() != exchanges.size())
    throw ConfigError("calendar and exchange list disagree on the exchange count");
  const CouplingWeights weights(exchanges, params);
  StressTensor tensor = options.initial_tensor.value_or(StressTensor(exchanges.size()));
  if (tensor.size() != exchanges.size()) throw ConfigError("initial tensor has the wrong size");

  SimulationResult result;
  result.outcomes.reserve(calendar.size());
  result.warmup_events = detail::warmup_event_count(calendar, params.warmup_days);
  result.prices.by_exchange.resize(exchanges.size());
  std::vector<double> price(exchanges.size(), options.initial_price);
  GaussianNews gaussian(params, exchanges.size());

  struct Policy {
    const SimulationOptions& opt;
    GaussianNews& gaussian;
    SimulationResult& result;
    std::vector<double>& price;
    double pending_news = 0.0;

    void before_group(std::size_t g, const StressTensor& t) {
      if (opt.on_group) opt.on_group(g, t);
    }
    bool participates(const MarketEvent&) { return true; }
    double resolve(const MarketEvent& ev, double coupling) {
      pending_news = opt.news ? opt.news(ev) : gaussian(ev);
      if (!std::isfinite(pending_news)) throw InputError("news term must be finite");
      return coupling + pending_news;
    }
    void emit(const MarketEvent& ev, double ret, double coupling,
              std::span<const ActiveEntry> active, std::span<const TensorIndex> resets) {
      EventOutcome out;
      out.event = ev;
      out.ret = ret;
      out.noise = pending_news;
      out.coupling = coupling;
      out.active.assign(active.begin(), active.end());
      out.resets.assign(resets.begin(), resets.end());
      out.warmup = result.outcomes.size() < result.warmup_events;
      result.outcomes.push_back(std::move(out));
      price[ev.exchange] *= std::exp(ret);
      result.prices.by_exchange[ev.exchange].push_back(PricePoint{ev.seq, price[ev.exchange], ret});
    }
  } policy{options, gaussian, result, price};

  detail::drive(calendar, params, weights, tensor, policy);
  result.final_tensor = std::move(tensor);
  return result;
}

struct ReplayResult {
  std::vector<EventOutcome> outcomes;  // one per observed event; noise holds the residual

  std::vector<double> residuals() const {
    std::vector<double> r;
    r.reserve(outcomes.size());
    for (const auto& o : outcomes) r.push_back(o.noise);
    return r;
  }
};

// Drives the tensor with observed returns. observed[k] belongs to
// calendar.events()[k]; empty entries are skipped as if the event had not
// happened.
inline ReplayResult replay(const EventCalendar& calendar,
                           std::span<const std::optional<double>> observed,
                           const ModelParams& params, std::span<const ExchangeSpec> exchanges) {
  validate(exchanges);
  validate(params, exchanges.size());
  if (observed.size() != calendar.size())
    throw InputError("replay needs one observation slot per calendar event (" +
                     std::to_string(calendar.size()) + "), got " + std::to_string(observed.size()));
  for (const auto& v : observed)
    if (v && !std::isfinite(*v)) throw InputError("observed return must be finite");
  const CouplingWeights weights(exchanges, params);
  StressTensor tensor(exchanges.size());
  ReplayResult result;
  const std::size_t warmup = detail::warmup_event_count(calendar, params.warmup_days);

  struct Policy {
    std::span<const std::optional<double>> observed;
    ReplayResult& result;
    std::size_t warmup;

    void before_group(std::size_t, const StressTensor&) {}
    bool participates(const MarketEvent& ev) { return observed[ev.seq].has_value(); }
    double resolve(const MarketEvent& ev, double) { return *observed[ev.seq]; }
    void emit(const MarketEvent& ev, double ret, double coupling,
              std::span<const ActiveEntry> active, std::span<const TensorIndex> resets) {
      EventOutcome out;
      out.event = ev;
      out.ret = ret;
      out.coupling = coupling;
      out.noise = ret - coupling;
      out.active.assign(active.begin(), active.end());
      out.resets.assign(resets.begin(), resets.end());
      out.warmup = ev.seq < warmup;
      result.outcomes.push_back(std::move(out));
    }
  } policy{observed, result, warmup};

  detail::drive(calendar, params, weights, tensor, policy);
  return result;
}

inline ReplayResult replay(const EventCalendar& calendar, std::span<const double> observed,
                           const ModelParams& params, std::span<const ExchangeSpec> exchanges) {
  std::vector<std::optional<double>> wrapped(observed.begin(), observed.end());
  return replay(calendar, wrapped, params, exchanges);
}

// Returns of a simulation laid out per calendar event, for feeding replay.
inline std::vector<std::optional<double>> observed_returns(const EventCalendar& calendar,
                                                           std::span<const EventOutcome> outcomes) {
  std::vector<std::optional<double>> out(calendar.size());
  for (const auto& o : outcomes) out[o.event.seq] = o.ret;
  return out;
}

// Sum of squared residuals over observed events, without materializing
// outcomes. Used by the likelihood search.
struct ResidualMoments {
  std::size_t count = 0;
  double sum = 0.0;
  double sum_sq = 0.0;
};

inline ResidualMoments replay_moments(const EventCalendar& calendar,
                                      std::span<const std::optional<double>> observed,
                                      const ModelParams& params, const CouplingWeights& weights) {
  if (observed.size() != calendar.size())
    throw InputError("replay needs one observation slot per calendar event");
  // Same arithmetic as drive(), on a flat array. A group of one event needs no
  // snapshot, so its row reset and column push are done in place.
  const std::size_t n = calendar.exchange_count();
  const double rc = params.threshold;
  std::vector<double> t(n * n, 0.0);
  std::vector<double> w(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) w[i * n + j] = weights(i, j);
  ResidualMoments m;
  const auto tally = [&m](double eta) {
    ++m.count;
    m.sum += eta;
    m.sum_sq += eta * eta;
  };
  const auto coupling_of = [&](std::size_t i) {
    double sum = 0.0;
    std::size_t active = 0;
    const double* row = &t[i * n];
    const double* wr = &w[i * n];
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(row[j]) > rc) {
        sum += wr[j] * row[j];
        ++active;
      }
    }
    return active ? sum / static_cast<double>(active) : 0.0;
  };
  std::vector<std::pair<ExchangeId, double>> pushes;
  std::vector<std::size_t> zeroes;
  for (const auto& g : calendar.groups()) {
    const auto evs = calendar.events().subspan(g.begin, g.size());
    if (evs.size() == 1) {
      const auto& ev = evs.front();
      if (!observed[ev.seq]) continue;
      const std::size_t i = ev.exchange;
      const double ret = *observed[ev.seq];
      tally(ret - coupling_of(i));
      double* row = &t[i * n];
      for (std::size_t j = 0; j < n; ++j)
        if (std::abs(row[j]) > rc) row[j] = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        if (k == i) continue;
        double& v = t[k * n + i];
        v = (std::abs(v) > rc ? 0.0 : v) + ret;
      }
      continue;
    }
    pushes.clear();
    zeroes.clear();
    for (const auto& ev : evs) {
      if (!observed[ev.seq]) continue;
      const std::size_t i = ev.exchange;
      const double ret = *observed[ev.seq];
      tally(ret - coupling_of(i));
      for (std::size_t j = 0; j < n; ++j)
        if (std::abs(t[i * n + j]) > rc) zeroes.push_back(i * n + j);
      for (std::size_t k = 0; k < n; ++k)
        if (k != i && std::abs(t[k * n + i]) > rc) zeroes.push_back(k * n + i);
      pushes.emplace_back(i, ret);
    }
    for (auto z : zeroes) t[z] = 0.0;
    for (const auto& [i, ret] : pushes)
      for (std::size_t k = 0; k < n; ++k)
        if (k != i) t[k * n + i] += ret;
  }
  return m;
}

}  // namespace pricequake
