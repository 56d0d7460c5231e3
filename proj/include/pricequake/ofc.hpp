#pragma once

// Olami-Feder-Christensen spring-block automaton with open boundaries.
//
// Loading raises every block by the same amount until the most stressed one
// reaches the threshold; relaxation topples all critical blocks at once,
// handing a fraction `transfer` of each toppled force to its four nearest
// neighbours. Force pushed across the boundary is lost.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "pricequake/errors.hpp"

namespace pricequake::ofc {

class OfcLattice {
 public:
  OfcLattice(std::size_t side, double threshold, double transfer)
      : side_(side), threshold_(threshold), transfer_(transfer), force_(side * side, 0.0) {
    if (side == 0) throw ConfigError("OFC lattice side must be positive");
    if (!(threshold > 0.0)) throw ConfigError("OFC threshold must be positive");
    if (!(transfer >= 0.0 && transfer <= 0.25))
      throw ConfigError("OFC transfer fraction must lie in [0, 0.25]");
  }

  std::size_t side() const { return side_; }
  std::size_t sites() const { return force_.size(); }
  double threshold() const { return threshold_; }
  double transfer() const { return transfer_; }

  double& at(std::size_t row, std::size_t col) { return force_[row * side_ + col]; }
  double at(std::size_t row, std::size_t col) const { return force_[row * side_ + col]; }
  const std::vector<double>& forces() const { return force_; }

  void set_forces(std::vector<double> f) {
    if (f.size() != force_.size()) throw ConfigError("force grid has the wrong size");
    for (double v : f)
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("forces must be finite and >= 0");
    force_ = std::move(f);
  }

  bool critical(std::size_t k) const { return force_[k] >= threshold_; }
  bool any_critical() const {
    return std::any_of(force_.begin(), force_.end(), [&](double f) { return f >= threshold_; });
  }
  double max_force() const { return *std::max_element(force_.begin(), force_.end()); }
  double total_force() const {
    double s = 0.0;
    for (double f : force_) s += f;
    return s;
  }

 private:
  std::size_t side_;
  double threshold_;
  double transfer_;
  std::vector<double> force_;
};

// Raises all sites by threshold - max so the maximal site(s) sit exactly at the
// threshold. Returns the load. Ties all become critical together.
inline double uniform_load(OfcLattice& lattice) {
  const double fmax = lattice.max_force();
  const double fc = lattice.threshold();
  if (fmax > fc) throw ProtocolError("uniform_load called while a site is above threshold");
  const double load = fc - fmax;
  if (load == 0.0) return 0.0;
  for (std::size_t r = 0; r < lattice.side(); ++r) {
    for (std::size_t c = 0; c < lattice.side(); ++c) {
      double& f = lattice.at(r, c);
      f = (f == fmax) ? fc : f + load;
    }
  }
  return load;
}

struct AvalancheTrace {
  std::vector<std::vector<std::size_t>> generations;  // toppled site indices per generation
  std::size_t size = 0;                               // total topple events

  std::size_t duration() const { return generations.size(); }
};

inline AvalancheTrace relax(OfcLattice& lattice, std::size_t generation_cap = 1'000'000) {
  AvalancheTrace trace;
  const std::size_t n = lattice.side();
  const double alpha = lattice.transfer();
  std::vector<std::size_t> toppling;
  std::vector<double> released;
  for (std::size_t k = 0; k < lattice.sites(); ++k)
    if (lattice.critical(k)) toppling.push_back(k);
  if (toppling.empty()) throw ProtocolError("relax called with no critical site");

  while (!toppling.empty()) {
    if (trace.generations.size() >= generation_cap)
      throw RunawayError("OFC relaxation exceeded the generation cap");
    released.clear();
    for (std::size_t k : toppling) {
      released.push_back(lattice.at(k / n, k % n));
      lattice.at(k / n, k % n) = 0.0;
    }
    for (std::size_t t = 0; t < toppling.size(); ++t) {
      const std::size_t r = toppling[t] / n;
      const std::size_t c = toppling[t] % n;
      const double share = alpha * released[t];
      if (r > 0) lattice.at(r - 1, c) += share;
      if (r + 1 < n) lattice.at(r + 1, c) += share;
      if (c > 0) lattice.at(r, c - 1) += share;
      if (c + 1 < n) lattice.at(r, c + 1) += share;
    }
    trace.size += toppling.size();
    trace.generations.push_back(toppling);

    // Only neighbours of this generation can have crossed the threshold.
    std::vector<std::size_t> next;
    for (std::size_t k : toppling) {
      const std::size_t r = k / n;
      const std::size_t c = k % n;
      if (r > 0) next.push_back(k - n);
      if (r + 1 < n) next.push_back(k + n);
      if (c > 0) next.push_back(k - 1);
      if (c + 1 < n) next.push_back(k + 1);
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    next.erase(std::remove_if(next.begin(), next.end(),
                              [&](std::size_t k) { return !lattice.critical(k); }),
               next.end());
    toppling = std::move(next);
  }
  return trace;
}

struct OfcRunConfig {
  std::size_t num_avalanches = 0;
  std::uint64_t seed = 0;
  // Avalanches discarded before recording; negative selects 10 * side^2.
  long long warmup = -1;
  std::size_t generation_cap = 1'000'000;
  // Assert max F < threshold after every relaxation.
  bool check_invariant = true;
};

// Fills the lattice with forces drawn uniformly on [0, threshold).
inline void randomize(OfcLattice& lattice, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, lattice.threshold());
  std::vector<double> f(lattice.sites());
  for (auto& v : f) v = unif(rng);
  lattice.set_forces(std::move(f));
}

// Alternates load and relax; returns the recorded avalanche sizes.
inline std::vector<std::size_t> run_ofc(OfcLattice& lattice, const OfcRunConfig& cfg) {
  const std::size_t warmup = cfg.warmup < 0 ? 10 * lattice.side() * lattice.side()
                                            : static_cast<std::size_t>(cfg.warmup);
  std::vector<std::size_t> sizes;
  sizes.reserve(cfg.num_avalanches);
  for (std::size_t a = 0; a < warmup + cfg.num_avalanches; ++a) {
    uniform_load(lattice);
    const auto trace = relax(lattice, cfg.generation_cap);
    if (cfg.check_invariant && !(lattice.max_force() < lattice.threshold()))
      throw NumericalError("OFC post-relaxation invariant violated");
    if (a >= warmup) sizes.push_back(trace.size);
  }
  return sizes;
}

inline std::vector<std::size_t> run_ofc(std::size_t side, double transfer,
                                        const OfcRunConfig& cfg, double threshold = 1.0) {
  OfcLattice lattice(side, threshold, transfer);
  randomize(lattice, cfg.seed);
  return run_ofc(lattice, cfg);
}

}  // namespace pricequake::ofc
