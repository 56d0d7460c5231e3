#pragma once

// Aggregate statistics over quake records: counts and averages per sign,
// criticality roles per exchange, degree balance, source ranking, spread per
// source, and log-binned size/duration distributions. CSV writers mirror the
// published table layouts.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pricequake/detail/text.hpp"
#include "pricequake/detector.hpp"
#include "pricequake/errors.hpp"

namespace pricequake::stats {

struct SummaryRow {
  std::size_t count = 0;
  double mean_members = 0.0;
  double mean_duration_days = 0.0;
};

struct QuakeSummary {
  SummaryRow negative;
  SummaryRow positive;
  SummaryRow total;
};

inline QuakeSummary summarize(std::span<const AvalancheRecord> records) {
  QuakeSummary s;
  double members[3] = {0, 0, 0}, days[3] = {0, 0, 0};
  for (const auto& r : records) {
    auto& row = r.sign == Sign::Negative ? s.negative : s.positive;
    const int k = r.sign == Sign::Negative ? 0 : 1;
    ++row.count;
    ++s.total.count;
    members[k] += static_cast<double>(r.size());
    days[k] += r.duration_days;
    members[2] += static_cast<double>(r.size());
    days[2] += r.duration_days;
  }
  const auto finish = [](SummaryRow& row, double m, double d) {
    if (row.count == 0) return;
    row.mean_members = m / static_cast<double>(row.count);
    row.mean_duration_days = d / static_cast<double>(row.count);
  };
  finish(s.negative, members[0], days[0]);
  finish(s.positive, members[1], days[1]);
  finish(s.total, members[2], days[2]);
  return s;
}

struct RoleCounts {
  std::size_t not_influenced_not_impacting = 0;
  std::size_t not_influenced_impacting = 0;
  std::size_t influenced = 0;

  std::size_t total() const { return not_influenced_not_impacting + not_influenced_impacting + influenced; }
};

struct RoleRow {
  RoleCounts positive;
  RoleCounts negative;
  std::size_t total() const { return positive.total() + negative.total(); }
};

struct RoleTable {
  std::vector<RoleRow> rows;  // by exchange id
};

// Each critical node-event (exchange, event, sign) lands in exactly one role.
inline RoleTable role_counts(std::span<const AvalancheRecord> records,
                             std::span<const CriticalityMark> marks, std::size_t num_exchanges) {
  using Key = std::pair<std::size_t, Sign>;  // (event seq, sign)
  std::set<Key> influenced, impacting;
  for (const auto& r : records) {
    for (const auto& e : r.edges) {
      influenced.insert({e.at.seq, r.sign});
      impacting.insert({e.from_event.seq, r.sign});
    }
  }
  std::set<std::pair<Key, ExchangeId>> critical;
  for (const auto& m : marks) critical.insert({{m.event.seq, m.sign}, m.event.exchange});

  RoleTable t;
  t.rows.resize(num_exchanges);
  for (const auto& [key, ex] : critical) {
    if (ex >= num_exchanges) throw InputError("mark references an unknown exchange");
    auto& counts = key.second == Sign::Positive ? t.rows[ex].positive : t.rows[ex].negative;
    if (influenced.count(key))
      ++counts.influenced;
    else if (impacting.count(key))
      ++counts.not_influenced_impacting;
    else
      ++counts.not_influenced_not_impacting;
  }
  return t;
}

struct DegreeCell {
  double in = 0.0;
  double out = 0.0;
  double delta() const { return in - out; }
};

struct DegreeRow {
  DegreeCell positive;
  DegreeCell negative;
  DegreeCell all;
};

struct DegreeTable {
  std::vector<DegreeRow> rows;
  DegreeRow average;  // network-wide mean over exchanges
};

// Per-quake in/out-degree of every exchange, averaged over all quakes of the
// sign (an exchange absent from a quake contributes zero).
inline DegreeTable degree_stats(std::span<const AvalancheRecord> records, std::size_t num_exchanges) {
  struct Tally {
    std::vector<long long> in, out;
    long long total_in = 0, total_out = 0;
    std::size_t quakes = 0;
  };
  Tally pos{std::vector<long long>(num_exchanges), std::vector<long long>(num_exchanges)};
  Tally neg = pos, all = pos;
  for (const auto& r : records) {
    auto& t = r.sign == Sign::Positive ? pos : neg;
    ++t.quakes;
    ++all.quakes;
    for (const auto& e : r.edges) {
      if (e.from >= num_exchanges || e.to >= num_exchanges)
        throw InputError("edge references an unknown exchange");
      for (Tally* x : {&t, &all}) {
        ++x->out[e.from];
        ++x->in[e.to];
        ++x->total_out;
        ++x->total_in;
      }
    }
  }
  DegreeTable table;
  table.rows.resize(num_exchanges);
  const auto mean = [](long long v, std::size_t n) {
    return n ? static_cast<double>(v) / static_cast<double>(n) : 0.0;
  };
  for (std::size_t k = 0; k < num_exchanges; ++k) {
    table.rows[k].positive = {mean(pos.in[k], pos.quakes), mean(pos.out[k], pos.quakes)};
    table.rows[k].negative = {mean(neg.in[k], neg.quakes), mean(neg.out[k], neg.quakes)};
    table.rows[k].all = {mean(all.in[k], all.quakes), mean(all.out[k], all.quakes)};
  }
  // Integer totals keep the network-wide balance exact.
  const std::size_t n = num_exchanges;
  table.average.positive = {mean(pos.total_in, pos.quakes * n), mean(pos.total_out, pos.quakes * n)};
  table.average.negative = {mean(neg.total_in, neg.quakes * n), mean(neg.total_out, neg.quakes * n)};
  table.average.all = {mean(all.total_in, all.quakes * n), mean(all.total_out, all.quakes * n)};
  return table;
}

struct SourceShare {
  ExchangeId exchange = 0;
  double percentage = 0.0;
};

// Share of quakes in which each exchange is a zero in-degree source. A quake
// may have several sources, so shares need not sum to 100.
inline std::vector<SourceShare> source_ranking(std::span<const AvalancheRecord> records,
                                               std::size_t num_exchanges) {
  std::vector<std::size_t> seeds(num_exchanges, 0);
  for (const auto& r : records)
    for (auto s : r.sources_without_influence) ++seeds.at(s);
  std::vector<SourceShare> out;
  for (std::size_t k = 0; k < num_exchanges; ++k)
    out.push_back({k, records.empty() ? 0.0 : 100.0 * static_cast<double>(seeds[k]) / static_cast<double>(records.size())});
  std::stable_sort(out.begin(), out.end(),
                   [](const SourceShare& a, const SourceShare& b) { return a.percentage > b.percentage; });
  return out;
}

struct SpreadRow {
  double positive = 0.0;
  double negative = 0.0;
  double all = 0.0;
};

// Mean member count of the quakes each exchange seeds; zero when it seeds none.
inline std::vector<SpreadRow> spread_by_source(std::span<const AvalancheRecord> records,
                                               std::size_t num_exchanges) {
  std::vector<double> sum[3];
  std::vector<std::size_t> cnt[3];
  for (int k = 0; k < 3; ++k) {
    sum[k].assign(num_exchanges, 0.0);
    cnt[k].assign(num_exchanges, 0);
  }
  for (const auto& r : records) {
    const int k = r.sign == Sign::Positive ? 0 : 1;
    for (auto s : r.sources_without_influence) {
      for (int slot : {k, 2}) {
        sum[slot].at(s) += static_cast<double>(r.size());
        ++cnt[slot].at(s);
      }
    }
  }
  std::vector<SpreadRow> out(num_exchanges);
  const auto avg = [&](int k, std::size_t e) {
    return cnt[k][e] ? sum[k][e] / static_cast<double>(cnt[k][e]) : 0.0;
  };
  for (std::size_t e = 0; e < num_exchanges; ++e) out[e] = {avg(0, e), avg(1, e), avg(2, e)};
  return out;
}

enum class Measure { Size, Duration };

struct PdfBin {
  double lo = 0.0;  // inclusive
  double hi = 0.0;  // exclusive
  double probability = 0.0;

  double density() const { return probability / (hi - lo); }
};

// Base-2 log bins [2^k, 2^(k+1)) from the smallest to the largest occupied
// bin, empty bins in between included. Size counts member exchanges; duration
// counts simultaneous event groups.
inline std::vector<PdfBin> distribution(std::span<const AvalancheRecord> records, Measure measure) {
  if (records.empty()) throw InputError("distribution needs at least one record");
  std::vector<std::size_t> values;
  for (const auto& r : records) {
    const std::size_t v = measure == Measure::Size ? r.size() : r.duration_events;
    values.push_back(std::max<std::size_t>(v, 1));
  }
  const auto octave = [](std::size_t v) {
    int k = 0;
    while ((std::size_t{2} << k) <= v) ++k;
    return k;
  };
  int lo = octave(values.front()), hi = lo;
  for (auto v : values) {
    lo = std::min(lo, octave(v));
    hi = std::max(hi, octave(v));
  }
  std::vector<std::size_t> counts(static_cast<std::size_t>(hi - lo + 1), 0);
  for (auto v : values) ++counts[static_cast<std::size_t>(octave(v) - lo)];
  std::vector<PdfBin> bins;
  for (int k = lo; k <= hi; ++k) {
    const double a = std::ldexp(1.0, k);
    bins.push_back({a, 2.0 * a,
                    static_cast<double>(counts[static_cast<std::size_t>(k - lo)]) /
                        static_cast<double>(values.size())});
  }
  return bins;
}

// ---------------------------------------------------------------------------
// CSV writers
// ---------------------------------------------------------------------------

namespace detail {
inline std::string fmt(double v) { return pricequake::detail::format_double(v); }
inline std::string pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << v;
  return os.str();
}
}  // namespace detail

inline void write_summary_csv(std::ostream& os, const QuakeSummary& s, QuakeKind kind) {
  const std::string k = kind == QuakeKind::SIPQ ? "SIPQ" : "CIPQ";
  os << ",Number of " << k << ",Averaged number of indices involved,Averaged duration (days)\n";
  const auto row = [&](const char* label, const SummaryRow& r) {
    os << label << ' ' << k << ',' << r.count << ',' << detail::fmt(r.mean_members) << ','
       << detail::fmt(r.mean_duration_days) << '\n';
  };
  row("Negative", s.negative);
  row("Positive", s.positive);
  row("Total", s.total);
}

inline void write_roles_csv(std::ostream& os, const RoleTable& t, std::span<const std::string> names) {
  os << "exchange,positive_not_influenced_not_impacting,positive_not_influenced_impacting,"
        "positive_influenced,negative_not_influenced_not_impacting,"
        "negative_not_influenced_impacting,negative_influenced,total\n";
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& r = t.rows[k];
    os << names[k] << ',' << r.positive.not_influenced_not_impacting << ','
       << r.positive.not_influenced_impacting << ',' << r.positive.influenced << ','
       << r.negative.not_influenced_not_impacting << ',' << r.negative.not_influenced_impacting
       << ',' << r.negative.influenced << ',' << r.total() << '\n';
  }
}

// Percentage view over both signs; rows of never-critical exchanges are zero.
inline void write_roles_percent_csv(std::ostream& os, const RoleTable& t,
                                    std::span<const std::string> names) {
  os << "exchange,critical not influenced and not impacting (%),"
        "critical not influenced but impacting (%),critical influenced (%)\n";
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& r = t.rows[k];
    const double tot = static_cast<double>(r.total());
    const auto p = [&](std::size_t v) { return tot > 0 ? 100.0 * static_cast<double>(v) / tot : 0.0; };
    os << names[k] << ','
       << detail::pct(p(r.positive.not_influenced_not_impacting + r.negative.not_influenced_not_impacting)) << ','
       << detail::pct(p(r.positive.not_influenced_impacting + r.negative.not_influenced_impacting)) << ','
       << detail::pct(p(r.positive.influenced + r.negative.influenced)) << '\n';
  }
}

inline void write_degrees_csv(std::ostream& os, const DegreeTable& t, std::span<const std::string> names) {
  os << "exchange,positive_in,positive_out,positive_delta,negative_in,negative_out,negative_delta,"
        "all_in,all_out,all_delta\n";
  const auto row = [&](const std::string& label, const DegreeRow& r) {
    os << label;
    for (const auto* c : {&r.positive, &r.negative, &r.all})
      os << ',' << detail::fmt(c->in) << ',' << detail::fmt(c->out) << ',' << detail::fmt(c->delta());
    os << '\n';
  };
  for (std::size_t k = 0; k < t.rows.size(); ++k) row(names[k], t.rows[k]);
  row("average", t.average);
}

inline void write_sources_csv(std::ostream& os, std::span<const SourceShare> ranking,
                              std::span<const std::string> names) {
  os << "exchange,percentage_of_quakes_started\n";
  for (const auto& s : ranking) os << names[s.exchange] << ',' << detail::fmt(s.percentage) << '\n';
}

inline void write_spread_csv(std::ostream& os, std::span<const SpreadRow> rows,
                             std::span<const std::string> names) {
  os << "exchange,positive,negative,all\n";
  for (std::size_t k = 0; k < rows.size(); ++k)
    os << names[k] << ',' << detail::fmt(rows[k].positive) << ',' << detail::fmt(rows[k].negative)
       << ',' << detail::fmt(rows[k].all) << '\n';
}

inline void write_pdf_csv(std::ostream& os, std::span<const PdfBin> bins) {
  os << "bin,probability\n";
  for (const auto& b : bins) os << detail::fmt(b.lo) << ',' << detail::fmt(b.probability) << '\n';
}

}  // namespace pricequake::stats
