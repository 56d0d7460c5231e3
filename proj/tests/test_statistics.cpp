#include <cmath>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "pricequake/statistics.hpp"
#include "support/scenarios.hpp"

using namespace pricequake;
using namespace pricequake::stats;

namespace {

AvalancheRecord quake(Sign s, std::vector<ExchangeId> members, std::vector<ExchangeId> sources,
                      double days = 0.0, std::size_t groups = 0) {
  AvalancheRecord r;
  r.sign = s;
  r.members = std::move(members);
  r.sources_without_influence = std::move(sources);
  r.source = r.sources_without_influence.empty() ? 0 : r.sources_without_influence.front();
  r.duration_days = days;
  r.duration_events = groups;
  return r;
}

ImpactEdge edge(ExchangeId from, ExchangeId to, std::size_t from_seq, std::size_t at_seq, Sign s) {
  ImpactEdge e;
  e.from = from;
  e.to = to;
  e.from_event.seq = from_seq;
  e.from_event.exchange = from;
  e.at.seq = at_seq;
  e.at.exchange = to;
  e.sign = s;
  return e;
}

}  // namespace

TEST(Summary, Means) {
  const std::vector<AvalancheRecord> recs{quake(Sign::Positive, {0, 1, 2}, {0}, 0.5),
                                          quake(Sign::Positive, {0, 1, 2, 3, 4}, {0}, 1.5),
                                          quake(Sign::Negative, {1, 2}, {1}, 2.0)};
  const auto s = summarize(recs);
  EXPECT_EQ(s.positive.count, 2u);
  EXPECT_DOUBLE_EQ(s.positive.mean_members, 4.0);
  EXPECT_DOUBLE_EQ(s.positive.mean_duration_days, 1.0);
  EXPECT_EQ(s.negative.count, 1u);
  EXPECT_EQ(s.total.count, 3u);
  EXPECT_DOUBLE_EQ(s.total.mean_members, 10.0 / 3.0);
}

TEST(Summary, EmptyInputIsAllZero) {
  const auto s = summarize({});
  EXPECT_EQ(s.total.count, 0u);
  EXPECT_EQ(s.total.mean_members, 0.0);
  EXPECT_EQ(s.negative.mean_duration_days, 0.0);
  std::ostringstream os;
  write_summary_csv(os, s, QuakeKind::SIPQ);
  EXPECT_NE(os.str().find("Total SIPQ,0,0,0"), std::string::npos) << os.str();
}

TEST(Roles, PositiveBranchingQuake) {
  auto b = pqtest::branching_positive_quake();
  const auto res = detect(b.outcomes(), ModelParams{}, QuakeKind::SIPQ);
  const auto t = role_counts(res.records, res.marks, 24);
  for (int src : {6, 22}) {
    EXPECT_EQ(t.rows[src - 1].positive.not_influenced_impacting, 1u);
    EXPECT_EQ(t.rows[src - 1].positive.total(), 1u);
  }
  for (int l : {4, 5, 15, 16, 17, 18}) EXPECT_EQ(t.rows[l - 1].positive.influenced, 1u) << l;
  std::size_t total = 0;
  for (const auto& r : t.rows) total += r.total();
  EXPECT_EQ(total, 8u);
}

TEST(Roles, LeftoverCriticalNodeIsNeither) {
  auto b = pqtest::cooperative_negative_quake();
  const auto res = detect(b.outcomes(), ModelParams{}, QuakeKind::CIPQ);
  const auto t = role_counts(res.records, res.marks, 24);
  EXPECT_EQ(t.rows[19].negative.not_influenced_not_impacting, 1u);
  EXPECT_EQ(t.rows[19].negative.total(), 1u);
  for (int l : {12, 17, 19, 22}) EXPECT_EQ(t.rows[l - 1].negative.not_influenced_impacting, 1u) << l;
}

TEST(Roles, EveryMarkInExactlyOneRole) {
  pqtest::Gen gen(51);
  const auto ex = gen.exchanges(8);
  ModelParams p;
  p.seed = 9;
  p.warmup_days = 3;
  const auto sim = simulate(build_calendar(ex, 80), p, ex);
  for (const auto kind : {QuakeKind::SIPQ, QuakeKind::CIPQ}) {
    const auto res = detect(sim.outcomes, p, kind);
    std::set<std::pair<std::size_t, Sign>> distinct;
    for (const auto& m : res.marks) distinct.insert({m.event.seq, m.sign});
    const auto t = role_counts(res.records, res.marks, ex.size());
    std::size_t total = 0;
    for (const auto& r : t.rows) total += r.total();
    EXPECT_EQ(total, distinct.size());
  }
}

TEST(Degrees, TwoExchangeExample) {
  auto r = quake(Sign::Positive, {0, 1}, {0});
  r.edges = {edge(0, 1, 0, 1, Sign::Positive)};
  const std::vector<AvalancheRecord> recs{r, r};
  const auto t = degree_stats(recs, 2);
  EXPECT_EQ(t.rows[0].positive.out, 1.0);
  EXPECT_EQ(t.rows[0].positive.in, 0.0);
  EXPECT_EQ(t.rows[1].positive.in, 1.0);
  EXPECT_EQ(t.rows[1].positive.delta(), 1.0);
  EXPECT_EQ(t.rows[0].negative.out, 0.0);
  EXPECT_EQ(t.average.positive.in, 0.5);
  EXPECT_EQ(t.average.positive.delta(), 0.0);
}

TEST(Degrees, BranchingQuake) {
  auto b = pqtest::branching_positive_quake();
  const auto res = detect(b.outcomes(), ModelParams{}, QuakeKind::SIPQ);
  const auto t = degree_stats(res.records, 24);
  EXPECT_EQ(t.rows[5].positive.out, 2.0);   // 6 -> 15, 16
  EXPECT_EQ(t.rows[3].positive.in, 2.0);    // 17, 22 -> 4
  EXPECT_EQ(t.rows[21].positive.out, 2.0);  // 22 -> 4, 18
  EXPECT_DOUBLE_EQ(t.average.positive.in, 7.0 / 24.0);
}

TEST(Degrees, NetworkBalanceIsExact) {
  pqtest::Gen gen(52);
  for (int trial = 0; trial < 5; ++trial) {
    const auto ex = gen.exchanges(static_cast<std::size_t>(gen.integer(3, 12)));
    ModelParams p;
    p.seed = gen.bits();
    p.warmup_days = 2;
    const auto sim = simulate(build_calendar(ex, 60), p, ex);
    for (const auto kind : {QuakeKind::SIPQ, QuakeKind::CIPQ}) {
      const auto t = degree_stats(detect(sim.outcomes, p, kind).records, ex.size());
      EXPECT_EQ(t.average.positive.delta(), 0.0);
      EXPECT_EQ(t.average.negative.delta(), 0.0);
      EXPECT_EQ(t.average.all.delta(), 0.0);
    }
  }
}

TEST(Sources, SingleSeedIsHundredPercent) {
  const std::vector<AvalancheRecord> recs{quake(Sign::Positive, {2, 3}, {2}), quake(Sign::Negative, {2, 4}, {2})};
  const auto r = source_ranking(recs, 5);
  EXPECT_EQ(r[0].exchange, 2u);
  EXPECT_EQ(r[0].percentage, 100.0);
  EXPECT_EQ(r[1].percentage, 0.0);
  EXPECT_EQ(source_ranking({}, 3)[0].percentage, 0.0);
}

TEST(Sources, SharesCountEveryZeroInDegreeNode) {
  auto b = pqtest::branching_positive_quake();
  const auto res = detect(b.outcomes(), ModelParams{}, QuakeKind::SIPQ);
  const auto r = source_ranking(res.records, 24);
  EXPECT_EQ(r[0].percentage, 100.0);
  EXPECT_EQ(r[1].percentage, 100.0);
  EXPECT_EQ(r[2].percentage, 0.0);
}

TEST(Spread, BranchingQuakeSources) {
  auto b = pqtest::branching_positive_quake();
  const auto res = detect(b.outcomes(), ModelParams{}, QuakeKind::SIPQ);
  const auto s = spread_by_source(res.records, 24);
  EXPECT_EQ(s[5].positive, 8.0);
  EXPECT_EQ(s[21].positive, 8.0);
  EXPECT_EQ(s[21].all, 8.0);
  EXPECT_EQ(s[5].negative, 0.0);
  EXPECT_EQ(s[0].all, 0.0);
}

TEST(Spread, MeanOverSeededQuakes) {
  const std::vector<AvalancheRecord> recs{quake(Sign::Positive, {0, 1}, {0}),
                                          quake(Sign::Negative, {0, 1, 2, 3}, {0})};
  const auto s = spread_by_source(recs, 4);
  EXPECT_EQ(s[0].positive, 2.0);
  EXPECT_EQ(s[0].negative, 4.0);
  EXPECT_EQ(s[0].all, 3.0);
}

TEST(Pdf, SingleBin) {
  const std::vector<AvalancheRecord> recs(5, quake(Sign::Positive, {0, 1}, {0}));
  const auto bins = distribution(recs, Measure::Size);
  ASSERT_EQ(bins.size(), 1u);
  EXPECT_EQ(bins[0].lo, 2.0);
  EXPECT_EQ(bins[0].hi, 4.0);
  EXPECT_EQ(bins[0].probability, 1.0);
  EXPECT_EQ(bins[0].density(), 0.5);
}

TEST(Pdf, EmptyInputThrows) {
  EXPECT_THROW(distribution({}, Measure::Size), InputError);
}

TEST(Pdf, GapsKeepEmptyBins) {
  const std::vector<AvalancheRecord> recs{quake(Sign::Positive, {0, 1}, {0}),
                                          quake(Sign::Positive, {0, 1, 2, 3, 4, 5, 6, 7, 8}, {0})};
  const auto bins = distribution(recs, Measure::Size);
  ASSERT_EQ(bins.size(), 3u);
  EXPECT_EQ(bins[1].probability, 0.0);
  EXPECT_EQ(bins[2].lo, 8.0);
}

TEST(PdfProperty, MatchesLogBinning) {
  pqtest::Gen gen(53);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<AvalancheRecord> recs;
    const int n = gen.integer(1, 60);
    std::map<int, int> oracle;
    for (int k = 0; k < n; ++k) {
      auto r = quake(Sign::Positive, {0}, {0});
      r.duration_events = static_cast<std::size_t>(gen.integer(0, 3000));
      const double v = std::max<double>(1.0, static_cast<double>(r.duration_events));
      ++oracle[static_cast<int>(std::floor(std::log2(v)))];
      recs.push_back(r);
    }
    const auto bins = distribution(recs, Measure::Duration);
    double total = 0.0;
    for (const auto& b : bins) {
      total += b.probability;
      ASSERT_EQ(b.hi, 2.0 * b.lo);
      const int k = static_cast<int>(std::log2(b.lo));
      const double want = oracle.count(k) ? static_cast<double>(oracle[k]) / n : 0.0;
      ASSERT_DOUBLE_EQ(b.probability, want);
    }
    ASSERT_NEAR(total, 1.0, 1e-12);
    ASSERT_EQ(std::log2(bins.front().lo), oracle.begin()->first);
    ASSERT_EQ(std::log2(bins.back().lo), oracle.rbegin()->first);
  }
}

TEST(Csv, WritersProduceOneRowPerExchange) {
  auto b = pqtest::branching_positive_quake();
  const auto res = detect(b.outcomes(), ModelParams{}, QuakeKind::SIPQ);
  std::vector<std::string> names;
  for (const auto& e : b.exchanges()) names.push_back(e.name);
  const auto lines = [](const std::string& s) { return std::count(s.begin(), s.end(), '\n'); };
  std::ostringstream roles, degrees, sources, spread;
  write_roles_csv(roles, role_counts(res.records, res.marks, 24), names);
  write_degrees_csv(degrees, degree_stats(res.records, 24), names);
  write_sources_csv(sources, source_ranking(res.records, 24), names);
  write_spread_csv(spread, spread_by_source(res.records, 24), names);
  EXPECT_EQ(lines(roles.str()), 25);
  EXPECT_EQ(lines(degrees.str()), 26);
  EXPECT_EQ(lines(sources.str()), 25);
  EXPECT_EQ(lines(spread.str()), 25);
  EXPECT_NE(spread.str().find("E6,8,0,8"), std::string::npos) << spread.str();
}
