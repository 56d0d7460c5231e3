#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "pricequake/data_pipeline.hpp"
#include "support/gen.hpp"

using namespace pricequake;
using namespace pricequake::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("pq_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

// Two exchanges; B skips 2020-01-03.
fs::path two_exchange_dir(const std::string& name) {
  const auto dir = scratch(name);
  write(dir / "exchanges.csv",
        "name,capitalization,time_zone,open_hour,close_hour\n"
        "A,1.0,0,1,7\n"
        "B,2.0,5,3,9\n");
  write(dir / "A.csv", "date,open,close\n2020-01-02,100,102\n2020-01-03,101,100\n2020-01-06,100,99\n");
  write(dir / "B.csv", "date,open,close\n2020-01-02,50,50\n2020-01-06,51,52\n");
  return dir;
}

Date ymd(int y, unsigned m, unsigned d) { return Date{std::chrono::year(y), std::chrono::month(m), std::chrono::day(d)}; }

}  // namespace

TEST(Dates, ParseAndFormat) {
  EXPECT_EQ(parse_date("2008-02-29"), ymd(2008, 2, 29));
  EXPECT_FALSE(parse_date("2007-02-29"));
  EXPECT_FALSE(parse_date("2007/02/01"));
  EXPECT_FALSE(parse_date("07-02-01"));
  EXPECT_EQ(format_date(ymd(2001, 3, 9)), "2001-03-09");
}

TEST(Prices, RowErrorsAreCollected) {
  std::istringstream in("date,open,close\n2020-01-02,1,0\n2020-01-02,1,-3\nxx,1,1\n2020-01-05,1\n"
                        "2020-01-07,1,1\n2020-01-07,1,1\n2020-01-06,1,1\n");
  std::vector<std::string> errors;
  const auto rows = parse_prices(in, "t", errors);
  EXPECT_EQ(rows.size(), 1u);
  ASSERT_EQ(errors.size(), 6u);
  EXPECT_NE(errors[0].find("t:2: close price must be a positive number"), std::string::npos) << errors[0];
  EXPECT_NE(errors[4].find("duplicate date"), std::string::npos);
  EXPECT_NE(errors[5].find("out of order"), std::string::npos);
}

TEST(Prices, HeaderRequired) {
  std::istringstream in("day,o,c\n");
  std::vector<std::string> errors;
  parse_prices(in, "t", errors);
  EXPECT_EQ(errors.size(), 1u);
}

TEST(Ingest, ReturnsFromPrices) {
  const auto ds = ingest(two_exchange_dir("returns"));
  const auto cal = build_calendar(ds);
  ASSERT_EQ(cal.sessions.size(), 3u);
  EXPECT_EQ(cal.calendar.size(), 10u);  // B closed on the middle session
  const auto r = to_event_returns(ds, cal);
  std::map<std::tuple<ExchangeId, int, EventKind>, std::optional<double>> by;
  for (const auto& ev : cal.calendar.events()) by[{ev.exchange, ev.session, ev.kind}] = r[ev.seq];
  EXPECT_FALSE(by.at({0, 0, EventKind::Open}).has_value());
  EXPECT_NEAR(*by.at({0, 0, EventKind::Close}), 0.019803, 5e-7);
  EXPECT_DOUBLE_EQ(*by.at({0, 0, EventKind::Close}), std::log(1.02));
  EXPECT_DOUBLE_EQ(*by.at({0, 1, EventKind::Open}), std::log(101.0 / 102.0));
  EXPECT_EQ(*by.at({1, 0, EventKind::Close}), 0.0);
  // B's open after the gap is measured from its last close.
  EXPECT_DOUBLE_EQ(*by.at({1, 2, EventKind::Open}), std::log(51.0 / 50.0));
  EXPECT_EQ(by.count({1, 1, EventKind::Open}), 0u);
}

TEST(Ingest, RoundTrip) {
  const auto dir = two_exchange_dir("roundtrip");
  const auto ds = ingest(dir);
  const auto copy = scratch("roundtrip_copy");
  write_dataset(copy, ds);
  const auto again = ingest(copy);
  EXPECT_EQ(again, ds);
  EXPECT_EQ(again.exchanges.size(), 2u);
  EXPECT_EQ(again.exchanges[1].name, "B");
}

TEST(Ingest, EmptyFileWarns) {
  const auto dir = two_exchange_dir("empty");
  write(dir / "B.csv", "date,open,close\n");
  const auto ds = ingest(dir);
  ASSERT_EQ(ds.warnings.size(), 1u);
  EXPECT_NE(ds.warnings[0].find("B"), std::string::npos);
  EXPECT_EQ(build_calendar(ds).calendar.size(), 6u);
}

TEST(Ingest, BadRowsReject) {
  const auto dir = two_exchange_dir("bad");
  write(dir / "A.csv", "date,open,close\n2020-01-02,100,0\n");
  try {
    ingest(dir);
    FAIL() << "expected rejection";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("A.csv:2"), std::string::npos) << e.what();
  }
  fs::remove(dir / "B.csv");
  EXPECT_THROW(ingest(dir), InputError);
}

TEST(Ingest, ReplayOfIngestedData) {
  const auto ds = ingest(two_exchange_dir("replay"));
  const auto cal = build_calendar(ds);
  ModelParams p;
  const auto rep = replay(cal.calendar, to_event_returns(ds, cal), p, ds.exchanges);
  EXPECT_EQ(rep.outcomes.size(), 8u);  // two first opens carry no return
}

TEST(Params, ParseAndWrite) {
  std::istringstream in("# reference\nR_C = 0.03\ntau = 20\ngamma = 0.8\nsigma2 = 0.0006\nseed = 7\nwarmup_days = 10\n");
  const auto p = parse_params(in);
  EXPECT_EQ(p.threshold, 0.03);
  EXPECT_EQ(p.zone_scale, 20.0);
  EXPECT_EQ(p.cap_scale, 0.8);
  EXPECT_DOUBLE_EQ(p.noise_variance(), 0.0006);
  EXPECT_EQ(p.seed, 7u);
  EXPECT_EQ(p.warmup_days, 10);
  std::stringstream out;
  write_params(out, p);
  const auto q = parse_params(out);
  EXPECT_EQ(q.noise_sd, p.noise_sd);
  EXPECT_EQ(q.threshold, p.threshold);
  EXPECT_EQ(q.warmup_days, p.warmup_days);
}

TEST(Params, PerExchangeSigmas) {
  std::istringstream in("R_C=0.03\ntau=20\ngamma=0.8\nsigmas=0.01, 0.02\n");
  const auto p = parse_params(in);
  ASSERT_EQ(p.noise_sds.size(), 2u);
  EXPECT_EQ(p.sigma_for(1), 0.02);
}

TEST(Params, Errors) {
  const auto bad = [](const std::string& text) {
    std::istringstream in(text);
    return parse_params(in);
  };
  EXPECT_THROW(bad("tau=20\ngamma=0.8\nsigma=0.1\n"), ConfigError);
  EXPECT_THROW(bad("R_C=0.03\ntau=20\ngamma=0.8\n"), ConfigError);
  EXPECT_THROW(bad("R_C=0.03\ntau=20\ngamma=0.8\nsigma=0.1\nsigma2=0.01\n"), ConfigError);
  EXPECT_THROW(bad("R_C=-1\ntau=20\ngamma=0.8\nsigma=0.1\n"), ConfigError);
  EXPECT_THROW(bad("R_C=abc\ntau=20\ngamma=0.8\nsigma=0.1\n"), ConfigError);
  EXPECT_THROW(bad("R_C=0.03\ntau=20\ngamma=0.8\nsigma=0.1\nbogus=1\n"), ConfigError);
  EXPECT_THROW(bad("R_C=0.03\nR_C=0.04\ntau=20\ngamma=0.8\nsigma=0.1\n"), ConfigError);
  EXPECT_THROW(bad("R_C 0.03\n"), ConfigError);
  EXPECT_THROW(read_params("/nonexistent/params.txt"), ConfigError);
}

TEST(Params, ShippedFiles) {
  const auto p = read_params(PQ_DATA_DIR "/reference_params.txt");
  EXPECT_EQ(p.threshold, 0.03);
  EXPECT_EQ(p.zone_scale, 20.0);
  EXPECT_EQ(p.cap_scale, 0.8);
  EXPECT_DOUBLE_EQ(p.noise_variance(), 0.0006);
  const auto g = read_search_space(PQ_DATA_DIR "/grid.txt");
  EXPECT_EQ(g.gamma.points, 20);
  EXPECT_EQ(g.refinements, 2);
  const auto ex = read_exchanges(PQ_DATA_DIR "/exchanges24.csv");
  EXPECT_EQ(ex.size(), 24u);
}

TEST(Grid, Errors) {
  const auto bad = [](const std::string& text) {
    std::istringstream in(text);
    return parse_search_space(in);
  };
  EXPECT_NO_THROW(bad("gamma = 0.1, 2, 5\nrefinements = 1\n"));
  EXPECT_THROW(bad("gamma = 0.1, 2\n"), ConfigError);
  EXPECT_THROW(bad("gamma = 2, 0.1, 5\n"), ConfigError);
  EXPECT_THROW(bad("gamma = 0.1, 2, 2.5\n"), ConfigError);
  EXPECT_THROW(bad("tau = 0, 2, 5\n"), ConfigError);
  EXPECT_THROW(bad("refinements = -1\n"), ConfigError);
  EXPECT_THROW(bad("sigma = 1, 2, 3\n"), ConfigError);
}

TEST(DataProperty, PricesRoundTripThroughText) {
  pqtest::Gen gen(61);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PriceRow> rows;
    auto day = std::chrono::sys_days(ymd(1999, 12, 30));
    const int n = gen.integer(1, 40);
    for (int k = 0; k < n; ++k) {
      day += std::chrono::days(gen.integer(1, 4));
      rows.push_back(PriceRow{Date(day), std::exp(gen.uniform(-5, 10)), std::exp(gen.uniform(-5, 10))});
    }
    std::stringstream text;
    write_prices(text, rows);
    std::vector<std::string> errors;
    ASSERT_EQ(parse_prices(text, "p", errors), rows);
    ASSERT_TRUE(errors.empty());
  }
}
