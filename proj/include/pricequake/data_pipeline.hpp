#pragma once

// Empirical open/close price ingestion and configuration files.
//
// A data directory holds exchanges.csv (the registry) and one <name>.csv per
// exchange with header date,open,close and ISO dates. Sessions are indexed by
// position in the sorted union of all trading dates; a date missing from one
// exchange's file is a closed session for that exchange and produces no events.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pricequake/calibration.hpp"
#include "pricequake/detail/text.hpp"
#include "pricequake/engine.hpp"
#include "pricequake/errors.hpp"
#include "pricequake/market_network.hpp"

namespace pricequake::data {

using Date = std::chrono::year_month_day;

inline std::optional<Date> parse_date(std::string_view s) {
  s = detail::trim(s);
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  const auto y = detail::parse_int(s.substr(0, 4));
  const auto m = detail::parse_int(s.substr(5, 2));
  const auto d = detail::parse_int(s.substr(8, 2));
  if (!y || !m || !d) return std::nullopt;
  const Date date{std::chrono::year(static_cast<int>(*y)), std::chrono::month(static_cast<unsigned>(*m)),
                  std::chrono::day(static_cast<unsigned>(*d))};
  if (!date.ok()) return std::nullopt;
  return date;
}

inline std::string format_date(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

struct PriceRow {
  Date date;
  double open = 0.0;
  double close = 0.0;
  friend bool operator==(const PriceRow&, const PriceRow&) = default;
};

struct PriceDataset {
  std::vector<ExchangeSpec> exchanges;
  std::vector<std::vector<PriceRow>> rows;  // by exchange id, strictly increasing dates
  std::vector<std::string> warnings;

  friend bool operator==(const PriceDataset& a, const PriceDataset& b) { return a.rows == b.rows; }
};

// Parses one exchange's price table; row problems are appended to `errors`.
inline std::vector<PriceRow> parse_prices(std::istream& in, const std::string& source,
                                          std::vector<std::string>& errors) {
  std::vector<PriceRow> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    const auto where = source + ":" + std::to_string(line_no) + ": ";
    const auto cells = detail::split(text, ',');
    if (!header_seen) {
      header_seen = true;
      if (cells.size() != 3 || cells[0] != "date" || cells[1] != "open" || cells[2] != "close")
        errors.push_back(where + "expected header date,open,close");
      continue;
    }
    if (cells.size() != 3) {
      errors.push_back(where + "expected 3 fields");
      continue;
    }
    const auto date = parse_date(cells[0]);
    const auto open = detail::parse_double(cells[1]);
    const auto close = detail::parse_double(cells[2]);
    bool ok = true;
    if (!date) errors.push_back(where + "unparseable date '" + std::string(cells[0]) + "'"), ok = false;
    if (!open || !(*open > 0.0) || !std::isfinite(*open))
      errors.push_back(where + "open price must be a positive number"), ok = false;
    if (!close || !(*close > 0.0) || !std::isfinite(*close))
      errors.push_back(where + "close price must be a positive number"), ok = false;
    if (!ok) continue;
    if (!rows.empty() && !(rows.back().date < *date)) {
      errors.push_back(where + (rows.back().date == *date ? "duplicate date " : "date out of order ") +
                       format_date(*date));
      continue;
    }
    rows.push_back(PriceRow{*date, *open, *close});
  }
  return rows;
}

inline void write_prices(std::ostream& out, std::span<const PriceRow> rows) {
  out << "date,open,close\n";
  for (const auto& r : rows)
    out << format_date(r.date) << ',' << detail::format_double(r.open) << ','
        << detail::format_double(r.close) << '\n';
}

inline std::filesystem::path price_file(const std::filesystem::path& dir, const ExchangeSpec& ex) {
  return dir / (ex.name + ".csv");
}

// Reads exchanges.csv and every exchange's price file. All row errors are
// collected and reported together.
inline PriceDataset ingest(const std::filesystem::path& dir) {
  PriceDataset ds;
  ds.exchanges = read_exchanges((dir / "exchanges.csv").string());
  std::vector<std::string> errors;
  for (const auto& ex : ds.exchanges) {
    const auto path = price_file(dir, ex);
    std::ifstream in(path);
    if (!in) {
      errors.push_back(path.string() + ": cannot open price file");
      ds.rows.emplace_back();
      continue;
    }
    ds.rows.push_back(parse_prices(in, path.string(), errors));
    if (ds.rows.back().empty())
      ds.warnings.push_back("exchange " + ex.name + " has no price rows and is excluded");
  }
  if (!errors.empty()) {
    std::string msg = "price data rejected:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw InputError(msg);
  }
  return ds;
}

inline void write_dataset(const std::filesystem::path& dir, const PriceDataset& ds) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "exchanges.csv");
    write_exchanges(out, ds.exchanges);
  }
  for (const auto& ex : ds.exchanges) {
    std::ofstream out(price_file(dir, ex));
    write_prices(out, ds.rows[ex.id]);
  }
}

struct DatasetCalendar {
  EventCalendar calendar;
  std::vector<Date> sessions;  // trading date of each session index
};

inline DatasetCalendar build_calendar(const PriceDataset& ds) {
  std::set<Date> all;
  for (const auto& rows : ds.rows)
    for (const auto& r : rows) all.insert(r.date);
  if (all.empty()) throw InputError("dataset holds no price rows");
  DatasetCalendar out;
  out.sessions.assign(all.begin(), all.end());
  std::map<Date, int> index;
  for (std::size_t k = 0; k < out.sessions.size(); ++k) index[out.sessions[k]] = static_cast<int>(k);
  SessionPresence presence(static_cast<int>(out.sessions.size()), ds.exchanges.size(), false);
  for (const auto& ex : ds.exchanges)
    for (const auto& r : ds.rows[ex.id]) presence.set(index.at(r.date), ex.id, true);
  out.calendar = pricequake::build_calendar(ds.exchanges, presence);
  return out;
}

// Close events carry log(close / open) of their session; open events carry
// log(open / previous close). An exchange's first open has no previous close
// and stays empty.
inline std::vector<std::optional<double>> to_event_returns(const PriceDataset& ds,
                                                           const DatasetCalendar& cal) {
  std::vector<std::map<Date, std::size_t>> row_of(ds.rows.size());
  for (std::size_t e = 0; e < ds.rows.size(); ++e)
    for (std::size_t k = 0; k < ds.rows[e].size(); ++k) row_of[e][ds.rows[e][k].date] = k;

  std::vector<std::optional<double>> out(cal.calendar.size());
  for (const auto& ev : cal.calendar.events()) {
    const auto& rows = ds.rows[ev.exchange];
    const auto it = row_of[ev.exchange].find(cal.sessions[static_cast<std::size_t>(ev.session)]);
    if (it == row_of[ev.exchange].end()) continue;
    const std::size_t k = it->second;
    if (ev.kind == EventKind::Close)
      out[ev.seq] = std::log(rows[k].close / rows[k].open);
    else if (k > 0)
      out[ev.seq] = std::log(rows[k].open / rows[k - 1].close);
  }
  return out;
}

// ---------------------------------------------------------------------------
// key = value configuration files
// ---------------------------------------------------------------------------

inline std::map<std::string, std::string> parse_key_values(std::istream& in, const std::string& source) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key(detail::trim(text.substr(0, eq)));
    if (!kv.emplace(key, std::string(detail::trim(text.substr(eq + 1)))).second)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": duplicate key " + key);
  }
  return kv;
}

namespace detail_cfg {

inline double number(const std::string& source, const std::string& key, const std::string& v) {
  const auto d = detail::parse_double(v);
  if (!d) throw ConfigError(source + ": " + key + " is not a number: '" + v + "'");
  return *d;
}

inline std::vector<double> numbers(const std::string& source, const std::string& key,
                                   const std::string& v) {
  std::vector<double> out;
  for (auto cell : detail::split(v, ',')) out.push_back(number(source, key, std::string(cell)));
  return out;
}

inline bool boolean(const std::string& source, const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(source + ": " + key + " must be true or false");
}

}  // namespace detail_cfg

// Keys: R_C, tau, gamma, one of sigma / sigma2 / sigmas (comma list), and
// optionally seed, warmup_days, circular_zones.
inline ModelParams parse_params(std::istream& in, const std::string& source = "params") {
  const auto kv = parse_key_values(in, source);
  ModelParams p;
  const std::set<std::string> known{"R_C", "tau", "gamma", "sigma", "sigma2", "sigmas",
                                    "seed", "warmup_days", "circular_zones"};
  for (const auto& [k, v] : kv)
    if (!known.count(k)) throw ConfigError(source + ": unknown key " + k);
  for (const char* required : {"R_C", "tau", "gamma"})
    if (!kv.count(required)) throw ConfigError(source + ": missing " + required);
  p.threshold = detail_cfg::number(source, "R_C", kv.at("R_C"));
  p.zone_scale = detail_cfg::number(source, "tau", kv.at("tau"));
  p.cap_scale = detail_cfg::number(source, "gamma", kv.at("gamma"));
  const int sigma_keys = static_cast<int>(kv.count("sigma") + kv.count("sigma2") + kv.count("sigmas"));
  if (sigma_keys != 1) throw ConfigError(source + ": give exactly one of sigma, sigma2, sigmas");
  if (kv.count("sigma")) p.noise_sd = detail_cfg::number(source, "sigma", kv.at("sigma"));
  if (kv.count("sigma2")) {
    const double v = detail_cfg::number(source, "sigma2", kv.at("sigma2"));
    if (!(v >= 0.0)) throw ConfigError(source + ": sigma2 must be >= 0");
    p.noise_sd = std::sqrt(v);
  }
  if (kv.count("sigmas")) {
    p.noise_sds = detail_cfg::numbers(source, "sigmas", kv.at("sigmas"));
    double s2 = 0.0;
    for (double s : p.noise_sds) s2 += s * s;
    p.noise_sd = p.noise_sds.empty() ? 0.0 : std::sqrt(s2 / static_cast<double>(p.noise_sds.size()));
  }
  if (kv.count("seed")) {
    const auto s = detail::parse_int(kv.at("seed"));
    if (!s || *s < 0) throw ConfigError(source + ": seed must be a non-negative integer");
    p.seed = static_cast<std::uint64_t>(*s);
  }
  if (kv.count("warmup_days")) {
    const auto w = detail::parse_int(kv.at("warmup_days"));
    if (!w || *w < 0) throw ConfigError(source + ": warmup_days must be a non-negative integer");
    p.warmup_days = static_cast<int>(*w);
  }
  if (kv.count("circular_zones")) p.circular_zones = detail_cfg::boolean(source, "circular_zones", kv.at("circular_zones"));
  if (!(p.threshold > 0.0) || !(p.zone_scale > 0.0) || !(p.cap_scale > 0.0) || !(p.noise_sd >= 0.0))
    throw ConfigError(source + ": parameters must be positive (sigma >= 0)");
  return p;
}

inline ModelParams read_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open parameter file " + path);
  return parse_params(in, path);
}

inline void write_params(std::ostream& out, const ModelParams& p) {
  out << "R_C = " << detail::format_double(p.threshold) << '\n'
      << "tau = " << detail::format_double(p.zone_scale) << '\n'
      << "gamma = " << detail::format_double(p.cap_scale) << '\n';
  if (p.noise_sds.empty()) {
    out << "sigma = " << detail::format_double(p.noise_sd) << '\n';
  } else {
    out << "sigmas = ";
    for (std::size_t k = 0; k < p.noise_sds.size(); ++k)
      out << (k ? ", " : "") << detail::format_double(p.noise_sds[k]);
    out << '\n';
  }
  out << "seed = " << p.seed << '\n'
      << "warmup_days = " << p.warmup_days << '\n'
      << "circular_zones = " << (p.circular_zones ? "true" : "false") << '\n';
}

// Keys: gamma, tau, R_C as "lo, hi, points"; refinements; refine_points; threads.
inline calibration::SearchSpace parse_search_space(std::istream& in, const std::string& source = "grid") {
  const auto kv = parse_key_values(in, source);
  calibration::SearchSpace space;
  const std::set<std::string> known{"gamma", "tau", "R_C", "refinements", "refine_points", "threads"};
  for (const auto& [k, v] : kv)
    if (!known.count(k)) throw ConfigError(source + ": unknown key " + k);
  const auto axis = [&](const char* key, calibration::Axis& ax) {
    if (!kv.count(key)) return;
    const auto v = detail_cfg::numbers(source, key, kv.at(key));
    if (v.size() != 3) throw ConfigError(source + ": " + key + " needs lo, hi, points");
    ax.lo = v[0];
    ax.hi = v[1];
    ax.points = static_cast<int>(v[2]);
    if (!(ax.lo > 0.0) || !(ax.hi >= ax.lo) || ax.points < 1 || v[2] != ax.points)
      throw ConfigError(source + ": " + key + " needs 0 < lo <= hi and an integer points >= 1");
  };
  axis("gamma", space.gamma);
  axis("tau", space.tau);
  axis("R_C", space.threshold);
  const auto integer = [&](const char* key, auto& dst) {
    if (!kv.count(key)) return;
    const auto v = detail::parse_int(kv.at(key));
    if (!v || *v < 0) throw ConfigError(source + ": " + key + " must be a non-negative integer");
    dst = static_cast<std::remove_reference_t<decltype(dst)>>(*v);
  };
  integer("refinements", space.refinements);
  integer("refine_points", space.refine_points);
  integer("threads", space.threads);
  return space;
}

inline calibration::SearchSpace read_search_space(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open grid file " + path);
  return parse_search_space(in, path);
}

}  // namespace pricequake::data
