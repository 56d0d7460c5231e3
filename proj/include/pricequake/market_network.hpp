#pragma once

// Exchange registry and the global open/close event calendar.
//
// Every exchange opens and closes once per trading session. Events at the same
// UTC hour of the same day form one simultaneous group; the engine evaluates a
// group against a single snapshot so that members never see each other.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "pricequake/detail/text.hpp"
#include "pricequake/errors.hpp"

namespace pricequake {

using ExchangeId = std::size_t;

struct ExchangeSpec {
  ExchangeId id = 0;
  std::string name;
  double capitalization = 1.0;  // relative units
  double time_zone = 0.0;       // hours offset from UTC
  double open_hour = 0.0;       // UTC, [0, 24)
  double close_hour = 0.0;      // UTC, [0, 24)

  // A session whose close hour precedes its open hour closes on the next UTC day.
  bool wraps_midnight() const { return close_hour < open_hour; }
};

inline void validate(const ExchangeSpec& ex) {
  const auto where = "exchange '" + ex.name + "' (id " + std::to_string(ex.id) + "): ";
  if (!(ex.capitalization > 0.0) || !std::isfinite(ex.capitalization))
    throw ConfigError(where + "capitalization must be positive");
  if (!std::isfinite(ex.time_zone)) throw ConfigError(where + "time_zone must be finite");
  if (!(ex.open_hour >= 0.0 && ex.open_hour < 24.0))
    throw ConfigError(where + "open_hour must lie in [0, 24)");
  if (!(ex.close_hour >= 0.0 && ex.close_hour < 24.0))
    throw ConfigError(where + "close_hour must lie in [0, 24)");
  if (ex.open_hour == ex.close_hour)
    throw ConfigError(where + "open and close hours must differ");
}

// Ids must be unique and equal to their position (0..N-1).
inline void validate(std::span<const ExchangeSpec> exchanges) {
  if (exchanges.empty()) throw ConfigError("exchange list is empty");
  std::set<ExchangeId> seen;
  for (const auto& ex : exchanges) {
    validate(ex);
    if (!seen.insert(ex.id).second)
      throw ConfigError("duplicate exchange id " + std::to_string(ex.id));
  }
  for (std::size_t k = 0; k < exchanges.size(); ++k) {
    if (exchanges[k].id != k)
      throw ConfigError("exchange ids must be contiguous and ordered: position " +
                        std::to_string(k) + " holds id " + std::to_string(exchanges[k].id));
  }
}

// |z_a - z_b|. The circular variant folds the gap onto [0, 12].
inline double time_zone_gap(const ExchangeSpec& a, const ExchangeSpec& b, bool circular = false) {
  double gap = std::abs(a.time_zone - b.time_zone);
  if (circular) {
    gap = std::fmod(gap, 24.0);
    gap = std::min(gap, 24.0 - gap);
  }
  return gap;
}

enum class EventKind { Open, Close };

inline const char* to_string(EventKind k) { return k == EventKind::Open ? "open" : "close"; }

struct MarketEvent {
  ExchangeId exchange = 0;
  EventKind kind = EventKind::Open;
  int day = 0;              // UTC calendar day the event occurs on
  int slot = 0;             // rank of utc_hour among the day's distinct hours
  double utc_hour = 0.0;
  int session = 0;          // trading session the event belongs to
  std::size_t seq = 0;      // position in the global event order
  std::size_t group = 0;    // global index of the simultaneous group

  double hours() const { return 24.0 * day + utc_hour; }
  double days() const { return day + utc_hour / 24.0; }

  friend bool operator==(const MarketEvent&, const MarketEvent&) = default;
};

struct EventGroup {
  std::size_t begin = 0;  // range into EventCalendar::events()
  std::size_t end = 0;
  int day = 0;
  int slot = 0;
  double utc_hour = 0.0;

  std::size_t size() const { return end - begin; }
  friend bool operator==(const EventGroup&, const EventGroup&) = default;
};

// Which (session, exchange) pairs trade. Absent sessions produce no events.
class SessionPresence {
 public:
  SessionPresence() = default;
  SessionPresence(int num_sessions, std::size_t num_exchanges, bool present = true)
      : sessions_(num_sessions),
        exchanges_(num_exchanges),
        flags_(static_cast<std::size_t>(num_sessions) * num_exchanges, present ? 1 : 0) {}

  int sessions() const { return sessions_; }
  std::size_t exchanges() const { return exchanges_; }

  bool present(int session, ExchangeId ex) const {
    return flags_[static_cast<std::size_t>(session) * exchanges_ + ex] != 0;
  }
  void set(int session, ExchangeId ex, bool value) {
    flags_[static_cast<std::size_t>(session) * exchanges_ + ex] = value ? 1 : 0;
  }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count(flags_.begin(), flags_.end(), char{1}));
  }

 private:
  int sessions_ = 0;
  std::size_t exchanges_ = 0;
  std::vector<char> flags_;
};

// Immutable, time-ordered list of events grouped into simultaneous buckets.
class EventCalendar {
 public:
  EventCalendar() = default;
  EventCalendar(std::size_t num_exchanges, std::vector<MarketEvent> events,
                std::vector<EventGroup> groups)
      : num_exchanges_(num_exchanges), events_(std::move(events)), groups_(std::move(groups)) {
    int last_day = groups_.empty() ? -1 : groups_.back().day;
    day_begin_.assign(static_cast<std::size_t>(last_day + 2), 0);
    for (std::size_t g = 0, d = 0; d < day_begin_.size(); ++d) {
      while (g < groups_.size() && groups_[g].day < static_cast<int>(d)) ++g;
      day_begin_[d] = g;
    }
    day_begin_.back() = groups_.size();
  }

  std::size_t exchange_count() const { return num_exchanges_; }
  std::span<const MarketEvent> events() const { return events_; }
  std::span<const EventGroup> groups() const { return groups_; }
  std::size_t size() const { return events_.size(); }
  int num_days() const { return static_cast<int>(day_begin_.size()) - 1; }

  std::span<const MarketEvent> group_events(std::size_t g) const {
    const auto& grp = groups_[g];
    return std::span<const MarketEvent>(events_).subspan(grp.begin, grp.size());
  }

  // Groups of one UTC day, in increasing hour.
  std::span<const EventGroup> day_groups(int day) const {
    const auto b = day_begin_[static_cast<std::size_t>(day)];
    const auto e = day_begin_[static_cast<std::size_t>(day) + 1];
    return std::span<const EventGroup>(groups_).subspan(b, e - b);
  }

  friend bool operator==(const EventCalendar&, const EventCalendar&) = default;

 private:
  std::size_t num_exchanges_ = 0;
  std::vector<MarketEvent> events_;
  std::vector<EventGroup> groups_;
  std::vector<std::size_t> day_begin_;
};

inline EventCalendar build_calendar(std::span<const ExchangeSpec> exchanges,
                                    const SessionPresence& presence) {
  validate(exchanges);
  if (presence.sessions() < 1) throw ConfigError("calendar needs at least one day");
  if (presence.exchanges() != exchanges.size())
    throw ConfigError("session presence does not match the exchange count");

  std::vector<MarketEvent> events;
  events.reserve(presence.count() * 2);
  for (int s = 0; s < presence.sessions(); ++s) {
    for (const auto& ex : exchanges) {
      if (!presence.present(s, ex.id)) continue;
      MarketEvent open{ex.id, EventKind::Open, s, 0, ex.open_hour, s, 0, 0};
      MarketEvent close{ex.id, EventKind::Close, s + (ex.wraps_midnight() ? 1 : 0), 0,
                        ex.close_hour, s, 0, 0};
      events.push_back(open);
      events.push_back(close);
    }
  }
  std::sort(events.begin(), events.end(), [](const MarketEvent& a, const MarketEvent& b) {
    return std::tie(a.day, a.utc_hour, a.exchange, a.kind) <
           std::tie(b.day, b.utc_hour, b.exchange, b.kind);
  });

  std::vector<EventGroup> groups;
  for (std::size_t k = 0; k < events.size(); ++k) {
    auto& ev = events[k];
    const bool new_group = groups.empty() || groups.back().day != ev.day ||
                           groups.back().utc_hour != ev.utc_hour;
    if (new_group) {
      const bool new_day = groups.empty() || groups.back().day != ev.day;
      const int slot = new_day ? 0 : groups.back().slot + 1;
      groups.push_back(EventGroup{k, k, ev.day, slot, ev.utc_hour});
    }
    auto& grp = groups.back();
    grp.end = k + 1;
    ev.slot = grp.slot;
    ev.seq = k;
    ev.group = groups.size() - 1;
  }
  return EventCalendar(exchanges.size(), std::move(events), std::move(groups));
}

inline EventCalendar build_calendar(std::span<const ExchangeSpec> exchanges, int num_days) {
  if (num_days < 1) throw ConfigError("calendar needs at least one day");
  if (exchanges.empty()) throw ConfigError("exchange list is empty");
  return build_calendar(exchanges, SessionPresence(num_days, exchanges.size()));
}

// Registry file: CSV with header name,capitalization,time_zone,open_hour,close_hour.
// Ids follow row order.
inline std::vector<ExchangeSpec> parse_exchanges(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  std::vector<ExchangeSpec> out;
  std::set<std::string> names;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto cells = detail::split(text, ',');
    if (header.empty()) {
      for (auto c : cells) header.emplace_back(c);
      const std::vector<std::string> expected{"name", "capitalization", "time_zone",
                                              "open_hour", "close_hour"};
      if (header != expected)
        throw ConfigError("exchange file line " + std::to_string(line_no) +
                          ": expected header name,capitalization,time_zone,open_hour,close_hour");
      continue;
    }
    const auto fail = [&](const std::string& what) {
      return ConfigError("exchange file line " + std::to_string(line_no) + ": " + what);
    };
    if (cells.size() != 5) throw fail("expected 5 fields");
    ExchangeSpec ex;
    ex.id = out.size();
    ex.name = std::string(cells[0]);
    if (ex.name.empty()) throw fail("empty name");
    if (!names.insert(ex.name).second) throw fail("duplicate exchange name '" + ex.name + "'");
    const auto num = [&](std::string_view cell, const char* field) {
      const auto v = detail::parse_double(cell);
      if (!v) throw fail(std::string("unparseable ") + field);
      return *v;
    };
    ex.capitalization = num(cells[1], "capitalization");
    ex.time_zone = num(cells[2], "time_zone");
    ex.open_hour = num(cells[3], "open_hour");
    ex.close_hour = num(cells[4], "close_hour");
    try {
      validate(ex);
    } catch (const ConfigError& e) {
      throw fail(e.what());
    }
    out.push_back(std::move(ex));
  }
  if (out.empty()) throw ConfigError("exchange file lists no exchanges");
  return out;
}

inline std::vector<ExchangeSpec> read_exchanges(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open exchange file " + path);
  return parse_exchanges(in);
}

inline void write_exchanges(std::ostream& out, std::span<const ExchangeSpec> exchanges) {
  out << "name,capitalization,time_zone,open_hour,close_hour\n";
  for (const auto& ex : exchanges) {
    out << ex.name << ',' << detail::format_double(ex.capitalization) << ','
        << detail::format_double(ex.time_zone) << ',' << detail::format_double(ex.open_hour)
        << ',' << detail::format_double(ex.close_hour) << '\n';
  }
}

}  // namespace pricequake
