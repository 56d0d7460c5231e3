#pragma once

// Line-delimited JSON for outcome streams and quake records, plus the raster
// CSV. Every file starts with a header record naming the format and the
// exchanges; doubles are written in shortest round-trip form.

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pricequake/detector.hpp"
#include "pricequake/engine.hpp"
#include "pricequake/errors.hpp"

namespace pricequake::io {

using nlohmann::json;

inline json to_json(const MarketEvent& e) {
  return json{{"seq", e.seq},     {"group", e.group}, {"exchange", e.exchange},
              {"kind", to_string(e.kind)}, {"day", e.day}, {"slot", e.slot},
              {"session", e.session}, {"utc_hour", e.utc_hour}};
}

inline MarketEvent event_from_json(const json& j) {
  MarketEvent e;
  e.seq = j.at("seq").get<std::size_t>();
  e.group = j.at("group").get<std::size_t>();
  e.exchange = j.at("exchange").get<std::size_t>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind != "open" && kind != "close") throw InputError("unknown event kind " + kind);
  e.kind = kind == "open" ? EventKind::Open : EventKind::Close;
  e.day = j.at("day").get<int>();
  e.slot = j.at("slot").get<int>();
  e.session = j.at("session").get<int>();
  e.utc_hour = j.at("utc_hour").get<double>();
  return e;
}

inline Sign sign_from(const std::string& s) {
  if (s == "positive") return Sign::Positive;
  if (s == "negative") return Sign::Negative;
  throw InputError("unknown sign " + s);
}

inline QuakeKind kind_from(const std::string& s) {
  if (s == "sipq") return QuakeKind::SIPQ;
  if (s == "cipq") return QuakeKind::CIPQ;
  throw InputError("unknown quake kind " + s);
}

// ---------------------------------------------------------------------------
// Outcome streams
// ---------------------------------------------------------------------------

struct OutcomeStream {
  std::vector<std::string> exchanges;
  ModelParams params;  // threshold and warm-up are what the detector needs
  std::vector<EventOutcome> outcomes;
};

inline json to_json(const EventOutcome& o) {
  json active = json::array();
  for (const auto& a : o.active) active.push_back(json::array({a.counterpart, a.stress, a.weight}));
  json resets = json::array();
  for (const auto& r : o.resets) resets.push_back(json::array({r.row, r.col}));
  return json{{"type", "event"},        {"event", to_json(o.event)}, {"ret", o.ret},
              {"noise", o.noise},       {"coupling", o.coupling},    {"n_active", o.n_active()},
              {"active", active},       {"resets", resets},          {"warmup", o.warmup}};
}

inline void write_outcomes(std::ostream& os, std::span<const std::string> exchanges,
                           const ModelParams& params, std::span<const EventOutcome> outcomes) {
  json header{{"type", "header"},
              {"format", "pricequake-outcomes"},
              {"version", 1},
              {"exchanges", std::vector<std::string>(exchanges.begin(), exchanges.end())},
              {"threshold", params.threshold},
              {"warmup_days", params.warmup_days}};
  os << header.dump() << '\n';
  for (const auto& o : outcomes) os << to_json(o).dump() << '\n';
}

inline OutcomeStream read_outcomes(std::istream& is) {
  OutcomeStream s;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (!header) {
        if (type != "header" || j.at("format") != "pricequake-outcomes")
          throw InputError("not an outcome stream");
        s.exchanges = j.at("exchanges").get<std::vector<std::string>>();
        s.params.threshold = j.at("threshold").get<double>();
        s.params.warmup_days = j.at("warmup_days").get<int>();
        header = true;
        continue;
      }
      if (type != "event") throw InputError("unexpected record type " + type);
      EventOutcome o;
      o.event = event_from_json(j.at("event"));
      o.ret = j.at("ret").get<double>();
      o.noise = j.at("noise").get<double>();
      o.coupling = j.at("coupling").get<double>();
      for (const auto& a : j.at("active"))
        o.active.push_back(ActiveEntry{a.at(0).get<std::size_t>(), a.at(1).get<double>(), a.at(2).get<double>()});
      for (const auto& r : j.at("resets"))
        o.resets.push_back(TensorIndex{r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>()});
      o.warmup = j.at("warmup").get<bool>();
      if (o.event.exchange >= s.exchanges.size()) throw InputError("event exchange out of range");
      s.outcomes.push_back(std::move(o));
    } catch (const json::exception& e) {
      throw InputError("outcome stream line " + std::to_string(line_no) + ": " + e.what());
    } catch (const InputError& e) {
      throw InputError("outcome stream line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header) throw InputError("outcome stream is empty");
  return s;
}

// ---------------------------------------------------------------------------
// Quake records
// ---------------------------------------------------------------------------

struct RecordSet {
  QuakeKind kind = QuakeKind::SIPQ;
  std::vector<std::string> exchanges;
  std::vector<CriticalityMark> marks;
  std::vector<AvalancheRecord> records;
};

// Events inside record files are compact arrays:
// [seq, group, exchange, kind (0 open, 1 close), day, slot, session, utc_hour].
inline json compact(const MarketEvent& e) {
  return json::array({e.seq, e.group, e.exchange, e.kind == EventKind::Close ? 1 : 0, e.day, e.slot,
                      e.session, e.utc_hour});
}

inline MarketEvent event_from_compact(const json& j) {
  if (!j.is_array() || j.size() != 8) throw InputError("malformed event array");
  MarketEvent e;
  e.seq = j[0].get<std::size_t>();
  e.group = j[1].get<std::size_t>();
  e.exchange = j[2].get<std::size_t>();
  const int kind = j[3].get<int>();
  if (kind != 0 && kind != 1) throw InputError("unknown event kind");
  e.kind = kind == 1 ? EventKind::Close : EventKind::Open;
  e.day = j[4].get<int>();
  e.slot = j[5].get<int>();
  e.session = j[6].get<int>();
  e.utc_hour = j[7].get<double>();
  return e;
}

// Node-events of a quake are listed once; edges are [from node, to node, set]
// where set indexes the deduplicated contributing sets.
inline json to_json(const AvalancheRecord& r) {
  std::map<std::size_t, std::size_t> node_of;
  json nodes = json::array();
  const auto node = [&](const MarketEvent& e) {
    const auto [it, fresh] = node_of.emplace(e.seq, node_of.size());
    if (fresh) nodes.push_back(compact(e));
    return it->second;
  };
  std::map<std::vector<std::size_t>, std::size_t> set_of;
  json sets = json::array();
  json edges = json::array();
  for (const auto& e : r.edges) {
    if (e.kind != impact_kind_for(r.kind) || e.sign != r.sign)
      throw InputError("edge kind or sign differs from its quake");
    const auto from = node(e.from_event);
    const auto to = node(e.at);
    const auto [it, fresh] = set_of.emplace(e.contributing_set, set_of.size());
    if (fresh) sets.push_back(e.contributing_set);
    edges.push_back(json::array({from, to, it->second}));
  }
  return json{{"type", "quake"},
              {"kind", to_string(r.kind)},
              {"sign", to_string(r.sign)},
              {"source", r.source},
              {"start", compact(r.start)},
              {"duration_events", r.duration_events},
              {"duration_days", r.duration_days},
              {"members", r.members},
              {"sources_without_influence", r.sources_without_influence},
              {"nodes", nodes},
              {"sets", sets},
              {"edges", edges}};
}

inline AvalancheRecord record_from_json(const json& j) {
  AvalancheRecord r;
  r.kind = kind_from(j.at("kind").get<std::string>());
  r.sign = sign_from(j.at("sign").get<std::string>());
  r.source = j.at("source").get<std::size_t>();
  r.start = event_from_compact(j.at("start"));
  r.duration_events = j.at("duration_events").get<std::size_t>();
  r.duration_days = j.at("duration_days").get<double>();
  r.members = j.at("members").get<std::vector<std::size_t>>();
  r.sources_without_influence = j.at("sources_without_influence").get<std::vector<std::size_t>>();
  std::vector<MarketEvent> nodes;
  for (const auto& n : j.at("nodes")) nodes.push_back(event_from_compact(n));
  const auto sets = j.at("sets").get<std::vector<std::vector<std::size_t>>>();
  for (const auto& e : j.at("edges")) {
    const auto from = e.at(0).get<std::size_t>();
    const auto to = e.at(1).get<std::size_t>();
    const auto set = e.at(2).get<std::size_t>();
    if (from >= nodes.size() || to >= nodes.size() || set >= sets.size())
      throw InputError("edge index out of range");
    r.edges.push_back(ImpactEdge{nodes[from].exchange, nodes[to].exchange, nodes[to], nodes[from],
                                 impact_kind_for(r.kind), r.sign, sets[set]});
  }
  return r;
}

// Marks are grouped per critical node-event: one line listing the
// counterparts of each sign.
inline void write_records(std::ostream& os, const RecordSet& set) {
  json header{{"type", "header"},
              {"format", "pricequake-records"},
              {"version", 2},
              {"kind", to_string(set.kind)},
              {"exchanges", set.exchanges}};
  os << header.dump() << '\n';
  for (std::size_t k = 0; k < set.marks.size();) {
    const auto& ev = set.marks[k].event;
    std::vector<std::size_t> pos, neg;
    for (; k < set.marks.size() && set.marks[k].event.seq == ev.seq; ++k)
      (set.marks[k].sign == Sign::Positive ? pos : neg).push_back(set.marks[k].versus);
    os << json{{"type", "critical"}, {"event", compact(ev)}, {"positive", pos}, {"negative", neg}}.dump()
       << '\n';
  }
  for (const auto& r : set.records) os << to_json(r).dump() << '\n';
}

inline RecordSet read_records(std::istream& is) {
  RecordSet set;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (!header) {
        if (type != "header" || j.at("format") != "pricequake-records" || j.at("version") != 2)
          throw InputError("not a quake record file");
        set.kind = kind_from(j.at("kind").get<std::string>());
        set.exchanges = j.at("exchanges").get<std::vector<std::string>>();
        header = true;
      } else if (type == "critical") {
        const auto ev = event_from_compact(j.at("event"));
        for (auto v : j.at("positive").get<std::vector<std::size_t>>())
          set.marks.push_back(CriticalityMark{ev, v, Sign::Positive});
        for (auto v : j.at("negative").get<std::vector<std::size_t>>())
          set.marks.push_back(CriticalityMark{ev, v, Sign::Negative});
      } else if (type == "quake") {
        set.records.push_back(record_from_json(j));
      } else {
        throw InputError("unexpected record type " + type);
      }
    } catch (const json::exception& e) {
      throw InputError("record file line " + std::to_string(line_no) + ": " + e.what());
    } catch (const InputError& e) {
      throw InputError("record file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header) throw InputError("record file is empty");
  return set;
}

// One block per quake: a comment line identifying it, then a CSV grid.
inline void write_raster(std::ostream& os, std::span<const AvalancheRecord> records,
                         std::span<const EventOutcome> outcomes,
                         std::span<const CriticalityMark> marks,
                         std::span<const std::string> exchanges) {
  for (std::size_t q = 0; q < records.size(); ++q) {
    const auto& rec = records[q];
    os << "# quake " << q << ' ' << to_string(rec.kind) << ' ' << to_string(rec.sign) << " source "
       << exchanges[rec.source] << " members " << rec.size() << '\n';
    os << "group,day,slot,utc_hour";
    for (const auto& name : exchanges) os << ',' << name;
    os << '\n';
    for (const auto& row : raster(rec, outcomes, marks, exchanges.size())) {
      os << row.first.group << ',' << row.first.day << ',' << row.first.slot << ','
         << detail::format_double(row.first.utc_hour);
      for (auto c : row.cells) {
        const char code = raster_code(c);
        os << ',';
        if (code != ' ') os << code;
      }
      os << '\n';
    }
  }
}

}  // namespace pricequake::io
