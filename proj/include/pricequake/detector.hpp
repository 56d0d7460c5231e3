#pragma once

// Cause-and-effect attribution of price-quakes.
//
// A node-event is one exchange at one of its opens/closes. It is critical with
// sign s when some row entry R^cum_ij of the pre-event tensor exceeds the
// threshold with that sign. Exchange j impacts exchange i at i's event t when
//   - j is in i's active set at t with sign s,
//   - j's latest event before t happened no earlier than i's previous event
//     and j was critical with sign s there,
//   - the weighted stress clears the threshold: |alpha beta R^cum_ij| > R_C
//     alone (single influence) or summed over every such j of that sign
//     (multiple influence; one edge per contributor).
// A quake is a connected set of node-events linked by impact edges of one sign
// and one kind. Its zero in-degree node-events are its sources; the earliest
// one starts the quake and the last edge ends it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "pricequake/engine.hpp"
#include "pricequake/market_network.hpp"

namespace pricequake {

enum class Sign { Positive, Negative };
enum class QuakeKind { SIPQ, CIPQ };
enum class ImpactKind { Single, Multiple };

inline const char* to_string(Sign s) { return s == Sign::Positive ? "positive" : "negative"; }
inline const char* to_string(QuakeKind k) { return k == QuakeKind::SIPQ ? "sipq" : "cipq"; }
inline const char* to_string(ImpactKind k) { return k == ImpactKind::Single ? "single" : "multiple"; }
inline Sign sign_of(double x) { return x > 0.0 ? Sign::Positive : Sign::Negative; }
inline ImpactKind impact_kind_for(QuakeKind k) {
  return k == QuakeKind::SIPQ ? ImpactKind::Single : ImpactKind::Multiple;
}

struct CriticalityMark {
  MarketEvent event;
  ExchangeId versus = 0;
  Sign sign = Sign::Positive;
  friend bool operator==(const CriticalityMark&, const CriticalityMark&) = default;
};

struct ImpactEdge {
  ExchangeId from = 0;
  ExchangeId to = 0;
  MarketEvent at;          // i's event
  MarketEvent from_event;  // j's critical event that carried the stress
  ImpactKind kind = ImpactKind::Single;
  Sign sign = Sign::Positive;
  std::vector<ExchangeId> contributing_set;
  friend bool operator==(const ImpactEdge&, const ImpactEdge&) = default;
};

struct AvalancheRecord {
  QuakeKind kind = QuakeKind::SIPQ;
  Sign sign = Sign::Positive;
  ExchangeId source = 0;
  MarketEvent start;
  std::size_t duration_events = 0;  // simultaneous groups from start to the last edge
  double duration_days = 0.0;
  std::vector<ExchangeId> members;  // sorted
  std::vector<ImpactEdge> edges;    // ordered by (at.seq, from)
  std::vector<ExchangeId> sources_without_influence;  // sorted

  std::size_t size() const { return members.size(); }
  friend bool operator==(const AvalancheRecord&, const AvalancheRecord&) = default;
};

// Marks for one event from the pre-event tensor.
inline std::vector<CriticalityMark> classify_critical(const StressTensor& snapshot,
                                                      const MarketEvent& event,
                                                      const ModelParams& params) {
  std::vector<CriticalityMark> marks;
  const ExchangeId i = event.exchange;
  for (std::size_t j = 0; j < snapshot.size(); ++j) {
    if (j == i) continue;
    const double r = snapshot(i, j);
    if (std::abs(r) > params.threshold) marks.push_back(CriticalityMark{event, j, sign_of(r)});
  }
  return marks;
}

// Same marks, read from an outcome's recorded active set.
inline std::vector<CriticalityMark> classify_critical(std::span<const EventOutcome> outcomes) {
  std::vector<CriticalityMark> marks;
  for (const auto& o : outcomes)
    for (const auto& a : o.active) marks.push_back(CriticalityMark{o.event, a.counterpart, sign_of(a.stress)});
  return marks;
}

namespace detail {

struct CriticalFlags {
  bool positive = false;
  bool negative = false;
  bool has(Sign s) const { return s == Sign::Positive ? positive : negative; }
};

}  // namespace detail

// Outcomes must be in calendar order. Emits single and multiple edges of both signs.
inline std::vector<ImpactEdge> detect_impacts(std::span<const EventOutcome> outcomes,
                                              const ModelParams& params) {
  std::vector<ImpactEdge> edges;
  std::unordered_map<std::size_t, detail::CriticalFlags> critical;  // by event seq
  std::map<ExchangeId, MarketEvent> latest;                         // before the current group
  std::vector<MarketEvent> group_events;

  const auto flush_group = [&] {
    for (const auto& ev : group_events) latest[ev.exchange] = ev;
    group_events.clear();
  };

  std::optional<std::size_t> current_group;
  for (const auto& o : outcomes) {
    if (current_group && o.event.group != *current_group) flush_group();
    if (current_group && o.event.group < *current_group)
      throw InputError("outcomes are not in calendar order");
    current_group = o.event.group;
    group_events.push_back(o.event);

    auto& flags = critical[o.event.seq];
    for (const auto& a : o.active) (a.stress > 0.0 ? flags.positive : flags.negative) = true;

    const ExchangeId i = o.event.exchange;
    const auto prev_it = latest.find(i);
    const std::optional<std::size_t> window_start =
        prev_it == latest.end() ? std::nullopt : std::optional<std::size_t>(prev_it->second.group);

    for (const Sign s : {Sign::Positive, Sign::Negative}) {
      std::vector<const ActiveEntry*> eligible;
      for (const auto& a : o.active) {
        if (sign_of(a.stress) != s) continue;
        const auto it = latest.find(a.counterpart);
        if (it == latest.end()) continue;
        const MarketEvent& tau = it->second;
        if (window_start && tau.group < *window_start) continue;
        const auto cf = critical.find(tau.seq);
        if (cf == critical.end() || !cf->second.has(s)) continue;
        eligible.push_back(&a);
      }
      if (eligible.empty()) continue;

      std::vector<ExchangeId> set;
      double total = 0.0;
      for (const auto* a : eligible) {
        set.push_back(a->counterpart);
        total += a->contribution();
      }
      for (const auto* a : eligible) {
        if (std::abs(a->contribution()) > params.threshold)
          edges.push_back(ImpactEdge{a->counterpart, i, o.event, latest.at(a->counterpart),
                                     ImpactKind::Single, s, {a->counterpart}});
      }
      if (std::abs(total) > params.threshold) {
        for (const auto* a : eligible)
          edges.push_back(ImpactEdge{a->counterpart, i, o.event, latest.at(a->counterpart),
                                     ImpactKind::Multiple, s, set});
      }
    }
  }
  std::stable_sort(edges.begin(), edges.end(), [](const ImpactEdge& a, const ImpactEdge& b) {
    return std::tie(a.at.seq, a.kind, a.sign, a.from) < std::tie(b.at.seq, b.kind, b.sign, b.from);
  });
  return edges;
}

struct AssemblyOptions {
  // Quakes starting before this event sequence number are dropped (warm-up).
  std::size_t first_counted_seq = 0;
};

// Groups edges of the requested kind into quakes, one sign at a time.
inline std::vector<AvalancheRecord> assemble_quakes(std::span<const ImpactEdge> edges,
                                                    QuakeKind kind,
                                                    const AssemblyOptions& opt = {}) {
  std::vector<AvalancheRecord> records;
  const ImpactKind want = impact_kind_for(kind);

  for (const Sign s : {Sign::Positive, Sign::Negative}) {
    std::vector<const ImpactEdge*> chosen;
    for (const auto& e : edges)
      if (e.kind == want && e.sign == s) chosen.push_back(&e);
    if (chosen.empty()) continue;

    // Node-events touched by an edge, indexed densely.
    std::map<std::size_t, MarketEvent> nodes;
    for (const auto* e : chosen) {
      nodes.emplace(e->from_event.seq, e->from_event);
      nodes.emplace(e->at.seq, e->at);
    }
    std::unordered_map<std::size_t, std::size_t> index;
    std::vector<MarketEvent> node_list;
    for (const auto& [seq, ev] : nodes) {
      index[seq] = node_list.size();
      node_list.push_back(ev);
    }
    std::vector<std::size_t> parent(node_list.size());
    std::iota(parent.begin(), parent.end(), 0);
    const auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    std::vector<std::size_t> in_degree(node_list.size(), 0);
    for (const auto* e : chosen) {
      const auto a = find(index.at(e->from_event.seq));
      const auto b = find(index.at(e->at.seq));
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
      ++in_degree[index.at(e->at.seq)];
    }

    std::map<std::size_t, AvalancheRecord> by_root;  // root = earliest node index
    for (std::size_t k = 0; k < node_list.size(); ++k) {
      const auto root = find(k);
      auto& rec = by_root[root];
      if (k == root) {
        rec.kind = kind;
        rec.sign = s;
        rec.start = node_list[k];
        rec.source = node_list[k].exchange;
      }
      rec.members.push_back(node_list[k].exchange);
      if (in_degree[k] == 0) rec.sources_without_influence.push_back(node_list[k].exchange);
    }
    for (const auto* e : chosen) by_root[find(index.at(e->at.seq))].edges.push_back(*e);

    for (auto& [root, rec] : by_root) {
      if (rec.start.seq < opt.first_counted_seq) continue;
      const auto uniq = [](std::vector<ExchangeId>& v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
      };
      uniq(rec.members);
      uniq(rec.sources_without_influence);
      MarketEvent last = rec.start;
      for (const auto& e : rec.edges)
        if (e.at.seq > last.seq) last = e.at;
      rec.duration_events = last.group - rec.start.group;
      rec.duration_days = last.days() - rec.start.days();
      records.push_back(std::move(rec));
    }
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const AvalancheRecord& a, const AvalancheRecord& b) {
                     return std::tie(a.start.seq, a.sign) < std::tie(b.start.seq, b.sign);
                   });
  return records;
}

struct DetectionResult {
  std::vector<CriticalityMark> marks;  // post warm-up only
  std::vector<ImpactEdge> edges;       // all, both kinds
  std::vector<AvalancheRecord> records;
};

// Full detector over an outcome stream. Outcomes flagged warmup still shape
// the windows but produce no marks or quakes.
inline DetectionResult detect(std::span<const EventOutcome> outcomes, const ModelParams& params,
                              QuakeKind kind) {
  DetectionResult out;
  std::size_t first_counted = 0;
  bool found = false;
  for (const auto& o : outcomes) {
    if (!o.warmup) {
      first_counted = o.event.seq;
      found = true;
      break;
    }
  }
  if (!found && !outcomes.empty()) first_counted = outcomes.back().event.seq + 1;
  for (const auto& m : classify_critical(outcomes))
    if (m.event.seq >= first_counted) out.marks.push_back(m);
  out.edges = detect_impacts(outcomes, params);
  out.records = assemble_quakes(out.edges, kind, AssemblyOptions{first_counted});
  return out;
}

// Cell states of the raster view.
enum class RasterCell { NoEvent, NotCritical, Influenced, SourceImpacting, Excluded };

inline char raster_code(RasterCell c) {
  switch (c) {
    case RasterCell::NoEvent: return ' ';
    case RasterCell::NotCritical: return '.';
    case RasterCell::Influenced: return 'I';
    case RasterCell::SourceImpacting: return 'S';
    case RasterCell::Excluded: return 'X';
  }
  return '?';
}

struct RasterRow {
  MarketEvent first;  // any event of the group (day, slot, utc_hour, group)
  std::vector<RasterCell> cells;
};

// Grid of one quake: rows are the simultaneous groups spanned by the quake,
// columns are exchanges.
inline std::vector<RasterRow> raster(const AvalancheRecord& rec,
                                     std::span<const EventOutcome> outcomes,
                                     std::span<const CriticalityMark> marks,
                                     std::size_t num_exchanges) {
  std::set<std::size_t> influenced, member_nodes;
  std::size_t last_group = rec.start.group;
  for (const auto& e : rec.edges) {
    influenced.insert(e.at.seq);
    member_nodes.insert(e.at.seq);
    member_nodes.insert(e.from_event.seq);
    last_group = std::max(last_group, e.at.group);
  }
  // Outcomes and marks are in calendar order, so only the quake's span is visited.
  const auto mark_lo = std::lower_bound(marks.begin(), marks.end(), rec.start.group,
                                        [](const CriticalityMark& m, std::size_t g) { return m.event.group < g; });
  std::set<std::size_t> critical;
  for (auto it = mark_lo; it != marks.end() && it->event.group <= last_group; ++it)
    if (it->sign == rec.sign) critical.insert(it->event.seq);

  const auto out_lo = std::lower_bound(outcomes.begin(), outcomes.end(), rec.start.group,
                                       [](const EventOutcome& o, std::size_t g) { return o.event.group < g; });
  std::vector<RasterRow> rows;
  for (auto it = out_lo; it != outcomes.end() && it->event.group <= last_group; ++it) {
    const auto& o = *it;
    const auto g = o.event.group;
    if (rows.empty() || rows.back().first.group != g)
      rows.push_back(RasterRow{o.event, std::vector<RasterCell>(num_exchanges, RasterCell::NoEvent)});
    auto& cell = rows.back().cells[o.event.exchange];
    const auto seq = o.event.seq;
    if (member_nodes.count(seq))
      cell = influenced.count(seq) ? RasterCell::Influenced : RasterCell::SourceImpacting;
    else if (critical.count(seq))
      cell = RasterCell::Excluded;
    else
      cell = RasterCell::NotCritical;
  }
  return rows;
}

}  // namespace pricequake
