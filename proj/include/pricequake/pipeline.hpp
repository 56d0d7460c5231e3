#pragma once

// File-level stages shared by the CLI subcommands, so that running them one by
// one writes exactly what a single end-to-end run writes.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pricequake/detector.hpp"
#include "pricequake/errors.hpp"
#include "pricequake/io.hpp"
#include "pricequake/statistics.hpp"

namespace pricequake::pipeline {

namespace fs = std::filesystem;

inline std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

inline fs::path records_path(const fs::path& dir, QuakeKind kind) {
  return dir / (std::string(to_string(kind)) + "_records.jsonl");
}

// Detector stage: records file plus raster view for one quake kind.
inline io::RecordSet detect_to(const fs::path& dir, const io::OutcomeStream& stream, QuakeKind kind) {
  fs::create_directories(dir);
  auto result = detect(stream.outcomes, stream.params, kind);
  io::RecordSet set{kind, stream.exchanges, std::move(result.marks), std::move(result.records)};
  {
    auto out = open_out(records_path(dir, kind));
    io::write_records(out, set);
  }
  {
    auto out = open_out(dir / (std::string(to_string(kind)) + "_raster.csv"));
    io::write_raster(out, set.records, stream.outcomes, set.marks, set.exchanges);
  }
  return set;
}

// Reporting stage: every table for one record set.
inline void report_to(const fs::path& dir, const io::RecordSet& set) {
  fs::create_directories(dir);
  const std::string k = to_string(set.kind);
  const auto n = set.exchanges.size();
  const auto file = [&](const char* stem) { return open_out(dir / (k + "_" + stem + ".csv")); };
  {
    auto out = file("summary");
    stats::write_summary_csv(out, stats::summarize(set.records), set.kind);
  }
  const auto roles = stats::role_counts(set.records, set.marks, n);
  {
    auto out = file("roles");
    stats::write_roles_csv(out, roles, set.exchanges);
  }
  {
    auto out = file("roles_percent");
    stats::write_roles_percent_csv(out, roles, set.exchanges);
  }
  {
    auto out = file("degrees");
    stats::write_degrees_csv(out, stats::degree_stats(set.records, n), set.exchanges);
  }
  {
    auto out = file("sources");
    stats::write_sources_csv(out, stats::source_ranking(set.records, n), set.exchanges);
  }
  {
    auto out = file("spread");
    stats::write_spread_csv(out, stats::spread_by_source(set.records, n), set.exchanges);
  }
  if (!set.records.empty()) {
    auto size_out = file("size_pdf");
    stats::write_pdf_csv(size_out, stats::distribution(set.records, stats::Measure::Size));
    auto dur_out = file("duration_pdf");
    stats::write_pdf_csv(dur_out, stats::distribution(set.records, stats::Measure::Duration));
  }
}

// Detector and reports for both kinds.
inline void analyse_to(const fs::path& dir, const io::OutcomeStream& stream) {
  for (const auto kind : {QuakeKind::SIPQ, QuakeKind::CIPQ}) report_to(dir, detect_to(dir, stream, kind));
}

}  // namespace pricequake::pipeline
