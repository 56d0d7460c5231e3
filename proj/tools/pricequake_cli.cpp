// pricequake: command-line front end.
//
//   pricequake simulate  --params P --exchanges E --days N --seed S --out DIR
//   pricequake replay    --data DIR --params P --out DIR
//   pricequake calibrate --data DIR --grid G --out DIR
//   pricequake detect    --outcomes FILE --kind sipq|cipq --out DIR
//   pricequake report    --records FILE --out DIR
//   pricequake ofc       --side L --alpha A --avalanches M --seed S --out FILE

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pricequake/pricequake.hpp"

namespace fs = std::filesystem;
namespace pq = pricequake;

namespace {

std::vector<std::string> names_of(const std::vector<pq::ExchangeSpec>& exchanges) {
  std::vector<std::string> names;
  for (const auto& e : exchanges) names.push_back(e.name);
  return names;
}

void write_outcome_file(const fs::path& dir, const std::vector<std::string>& names,
                        const pq::ModelParams& params, const std::vector<pq::EventOutcome>& outcomes) {
  auto out = pq::pipeline::open_out(dir / "outcomes.jsonl");
  pq::io::write_outcomes(out, names, params, outcomes);
}

pq::io::OutcomeStream as_stream(const std::vector<std::string>& names, const pq::ModelParams& params,
                                std::vector<pq::EventOutcome> outcomes) {
  pq::io::OutcomeStream s;
  s.exchanges = names;
  s.params = params;
  s.outcomes = std::move(outcomes);
  return s;
}

int run_simulate(const std::string& params_file, const std::string& exchanges_file, int days,
                 std::optional<std::uint64_t> seed, std::optional<int> warmup, const fs::path& out) {
  auto params = pq::data::read_params(params_file);
  if (seed) params.seed = *seed;
  if (warmup) params.warmup_days = *warmup;
  const auto exchanges = pq::read_exchanges(exchanges_file);
  const auto calendar = pq::build_calendar(exchanges, days);
  auto sim = pq::simulate(calendar, params, exchanges);

  fs::create_directories(out);
  const auto names = names_of(exchanges);
  write_outcome_file(out, names, params, sim.outcomes);
  {
    auto p = pq::pipeline::open_out(out / "params.txt");
    pq::data::write_params(p, params);
  }
  {
    auto p = pq::pipeline::open_out(out / "prices.csv");
    p << "seq,exchange,price,return\n";
    std::vector<std::size_t> cursor(exchanges.size(), 0);
    for (const auto& o : sim.outcomes) {
      const auto& pt = sim.prices.by_exchange[o.event.exchange][cursor[o.event.exchange]++];
      p << pt.seq << ',' << names[o.event.exchange] << ',' << pq::detail::format_double(pt.price) << ','
        << pq::detail::format_double(pt.ret) << '\n';
    }
  }
  pq::pipeline::analyse_to(out, as_stream(names, params, std::move(sim.outcomes)));
  std::cerr << "simulated " << calendar.size() << " events over " << days << " days ("
            << sim.warmup_events << " warm-up) into " << out << '\n';
  return 0;
}

struct EmpiricalData {
  pq::data::PriceDataset dataset;
  pq::data::DatasetCalendar calendar;
  std::vector<std::optional<double>> returns;
};

EmpiricalData load_data(const fs::path& dir) {
  EmpiricalData d;
  d.dataset = pq::data::ingest(dir);
  for (const auto& w : d.dataset.warnings) std::cerr << "warning: " << w << '\n';
  d.calendar = pq::data::build_calendar(d.dataset);
  d.returns = pq::data::to_event_returns(d.dataset, d.calendar);
  return d;
}

int run_replay(const fs::path& data_dir, const std::string& params_file, const fs::path& out) {
  const auto params = pq::data::read_params(params_file);
  const auto d = load_data(data_dir);
  auto rep = pq::replay(d.calendar.calendar, d.returns, params, d.dataset.exchanges);
  fs::create_directories(out);
  const auto names = names_of(d.dataset.exchanges);
  write_outcome_file(out, names, params, rep.outcomes);
  {
    auto r = pq::pipeline::open_out(out / "residuals.csv");
    r << "seq,date,exchange,kind,return,coupling,residual\n";
    for (const auto& o : rep.outcomes)
      r << o.event.seq << ','
        << pq::data::format_date(d.calendar.sessions[static_cast<std::size_t>(o.event.session)]) << ','
        << names[o.event.exchange] << ',' << pq::to_string(o.event.kind) << ','
        << pq::detail::format_double(o.ret) << ',' << pq::detail::format_double(o.coupling) << ','
        << pq::detail::format_double(o.noise) << '\n';
  }
  pq::pipeline::analyse_to(out, as_stream(names, params, std::move(rep.outcomes)));
  std::cerr << "replayed " << d.calendar.calendar.size() << " events into " << out << '\n';
  return 0;
}

int run_calibrate(const fs::path& data_dir, const std::string& grid_file, const fs::path& out) {
  const auto space = pq::data::read_search_space(grid_file);
  const auto d = load_data(data_dir);
  const auto result = pq::calibration::fit(d.returns, d.calendar.calendar, d.dataset.exchanges, space);
  fs::create_directories(out);
  {
    auto p = pq::pipeline::open_out(out / "fitted_params.txt");
    pq::data::write_params(p, result.params);
  }
  {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& c : result.search_trace)
      trace.push_back({{"gamma", c.gamma}, {"tau", c.tau}, {"R_C", c.threshold},
                       {"sigma2", c.sigma2}, {"log_likelihood", c.log_likelihood}});
    const auto mom = [](const pq::calibration::Moments& m) {
      return nlohmann::json{{"count", m.count}, {"mean", m.mean}, {"variance", m.variance},
                            {"excess_kurtosis", m.excess_kurtosis}};
    };
    const auto& rs = result.residual_summary;
    nlohmann::json report{{"gamma", result.params.cap_scale},
                          {"tau", result.params.zone_scale},
                          {"R_C", result.params.threshold},
                          {"sigma2", result.params.noise_variance()},
                          {"log_likelihood", result.log_likelihood},
                          {"flat", result.flat},
                          {"moments", {{"returns", mom(rs.returns)},
                                       {"coupling", mom(rs.coupling)},
                                       {"residuals", mom(rs.residuals)}}},
                          {"search_trace", trace}};
    auto p = pq::pipeline::open_out(out / "calibration.json");
    p << report.dump(2) << '\n';
  }
  {
    auto h = pq::pipeline::open_out(out / "histogram.csv");
    h << "bin,count_returns,count_coupling,count_residual\n";
    for (const auto& row : result.residual_summary.histogram)
      h << pq::detail::format_double(row.center) << ',' << row.returns << ',' << row.coupling << ','
        << row.residuals << '\n';
  }
  std::cerr << "fitted gamma=" << result.params.cap_scale << " tau=" << result.params.zone_scale
            << " R_C=" << result.params.threshold << " sigma2=" << result.params.noise_variance()
            << " logL=" << result.log_likelihood << '\n';
  return 0;
}

int run_detect(const std::string& outcomes_file, const std::string& kind, const fs::path& out) {
  std::ifstream in(outcomes_file);
  if (!in) throw pq::InputError("cannot open outcome file " + outcomes_file);
  const auto stream = pq::io::read_outcomes(in);
  const auto set = pq::pipeline::detect_to(out, stream, pq::io::kind_from(kind));
  std::cerr << set.records.size() << ' ' << kind << " quakes written to " << out << '\n';
  return 0;
}

int run_report(const std::string& records_file, const fs::path& out) {
  std::ifstream in(records_file);
  if (!in) throw pq::InputError("cannot open record file " + records_file);
  pq::pipeline::report_to(out, pq::io::read_records(in));
  return 0;
}

int run_ofc(std::size_t side, double alpha, std::size_t avalanches, std::uint64_t seed,
            long long warmup, const std::string& out_file) {
  pq::ofc::OfcRunConfig cfg;
  cfg.num_avalanches = avalanches;
  cfg.seed = seed;
  cfg.warmup = warmup;
  const auto sizes = pq::ofc::run_ofc(side, alpha, cfg);
  std::ofstream out(out_file, std::ios::binary);
  if (!out) throw pq::InputError("cannot write " + out_file);
  for (auto s : sizes) out << s << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Price-quake contagion simulator and analysis toolkit"};
  app.require_subcommand(1);

  std::string params_file, exchanges_file, grid_file, outcomes_file, records_file, kind = "sipq";
  std::string out, data_dir;
  int days = 0;
  std::optional<std::uint64_t> seed;
  std::optional<int> warmup_days;

  auto* sim = app.add_subcommand("simulate", "run the price-quake engine and analyse the output");
  sim->add_option("--params", params_file, "parameter file")->required()->check(CLI::ExistingFile);
  sim->add_option("--exchanges", exchanges_file, "exchange registry CSV")->required()->check(CLI::ExistingFile);
  sim->add_option("--days", days, "number of trading days")->required()->check(CLI::PositiveNumber);
  sim->add_option("--seed", seed, "RNG seed (overrides the parameter file)");
  sim->add_option("--warmup-days", warmup_days, "days discarded before statistics");
  sim->add_option("--out", out, "output directory")->required();

  auto* rep = app.add_subcommand("replay", "drive the model with observed returns");
  rep->add_option("--data", data_dir, "data directory")->required()->check(CLI::ExistingDirectory);
  rep->add_option("--params", params_file, "parameter file")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", out, "output directory")->required();

  auto* cal = app.add_subcommand("calibrate", "maximum-likelihood fit of gamma, tau, R_C, sigma^2");
  cal->add_option("--data", data_dir, "data directory")->required()->check(CLI::ExistingDirectory);
  cal->add_option("--grid", grid_file, "search grid file")->required()->check(CLI::ExistingFile);
  cal->add_option("--out", out, "output directory")->required();

  auto* det = app.add_subcommand("detect", "detect quakes in an outcome stream");
  det->add_option("--outcomes", outcomes_file, "outcomes.jsonl")->required()->check(CLI::ExistingFile);
  det->add_option("--kind", kind, "sipq or cipq")->check(CLI::IsMember({"sipq", "cipq"}));
  det->add_option("--out", out, "output directory")->required();

  auto* report = app.add_subcommand("report", "statistics tables and distributions");
  report->add_option("--records", records_file, "quake record file")->required()->check(CLI::ExistingFile);
  report->add_option("--out", out, "output directory")->required();

  std::size_t side = 50, avalanches = 0;
  double alpha = 0.2;
  std::uint64_t ofc_seed = 0;
  long long ofc_warmup = -1;
  std::string ofc_out;
  auto* ofc = app.add_subcommand("ofc", "Olami-Feder-Christensen reference run");
  ofc->add_option("--side", side, "lattice side L")->required()->check(CLI::PositiveNumber);
  ofc->add_option("--alpha", alpha, "transfer fraction in [0, 0.25]")->required()->check(CLI::Range(0.0, 0.25));
  ofc->add_option("--avalanches", avalanches, "recorded avalanches")->required()->check(CLI::PositiveNumber);
  ofc->add_option("--seed", ofc_seed, "RNG seed")->required();
  ofc->add_option("--warmup", ofc_warmup, "discarded avalanches (default 10 L^2)");
  ofc->add_option("--out", ofc_out, "output file, one size per line")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return run_simulate(params_file, exchanges_file, days, seed, warmup_days, out);
    if (*rep) return run_replay(data_dir, params_file, out);
    if (*cal) return run_calibrate(data_dir, grid_file, out);
    if (*det) return run_detect(outcomes_file, kind, out);
    if (*report) return run_report(records_file, out);
    if (*ofc) return run_ofc(side, alpha, avalanches, ofc_seed, ofc_warmup, ofc_out);
  } catch (const pq::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
