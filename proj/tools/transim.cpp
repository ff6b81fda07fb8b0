// transim command-line front end: run scenarios, list them, fit CSV data.

#include <cstdio>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "transim/scenario.hpp"

namespace sc = transim::scenario;
using transim::Json;

namespace {

std::string verdict(const sc::RunReport& r) {
  switch (r.exit_code) {
    case sc::kOk: return "PASS";
    case sc::kAssertionFailed: return "FAIL";
    default: return "ERROR";
  }
}

void print_text(const std::string& name, const sc::RunReport& r) {
  const double secs = r.report.value("runtime_s", 0.0);
  std::printf("%-20s %s  %6.2f s  %s\n", name.c_str(), verdict(r).c_str(), secs, r.message.c_str());
  if (!r.report.contains("assertions")) return;
  for (const auto& a : r.report["assertions"]) {
    if (a["passed"].get<bool>()) continue;
    const double v = a["value"].is_null() ? std::nan("") : a["value"].get<double>();
    std::printf("    %s = %.6g %s, expected %.6g +- %.3g (%s)\n", a["quantity"].get<std::string>().c_str(), v,
                a["unit"].get<std::string>().c_str(), a["expected"].get<double>(), a["tolerance"].get<double>(),
                a["source"].get<std::string>().c_str());
  }
  if (r.exit_code != sc::kOk && !r.report_path.empty()) std::printf("    report: %s\n", r.report_path.string().c_str());
}

int worst_code(const std::vector<sc::RunReport>& reps) {
  int code = sc::kOk;
  for (const auto& r : reps)
    if (r.exit_code != sc::kOk && (code == sc::kOk || r.exit_code > code)) code = r.exit_code;
  return code;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string op;
  std::string data;
  std::string geometry = "transmission";
  bool overcoupled = false;
  std::string control = "delta_e";
  std::string column;
  std::string sigma_column;
  double kappa_m_hz = transim::presets::kKappaMechanicalHz;
  double delta_m_hz = 0.0;
};

std::vector<double> angular_column(const transim::CsvTable& t, const std::string& name) {
  auto v = t.column(name);
  if (name.size() > 3 && name.compare(name.size() - 3, 3, "_hz") == 0)
    for (auto& x : v) x = transim::angular(x);
  return v;
}

std::vector<double> optional_column(const transim::CsvTable& t, const std::string& name, bool angular = false) {
  if (name.empty() || !t.has(name)) return {};
  return angular ? angular_column(t, name) : t.column(name);
}

std::string pick(const transim::CsvTable& t, const std::string& requested, std::initializer_list<const char*> options) {
  if (!requested.empty()) return requested;
  for (const char* o : options)
    if (t.has(o)) return o;
  throw transim::Error("CSV has none of the expected value columns");
}

Json run_fit(const FitArgs& a) {
  const auto t = transim::read_csv(a.data);
  Json units = Json::object();
  transim::FitResult fr;
  if (a.op == "notch") {
    transim::Spectrum s;
    s.omega = angular_column(t, t.has("freq_hz") ? "freq_hz" : "detuning_hz");
    s.mag = t.column(pick(t, a.column, {"abs", "mag"}));
    s.sigma = optional_column(t, a.sigma_column.empty() ? "sigma" : a.sigma_column);
    transim::NotchOptions o;
    o.geometry = a.geometry == "reflection" ? transim::PortGeometry::reflection_onesided
                                            : transim::PortGeometry::transmission_twosided;
    o.overcoupled = a.overcoupled;
    fr = transim::fit_lorentzian_notch(s, o);
    units = {{"omega0", "rad/s"}, {"kappa_tot", "rad/s"}, {"kappa_ext", "rad/s"}, {"background", "1"},
             {"kappa_int", "rad/s"}, {"depth", "1"}};
  } else if (a.op == "crossing") {
    const bool coil = a.control == "coil";
    const auto g = transim::grid_from_table(t, coil ? "coil_current_a" : "delta_e_hz", "probe_hz", "re", "im");
    transim::CrossingOptions o;
    o.control = coil ? transim::ControlAxis::coil_current : transim::ControlAxis::delta_e;
    fr = transim::fit_avoided_crossing(g, o);
    units = {{"g", "rad/s"}, {"omega_m", "rad/s"}, {"splitting", "rad/s"}};
    if (coil) {
      units["omega0"] = "rad/s";
      units["c2"] = "rad/s/A^2";
    } else {
      units["omega_e0"] = "rad/s";
    }
  } else if (a.op == "step") {
    const auto g = transim::grid_from_table(t, "delta_e_hz", "time_s", pick(t, a.column, {"n_m_measured", "n_m"}));
    transim::StepFitOptions o;
    o.kappa_m = transim::angular(a.kappa_m_hz);
    o.delta_m = transim::angular(a.delta_m_hz);
    fr = transim::fit_step_response(g, o, false).joint;
    units = {{"g", "rad/s"}, {"kappa_e", "rad/s"}, {"scale", "1"}, {"C_em", "1"}};
  } else if (a.op == "recovery") {
    transim::RecoveryData d;
    d.rep_rate = t.column("rep_rate_hz");
    d.noise = t.column(pick(t, a.column, {"noise_rel", "noise"}));
    d.sigma = optional_column(t, a.sigma_column.empty() ? "sigma" : a.sigma_column);
    fr = transim::fit_exp_recovery(d);
    units = {{"tau", "s"}, {"n_heat", "1"}, {"n_base", "1"}};
  } else if (a.op == "tuning") {
    transim::TuningData d;
    d.current = t.column("current_a");
    d.omega = angular_column(t, pick(t, a.column, {"freq_hz"}));
    d.sigma = optional_column(t, a.sigma_column.empty() ? "sigma_hz" : a.sigma_column, true);
    fr = transim::fit_flux_tuning(d);
    units = {{"omega0", "rad/s"}, {"c2", "rad/s/A^2"}};
  } else if (a.op == "peak") {
    transim::PeakData d;
    d.x = t.column("x");
    d.y = t.column(pick(t, a.column, {"y"}));
    d.sigma = optional_column(t, a.sigma_column.empty() ? "sigma" : a.sigma_column);
    fr = transim::fit_lorentzian_peak(d);
    units = {{"amplitude", "y"}, {"center", "x"}, {"width", "x"}, {"offset", "y"}};
  }
  return {{"op", a.op}, {"data", a.data}, {"units", units}, {"result", transim::to_json(fr)}};
}

void print_fit_text(const Json& j) {
  const auto& r = j["result"];
  std::printf("%s fit: %s (%d iterations, chi2_red %.4g)\n", j["op"].get<std::string>().c_str(),
              r["converged"].get<bool>() ? "converged" : "not converged", r["n_iter"].get<int>(),
              r["chi2_reduced"].is_null() ? std::nan("") : r["chi2_reduced"].get<double>());
  auto show = [&](const std::string& k, const Json& v, const Json& s) {
    std::string unit = j["units"].value(k, "");
    // Text output shows rates in Hz; JSON keeps rad/s.
    double f = 1.0;
    if (unit.rfind("rad/s", 0) == 0) {
      f = 1.0 / transim::kTwoPi;
      unit = "Hz" + unit.substr(5);
    }
    std::printf("  %-12s %.9g", k.c_str(), v.is_null() ? std::nan("") : f * v.get<double>());
    if (!s.is_null()) std::printf(" +- %.3g", f * s.get<double>());
    std::printf(" %s\n", unit.c_str());
  };
  for (auto it = r["params"].begin(); it != r["params"].end(); ++it) show(it.key(), it.value(), r["sigmas"][it.key()]);
  for (auto it = r["derived"].begin(); it != r["derived"].end(); ++it)
    show(it.key(), it.value(), r["derived_sigmas"].value(it.key(), Json(nullptr)));
  for (const auto& f : r["flags"]) std::printf("  flag: %s\n", f.get<std::string>().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulate an electro-opto-mechanical transducer and reproduce its characterization"};
  app.require_subcommand(1);

  std::string scenario, config_path, out_dir = "out";
  std::optional<std::uint64_t> seed;
  bool run_json = false, parallel = false;
  auto* run = app.add_subcommand("run", "Run a scenario (or 'all')");
  run->add_option("scenario", scenario, "Scenario name, alias or 'all'")->required();
  run->add_option("--config", config_path, "Config file (default: $TRANSIM_CONFIG_DIR/default.json)");
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();
  run->add_option("--seed", seed, "Override the config seed");
  run->add_flag("--json", run_json, "Print the JSON report instead of a summary");
  run->add_flag("--parallel", parallel, "With 'all': run scenarios concurrently");

  bool list_json = false;
  auto* list = app.add_subcommand("list", "List scenarios");
  list->add_flag("--json", list_json, "JSON output");

  FitArgs fa;
  bool fit_json = false;
  auto* fit = app.add_subcommand("fit", "Fit a model to CSV data");
  fit->add_option("op", fa.op, "notch | crossing | step | recovery | tuning | peak")
      ->required()
      ->check(CLI::IsMember({"notch", "crossing", "step", "recovery", "tuning", "peak"}));
  fit->add_option("--data", fa.data, "CSV file")->required();
  fit->add_option("--geometry", fa.geometry, "notch: transmission | reflection")
      ->check(CLI::IsMember({"transmission", "reflection"}));
  fit->add_flag("--overcoupled", fa.overcoupled, "notch: start from the over-coupled root");
  fit->add_option("--control", fa.control, "crossing: delta_e | coil")->check(CLI::IsMember({"delta_e", "coil"}));
  fit->add_option("--column", fa.column, "Value column");
  fit->add_option("--sigma-column", fa.sigma_column, "Uncertainty column");
  fit->add_option("--kappa-m-hz", fa.kappa_m_hz, "step: mechanical linewidth")->capture_default_str();
  fit->add_option("--delta-m-hz", fa.delta_m_hz, "step: drive detuning from the mechanical mode");
  fit->add_flag("--json", fit_json, "JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    // Bad or missing fit operation names count as an unknown command.
    if (rc != 0 && *fit) return sc::kUnknownScenario;
    return rc;
  }

  if (*list) {
    const auto reg = sc::registry_json();
    if (list_json) {
      std::cout << reg.dump(2) << '\n';
    } else {
      for (const auto& d : reg)
        std::printf("%-20s %-34s %s\n", d["name"].get<std::string>().c_str(), d["anchor"].get<std::string>().c_str(),
                    d["description"].get<std::string>().c_str());
      for (const auto& [alias, target] : sc::aliases()) std::printf("%-20s alias of %s\n", alias.c_str(), target.c_str());
    }
    return sc::kOk;
  }

  if (*fit) {
    try {
      const Json j = run_fit(fa);
      if (fit_json) std::cout << j.dump(2) << '\n';
      else print_fit_text(j);
      return j["result"]["converged"].get<bool>() ? sc::kOk : sc::kAssertionFailed;
    } catch (const transim::FitNotConverged& e) {
      std::fprintf(stderr, "fit failed: %s\n", e.what());
      if (fit_json) std::cout << Json{{"op", fa.op}, {"error", e.what()}, {"result", transim::to_json(e.best())}}.dump(2) << '\n';
      return sc::kAssertionFailed;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "fit failed: %s\n", e.what());
      const bool io = std::string(e.what()).rfind("cannot read", 0) == 0;
      return io ? sc::kConfigError : sc::kRuntimeError;
    }
  }

  // run
  const std::filesystem::path cfg_path = config_path.empty() ? sc::default_config_path() : std::filesystem::path(config_path);
  std::vector<std::string> names;
  if (scenario == "all") {
    for (const auto& d : sc::registry()) names.push_back(d.name);
  } else {
    names.push_back(scenario);
  }
  for (const auto& n : names)
    if (!sc::find(n)) {
      std::fprintf(stderr, "unknown scenario '%s' (see 'transim list')\n", n.c_str());
      return sc::kUnknownScenario;
    }
  sc::Config cfg;
  try {
    cfg = sc::load_config(cfg_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return sc::kConfigError;
  }

  std::vector<sc::RunReport> reps(names.size());
  if (parallel && names.size() > 1) {
    std::vector<std::future<sc::RunReport>> jobs;
    for (const auto& n : names)
      jobs.push_back(std::async(std::launch::async, [&, n] { return sc::run_with_config(n, cfg, out_dir, seed); }));
    for (std::size_t i = 0; i < jobs.size(); ++i) reps[i] = jobs[i].get();
  } else {
    for (std::size_t i = 0; i < names.size(); ++i) reps[i] = sc::run_with_config(names[i], cfg, out_dir, seed);
  }

  if (run_json) {
    if (reps.size() == 1) {
      std::cout << reps[0].report.dump(2) << '\n';
    } else {
      Json arr = Json::array();
      for (const auto& r : reps) arr.push_back(r.report);
      std::cout << arr.dump(2) << '\n';
    }
  } else {
    for (std::size_t i = 0; i < reps.size(); ++i) print_text(names[i], reps[i]);
  }
  return worst_code(reps);
}
