// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "oracles.hpp"
#include "transim/calibration.hpp"
#include "transim/fitkit.hpp"
#include "transim/freq_domain.hpp"
#include "transim/noise_thermo.hpp"
#include "transim/presets.hpp"
#include "transim/time_domain.hpp"

using namespace transim;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

char buf[512];

template <class... A>
std::string fmt(const char* f, A... a) {
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

int failures = 0;

void criterion(const std::string& name, double time_limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (time_limit_s > 0 && dt > time_limit_s) {
    o.ok = false;
    o.detail += fmt("; over the %.3g s budget", time_limit_s);
  }
  failures += !o.ok;
  std::printf("%s  %-36s %s [%.3f s]\n", o.ok ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), dt);
  std::fflush(stdout);
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

// --- invariant checks on random models -----------------------------------

double max_occ(const Trajectory& t) {
  double m = 0.0;
  for (const auto& o : t.occupations)
    for (double v : o) m = std::max(m, v);
  return m;
}

bool energy_monotone(std::mt19937_64& rng) {
  const auto m = oracle::random_model(rng, 3);
  std::normal_distribution<double> nd;
  Eigen::VectorXcd a0(static_cast<Eigen::Index>(m.size()));
  for (auto& v : a0) v = cdouble(nd(rng), nd(rng));
  PropagateOptions o;
  o.initial = a0;
  const auto tr = propagate(m, {}, linspace(0, 1e-6, 300), o);
  for (std::size_t k = 1; k < tr.times.size(); ++k)
    if (tr.total_occupation(k) > tr.total_occupation(k - 1) * (1 + 1e-12)) return false;
  return true;
}

bool frame_invariant(std::mt19937_64& rng) {
  const auto m = oracle::random_model(rng, 3);
  const double shift = oracle::mhz(rng, -50, 50), det = oracle::mhz(rng, -5, 5);
  const auto t = linspace(0, 300e-9, 31);
  const auto a = propagate(m, {DriveTone::rect("e", 1e3, 0, 100e-9, det)}, t);
  PropagateOptions o;
  o.frame_freq = m.mode("m1").omega + shift;
  const auto b = propagate(m, {DriveTone::rect("e", 1e3, 0, 100e-9, det - shift)}, t, o);
  const double top = max_occ(a);
  for (std::size_t j = 0; j < m.size(); ++j)
    for (std::size_t k = 0; k < t.size(); ++k)
      if (std::abs(a.occupations[j][k] - b.occupations[j][k]) > 1e-10 * top) return false;
  return true;
}

bool quadratic_scaling(std::mt19937_64& rng) {
  const auto m = oracle::random_model(rng, 3);
  const auto t = linspace(0, 300e-9, 31);
  const auto a = propagate(m, {DriveTone::rect("e", 500.0, 10e-9, 120e-9, MHz(1))}, t);
  const auto b = propagate(m, {DriveTone::rect("e", 1000.0, 10e-9, 120e-9, MHz(1))}, t);
  const double top = max_occ(b);
  for (std::size_t j = 0; j < m.size(); ++j)
    for (std::size_t k = 0; k < t.size(); ++k)
      if (std::abs(b.occupations[j][k] - 4 * a.occupations[j][k]) > 1e-12 * top) return false;
  return true;
}

bool reciprocal(std::mt19937_64& rng) {
  const auto m = oracle::random_model(rng, 3);
  for (double off : {-20.0, -3.0, 0.0, 2.5, 17.0}) {
    const double w = m.mode("m1").omega + MHz(off);
    const double a = std::abs(s_parameter(m, w, "e", "o")), b = std::abs(s_parameter(m, w, "o", "e"));
    if (std::abs(a - b) > 1e-10 * a) return false;
  }
  return true;
}

bool matches_integrator(std::mt19937_64& rng) {
  const auto m = oracle::random_model(rng, 3);
  const double det = oracle::mhz(rng, -5, 5), amp = 1e3;
  const auto t = linspace(0, 200e-9, 21);
  const auto tr = propagate(m, {DriveTone::step("e", amp, 0.0, det)}, t);
  const auto sys = oracle::system(m, m.mode("m1").omega);
  oracle::CVec b(m.size(), 0.0), y(m.size(), 0.0);
  b[0] = sys.port[0] * amp;
  const double top = max_occ(tr);
  for (std::size_t k = 1; k < t.size(); ++k) {
    y = oracle::rk_integrate(sys.A, b, det, y, t[k - 1], t[k]);
    for (std::size_t j = 0; j < m.size(); ++j)
      if (std::abs(tr.occupations[j][k] - std::norm(y[j])) > 1e-8 * top) return false;
  }
  return true;
}

}  // namespace

int main() {
  criterion("cooperativity C_em", 1e-3, [] {
    const auto m = presets::table_s1();
    const double c = cooperativity(m.coupling("e", "m"), total_linewidth(m.mode("e")), total_linewidth(m.mode("m")));
    return Outcome{std::abs(c - 24.2) <= 0.15, fmt("C_em = %.4f (24.2 +- 0.15)", c)};
  });

  criterion("minimum crossing splitting", 5.0, [] {
    const auto m = presets::table_s1();
    const double wm = m.mode("m").omega, step = MHz(0.1);
    const auto grid = avoided_crossing_map(m, arange(wm - MHz(60), wm + MHz(60), step), arange(0.28, 0.37, 0.001),
                                           ControlAxis::coil_current);
    const auto s = min_branch_splitting(grid);
    const double mhz = cyclic(s.splitting) / 1e6;
    return Outcome{s.found && std::abs(mhz - 14.8) <= 0.1, fmt("2g = %.3f MHz (14.8 +- 0.1)", mhz)};
  });

  criterion("single-photon loading, one mode", 1.0, [] {
    const double e = loading_efficiency(presets::si_single_mode(), DriveTone::single_photon_pulse("e", 60e-9)).efficiency;
    return Outcome{std::abs(e - 0.12) <= 0.01, fmt("eta_em = %.4f (0.12 +- 0.01)", e)};
  });
  criterion("single-photon loading, two modes", 1.0, [] {
    const double e = loading_efficiency(presets::si_double_mode(), DriveTone::single_photon_pulse("e", 60e-9)).efficiency;
    return Outcome{std::abs(e - 0.06) <= 0.01, fmt("eta_em = %.4f (0.06 +- 0.01)", e)};
  });

  criterion("added noise", 0.0, [] {
    const double eta = loading_efficiency(presets::si_double_mode(), DriveTone::single_photon_pulse("e", 60e-9)).efficiency;
    const double n = added_noise(0.41, eta);
    const double z = (n - 6.2) / std::hypot(0.8, 1.8);
    return Outcome{std::abs(n - 6.8) <= 0.8, fmt("N_add = %.3f (6.8 +- 0.8); vs measured 6.2 +- 1.8: %.2f sigma", n, z)};
  });

  criterion("matched transduction oracle", 5.0, [] {
    std::mt19937_64 rng(101);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const auto m = oracle::random_chain(rng);
      const Mode &e = m.mode("e"), &me = m.mode("m"), &o = m.mode("o");
      const double ref = oracle::matched_efficiency(
          e.kappa_ext / (2 * total_linewidth(e)), o.kappa_ext / total_linewidth(o),
          4 * std::pow(m.coupling("e", "m"), 2) / (total_linewidth(e) * total_linewidth(me)),
          4 * std::pow(m.coupling("m", "o"), 2) / (total_linewidth(o) * total_linewidth(me)));
      worst = std::max(worst, rel(std::norm(s_parameter(m, me.omega, "e", "o")), ref));
    }
    return Outcome{worst <= 1e-6, fmt("worst relative error %.2e over 100 chains", worst)};
  });

  criterion("CW efficiency from four-port record", 0.0, [] {
    const auto dev = presets::table_s1();
    const double span = MHz(40);
    const auto tuned = dev.with_intracavity_photons(intracavity_photons_for_peak_efficiency(dev, 0.009, span, 201));
    const auto peak = efficiency_peak(tuned, span, 201);
    const auto at = model_at_control(tuned, ControlAxis::delta_e, peak.y);
    const double s_oe = std::abs(s_parameter(at, peak.x, "e", "o")), s_eo = std::abs(s_parameter(at, peak.x, "o", "e"));
    std::mt19937_64 rng(102);
    std::uniform_real_distribution<double> db(-60.0, 0.0);
    double worst = 0.0, eta = 0.0;
    for (int i = 0; i < 20; ++i) {
      const LineGains g{db_to_linear(db(rng)), db_to_linear(db(rng)), db_to_linear(db(rng)), db_to_linear(db(rng))};
      eta = cw_efficiency(synthesize_four_port(s_oe, s_eo, g, 0.73));
      worst = std::max(worst, rel(eta, s_oe * s_eo));
    }
    return Outcome{worst <= 1e-9 && std::abs(eta - 0.009) <= 1e-6,
                   fmt("eta_CW = %.6f, gain cancellation %.1e", eta, worst)};
  });

  criterion("pulsed efficiency", 0.0, [] {
    const double w = GHz(5.07), eta_mw = db_to_linear(-113.6), eta_det = detection_efficiency({0.42, 0.19, 0.60});
    const double p = 1e-3, t = 60e-9;
    const double n_det = 5.21e-5 * eta_det * input_microwave_photons(w, eta_mw, p, t);
    const double eta = pulsed_efficiency(n_det, w, eta_mw, eta_det, p, t);
    return Outcome{std::abs(eta - 5.21e-5) <= 0.03e-5, fmt("eta_pulsed = %.4e (5.21e-5 +- 0.03e-5)", eta)};
  });

  criterion("fit round trips", 60.0, [] {
    std::string d;
    bool ok = true;
    auto note = [&](const char* what, double got, double want, double tol) {
      const double r = rel(got, want);
      ok = ok && r <= tol;
      d += fmt("%s %.2f%%; ", what, 100 * r);
    };
    // crossings, noiseless
    for (const auto& [m, g, span, step] : {std::tuple{presets::table_s1(), 7.4, 40.0, 0.1},
                                          std::tuple{presets::other_mode(), 1.76, 15.0, 0.02}}) {
      const double wm = m.mode("m").omega;
      const auto grid = avoided_crossing_map(m, arange(wm - MHz(span), wm + MHz(span), MHz(step)),
                                             arange(MHz(-20), MHz(20) + 1.0, MHz(0.5)), ControlAxis::delta_e);
      note(g > 5 ? "g 7.4" : "g 1.76", fit_avoided_crossing(grid).param("g"), MHz(g), 0.03);
    }
    // step response, noiseless and 5% noise
    const auto sm = presets::si_single_mode();
    std::vector<double> de;
    for (double x = -30; x <= 30; x += 5) de.push_back(MHz(x));
    auto grid = step_response_family(sm, de, linspace(0, 600e-9, 301));
    StepFitOptions so;
    so.kappa_m = total_linewidth(sm.mode("m"));
    const auto clean = fit_step_response(grid, so, false).joint;
    note("step g", clean.param("g"), MHz(8.7), 0.03);
    note("step kappa_e", clean.param("kappa_e"), MHz(4.9), 0.03);
    std::mt19937_64 rng(103);
    std::normal_distribution<double> nd;
    for (auto& v : grid.values) v = v.real() * (1 + 0.05 * nd(rng));
    const auto noisy = fit_step_response(grid, so, false).joint;
    note("step g 5%", noisy.param("g"), MHz(8.7), 0.03);
    note("step kappa_e 5%", noisy.param("kappa_e"), MHz(4.9), 0.03);
    // recovery time, noiseless and 10% median over 50 seeds
    const ThermalModel tm{2.0, 2e-6, 1.0};
    auto recovery = [&](double noise) {
      RecoveryData r;
      for (double f : detail::logspace(10e3, 2e6, 20)) {
        const double v = rep_rate_noise(tm, f);
        r.rep_rate.push_back(f);
        r.noise.push_back(v * (1 + noise * nd(rng)));
        r.sigma.push_back(std::max(noise, 1e-6) * v);
      }
      return fit_exp_recovery(r).param("tau");
    };
    note("tau", recovery(0.0), 2e-6, 0.03);
    std::vector<double> taus;
    for (int s = 0; s < 50; ++s) taus.push_back(recovery(0.10));
    note("tau 10% median", detail::median(taus), 2e-6, 0.10);
    // flux tuning, noiseless and 0.2 MHz scatter
    const FluxTuningCurve c{GHz(5.232), GHz(1.8)};
    TuningData a, b;
    for (double i : linspace(-0.4, 0.4, 17)) {
      a.current.push_back(i);
      a.omega.push_back(flux_tuned_frequency(c, i));
      b.current.push_back(i);
      b.omega.push_back(flux_tuned_frequency(c, i) + MHz(0.2) * nd(rng));
      b.sigma.push_back(MHz(0.2));
    }
    note("c2", fit_flux_tuning(a).param("c2"), GHz(1.8), 0.03);
    const auto fb = fit_flux_tuning(b);
    const double z = std::abs(fb.param("c2") - GHz(1.8)) / fb.sigma("c2");
    ok = ok && z < 3.0;
    d += fmt("c2 noisy %.1f sigma", z);
    return Outcome{ok, d};
  });

  criterion("invariant suites", 0.0, [] {
    std::mt19937_64 rng(104);
    int counts[5] = {0, 0, 0, 0, 0};
    const int n = 50;
    for (int i = 0; i < n; ++i) {
      counts[0] += energy_monotone(rng);
      counts[1] += frame_invariant(rng);
      counts[2] += quadratic_scaling(rng);
      counts[3] += reciprocal(rng);
      counts[4] += matches_integrator(rng);
    }
    bool ok = true;
    for (int c : counts) ok = ok && c == n;
    return Outcome{ok, fmt("energy %d/%d, frame %d/%d, linearity %d/%d, reciprocity %d/%d, integrator %d/%d", counts[0], n,
                           counts[1], n, counts[2], n, counts[3], n, counts[4], n)};
  });

  criterion("detection efficiency", 0.0, [] {
    const double e = detection_efficiency({0.42, 0.19, 0.60});
    return Outcome{std::abs(e - 0.048) <= 0.0005, fmt("eta_det = %.5f (0.048)", e)};
  });

  std::printf("%s: %d failing\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
