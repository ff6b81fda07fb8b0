#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "transim/freq_domain.hpp"
#include "transim/presets.hpp"

using namespace transim;

namespace {

TransducerModel two_mode(double delta_e, double delta_m, double g, double ke, double km) {
  const double w = GHz(5);
  return TransducerModel({{"e", ModeKind::electrical, w + delta_e, ke / 2, ke / 2, PortGeometry::transmission_twosided},
                          {"m", ModeKind::mechanical, w + delta_m, km, 0.0, PortGeometry::none}},
                         {{"e", "m", g}});
}

TransducerModel electrical_only(const TransducerModel& m) { return TransducerModel({m.mode("e")}, {}); }

}  // namespace

TEST(DynamicalMatrix, TwoModeTranscription) {
  const double g = MHz(8.7), ke = MHz(4.9), km = MHz(2.63);
  const auto mat = build_dynamical_matrix(two_mode(0, 0, g, ke, km), GHz(5));
  EXPECT_NEAR(std::abs(mat.A(0, 0) - cdouble(-ke / 2, 0)), 0.0, 1e-6);
  EXPECT_NEAR(std::abs(mat.A(1, 1) - cdouble(-km / 2, 0)), 0.0, 1e-6);
  EXPECT_EQ(mat.A(0, 1), cdouble(0, g));
  EXPECT_EQ(mat.A(1, 0), cdouble(0, g));
  EXPECT_DOUBLE_EQ(mat.ext_in(0), std::sqrt(ke / 4));
  EXPECT_DOUBLE_EQ(mat.ext_in(1), 0.0);
}

TEST(DynamicalMatrix, ZeroParasiticCouplingBlockReduces) {
  const auto two = presets::si_double_mode().with_coupling("e", "m2", 0.0);
  const auto one = presets::si_single_mode();
  const double w = GHz(5.043);
  const auto a = build_dynamical_matrix(two, w).A;
  const auto b = build_dynamical_matrix(one, w).A;
  EXPECT_LT((a.topLeftCorner(2, 2) - b).norm(), 1e-9 * b.norm());
  EXPECT_EQ(a(0, 2), cdouble(0));
  EXPECT_EQ(a(2, 0), cdouble(0));
  EXPECT_EQ(a(1, 2), cdouble(0));
}

TEST(DynamicalMatrix, EigenvalueSplittingIsTwoG) {
  const auto m = model_at_control(presets::table_s1().with_intracavity_photons(0.0), ControlAxis::delta_e, 0.0);
  const TransducerModel em({m.mode("e"), m.mode("m")}, {{"e", "m", m.coupling("e", "m")}});
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(build_dynamical_matrix(em, m.mode("m").omega).A);
  const double split = std::abs(es.eigenvalues()(0).imag() - es.eigenvalues()(1).imag());
  const double g = MHz(7.4), ke = total_linewidth(m.mode("e")), km = total_linewidth(m.mode("m"));
  const double expected = 2.0 * std::sqrt(g * g - std::pow(ke - km, 2) / 16.0);
  EXPECT_NEAR(split, expected, 1e-9 * expected);
  EXPECT_NEAR(split, 2 * g, 0.002 * 2 * g);
}

TEST(DynamicalMatrix, DisconnectedGraphRejected) {
  const TransducerModel m({presets::table_s1().mode("e"), presets::table_s1().mode("m")}, {});
  EXPECT_THROW(build_dynamical_matrix(m, GHz(5)), ModelError);
}

TEST(SteadyState, SingleLorentzianPeak) {
  const auto m = electrical_only(presets::table_s1());
  const auto& e = m.mode("e");
  const auto mat = build_dynamical_matrix(m, e.omega);
  const auto a = steady_state(mat, 1.0, "e");
  EXPECT_NEAR(std::norm(a(0)), (e.kappa_ext / 2) / std::pow(total_linewidth(e) / 2, 2), 1e-12);
  EXPECT_EQ(steady_state(mat, 0.0, "e").norm(), 0.0);
}

TEST(SteadyState, MechanicalToElectricalRatioMatchesElimination) {
  const auto m = model_at_control(presets::table_s1(), ControlAxis::delta_e, 0.0);
  const double w = m.mode("m").omega;
  const auto mat = build_dynamical_matrix(m, w);
  const auto a = steady_state(mat, 1.0, "e");
  // Eliminating the optical mode leaves a_m = i g_em a_e / (kappa_m/2 + g_om^2 / (kappa_o/2)).
  const double g = m.coupling("e", "m"), gom = m.coupling("m", "o");
  const double eff = total_linewidth(m.mode("m")) / 2 + gom * gom / (total_linewidth(m.mode("o")) / 2);
  const double ratio = std::norm(a(1)) / std::norm(a(0));
  EXPECT_NEAR(ratio, g * g / (eff * eff), 1e-9 * ratio);
}

TEST(SteadyState, AgreesWithDenseEliminationOnRandomModels) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 3 + trial % 3;
    const auto m = oracle::random_model(rng, n);
    const double w = m.mode("m1").omega + oracle::mhz(rng, -15, 15);
    const auto mat = build_dynamical_matrix(m, w);
    const auto a = steady_state(mat, cdouble(0.7, -0.2), "e");
    const auto sys = oracle::system(m, w);
    oracle::CMat neg = sys.A;
    for (auto& r : neg)
      for (auto& v : r) v = -v;
    oracle::CVec rhs(n, 0.0);
    rhs[0] = sys.port[0] * cdouble(0.7, -0.2);
    const auto x = oracle::dense_solve(neg, rhs);
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(std::abs(a(j) - x[j]), 0.0, 1e-9 * a.norm());
  }
}

TEST(SteadyState, LosslessResonantModeIsSingular) {
  const TransducerModel m({{"e", ModeKind::electrical, GHz(5), 0.0, 0.0, PortGeometry::none}}, {});
  const auto mat = build_dynamical_matrix(m, GHz(5));
  EXPECT_THROW(steady_state(mat, 1.0, "e"), NumericalError);
}

TEST(SParameter, NotchDepthOnResonance) {
  const auto m = electrical_only(presets::table_s1());
  const auto s = s_parameter(m, m.mode("e").omega, "e", "e");
  EXPECT_NEAR(std::abs(s), 1.0 - 2.213 / 3.439, 1e-9);
  EXPECT_NEAR(std::abs(s), 0.357, 1e-3);
  EXPECT_NEAR(std::abs(s_parameter(m, m.mode("e").omega + GHz(1), "e", "e")), 1.0, 1e-5);
}

TEST(SParameter, PortErrors) {
  const auto m = presets::table_s1(100.0);
  EXPECT_THROW(s_parameter(m, GHz(5), "m", "e"), PortError);
  EXPECT_THROW(s_parameter(m, GHz(5), "x", "e"), PortError);
}

TEST(SParameter, MatchesIndependentSolveOnRandomModels) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 60; ++trial) {
    const auto m = oracle::random_model(rng, 3 + trial % 3);
    const double w = m.mode("m1").omega + oracle::mhz(rng, -15, 15);
    const std::size_t o = m.size() - 1;
    for (auto [from, to] : {std::pair<std::size_t, std::size_t>{0, 0}, {0, o}, {o, 0}, {o, o}}) {
      const cdouble ref = oracle::s_param(m, w, from, to);
      const cdouble got = s_parameter(m, w, m.modes()[from].label, m.modes()[to].label);
      EXPECT_NEAR(std::abs(got - ref), 0.0, 1e-9 * std::max(1.0, std::abs(ref)));
    }
  }
}

TEST(SParameter, MatchedTransductionOracle) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = oracle::random_chain(rng);
    const Mode& e = m.mode("e");
    const Mode& me = m.mode("m");
    const Mode& o = m.mode("o");
    const double c_em = 4 * std::pow(m.coupling("e", "m"), 2) / (total_linewidth(e) * total_linewidth(me));
    const double c_om = 4 * std::pow(m.coupling("m", "o"), 2) / (total_linewidth(o) * total_linewidth(me));
    const double eta_e = e.kappa_ext / (2 * total_linewidth(e)), eta_o = o.kappa_ext / total_linewidth(o);
    const double ref = oracle::matched_efficiency(eta_e, eta_o, c_em, c_om);
    const double got = std::norm(s_parameter(m, me.omega, "e", "o"));
    EXPECT_NEAR(got, ref, 1e-6 * ref) << "trial " << trial;
  }
}

TEST(SParameter, Reciprocity) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 60; ++trial) {
    const auto m = oracle::random_model(rng, 3 + trial % 3);
    for (double off : {-20.0, -3.0, 0.0, 2.5, 17.0}) {
      const double w = m.mode("m1").omega + MHz(off);
      const double a = std::abs(s_parameter(m, w, "e", "o")), b = std::abs(s_parameter(m, w, "o", "e"));
      EXPECT_NEAR(a, b, 1e-10 * std::max(a, 1e-300));
    }
  }
}

TEST(SParameter, Passivity) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = oracle::random_chain(rng);
    const double bound = coupling_efficiency(m.mode("e")) * coupling_efficiency(m.mode("o"));
    for (double off = -30; off <= 30; off += 1.5) {
      const double s2 = std::norm(s_parameter(m, m.mode("m").omega + MHz(off), "e", "o"));
      EXPECT_LE(s2, 1.0);
      EXPECT_LE(s2, bound * (1 + 1e-12));
    }
  }
}

TEST(SParameter, ZeroOptomechanicalCouplingFactorizes) {
  const auto full = presets::table_s1(0.0);
  const TransducerModel em({full.mode("e"), full.mode("m")}, {{"e", "m", full.coupling("e", "m")}});
  for (double off = -20; off <= 20; off += 0.7) {
    const double w = full.mode("m").omega + MHz(off);
    EXPECT_EQ(s_parameter(full, w, "e", "e"), s_parameter(em, w, "e", "e"));
  }
}

TEST(CrossingMap, NoCouplingGivesStraightLines) {
  const auto m = presets::table_s1(0.0).with_coupling("e", "m", 0.0);
  const double wm = m.mode("m").omega;
  const auto grid = avoided_crossing_map(m, arange(wm - MHz(20), wm + MHz(20), MHz(0.05)),
                                         arange(MHz(-10), MHz(10), MHz(5)), ControlAxis::delta_e);
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    const auto dips = find_dips(grid.x, grid.row_abs(r));
    ASSERT_GE(dips.size(), 1u);
    EXPECT_NEAR(dips[0].x, wm + grid.y[r], MHz(0.05));
  }
}

TEST(CrossingMap, MinimumSplittingIsTwoG) {
  const auto m = presets::table_s1();
  const double wm = m.mode("m").omega, step = MHz(0.1);
  const auto grid = avoided_crossing_map(m, arange(wm - MHz(60), wm + MHz(60), step), arange(0.28, 0.37, 0.001),
                                         ControlAxis::coil_current);
  EXPECT_EQ(grid.y_name, "coil_current_a");
  const auto s = min_branch_splitting(grid);
  ASSERT_TRUE(s.found);
  EXPECT_NEAR(cyclic(s.splitting) / 1e6, 14.8, 0.1);
}

TEST(CrossingMap, OtherModeSplitting) {
  const auto m = presets::other_mode();
  const double wm = m.mode("m").omega;
  const auto grid = avoided_crossing_map(m, arange(wm - MHz(10), wm + MHz(10), MHz(0.02)),
                                         arange(MHz(-4), MHz(4), MHz(0.25)), ControlAxis::delta_e);
  const auto s = min_branch_splitting(grid);
  ASSERT_TRUE(s.found);
  EXPECT_NEAR(cyclic(s.splitting) / 1e6, 3.52, 0.2);
}

TEST(CrossingMap, BranchesVaryContinuously) {
  const auto m = presets::table_s1();
  const double wm = m.mode("m").omega, step = MHz(0.1);
  const auto grid = avoided_crossing_map(m, arange(wm - MHz(40), wm + MHz(40), step),
                                         arange(MHz(-30), MHz(30), MHz(0.5)), ControlAxis::delta_e);
  double prev_lo = NAN, prev_hi = NAN;
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    auto d = find_dips(grid.x, grid.row_abs(r), 1e-3);
    if (d.size() < 2) continue;
    std::partial_sort(d.begin(), d.begin() + 2, d.end(), [](const Dip& a, const Dip& b) { return a.depth > b.depth; });
    if (d[0].x > d[1].x) std::swap(d[0], d[1]);
    if (!std::isnan(prev_lo)) {
      EXPECT_LT(std::abs(d[0].x - prev_lo), MHz(0.6));
      EXPECT_LT(std::abs(d[1].x - prev_hi), MHz(0.6));
    }
    prev_lo = d[0].x;
    prev_hi = d[1].x;
  }
}

TEST(CwEfficiencyMap, ZeroPumpGivesZero) {
  const auto m = presets::table_s1(0.0);
  const double wm = m.mode("m").omega;
  const auto grid = cw_efficiency_map(m, arange(wm - MHz(5), wm + MHz(5), MHz(1)), {0.3, 0.32}, ControlAxis::coil_current);
  for (const auto& v : grid.values) EXPECT_EQ(std::abs(v), 0.0);
}

TEST(CwEfficiencyMap, MatchedPointEqualsClosedForm) {
  const auto m = presets::table_s1(300.0);
  const double wm = m.mode("m").omega;
  const auto grid = cw_efficiency_map(m, {wm}, {0.0}, ControlAxis::delta_e);
  const double c_em = cooperativity(m.coupling("e", "m"), total_linewidth(m.mode("e")), total_linewidth(m.mode("m")));
  const double c_om = cooperativity(m.coupling("m", "o"), total_linewidth(m.mode("o")), total_linewidth(m.mode("m")));
  const double ref = oracle::matched_efficiency(coupling_efficiency(m.mode("e")), coupling_efficiency(m.mode("o")), c_em, c_om);
  EXPECT_NEAR(std::abs(grid.values[0]), ref, 1e-9 * ref);
}

TEST(CwEfficiency, MatchedInversionGivesQuarterCooperativity) {
  const auto m = presets::table_s1();
  const double n_c = intracavity_photons_for_efficiency(m, 0.009);
  const auto tuned = m.with_intracavity_photons(n_c);
  const double c_om = cooperativity(tuned.coupling("m", "o"), total_linewidth(m.mode("o")), total_linewidth(m.mode("m")));
  EXPECT_NEAR(c_om, 0.25, 0.0125);
  const auto at = model_at_control(tuned, ControlAxis::delta_e, 0.0);
  EXPECT_NEAR(std::abs(cw_efficiency_map(at, {m.mode("m").omega}, {0.0}, ControlAxis::delta_e).values[0]), 0.009, 1e-8);
}

TEST(CwEfficiency, PeakCalibrationHitsTarget) {
  const auto m = presets::table_s1();
  const double span = MHz(40);
  const double n_c = intracavity_photons_for_peak_efficiency(m, 0.009, span, 201);
  const auto peak = efficiency_peak(m.with_intracavity_photons(n_c), span, 201);
  EXPECT_NEAR(peak.value, 0.009, 1e-7);
  // The map maximum lies on a hybrid branch, away from the bare resonance.
  EXPECT_GT(std::abs(peak.x - m.mode("m").omega), MHz(1));
}

TEST(Grid, ArangeAndLinspace) {
  EXPECT_EQ(arange(0.0, 1.0, 0.1).size(), 11u);
  EXPECT_EQ(linspace(0.0, 1.0, 5).back(), 1.0);
  EXPECT_THROW(arange(0.0, 1.0, 0.0), Error);
}

TEST(Grid, ParallelRowsIsDeterministic) {
  const auto m = presets::table_s1();
  const double wm = m.mode("m").omega;
  const auto probe = arange(wm - MHz(20), wm + MHz(20), MHz(0.5));
  const auto ctl = arange(0.3, 0.35, 0.005);
  const auto a = avoided_crossing_map(m, probe, ctl, ControlAxis::coil_current);
  const auto b = avoided_crossing_map(m, probe, ctl, ControlAxis::coil_current);
  ASSERT_EQ(a.values.size(), b.values.size());
  for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_EQ(a.values[i], b.values[i]);
}
