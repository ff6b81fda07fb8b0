#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "transim/device_io.hpp"
#include "transim/model.hpp"
#include "transim/presets.hpp"

using namespace transim;

namespace {

Mode electrical(double ki = MHz(1), double ke = MHz(2)) {
  return {"e", ModeKind::electrical, GHz(5.07), ki, ke, PortGeometry::transmission_twosided};
}
Mode mechanical(const std::string& label = "m") {
  return {label, ModeKind::mechanical, GHz(5.043), MHz(2.63), 0.0, PortGeometry::none};
}
Mode optical() { return {"o", ModeKind::optical, GHz(193087), GHz(1.34), GHz(3.65), PortGeometry::reflection_onesided}; }

}  // namespace

TEST(Mode, TotalLinewidthBoundsBothParts) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int i = 0; i < 200; ++i) {
    Mode m = electrical(MHz(u(rng)), MHz(u(rng)));
    EXPECT_GE(total_linewidth(m), m.kappa_ext);
    EXPECT_GE(total_linewidth(m), m.kappa_int);
    const double eta = coupling_efficiency(m);
    EXPECT_GE(eta, 0.0);
    EXPECT_LE(eta, 1.0);
  }
}

TEST(Mode, CouplingEfficiencyByGeometry) {
  EXPECT_NEAR(coupling_efficiency(electrical(MHz(1.226), MHz(2.213))), 2.213 / (2 * 3.439), 1e-12);
  EXPECT_NEAR(coupling_efficiency(optical()), 3.65 / 4.99, 1e-12);
  EXPECT_EQ(coupling_efficiency(mechanical()), 0.0);
  EXPECT_THROW(coupling_efficiency(electrical(0.0, 0.0)), DegenerateInputError);
}

TEST(Cooperativity, TableValue) {
  EXPECT_NEAR(cooperativity(MHz(7.4), MHz(3.439), MHz(2.63)), 24.2178, 1e-3);
}

TEST(Cooperativity, ScalingLaws) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (int i = 0; i < 100; ++i) {
    const double g = u(rng), ka = u(rng), kb = u(rng), s = u(rng);
    const double c = cooperativity(g, ka, kb);
    EXPECT_NEAR(cooperativity(s * g, s * s * ka, kb), c, 1e-12 * c);
    EXPECT_NEAR(cooperativity(s * g, ka, kb), s * s * c, 1e-12 * s * s * c);
  }
  EXPECT_THROW(cooperativity(1.0, 0.0, 1.0), DegenerateInputError);
}

TEST(FluxTuning, EvenAndDecreasing) {
  const FluxTuningCurve c{GHz(5.232), GHz(1.8)};
  for (double i : {0.05, 0.1, 0.3, 0.5}) {
    EXPECT_DOUBLE_EQ(flux_tuned_frequency(c, i), flux_tuned_frequency(c, -i));
    EXPECT_LT(flux_tuned_frequency(c, i + 0.01), flux_tuned_frequency(c, i));
  }
  EXPECT_NEAR(cyclic(flux_tuned_frequency(c, 0.3)) / 1e9, 5.07, 1e-9);
}

TEST(Pump, EnhancedRateInstalledOnOpticalCoupling) {
  EXPECT_DOUBLE_EQ(pump_enhanced_gom({0.0, 1.0, kHz(561)}), kHz(561));
  EXPECT_DOUBLE_EQ(pump_enhanced_gom({0.0, 0.0, kHz(561)}), 0.0);
  EXPECT_NEAR(cyclic(pump_enhanced_gom({0.0, 2600.0, kHz(561)})) / 1e6, 28.6, 0.05);
  const auto m = presets::table_s1(2600.0);
  EXPECT_DOUBLE_EQ(m.coupling("m", "o"), pump_enhanced_gom(m.pump()));
  EXPECT_DOUBLE_EQ(m.with_intracavity_photons(4.0).coupling("o", "m"), 2.0 * kHz(561));
  EXPECT_THROW(pump_enhanced_gom({0.0, -1.0, 1.0}), ModelError);
}

TEST(Model, Validation) {
  EXPECT_THROW(TransducerModel({}, {}), ModelError);
  EXPECT_THROW(TransducerModel({electrical(), electrical()}, {}), ModelError);
  EXPECT_THROW(TransducerModel({electrical(), mechanical()}, {{"e", "e", 1.0}}), ModelError);
  EXPECT_THROW(TransducerModel({electrical(), mechanical()}, {{"e", "x", 1.0}}), ModelError);
  EXPECT_THROW(TransducerModel({electrical(), mechanical()}, {{"e", "m", -1.0}}), ModelError);
  EXPECT_THROW(TransducerModel({electrical(-1.0)}, {}), ModelError);
  Mode bad = mechanical();
  bad.omega = 0.0;
  EXPECT_THROW(TransducerModel({bad}, {}), ModelError);
  bad = mechanical();
  bad.kappa_int = std::nan("");
  EXPECT_THROW(TransducerModel({bad}, {}), ModelError);
  EXPECT_THROW(TransducerModel({electrical(), mechanical()}, {}, PumpConfig{0.0, -2.0, 1.0}), ModelError);
}

TEST(Model, LookupAndCopies) {
  const auto m = presets::table_s1();
  EXPECT_EQ(m.size(), 3u);
  EXPECT_EQ(m.modes()[m.primary_mechanical_index()].label, "m");
  EXPECT_THROW(m.mode("zz"), ModelError);
  EXPECT_DOUBLE_EQ(m.coupling("e", "m"), MHz(7.4));
  EXPECT_DOUBLE_EQ(m.coupling("e", "o"), 0.0);
  const auto moved = m.with_frequency("e", GHz(5.0));
  EXPECT_DOUBLE_EQ(moved.mode("e").omega, GHz(5.0));
  EXPECT_DOUBLE_EQ(m.mode("e").omega, GHz(5.07));
  EXPECT_DOUBLE_EQ(m.with_coupling("e", "m", MHz(1)).coupling("m", "e"), MHz(1));
  EXPECT_TRUE(moved.flux_tuning().has_value());
}

TEST(Model, PrimaryMechanicalFollowsOpticalCoupling) {
  const TransducerModel m({electrical(), mechanical("m2"), mechanical("m1"), optical()},
                          {{"e", "m2", MHz(1)}, {"e", "m1", MHz(1)}, {"m1", "o", 0.0}}, PumpConfig{0.0, 1.0, kHz(1)});
  EXPECT_EQ(m.modes()[m.primary_mechanical_index()].label, "m1");
}

TEST(Model, OpticalBackactionFoldsIntoMechanicalLinewidth) {
  const auto m = presets::table_s1(1000.0);
  const auto r = m.with_optical_backaction();
  EXPECT_EQ(r.size(), 2u);
  const double g = m.coupling("m", "o");
  EXPECT_NEAR(r.mode("m").kappa_int, MHz(2.63) + 4 * g * g / GHz(4.99), 1e-6);
}

TEST(DeviceTable, DerivedRowsToPrintedPrecision) {
  const auto m = presets::table_s1();
  const Mode& e = m.mode("e");
  const Mode& o = m.mode("o");
  EXPECT_NEAR(cyclic(total_linewidth(e)) / 1e6, 3.439, 5e-4);
  EXPECT_NEAR(cyclic(total_linewidth(o)) / 1e9, 4.99, 5e-3);
  EXPECT_NEAR(coupling_efficiency(e), 0.322, 5e-4);
  EXPECT_NEAR(coupling_efficiency(o), 0.731, 5e-4);
  EXPECT_NEAR(cooperativity(m.coupling("e", "m"), total_linewidth(e), total_linewidth(m.mode("m"))), 24.2, 0.15);
}

TEST(DeviceIo, BundledFileMatchesPreset) {
  const auto dev = load_device(std::string(TRANSIM_SOURCE_DIR) + "/data/device_tableS1.json");
  const auto p = presets::table_s1();
  ASSERT_EQ(dev.model.size(), p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(dev.model.modes()[i].label, p.modes()[i].label);
    EXPECT_NEAR(dev.model.modes()[i].omega, p.modes()[i].omega, 1e-6 * p.modes()[i].omega);
    EXPECT_NEAR(dev.model.modes()[i].kappa_ext, p.modes()[i].kappa_ext, 1e-9 * p.modes()[i].kappa_ext + 1e-9);
  }
  EXPECT_NEAR(dev.model.coupling("e", "m"), p.coupling("e", "m"), 1e-6);
  EXPECT_NEAR(dev.model.flux_tuning()->c2, p.flux_tuning()->c2, 1e-3);
  EXPECT_DOUBLE_EQ(dev.setup.at("alpha").get<double>(), 0.73);
  EXPECT_EQ(dev.model.metadata().at("field_per_current_T_per_A"), 0.01);
}

TEST(DeviceIo, RoundTripAndStableHash) {
  const auto p = presets::table_s1(42.0);
  const auto back = parse_device(to_json(p)).model;
  EXPECT_EQ(model_hash(back), model_hash(p));
  EXPECT_NE(model_hash(p), model_hash(p.with_intracavity_photons(43.0)));
  EXPECT_EQ(model_hash(p).size(), 16u);
}

TEST(DeviceIo, UnitsAndErrors) {
  Json j = to_json(presets::si_single_mode());
  for (auto& m : j["modes"]) {
    m["freq_hz"] = m["freq_hz"].get<double>() / 1e6;
    m["kappa_int_hz"] = m["kappa_int_hz"].get<double>() / 1e6;
    m["kappa_ext_hz"] = m["kappa_ext_hz"].get<double>() / 1e6;
  }
  for (auto& c : j["couplings"]) c["g_hz"] = c["g_hz"].get<double>() / 1e6;
  j["unit"] = "MHz";
  j.erase("pump");
  EXPECT_NEAR(parse_device(j).model.coupling("e", "m"), MHz(8.7), 1e-3);

  Json bad = j;
  bad["unit"] = "furlongs";
  EXPECT_THROW(parse_device(bad), ConfigError);
  bad = j;
  bad["modes"][0]["kind"] = "thermal";
  EXPECT_THROW(parse_device(bad), ConfigError);
  bad = j;
  bad["modes"][0].erase("freq_hz");
  EXPECT_THROW(parse_device(bad), ConfigError);
  bad = j;
  bad["modes"][0]["port_geometry"] = "sideways";
  EXPECT_THROW(parse_device(bad), ConfigError);
  EXPECT_THROW(load_device("/nonexistent/device.json"), ConfigError);
}

TEST(Presets, RandomChainsValidate) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const auto m = oracle::random_chain(rng);
    EXPECT_EQ(m.size(), 3u);
    EXPECT_GT(m.coupling("m", "o"), 0.0);
  }
}
