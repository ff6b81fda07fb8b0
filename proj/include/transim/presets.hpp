#pragma once

// Built-in device presets. All numbers are the published device parameters;
// the values also live in data/device_tableS1.json.

#include "transim/model.hpp"
#include "transim/units.hpp"

namespace transim::presets {

inline constexpr double kMechanicalHz = 5.043e9;
inline constexpr double kElectricalHz = 5.07e9;
inline constexpr double kOpticalHz = 193.087e12;

inline constexpr double kKappaMechanicalHz = 2.63e6;
inline constexpr double kKappaEeHz = 2.213e6;
inline constexpr double kKappaEiHz = 1.226e6;
inline constexpr double kKappaOeHz = 3.65e9;
inline constexpr double kKappaOiHz = 1.34e9;
inline constexpr double kGomHz = 561e3;
inline constexpr double kGemCrossingHz = 7.4e6;
inline constexpr double kGemTimeDomainHz = 8.7e6;
inline constexpr double kKappaETimeDomainHz = 4.9e6;

inline constexpr double kTuningRateHzPerA2 = 1.8e9;
// Zero-current resonator frequency: 5.07 GHz measured at ~3 mT, i.e. ~0.3 A at 10 mT/A.
inline constexpr double kTuningOmega0Hz = kElectricalHz + kTuningRateHzPerA2 * 0.3 * 0.3;
inline constexpr double kFieldPerCurrentTPerA = 0.01;

/// Electro-optomechanical model from the assembled device table. The
/// electrical resonator sits at its as-measured 5.07 GHz; the optical pump is
/// red-detuned by the mechanical frequency with n_c intracavity photons.
inline TransducerModel table_s1(double intracavity_photons = 1.0) {
  std::vector<Mode> modes{
      {"e", ModeKind::electrical, angular(kElectricalHz), angular(kKappaEiHz), angular(kKappaEeHz),
       PortGeometry::transmission_twosided},
      {"m", ModeKind::mechanical, angular(kMechanicalHz), angular(kKappaMechanicalHz), 0.0, PortGeometry::none},
      {"o", ModeKind::optical, angular(kOpticalHz), angular(kKappaOiHz), angular(kKappaOeHz),
       PortGeometry::reflection_onesided},
  };
  std::vector<Coupling> couplings{{"e", "m", angular(kGemCrossingHz)}, {"m", "o", 0.0}};
  PumpConfig pump{-angular(kMechanicalHz), intracavity_photons, angular(kGomHz)};
  TransducerModel model(std::move(modes), std::move(couplings), pump,
                        FluxTuningCurve{angular(kTuningOmega0Hz), angular(kTuningRateHzPerA2)});
  model.set_metadata("g_em_crossing_hz", kGemCrossingHz)
      .set_metadata("g_em_time_domain_hz", kGemTimeDomainHz)
      .set_metadata("field_per_current_T_per_A", kFieldPerCurrentTPerA);
  return model;
}

/// Two-mode electromechanical model (microwave resonator + transduction
/// mechanical mode) with the time-domain fit values g_em = 8.7 MHz,
/// kappa_e = 4.9 MHz. kappa_ee keeps the device's kappa_ee / kappa_e ratio.
/// The resonator is tuned onto the mechanical mode.
inline TransducerModel si_single_mode() {
  const double kappa_e = angular(kKappaETimeDomainHz);
  const double ratio = kKappaEeHz / (kKappaEeHz + kKappaEiHz);
  std::vector<Mode> modes{
      {"e", ModeKind::electrical, angular(kMechanicalHz), kappa_e * (1.0 - ratio), kappa_e * ratio,
       PortGeometry::transmission_twosided},
      {"m", ModeKind::mechanical, angular(kMechanicalHz), angular(kKappaMechanicalHz), 0.0, PortGeometry::none},
  };
  return TransducerModel(std::move(modes), {{"e", "m", angular(kGemTimeDomainHz)}});
}

inline constexpr double kParasiticGHz = 17e6;
inline constexpr double kParasiticDetuningHz = 28e6;

/// si_single_mode plus one parasitic mechanical mode 28 MHz from the drive,
/// coupled at 17 MHz, with the same linewidth as the main mode.
inline TransducerModel si_double_mode(double kappa_m2 = angular(kKappaMechanicalHz)) {
  auto base = si_single_mode();
  auto modes = base.modes();
  modes.push_back({"m2", ModeKind::mechanical, angular(kMechanicalHz + kParasiticDetuningHz), kappa_m2, 0.0,
                   PortGeometry::none});
  auto couplings = base.couplings();
  couplings.push_back({"e", "m2", angular(kParasiticGHz)});
  return TransducerModel(std::move(modes), std::move(couplings));
}

inline constexpr double kOtherMechanicalHz = 5.072e9;
inline constexpr double kOtherKappaMechanicalHz = 0.54e6;
inline constexpr double kOtherGemHz = 1.76e6;

/// The weaker transduction mode at 5.072 GHz; other rates as in table_s1.
inline TransducerModel other_mode(double intracavity_photons = 1.0) {
  auto base = table_s1(intracavity_photons);
  Mode m = base.mode("m");
  m.omega = angular(kOtherMechanicalHz);
  m.kappa_int = angular(kOtherKappaMechanicalHz);
  auto model = base.with_mode(m).with_coupling("e", "m", angular(kOtherGemHz));
  PumpConfig pump = model.pump();
  pump.detuning = -angular(kOtherMechanicalHz);
  return model.with_pump(pump);
}

}  // namespace transim::presets
