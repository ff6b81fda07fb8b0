#pragma once

#include <cmath>
#include <numbers>

namespace transim {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kHbar = 1.054571817e-34;  // J s

/// Rates and frequencies are stored as angular frequencies [rad/s]; the
/// helpers below convert from the cyclic values quoted on instruments.
constexpr double angular(double hz) { return kTwoPi * hz; }
constexpr double cyclic(double rad_per_s) { return rad_per_s / kTwoPi; }

constexpr double kHz(double v) { return angular(v * 1e3); }
constexpr double MHz(double v) { return angular(v * 1e6); }
constexpr double GHz(double v) { return angular(v * 1e9); }

/// Power ratio in dB to linear. Losses are quoted as negative dB here.
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

/// Energy of one quantum at angular frequency omega.
constexpr double photon_energy(double omega) { return kHbar * omega; }

}  // namespace transim
