#pragma once

// Device-parameter files. Rates are given as cyclic frequencies; the "unit"
// field (Hz, kHz, MHz, GHz) scales every *_hz value and is converted to
// rad/s at parse time.
//
//   {
//     "unit": "Hz",
//     "modes": [{"label": "e", "kind": "electrical", "freq_hz": 5.07e9,
//                "kappa_int_hz": 1.226e6, "kappa_ext_hz": 2.213e6,
//                "port_geometry": "transmission_twosided"}, ...],
//     "couplings": [{"a": "e", "b": "m", "g_hz": 7.4e6}, {"a": "m", "b": "o"}],
//     "pump": {"detuning_hz": -5.043e9, "intracavity_photons": 1, "g_om0_hz": 561e3},
//     "flux_tuning": {"omega0_hz": 5.232e9, "c2_hz_per_a2": 1.8e9},
//     "metadata": {...}, "setup": {...}
//   }

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "transim/error.hpp"
#include "transim/model.hpp"
#include "transim/units.hpp"

namespace transim {

using Json = nlohmann::json;

struct DeviceFile {
  TransducerModel model;
  Json setup = Json::object();  // experimental-setup block, read by calibration/noise code
};

namespace detail {

inline double unit_scale(const std::string& unit) {
  if (unit == "Hz") return 1.0;
  if (unit == "kHz") return 1e3;
  if (unit == "MHz") return 1e6;
  if (unit == "GHz") return 1e9;
  throw ConfigError("unknown frequency unit '" + unit + "' (expected Hz, kHz, MHz or GHz)");
}

inline ModeKind parse_kind(const std::string& s) {
  if (s == "electrical") return ModeKind::electrical;
  if (s == "mechanical") return ModeKind::mechanical;
  if (s == "optical") return ModeKind::optical;
  throw ConfigError("unknown mode kind '" + s + "'");
}

inline PortGeometry parse_geometry(const std::string& s) {
  if (s == "transmission_twosided") return PortGeometry::transmission_twosided;
  if (s == "reflection_onesided") return PortGeometry::reflection_onesided;
  if (s == "none") return PortGeometry::none;
  throw ConfigError("unknown port geometry '" + s + "'");
}

template <class T>
T require(const Json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline DeviceFile parse_device(const Json& j) {
  try {
    const double s = detail::unit_scale(j.value("unit", std::string("Hz")));
    auto rate = [s](double v) { return angular(v * s); };

    std::vector<Mode> modes;
    for (const auto& jm : detail::require<Json>(j, "modes")) {
      Mode m;
      m.label = detail::require<std::string>(jm, "label");
      m.kind = detail::parse_kind(detail::require<std::string>(jm, "kind"));
      m.omega = rate(detail::require<double>(jm, "freq_hz"));
      m.kappa_int = rate(jm.value("kappa_int_hz", 0.0));
      m.kappa_ext = rate(jm.value("kappa_ext_hz", 0.0));
      m.port = detail::parse_geometry(jm.value("port_geometry", std::string("none")));
      modes.push_back(std::move(m));
    }
    std::vector<Coupling> couplings;
    for (const auto& jc : j.value("couplings", Json::array()))
      couplings.push_back({detail::require<std::string>(jc, "a"), detail::require<std::string>(jc, "b"),
                           rate(jc.value("g_hz", 0.0))});
    PumpConfig pump;
    if (j.contains("pump")) {
      const auto& jp = j["pump"];
      pump.detuning = rate(jp.value("detuning_hz", 0.0));
      pump.intracavity_photons = jp.value("intracavity_photons", 0.0);
      pump.g_om0 = rate(jp.value("g_om0_hz", 0.0));
    }
    std::optional<FluxTuningCurve> tuning;
    if (j.contains("flux_tuning")) {
      const auto& jt = j["flux_tuning"];
      tuning = FluxTuningCurve{rate(detail::require<double>(jt, "omega0_hz")),
                               rate(detail::require<double>(jt, "c2_hz_per_a2"))};
    }
    TransducerModel model(std::move(modes), std::move(couplings), pump, tuning);
    const Json meta = j.value("metadata", Json::object());
    for (const auto& [k, v] : meta.items())
      if (v.is_number()) model.set_metadata(k, v.get<double>());
    return {std::move(model), j.value("setup", Json::object())};
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("device file: ") + e.what());
  }
}

inline DeviceFile load_device(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open device file " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return parse_device(j);
}

/// Serializes in Hz. Optical couplings are written without a rate since the
/// pump block determines them.
inline Json to_json(const TransducerModel& model) {
  Json j;
  j["unit"] = "Hz";
  j["modes"] = Json::array();
  for (const auto& m : model.modes())
    j["modes"].push_back({{"label", m.label},
                          {"kind", std::string(to_string(m.kind))},
                          {"freq_hz", cyclic(m.omega)},
                          {"kappa_int_hz", cyclic(m.kappa_int)},
                          {"kappa_ext_hz", cyclic(m.kappa_ext)},
                          {"port_geometry", std::string(to_string(m.port))}});
  j["couplings"] = Json::array();
  for (const auto& c : model.couplings()) {
    Json jc{{"a", c.mode_a}, {"b", c.mode_b}};
    const bool optical = model.mode(c.mode_a).kind == ModeKind::optical || model.mode(c.mode_b).kind == ModeKind::optical;
    if (!optical) jc["g_hz"] = cyclic(c.g);
    j["couplings"].push_back(jc);
  }
  j["pump"] = {{"detuning_hz", cyclic(model.pump().detuning)},
               {"intracavity_photons", model.pump().intracavity_photons},
               {"g_om0_hz", cyclic(model.pump().g_om0)}};
  if (model.flux_tuning())
    j["flux_tuning"] = {{"omega0_hz", cyclic(model.flux_tuning()->omega0)},
                        {"c2_hz_per_a2", cyclic(model.flux_tuning()->c2)}};
  Json meta = Json::object();
  for (const auto& [k, v] : model.metadata()) meta[k] = v;
  j["metadata"] = meta;
  return j;
}

/// FNV-1a over the canonical JSON dump, as 16 hex digits.
inline std::string model_hash(const TransducerModel& model) {
  const std::string text = to_json(model).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace transim
