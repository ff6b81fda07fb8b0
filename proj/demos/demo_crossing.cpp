// Builds the avoided-crossing map of the bundled device against resonator
// detuning, prints the narrowest splitting and the fitted coupling, and
// writes the map to crossing.csv.

#include <cstdio>

#include "transim/device_io.hpp"
#include "transim/fitkit.hpp"
#include "transim/freq_domain.hpp"
#include "transim/io.hpp"

int main(int argc, char** argv) {
  using namespace transim;
  const std::string path = argc > 1 ? argv[1] : std::string(TRANSIM_SOURCE_DIR) + "/data/device_tableS1.json";
  const auto dev = load_device(path).model;
  const double wm = dev.mode("m").omega;
  const auto probe = arange(wm - MHz(40), wm + MHz(40), MHz(0.1));
  const auto de = arange(MHz(-30), MHz(30) + 1.0, MHz(1));
  const auto grid = avoided_crossing_map(dev, probe, de, ControlAxis::delta_e);
  write_grid_csv("crossing.csv", grid);

  const auto split = min_branch_splitting(grid);
  const auto fit = fit_avoided_crossing(grid);
  std::printf("narrowest splitting %.3f MHz at delta_e = %.2f MHz\n", cyclic(split.splitting) / 1e6,
              cyclic(split.control) / 1e6);
  std::printf("fitted g = %.3f +- %.3f MHz (model %.3f MHz)\n", cyclic(fit.param("g")) / 1e6, cyclic(fit.sigma("g")) / 1e6,
              cyclic(dev.coupling("e", "m")) / 1e6);
  return 0;
}
