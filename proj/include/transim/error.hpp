#pragma once

#include <stdexcept>
#include <string>

namespace transim {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Zero linewidth, zero efficiency or similar input that makes a ratio undefined.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Invalid mode/coupling configuration, disconnected graph, non-finite parameters.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// A port was named that has no external coupling.
class PortError : public Error {
 public:
  using Error::Error;
};

/// Singular dynamical matrix and similar numerical breakdowns.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class UnphysicalAsymmetryError : public Error {
 public:
  using Error::Error;
};

class InsufficientStatisticsError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace transim
