#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sep {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input: malformed config, bundle file, unsupported family, bad parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A size limit (quotient vertices, enumeration window, dense state space) was exceeded.
class CapExceeded : public Error {
 public:
  using Error::Error;
};

/// A checked mathematical identity or inequality failed at run time.
class AssertionFailure : public Error {
 public:
  using Error::Error;
};

namespace tol {
inline constexpr double eigen = 1e-10;
inline constexpr double identity_abs = 1e-12;
inline constexpr double identity_rel = 1e-9;
inline constexpr double probability_sum = 1e-12;
inline constexpr double expm = 1e-10;
}  // namespace tol

namespace caps {
/// Largest |V_m| for which measures are stored as dense probability vectors.
inline constexpr int exact_sites = 16;
/// Largest |V_m| for which a dense generator matrix is built.
inline constexpr int dense_sites = 12;
/// Largest window (in sites) enumerated for bundle tables and global averages.
inline constexpr int window_sites = 24;
/// Default cap on quotient sizes in build_tower.
inline constexpr std::size_t quotient_vertices = std::size_t{1} << 22;
}  // namespace caps

inline bool approx_equal(double a, double b, double abs_tol = tol::identity_abs,
                         double rel_tol = tol::identity_rel) {
  const double diff = a > b ? a - b : b - a;
  const double scale = (a > 0 ? a : -a) > (b > 0 ? b : -b) ? (a > 0 ? a : -a) : (b > 0 ? b : -b);
  return diff <= abs_tol || diff <= rel_tol * scale;
}

}  // namespace sep
