#pragma once

// Reference computations used by the tests. Kept independent of the library code paths.

#include <boost/multiprecision/cpp_dec_float.hpp>

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace oracle {

using HighPrecision = boost::multiprecision::cpp_dec_float_50;

// Threshold schedule evaluated in 50-digit arithmetic.
inline double k_dyn(double a, double p, double q, double k1, long tick) {
  const HighPrecision A(a), P(p), Q(q), K(k1);
  const HighPrecision t = A * boost::multiprecision::tanh(P * (HighPrecision(tick) - Q)) + A + 1;
  return static_cast<double>(t * K);
}

inline double discrim_loss(double avg, double k, double delta, double es, double lambda) {
  const HighPrecision d(delta);
  const HighPrecision log_d = boost::multiprecision::log(d);
  return static_cast<double>(HighPrecision(es) * (HighPrecision(avg) - HighPrecision(k)) / d +
                             HighPrecision(lambda) * log_d * log_d);
}

inline double delta_gradient(double avg, double k, double delta, double es, double lambda) {
  const HighPrecision d(delta);
  return static_cast<double>(HighPrecision(es) * (HighPrecision(k) - HighPrecision(avg)) / (d * d) +
                             2 * HighPrecision(lambda) * boost::multiprecision::log(d) / d);
}

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Numerical gradient of f at x by central differences, one coordinate at a time.
inline std::vector<double> numerical_gradient(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(double actual, double expected, double floor = 1e-8) {
  return std::abs(actual - expected) / std::max({std::abs(actual), std::abs(expected), floor});
}

}  // namespace oracle
