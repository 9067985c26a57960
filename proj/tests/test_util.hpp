#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "capslab/matrix.hpp"
#include "capslab/spectrum.hpp"

namespace testutil {

/// Reference spectrum: same conventions as the fast path (mean removal,
/// zero-pad to next power of two, one-sided 2/P scaling, DC dropped) but the
/// transform is a direct O(N^2) sum.
inline void naive_spectrum(const capslab::Vec& signal, double f_s, capslab::Vec& amplitudes,
                           capslab::Vec& frequencies) {
  double mean = 0.0;
  for (double v : signal) mean += v;
  mean /= static_cast<double>(signal.size());

  const std::size_t P = capslab::next_pow2(signal.size());
  std::vector<double> x(P, 0.0);
  for (std::size_t i = 0; i < signal.size(); ++i) x[i] = signal[i] - mean;

  const std::size_t half = P / 2;
  amplitudes.assign(half, 0.0);
  frequencies.assign(half, 0.0);
  for (std::size_t k = 1; k <= half; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t n = 0; n < P; ++n) {
      const double ang =
          -2.0 * std::numbers::pi * static_cast<double>(k) * static_cast<double>(n) /
          static_cast<double>(P);
      acc += x[n] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    amplitudes[k - 1] = 2.0 / static_cast<double>(P) * std::abs(acc);
    frequencies[k - 1] = static_cast<double>(k) * f_s / static_cast<double>(P);
  }
}

inline capslab::Vec sine(std::size_t n, double amplitude, std::size_t bin) {
  capslab::Vec x(n);
  const std::size_t P = capslab::next_pow2(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(bin) *
                                static_cast<double>(i) / static_cast<double>(P));
  return x;
}

}  // namespace testutil
