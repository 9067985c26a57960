#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "capslab/errors.hpp"
#include "capslab/matrix.hpp"

#include <json.hpp>

namespace capslab {

/// In-place iterative radix-2 transform; size must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw UsageError("fft_inplace: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Single-sided amplitude spectrum of the mean-removed signal.
/// Conventions: zero-pad to the next power of two P, evaluate bins
/// k = 1..P/2 at f_k = k*f_s/P with magnitudes (2/P)|X_k|; the DC bin is
/// dropped. Optional Hann window applied before the transform.
inline void amplitude_spectrum(const Vec& signal, double f_s, Vec& amplitudes, Vec& frequencies,
                               bool hann = false) {
  if (signal.size() < 2) throw MetricError("amplitude_spectrum: signal needs at least 2 samples");
  if (f_s <= 0.0) throw MetricError("amplitude_spectrum: sampling frequency must be positive");
  if (!all_finite(signal)) throw MetricError("amplitude_spectrum: non-finite sample");

  double mean = 0.0;
  for (double v : signal) mean += v;
  mean /= static_cast<double>(signal.size());

  const std::size_t P = next_pow2(signal.size());
  std::vector<std::complex<double>> buf(P, {0.0, 0.0});
  for (std::size_t i = 0; i < signal.size(); ++i) {
    double v = signal[i] - mean;
    if (hann) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                            static_cast<double>(signal.size() - 1));
      v *= w;
    }
    buf[i] = {v, 0.0};
  }
  fft_inplace(buf);

  const std::size_t half = P / 2;
  amplitudes.assign(half, 0.0);
  frequencies.assign(half, 0.0);
  for (std::size_t k = 1; k <= half; ++k) {
    amplitudes[k - 1] = 2.0 / static_cast<double>(P) * std::abs(buf[k]);
    frequencies[k - 1] = static_cast<double>(k) * f_s / static_cast<double>(P);
  }
}

/// Amplitude-weighted mean normalized frequency of one or more channels.
/// Lower is smoother; a constant signal scores zero.
struct SmoothnessReport {
  double f_s = 0.0;
  std::size_t n = 0;            // spectral bins per channel
  Vec frequencies;              // shared across channels
  std::vector<Vec> amplitudes;  // one array per channel
  Vec channel_sm;
  double sm = 0.0;  // mean over channels
};

inline SmoothnessReport smoothness(const std::vector<Vec>& channels, double f_s,
                                   bool hann = false) {
  if (channels.empty()) throw MetricError("smoothness: no channels");
  const std::size_t len = channels.front().size();
  for (const Vec& c : channels)
    if (c.size() != len) throw MetricError("smoothness: channels must share length");

  SmoothnessReport rep;
  rep.f_s = f_s;
  for (const Vec& c : channels) {
    Vec amp, freq;
    amplitude_spectrum(c, f_s, amp, freq, hann);
    rep.frequencies = std::move(freq);
    double acc = 0.0;
    for (std::size_t i = 0; i < amp.size(); ++i) acc += amp[i] * rep.frequencies[i];
    const double sm = 2.0 / (static_cast<double>(amp.size()) * f_s) * acc;
    rep.channel_sm.push_back(sm);
    rep.amplitudes.push_back(std::move(amp));
  }
  rep.n = rep.frequencies.size();
  double mean = 0.0;
  for (double s : rep.channel_sm) mean += s;
  rep.sm = mean / static_cast<double>(rep.channel_sm.size());
  return rep;
}

inline SmoothnessReport smoothness(const Vec& signal, double f_s, bool hann = false) {
  return smoothness(std::vector<Vec>{signal}, f_s, hann);
}

/// CSV: header freq,ch0,ch1,... then one row per spectral bin.
inline void spectrum_to_csv(const SmoothnessReport& rep, std::ostream& out) {
  out << "freq";
  for (std::size_t c = 0; c < rep.amplitudes.size(); ++c) out << ",ch" << c;
  out << '\n';
  out.precision(17);
  for (std::size_t i = 0; i < rep.n; ++i) {
    out << rep.frequencies[i];
    for (const Vec& amp : rep.amplitudes) out << ',' << amp[i];
    out << '\n';
  }
}

inline void spectrum_to_csv(const SmoothnessReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("spectrum_to_csv: cannot open " + path);
  spectrum_to_csv(rep, out);
}

/// JSON summary: per-channel sm plus the cross-channel mean.
inline nlohmann::json smoothness_to_json(const SmoothnessReport& rep) {
  nlohmann::json j;
  j["f_s"] = rep.f_s;
  j["n"] = rep.n;
  nlohmann::json per;
  for (std::size_t c = 0; c < rep.channel_sm.size(); ++c)
    per["ch" + std::to_string(c)] = rep.channel_sm[c];
  j["sm"] = per;
  j["mean_sm"] = rep.sm;
  return j;
}

}  // namespace capslab
