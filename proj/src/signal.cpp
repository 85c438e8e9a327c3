#include "sepitfp/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "sepitfp/errors.hpp"

namespace sepitfp {

void FluxWaveform::validate() const {
  if (b.size() != kWaveformPoints) {
    throw ShapeError("FluxWaveform: expected " + std::to_string(kWaveformPoints) +
                     " samples, got " + std::to_string(b.size()));
  }
  for (double v : b) {
    if (!std::isfinite(v)) throw NumericError("FluxWaveform: non-finite flux sample");
  }
  if (!std::isfinite(freq) || freq <= 0.0) {
    throw DomainError("FluxWaveform: freq must be finite and > 0");
  }
  if (!std::isfinite(temp)) throw DomainError("FluxWaveform: non-finite temperature");
  if (loss && (!std::isfinite(*loss) || *loss <= 0.0)) {
    throw DomainError("FluxWaveform: loss label must be finite and > 0");
  }
}

void fft(std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  if (n == 0 || (n & (n - 1)) != 0) {
    throw ShapeError("fft: length must be a power of two, got " + std::to_string(n));
  }
  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

std::vector<double> power_spectrum_full(const std::vector<double>& b) {
  std::vector<std::complex<double>> x(b.begin(), b.end());
  fft(x);
  std::vector<double> p(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) p[k] = std::norm(x[k]);
  return p;
}

Spectrum power_spectrum(const FluxWaveform& w) {
  w.validate();
  const std::vector<double> full = power_spectrum_full(w.b);
  Spectrum s;
  s.power.assign(full.begin() + 1, full.begin() + 1 + full.size() / 2);
  return s;
}

SpectralEntropy spectral_entropy_full(const Spectrum& s) {
  double total = 0.0;
  for (double p : s.power) {
    if (p < 0.0 || !std::isfinite(p)) throw DomainError("spectral_entropy: invalid power value");
    total += p;
  }
  if (total <= 0.0) {
    throw DomainError("spectral_entropy: all-zero spectrum, entropy undefined");
  }
  double h = 0.0;
  for (double p : s.power) {
    if (p > 0.0) {
      const double pk = p / total;
      h -= pk * std::log(pk);
    }
  }
  SpectralEntropy out;
  out.raw = h;
  out.normalized = h / std::log(static_cast<double>(s.n_bins()));
  // clamp rounding spill just outside [0, 1]
  out.normalized = std::clamp(out.normalized, 0.0, 1.0);
  return out;
}

double spectral_entropy(const Spectrum& s) { return spectral_entropy_full(s).normalized; }

double delta_b(const FluxWaveform& w) {
  w.validate();
  const auto [mn, mx] = std::minmax_element(w.b.begin(), w.b.end());
  return *mx - *mn;
}

std::vector<double> db_dt(const FluxWaveform& w) {
  w.validate();
  const std::size_t n = w.b.size();
  const double dt = 1.0 / (w.freq * static_cast<double>(n));
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double next = w.b[(i + 1) % n];
    const double prev = w.b[(i + n - 1) % n];
    d[i] = (next - prev) / (2.0 * dt);
  }
  return d;
}

}  // namespace sepitfp
