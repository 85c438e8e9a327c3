#pragma once

#include <complex>
#include <vector>

#include "sepitfp/waveform.hpp"

namespace sepitfp {

// One-sided power spectrum, DC bin excluded: power[i] = |S[i+1]|^2 for
// DFT bins k = 1 .. n/2.
struct Spectrum {
  std::vector<double> power;

  std::size_t n_bins() const { return power.size(); }
};

// Raw Shannon entropy of the normalized power spectrum plus the
// ln(n_bins)-normalized value used for waveform classification.
struct SpectralEntropy {
  double normalized = 0.0;  // in [0, 1]
  double raw = 0.0;         // nats
};

// In-place radix-2 FFT; length must be a power of two.
void fft(std::vector<std::complex<double>>& x);

// Full two-sided squared-magnitude DFT of b, DC included. Exposed for
// Parseval-style consistency checks.
std::vector<double> power_spectrum_full(const std::vector<double>& b);

// One-sided power spectrum of the waveform (bins 1..512, DC excluded).
Spectrum power_spectrum(const FluxWaveform& w);

// Normalized spectral entropy of a spectrum. Throws DomainError when the
// spectrum carries no power at all.
SpectralEntropy spectral_entropy_full(const Spectrum& s);
double spectral_entropy(const Spectrum& s);

// Peak-to-peak flux swing, tesla.
double delta_b(const FluxWaveform& w);

// dB/dt in tesla/second: periodic central differences with
// dt = 1 / (freq * n).
std::vector<double> db_dt(const FluxWaveform& w);

}  // namespace sepitfp
