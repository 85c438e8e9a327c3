#pragma once

#include <optional>
#include <vector>

namespace sepitfp {

// Canonical waveform length; ingestion resamples everything to this.
inline constexpr std::size_t kWaveformPoints = 1024;

// One excitation sample: one full period of flux density plus operating
// conditions and an optional measured volumetric loss label.
struct FluxWaveform {
  std::vector<double> b;       // tesla, kWaveformPoints samples
  double freq = 0.0;           // Hz, fundamental frequency
  double temp = 25.0;          // degrees Celsius
  std::optional<double> loss;  // W/m^3, measured, > 0 when present

  // Throws DomainError on any invariant violation.
  void validate() const;
};

}  // namespace sepitfp
