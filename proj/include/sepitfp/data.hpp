#pragma once

#include <array>
#include <string>
#include <vector>

#include "sepitfp/empirical.hpp"
#include "sepitfp/waveform.hpp"

namespace sepitfp {

// Indices into the scalar feature vector (freq, temp, delta_b, H, ln p_emp).
inline constexpr std::size_t kScalarFeatureCount = 5;

// Per-field z-score statistics, derived from the training split only.
struct NormStats {
  double amp_std = 1.0;  // stddev of delta_b/2 over the training split
  std::array<double, kScalarFeatureCount> mean{};
  std::array<double, kScalarFeatureCount> stddev{};

  std::array<double, kScalarFeatureCount> normalize(
      const std::array<double, kScalarFeatureCount>& raw) const;
  std::array<double, kScalarFeatureCount> denormalize(
      const std::array<double, kScalarFeatureCount>& z) const;
};

struct Dataset {
  std::vector<FluxWaveform> samples;
  std::string material;

  std::size_t size() const { return samples.size(); }
};

// Loads the four aligned MagNet-style CSV files from a directory:
// B_Field.csv, Frequency.csv, Temperature.csv, Volumetric_Loss.csv.
// Waveforms are resampled to 1024 points by linear interpolation.
Dataset load_magnet_dir(const std::string& path);

// Writes a dataset back out in the same four-file layout.
void save_magnet_dir(const Dataset& ds, const std::string& path);

// Linear-interpolation resampling of one period to n points.
std::vector<double> resample_linear(const std::vector<double>& src, std::size_t n);

struct SplitResult {
  Dataset train, val, test;
};

// Deterministic seeded shuffle then contiguous partition.
SplitResult split(const Dataset& ds, const std::array<double, 3>& fractions,
                  std::uint64_t seed);

// Synthetic dataset with iGSE labels: log-uniform freq in [20 kHz, 500 kHz],
// Bm in [10 mT, 300 mT], temp in [25, 90] C, waveform family in
// {sinusoid, triangle, trapezoid(duty in [0.2, 0.8])}; label =
// igse_loss * (1 + eps), eps ~ N(0, noise_rel), clipped positive.
Dataset synth_generate(std::size_t n, const SteinmetzParams& params, double noise_rel,
                       std::uint64_t seed);

// Waveform constructors used by the generator and by tests.
std::vector<double> make_sinusoid(double bm, std::size_t n = kWaveformPoints,
                                  std::size_t cycles = 1, double phase = 0.0);
std::vector<double> make_triangle(double bm, std::size_t n = kWaveformPoints);
std::vector<double> make_trapezoid(double bm, double duty, std::size_t n = kWaveformPoints);

// Training-split statistics for the model's scalar feature stream.
NormStats compute_norm_stats(const Dataset& train, const SteinmetzParams& prior,
                             double h_th);

// Raw scalar feature vector (freq, temp, delta_b, H, ln p_emp) for one sample.
std::array<double, kScalarFeatureCount> scalar_features(const FluxWaveform& w,
                                                        const SteinmetzParams& prior,
                                                        double h_th);

}  // namespace sepitfp
