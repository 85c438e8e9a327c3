#pragma once

#include <string>
#include <vector>

#include "sepitfp/signal.hpp"
#include "sepitfp/waveform.hpp"

namespace sepitfp {

// Fitted Steinmetz coefficients. ki is always derived from (k, a, b) via
// igse_coefficient, never set directly.
struct SteinmetzParams {
  double k = 0.0;   // W/m^3 per Hz^a T^b
  double a = 0.0;   // frequency exponent
  double b = 0.0;   // flux exponent
  double ki = 0.0;  // derived iGSE coefficient

  std::string material;
  double fit_residual = 0.0;  // RMS log-residual of the fit, 0 for exact params

  // Throws DomainError if invariants are violated (including ki drift
  // against a recomputation from k, a, b).
  void validate() const;
};

enum class EmpiricalBranch { kSteinmetz, kIgse };

// Outcome of the spectral-entropy hard switch.
struct ModelChoice {
  EmpiricalBranch branch = EmpiricalBranch::kSteinmetz;
  double entropy = 0.0;    // normalized H that produced the choice
  double entropy_raw = 0.0;
  double threshold = 0.0;  // H_th used
};

// Builds params with ki derived from (k, a, b).
SteinmetzParams make_steinmetz_params(double k, double a, double b,
                                      std::string material = "");

// iGSE coefficient: k / ((2*pi)^(a-1) * 2^(b-a) * I(a)) with
// I(a) = integral over one period of |cos t|^a, chosen so that the iGSE
// integral reproduces the Steinmetz value on pure sinusoids.
double igse_coefficient(double k, double a, double b);

// P = k * f^a * Bm^b
double steinmetz_loss(const SteinmetzParams& p, double freq, double bm);

// Time-averaged iGSE loss over one period, trapezoidal integration on the
// periodic 1024-point grid.
double igse_loss(const SteinmetzParams& p, const FluxWaveform& w);

struct FitSample {
  double freq = 0.0;
  double bm = 0.0;
  double loss = 0.0;
};

// Ordinary least squares on ln P = ln k + a ln f + b ln Bm.
SteinmetzParams fit_steinmetz(const std::vector<FitSample>& samples,
                              std::string material = "");

// Spectral-entropy hard switch; ties (H == h_th) go to Steinmetz.
ModelChoice classify_waveform(const FluxWaveform& w, double h_th);

struct EmpiricalPrediction {
  double loss = 0.0;  // W/m^3
  ModelChoice choice;
};

// Dispatches to steinmetz_loss (Bm = delta_b/2) or igse_loss per the switch.
EmpiricalPrediction empirical_predict(const SteinmetzParams& p, const FluxWaveform& w,
                                      double h_th);

// Key-value text serialization so CLI runs can reuse fits.
std::string params_to_text(const SteinmetzParams& p);
SteinmetzParams params_from_text(const std::string& text);
void save_params(const SteinmetzParams& p, const std::string& path);
SteinmetzParams load_params(const std::string& path);

}  // namespace sepitfp
