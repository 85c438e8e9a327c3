#include "sepitfp/empirical.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "sepitfp/errors.hpp"

namespace sepitfp {

namespace {

// integral over [0, 2*pi] of |cos t|^a, via the Beta-function closed form
// 2*sqrt(pi)*Gamma((a+1)/2)/Gamma(a/2+1).
double abs_cos_pow_integral(double a) {
  return 2.0 * std::sqrt(std::numbers::pi) * std::tgamma((a + 1.0) / 2.0) /
         std::tgamma(a / 2.0 + 1.0);
}

}  // namespace

void SteinmetzParams::validate() const {
  if (!(k > 0.0) || !std::isfinite(k)) throw DomainError("SteinmetzParams: k must be > 0");
  if (!std::isfinite(a) || !std::isfinite(b)) {
    throw DomainError("SteinmetzParams: exponents must be finite");
  }
  if (!(ki > 0.0)) throw DomainError("SteinmetzParams: ki must be > 0");
  const double expect = igse_coefficient(k, a, b);
  if (std::abs(ki - expect) > 1e-12 * expect) {
    throw DomainError("SteinmetzParams: ki inconsistent with (k, a, b)");
  }
}

double igse_coefficient(double k, double a, double b) {
  if (!(k > 0.0) || !std::isfinite(k)) throw DomainError("igse_coefficient: k must be > 0");
  if (!std::isfinite(a) || !std::isfinite(b)) {
    throw DomainError("igse_coefficient: exponents must be finite");
  }
  const double denom = std::pow(2.0 * std::numbers::pi, a - 1.0) *
                       std::pow(2.0, b - a) * abs_cos_pow_integral(a);
  return k / denom;
}

SteinmetzParams make_steinmetz_params(double k, double a, double b, std::string material) {
  SteinmetzParams p;
  p.k = k;
  p.a = a;
  p.b = b;
  p.ki = igse_coefficient(k, a, b);
  p.material = std::move(material);
  p.validate();
  return p;
}

double steinmetz_loss(const SteinmetzParams& p, double freq, double bm) {
  if (!(freq > 0.0)) throw DomainError("steinmetz_loss: freq must be > 0");
  if (!(bm > 0.0)) throw DomainError("steinmetz_loss: bm must be > 0");
  return p.k * std::pow(freq, p.a) * std::pow(bm, p.b);
}

double igse_loss(const SteinmetzParams& p, const FluxWaveform& w) {
  const double db = delta_b(w);
  if (!(db > 0.0)) throw DomainError("igse_loss: zero flux swing");
  const std::vector<double> d = db_dt(w);
  const double swing_pow = std::pow(db, p.b - p.a);
  // uniform-grid trapezoid over a full period reduces to the mean
  double acc = 0.0;
  for (double v : d) acc += std::pow(std::abs(v), p.a);
  return p.ki * swing_pow * acc / static_cast<double>(d.size());
}

SteinmetzParams fit_steinmetz(const std::vector<FitSample>& samples, std::string material) {
  if (samples.size() < 3) {
    throw FitError("fit_steinmetz: need at least 3 samples, got " +
                   std::to_string(samples.size()));
  }
  const auto n = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const FitSample& s = samples[static_cast<std::size_t>(i)];
    if (!(s.freq > 0.0) || !(s.bm > 0.0) || !(s.loss > 0.0)) {
      throw FitError("fit_steinmetz: sample " + std::to_string(i) +
                     " has a non-positive field");
    }
    X(i, 0) = 1.0;
    X(i, 1) = std::log(s.freq);
    X(i, 2) = std::log(s.bm);
    y(i) = std::log(s.loss);
  }
  const double var_f = (X.col(1).array() - X.col(1).mean()).square().sum();
  const double var_b = (X.col(2).array() - X.col(2).mean()).square().sum();
  if (var_f < 1e-20) throw FitError("fit_steinmetz: degenerate design, all samples share one frequency");
  if (var_b < 1e-20) throw FitError("fit_steinmetz: degenerate design, all samples share one flux amplitude");

  Eigen::Matrix3d xtx = X.transpose() * X;
  Eigen::FullPivLU<Eigen::Matrix3d> lu(xtx);
  if (!lu.isInvertible()) {
    throw FitError("fit_steinmetz: rank-deficient design, (ln f, ln Bm) collinear");
  }
  const Eigen::Vector3d beta = lu.solve(X.transpose() * y);
  const double rms = std::sqrt((y - X * beta).squaredNorm() / static_cast<double>(n));

  SteinmetzParams p = make_steinmetz_params(std::exp(beta(0)), beta(1), beta(2),
                                            std::move(material));
  p.fit_residual = rms;
  return p;
}

ModelChoice classify_waveform(const FluxWaveform& w, double h_th) {
  if (!(h_th > 0.0) || !(h_th < 1.0)) {
    throw DomainError("classify_waveform: h_th must lie in (0, 1)");
  }
  const SpectralEntropy h = spectral_entropy_full(power_spectrum(w));
  ModelChoice c;
  c.entropy = h.normalized;
  c.entropy_raw = h.raw;
  c.threshold = h_th;
  c.branch = (h.normalized <= h_th) ? EmpiricalBranch::kSteinmetz : EmpiricalBranch::kIgse;
  return c;
}

EmpiricalPrediction empirical_predict(const SteinmetzParams& p, const FluxWaveform& w,
                                      double h_th) {
  EmpiricalPrediction out;
  out.choice = classify_waveform(w, h_th);
  if (out.choice.branch == EmpiricalBranch::kSteinmetz) {
    out.loss = steinmetz_loss(p, w.freq, delta_b(w) / 2.0);
  } else {
    out.loss = igse_loss(p, w);
  }
  return out;
}

std::string params_to_text(const SteinmetzParams& p) {
  std::ostringstream os;
  os.precision(17);
  os << "k = " << p.k << "\n"
     << "a = " << p.a << "\n"
     << "b = " << p.b << "\n"
     << "ki = " << p.ki << "\n"
     << "material = " << p.material << "\n"
     << "fit_residual = " << p.fit_residual << "\n";
  return os.str();
}

SteinmetzParams params_from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  for (const char* key : {"k", "a", "b", "ki"}) {
    if (!kv.count(key)) throw DataError(std::string("params_from_text: missing key ") + key);
  }
  SteinmetzParams p = make_steinmetz_params(std::stod(kv["k"]), std::stod(kv["a"]),
                                            std::stod(kv["b"]), kv["material"]);
  if (kv.count("fit_residual")) p.fit_residual = std::stod(kv["fit_residual"]);
  const double ki_file = std::stod(kv["ki"]);
  if (std::abs(ki_file - p.ki) > 1e-9 * p.ki) {
    throw DataError("params_from_text: stored ki inconsistent with (k, a, b)");
  }
  return p;
}

void save_params(const SteinmetzParams& p, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("save_params: cannot open " + path);
  f << params_to_text(p);
}

SteinmetzParams load_params(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("load_params: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return params_from_text(ss.str());
}

}  // namespace sepitfp
