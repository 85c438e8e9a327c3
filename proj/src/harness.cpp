#include "sepitfp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sepitfp/errors.hpp"

namespace sepitfp {

namespace {

double percentile(const std::vector<double>& sorted, double q) {
  const auto n = sorted.size();
  if (n == 1) return sorted[0];
  const double rank = q * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(rank);
  const double frac = rank - static_cast<double>(lo);
  if (lo + 1 >= n) return sorted[n - 1];
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

double abs95(const std::vector<double>& errors) {
  if (errors.empty()) throw DomainError("abs95: empty error sequence");
  std::vector<double> s = errors;
  std::sort(s.begin(), s.end());
  return 100.0 * percentile(s, 0.95);
}

ErrorStats error_stats(std::vector<double> errors) {
  if (errors.empty()) throw DomainError("error_stats: empty error sequence");
  ErrorStats st;
  std::sort(errors.begin(), errors.end());
  double sum = 0.0;
  for (double e : errors) sum += e;
  st.mean = sum / static_cast<double>(errors.size());
  st.median = percentile(errors, 0.5);
  st.p95 = 100.0 * percentile(errors, 0.95);
  st.max = errors.back();
  return st;
}

EvalReport evaluate(const SEPITFPNet& net, const Dataset& ds) {
  if (ds.size() == 0) throw DataError("evaluate: empty dataset");
  NoGradGuard ng;
  EvalReport r;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const FluxWaveform& w = ds.samples[i];
    if (!w.loss) throw DataError("evaluate: sample " + std::to_string(i) + " has no label");
    ForwardResult fr;
    try {
      fr = net.forward(w);
    } catch (const std::exception& e) {
      throw DataError("evaluate: sample " + std::to_string(i) + ": " + e.what());
    }
    r.per_sample_rel_err.push_back(std::abs(fr.p_pred - *w.loss) / *w.loss);
    r.prior_per_sample_rel_err.push_back(std::abs(fr.p_emp - *w.loss) / *w.loss);
    if (fr.choice.branch == EmpiricalBranch::kSteinmetz) {
      ++r.count_steinmetz;
    } else {
      ++r.count_igse;
    }
  }
  r.net = error_stats(r.per_sample_rel_err);
  r.prior = error_stats(r.prior_per_sample_rel_err);
  r.lambda1 = net.cfg.lambda1;
  r.lambda2 = net.cfg.lambda2;
  r.h_th = net.cfg.h_th;
  r.material = ds.material;
  r.seed = net.cfg.seed;
  // cheap stable digest of the resolved config text
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : net.cfg.to_text()) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  std::ostringstream os;
  os << std::hex << h;
  r.config_digest = os.str();
  return r;
}

std::string report_to_text(const EvalReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << "# SEPI-TFPNet evaluation report\n"
     << "# Abs.95% = 95th percentile of |pred-act|/act, percent;\n"
     << "# percentile rule: linear interpolation between closest ranks\n"
     << "config_digest = " << r.config_digest << "\n"
     << "material = " << r.material << "\n"
     << "seed = " << r.seed << "\n"
     << "lambda1 = " << r.lambda1 << "\n"
     << "lambda2 = " << r.lambda2 << "\n"
     << "h_th = " << r.h_th << "\n"
     << "samples = " << r.per_sample_rel_err.size() << "\n\n"
     << "metric       network      prior_only\n"
     << "mean         " << r.net.mean << "      " << r.prior.mean << "\n"
     << "median       " << r.net.median << "      " << r.prior.median << "\n"
     << "abs95_pct    " << r.net.p95 << "      " << r.prior.p95 << "\n"
     << "max          " << r.net.max << "      " << r.prior.max << "\n\n"
     << "branch       count\n"
     << "steinmetz    " << r.count_steinmetz << "\n"
     << "igse         " << r.count_igse << "\n";
  return os.str();
}

void write_error_csv(const EvalReport& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("write_error_csv: cannot open " + path);
  f.precision(17);
  f << "index,net_rel_err,prior_rel_err\n";
  for (std::size_t i = 0; i < r.per_sample_rel_err.size(); ++i) {
    f << i << "," << r.per_sample_rel_err[i] << "," << r.prior_per_sample_rel_err[i] << "\n";
  }
}

void write_report(const EvalReport& r, const std::string& text_path,
                  const std::string& csv_path) {
  std::ofstream f(text_path);
  if (!f) throw DataError("write_report: cannot open " + text_path);
  f << report_to_text(r);
  write_error_csv(r, csv_path);
}

std::string grid_table_to_text(const GridSearchResult& g) {
  std::ostringstream os;
  os.precision(6);
  os << "lambda1  lambda2  val_abs95_pct  status\n";
  for (const GridCell& c : g.table) {
    os << c.lambda1 << "  " << c.lambda2 << "  ";
    if (c.ok) {
      os << c.val_abs95 << "  ok\n";
    } else {
      os << "-  failed: " << c.error << "\n";
    }
  }
  os << "best: lambda1 = " << g.best_lambda1 << ", lambda2 = " << g.best_lambda2 << "\n";
  return os.str();
}

}  // namespace sepitfp
