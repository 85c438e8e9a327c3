#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sepitfp/model.hpp"

namespace sepitfp {

// Relative-error distribution summary plus the challenge metric.
struct ErrorStats {
  double mean = 0.0;
  double median = 0.0;
  double p95 = 0.0;  // Abs.95%, percent
  double max = 0.0;
};

struct EvalReport {
  std::vector<double> per_sample_rel_err;        // network |pred-act|/act
  std::vector<double> prior_per_sample_rel_err;  // prior-only |emp-act|/act
  ErrorStats net;
  ErrorStats prior;
  std::size_t count_steinmetz = 0;
  std::size_t count_igse = 0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double h_th = 0.0;
  std::string material;
  std::uint64_t seed = 0;
  std::string config_digest;
};

// 95th percentile by linear interpolation between closest ranks
// (rank = 0.95 * (n - 1), zero-indexed), expressed in percent.
double abs95(const std::vector<double>& errors);

ErrorStats error_stats(std::vector<double> errors);

// Runs the network on every labeled sample; also records the prior-only
// error distribution for the ablation column.
EvalReport evaluate(const SEPITFPNet& net, const Dataset& ds);

// Plain text report: header block, metric table, branch-count table.
std::string report_to_text(const EvalReport& r);
// Machine-readable per-sample error CSV (index, net_rel_err, prior_rel_err).
void write_error_csv(const EvalReport& r, const std::string& path);
void write_report(const EvalReport& r, const std::string& text_path,
                  const std::string& csv_path);

// Grid-search table as plain text.
std::string grid_table_to_text(const GridSearchResult& g);

}  // namespace sepitfp
