#include "sepitfp/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "sepitfp/errors.hpp"
#include "sepitfp/nn.hpp"
#include "sepitfp/signal.hpp"

namespace sepitfp {

namespace fs = std::filesystem;

std::array<double, kScalarFeatureCount> NormStats::normalize(
    const std::array<double, kScalarFeatureCount>& raw) const {
  std::array<double, kScalarFeatureCount> z{};
  for (std::size_t i = 0; i < kScalarFeatureCount; ++i) z[i] = (raw[i] - mean[i]) / stddev[i];
  return z;
}

std::array<double, kScalarFeatureCount> NormStats::denormalize(
    const std::array<double, kScalarFeatureCount>& z) const {
  std::array<double, kScalarFeatureCount> raw{};
  for (std::size_t i = 0; i < kScalarFeatureCount; ++i) raw[i] = z[i] * stddev[i] + mean[i];
  return raw;
}

namespace {

std::vector<std::vector<double>> read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("missing file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t pos = 0;
        const double v = std::stod(cell, &pos);
        while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
        if (pos != cell.size()) throw std::invalid_argument(cell);
        row.push_back(v);
      } catch (const std::exception&) {
        throw DataError(path + ": non-numeric cell at row " + std::to_string(lineno) +
                        ": '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::vector<double> resample_linear(const std::vector<double>& src, std::size_t n) {
  if (src.size() < 2) throw DataError("resample: need at least 2 source points");
  if (src.size() == n) return src;
  // one full period: interpolate on the periodic extension so the last
  // output sample sits between src.back() and src.front()
  const std::size_t m = src.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) * static_cast<double>(m) / static_cast<double>(n);
    const auto i0 = static_cast<std::size_t>(x);
    const double frac = x - static_cast<double>(i0);
    const double a = src[i0 % m];
    const double b = src[(i0 + 1) % m];
    out[i] = a + frac * (b - a);
  }
  return out;
}

Dataset load_magnet_dir(const std::string& path) {
  const std::string b_path = (fs::path(path) / "B_Field.csv").string();
  const std::string f_path = (fs::path(path) / "Frequency.csv").string();
  const std::string t_path = (fs::path(path) / "Temperature.csv").string();
  const std::string p_path = (fs::path(path) / "Volumetric_Loss.csv").string();
  const auto b_rows = read_csv(b_path);
  const auto f_rows = read_csv(f_path);
  const auto t_rows = read_csv(t_path);
  const auto p_rows = read_csv(p_path);
  auto check_count = [&](const std::string& other, std::size_t n) {
    if (n != b_rows.size()) {
      throw DataError("row-count mismatch: " + b_path + " has " +
                      std::to_string(b_rows.size()) + " rows, " + other + " has " +
                      std::to_string(n));
    }
  };
  check_count(f_path, f_rows.size());
  check_count(t_path, t_rows.size());
  check_count(p_path, p_rows.size());

  Dataset ds;
  ds.material = fs::path(path).filename().string();
  const std::size_t width = b_rows.empty() ? 0 : b_rows[0].size();
  for (std::size_t i = 0; i < b_rows.size(); ++i) {
    if (b_rows[i].size() != width) {
      throw DataError(b_path + ": ragged row " + std::to_string(i + 1) + " (" +
                      std::to_string(b_rows[i].size()) + " vs " + std::to_string(width) +
                      " cells)");
    }
    auto scalar_row = [&](const std::vector<std::vector<double>>& rows,
                          const std::string& file) {
      if (rows[i].size() != 1) {
        throw DataError(file + ": expected 1 value at row " + std::to_string(i + 1) +
                        ", got " + std::to_string(rows[i].size()));
      }
      return rows[i][0];
    };
    FluxWaveform w;
    w.b = resample_linear(b_rows[i], kWaveformPoints);
    w.freq = scalar_row(f_rows, f_path);
    w.temp = scalar_row(t_rows, t_path);
    w.loss = scalar_row(p_rows, p_path);
    try {
      w.validate();
    } catch (const DomainError& e) {
      throw DataError(path + ": sample " + std::to_string(i + 1) + ": " + e.what());
    }
    ds.samples.push_back(std::move(w));
  }
  return ds;
}

void save_magnet_dir(const Dataset& ds, const std::string& path) {
  fs::create_directories(path);
  std::ofstream fb(fs::path(path) / "B_Field.csv");
  std::ofstream ff(fs::path(path) / "Frequency.csv");
  std::ofstream ft(fs::path(path) / "Temperature.csv");
  std::ofstream fp(fs::path(path) / "Volumetric_Loss.csv");
  if (!fb || !ff || !ft || !fp) throw DataError("save_magnet_dir: cannot open files in " + path);
  fb.precision(17);
  ff.precision(17);
  ft.precision(17);
  fp.precision(17);
  for (const FluxWaveform& w : ds.samples) {
    for (std::size_t i = 0; i < w.b.size(); ++i) fb << (i ? "," : "") << w.b[i];
    fb << "\n";
    ff << w.freq << "\n";
    ft << w.temp << "\n";
    fp << (w.loss ? *w.loss : 0.0) << "\n";
  }
}

SplitResult split(const Dataset& ds, const std::array<double, 3>& fractions,
                  std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (f <= 0.0) throw DataError("split: fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DataError("split: fractions must sum to 1");

  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  // Fisher-Yates with our own RNG for a platform-stable shuffle
  Rng rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = rng.next_u64() % i;
    std::swap(idx[i - 1], idx[j]);
  }
  const auto n = ds.size();
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw DataError("split: a resulting split would be empty");
  }
  SplitResult out;
  out.train.material = out.val.material = out.test.material = ds.material;
  for (std::size_t i = 0; i < n; ++i) {
    const FluxWaveform& s = ds.samples[idx[i]];
    if (i < n_train) {
      out.train.samples.push_back(s);
    } else if (i < n_train + n_val) {
      out.val.samples.push_back(s);
    } else {
      out.test.samples.push_back(s);
    }
  }
  return out;
}

std::vector<double> make_sinusoid(double bm, std::size_t n, std::size_t cycles, double phase) {
  std::vector<double> b(n);
  for (std::size_t i = 0; i < n; ++i) {
    b[i] = bm * std::sin(2.0 * std::numbers::pi * static_cast<double>(cycles) *
                             static_cast<double>(i) / static_cast<double>(n) +
                         phase);
  }
  return b;
}

std::vector<double> make_triangle(double bm, std::size_t n) {
  std::vector<double> b(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(n);  // in [0,1)
    // ramp -bm -> +bm over the first half, back down over the second
    b[i] = (x < 0.5) ? (-bm + 4.0 * bm * x) : (3.0 * bm - 4.0 * bm * x);
  }
  return b;
}

std::vector<double> make_trapezoid(double bm, double duty, std::size_t n) {
  if (!(duty > 0.0) || !(duty > 0.0 && duty <= 1.0)) {
    throw DataError("make_trapezoid: duty must lie in (0, 1]");
  }
  // duty = total fraction of the period spent ramping, split between the
  // rising and falling edges; flats hold +-bm
  const double ramp = duty / 2.0;
  const double flat = (1.0 - duty) / 2.0;
  std::vector<double> b(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(n);
    if (x < ramp) {
      b[i] = -bm + 2.0 * bm * (x / ramp);
    } else if (x < ramp + flat) {
      b[i] = bm;
    } else if (x < 2.0 * ramp + flat) {
      b[i] = bm - 2.0 * bm * ((x - ramp - flat) / ramp);
    } else {
      b[i] = -bm;
    }
  }
  return b;
}

Dataset synth_generate(std::size_t n, const SteinmetzParams& params, double noise_rel,
                       std::uint64_t seed) {
  if (n < 1) throw DataError("synth_generate: n must be >= 1");
  if (noise_rel < 0.0) throw DataError("synth_generate: noise_rel must be >= 0");
  params.validate();
  Rng rng(seed);
  Dataset ds;
  ds.material = "synthetic";
  for (std::size_t i = 0; i < n; ++i) {
    const double freq = std::exp(rng.uniform(std::log(20e3), std::log(500e3)));
    const double bm = std::exp(rng.uniform(std::log(10e-3), std::log(300e-3)));
    const double temp = rng.uniform(25.0, 90.0);
    const double family = rng.uniform();
    FluxWaveform w;
    if (family < 1.0 / 3.0) {
      w.b = make_sinusoid(bm);
    } else if (family < 2.0 / 3.0) {
      w.b = make_triangle(bm);
    } else {
      w.b = make_trapezoid(bm, rng.uniform(0.2, 0.8));
    }
    w.freq = freq;
    w.temp = temp;
    const double clean = igse_loss(params, w);
    const double factor = std::max(1.0 + noise_rel * rng.normal(), 1e-3);
    w.loss = clean * factor;
    ds.samples.push_back(std::move(w));
  }
  return ds;
}

std::array<double, kScalarFeatureCount> scalar_features(const FluxWaveform& w,
                                                        const SteinmetzParams& prior,
                                                        double h_th) {
  const EmpiricalPrediction pred = empirical_predict(prior, w, h_th);
  return {w.freq, w.temp, delta_b(w), pred.choice.entropy, std::log(pred.loss)};
}

NormStats compute_norm_stats(const Dataset& train, const SteinmetzParams& prior,
                             double h_th) {
  if (train.size() < 2) throw DataError("compute_norm_stats: training split too small");
  NormStats st;
  std::vector<std::array<double, kScalarFeatureCount>> feats;
  feats.reserve(train.size());
  double amp_mean = 0.0;
  std::vector<double> amps;
  for (const FluxWaveform& w : train.samples) {
    feats.push_back(scalar_features(w, prior, h_th));
    amps.push_back(delta_b(w) / 2.0);
    amp_mean += amps.back();
  }
  amp_mean /= static_cast<double>(amps.size());
  double amp_var = 0.0;
  for (double a : amps) amp_var += (a - amp_mean) * (a - amp_mean);
  st.amp_std = std::sqrt(amp_var / static_cast<double>(amps.size()));
  if (!(st.amp_std > 0.0)) {
    throw DataError("compute_norm_stats: zero variance in flux amplitude");
  }
  for (std::size_t k = 0; k < kScalarFeatureCount; ++k) {
    double m = 0.0;
    for (const auto& f : feats) m += f[k];
    m /= static_cast<double>(feats.size());
    double v = 0.0;
    for (const auto& f : feats) v += (f[k] - m) * (f[k] - m);
    v /= static_cast<double>(feats.size());
    st.mean[k] = m;
    st.stddev[k] = std::sqrt(v);
    if (!(st.stddev[k] > 0.0)) {
      // constant feature over the split (e.g. fixed temperature): keep the
      // z-score finite rather than rejecting the dataset
      st.stddev[k] = 1.0;
    }
  }
  return st;
}

}  // namespace sepitfp
