#include "sepitfp/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sepitfp/errors.hpp"
#include "sepitfp/harness.hpp"
#include "sepitfp/signal.hpp"

namespace sepitfp {

namespace {

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

void ModelConfig::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !(lambda1 + lambda2 > 0.0)) {
    throw ConfigError("config: lambda1, lambda2 must be >= 0 and not both 0");
  }
  if (!(h_th > 0.0) || !(h_th < 1.0)) throw ConfigError("config: h_th must lie in (0, 1)");
  for (auto [name, v] : std::initializer_list<std::pair<const char*, std::int64_t>>{
           {"latent_dim", latent_dim}, {"heads", heads}, {"fnn_hidden", fnn_hidden},
           {"lstm_hidden", lstm_hidden}, {"mlp_hidden1", mlp_hidden1},
           {"mlp_hidden2", mlp_hidden2}, {"downsample", downsample},
           {"lstm_downsample", lstm_downsample}, {"batch", batch}, {"epochs", epochs}}) {
    if (v < 1) throw ConfigError(std::string("config: ") + name + " must be positive");
  }
  if (!(lr >= 0.0)) throw ConfigError("config: lr must be >= 0");
  if (latent_dim % heads != 0) throw ConfigError("config: heads must divide latent_dim");
  const auto n = static_cast<std::int64_t>(kWaveformPoints);
  if (n % downsample != 0) throw ConfigError("config: downsample must divide 1024");
  if ((n / downsample) % lstm_downsample != 0) {
    throw ConfigError("config: lstm_downsample must divide the downsampled length");
  }
  CnnBranch::output_dim(n / downsample, cnn);  // throws ConfigError if degenerate
}

void ModelConfig::apply_kv(const std::string& key, const std::string& value) {
  auto as_i = [&] {
    try {
      return static_cast<std::int64_t>(std::stoll(value));
    } catch (const std::exception&) {
      throw ConfigError("config: " + key + ": bad integer '" + value + "'");
    }
  };
  auto as_d = [&] {
    try {
      return std::stod(value);
    } catch (const std::exception&) {
      throw ConfigError("config: " + key + ": bad number '" + value + "'");
    }
  };
  if (key == "latent_dim") latent_dim = as_i();
  else if (key == "heads") heads = as_i();
  else if (key == "fnn_hidden") fnn_hidden = as_i();
  else if (key == "lstm_hidden") lstm_hidden = as_i();
  else if (key == "mlp_hidden1") mlp_hidden1 = as_i();
  else if (key == "mlp_hidden2") mlp_hidden2 = as_i();
  else if (key == "downsample") downsample = as_i();
  else if (key == "lstm_downsample") lstm_downsample = as_i();
  else if (key == "pool_width") cnn.pool_width = as_i();
  else if (key == "pool_stride") cnn.pool_stride = as_i();
  else if (key == "h_th") h_th = as_d();
  else if (key == "lambda1") lambda1 = as_d();
  else if (key == "lambda2") lambda2 = as_d();
  else if (key == "lr") lr = as_d();
  else if (key == "batch") batch = as_i();
  else if (key == "epochs") epochs = as_i();
  else if (key == "seed") seed = static_cast<std::uint64_t>(as_i());
  else if (key == "cnn_channels" || key == "cnn_kernels") {
    std::vector<std::int64_t> v;
    try {
      for (const std::string& item : split_csv_list(value)) v.push_back(std::stoll(trim(item)));
    } catch (const std::exception&) {
      throw ConfigError("config: " + key + ": bad integer list '" + value + "'");
    }
    if (v.size() != 3) throw ConfigError("config: " + key + " needs 3 values");
    (key == "cnn_channels" ? cnn.channels : cnn.kernels) = v;
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

ModelConfig ModelConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  ModelConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: " + path + ":" + std::to_string(lineno) +
                        ": expected key = value");
    }
    try {
      cfg.apply_kv(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument&) {
      throw ConfigError("config: " + path + ":" + std::to_string(lineno) + ": bad value");
    }
  }
  cfg.validate();
  return cfg;
}

namespace {

// shortest representation that parses back to the same double
std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "latent_dim = " << latent_dim << "\nheads = " << heads
     << "\nfnn_hidden = " << fnn_hidden << "\ncnn_channels = " << cnn.channels[0] << ","
     << cnn.channels[1] << "," << cnn.channels[2] << "\ncnn_kernels = " << cnn.kernels[0]
     << "," << cnn.kernels[1] << "," << cnn.kernels[2]
     << "\npool_width = " << cnn.pool_width << "\npool_stride = " << cnn.pool_stride
     << "\nlstm_hidden = " << lstm_hidden << "\nmlp_hidden1 = " << mlp_hidden1
     << "\nmlp_hidden2 = " << mlp_hidden2 << "\ndownsample = " << downsample
     << "\nlstm_downsample = " << lstm_downsample << "\nh_th = " << fmt_double(h_th)
     << "\nlambda1 = " << fmt_double(lambda1) << "\nlambda2 = " << fmt_double(lambda2)
     << "\nlr = " << fmt_double(lr) << "\nbatch = " << batch << "\nepochs = " << epochs
     << "\nseed = " << seed << "\n";
  return os.str();
}

// ---- network ----------------------------------------------------------

SEPITFPNet SEPITFPNet::build(const ModelConfig& cfg, const Dataset& train_split) {
  std::vector<FitSample> fs;
  for (const FluxWaveform& w : train_split.samples) {
    if (!w.loss) throw DataError("build: training sample without loss label");
    fs.push_back({w.freq, delta_b(w) / 2.0, *w.loss});
  }
  const SteinmetzParams prior = fit_steinmetz(fs, train_split.material);
  const NormStats stats = compute_norm_stats(train_split, prior, cfg.h_th);
  return build(cfg, prior, stats);
}

SEPITFPNet SEPITFPNet::build(const ModelConfig& cfg, const SteinmetzParams& prior,
                             const NormStats& stats) {
  cfg.validate();
  prior.validate();
  SEPITFPNet net;
  net.cfg = cfg;
  net.prior = prior;
  net.stats = stats;
  Rng rng(cfg.seed);
  const auto t = static_cast<std::int64_t>(kWaveformPoints) / cfg.downsample;
  net.ae = Autoencoder(cfg.latent_dim, rng);
  net.mha = MultiHeadAttention(cfg.latent_dim, cfg.heads, rng);
  net.ffn = Ffn(cfg.latent_dim, cfg.fnn_hidden, rng);
  net.cnn = CnnBranch(cfg.latent_dim, t, cfg.cnn, rng);
  net.lstm = BiLstm(cfg.latent_dim, cfg.lstm_hidden, rng);
  net.aff = AffGate(rng);
  const auto d_t = CnnBranch::output_dim(t, cfg.cnn) + 2 * cfg.lstm_hidden;
  net.mlp = MlpHead(d_t + static_cast<std::int64_t>(kScalarFeatureCount), cfg.mlp_hidden1,
                    cfg.mlp_hidden2, rng);
  return net;
}

namespace {

// per-sample standardization of the reconstructed map
Tensor standardize(const Tensor& z) {
  const Tensor mu = mean_all(z);
  const Tensor d = add_scalar_bcast(z, mu, -1.0);
  const Tensor var = mean_all(mul(d, d));
  const Tensor inv_std = exp_t(scalar_mul(ln_t(add_const(var, 1e-12)), -0.5));
  return mul_scalar_bcast(d, inv_std);
}

}  // namespace

ForwardResult SEPITFPNet::forward(const FluxWaveform& w) const {
  w.validate();
  const EmpiricalPrediction emp = empirical_predict(prior, w, cfg.h_th);

  std::vector<double> bn(w.b.size());
  for (std::size_t i = 0; i < bn.size(); ++i) bn[i] = w.b[i] / stats.amp_std;
  const auto n_points = static_cast<std::int64_t>(bn.size());
  Tensor z = ae.encode(Tensor({n_points}, std::move(bn)));
  if (cfg.downsample > 1) z = avg_pool_rows(z, cfg.downsample);
  z = positional_encoding(z);
  z = mha.forward(z);
  z = ffn.forward(z);
  z = standardize(z);

  const Tensor f_cnn = cnn.forward(z);
  const Tensor f_lstm =
      lstm.forward(cfg.lstm_downsample > 1 ? avg_pool_rows(z, cfg.lstm_downsample) : z);
  const Tensor f_t = concat({f_cnn, f_lstm});

  std::array<double, kScalarFeatureCount> raw{w.freq, w.temp, delta_b(w),
                                              emp.choice.entropy, std::log(emp.loss)};
  const auto norm = stats.normalize(raw);
  const Tensor f_s(Shape{static_cast<std::int64_t>(kScalarFeatureCount)},
                   std::vector<double>(norm.begin(), norm.end()));

  const Tensor fused = aff.forward(f_t, f_s).fused;
  const Tensor y = mlp.forward(fused);

  ForwardResult out;
  out.log_pred = y;
  out.p_pred = std::exp(y.item());
  out.p_emp = emp.loss;
  out.choice = emp.choice;
  return out;
}

std::vector<NamedParam> SEPITFPNet::params() const {
  std::vector<NamedParam> out;
  ae.collect(out);
  mha.collect(out);
  ffn.collect(out);
  cnn.collect(out);
  lstm.collect(out);
  aff.collect(out);
  mlp.collect(out);
  return out;
}

void SEPITFPNet::zero_grads() const {
  for (auto& [name, t] : params()) const_cast<Tensor&>(t).zero_grad();
}

void SEPITFPNet::save(const std::string& path) const {
  save_named_params(params(), path);
  std::ofstream f(path + ".meta");
  if (!f) throw DataError("save: cannot open " + path + ".meta");
  f << "[config]\n" << cfg.to_text();
  f << "[prior]\n" << params_to_text(prior);
  f.precision(17);
  f << "[stats]\namp_std = " << stats.amp_std << "\n";
  for (std::size_t i = 0; i < kScalarFeatureCount; ++i) {
    f << "mean" << i << " = " << stats.mean[i] << "\nstd" << i << " = " << stats.stddev[i]
      << "\n";
  }
}

SEPITFPNet SEPITFPNet::load(const std::string& path) {
  std::ifstream f(path + ".meta");
  if (!f) throw DataError("load: cannot open " + path + ".meta");
  ModelConfig cfg;
  std::string prior_text;
  NormStats stats;
  std::string section;
  std::string line;
  while (std::getline(f, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      section = t;
      continue;
    }
    if (section == "[prior]") {
      prior_text += t + "\n";
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw DataError("load: bad meta line: " + t);
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (section == "[config]") {
      cfg.apply_kv(key, val);
    } else if (section == "[stats]") {
      if (key == "amp_std") {
        stats.amp_std = std::stod(val);
      } else if (key.rfind("mean", 0) == 0) {
        stats.mean[static_cast<std::size_t>(std::stoul(key.substr(4)))] = std::stod(val);
      } else if (key.rfind("std", 0) == 0) {
        stats.stddev[static_cast<std::size_t>(std::stoul(key.substr(3)))] = std::stod(val);
      } else {
        throw DataError("load: unknown stats key " + key);
      }
    } else {
      throw DataError("load: line outside any section: " + t);
    }
  }
  SEPITFPNet net = build(cfg, params_from_text(prior_text), stats);
  std::vector<NamedParam> ps = net.params();
  load_named_params(ps, path);
  return net;
}

// ---- custom loss ------------------------------------------------------

Tensor custom_loss(const std::vector<Tensor>& log_preds, const std::vector<double>& p_act,
                   const std::vector<double>& p_emp, double lambda1, double lambda2) {
  const std::size_t n = log_preds.size();
  if (n == 0) throw DomainError("custom_loss: empty batch");
  if (p_act.size() != n || p_emp.size() != n) {
    throw ShapeError("custom_loss: batch size mismatch");
  }
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !(lambda1 + lambda2 > 0.0)) {
    throw DomainError("custom_loss: invalid lambda weights");
  }
  Tensor loss = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(p_act[i] > 0.0)) throw DomainError("custom_loss: non-positive measured loss");
    if (!(p_emp[i] > 0.0)) throw DomainError("custom_loss: non-positive empirical loss");
    const Tensor p = exp_t(log_preds[i]);
    if (lambda1 > 0.0) {
      loss = add(loss, scalar_mul(abs_t(add_const(p, -p_act[i])),
                                  lambda1 / (static_cast<double>(n) * p_act[i])));
    }
    if (lambda2 > 0.0) {
      loss = add(loss, scalar_mul(abs_t(add_const(p, -p_emp[i])),
                                  lambda2 / (static_cast<double>(n) * p_emp[i])));
    }
  }
  return loss;
}

double custom_loss_value(const std::vector<double>& p_pred, const std::vector<double>& p_act,
                         const std::vector<double>& p_emp, double lambda1, double lambda2) {
  const std::size_t n = p_pred.size();
  if (n == 0) throw DomainError("custom_loss: empty batch");
  if (p_act.size() != n || p_emp.size() != n) {
    throw ShapeError("custom_loss: batch size mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(p_act[i] > 0.0)) throw DomainError("custom_loss: non-positive measured loss");
    if (!(p_emp[i] > 0.0)) throw DomainError("custom_loss: non-positive empirical loss");
    acc += lambda1 * std::abs(p_pred[i] - p_act[i]) / p_act[i];
    acc += lambda2 * std::abs(p_pred[i] - p_emp[i]) / p_emp[i];
  }
  return acc / static_cast<double>(n);
}

// ---- training ---------------------------------------------------------

namespace {

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::int64_t t = 0;
};

void adam_step(std::vector<NamedParam>& params, AdamState& st, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (st.m.empty()) {
    for (const auto& [name, p] : params) {
      st.m.emplace_back(p.values().size(), 0.0);
      st.v.emplace_back(p.values().size(), 0.0);
    }
  }
  ++st.t;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& vals = params[i].second.mutable_values();
    const auto& g = params[i].second.grad();
    for (std::size_t j = 0; j < vals.size(); ++j) {
      st.m[i][j] = b1 * st.m[i][j] + (1.0 - b1) * g[j];
      st.v[i][j] = b2 * st.v[i][j] + (1.0 - b2) * g[j] * g[j];
      vals[j] -= lr * (st.m[i][j] / c1) / (std::sqrt(st.v[i][j] / c2) + eps);
    }
  }
}

}  // namespace

TrainHistory train(SEPITFPNet& net, const Dataset& train_split, const Dataset& val_split) {
  const ModelConfig& cfg = net.cfg;
  cfg.validate();
  if (train_split.size() == 0) throw DataError("train: empty training split");
  for (const FluxWaveform& w : train_split.samples) {
    if (!w.loss) throw DataError("train: sample without loss label");
  }

  std::vector<NamedParam> params = net.params();
  AdamState adam;
  Rng shuffle_rng(cfg.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(train_split.size());
  std::iota(order.begin(), order.end(), 0);

  TrainHistory hist;
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.next_u64() % i]);
    }
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch), ++batch_index) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      try {
        net.zero_grads();
        std::vector<Tensor> log_preds;
        std::vector<double> act, emp;
        for (std::size_t i = start; i < end; ++i) {
          const FluxWaveform& w = train_split.samples[order[i]];
          ForwardResult r = net.forward(w);
          log_preds.push_back(r.log_pred);
          act.push_back(*w.loss);
          emp.push_back(r.p_emp);
        }
        const Tensor loss = custom_loss(log_preds, act, emp, cfg.lambda1, cfg.lambda2);
        backward(loss);
        adam_step(params, adam, cfg.lr);
        epoch_loss += loss.item() * static_cast<double>(end - start);
      } catch (const NumericError& e) {
        throw NumericError("train: epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
    }
    EpochStats es;
    es.train_loss = epoch_loss / static_cast<double>(order.size());
    if (val_split.size() > 0) {
      NoGradGuard ng;
      std::vector<double> preds, act, emp, errs;
      for (const FluxWaveform& w : val_split.samples) {
        if (!w.loss) throw DataError("train: validation sample without loss label");
        const ForwardResult r = net.forward(w);
        preds.push_back(r.p_pred);
        act.push_back(*w.loss);
        emp.push_back(r.p_emp);
        errs.push_back(std::abs(r.p_pred - *w.loss) / *w.loss);
      }
      es.val_loss = custom_loss_value(preds, act, emp, cfg.lambda1, cfg.lambda2);
      es.val_abs95 = abs95(errs);
    }
    hist.epochs.push_back(es);
  }
  return hist;
}

// ---- lambda grid search -----------------------------------------------

std::vector<std::pair<double, double>> default_lambda_grid() {
  std::vector<std::pair<double, double>> grid;
  for (double l1 : {0.5, 0.7, 1.0}) {
    for (double l2 : {0.0, 0.1, 0.3, 0.5}) grid.emplace_back(l1, l2);
  }
  return grid;
}

GridSearchResult grid_search_lambdas(const Dataset& train_split, const Dataset& val_split,
                                     const std::vector<std::pair<double, double>>& grid,
                                     const ModelConfig& cfg) {
  if (grid.empty()) throw ConfigError("grid_search: empty grid");
  if (val_split.size() == 0) throw DataError("grid_search: empty validation split");
  GridSearchResult out;
  bool have_best = false;
  for (const auto& [l1, l2] : grid) {
    GridCell cell;
    cell.lambda1 = l1;
    cell.lambda2 = l2;
    try {
      ModelConfig c = cfg;
      c.lambda1 = l1;
      c.lambda2 = l2;
      SEPITFPNet net = SEPITFPNet::build(c, train_split);
      const TrainHistory hist = train(net, train_split, val_split);
      cell.val_abs95 = hist.epochs.back().val_abs95;
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
    }
    out.table.push_back(cell);
    if (cell.ok) {
      if (!have_best) {
        have_best = true;
        out.best_lambda1 = l1;
        out.best_lambda2 = l2;
      } else {
        double best_score = 0.0;
        for (const GridCell& c2 : out.table) {
          if (c2.ok && c2.lambda1 == out.best_lambda1 && c2.lambda2 == out.best_lambda2) {
            best_score = c2.val_abs95;
            break;
          }
        }
        const bool strictly_better = cell.val_abs95 < best_score;
        const bool tie_smaller = cell.val_abs95 == best_score &&
                                 (l2 < out.best_lambda2 ||
                                  (l2 == out.best_lambda2 && l1 < out.best_lambda1));
        if (strictly_better || tie_smaller) {
          out.best_lambda1 = l1;
          out.best_lambda2 = l2;
        }
      }
    }
  }
  if (!have_best) throw FitError("grid_search: every grid cell failed");
  return out;
}

}  // namespace sepitfp
