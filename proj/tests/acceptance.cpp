// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 7 and 9 run the full synthetic benchmark twice and
// together dominate the runtime (about 20 minutes on one core).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sepitfp/data.hpp"
#include "sepitfp/errors.hpp"
#include "sepitfp/harness.hpp"
#include "sepitfp/model.hpp"
#include "sepitfp/nn.hpp"
#include "sepitfp/signal.hpp"

using namespace sepitfp;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int idx, const std::string& name, bool pass, const std::string& detail) {
  std::cout << "criterion " << idx << " (" << name << "): " << (pass ? "PASS" : "FAIL");
  if (!detail.empty()) std::cout << " [" << detail << "]";
  std::cout << std::endl;
  if (!pass) ++g_failures;
}

void run(int idx, const std::string& name,
         const std::function<std::pair<bool, std::string>()>& fn) {
  try {
    const auto [ok, detail] = fn();
    report(idx, name, ok, detail);
  } catch (const std::exception& e) {
    report(idx, name, false, std::string("exception: ") + e.what());
  }
}

FluxWaveform wave(std::vector<double> b, double freq = 1e5, double temp = 25.0) {
  FluxWaveform w;
  w.b = std::move(b);
  w.freq = freq;
  w.temp = temp;
  return w;
}

// ---- 1: spectral entropy suite ----------------------------------------

std::pair<bool, std::string> c1() {
  const auto t0 = std::chrono::steady_clock::now();
  Spectrum single;
  single.power.assign(512, 0.0);
  single.power[7] = 2.0;
  if (spectral_entropy(single) != 0.0) return {false, "single-bin H != 0"};

  Spectrum uniform;
  uniform.power.assign(512, 0.125);
  if (std::abs(spectral_entropy(uniform) - 1.0) > 1e-12) {
    return {false, "uniform H != 1"};
  }

  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> b(kWaveformPoints);
    for (auto& v : b) v = 0.3 * (u(gen) - 0.5);
    const auto c0 = classify_waveform(wave(b), 0.01);
    const double scale = 0.05 + 20.0 * u(gen);
    const double shift = 2.0 * (u(gen) - 0.5);
    for (auto& v : b) v = v * scale + shift;
    const auto c1r = classify_waveform(wave(b), 0.01);
    if (c1r.branch != c0.branch || std::abs(c1r.entropy - c0.entropy) > 1e-9) {
      return {false, "scale/shift invariance broken at trial " + std::to_string(trial)};
    }
  }

  if (classify_waveform(wave(make_sinusoid(0.1)), 0.01).branch !=
      EmpiricalBranch::kSteinmetz) {
    return {false, "sinusoid not routed to the steinmetz branch"};
  }
  if (classify_waveform(wave(make_triangle(0.1)), 0.01).branch !=
      EmpiricalBranch::kIgse) {
    return {false, "triangle not routed to the igse branch"};
  }
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  return {ms < 1000, "runtime " + std::to_string(ms) + " ms (budget 1000)"};
}

// ---- 2: igse / steinmetz sinusoid consistency --------------------------

std::pair<bool, std::string> c2() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const double k = 0.1 + 9.9 * u(gen);
    const double a = 1.0 + u(gen);
    const double b = 2.0 + u(gen);
    const double f = 2e4 * std::pow(25.0, u(gen));
    const double bm = 0.01 + 0.29 * u(gen);
    const auto p = make_steinmetz_params(k, a, b);
    const double se = steinmetz_loss(p, f, bm);
    const double ig = igse_loss(p, wave(make_sinusoid(bm), f));
    worst = std::max(worst, std::abs(ig - se) / se);
  }
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  std::ostringstream os;
  os << "worst rel dev " << worst << ", runtime " << ms << " ms (budget 5000)";
  return {worst < 5e-3 && ms < 5000, os.str()};
}

// ---- 3: fit recovery ----------------------------------------------------

std::pair<bool, std::string> c3() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const double k = 0.05 + u(gen);
    const double a = 1.2 + 0.6 * u(gen);
    const double b = 2.1 + 0.8 * u(gen);
    std::vector<FitSample> s;
    for (double f : {2e4, 5e4, 1e5, 2e5, 5e5}) {
      for (double bm : {0.02, 0.05, 0.1, 0.2, 0.3}) {
        s.push_back({f, bm, k * std::pow(f, a) * std::pow(bm, b)});
      }
    }
    const auto p = fit_steinmetz(s);
    worst = std::max({worst, std::abs(p.k - k) / k, std::abs(p.a - a) / a,
                      std::abs(p.b - b) / b});
  }
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  std::ostringstream os;
  os << "worst rel dev " << worst << ", runtime " << ms << " ms (budget 1000)";
  return {worst < 1e-9 && ms < 1000, os.str()};
}

// ---- 4: gradient suite --------------------------------------------------

std::pair<bool, std::string> c4() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(4);
  auto rand_input = [&](Shape shape) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor(std::move(shape), std::move(v), true);
  };
  auto check_layer = [&](const std::string& label, const std::vector<NamedParam>& ps,
                         Tensor input,
                         const std::function<Tensor(const Tensor&)>& fwd,
                         double tol) -> std::string {
    std::vector<Tensor> leaves{std::move(input)};
    for (const auto& [n, t] : ps) leaves.push_back(t);
    const auto rep = grad_check(
        [&](const std::vector<Tensor>& in) { return mean_all(fwd(in[0])); },
        std::move(leaves), 1e-6, tol);
    if (!rep.pass) {
      std::ostringstream os;
      os << label << " dev " << rep.max_rel_dev << " at " << rep.worst_location;
      return os.str();
    }
    return "";
  };

  std::string err;
  {
    Dense d(5, 3, rng);
    std::vector<NamedParam> ps;
    d.collect("d", ps);
    err = check_layer("dense", ps, rand_input({4, 5}),
                      [&](const Tensor& x) { return tanh_t(d.forward(x)); }, 1e-4);
    if (!err.empty()) return {false, err};
  }
  {
    Autoencoder ae(8, rng);
    std::vector<NamedParam> ps;
    ae.collect(ps);
    err = check_layer("autoencoder", ps, rand_input({12}),
                      [&](const Tensor& x) { return ae.decode(ae.encode(x)); }, 1e-4);
    if (!err.empty()) return {false, err};
  }
  {
    MultiHeadAttention mha(8, 2, rng);
    std::vector<NamedParam> ps;
    mha.collect(ps);
    err = check_layer("attention", ps, rand_input({5, 8}),
                      [&](const Tensor& x) { return mha.forward(positional_encoding(x)); },
                      1e-4);
    if (!err.empty()) return {false, err};
  }
  {
    Ffn ffn(6, 12, rng);
    std::vector<NamedParam> ps;
    ffn.collect(ps);
    err = check_layer("ffn", ps, rand_input({3, 6}),
                      [&](const Tensor& x) { return ffn.forward(x); }, 1e-4);
    if (!err.empty()) return {false, err};
  }
  {
    CnnConfig ccfg;
    ccfg.channels = {3, 4, 4};
    ccfg.kernels = {3, 3, 3};
    CnnBranch cnn(2, 24, ccfg, rng);
    std::vector<NamedParam> ps;
    cnn.collect(ps);
    err = check_layer("cnn", ps, rand_input({24, 2}),
                      [&](const Tensor& x) { return cnn.forward(x); }, 1e-4);
    if (!err.empty()) return {false, err};
  }
  {
    BiLstm lstm(3, 4, rng);
    std::vector<NamedParam> ps;
    lstm.collect(ps);
    err = check_layer("bilstm", ps, rand_input({4, 3}),
                      [&](const Tensor& x) { return lstm.forward(x); }, 1e-4);
    if (!err.empty()) return {false, err};
  }
  {
    AffGate aff(rng);
    std::vector<NamedParam> ps;
    aff.collect(ps);
    const Tensor f_s = rand_input({3});
    std::vector<Tensor> leaves{rand_input({5}), f_s};
    for (const auto& [n, t] : ps) leaves.push_back(t);
    const auto rep = grad_check(
        [&](const std::vector<Tensor>& in) {
          return mean_all(aff.forward(in[0], in[1]).fused);
        },
        std::move(leaves), 1e-6, 1e-4);
    if (!rep.pass) return {false, "aff gate dev at " + rep.worst_location};
  }
  {
    MlpHead mlp(6, 5, 4, rng);
    std::vector<NamedParam> ps;
    mlp.collect(ps);
    err = check_layer("mlp head", ps, rand_input({6}),
                      [&](const Tensor& x) { return mlp.forward(x); }, 1e-4);
    if (!err.empty()) return {false, err};
  }

  // end to end: full forward composed with the training objective. The
  // composition is only differentiable almost everywhere (relu and max-pool
  // kinks), so a sample whose preactivations sit within the FD step of a
  // kink is skipped; most samples check cleanly.
  ModelConfig cfg;
  cfg.latent_dim = 8;
  cfg.heads = 2;
  cfg.fnn_hidden = 16;
  cfg.cnn.channels = {4, 6, 6};
  cfg.lstm_hidden = 4;
  cfg.mlp_hidden1 = 16;
  cfg.mlp_hidden2 = 8;
  cfg.downsample = 32;
  cfg.lstm_downsample = 4;
  const auto ds = synth_generate(24, make_steinmetz_params(0.1, 1.5, 2.4), 0.02, 4);
  const auto net = SEPITFPNet::build(cfg, ds);
  double best_dev = 1e300;
  bool e2e_pass = false;
  for (std::size_t si = 0; si < 5 && !e2e_pass; ++si) {
    const FluxWaveform& w = ds.samples[si];
    std::vector<Tensor> leaves;
    for (const auto& [n, t] : net.params()) leaves.push_back(t);
    const auto rep = grad_check(
        [&](const std::vector<Tensor>&) {
          const auto fr = net.forward(w);
          return custom_loss({fr.log_pred}, {*w.loss}, {fr.p_emp}, 1.0, 0.1);
        },
        std::move(leaves), 1e-4, 1e-3);
    best_dev = std::min(best_dev, rep.max_rel_dev);
    e2e_pass = rep.pass;
  }
  if (!e2e_pass) {
    std::ostringstream os;
    os << "end-to-end dev " << best_dev << " (no clean sample found)";
    return {false, os.str()};
  }
  const auto s = std::chrono::duration_cast<std::chrono::seconds>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
  return {s < 60, "runtime " + std::to_string(s) + " s (budget 60)"};
}

// ---- 5: fusion gate -----------------------------------------------------

std::pair<bool, std::string> c5() {
  Rng rng(5);
  AffGate aff(rng);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> ft(7), fs(3);
    for (auto& x : ft) x = rng.uniform(-2.0, 2.0);
    for (auto& x : fs) x = rng.uniform(-2.0, 2.0);
    const auto out = aff.forward(Tensor({7}, ft), Tensor({3}, fs));
    if (std::abs(out.alphas.values()[0] + out.alphas.values()[1] - 1.0) > 1e-12) {
      return {false, "weights do not sum to 1 at trial " + std::to_string(trial)};
    }
  }
  aff.w_t.mutable_values() = {0.0};
  aff.b_t.mutable_values() = {std::log(9.0)};
  aff.w_s.mutable_values() = {0.0};
  aff.b_s.mutable_values() = {0.0};
  const auto out = aff.forward(Tensor({2}, {1.0, 2.0}), Tensor({2}, {3.0, 4.0}));
  if (std::abs(out.alphas.values()[0] - 0.9) > 1e-12 ||
      std::abs(out.alphas.values()[1] - 0.1) > 1e-12) {
    return {false, "logit gap ln 9 did not produce weights 0.9 / 0.1"};
  }
  return {true, ""};
}

// ---- 6: loss identities -------------------------------------------------

std::pair<bool, std::string> c6() {
  const double v =
      custom_loss({Tensor::scalar(std::log(2.0), true)}, {1.0}, {4.0}, 0.7, 0.3).item();
  if (v != 0.85) {
    std::ostringstream os;
    os.precision(17);
    os << "hand example gave " << v << " instead of 0.85";
    return {false, os.str()};
  }
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(0.5, 4.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor> lp;
    std::vector<double> pred, act, emp;
    for (int i = 0; i < 8; ++i) {
      pred.push_back(u(gen));
      act.push_back(u(gen));
      emp.push_back(u(gen));
      lp.push_back(Tensor::scalar(std::log(pred.back()), true));
    }
    double mape = 0.0;
    for (int i = 0; i < 8; ++i) mape += std::abs(pred[i] - act[i]) / act[i];
    mape /= 8.0;
    if (std::abs(custom_loss(lp, act, emp, 1.0, 0.0).item() - mape) > 1e-12) {
      return {false, "lambda2 = 0 did not reduce to plain MAPE"};
    }
  }
  return {true, ""};
}

// ---- 7 / 9: synthetic benchmark and determinism -------------------------

struct BenchResult {
  double net_abs95 = 0.0;
  double prior_abs95 = 0.0;
  std::string report_text;
};

BenchResult run_benchmark() {
  const auto ds =
      synth_generate(2000, make_steinmetz_params(0.1, 1.5, 2.4, "synthetic"), 0.02, 42);
  const auto parts = split(ds, {0.8, 0.1, 0.1}, 42);
  ModelConfig cfg;  // defaults: 30 epochs, lambda 1.0 / 0.1, seed 42
  auto net = SEPITFPNet::build(cfg, parts.train);
  train(net, parts.train, parts.val);
  const auto rep = evaluate(net, parts.val);
  return {rep.net.p95, rep.prior.p95, report_to_text(rep)};
}

std::pair<bool, std::string> c7(BenchResult& out) {
  const auto t0 = std::chrono::steady_clock::now();
  out = run_benchmark();
  const auto s = std::chrono::duration_cast<std::chrono::seconds>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
  std::ostringstream os;
  os.precision(4);
  os << "val abs95 " << out.net_abs95 << "% (limit 10%), prior " << out.prior_abs95
     << "%, runtime " << s << " s (budget 900)";
  return {out.net_abs95 <= 10.0 && out.net_abs95 < out.prior_abs95 && s < 900, os.str()};
}

std::pair<bool, std::string> c9(const BenchResult& first) {
  if (first.report_text.empty()) return {false, "benchmark run unavailable"};
  const auto second = run_benchmark();
  if (second.report_text != first.report_text) {
    return {false, "repeat run produced a different report"};
  }
  return {true, "reports bit-identical across runs"};
}

// ---- 8: directory-format evaluation property ----------------------------

std::pair<bool, std::string> c8() {
  // labels carry a temperature-dependent factor no power law can absorb,
  // so the prior-only baseline is structurally biased
  auto ds = synth_generate(2000, make_steinmetz_params(0.2, 1.6, 2.5), 0.03, 8);
  for (auto& w : ds.samples) {
    w.loss = *w.loss * (1.0 + 0.4 * (w.temp - 57.5) / 65.0);
  }
  const auto dir = fs::temp_directory_path() / "sepitfp_acceptance_magnet";
  fs::remove_all(dir);
  fs::create_directories(dir);
  save_magnet_dir(ds, dir.string());
  const auto loaded = load_magnet_dir(dir.string());
  fs::remove_all(dir);
  if (loaded.size() != 2000) return {false, "directory round-trip lost samples"};

  const auto parts = split(loaded, {0.8, 0.1, 0.1}, 42);
  ModelConfig cfg;
  cfg.epochs = 35;  // the biased labels take a few more epochs to track
  auto net = SEPITFPNet::build(cfg, parts.train);
  train(net, parts.train, parts.val);
  const auto rep = evaluate(net, parts.test);
  const auto text = report_to_text(rep);
  if (text.find("abs95_pct") == std::string::npos ||
      text.find("steinmetz") == std::string::npos) {
    return {false, "report text incomplete"};
  }

  ModelConfig grid_cfg = cfg;
  grid_cfg.epochs = 2;
  const auto g = grid_search_lambdas(parts.train, parts.val,
                                     {{1.0, 0.0}, {1.0, 0.1}}, grid_cfg);
  const auto table = grid_table_to_text(g);
  if (table.find("best: lambda1") == std::string::npos || g.table.size() != 2) {
    return {false, "grid-search table missing"};
  }

  std::ostringstream os;
  os.precision(4);
  os << "test abs95 " << rep.net.p95 << "% vs prior " << rep.prior.p95 << "%";
  return {rep.net.p95 < rep.prior.p95, os.str()};
}

}  // namespace

int main() {
  std::cout.setf(std::ios::unitbuf);
  run(1, "spectral entropy suite", c1);
  run(2, "igse/steinmetz sinusoid consistency", c2);
  run(3, "fit recovery", c3);
  run(4, "gradient suite", c4);
  run(5, "fusion gate", c5);
  run(6, "loss identities", c6);
  BenchResult bench;
  run(7, "synthetic benchmark", [&] { return c7(bench); });
  run(8, "directory-format evaluation", c8);
  run(9, "determinism", [&] { return c9(bench); });
  if (g_failures > 0) {
    std::cout << g_failures << " criteria failed" << std::endl;
    return 1;
  }
  std::cout << "all criteria passed" << std::endl;
  return 0;
}
