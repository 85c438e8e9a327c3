// Batch operator entry point for the SEPI-TFPNet core-loss predictor.
// Talks to the core exclusively through the C API in sepitfp.h.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sepitfp.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void die(sepi_status st, const std::string& context) {
  std::cerr << "error: " << context << ": code " << static_cast<int>(st) << ": "
            << sepi_last_error() << "\n";
  std::exit(1);
}

void check(sepi_status st, const std::string& context) {
  if (st != SEPI_OK) die(st, context);
}

struct CommonOpts {
  std::string data;
  std::string out;
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<double> h_th, lambda1, lambda2, lr;
  std::optional<std::int64_t> epochs, batch;
};

using ConfigPtr = std::unique_ptr<sepi_config, decltype(&sepi_config_free)>;
using DatasetPtr = std::unique_ptr<sepi_dataset, decltype(&sepi_dataset_free)>;

// config file first, then flag overrides (flags win)
ConfigPtr resolve_config(const CommonOpts& o) {
  sepi_config* cfg = nullptr;
  if (!o.config_file.empty()) {
    check(sepi_config_load(o.config_file.c_str(), &cfg), "loading config " + o.config_file);
  } else {
    check(sepi_config_create(&cfg), "creating config");
  }
  ConfigPtr out(cfg, sepi_config_free);
  auto set = [&](const char* key, const std::string& v) {
    check(sepi_config_set(cfg, key, v.c_str()), std::string("setting ") + key);
  };
  if (o.seed) set("seed", std::to_string(*o.seed));
  if (o.h_th) set("h_th", std::to_string(*o.h_th));
  if (o.lambda1) set("lambda1", std::to_string(*o.lambda1));
  if (o.lambda2) set("lambda2", std::to_string(*o.lambda2));
  if (o.lr) set("lr", std::to_string(*o.lr));
  if (o.epochs) set("epochs", std::to_string(*o.epochs));
  if (o.batch) set("batch", std::to_string(*o.batch));
  return out;
}

DatasetPtr load_data(const std::string& dir) {
  sepi_dataset* ds = nullptr;
  check(sepi_dataset_load_magnet(dir.c_str(), &ds), "loading data from " + dir);
  return DatasetPtr(ds, sepi_dataset_free);
}

void write_manifest(const std::string& out_dir, const std::string& subcommand,
                    const CommonOpts& o, sepi_config* cfg,
                    const std::vector<std::string>& outputs,
                    const json& extra = json::object()) {
  json m;
  m["tool_version"] = sepi_version();
  m["subcommand"] = subcommand;
  m["inputs"]["data"] = o.data;
  m["inputs"]["config"] = o.config_file;
  m["seed"] = o.seed ? json(*o.seed) : json(nullptr);
  m["out"] = out_dir;
  m["outputs"] = outputs;
  if (cfg) m["resolved_config"] = sepi_config_text(cfg);
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  std::ofstream f(fs::path(out_dir) / "manifest.json");
  if (!f) {
    std::cerr << "error: cannot write manifest in " << out_dir << "\n";
    std::exit(1);
  }
  f << m.dump(2) << "\n";
}

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_data, bool needs_out) {
  auto* data = cmd->add_option("--data", o.data, "MagNet-style data directory");
  if (needs_data) data->required();
  auto* out = cmd->add_option("--out", o.out, "output directory");
  if (needs_out) out->required();
  cmd->add_option("--config", o.config_file, "key-value config file");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--h-th", o.h_th, "spectral-entropy threshold");
  cmd->add_option("--lambda1", o.lambda1, "measured-loss MAPE weight");
  cmd->add_option("--lambda2", o.lambda2, "empirical-consistency MAPE weight");
  cmd->add_option("--epochs", o.epochs, "training epochs");
  cmd->add_option("--batch", o.batch, "mini-batch size");
  cmd->add_option("--lr", o.lr, "learning rate");
}

double cfg_h_th(sepi_config* cfg) {
  // parse h_th back out of the resolved text
  std::string text = sepi_config_text(cfg);
  const auto pos = text.find("h_th = ");
  return std::stod(text.substr(pos + 7));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SEPI-TFPNet hybrid magnetic core-loss predictor"};
  app.require_subcommand(1);

  CommonOpts o;
  std::string params_path, model_path, grid_spec;
  std::size_t synth_n = 1000;
  double synth_k = 0.1, synth_a = 1.5, synth_b = 2.4, synth_noise = 0.0;

  auto* c_fit = app.add_subcommand("fit-empirical", "fit Steinmetz coefficients");
  add_common(c_fit, o, true, true);

  auto* c_classify = app.add_subcommand("classify", "spectral-entropy branch per sample");
  add_common(c_classify, o, true, false);

  auto* c_predict = app.add_subcommand("predict-empirical", "empirical prior predictions");
  add_common(c_predict, o, true, true);
  c_predict->add_option("--params", params_path, "fitted params file")->required();

  auto* c_synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(c_synth, o, false, true);
  c_synth->add_option("--n", synth_n, "number of samples");
  c_synth->add_option("--k", synth_k, "Steinmetz k");
  c_synth->add_option("--a", synth_a, "frequency exponent");
  c_synth->add_option("--b", synth_b, "flux exponent");
  c_synth->add_option("--noise", synth_noise, "relative label noise");

  auto* c_train = app.add_subcommand("train", "train the hybrid model");
  add_common(c_train, o, true, true);

  auto* c_eval = app.add_subcommand("evaluate", "evaluate a trained model");
  add_common(c_eval, o, true, true);
  c_eval->add_option("--model", model_path, "trained model file")->required();

  auto* c_grid = app.add_subcommand("grid-search", "lambda grid search");
  add_common(c_grid, o, true, true);
  c_grid->add_option("--grid", grid_spec, "cells 'l1,l2;l1,l2;...' (default 12-cell grid)");

  CLI11_PARSE(app, argc, argv);

  if (!o.out.empty()) fs::create_directories(o.out);
  ConfigPtr cfg = resolve_config(o);

  if (*c_fit) {
    DatasetPtr ds = load_data(o.data);
    sepi_params* p = nullptr;
    check(sepi_params_fit(ds.get(), &p), "fitting empirical params");
    const std::string out_file = (fs::path(o.out) / "params.txt").string();
    check(sepi_params_save(p, out_file.c_str()), "saving params");
    double k, a, b, ki;
    sepi_params_get(p, &k, &a, &b, &ki);
    sepi_params_free(p);
    std::cout << "fitted k=" << k << " a=" << a << " b=" << b << " ki=" << ki << "\n";
    write_manifest(o.out, "fit-empirical", o, cfg.get(), {out_file});
  } else if (*c_classify) {
    DatasetPtr ds = load_data(o.data);
    const double h_th = o.h_th ? *o.h_th : cfg_h_th(cfg.get());
    std::size_t n = 0;
    sepi_dataset_size(ds.get(), &n);
    std::ostringstream lines;
    for (std::size_t i = 0; i < n; ++i) {
      sepi_branch br;
      double h;
      check(sepi_classify(ds.get(), i, h_th, &br, &h), "classifying sample " + std::to_string(i));
      lines << (br == SEPI_BRANCH_STEINMETZ ? "STEINMETZ" : "IGSE") << " H=" << h << "\n";
    }
    std::cout << lines.str();
    if (!o.out.empty()) {
      const std::string out_file = (fs::path(o.out) / "classify.txt").string();
      std::ofstream f(out_file);
      f << lines.str();
      write_manifest(o.out, "classify", o, cfg.get(), {out_file});
    }
  } else if (*c_predict) {
    DatasetPtr ds = load_data(o.data);
    sepi_params* p = nullptr;
    check(sepi_params_load(params_path.c_str(), &p), "loading params " + params_path);
    const double h_th = o.h_th ? *o.h_th : cfg_h_th(cfg.get());
    std::size_t n = 0;
    sepi_dataset_size(ds.get(), &n);
    const std::string out_file = (fs::path(o.out) / "predictions.csv").string();
    std::ofstream f(out_file);
    f.precision(17);
    f << "index,loss_wm3,branch,entropy\n";
    for (std::size_t i = 0; i < n; ++i) {
      double loss, h;
      sepi_branch br;
      check(sepi_predict_empirical(p, ds.get(), i, h_th, &loss, &br, &h),
            "predicting sample " + std::to_string(i));
      f << i << "," << loss << "," << (br == SEPI_BRANCH_STEINMETZ ? "STEINMETZ" : "IGSE")
        << "," << h << "\n";
    }
    sepi_params_free(p);
    json extra;
    extra["inputs_params"] = params_path;
    write_manifest(o.out, "predict-empirical", o, cfg.get(), {out_file}, extra);
  } else if (*c_synth) {
    sepi_dataset* ds = nullptr;
    check(sepi_dataset_synth(synth_n, synth_k, synth_a, synth_b, synth_noise,
                             o.seed.value_or(42), &ds),
          "generating synthetic dataset");
    check(sepi_dataset_save_magnet(ds, o.out.c_str()), "writing dataset");
    sepi_dataset_free(ds);
    json extra;
    extra["synth"] = {{"n", synth_n}, {"k", synth_k}, {"a", synth_a},
                      {"b", synth_b},  {"noise", synth_noise}};
    write_manifest(o.out, "synth", o, cfg.get(),
                   {(fs::path(o.out) / "B_Field.csv").string(),
                    (fs::path(o.out) / "Frequency.csv").string(),
                    (fs::path(o.out) / "Temperature.csv").string(),
                    (fs::path(o.out) / "Volumetric_Loss.csv").string()});
  } else if (*c_train) {
    DatasetPtr ds = load_data(o.data);
    sepi_dataset *tr = nullptr, *va = nullptr, *te = nullptr;
    check(sepi_dataset_split(ds.get(), 0.8, 0.1, 0.1, o.seed.value_or(42), &tr, &va, &te),
          "splitting dataset");
    const std::string hist_file = (fs::path(o.out) / "history.csv").string();
    sepi_model* m = nullptr;
    check(sepi_model_train(cfg.get(), tr, va, hist_file.c_str(), &m), "training");
    const std::string model_file = (fs::path(o.out) / "model.bin").string();
    check(sepi_model_save(m, model_file.c_str()), "saving model");
    sepi_report* rep = nullptr;
    check(sepi_evaluate(m, te, &rep), "evaluating on test split");
    const std::string report_file = (fs::path(o.out) / "report.txt").string();
    const std::string errors_file = (fs::path(o.out) / "errors.csv").string();
    check(sepi_report_write(rep, report_file.c_str(), errors_file.c_str()), "writing report");
    double a95;
    sepi_report_metric(rep, "abs95", &a95);
    std::cout << "test Abs.95% = " << a95 << "%\n";
    sepi_report_free(rep);
    sepi_model_free(m);
    sepi_dataset_free(tr);
    sepi_dataset_free(va);
    sepi_dataset_free(te);
    write_manifest(o.out, "train", o, cfg.get(),
                   {model_file, model_file + ".meta", hist_file, report_file, errors_file});
  } else if (*c_eval) {
    DatasetPtr ds = load_data(o.data);
    sepi_model* m = nullptr;
    check(sepi_model_load(model_path.c_str(), &m), "loading model " + model_path);
    sepi_report* rep = nullptr;
    check(sepi_evaluate(m, ds.get(), &rep), "evaluating");
    const std::string report_file = (fs::path(o.out) / "report.txt").string();
    const std::string errors_file = (fs::path(o.out) / "errors.csv").string();
    check(sepi_report_write(rep, report_file.c_str(), errors_file.c_str()), "writing report");
    double a95, prior_a95;
    sepi_report_metric(rep, "abs95", &a95);
    sepi_report_metric(rep, "prior_abs95", &prior_a95);
    std::cout << "Abs.95% = " << a95 << "% (prior-only " << prior_a95 << "%)\n";
    sepi_report_free(rep);
    sepi_model_free(m);
    json extra;
    extra["inputs_model"] = model_path;
    write_manifest(o.out, "evaluate", o, cfg.get(), {report_file, errors_file}, extra);
  } else if (*c_grid) {
    DatasetPtr ds = load_data(o.data);
    sepi_dataset *tr = nullptr, *va = nullptr, *te = nullptr;
    check(sepi_dataset_split(ds.get(), 0.8, 0.1, 0.1, o.seed.value_or(42), &tr, &va, &te),
          "splitting dataset");
    sepi_grid_result* g = nullptr;
    check(sepi_grid_search(cfg.get(), tr, va, grid_spec.empty() ? nullptr : grid_spec.c_str(), &g),
          "grid search");
    const std::string table_file = (fs::path(o.out) / "grid_table.txt").string();
    check(sepi_grid_result_write(g, table_file.c_str()), "writing grid table");
    double l1, l2;
    sepi_grid_result_best(g, &l1, &l2);
    std::cout << "best lambda1=" << l1 << " lambda2=" << l2 << "\n";
    sepi_grid_result_free(g);
    sepi_dataset_free(tr);
    sepi_dataset_free(va);
    sepi_dataset_free(te);
    write_manifest(o.out, "grid-search", o, cfg.get(), {table_file});
  }
  return 0;
}
