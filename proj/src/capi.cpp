#include "sepitfp.h"

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "sepitfp/data.hpp"
#include "sepitfp/empirical.hpp"
#include "sepitfp/errors.hpp"
#include "sepitfp/harness.hpp"
#include "sepitfp/model.hpp"

using namespace sepitfp;

struct sepi_dataset {
  Dataset ds;
};
struct sepi_params {
  SteinmetzParams p;
};
struct sepi_config {
  ModelConfig cfg;
  std::string text_cache;
};
struct sepi_model {
  SEPITFPNet net;
};
struct sepi_report {
  EvalReport r;
};
struct sepi_grid_result {
  GridSearchResult g;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
sepi_status wrap(F&& f) {
  try {
    f();
    return SEPI_OK;
  } catch (const ConfigError& e) {
    g_last_error = e.what();
    return SEPI_ERR_CONFIG;
  } catch (const DataError& e) {
    g_last_error = e.what();
    return SEPI_ERR_DATA;
  } catch (const FitError& e) {
    g_last_error = e.what();
    return SEPI_ERR_DATA;
  } catch (const NumericError& e) {
    g_last_error = e.what();
    return SEPI_ERR_NUMERIC;
  } catch (const ShapeError& e) {
    g_last_error = e.what();
    return SEPI_ERR_INVALID_ARGUMENT;
  } catch (const DomainError& e) {
    g_last_error = e.what();
    return SEPI_ERR_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SEPI_ERR_INTERNAL;
  }
}

sepi_status bad_arg(const char* msg) {
  g_last_error = msg;
  return SEPI_ERR_INVALID_ARGUMENT;
}

const FluxWaveform& sample_at(const Dataset& ds, size_t index) {
  if (index >= ds.size()) {
    throw DomainError("sample index " + std::to_string(index) + " out of range (size " +
                      std::to_string(ds.size()) + ")");
  }
  return ds.samples[index];
}

sepi_branch to_c(EmpiricalBranch b) {
  return b == EmpiricalBranch::kSteinmetz ? SEPI_BRANCH_STEINMETZ : SEPI_BRANCH_IGSE;
}

}  // namespace

extern "C" {

const char* sepi_version(void) { return "sepitfp 0.1.0"; }

const char* sepi_last_error(void) { return g_last_error.c_str(); }

/* ---- dataset ---------------------------------------------------------- */

sepi_status sepi_dataset_load_magnet(const char* dir, sepi_dataset** out) {
  if (!dir || !out) return bad_arg("sepi_dataset_load_magnet: null argument");
  return wrap([&] { *out = new sepi_dataset{load_magnet_dir(dir)}; });
}

sepi_status sepi_dataset_save_magnet(const sepi_dataset* ds, const char* dir) {
  if (!ds || !dir) return bad_arg("sepi_dataset_save_magnet: null argument");
  return wrap([&] { save_magnet_dir(ds->ds, dir); });
}

sepi_status sepi_dataset_synth(size_t n, double k, double a, double b, double noise_rel,
                               uint64_t seed, sepi_dataset** out) {
  if (!out) return bad_arg("sepi_dataset_synth: null output");
  return wrap([&] {
    *out = new sepi_dataset{synth_generate(n, make_steinmetz_params(k, a, b), noise_rel, seed)};
  });
}

sepi_status sepi_dataset_size(const sepi_dataset* ds, size_t* out) {
  if (!ds || !out) return bad_arg("sepi_dataset_size: null argument");
  *out = ds->ds.size();
  return SEPI_OK;
}

sepi_status sepi_dataset_sample(const sepi_dataset* ds, size_t index, double* waveform,
                                double* freq, double* temp, double* loss) {
  if (!ds) return bad_arg("sepi_dataset_sample: null dataset");
  return wrap([&] {
    const FluxWaveform& w = sample_at(ds->ds, index);
    if (waveform) std::memcpy(waveform, w.b.data(), w.b.size() * sizeof(double));
    if (freq) *freq = w.freq;
    if (temp) *temp = w.temp;
    if (loss) *loss = w.loss ? *w.loss : 0.0;
  });
}

sepi_status sepi_dataset_split(const sepi_dataset* ds, double f_train, double f_val,
                               double f_test, uint64_t seed, sepi_dataset** train,
                               sepi_dataset** val, sepi_dataset** test) {
  if (!ds || !train || !val || !test) return bad_arg("sepi_dataset_split: null argument");
  return wrap([&] {
    SplitResult s = split(ds->ds, {f_train, f_val, f_test}, seed);
    *train = new sepi_dataset{std::move(s.train)};
    *val = new sepi_dataset{std::move(s.val)};
    *test = new sepi_dataset{std::move(s.test)};
  });
}

void sepi_dataset_free(sepi_dataset* ds) { delete ds; }

/* ---- empirical prior -------------------------------------------------- */

sepi_status sepi_params_make(double k, double a, double b, sepi_params** out) {
  if (!out) return bad_arg("sepi_params_make: null output");
  return wrap([&] { *out = new sepi_params{make_steinmetz_params(k, a, b)}; });
}

sepi_status sepi_params_fit(const sepi_dataset* ds, sepi_params** out) {
  if (!ds || !out) return bad_arg("sepi_params_fit: null argument");
  return wrap([&] {
    std::vector<FitSample> fs;
    for (const FluxWaveform& w : ds->ds.samples) {
      if (!w.loss) throw DataError("sepi_params_fit: sample without loss label");
      fs.push_back({w.freq, delta_b(w) / 2.0, *w.loss});
    }
    *out = new sepi_params{fit_steinmetz(fs, ds->ds.material)};
  });
}

sepi_status sepi_params_get(const sepi_params* p, double* k, double* a, double* b,
                            double* ki) {
  if (!p) return bad_arg("sepi_params_get: null params");
  if (k) *k = p->p.k;
  if (a) *a = p->p.a;
  if (b) *b = p->p.b;
  if (ki) *ki = p->p.ki;
  return SEPI_OK;
}

sepi_status sepi_params_save(const sepi_params* p, const char* path) {
  if (!p || !path) return bad_arg("sepi_params_save: null argument");
  return wrap([&] { save_params(p->p, path); });
}

sepi_status sepi_params_load(const char* path, sepi_params** out) {
  if (!path || !out) return bad_arg("sepi_params_load: null argument");
  return wrap([&] { *out = new sepi_params{load_params(path)}; });
}

void sepi_params_free(sepi_params* p) { delete p; }

sepi_status sepi_classify(const sepi_dataset* ds, size_t index, double h_th,
                          sepi_branch* branch, double* entropy) {
  if (!ds) return bad_arg("sepi_classify: null dataset");
  return wrap([&] {
    const ModelChoice c = classify_waveform(sample_at(ds->ds, index), h_th);
    if (branch) *branch = to_c(c.branch);
    if (entropy) *entropy = c.entropy;
  });
}

sepi_status sepi_predict_empirical(const sepi_params* p, const sepi_dataset* ds,
                                   size_t index, double h_th, double* loss,
                                   sepi_branch* branch, double* entropy) {
  if (!p || !ds) return bad_arg("sepi_predict_empirical: null argument");
  return wrap([&] {
    const EmpiricalPrediction pred =
        empirical_predict(p->p, sample_at(ds->ds, index), h_th);
    if (loss) *loss = pred.loss;
    if (branch) *branch = to_c(pred.choice.branch);
    if (entropy) *entropy = pred.choice.entropy;
  });
}

/* ---- model ------------------------------------------------------------ */

sepi_status sepi_config_create(sepi_config** out) {
  if (!out) return bad_arg("sepi_config_create: null output");
  return wrap([&] { *out = new sepi_config{}; });
}

sepi_status sepi_config_load(const char* path, sepi_config** out) {
  if (!path || !out) return bad_arg("sepi_config_load: null argument");
  return wrap([&] { *out = new sepi_config{ModelConfig::from_file(path)}; });
}

sepi_status sepi_config_set(sepi_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return bad_arg("sepi_config_set: null argument");
  return wrap([&] { cfg->cfg.apply_kv(key, value); });
}

const char* sepi_config_text(sepi_config* cfg) {
  if (!cfg) return "";
  cfg->text_cache = cfg->cfg.to_text();
  return cfg->text_cache.c_str();
}

void sepi_config_free(sepi_config* cfg) { delete cfg; }

sepi_status sepi_model_train(const sepi_config* cfg, const sepi_dataset* train,
                             const sepi_dataset* val, const char* history_csv,
                             sepi_model** out) {
  if (!cfg || !train || !val || !out) return bad_arg("sepi_model_train: null argument");
  return wrap([&] {
    auto m = std::make_unique<sepi_model>();
    m->net = SEPITFPNet::build(cfg->cfg, train->ds);
    const TrainHistory hist = sepitfp::train(m->net, train->ds, val->ds);
    if (history_csv && history_csv[0] != '\0') {
      std::ofstream f(history_csv);
      if (!f) throw DataError("sepi_model_train: cannot open " + std::string(history_csv));
      f.precision(17);
      f << "epoch,train_loss,val_loss,val_abs95_pct\n";
      for (std::size_t e = 0; e < hist.epochs.size(); ++e) {
        f << e << "," << hist.epochs[e].train_loss << "," << hist.epochs[e].val_loss << ","
          << hist.epochs[e].val_abs95 << "\n";
      }
    }
    *out = m.release();
  });
}

sepi_status sepi_model_save(const sepi_model* m, const char* path) {
  if (!m || !path) return bad_arg("sepi_model_save: null argument");
  return wrap([&] { m->net.save(path); });
}

sepi_status sepi_model_load(const char* path, sepi_model** out) {
  if (!path || !out) return bad_arg("sepi_model_load: null argument");
  return wrap([&] { *out = new sepi_model{SEPITFPNet::load(path)}; });
}

sepi_status sepi_model_predict(const sepi_model* m, const sepi_dataset* ds, size_t index,
                               double* p_pred, double* p_emp, sepi_branch* branch) {
  if (!m || !ds) return bad_arg("sepi_model_predict: null argument");
  return wrap([&] {
    NoGradGuard ng;
    const ForwardResult r = m->net.forward(sample_at(ds->ds, index));
    if (p_pred) *p_pred = r.p_pred;
    if (p_emp) *p_emp = r.p_emp;
    if (branch) *branch = to_c(r.choice.branch);
  });
}

void sepi_model_free(sepi_model* m) { delete m; }

/* ---- evaluation ------------------------------------------------------- */

sepi_status sepi_evaluate(const sepi_model* m, const sepi_dataset* ds, sepi_report** out) {
  if (!m || !ds || !out) return bad_arg("sepi_evaluate: null argument");
  return wrap([&] { *out = new sepi_report{evaluate(m->net, ds->ds)}; });
}

sepi_status sepi_report_metric(const sepi_report* r, const char* name, double* out) {
  if (!r || !name || !out) return bad_arg("sepi_report_metric: null argument");
  const std::string n = name;
  if (n == "mean") *out = r->r.net.mean;
  else if (n == "median") *out = r->r.net.median;
  else if (n == "abs95") *out = r->r.net.p95;
  else if (n == "max") *out = r->r.net.max;
  else if (n == "prior_mean") *out = r->r.prior.mean;
  else if (n == "prior_median") *out = r->r.prior.median;
  else if (n == "prior_abs95") *out = r->r.prior.p95;
  else if (n == "prior_max") *out = r->r.prior.max;
  else if (n == "count_steinmetz") *out = static_cast<double>(r->r.count_steinmetz);
  else if (n == "count_igse") *out = static_cast<double>(r->r.count_igse);
  else return bad_arg("sepi_report_metric: unknown metric name");
  return SEPI_OK;
}

sepi_status sepi_report_write(const sepi_report* r, const char* text_path,
                              const char* csv_path) {
  if (!r || !text_path || !csv_path) return bad_arg("sepi_report_write: null argument");
  return wrap([&] { write_report(r->r, text_path, csv_path); });
}

void sepi_report_free(sepi_report* r) { delete r; }

sepi_status sepi_grid_search(const sepi_config* cfg, const sepi_dataset* train,
                             const sepi_dataset* val, const char* grid,
                             sepi_grid_result** out) {
  if (!cfg || !train || !val || !out) return bad_arg("sepi_grid_search: null argument");
  return wrap([&] {
    std::vector<std::pair<double, double>> cells;
    if (!grid || grid[0] == '\0') {
      cells = default_lambda_grid();
    } else {
      std::stringstream ss(grid);
      std::string cell;
      while (std::getline(ss, cell, ';')) {
        const auto comma = cell.find(',');
        if (comma == std::string::npos) {
          throw ConfigError("grid string: expected 'l1,l2' cells separated by ';'");
        }
        cells.emplace_back(std::stod(cell.substr(0, comma)), std::stod(cell.substr(comma + 1)));
      }
    }
    *out = new sepi_grid_result{grid_search_lambdas(train->ds, val->ds, cells, cfg->cfg)};
  });
}

sepi_status sepi_grid_result_best(const sepi_grid_result* g, double* lambda1,
                                  double* lambda2) {
  if (!g) return bad_arg("sepi_grid_result_best: null argument");
  if (lambda1) *lambda1 = g->g.best_lambda1;
  if (lambda2) *lambda2 = g->g.best_lambda2;
  return SEPI_OK;
}

sepi_status sepi_grid_result_write(const sepi_grid_result* g, const char* path) {
  if (!g || !path) return bad_arg("sepi_grid_result_write: null argument");
  return wrap([&] {
    std::ofstream f(path);
    if (!f) throw DataError("sepi_grid_result_write: cannot open " + std::string(path));
    f << grid_table_to_text(g->g);
  });
}

void sepi_grid_result_free(sepi_grid_result* g) { delete g; }

}  // extern "C"
