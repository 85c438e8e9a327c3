#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sepitfp/data.hpp"
#include "sepitfp/empirical.hpp"
#include "sepitfp/nn.hpp"
#include "sepitfp/tensor.hpp"

namespace sepitfp {

struct ModelConfig {
  // architecture
  std::int64_t latent_dim = 48;
  std::int64_t heads = 4;
  std::int64_t fnn_hidden = 96;
  CnnConfig cnn;
  std::int64_t lstm_hidden = 32;
  std::int64_t mlp_hidden1 = 64;
  std::int64_t mlp_hidden2 = 32;
  // temporal downsampling (strided mean): latent map before attention, and
  // an extra factor before the recurrent branch
  std::int64_t downsample = 8;
  std::int64_t lstm_downsample = 8;
  // empirical switch / loss weights
  double h_th = 0.01;
  double lambda1 = 1.0;
  double lambda2 = 0.1;
  // optimization
  double lr = 1e-3;
  std::int64_t batch = 16;
  std::int64_t epochs = 30;
  std::uint64_t seed = 42;

  void validate() const;
  // key-value text config: unknown keys rejected, later keys win
  void apply_kv(const std::string& key, const std::string& value);
  static ModelConfig from_file(const std::string& path);
  std::string to_text() const;
};

struct ForwardResult {
  double p_pred = 0.0;  // W/m^3
  double p_emp = 0.0;   // W/m^3
  ModelChoice choice;
  Tensor log_pred;  // scalar graph output, ln(p_pred / 1 W/m^3)
};

// The assembled network: deep branches + empirical prior channel + gate.
struct SEPITFPNet {
  ModelConfig cfg;
  SteinmetzParams prior;
  NormStats stats;

  Autoencoder ae;
  MultiHeadAttention mha;
  Ffn ffn;
  CnnBranch cnn;
  BiLstm lstm;
  AffGate aff;
  MlpHead mlp;

  // Fits the prior and the normalization stats on the training split, then
  // initializes all parameters from cfg.seed.
  static SEPITFPNet build(const ModelConfig& cfg, const Dataset& train_split);
  // Variant with an externally supplied prior (training split needs no fit).
  static SEPITFPNet build(const ModelConfig& cfg, const SteinmetzParams& prior,
                          const NormStats& stats);

  ForwardResult forward(const FluxWaveform& w) const;

  std::vector<NamedParam> params() const;
  void zero_grads() const;

  // writes <path> (binary parameters) and <path>.meta (config + prior + stats)
  void save(const std::string& path) const;
  static SEPITFPNet load(const std::string& path);
};

// Dual-MAPE objective over a batch, tensor form for training.
Tensor custom_loss(const std::vector<Tensor>& log_preds, const std::vector<double>& p_act,
                   const std::vector<double>& p_emp, double lambda1, double lambda2);
// Plain numeric form for reporting.
double custom_loss_value(const std::vector<double>& p_pred, const std::vector<double>& p_act,
                         const std::vector<double>& p_emp, double lambda1, double lambda2);

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_abs95 = 0.0;  // percent
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

// Mini-batch gradient descent with adaptive-moment updates (Adam),
// deterministic given cfg.seed.
TrainHistory train(SEPITFPNet& net, const Dataset& train_split, const Dataset& val_split);

struct GridCell {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double val_abs95 = 0.0;  // percent
  bool ok = false;
  std::string error;
};

struct GridSearchResult {
  double best_lambda1 = 0.0;
  double best_lambda2 = 0.0;
  std::vector<GridCell> table;
};

// Trains one model per grid point (shared seed), selects the pair
// minimizing validation Abs.95%; ties go to smaller lambda2 then lambda1.
GridSearchResult grid_search_lambdas(const Dataset& train_split, const Dataset& val_split,
                                     const std::vector<std::pair<double, double>>& grid,
                                     const ModelConfig& cfg);

std::vector<std::pair<double, double>> default_lambda_grid();

}  // namespace sepitfp
