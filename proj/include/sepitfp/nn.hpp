#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sepitfp/tensor.hpp"

namespace sepitfp {

// Deterministic RNG used for all parameter init and data synthesis.
// Uniform/normal draws are hand-rolled from the raw 64-bit stream so the
// value sequence does not depend on the standard library's distribution
// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal();   // standard normal, Box-Muller
  std::uint64_t next_u64() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

using NamedParam = std::pair<std::string, Tensor>;

Tensor init_uniform_fan(Rng& rng, Shape shape, std::int64_t fan_in, std::int64_t fan_out);

// Dense y = x W + b, x: [T, in] -> [T, out]
struct Dense {
  Tensor W;  // [in, out]
  Tensor b;  // [out]

  Dense() = default;
  Dense(std::int64_t in, std::int64_t out, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

// Per-timestep expansion of the flux sequence to a latent map, with a
// decoder head for the reconstruction pathway.
struct Autoencoder {
  Dense enc;  // 1 -> latent
  Dense dec;  // latent -> 1

  Autoencoder() = default;
  Autoencoder(std::int64_t latent, Rng& rng);
  Tensor encode(const Tensor& b_seq) const;  // [T] -> [T, latent], tanh
  Tensor decode(const Tensor& z) const;      // [T, latent] -> [T]
  void collect(std::vector<NamedParam>& out) const;
};

// Sinusoidal position table P[t, 2j] = sin(t / 10000^(2j/d)),
// P[t, 2j+1] = cos(t / 10000^(2j/d)). Parameter-free.
Tensor positional_encoding_table(std::int64_t t, std::int64_t d);
Tensor positional_encoding(const Tensor& x);  // x + P

struct MultiHeadAttention {
  Tensor Wq, Wk, Wv, Wo;  // [d, d]
  std::int64_t heads = 0;

  MultiHeadAttention() = default;
  MultiHeadAttention(std::int64_t d, std::int64_t heads, Rng& rng);
  Tensor forward(const Tensor& x) const;  // [T, d] -> [T, d]
  void collect(std::vector<NamedParam>& out) const;
};

// Two-layer position-wise feedforward: Dense(d->h, relu), Dense(h->d).
struct Ffn {
  Dense d1, d2;

  Ffn() = default;
  Ffn(std::int64_t d, std::int64_t hidden, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(std::vector<NamedParam>& out) const;
};

struct CnnConfig {
  std::vector<std::int64_t> channels = {16, 32, 32};
  std::vector<std::int64_t> kernels = {5, 5, 3};
  std::int64_t pool_width = 2;
  std::int64_t pool_stride = 2;
};

// Conv -> MaxPool -> Conv -> MaxPool -> Conv -> Flatten
struct CnnBranch {
  std::vector<Tensor> kernels;  // [K, Cin, Cout]
  std::vector<Tensor> biases;   // [Cout]
  CnnConfig cfg;

  CnnBranch() = default;
  CnnBranch(std::int64_t in_channels, std::int64_t in_length, const CnnConfig& cfg, Rng& rng);
  Tensor forward(const Tensor& x) const;  // [T, C] -> flat [out_dim]
  // closed-form output length for a given input length; throws ConfigError
  // when the config drives the temporal length below 1
  static std::int64_t output_dim(std::int64_t in_length, const CnnConfig& cfg);
  void collect(std::vector<NamedParam>& out) const;
};

struct LstmCell {
  Tensor W_ih;  // [in, 4h], gate order i, f, g, o
  Tensor W_hh;  // [h, 4h]
  Tensor b;     // [4h], forget-gate block initialized to +1

  LstmCell() = default;
  LstmCell(std::int64_t in, std::int64_t hidden, Rng& rng);
  std::int64_t hidden() const { return W_hh.shape()[0]; }
  // x_row: [1, in]; returns updated (h, c), each [1, h]
  std::pair<Tensor, Tensor> step(const Tensor& x_row, const Tensor& h, const Tensor& c) const;
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

// Forward and backward recurrences with independent parameters; output is
// the concatenation of the two final hidden states.
struct BiLstm {
  LstmCell fwd, bwd;

  BiLstm() = default;
  BiLstm(std::int64_t in, std::int64_t hidden, Rng& rng);
  Tensor forward(const Tensor& x) const;  // [T, C] -> [2h]
  void collect(std::vector<NamedParam>& out) const;
};

// Gated two-stream fusion: scalar logits from stream means, joint softmax
// over the pair, channel-weighted concatenation.
struct AffGate {
  Tensor w_t, b_t, w_s, b_s;  // scalars

  AffGate() = default;
  explicit AffGate(Rng& rng);
  struct Out {
    Tensor fused;   // [d_t + d_s]
    Tensor alphas;  // [2], softmax pair (alpha_t, alpha_s)
  };
  Out forward(const Tensor& f_t, const Tensor& f_s) const;
  void collect(std::vector<NamedParam>& out) const;
};

// Dense -> relu -> Dense -> relu -> Dense(-> 1), log-domain output.
struct MlpHead {
  Dense d1, d2, d3;

  MlpHead() = default;
  MlpHead(std::int64_t in, std::int64_t h1, std::int64_t h2, Rng& rng);
  Tensor forward(const Tensor& f) const;  // [d] -> scalar
  void collect(std::vector<NamedParam>& out) const;
};

// ---- parameter serialization ------------------------------------------
// Flat binary container of (name, shape, row-major float64 values) records
// with a version header; bit-exact round-trip.

void save_named_params(const std::vector<NamedParam>& params, const std::string& path);
// Loads into existing tensors matched by name; throws DataError on missing
// or mismatched records.
void load_named_params(std::vector<NamedParam>& params, const std::string& path);

}  // namespace sepitfp
