#include "sepitfp/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "sepitfp/errors.hpp"

namespace sepitfp {

double Rng::uniform() {
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 1e-300) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double th = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(th);
  has_spare_ = true;
  return r * std::cos(th);
}

Tensor init_uniform_fan(Rng& rng, Shape shape, std::int64_t fan_in, std::int64_t fan_out) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  const auto n = shape_numel(shape);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = rng.uniform(-s, s);
  return Tensor(std::move(shape), std::move(v), /*requires_grad=*/true);
}

// ---- Dense ------------------------------------------------------------

Dense::Dense(std::int64_t in, std::int64_t out, Rng& rng)
    : W(init_uniform_fan(rng, {in, out}, in, out)),
      b(Tensor::zeros({out}, /*requires_grad=*/true)) {}

Tensor Dense::forward(const Tensor& x) const { return add_bias(matmul(x, W), b); }

void Dense::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.emplace_back(prefix + ".W", W);
  out.emplace_back(prefix + ".b", b);
}

// ---- Autoencoder ------------------------------------------------------

Autoencoder::Autoencoder(std::int64_t latent, Rng& rng)
    : enc(1, latent, rng), dec(latent, 1, rng) {}

Tensor Autoencoder::encode(const Tensor& b_seq) const {
  if (b_seq.shape().size() != 1) {
    throw ShapeError("autoencoder: expected 1-D flux sequence, got " +
                     shape_str(b_seq.shape()));
  }
  const auto t = b_seq.shape()[0];
  return tanh_t(enc.forward(reshape(b_seq, {t, 1})));
}

Tensor Autoencoder::decode(const Tensor& z) const {
  const auto t = z.shape()[0];
  return reshape(dec.forward(z), {t});
}

void Autoencoder::collect(std::vector<NamedParam>& out) const {
  enc.collect("ae.enc", out);
  dec.collect("ae.dec", out);
}

// ---- positional encoding ----------------------------------------------

Tensor positional_encoding_table(std::int64_t t, std::int64_t d) {
  std::vector<double> v(static_cast<std::size_t>(t * d));
  for (std::int64_t i = 0; i < t; ++i) {
    for (std::int64_t j = 0; j < d; j += 2) {
      const double div = std::pow(10000.0, static_cast<double>(j) / static_cast<double>(d));
      const double ang = static_cast<double>(i) / div;
      v[static_cast<std::size_t>(i * d + j)] = std::sin(ang);
      if (j + 1 < d) v[static_cast<std::size_t>(i * d + j + 1)] = std::cos(ang);
    }
  }
  return Tensor({t, d}, std::move(v));
}

Tensor positional_encoding(const Tensor& x) {
  if (x.shape().size() != 2) {
    throw ShapeError("positional_encoding: expected [T, d], got " + shape_str(x.shape()));
  }
  return add(x, positional_encoding_table(x.shape()[0], x.shape()[1]));
}

// ---- MultiHeadAttention -----------------------------------------------

MultiHeadAttention::MultiHeadAttention(std::int64_t d, std::int64_t h, Rng& rng)
    : Wq(init_uniform_fan(rng, {d, d}, d, d)),
      Wk(init_uniform_fan(rng, {d, d}, d, d)),
      Wv(init_uniform_fan(rng, {d, d}, d, d)),
      Wo(init_uniform_fan(rng, {d, d}, d, d)),
      heads(h) {
  if (h < 1 || d % h != 0) {
    throw ConfigError("attention: heads=" + std::to_string(h) + " must divide d=" +
                      std::to_string(d));
  }
}

Tensor MultiHeadAttention::forward(const Tensor& x) const {
  const auto d = Wq.shape()[0];
  if (x.shape().size() != 2 || x.shape()[1] != d) {
    throw ShapeError("attention: expected [T," + std::to_string(d) + "], got " +
                     shape_str(x.shape()));
  }
  const auto dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor q = matmul(x, Wq);
  const Tensor k = matmul(x, Wk);
  const Tensor v = matmul(x, Wv);
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (std::int64_t h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    const Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
    const Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
    const Tensor scores = scalar_mul(matmul(qh, transpose(kh)), scale);
    const Tensor attn = softmax_rows(scores);
    outs.push_back(matmul(attn, vh));
  }
  return matmul(concat_cols(outs), Wo);
}

void MultiHeadAttention::collect(std::vector<NamedParam>& out) const {
  out.emplace_back("mha.Wq", Wq);
  out.emplace_back("mha.Wk", Wk);
  out.emplace_back("mha.Wv", Wv);
  out.emplace_back("mha.Wo", Wo);
}

// ---- Ffn --------------------------------------------------------------

Ffn::Ffn(std::int64_t d, std::int64_t hidden, Rng& rng)
    : d1(d, hidden, rng), d2(hidden, d, rng) {}

Tensor Ffn::forward(const Tensor& x) const { return d2.forward(relu_t(d1.forward(x))); }

void Ffn::collect(std::vector<NamedParam>& out) const {
  d1.collect("ffn.d1", out);
  d2.collect("ffn.d2", out);
}

// ---- CnnBranch --------------------------------------------------------

std::int64_t CnnBranch::output_dim(std::int64_t in_length, const CnnConfig& cfg) {
  if (cfg.channels.size() != 3 || cfg.kernels.size() != 3) {
    throw ConfigError("cnn: expected 3 conv layers");
  }
  std::int64_t t = in_length;
  for (std::size_t i = 0; i < 3; ++i) {
    t = conv_1d_output_length(t, cfg.kernels[i], 1, 0);
    if (t < 1) throw ConfigError("cnn: conv layer " + std::to_string(i) + " drives length below 1");
    if (i < 2) {
      t = pool_1d_output_length(t, cfg.pool_width, cfg.pool_stride);
      if (t < 1) throw ConfigError("cnn: pool layer " + std::to_string(i) + " drives length below 1");
    }
  }
  return t * cfg.channels[2];
}

CnnBranch::CnnBranch(std::int64_t in_channels, std::int64_t in_length, const CnnConfig& c,
                     Rng& rng)
    : cfg(c) {
  output_dim(in_length, c);  // validates at build time
  std::int64_t cin = in_channels;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto k = c.kernels[i], cout = c.channels[i];
    kernels.push_back(init_uniform_fan(rng, {k, cin, cout}, k * cin, k * cout));
    biases.push_back(Tensor::zeros({cout}, /*requires_grad=*/true));
    cin = cout;
  }
}

Tensor CnnBranch::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < 3; ++i) {
    h = relu_t(add_bias(conv_1d(h, kernels[i], 1, 0), biases[i]));
    if (i < 2) h = max_pool_1d(h, cfg.pool_width, cfg.pool_stride);
  }
  return reshape(h, {h.numel()});
}

void CnnBranch::collect(std::vector<NamedParam>& out) const {
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    out.emplace_back("cnn.k" + std::to_string(i), kernels[i]);
    out.emplace_back("cnn.b" + std::to_string(i), biases[i]);
  }
}

// ---- LSTM -------------------------------------------------------------

LstmCell::LstmCell(std::int64_t in, std::int64_t hidden, Rng& rng)
    : W_ih(init_uniform_fan(rng, {in, 4 * hidden}, in, hidden)),
      W_hh(init_uniform_fan(rng, {hidden, 4 * hidden}, hidden, hidden)) {
  std::vector<double> bias(static_cast<std::size_t>(4 * hidden), 0.0);
  for (std::int64_t j = hidden; j < 2 * hidden; ++j) bias[static_cast<std::size_t>(j)] = 1.0;
  b = Tensor({4 * hidden}, std::move(bias), /*requires_grad=*/true);
}

std::pair<Tensor, Tensor> LstmCell::step(const Tensor& x_row, const Tensor& h,
                                         const Tensor& c) const {
  const auto hs = hidden();
  const Tensor z = add_bias(add(matmul(x_row, W_ih), matmul(h, W_hh)), b);
  const Tensor i = sigmoid_t(slice_cols(z, 0, hs));
  const Tensor f = sigmoid_t(slice_cols(z, hs, 2 * hs));
  const Tensor g = tanh_t(slice_cols(z, 2 * hs, 3 * hs));
  const Tensor o = sigmoid_t(slice_cols(z, 3 * hs, 4 * hs));
  const Tensor c_next = add(mul(f, c), mul(i, g));
  const Tensor h_next = mul(o, tanh_t(c_next));
  return {h_next, c_next};
}

void LstmCell::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.emplace_back(prefix + ".W_ih", W_ih);
  out.emplace_back(prefix + ".W_hh", W_hh);
  out.emplace_back(prefix + ".b", b);
}

BiLstm::BiLstm(std::int64_t in, std::int64_t hidden, Rng& rng)
    : fwd(in, hidden, rng), bwd(in, hidden, rng) {}

Tensor BiLstm::forward(const Tensor& x) const {
  if (x.shape().size() != 2 || x.shape()[0] < 1) {
    throw ShapeError("bilstm: expected [T, C] with T >= 1, got " + shape_str(x.shape()));
  }
  const auto t = x.shape()[0];
  const auto hs = fwd.hidden();
  Tensor hf = Tensor::zeros({1, hs});
  Tensor cf = Tensor::zeros({1, hs});
  for (std::int64_t i = 0; i < t; ++i) {
    std::tie(hf, cf) = fwd.step(slice_rows(x, i, i + 1), hf, cf);
  }
  Tensor hb = Tensor::zeros({1, hs});
  Tensor cb = Tensor::zeros({1, hs});
  for (std::int64_t i = t - 1; i >= 0; --i) {
    std::tie(hb, cb) = bwd.step(slice_rows(x, i, i + 1), hb, cb);
  }
  return concat({reshape(hf, {hs}), reshape(hb, {hs})});
}

void BiLstm::collect(std::vector<NamedParam>& out) const {
  fwd.collect("lstm.fwd", out);
  bwd.collect("lstm.bwd", out);
}

// ---- AffGate ----------------------------------------------------------

AffGate::AffGate(Rng& rng)
    : w_t(Tensor::scalar(rng.uniform(-0.5, 0.5), true)),
      b_t(Tensor::scalar(0.0, true)),
      w_s(Tensor::scalar(rng.uniform(-0.5, 0.5), true)),
      b_s(Tensor::scalar(0.0, true)) {}

AffGate::Out AffGate::forward(const Tensor& f_t, const Tensor& f_s) const {
  if (f_t.shape().size() != 1 || f_t.numel() < 1 || f_s.shape().size() != 1 ||
      f_s.numel() < 1) {
    throw ShapeError("aff_fuse: streams must be non-empty 1-D, got " +
                     shape_str(f_t.shape()) + " and " + shape_str(f_s.shape()));
  }
  const Tensor z_t = add(mul(w_t, mean_all(f_t)), b_t);
  const Tensor z_s = add(mul(w_s, mean_all(f_s)), b_s);
  const Tensor alphas = softmax_rows(concat({z_t, z_s}));
  Out out;
  out.alphas = alphas;
  const Tensor at = slice_cols(reshape(alphas, {1, 2}), 0, 1);
  const Tensor as = slice_cols(reshape(alphas, {1, 2}), 1, 2);
  out.fused = concat({mul_scalar_bcast(f_t, reshape(at, {1})),
                      mul_scalar_bcast(f_s, reshape(as, {1}))});
  return out;
}

void AffGate::collect(std::vector<NamedParam>& out) const {
  out.emplace_back("aff.w_t", w_t);
  out.emplace_back("aff.b_t", b_t);
  out.emplace_back("aff.w_s", w_s);
  out.emplace_back("aff.b_s", b_s);
}

// ---- MlpHead ----------------------------------------------------------

MlpHead::MlpHead(std::int64_t in, std::int64_t h1, std::int64_t h2, Rng& rng)
    : d1(in, h1, rng), d2(h1, h2, rng), d3(h2, 1, rng) {}

Tensor MlpHead::forward(const Tensor& f) const {
  const Tensor x = reshape(f, {1, f.numel()});
  const Tensor h1 = relu_t(d1.forward(x));
  const Tensor h2 = relu_t(d2.forward(h1));
  return reshape(d3.forward(h2), {1});
}

void MlpHead::collect(std::vector<NamedParam>& out) const {
  d1.collect("mlp.d1", out);
  d2.collect("mlp.d2", out);
  d3.collect("mlp.d3", out);
}

// ---- serialization ----------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'E', 'P', 'I', 'P', 'A', 'R', '1'};

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& f, T& v) {
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw DataError("param file: truncated read");
}

}  // namespace

void save_named_params(const std::vector<NamedParam>& params, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("save_named_params: cannot open " + path);
  f.write(kMagic, sizeof(kMagic));
  write_pod(f, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    write_pod(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(f, static_cast<std::uint32_t>(t.shape().size()));
    for (std::int64_t d : t.shape()) write_pod(f, d);
    f.write(reinterpret_cast<const char*>(t.values().data()),
            static_cast<std::streamsize>(t.values().size() * sizeof(double)));
  }
  if (!f) throw DataError("save_named_params: write failed for " + path);
}

void load_named_params(std::vector<NamedParam>& params, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("load_named_params: cannot open " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("load_named_params: bad header in " + path);
  }
  std::uint32_t count = 0;
  read_pod(f, count);
  std::vector<std::pair<std::string, std::pair<Shape, std::vector<double>>>> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t nlen = 0;
    read_pod(f, nlen);
    std::string name(nlen, '\0');
    f.read(name.data(), nlen);
    std::uint32_t ndim = 0;
    read_pod(f, ndim);
    Shape shape(ndim);
    for (auto& d : shape) read_pod(f, d);
    std::vector<double> vals(static_cast<std::size_t>(shape_numel(shape)));
    f.read(reinterpret_cast<char*>(vals.data()),
           static_cast<std::streamsize>(vals.size() * sizeof(double)));
    if (!f) throw DataError("load_named_params: truncated record " + name);
    records.emplace_back(std::move(name), std::make_pair(std::move(shape), std::move(vals)));
  }
  for (auto& [name, t] : params) {
    bool found = false;
    for (auto& [rname, rdata] : records) {
      if (rname != name) continue;
      if (rdata.first != t.shape()) {
        throw DataError("load_named_params: shape mismatch for " + name + ": file " +
                        shape_str(rdata.first) + " vs model " + shape_str(t.shape()));
      }
      t.mutable_values() = rdata.second;
      found = true;
      break;
    }
    if (!found) throw DataError("load_named_params: missing record " + name);
  }
}

}  // namespace sepitfp
