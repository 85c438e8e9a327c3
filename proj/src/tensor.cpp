#include "sepitfp/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "sepitfp/errors.hpp"

namespace sepitfp {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

thread_local int g_no_grad_depth = 0;

bool wants_grad(const TensorNode& n) { return n.requires_grad || n.backward_fn != nullptr; }

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(op) + ": non-finite result");
    }
  }
}

Tensor make_op(Shape shape, std::vector<double> values, std::vector<NodePtr> parents,
               std::function<void(TensorNode&)> bw, const char* op) {
  check_finite(values, op);
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  if (grad_enabled()) {
    bool any = false;
    for (const NodePtr& p : parents) any = any || wants_grad(*p);
    if (any) {
      n->parents = std::move(parents);
      n->backward_fn = std::move(bw);
    }
  }
  return Tensor(std::move(n));
}

void require_2d(const Tensor& a, const char* op) {
  if (a.shape().size() != 2) {
    throw ShapeError(std::string(op) + ": expected 2-D tensor, got shape " +
                     shape_str(a.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

}  // namespace

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (std::int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

void TensorNode::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw ShapeError("Tensor: shape " + shape_str(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  check_finite(values, "Tensor");
  n_ = std::make_shared<TensorNode>();
  n_->shape = std::move(shape);
  n_->values = std::move(values);
  n_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(Shape{1}, {v}, requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0),
                requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), v),
                requires_grad);
}

const std::vector<double>& Tensor::grad() const {
  n_->ensure_grad();
  return n_->grad;
}

void Tensor::zero_grad() {
  n_->grad.assign(n_->values.size(), 0.0);
  n_->backward_done = false;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor is not scalar, shape " + shape_str(shape()));
  return n_->values[0];
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

// ---- ops --------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make_op(a.shape(), std::move(out), {a.node(), b.node()},
                 [pa = a.node(), pb = b.node()](TensorNode& self) {
                   for (const NodePtr& p : {pa, pb}) {
                     if (!wants_grad(*p)) continue;
                     p->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
                   }
                 },
                 "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return make_op(a.shape(), std::move(out), {a.node(), b.node()},
                 [pa = a.node(), pb = b.node()](TensorNode& self) {
                   if (wants_grad(*pa)) {
                     pa->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
                   }
                   if (wants_grad(*pb)) {
                     pb->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
                   }
                 },
                 "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make_op(a.shape(), std::move(out), {a.node(), b.node()},
                 [pa = a.node(), pb = b.node()](TensorNode& self) {
                   if (wants_grad(*pa)) {
                     pa->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       pa->grad[i] += self.grad[i] * pb->values[i];
                   }
                   if (wants_grad(*pb)) {
                     pb->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       pb->grad[i] += self.grad[i] * pa->values[i];
                   }
                 },
                 "mul");
}

Tensor scalar_mul(const Tensor& a, double c) {
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
  return make_op(a.shape(), std::move(out), {a.node()},
                 [pa = a.node(), c](TensorNode& self) {
                   if (!wants_grad(*pa)) return;
                   pa->ensure_grad();
                   for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * c;
                 },
                 "scalar_mul");
}

Tensor add_const(const Tensor& a, double c) {
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + c;
  return make_op(a.shape(), std::move(out), {a.node()},
                 [pa = a.node()](TensorNode& self) {
                   if (!wants_grad(*pa)) return;
                   pa->ensure_grad();
                   for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
                 },
                 "add_const");
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  require_2d(x, "add_bias");
  if (b.shape().size() != 1 || b.shape()[0] != x.shape()[1]) {
    throw ShapeError("add_bias: bias shape " + shape_str(b.shape()) +
                     " incompatible with " + shape_str(x.shape()));
  }
  const auto t = static_cast<std::size_t>(x.shape()[0]);
  const auto c = static_cast<std::size_t>(x.shape()[1]);
  std::vector<double> out(t * c);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.values()[i * c + j] + b.values()[j];
  return make_op(x.shape(), std::move(out), {x.node(), b.node()},
                 [px = x.node(), pb = b.node(), t, c](TensorNode& self) {
                   if (wants_grad(*px)) {
                     px->ensure_grad();
                     for (std::size_t i = 0; i < t * c; ++i) px->grad[i] += self.grad[i];
                   }
                   if (wants_grad(*pb)) {
                     pb->ensure_grad();
                     for (std::size_t i = 0; i < t; ++i)
                       for (std::size_t j = 0; j < c; ++j) pb->grad[j] += self.grad[i * c + j];
                   }
                 },
                 "add_bias");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const auto m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw ShapeError("matmul: inner dimension mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(m * n));
  {
    CMapMat ma(a.values().data(), m, k);
    CMapMat mb(b.values().data(), k, n);
    MapMat mo(out.data(), m, n);
    mo.noalias() = ma * mb;
  }
  return make_op({m, n}, std::move(out), {a.node(), b.node()},
                 [pa = a.node(), pb = b.node(), m, k, n](TensorNode& self) {
                   CMapMat g(self.grad.data(), m, n);
                   if (wants_grad(*pa)) {
                     pa->ensure_grad();
                     CMapMat mb(pb->values.data(), k, n);
                     MapMat ga(pa->grad.data(), m, k);
                     ga.noalias() += g * mb.transpose();
                   }
                   if (wants_grad(*pb)) {
                     pb->ensure_grad();
                     CMapMat ma(pa->values.data(), m, k);
                     MapMat gb(pb->grad.data(), k, n);
                     gb.noalias() += ma.transpose() * g;
                   }
                 },
                 "matmul");
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const auto m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(m * n));
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j * m + i)] = a.values()[static_cast<std::size_t>(i * n + j)];
  return make_op({n, m}, std::move(out), {a.node()},
                 [pa = a.node(), m, n](TensorNode& self) {
                   if (!wants_grad(*pa)) return;
                   pa->ensure_grad();
                   for (std::int64_t i = 0; i < m; ++i)
                     for (std::int64_t j = 0; j < n; ++j)
                       pa->grad[static_cast<std::size_t>(i * n + j)] +=
                           self.grad[static_cast<std::size_t>(j * m + i)];
                 },
                 "transpose");
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(shape));
  }
  return make_op(std::move(shape), a.values(), {a.node()},
                 [pa = a.node()](TensorNode& self) {
                   if (!wants_grad(*pa)) return;
                   pa->ensure_grad();
                   for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
                 },
                 "reshape");
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat: empty part list");
  std::vector<double> out;
  std::vector<NodePtr> parents;
  std::vector<std::size_t> sizes;
  for (const Tensor& p : parts) {
    if (p.shape().size() != 1) {
      throw ShapeError("concat: expected 1-D parts, got " + shape_str(p.shape()));
    }
    out.insert(out.end(), p.values().begin(), p.values().end());
    parents.push_back(p.node());
    sizes.push_back(p.values().size());
  }
  const auto total = static_cast<std::int64_t>(out.size());
  return make_op({total}, std::move(out), parents,
                 [ps = parents, sizes](TensorNode& self) {
                   std::size_t off = 0;
                   for (std::size_t i = 0; i < ps.size(); ++i) {
                     if (wants_grad(*ps[i])) {
                       ps[i]->ensure_grad();
                       for (std::size_t j = 0; j < sizes[i]; ++j)
                         ps[i]->grad[j] += self.grad[off + j];
                     }
                     off += sizes[i];
                   }
                 },
                 "concat");
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: empty part list");
  const auto t = parts[0].shape().size() == 2 ? parts[0].shape()[0] : -1;
  std::int64_t total_c = 0;
  std::vector<NodePtr> parents;
  std::vector<std::int64_t> widths;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_cols");
    if (p.shape()[0] != t) {
      throw ShapeError("concat_cols: row-count mismatch " + shape_str(parts[0].shape()) +
                       " vs " + shape_str(p.shape()));
    }
    parents.push_back(p.node());
    widths.push_back(p.shape()[1]);
    total_c += p.shape()[1];
  }
  std::vector<double> out(static_cast<std::size_t>(t * total_c));
  std::int64_t off = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto w = widths[pi];
    const auto& v = parts[pi].values();
    for (std::int64_t i = 0; i < t; ++i)
      for (std::int64_t j = 0; j < w; ++j)
        out[static_cast<std::size_t>(i * total_c + off + j)] =
            v[static_cast<std::size_t>(i * w + j)];
    off += w;
  }
  return make_op({t, total_c}, std::move(out), parents,
                 [ps = parents, widths, t, total_c](TensorNode& self) {
                   std::int64_t off = 0;
                   for (std::size_t pi = 0; pi < ps.size(); ++pi) {
                     const auto w = widths[pi];
                     if (wants_grad(*ps[pi])) {
                       ps[pi]->ensure_grad();
                       for (std::int64_t i = 0; i < t; ++i)
                         for (std::int64_t j = 0; j < w; ++j)
                           ps[pi]->grad[static_cast<std::size_t>(i * w + j)] +=
                               self.grad[static_cast<std::size_t>(i * total_c + off + j)];
                     }
                     off += w;
                   }
                 },
                 "concat_cols");
}

Tensor slice_rows(const Tensor& a, std::int64_t r0, std::int64_t r1) {
  require_2d(a, "slice_rows");
  const auto t = a.shape()[0], c = a.shape()[1];
  if (r0 < 0 || r1 > t || r0 >= r1) {
    throw ShapeError("slice_rows: range [" + std::to_string(r0) + "," + std::to_string(r1) +
                     ") out of bounds for " + shape_str(a.shape()));
  }
  std::vector<double> out(a.values().begin() + r0 * c, a.values().begin() + r1 * c);
  return make_op({r1 - r0, c}, std::move(out), {a.node()},
                 [pa = a.node(), r0, c](TensorNode& self) {
                   if (!wants_grad(*pa)) return;
                   pa->ensure_grad();
                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                     pa->grad[static_cast<std::size_t>(r0 * c) + i] += self.grad[i];
                 },
                 "slice_rows");
}

Tensor slice_cols(const Tensor& a, std::int64_t c0, std::int64_t c1) {
  require_2d(a, "slice_cols");
  const auto t = a.shape()[0], c = a.shape()[1];
  if (c0 < 0 || c1 > c || c0 >= c1) {
    throw ShapeError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") out of bounds for " + shape_str(a.shape()));
  }
  const auto w = c1 - c0;
  std::vector<double> out(static_cast<std::size_t>(t * w));
  for (std::int64_t i = 0; i < t; ++i)
    for (std::int64_t j = 0; j < w; ++j)
      out[static_cast<std::size_t>(i * w + j)] = a.values()[static_cast<std::size_t>(i * c + c0 + j)];
  return make_op({t, w}, std::move(out), {a.node()},
                 [pa = a.node(), t, c, c0, w](TensorNode& self) {
                   if (!wants_grad(*pa)) return;
                   pa->ensure_grad();
                   for (std::int64_t i = 0; i < t; ++i)
                     for (std::int64_t j = 0; j < w; ++j)
                       pa->grad[static_cast<std::size_t>(i * c + c0 + j)] +=
                           self.grad[static_cast<std::size_t>(i * w + j)];
                 },
                 "slice_cols");
}

namespace {

template <typename F, typename DF>
Tensor unary_op(const Tensor& a, F f, DF df, const char* op) {
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.values()[i]);
  return make_op(a.shape(), std::move(out), {a.node()},
                 [pa = a.node(), df](TensorNode& self) {
                   if (!wants_grad(*pa)) return;
                   pa->ensure_grad();
                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                     pa->grad[i] += self.grad[i] * df(pa->values[i], self.values[i]);
                 },
                 op);
}

}  // namespace

Tensor exp_t(const Tensor& a) {
  return unary_op(a, [](double x) { return std::exp(x); },
                  [](double, double y) { return y; }, "exp");
}

Tensor ln_t(const Tensor& a) {
  for (double v : a.values()) {
    if (v <= 0.0) throw DomainError("ln: input must be strictly positive");
  }
  return unary_op(a, [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; }, "ln");
}

Tensor tanh_t(const Tensor& a) {
  return unary_op(a, [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Tensor sigmoid_t(const Tensor& a) {
  return unary_op(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                  [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Tensor relu_t(const Tensor& a) {
  return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; }, "relu");
}

Tensor abs_t(const Tensor& a) {
  return unary_op(a, [](double x) { return std::abs(x); },
                  [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); },
                  "abs");
}

Tensor softmax_rows(const Tensor& a) {
  if (a.shape().empty() || a.shape().size() > 2) {
    throw ShapeError("softmax: expected 1-D or 2-D tensor, got " + shape_str(a.shape()));
  }
  const auto cols = a.shape().back();
  const auto rows = a.numel() / cols;
  std::vector<double> out(a.values().size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* in = a.values().data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double sum = 0.0;
    for (std::int64_t j = 0; j < cols; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (std::int64_t j = 0; j < cols; ++j) o[j] /= sum;
  }
  return make_op(a.shape(), std::move(out), {a.node()},
                 [pa = a.node(), rows, cols](TensorNode& self) {
                   if (!wants_grad(*pa)) return;
                   pa->ensure_grad();
                   for (std::int64_t r = 0; r < rows; ++r) {
                     const double* y = self.values.data() + r * cols;
                     const double* gy = self.grad.data() + r * cols;
                     double dot = 0.0;
                     for (std::int64_t j = 0; j < cols; ++j) dot += gy[j] * y[j];
                     double* gx = pa->grad.data() + r * cols;
                     for (std::int64_t j = 0; j < cols; ++j) gx[j] += y[j] * (gy[j] - dot);
                   }
                 },
                 "softmax");
}

Tensor mean_all(const Tensor& a) {
  const auto n = a.numel();
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return make_op({1}, {acc / static_cast<double>(n)}, {a.node()},
                 [pa = a.node(), n](TensorNode& self) {
                   if (!wants_grad(*pa)) return;
                   pa->ensure_grad();
                   const double g = self.grad[0] / static_cast<double>(n);
                   for (auto& gv : pa->grad) gv += g;
                 },
                 "mean_all");
}

Tensor global_avg_pool_1d(const Tensor& x) {
  require_2d(x, "global_avg_pool_1d");
  const auto t = x.shape()[0], c = x.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(c), 0.0);
  for (std::int64_t i = 0; i < t; ++i)
    for (std::int64_t j = 0; j < c; ++j) out[static_cast<std::size_t>(j)] += x.values()[static_cast<std::size_t>(i * c + j)];
  for (auto& v : out) v /= static_cast<double>(t);
  return make_op({c}, std::move(out), {x.node()},
                 [px = x.node(), t, c](TensorNode& self) {
                   if (!wants_grad(*px)) return;
                   px->ensure_grad();
                   for (std::int64_t i = 0; i < t; ++i)
                     for (std::int64_t j = 0; j < c; ++j)
                       px->grad[static_cast<std::size_t>(i * c + j)] +=
                           self.grad[static_cast<std::size_t>(j)] / static_cast<double>(t);
                 },
                 "global_avg_pool_1d");
}

Tensor avg_pool_rows(const Tensor& x, std::int64_t factor) {
  require_2d(x, "avg_pool_rows");
  const auto t = x.shape()[0], c = x.shape()[1];
  if (factor < 1 || t % factor != 0) {
    throw ShapeError("avg_pool_rows: factor " + std::to_string(factor) +
                     " does not divide row count " + std::to_string(t));
  }
  const auto to = t / factor;
  std::vector<double> out(static_cast<std::size_t>(to * c), 0.0);
  for (std::int64_t i = 0; i < t; ++i)
    for (std::int64_t j = 0; j < c; ++j)
      out[static_cast<std::size_t>((i / factor) * c + j)] +=
          x.values()[static_cast<std::size_t>(i * c + j)] / static_cast<double>(factor);
  return make_op({to, c}, std::move(out), {x.node()},
                 [px = x.node(), t, c, factor](TensorNode& self) {
                   if (!wants_grad(*px)) return;
                   px->ensure_grad();
                   for (std::int64_t i = 0; i < t; ++i)
                     for (std::int64_t j = 0; j < c; ++j)
                       px->grad[static_cast<std::size_t>(i * c + j)] +=
                           self.grad[static_cast<std::size_t>((i / factor) * c + j)] /
                           static_cast<double>(factor);
                 },
                 "avg_pool_rows");
}

std::int64_t conv_1d_output_length(std::int64_t t, std::int64_t k, std::int64_t stride,
                                   std::int64_t padding) {
  return (t + 2 * padding - k) / stride + 1;
}

std::int64_t pool_1d_output_length(std::int64_t t, std::int64_t width, std::int64_t stride) {
  return (t - width) / stride + 1;
}

Tensor max_pool_1d(const Tensor& x, std::int64_t width, std::int64_t stride) {
  require_2d(x, "max_pool_1d");
  const auto t = x.shape()[0], c = x.shape()[1];
  if (width < 1 || stride < 1 || width > t) {
    throw ShapeError("max_pool_1d: invalid width/stride for " + shape_str(x.shape()));
  }
  const auto to = pool_1d_output_length(t, width, stride);
  std::vector<double> out(static_cast<std::size_t>(to * c));
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(to * c));
  for (std::int64_t i = 0; i < to; ++i) {
    for (std::int64_t j = 0; j < c; ++j) {
      std::int64_t best = i * stride;
      double bv = x.values()[static_cast<std::size_t>(best * c + j)];
      for (std::int64_t w = 1; w < width; ++w) {
        const auto r = i * stride + w;
        const double v = x.values()[static_cast<std::size_t>(r * c + j)];
        if (v > bv) {
          bv = v;
          best = r;
        }
      }
      out[static_cast<std::size_t>(i * c + j)] = bv;
      argmax[static_cast<std::size_t>(i * c + j)] = best;
    }
  }
  return make_op({to, c}, std::move(out), {x.node()},
                 [px = x.node(), argmax = std::move(argmax), c](TensorNode& self) {
                   if (!wants_grad(*px)) return;
                   px->ensure_grad();
                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                     const auto j = static_cast<std::int64_t>(i) % c;
                     px->grad[static_cast<std::size_t>(argmax[i] * c + j)] += self.grad[i];
                   }
                 },
                 "max_pool_1d");
}

Tensor conv_1d(const Tensor& x, const Tensor& kernel, std::int64_t stride,
               std::int64_t padding) {
  require_2d(x, "conv_1d");
  if (kernel.shape().size() != 3) {
    throw ShapeError("conv_1d: kernel must be [K,Cin,Cout], got " + shape_str(kernel.shape()));
  }
  const auto t = x.shape()[0], cin = x.shape()[1];
  const auto kw = kernel.shape()[0], kcin = kernel.shape()[1], cout = kernel.shape()[2];
  if (cin != kcin) {
    throw ShapeError("conv_1d: input channels " + shape_str(x.shape()) +
                     " vs kernel " + shape_str(kernel.shape()));
  }
  if (stride < 1 || padding < 0) throw ShapeError("conv_1d: invalid stride/padding");
  const auto to = conv_1d_output_length(t, kw, stride, padding);
  if (to < 1) {
    throw ShapeError("conv_1d: output length " + std::to_string(to) + " below 1");
  }
  // im2col then one GEMM; kernel flat layout is already [K*Cin, Cout]
  const auto kc = kw * cin;
  std::vector<double> col(static_cast<std::size_t>(to * kc), 0.0);
  for (std::int64_t i = 0; i < to; ++i) {
    for (std::int64_t w = 0; w < kw; ++w) {
      const auto r = i * stride + w - padding;
      if (r < 0 || r >= t) continue;
      for (std::int64_t j = 0; j < cin; ++j)
        col[static_cast<std::size_t>(i * kc + w * cin + j)] =
            x.values()[static_cast<std::size_t>(r * cin + j)];
    }
  }
  std::vector<double> out(static_cast<std::size_t>(to * cout));
  {
    CMapMat mc(col.data(), to, kc);
    CMapMat mk(kernel.values().data(), kc, cout);
    MapMat mo(out.data(), to, cout);
    mo.noalias() = mc * mk;
  }
  return make_op(
      {to, cout}, std::move(out), {x.node(), kernel.node()},
      [px = x.node(), pk = kernel.node(), col = std::move(col), t, cin, kw, cout, kc, to,
       stride, padding](TensorNode& self) {
        CMapMat g(self.grad.data(), to, cout);
        if (wants_grad(*pk)) {
          pk->ensure_grad();
          CMapMat mc(col.data(), to, kc);
          MapMat gk(pk->grad.data(), kc, cout);
          gk.noalias() += mc.transpose() * g;
        }
        if (wants_grad(*px)) {
          px->ensure_grad();
          RowMat gcol(to, kc);
          CMapMat mk(pk->values.data(), kc, cout);
          gcol.noalias() = g * mk.transpose();
          for (std::int64_t i = 0; i < to; ++i) {
            for (std::int64_t w = 0; w < kw; ++w) {
              const auto r = i * stride + w - padding;
              if (r < 0 || r >= t) continue;
              for (std::int64_t j = 0; j < cin; ++j)
                px->grad[static_cast<std::size_t>(r * cin + j)] += gcol(i, w * cin + j);
            }
          }
        }
      },
      "conv_1d");
}

Tensor add_scalar_bcast(const Tensor& x, const Tensor& s, double coeff) {
  if (s.numel() != 1) throw ShapeError("add_scalar_bcast: s must be scalar");
  const double sv = s.values()[0] * coeff;
  std::vector<double> out(x.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] + sv;
  return make_op(x.shape(), std::move(out), {x.node(), s.node()},
                 [px = x.node(), ps = s.node(), coeff](TensorNode& self) {
                   if (wants_grad(*px)) {
                     px->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
                   }
                   if (wants_grad(*ps)) {
                     ps->ensure_grad();
                     double acc = 0.0;
                     for (double g : self.grad) acc += g;
                     ps->grad[0] += coeff * acc;
                   }
                 },
                 "add_scalar_bcast");
}

Tensor mul_scalar_bcast(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) throw ShapeError("mul_scalar_bcast: s must be scalar");
  const double sv = s.values()[0];
  std::vector<double> out(x.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * sv;
  return make_op(x.shape(), std::move(out), {x.node(), s.node()},
                 [px = x.node(), ps = s.node()](TensorNode& self) {
                   if (wants_grad(*px)) {
                     px->ensure_grad();
                     const double sv = ps->values[0];
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       px->grad[i] += self.grad[i] * sv;
                   }
                   if (wants_grad(*ps)) {
                     ps->ensure_grad();
                     double acc = 0.0;
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       acc += self.grad[i] * px->values[i];
                     ps->grad[0] += acc;
                   }
                 },
                 "mul_scalar_bcast");
}

// ---- backward ---------------------------------------------------------

void backward(const Tensor& root) {
  NodePtr r = root.node();
  if (!r) throw ShapeError("backward: undefined tensor");
  if (root.numel() != 1) {
    throw ShapeError("backward: root must be scalar, got shape " + shape_str(root.shape()));
  }
  if (!wants_grad(*r)) {
    throw DomainError("backward: root was not produced through a differentiable graph");
  }
  if (r->backward_done) {
    throw DomainError("backward: already invoked from this root without grad reset");
  }

  // iterative post-order DFS for reverse topological order
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.emplace_back(r.get(), 0);
  seen.insert(r.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* p = node->parents[idx].get();
      ++idx;
      if (!seen.count(p) && !p->parents.empty()) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  r->ensure_grad();
  r->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  r->backward_done = true;
}

// ---- gradient check ---------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                           std::vector<Tensor> inputs, double step, double tolerance) {
  Tensor y = f(inputs);
  if (y.numel() != 1) throw ShapeError("grad_check: f must return a scalar");
  for (Tensor& in : inputs) in.zero_grad();
  backward(y);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (const Tensor& in : inputs) analytic.push_back(in.grad());

  GradCheckReport rep;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto& vals = inputs[i].mutable_values();
    for (std::size_t j = 0; j < vals.size(); ++j) {
      const double orig = vals[j];
      double yp, ym;
      {
        NoGradGuard ng;
        vals[j] = orig + step;
        yp = f(inputs).item();
        vals[j] = orig - step;
        ym = f(inputs).item();
        vals[j] = orig;
      }
      const double fd = (yp - ym) / (2.0 * step);
      const double an = analytic[i][j];
      double dev;
      if (std::abs(fd) < 1e-10 && std::abs(an) < 1e-10) {
        dev = 0.0;
      } else {
        dev = std::abs(an - fd) / std::max(std::abs(fd), 1e-8);
      }
      if (dev > rep.max_rel_dev) {
        rep.max_rel_dev = dev;
        rep.worst_location = "input " + std::to_string(i) + " element " + std::to_string(j);
      }
    }
  }
  rep.pass = rep.max_rel_dev < tolerance;
  return rep;
}

}  // namespace sepitfp
