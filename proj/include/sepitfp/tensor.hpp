#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace sepitfp {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One record of the compute graph: value buffer plus the rule that
// scatters this node's gradient into its parents.
struct TensorNode {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until first accumulation
  std::vector<NodePtr> parents;
  std::function<void(TensorNode&)> backward_fn;
  bool backward_done = false;

  void ensure_grad();
};

// Value-semantics handle over a graph node. Copies share the node.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  std::int64_t numel() const { return static_cast<std::int64_t>(n_->values.size()); }
  const std::vector<double>& values() const { return n_->values; }
  std::vector<double>& mutable_values() { return n_->values; }
  bool requires_grad() const { return n_->requires_grad; }
  const std::vector<double>& grad() const;
  void zero_grad();
  double item() const;  // scalar tensors only

  NodePtr node() const { return n_; }
  explicit Tensor(NodePtr n) : n_(std::move(n)) {}

 private:
  NodePtr n_;
};

// Disables graph recording in scope; forwards still compute values.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

// ---- primitive ops ----------------------------------------------------
// All ops validate shapes (ShapeError) and reject non-finite results
// (NumericError).

Tensor add(const Tensor& a, const Tensor& b);       // same shape
Tensor sub(const Tensor& a, const Tensor& b);       // same shape
Tensor mul(const Tensor& a, const Tensor& b);       // same shape, elementwise
Tensor scalar_mul(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor add_bias(const Tensor& x, const Tensor& b);  // [T,C] + [C]
Tensor matmul(const Tensor& a, const Tensor& b);    // [m,k] x [k,n]
Tensor transpose(const Tensor& a);                  // 2-D
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts);          // 1-D along axis 0
Tensor concat_cols(const std::vector<Tensor>& parts);     // 2-D along axis 1
Tensor slice_rows(const Tensor& a, std::int64_t r0, std::int64_t r1);  // 2-D
Tensor slice_cols(const Tensor& a, std::int64_t c0, std::int64_t c1);  // 2-D
Tensor exp_t(const Tensor& a);
Tensor ln_t(const Tensor& a);  // domain guarded, throws DomainError on x <= 0
Tensor tanh_t(const Tensor& a);
Tensor sigmoid_t(const Tensor& a);
Tensor relu_t(const Tensor& a);
Tensor abs_t(const Tensor& a);  // subgradient 0 at 0
Tensor softmax_rows(const Tensor& a);  // 1-D or 2-D, softmax along last axis
Tensor mean_all(const Tensor& a);      // -> scalar
Tensor global_avg_pool_1d(const Tensor& x);          // [T,C] -> [C]
Tensor avg_pool_rows(const Tensor& x, std::int64_t factor);  // strided mean over T
Tensor max_pool_1d(const Tensor& x, std::int64_t width, std::int64_t stride);  // [T,C]
// kernel shape [K, Cin, Cout], cross-correlation convention
Tensor conv_1d(const Tensor& x, const Tensor& kernel, std::int64_t stride,
               std::int64_t padding);
// broadcast a scalar tensor s against x: x + coeff * s  /  x * s
Tensor add_scalar_bcast(const Tensor& x, const Tensor& s, double coeff = 1.0);
Tensor mul_scalar_bcast(const Tensor& x, const Tensor& s);

std::int64_t conv_1d_output_length(std::int64_t t, std::int64_t k, std::int64_t stride,
                                   std::int64_t padding);
std::int64_t pool_1d_output_length(std::int64_t t, std::int64_t width, std::int64_t stride);

// Reverse accumulation from a scalar root. Throws on non-scalar roots and
// on repeated invocation from the same root without grad reset.
void backward(const Tensor& root);

// ---- finite-difference gradient checking ------------------------------

struct GradCheckReport {
  double max_rel_dev = 0.0;
  bool pass = false;
  std::string worst_location;
};

// f must build a scalar from the given leaves (which require grad).
GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                           std::vector<Tensor> inputs, double step, double tolerance);

}  // namespace sepitfp
