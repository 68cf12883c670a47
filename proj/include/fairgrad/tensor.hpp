#ifndef FAIRGRAD_TENSOR_HPP
#define FAIRGRAD_TENSOR_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fairgrad/errors.hpp"

namespace fairgrad::ad {

using Array = Eigen::ArrayXd;

/// Dims of a dense tensor. Empty means a rank-0 scalar (one element).
using Shape = std::vector<Eigen::Index>;

Eigen::Index numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;
class GradientMap;

/// Value handle over a dense double buffer. Copies are cheap (shared storage).
/// A tensor is either a constant, or attached to the tape that recorded it.
class Tensor {
 public:
  Tensor() = default;

  /// Rank-0 constant.
  static Tensor constant(double value);
  /// Constant vector ({n}).
  static Tensor constant(const Eigen::VectorXd& values);
  /// Constant with an explicit shape; data in row-major order.
  static Tensor constant(Array values, Shape shape);

  const Array& values() const { return *values_; }
  const Shape& shape() const { return shape_; }
  Eigen::Index size() const { return values_->size(); }
  Eigen::Index rank() const { return static_cast<Eigen::Index>(shape_.size()); }

  /// The single element of a size-1 tensor.
  double scalar() const;
  /// Values viewed as a column vector (any shape).
  Eigen::VectorXd vector() const { return values_->matrix(); }

  bool requires_grad() const { return node_ >= 0; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  friend class GradientMap;

  std::shared_ptr<const Array> values_;
  Shape shape_;
  Tape* tape_ = nullptr;
  std::int64_t node_ = -1;
};

/// Gradients of one backward sweep, keyed by tape node.
class GradientMap {
 public:
  /// Gradient buffer for a recorded tensor (same element count as its value).
  const Array& at(const Tensor& tensor) const;
  Eigen::VectorXd vector_at(const Tensor& tensor) const { return at(tensor).matrix(); }
  double scalar_at(const Tensor& tensor) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<Array> grads_;
};

/// Define-by-run record of primitive ops. Build values forward through the free
/// functions below, then call backward() on a scalar root; the reverse sweep
/// walks the record once, newest to oldest, accumulating adjoints per node.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// New leaf tensor. With requires_grad the leaf joins the record and its
  /// gradient can be read from the map backward() returns; otherwise it is a
  /// plain constant.
  Tensor leaf(const Eigen::VectorXd& values, bool requires_grad);
  Tensor leaf(Array values, Shape shape, bool requires_grad);
  Tensor scalar_leaf(double value, bool requires_grad);

  /// Reverse sweep from a size-1 root. Each recorded node is visited exactly
  /// once; the result maps every recorded tensor (leaves included) to
  /// d root / d tensor. Non-finite adjoints raise NumericError naming the op.
  GradientMap backward(const Tensor& root);

  std::size_t node_count() const { return nodes_.size(); }

  // -- recording machinery, used by the op implementations --

  /// Accumulates `grad_out` into parent adjoint buffers during the sweep.
  using Pull = std::function<void(const Array& grad_out, std::vector<Array>& grads)>;
  /// Builds the pull closure once the inputs' node slots are known
  /// (slot -1 marks a constant input, which receives no gradient).
  using BindPull = std::function<Pull(const std::vector<std::int64_t>& parent_slots)>;

  /// Validates the forward value, finds the tape from the inputs (constants
  /// attach to nothing), and records a node when gradients must flow.
  static Tensor make_op(const char* op, Array values, Shape shape,
                        const std::vector<const Tensor*>& inputs, const BindPull& bind);

 private:
  struct Node {
    const char* op;
    Eigen::Index size;
    std::vector<std::int64_t> parents;
    Pull pull;  // empty for leaves
  };

  std::int64_t add_node(const char* op, Eigen::Index size, std::vector<std::int64_t> parents,
                        Pull pull);

  std::vector<Node> nodes_;
};

// Elementwise binary ops. Shapes must match exactly, except that a size-1
// tensor broadcasts against anything.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Elementwise unary ops.
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);      // subgradient 0 at 0
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor pow(const Tensor& a, double exponent);
Tensor clamp(const Tensor& a, double lo, double hi);

/// Matrix product: {r,k}x{k,c}->{r,c}, {r,k}x{k}->{r}, {k}x{k,c}->{c},
/// {k}x{k}->scalar. Data is row-major.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Adds a {c} vector to every row of an {r,c} matrix.
Tensor add_rowwise(const Tensor& matrix, const Tensor& row);

// Full reductions to a rank-0 scalar.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Exact maximum; the subgradient goes to the first argmax element.
Tensor max_coeff(const Tensor& a);
/// log(sum(exp(a))), computed with the max-shift for stability.
Tensor logsumexp(const Tensor& a);

/// Packs size-1 tensors into a {k} vector.
Tensor stack(const std::vector<Tensor>& scalars);

/// Same data, new shape (element count must agree).
Tensor reshape(const Tensor& a, Shape shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator+(double a, const Tensor& b) { return add(Tensor::constant(a), b); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, Tensor::constant(b)); }
inline Tensor operator-(double a, const Tensor& b) { return sub(Tensor::constant(a), b); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, Tensor::constant(b)); }
inline Tensor operator*(double a, const Tensor& b) { return mul(Tensor::constant(a), b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, Tensor::constant(b)); }
inline Tensor operator/(double a, const Tensor& b) { return div(Tensor::constant(a), b); }
inline Tensor operator/(const Tensor& a, double b) { return div(a, Tensor::constant(b)); }

/// Scalar-valued function of one vector leaf, for gradient checking.
using CheckedFn = std::function<Tensor(Tape&, const Tensor& x)>;

struct GradCheckReport {
  double max_rel_error = 0.0;       // over coordinates not flagged non-smooth
  Eigen::Index worst_index = -1;
  std::vector<Eigen::Index> nonsmooth;  // coordinates skipped as kinks
  bool passed = false;
};

/// Compares the tape gradient of fn at `point` against central differences.
/// Relative error per coordinate uses max(|tape|, |fd|, 1e-3) as denominator.
/// Coordinates where the one-sided differences disagree badly are treated as
/// kinks: flagged in the report and excluded from the error.
GradCheckReport finite_difference_check(const CheckedFn& fn, const Eigen::VectorXd& point,
                                        double step = 1e-5, double tolerance = 1e-4);

}  // namespace fairgrad::ad

#endif
