#include "fairgrad/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace fairgrad::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRowMat = Eigen::Map<const RowMat>;

Array expanded(const Tensor& t, Eigen::Index n) {
  if (t.size() == n) return t.values();
  return Array::Constant(n, t.values()(0));
}

// Reduces an output-sized contribution back to the parent's element count
// (a broadcast scalar collects the sum of its contributions).
Array fit_to_parent(Array contribution, Eigen::Index parent_size) {
  if (contribution.size() == parent_size) return contribution;
  return Array::Constant(1, contribution.sum());
}

using GradFn = std::function<Array(const Array& grad_out)>;

Tensor binary_op(const char* op, const Tensor& a, const Tensor& b, Array value, Shape shape,
                 GradFn da, GradFn db) {
  const Eigen::Index a_size = a.size();
  const Eigen::Index b_size = b.size();
  auto bind = [a_size, b_size, da = std::move(da),
               db = std::move(db)](const std::vector<std::int64_t>& slots) -> Tape::Pull {
    return [=](const Array& g, std::vector<Array>& grads) {
      if (slots[0] >= 0) grads[slots[0]] += fit_to_parent(da(g), a_size);
      if (slots[1] >= 0) grads[slots[1]] += fit_to_parent(db(g), b_size);
    };
  };
  return Tape::make_op(op, std::move(value), std::move(shape), {&a, &b}, bind);
}

Tensor unary_op(const char* op, const Tensor& a, Array value, Shape shape, GradFn da) {
  auto bind = [da = std::move(da)](const std::vector<std::int64_t>& slots) -> Tape::Pull {
    return [=](const Array& g, std::vector<Array>& grads) {
      if (slots[0] >= 0) grads[slots[0]] += da(g);
    };
  };
  return Tape::make_op(op, std::move(value), std::move(shape), {&a}, bind);
}

// Shape of an elementwise combination; enforces exact match apart from
// size-1 broadcast.
Shape elementwise_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.size() == 1 && b.size() == 1) return a.rank() >= b.rank() ? a.shape() : b.shape();
  if (a.size() == 1) return b.shape();
  if (b.size() == 1) return a.shape();
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()) + " do not match");
  return a.shape();
}

}  // namespace

Eigen::Index numel(const Shape& shape) {
  Eigen::Index n = 1;
  for (Eigen::Index d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << "{";
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << "}";
  return out.str();
}

Tensor Tensor::constant(double value) {
  return constant(Array::Constant(1, value), Shape{});
}

Tensor Tensor::constant(const Eigen::VectorXd& values) {
  return constant(values.array(), Shape{values.size()});
}

Tensor Tensor::constant(Array values, Shape shape) {
  if (values.size() != numel(shape))
    throw ShapeError("constant: " + std::to_string(values.size()) + " values for shape " +
                     shape_string(shape));
  if (!values.allFinite()) throw NumericError("constant: non-finite input");
  Tensor t;
  t.values_ = std::make_shared<const Array>(std::move(values));
  t.shape_ = std::move(shape);
  return t;
}

double Tensor::scalar() const {
  if (size() != 1) throw ShapeError("scalar: tensor has shape " + shape_string(shape_));
  return (*values_)(0);
}

const Array& GradientMap::at(const Tensor& tensor) const {
  if (tensor.tape_ != tape_ || tensor.node_ < 0 ||
      tensor.node_ >= static_cast<std::int64_t>(grads_.size()))
    throw Error("gradient lookup: tensor was not recorded on the swept tape");
  return grads_[tensor.node_];
}

double GradientMap::scalar_at(const Tensor& tensor) const {
  const Array& g = at(tensor);
  if (g.size() != 1) throw ShapeError("scalar_at: gradient has " + std::to_string(g.size()) +
                                      " elements");
  return g(0);
}

Tensor Tape::leaf(const Eigen::VectorXd& values, bool requires_grad) {
  return leaf(values.array(), Shape{values.size()}, requires_grad);
}

Tensor Tape::scalar_leaf(double value, bool requires_grad) {
  return leaf(Array::Constant(1, value), Shape{}, requires_grad);
}

Tensor Tape::leaf(Array values, Shape shape, bool requires_grad) {
  Tensor t = Tensor::constant(std::move(values), std::move(shape));
  if (requires_grad) {
    t.tape_ = this;
    t.node_ = add_node("leaf", t.size(), {}, nullptr);
  }
  return t;
}

std::int64_t Tape::add_node(const char* op, Eigen::Index size, std::vector<std::int64_t> parents,
                            Pull pull) {
  nodes_.push_back(Node{op, size, std::move(parents), std::move(pull)});
  return static_cast<std::int64_t>(nodes_.size()) - 1;
}

Tensor Tape::make_op(const char* op, Array values, Shape shape,
                     const std::vector<const Tensor*>& inputs, const BindPull& bind) {
  if (values.size() != numel(shape))
    throw ShapeError(std::string(op) + ": " + std::to_string(values.size()) +
                     " values for shape " + shape_string(shape));
  if (!values.allFinite())
    throw NumericError(std::string(op) + ": non-finite value produced");

  Tape* tape = nullptr;
  for (const Tensor* in : inputs) {
    if (!in->values_) throw Error(std::string(op) + ": empty tensor operand");
    if (in->node_ >= 0) {
      if (tape != nullptr && tape != in->tape_)
        throw Error(std::string(op) + ": operands belong to different tapes");
      tape = in->tape_;
    }
  }

  Tensor out;
  out.values_ = std::make_shared<const Array>(std::move(values));
  out.shape_ = std::move(shape);
  if (tape != nullptr) {
    std::vector<std::int64_t> slots;
    slots.reserve(inputs.size());
    for (const Tensor* in : inputs) slots.push_back(in->node_);
    out.tape_ = tape;
    out.node_ = tape->add_node(op, out.size(), slots, bind(slots));
  }
  return out;
}

GradientMap Tape::backward(const Tensor& root) {
  if (root.tape_ != this || root.node_ < 0)
    throw Error("backward: root is not recorded on this tape");
  if (root.size() != 1)
    throw ShapeError("backward: root must be a scalar, got shape " + shape_string(root.shape()));

  GradientMap map;
  map.tape_ = this;
  map.grads_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) map.grads_[i] = Array::Zero(nodes_[i].size);
  map.grads_[root.node_](0) = 1.0;

  // Creation order is already topological, so one reverse pass visits each
  // node exactly once with its adjoint complete.
  for (std::int64_t i = root.node_; i >= 0; --i) {
    const Node& node = nodes_[i];
    if (!node.pull) continue;
    node.pull(map.grads_[i], map.grads_);
    for (std::int64_t p : node.parents) {
      if (p >= 0 && !map.grads_[p].allFinite())
        throw NumericError(std::string("backward: non-finite gradient out of op '") + node.op +
                           "'");
    }
  }
  return map;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Shape shape = elementwise_shape("add", a, b);
  const Eigen::Index n = numel(shape);
  Array value = expanded(a, n) + expanded(b, n);
  return binary_op("add", a, b, std::move(value), std::move(shape),
                   [](const Array& g) { return g; }, [](const Array& g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Shape shape = elementwise_shape("sub", a, b);
  const Eigen::Index n = numel(shape);
  Array value = expanded(a, n) - expanded(b, n);
  return binary_op("sub", a, b, std::move(value), std::move(shape),
                   [](const Array& g) { return g; }, [](const Array& g) { return Array(-g); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Shape shape = elementwise_shape("mul", a, b);
  const Eigen::Index n = numel(shape);
  Array av = expanded(a, n);
  Array bv = expanded(b, n);
  Array value = av * bv;
  return binary_op("mul", a, b, std::move(value), std::move(shape),
                   [bv](const Array& g) { return Array(g * bv); },
                   [av](const Array& g) { return Array(g * av); });
}

Tensor div(const Tensor& a, const Tensor& b) {
  Shape shape = elementwise_shape("div", a, b);
  const Eigen::Index n = numel(shape);
  Array av = expanded(a, n);
  Array bv = expanded(b, n);
  if ((bv == 0.0).any()) throw DomainError("div: division by zero");
  Array value = av / bv;
  return binary_op("div", a, b, std::move(value), std::move(shape),
                   [bv](const Array& g) { return Array(g / bv); },
                   [av, bv](const Array& g) { return Array(-g * av / (bv * bv)); });
}

Tensor neg(const Tensor& a) {
  return unary_op("neg", a, Array(-a.values()), a.shape(),
                  [](const Array& g) { return Array(-g); });
}

Tensor exp(const Tensor& a) {
  Array value = a.values().exp();
  return unary_op("exp", a, value, a.shape(),
                  [value](const Array& g) { return Array(g * value); });
}

Tensor log(const Tensor& a) {
  if ((a.values() <= 0.0).any()) throw DomainError("log: non-positive operand");
  Array av = a.values();
  return unary_op("log", a, Array(av.log()), a.shape(),
                  [av](const Array& g) { return Array(g / av); });
}

Tensor abs(const Tensor& a) {
  Array av = a.values();
  return unary_op("abs", a, Array(av.abs()), a.shape(),
                  [av](const Array& g) { return Array(g * av.sign()); });
}

Tensor sigmoid(const Tensor& a) {
  const Array& av = a.values();
  // Branch on sign so neither exp overflows.
  Array value = (av >= 0.0).select(1.0 / (1.0 + (-av).exp()), av.exp() / (1.0 + av.exp()));
  return unary_op("sigmoid", a, value, a.shape(),
                  [value](const Array& g) { return Array(g * value * (1.0 - value)); });
}

Tensor relu(const Tensor& a) {
  Array av = a.values();
  return unary_op("relu", a, Array(av.max(0.0)), a.shape(), [av](const Array& g) {
    return Array(g * (av > 0.0).cast<double>());
  });
}

Tensor pow(const Tensor& a, double exponent) {
  Array av = a.values();
  Array value = av.pow(exponent);
  return unary_op("pow", a, std::move(value), a.shape(), [av, exponent](const Array& g) {
    // d/dx x^p = p x^(p-1); at x = 0 with p < 1 that diverges, so take
    // subgradient 0 there (keeps norm-type terms stationary at zero).
    Array local = exponent * av.pow(exponent - 1.0);
    if (exponent < 1.0) local = (av == 0.0).select(Array::Zero(av.size()), local);
    return Array(g * local);
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw DomainError("clamp: lo exceeds hi");
  Array av = a.values();
  Array value = av.max(lo).min(hi);
  return unary_op("clamp", a, std::move(value), a.shape(), [av, lo, hi](const Array& g) {
    return Array(g * (av >= lo && av <= hi).cast<double>());
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 1 || a.rank() > 2 || b.rank() < 1 || b.rank() > 2)
    throw ShapeError("matmul: ranks must be 1 or 2, got " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  const Eigen::Index ar = a.rank() == 2 ? a.shape()[0] : 1;
  const Eigen::Index ak = a.rank() == 2 ? a.shape()[1] : a.shape()[0];
  const Eigen::Index bk = b.rank() == 2 ? b.shape()[0] : b.shape()[0];
  const Eigen::Index bc = b.rank() == 2 ? b.shape()[1] : 1;
  if (ak != bk)
    throw ShapeError("matmul: inner dimensions disagree, " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));

  Array av = a.values();
  Array bv = b.values();
  MapRowMat A(av.data(), ar, ak);
  MapRowMat B(bv.data(), bk, bc);
  RowMat C = A * B;
  Array value = Eigen::Map<const Array>(C.data(), C.size());

  Shape shape;
  if (a.rank() == 2 && b.rank() == 2) shape = {ar, bc};
  else if (a.rank() == 2) shape = {ar};
  else if (b.rank() == 2) shape = {bc};
  // both rank 1: scalar, shape stays empty

  auto da = [bv, ar, ak, bk, bc](const Array& g) {
    MapRowMat G(g.data(), ar, bc);
    MapRowMat B2(bv.data(), bk, bc);
    RowMat dA = G * B2.transpose();
    return Array(Eigen::Map<const Array>(dA.data(), dA.size()));
  };
  auto db = [av, ar, ak, bk, bc](const Array& g) {
    MapRowMat G(g.data(), ar, bc);
    MapRowMat A2(av.data(), ar, ak);
    RowMat dB = A2.transpose() * G;
    return Array(Eigen::Map<const Array>(dB.data(), dB.size()));
  };
  return binary_op("matmul", a, b, std::move(value), std::move(shape), da, db);
}

Tensor add_rowwise(const Tensor& matrix, const Tensor& row) {
  if (matrix.rank() != 2 || row.rank() != 1 || matrix.shape()[1] != row.shape()[0])
    throw ShapeError("add_rowwise: need {r,c} and {c}, got " + shape_string(matrix.shape()) +
                     " and " + shape_string(row.shape()));
  const Eigen::Index r = matrix.shape()[0];
  const Eigen::Index c = matrix.shape()[1];
  MapRowMat M(matrix.values().data(), r, c);
  RowMat V = M.rowwise() + row.values().matrix().transpose();
  Array value = Eigen::Map<const Array>(V.data(), V.size());

  auto da = [](const Array& g) { return g; };
  auto db = [r, c](const Array& g) {
    MapRowMat G(g.data(), r, c);
    Eigen::VectorXd sums = G.colwise().sum();
    return Array(sums.array());
  };
  return binary_op("add_rowwise", matrix, row, std::move(value), Shape{r, c}, da, db);
}

Tensor sum(const Tensor& a) {
  const Eigen::Index n = a.size();
  return unary_op("sum", a, Array::Constant(1, a.values().sum()), Shape{},
                  [n](const Array& g) { return Array(Array::Constant(n, g(0))); });
}

Tensor mean(const Tensor& a) {
  const Eigen::Index n = a.size();
  return unary_op("mean", a, Array::Constant(1, a.values().mean()), Shape{},
                  [n](const Array& g) {
                    return Array(Array::Constant(n, g(0) / static_cast<double>(n)));
                  });
}

Tensor max_coeff(const Tensor& a) {
  const Array& av = a.values();
  Eigen::Index argmax = 0;
  for (Eigen::Index i = 1; i < av.size(); ++i)
    if (av(i) > av(argmax)) argmax = i;  // ties keep the first
  const Eigen::Index n = av.size();
  return unary_op("max_coeff", a, Array::Constant(1, av(argmax)), Shape{},
                  [n, argmax](const Array& g) {
                    Array d = Array::Zero(n);
                    d(argmax) = g(0);
                    return d;
                  });
}

Tensor logsumexp(const Tensor& a) {
  const Array& av = a.values();
  const double shift = av.maxCoeff();
  const double value = shift + std::log((av - shift).exp().sum());
  Array softmax = (av - value).exp();
  return unary_op("logsumexp", a, Array::Constant(1, value), Shape{},
                  [softmax](const Array& g) { return Array(g(0) * softmax); });
}

Tensor stack(const std::vector<Tensor>& scalars) {
  if (scalars.empty()) throw ShapeError("stack: no inputs");
  const Eigen::Index k = static_cast<Eigen::Index>(scalars.size());
  Array value(k);
  std::vector<const Tensor*> inputs;
  inputs.reserve(scalars.size());
  for (Eigen::Index i = 0; i < k; ++i) {
    if (scalars[i].size() != 1)
      throw ShapeError("stack: input " + std::to_string(i) + " has shape " +
                       shape_string(scalars[i].shape()));
    value(i) = scalars[i].values()(0);
    inputs.push_back(&scalars[i]);
  }
  auto bind = [k](const std::vector<std::int64_t>& slots) -> Tape::Pull {
    return [slots, k](const Array& g, std::vector<Array>& grads) {
      for (Eigen::Index i = 0; i < k; ++i)
        if (slots[i] >= 0) grads[slots[i]](0) += g(i);
    };
  };
  return Tape::make_op("stack", std::move(value), Shape{k}, inputs, bind);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    throw ShapeError("reshape: " + shape_string(a.shape()) + " to " + shape_string(shape));
  return unary_op("reshape", a, a.values(), std::move(shape),
                  [](const Array& g) { return g; });
}

GradCheckReport finite_difference_check(const CheckedFn& fn, const Eigen::VectorXd& point,
                                        double step, double tolerance) {
  Tape tape;
  Tensor x = tape.leaf(point, true);
  Tensor root = fn(tape, x);
  if (root.size() != 1) throw ShapeError("finite_difference_check: fn must return a scalar");
  GradientMap grads = tape.backward(root);
  Eigen::VectorXd tape_grad = grads.vector_at(x);

  auto eval = [&fn](const Eigen::VectorXd& p) {
    Tape t;
    Tensor leaf = t.leaf(p, false);
    return fn(t, leaf).scalar();
  };
  const double f0 = eval(point);

  GradCheckReport report;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    Eigen::VectorXd p = point;
    p(i) = point(i) + step;
    const double fp = eval(p);
    p(i) = point(i) - step;
    const double fm = eval(p);

    const double fwd = (fp - f0) / step;
    const double bwd = (f0 - fm) / step;
    // One-sided slopes that disagree mean the function has a kink within
    // `step` of this point; central differences are meaningless there.
    if (std::fabs(fwd - bwd) > std::max(1e-3, 0.05 * std::max(std::fabs(fwd), std::fabs(bwd)))) {
      report.nonsmooth.push_back(i);
      continue;
    }
    const double central = (fp - fm) / (2.0 * step);
    const double denom = std::max({std::fabs(central), std::fabs(tape_grad(i)), 1e-3});
    const double rel = std::fabs(central - tape_grad(i)) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace fairgrad::ad
