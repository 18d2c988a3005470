#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ctd/tensor.hpp"

// Reverse-mode differentiation over dense rank <= 3 tensors.
//
// A computation is a DAG of Nodes. Each forward op returns a new Node that
// keeps its parents alive and a rule that pushes the node's gradient into the
// parents. Leaves created with Parameter() accumulate gradients across
// Backward() calls until ZeroGrad().
//
// Broadcasting is limited to adding/subtracting a vector across the rows of
// a matrix (bias-add); every other shape mismatch raises a usage error that
// names the op and both shapes.
namespace ctd::ad {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // empty until first accumulation
  std::vector<Var> parents;
  std::function<void(Node&)> backward;
  bool requires_grad = false;
  const char* op = "leaf";

  /// Gradient buffer, zero-initialized on first use.
  Tensor& Grad();
  bool has_grad() const { return grad.size() == value.size() && grad.size() > 0; }
  const Shape& shape() const { return value.shape(); }
};

Var Constant(Tensor value);
Var Parameter(Tensor value);

/// While alive on this thread, ops record no graph edges.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};
bool GradEnabled();

// elementwise / bias-add
Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);
Var Div(const Var& a, const Var& b);
Var Scale(const Var& a, double k);
Var AddScalar(const Var& a, double k);

// unary
Var Square(const Var& a);
Var Exp(const Var& a);
Var Log(const Var& a);
Var Tanh(const Var& a);
Var Sigmoid(const Var& a);
Var LeakyRelu(const Var& a, double slope = 0.01);

// linear algebra
Var MatMul(const Var& a, const Var& b);       // [M,K] x [K,N]
Var BatchMatMul(const Var& a, const Var& b);  // [B,M,K] x [B,K,N]
Var Transpose(const Var& a);                  // swap the last two axes

// structure
Var Concat(const std::vector<Var>& parts, std::size_t axis);
Var Slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end);
Var Reshape(const Var& a, Shape shape);
Var GatherRows(const Var& a, const std::vector<std::size_t>& rows);

// reductions and normalizations
Var Sum(const Var& a);   // -> [1]
Var Mean(const Var& a);  // -> [1]
Var Softmax(const Var& a);  // over the last axis
Var LayerNorm(const Var& a, double eps = 1e-5);  // over the last axis, no affine

/// Runs reverse accumulation from a scalar (shape [1]) loss.
void Backward(const Var& loss);

}  // namespace ctd::ad
