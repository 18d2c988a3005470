#include "ctd/autodiff.hpp"

#include <cmath>
#include <unordered_set>

#include "ctd/error.hpp"
#include "ctd/kernels.hpp"

namespace ctd::ad {
namespace {

thread_local bool t_grad_enabled = true;

[[noreturn]] void ShapeFail(const char* op, const Shape& a, const Shape& b) {
  throw UsageError("shape_mismatch", std::string(op) + ": incompatible shapes " +
                                         ShapeString(a) + " and " +
                                         ShapeString(b));
}

[[noreturn]] void ShapeFail(const char* op, const Shape& a,
                            const std::string& why) {
  throw UsageError("shape_mismatch",
                   std::string(op) + ": shape " + ShapeString(a) + " " + why);
}

Var MakeNode(const char* op, Tensor value, std::vector<Var> parents,
             std::function<void(Node&)> backward) {
  if (!value.AllFinite()) {
    throw NumericalError("non_finite",
                         std::string(op) + " produced a non-finite value");
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (t_grad_enabled) {
    for (const Var& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return node;
}

// true when b is a vector added across the rows of a
bool IsBias(const Shape& a, const Shape& b) {
  return a.size() >= 2 && b.size() == 1 && b[0] == a.back();
}

template <typename F>
Var Unary(const char* op, const Var& a, F f,
          std::function<void(Node&)> backward) {
  Tensor out(a->shape());
  const auto& x = a->value.vec();
  auto& y = out.vec();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return MakeNode(op, std::move(out), {a}, std::move(backward));
}

// outer/inner sizes around `axis`
void AxisSplit(const Shape& s, std::size_t axis, std::size_t& outer,
               std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace

Tensor& Node::Grad() {
  if (grad.shape() != value.shape()) grad = Tensor::Zeros(value.shape());
  return grad;
}

Var Constant(Tensor value) {
  if (!value.AllFinite())
    throw NumericalError("non_finite", "constant holds a non-finite value");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "constant";
  return node;
}

Var Parameter(Tensor value) {
  auto node = Constant(std::move(value));
  node->requires_grad = true;
  node->op = "parameter";
  return node;
}

NoGradGuard::NoGradGuard() : saved_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = saved_; }
bool GradEnabled() { return t_grad_enabled; }

Var Add(const Var& a, const Var& b) {
  const Shape& sa = a->shape();
  const Shape& sb = b->shape();
  if (sa == sb) {
    Tensor out = a->value;
    auto& y = out.vec();
    const auto& x = b->value.vec();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
    return MakeNode("add", std::move(out), {a, b}, [](Node& self) {
      const auto& g = self.grad.vec();
      for (int k = 0; k < 2; ++k) {
        Node& p = *self.parents[k];
        if (!p.requires_grad) continue;
        auto& pg = p.Grad().vec();
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
      }
    });
  }
  if (!IsBias(sa, sb)) ShapeFail("add", sa, sb);
  const std::size_t cols = sb[0];
  Tensor out = a->value;
  auto& y = out.vec();
  const auto& bias = b->value.vec();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bias[i % cols];
  return MakeNode("add", std::move(out), {a, b}, [cols](Node& self) {
    const auto& g = self.grad.vec();
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& ga = pa.Grad().vec();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (pb.requires_grad) {
      auto& gb = pb.Grad().vec();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
    }
  });
}

Var Sub(const Var& a, const Var& b) {
  const Shape& sa = a->shape();
  const Shape& sb = b->shape();
  if (sa != sb && !IsBias(sa, sb)) ShapeFail("sub", sa, sb);
  const std::size_t cols = sb.back();
  const bool bias = sa != sb;
  Tensor out = a->value;
  auto& y = out.vec();
  const auto& x = b->value.vec();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= x[bias ? i % cols : i];
  return MakeNode("sub", std::move(out), {a, b}, [cols, bias](Node& self) {
    const auto& g = self.grad.vec();
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& ga = pa.Grad().vec();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (pb.requires_grad) {
      auto& gb = pb.Grad().vec();
      for (std::size_t i = 0; i < g.size(); ++i) gb[bias ? i % cols : i] -= g[i];
    }
  });
}

Var Mul(const Var& a, const Var& b) {
  if (a->shape() != b->shape()) ShapeFail("mul", a->shape(), b->shape());
  Tensor out = a->value;
  auto& y = out.vec();
  const auto& x = b->value.vec();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= x[i];
  return MakeNode("mul", std::move(out), {a, b}, [](Node& self) {
    const auto& g = self.grad.vec();
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& ga = pa.Grad().vec();
      const auto& vb = pb.value.vec();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (pb.requires_grad) {
      auto& gb = pb.Grad().vec();
      const auto& va = pa.value.vec();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

Var Div(const Var& a, const Var& b) {
  if (a->shape() != b->shape()) ShapeFail("div", a->shape(), b->shape());
  Tensor out = a->value;
  auto& y = out.vec();
  const auto& x = b->value.vec();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] /= x[i];
  return MakeNode("div", std::move(out), {a, b}, [](Node& self) {
    const auto& g = self.grad.vec();
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto& vb = pb.value.vec();
    if (pa.requires_grad) {
      auto& ga = pa.Grad().vec();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / vb[i];
    }
    if (pb.requires_grad) {
      auto& gb = pb.Grad().vec();
      const auto& y = self.value.vec();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * y[i] / vb[i];
    }
  });
}

Var Scale(const Var& a, double k) {
  return Unary("scale", a, [k](double x) { return k * x; }, [k](Node& self) {
    auto& ga = self.parents[0]->Grad().vec();
    const auto& g = self.grad.vec();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += k * g[i];
  });
}

Var AddScalar(const Var& a, double k) {
  return Unary("add_scalar", a, [k](double x) { return x + k; }, [](Node& self) {
    auto& ga = self.parents[0]->Grad().vec();
    const auto& g = self.grad.vec();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var Square(const Var& a) {
  return Unary("square", a, [](double x) { return x * x; }, [](Node& self) {
    Node& p = *self.parents[0];
    auto& ga = p.Grad().vec();
    const auto& x = p.value.vec();
    const auto& g = self.grad.vec();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * x[i] * g[i];
  });
}

Var Exp(const Var& a) {
  return Unary("exp", a, [](double x) { return std::exp(x); }, [](Node& self) {
    auto& ga = self.parents[0]->Grad().vec();
    const auto& y = self.value.vec();
    const auto& g = self.grad.vec();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * g[i];
  });
}

Var Log(const Var& a) {
  return Unary("log", a, [](double x) { return std::log(x); }, [](Node& self) {
    Node& p = *self.parents[0];
    auto& ga = p.Grad().vec();
    const auto& x = p.value.vec();
    const auto& g = self.grad.vec();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
  });
}

Var Tanh(const Var& a) {
  return Unary("tanh", a, [](double x) { return std::tanh(x); }, [](Node& self) {
    auto& ga = self.parents[0]->Grad().vec();
    const auto& y = self.value.vec();
    const auto& g = self.grad.vec();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += (1.0 - y[i] * y[i]) * g[i];
  });
}

Var Sigmoid(const Var& a) {
  auto logistic = [](double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  };
  return Unary("sigmoid", a, logistic, [](Node& self) {
    auto& ga = self.parents[0]->Grad().vec();
    const auto& y = self.value.vec();
    const auto& g = self.grad.vec();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (1.0 - y[i]) * g[i];
  });
}

Var LeakyRelu(const Var& a, double slope) {
  return Unary(
      "leaky_relu", a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](Node& self) {
        Node& p = *self.parents[0];
        auto& ga = p.Grad().vec();
        const auto& x = p.value.vec();
        const auto& g = self.grad.vec();
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] += (x[i] > 0 ? 1.0 : slope) * g[i];
      });
}

Var MatMul(const Var& a, const Var& b) {
  const Shape& sa = a->shape();
  const Shape& sb = b->shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    ShapeFail("matmul", sa, sb);
  const std::size_t m = sa[0], k = sa[1], n = sb[1];
  Tensor out({m, n});
  kernels::Gemm(m, k, n, a->value.vec().data(), false, b->value.vec().data(),
                false, out.vec().data(), false);
  return MakeNode("matmul", std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* g = self.grad.vec().data();
    if (pa.requires_grad)  // dA = dC B^T
      kernels::Gemm(m, n, k, g, false, pb.value.vec().data(), true,
                    pa.Grad().vec().data(), true);
    if (pb.requires_grad)  // dB = A^T dC
      kernels::Gemm(k, m, n, pa.value.vec().data(), true, g, false,
                    pb.Grad().vec().data(), true);
  });
}

Var BatchMatMul(const Var& a, const Var& b) {
  const Shape& sa = a->shape();
  const Shape& sb = b->shape();
  if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != sb[1])
    ShapeFail("batch_matmul", sa, sb);
  const std::size_t bs = sa[0], m = sa[1], k = sa[2], n = sb[2];
  Tensor out({bs, m, n});
  kernels::BatchedGemm(bs, m, k, n, a->value.vec().data(), false,
                       b->value.vec().data(), false, out.vec().data(), false);
  return MakeNode("batch_matmul", std::move(out), {a, b},
                  [bs, m, k, n](Node& self) {
                    Node& pa = *self.parents[0];
                    Node& pb = *self.parents[1];
                    const double* g = self.grad.vec().data();
                    if (pa.requires_grad)
                      kernels::BatchedGemm(bs, m, n, k, g, false,
                                           pb.value.vec().data(), true,
                                           pa.Grad().vec().data(), true);
                    if (pb.requires_grad)
                      kernels::BatchedGemm(bs, k, m, n, pa.value.vec().data(),
                                           true, g, false,
                                           pb.Grad().vec().data(), true);
                  });
}

Var Transpose(const Var& a) {
  const Shape& s = a->shape();
  if (s.size() < 2) ShapeFail("transpose", s, "needs rank >= 2");
  const std::size_t batch = s.size() == 3 ? s[0] : 1;
  const std::size_t r = s[s.size() - 2], c = s.back();
  Shape out_shape = s;
  std::swap(out_shape[out_shape.size() - 2], out_shape.back());
  Tensor out(out_shape);
  const auto& x = a->value.vec();
  auto& y = out.vec();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        y[b * r * c + j * r + i] = x[b * r * c + i * c + j];
  return MakeNode("transpose", std::move(out), {a}, [batch, r, c](Node& self) {
    auto& ga = self.parents[0]->Grad().vec();
    const auto& g = self.grad.vec();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          ga[b * r * c + i * c + j] += g[b * r * c + j * r + i];
  });
}

Var Concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw UsageError("shape_mismatch", "concat: no inputs");
  const Shape& s0 = parts[0]->shape();
  if (axis >= s0.size()) ShapeFail("concat", s0, "has no axis " + std::to_string(axis));
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    const Shape& s = p->shape();
    if (s.size() != s0.size()) ShapeFail("concat", s0, s);
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != s0[i]) ShapeFail("concat", s0, s);
    out_shape[axis] += s[axis];
  }
  std::size_t outer, inner;
  AxisSplit(out_shape, axis, outer, inner);
  const std::size_t out_row = out_shape[axis] * inner;
  Tensor out(out_shape);
  auto& y = out.vec();
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    const std::size_t row = p->shape()[axis] * inner;
    const auto& x = p->value.vec();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy(x.begin() + o * row, x.begin() + (o + 1) * row,
                y.begin() + o * out_row + off);
    off += row;
  }
  return MakeNode("concat", std::move(out), parts,
                  [offsets, outer, inner, out_row, axis](Node& self) {
                    const auto& g = self.grad.vec();
                    for (std::size_t k = 0; k < self.parents.size(); ++k) {
                      Node& p = *self.parents[k];
                      if (!p.requires_grad) continue;
                      const std::size_t row = p.shape()[axis] * inner;
                      auto& gp = p.Grad().vec();
                      for (std::size_t o = 0; o < outer; ++o)
                        for (std::size_t j = 0; j < row; ++j)
                          gp[o * row + j] += g[o * out_row + offsets[k] + j];
                    }
                  });
}

Var Slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = a->shape();
  if (axis >= s.size() || begin >= end || end > s[axis])
    ShapeFail("slice", s,
              "cannot take [" + std::to_string(begin) + "," +
                  std::to_string(end) + ") on axis " + std::to_string(axis));
  std::size_t outer, inner;
  AxisSplit(s, axis, outer, inner);
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  const std::size_t in_row = s[axis] * inner;
  const std::size_t out_row = (end - begin) * inner;
  const std::size_t off = begin * inner;
  Tensor out(out_shape);
  const auto& x = a->value.vec();
  auto& y = out.vec();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy(x.begin() + o * in_row + off, x.begin() + o * in_row + off + out_row,
              y.begin() + o * out_row);
  return MakeNode("slice", std::move(out), {a},
                  [outer, in_row, out_row, off](Node& self) {
                    auto& ga = self.parents[0]->Grad().vec();
                    const auto& g = self.grad.vec();
                    for (std::size_t o = 0; o < outer; ++o)
                      for (std::size_t j = 0; j < out_row; ++j)
                        ga[o * in_row + off + j] += g[o * out_row + j];
                  });
}

Var Reshape(const Var& a, Shape shape) {
  if (NumElements(shape) != a->value.size())
    ShapeFail("reshape", a->shape(), shape);
  return MakeNode("reshape", a->value.Reshaped(std::move(shape)), {a},
                  [](Node& self) {
                    auto& ga = self.parents[0]->Grad().vec();
                    const auto& g = self.grad.vec();
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                  });
}

Var GatherRows(const Var& a, const std::vector<std::size_t>& rows) {
  const Shape& s = a->shape();
  if (s.size() != 2) ShapeFail("gather_rows", s, "needs rank 2");
  const std::size_t cols = s[1];
  for (std::size_t r : rows)
    if (r >= s[0])
      ShapeFail("gather_rows", s, "has no row " + std::to_string(r));
  Tensor out({rows.size(), cols});
  const auto& x = a->value.vec();
  auto& y = out.vec();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(x.begin() + rows[i] * cols, x.begin() + (rows[i] + 1) * cols,
              y.begin() + i * cols);
  return MakeNode("gather_rows", std::move(out), {a}, [rows, cols](Node& self) {
    auto& ga = self.parents[0]->Grad().vec();
    const auto& g = self.grad.vec();
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < cols; ++j) ga[rows[i] * cols + j] += g[i * cols + j];
  });
}

Var Sum(const Var& a) {
  double s = 0.0;
  for (double x : a->value.vec()) s += x;
  return MakeNode("sum", Tensor::Scalar(s), {a}, [](Node& self) {
    auto& ga = self.parents[0]->Grad().vec();
    const double g = self.grad[0];
    for (double& x : ga) x += g;
  });
}

Var Mean(const Var& a) {
  const double n = static_cast<double>(a->value.size());
  double s = 0.0;
  for (double x : a->value.vec()) s += x;
  return MakeNode("mean", Tensor::Scalar(s / n), {a}, [n](Node& self) {
    auto& ga = self.parents[0]->Grad().vec();
    const double g = self.grad[0] / n;
    for (double& x : ga) x += g;
  });
}

Var Softmax(const Var& a) {
  const std::size_t cols = a->shape().back();
  const std::size_t rows = a->value.size() / cols;
  Tensor out(a->shape());
  kernels::SoftmaxRows(rows, cols, a->value.vec().data(), out.vec().data());
  return MakeNode("softmax", std::move(out), {a}, [rows, cols](Node& self) {
    auto& ga = self.parents[0]->Grad().vec();
    const auto& y = self.value.vec();
    const auto& g = self.grad.vec();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c)
        ga[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
    }
  });
}

Var LayerNorm(const Var& a, double eps) {
  const std::size_t cols = a->shape().back();
  const std::size_t rows = a->value.size() / cols;
  Tensor out(a->shape());
  std::vector<double> inv_std(rows);
  const auto& x = a->value.vec();
  auto& y = out.vec();
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += x[r * cols + c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = x[r * cols + c] - mu;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c)
      y[r * cols + c] = (x[r * cols + c] - mu) * inv_std[r];
  }
  return MakeNode("layer_norm", std::move(out), {a},
                  [rows, cols, inv_std](Node& self) {
                    auto& ga = self.parents[0]->Grad().vec();
                    const auto& xh = self.value.vec();
                    const auto& g = self.grad.vec();
                    const double n = static_cast<double>(cols);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double mg = 0.0, mgx = 0.0;
                      for (std::size_t c = 0; c < cols; ++c) {
                        mg += g[r * cols + c];
                        mgx += g[r * cols + c] * xh[r * cols + c];
                      }
                      mg /= n;
                      mgx /= n;
                      for (std::size_t c = 0; c < cols; ++c)
                        ga[r * cols + c] +=
                            inv_std[r] * (g[r * cols + c] - mg - xh[r * cols + c] * mgx);
                    }
                  });
}

void Backward(const Var& loss) {
  if (loss->value.shape() != Shape{1})
    throw UsageError("non_scalar_loss", "backward: loss must have shape [1], got " +
                                            ShapeString(loss->value.shape()));
  if (!loss->requires_grad) return;

  // iterative post-order DFS gives a topological order
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !p->parents.empty() && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // interior gradients restart from zero so repeated passes are idempotent
  for (Node* n : order) n->Grad().Fill(0.0);
  loss->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

}  // namespace ctd::ad
