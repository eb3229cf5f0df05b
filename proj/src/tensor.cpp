#include "eadk/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace eadk::ad {

namespace {

using MatRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

std::size_t numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("non-positive dimension in " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void ensure_grad(Tensor::Node& n) {
  if (n.grad.empty()) n.grad.assign(n.data.size(), 0.0);
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

Tensor make_op(std::vector<int> shape, std::vector<double> data,
               std::vector<Tensor> parents,
               std::function<void(Tensor::Node&)> backward_fn) {
  auto n = std::make_shared<Tensor::Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  bool any = false;
  for (const auto& p : parents) {
    if (p.node()->wants_grad()) any = true;
  }
  if (any) {
    n->needs_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->data.assign(numel(shape), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.values().begin(), t.values().end(), value);
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<double> data,
                         bool requires_grad) {
  if (numel(shape) != data.size())
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

double Tensor::value() const {
  if (size() != 1) throw ContractError("value() on non-scalar tensor " + shape_str(shape()));
  return node_->data[0];
}

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty()) throw ContractError("tensor has no gradient");
  return node_->grad;
}

Tensor Tensor::detached_copy() const {
  return from_data(node_->shape, node_->data, node_->requires_grad);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  CMapM A(a.values().data(), m, k), B(b.values().data(), k, n);
  MapM(out.data(), m, n) = A * B;
  return make_op(
      {m, n}, std::move(out), {a, b},
      [a = a.node(), b = b.node(), m, k, n](Tensor::Node& self) {
        CMapM dC(self.grad.data(), m, n);
        if (a->wants_grad()) {
          ensure_grad(*a);
          MapM(a->grad.data(), m, k).noalias() +=
              dC * CMapM(b->data.data(), k, n).transpose();
        }
        if (b->wants_grad()) {
          ensure_grad(*b);
          MapM(b->grad.data(), k, n).noalias() +=
              CMapM(a->data.data(), m, k).transpose() * dC;
        }
      });
}

namespace {

// b broadcast onto a by the trailing-suffix rule; returns false on mismatch
bool broadcast_ok(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t bn = 1;
  for (int d : b) bn *= static_cast<std::size_t>(d);
  if (bn == 1) return true;
  if (b.size() > a.size()) return false;
  // ignore leading 1s in b
  std::size_t lead = 0;
  while (lead < b.size() && b[lead] == 1) ++lead;
  std::size_t nb = b.size() - lead;
  for (std::size_t i = 0; i < nb; ++i) {
    if (a[a.size() - nb + i] != b[lead + i]) return false;
  }
  return true;
}

}  // namespace

Tensor elementwise(const Tensor& a, const Tensor& b, Elementwise op) {
  if (!broadcast_ok(a.shape(), b.shape()))
    throw DimensionError("elementwise shapes not broadcastable: " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t n = a.size(), bn = b.size();
  std::vector<double> out(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  switch (op) {
    case Elementwise::Add:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + bv[i % bn];
      break;
    case Elementwise::Sub:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] - bv[i % bn];
      break;
    case Elementwise::Mul:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[i % bn];
      break;
  }
  return make_op(
      a.shape(), std::move(out), {a, b},
      [a = a.node(), b = b.node(), op, n, bn](Tensor::Node& self) {
        if (a->wants_grad()) {
          ensure_grad(*a);
          for (std::size_t i = 0; i < n; ++i) {
            double g = self.grad[i];
            if (op == Elementwise::Mul) g *= b->data[i % bn];
            a->grad[i] += g;
          }
        }
        if (b->wants_grad()) {
          ensure_grad(*b);
          for (std::size_t i = 0; i < n; ++i) {
            double g = self.grad[i];
            if (op == Elementwise::Sub) g = -g;
            if (op == Elementwise::Mul) g = self.grad[i] * a->data[i];
            b->grad[i % bn] += g;
          }
        }
      });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, Elementwise::Mul); }

namespace {

Tensor minmax_impl(const Tensor& a, const Tensor& b, bool is_max) {
  if (!broadcast_ok(a.shape(), b.shape()))
    throw DimensionError("emin/emax shapes not broadcastable: " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t n = a.size(), bn = b.size();
  std::vector<double> out(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    double x = av[i], y = bv[i % bn];
    out[i] = is_max ? (x >= y ? x : y) : (x <= y ? x : y);
  }
  return make_op(a.shape(), std::move(out), {a, b},
                 [a = a.node(), b = b.node(), is_max, n, bn](Tensor::Node& self) {
                   for (std::size_t i = 0; i < n; ++i) {
                     double x = a->data[i], y = b->data[i % bn];
                     bool pick_a = is_max ? (x >= y) : (x <= y);
                     Tensor::Node* dst = pick_a ? a.get() : b.get();
                     std::size_t j = pick_a ? i : i % bn;
                     if (dst->wants_grad()) {
                       ensure_grad(*dst);
                       dst->grad[j] += self.grad[i];
                     }
                   }
                 });
}

}  // namespace

Tensor emax(const Tensor& a, const Tensor& b) { return minmax_impl(a, b, true); }
Tensor emin(const Tensor& a, const Tensor& b) { return minmax_impl(a, b, false); }

Tensor eabs(const Tensor& a) {
  const std::size_t n = a.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::fabs(a.values()[i]);
  return make_op(a.shape(), std::move(out), {a},
                 [a = a.node(), n](Tensor::Node& self) {
                   if (!a->wants_grad()) return;
                   ensure_grad(*a);
                   for (std::size_t i = 0; i < n; ++i)
                     a->grad[i] += (a->data[i] >= 0.0 ? 1.0 : -1.0) * self.grad[i];
                 });
}

Tensor scale(const Tensor& a, double c) {
  const std::size_t n = a.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = c * a.values()[i];
  return make_op(a.shape(), std::move(out), {a},
                 [a = a.node(), c, n](Tensor::Node& self) {
                   if (!a->wants_grad()) return;
                   ensure_grad(*a);
                   for (std::size_t i = 0; i < n; ++i) a->grad[i] += c * self.grad[i];
                 });
}

Tensor reciprocal(const Tensor& a) {
  const std::size_t n = a.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (a.values()[i] == 0.0) throw DomainError("reciprocal of zero");
    out[i] = 1.0 / a.values()[i];
  }
  return make_op(a.shape(), std::move(out), {a},
                 [a = a.node(), n](Tensor::Node& self) {
                   if (!a->wants_grad()) return;
                   ensure_grad(*a);
                   for (std::size_t i = 0; i < n; ++i)
                     a->grad[i] -= self.data[i] * self.data[i] * self.grad[i];
                 });
}

Tensor add_scalar(const Tensor& a, double c) {
  const std::size_t n = a.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.values()[i] + c;
  return make_op(a.shape(), std::move(out), {a},
                 [a = a.node(), n](Tensor::Node& self) {
                   if (!a->wants_grad()) return;
                   ensure_grad(*a);
                   for (std::size_t i = 0; i < n; ++i) a->grad[i] += self.grad[i];
                 });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  const std::size_t n = a.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = std::min(hi, std::max(lo, a.values()[i]));
  return make_op(a.shape(), std::move(out), {a},
                 [a = a.node(), lo, hi, n](Tensor::Node& self) {
                   if (!a->wants_grad()) return;
                   ensure_grad(*a);
                   for (std::size_t i = 0; i < n; ++i) {
                     double x = a->data[i];
                     if (x > lo && x < hi) a->grad[i] += self.grad[i];
                   }
                 });
}

Tensor activation(const Tensor& x, Activation kind) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  const auto& xv = x.values();
  switch (kind) {
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) out[i] = stable_sigmoid(xv[i]);
      break;
    case Activation::Relu:
      for (std::size_t i = 0; i < n; ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
      break;
    case Activation::Exp:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(xv[i]);
      break;
    case Activation::Log:
      for (std::size_t i = 0; i < n; ++i) {
        if (xv[i] <= 0.0)
          throw DomainError("log of non-positive value " + std::to_string(xv[i]));
        out[i] = std::log(xv[i]);
      }
      break;
  }
  return make_op(x.shape(), std::move(out), {x},
                 [x = x.node(), kind, n](Tensor::Node& self) {
                   if (!x->wants_grad()) return;
                   ensure_grad(*x);
                   for (std::size_t i = 0; i < n; ++i) {
                     double local = 0.0;
                     switch (kind) {
                       case Activation::Sigmoid: {
                         double s = self.data[i];
                         local = s * (1.0 - s);
                         break;
                       }
                       case Activation::Relu:
                         local = x->data[i] > 0.0 ? 1.0 : 0.0;
                         break;
                       case Activation::Exp:
                         local = self.data[i];
                         break;
                       case Activation::Log:
                         local = 1.0 / x->data[i];
                         break;
                     }
                     x->grad[i] += local * self.grad[i];
                   }
                 });
}

Tensor sigmoid(const Tensor& x) { return activation(x, Activation::Sigmoid); }
Tensor relu(const Tensor& x) { return activation(x, Activation::Relu); }
Tensor exp(const Tensor& x) { return activation(x, Activation::Exp); }
Tensor log(const Tensor& x) { return activation(x, Activation::Log); }

namespace {

// decompose shape around an axis as outer x n x inner
struct AxisView {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisView axis_view(const std::vector<int>& shape, int axis) {
  if (axis < 0 || axis >= static_cast<int>(shape.size()))
    throw DimensionError("axis " + std::to_string(axis) + " invalid for " +
                         shape_str(shape));
  AxisView v;
  for (int i = 0; i < axis; ++i) v.outer *= shape[i];
  v.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  AxisView v = axis_view(x.shape(), axis);
  const auto& xv = x.values();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.n * v.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < v.n; ++i)
        mx = std::max(mx, xv[base + i * v.inner]);
      double sum = 0.0;
      for (std::size_t i = 0; i < v.n; ++i) {
        double e = std::exp(xv[base + i * v.inner] - mx);
        out[base + i * v.inner] = e;
        sum += e;
      }
      for (std::size_t i = 0; i < v.n; ++i) out[base + i * v.inner] /= sum;
    }
  return make_op(x.shape(), std::move(out), {x},
                 [x = x.node(), v](Tensor::Node& self) {
                   if (!x->wants_grad()) return;
                   ensure_grad(*x);
                   for (std::size_t o = 0; o < v.outer; ++o)
                     for (std::size_t in = 0; in < v.inner; ++in) {
                       const std::size_t base = o * v.n * v.inner + in;
                       double dot = 0.0;
                       for (std::size_t i = 0; i < v.n; ++i) {
                         std::size_t k = base + i * v.inner;
                         dot += self.grad[k] * self.data[k];
                       }
                       for (std::size_t i = 0; i < v.n; ++i) {
                         std::size_t k = base + i * v.inner;
                         x->grad[k] += self.data[k] * (self.grad[k] - dot);
                       }
                     }
                 });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  if (x.rank() < 1) throw DimensionError("layer_norm needs rank >= 1");
  const int d = x.shape().back();
  if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d)
    throw DimensionError("layer_norm gain/bias must be [" + std::to_string(d) +
                         "], got " + shape_str(gain.shape()) + " and " +
                         shape_str(bias.shape()));
  const std::size_t rows = x.size() / d;
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  const auto& xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (int i = 0; i < d; ++i) mu += row[i];
    mu /= d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= d;
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int i = 0; i < d; ++i) {
      double xh = (row[i] - mu) * is;
      xhat[r * d + i] = xh;
      out[r * d + i] = gain.values()[i] * xh + bias.values()[i];
    }
  }
  return make_op(
      x.shape(), std::move(out), {x, gain, bias},
      [x = x.node(), g = gain.node(), b = bias.node(), d, rows,
       xhat = std::move(xhat), inv_std = std::move(inv_std)](Tensor::Node& self) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double* dy = self.grad.data() + r * d;
          const double* xh = xhat.data() + r * d;
          if (g->wants_grad()) {
            ensure_grad(*g);
            for (int i = 0; i < d; ++i) g->grad[i] += dy[i] * xh[i];
          }
          if (b->wants_grad()) {
            ensure_grad(*b);
            for (int i = 0; i < d; ++i) b->grad[i] += dy[i];
          }
          if (x->wants_grad()) {
            ensure_grad(*x);
            double m1 = 0.0, m2 = 0.0;
            for (int i = 0; i < d; ++i) {
              double gd = g->data[i] * dy[i];
              m1 += gd;
              m2 += gd * xh[i];
            }
            m1 /= d;
            m2 /= d;
            for (int i = 0; i < d; ++i) {
              double gd = g->data[i] * dy[i];
              x->grad[r * d + i] += (gd - m1 - xh[i] * m2) * inv_std[r];
            }
          }
        }
      });
}

Tensor reduce(const Tensor& x, Reduce kind) {
  const std::size_t n = x.size();
  const auto& xv = x.values();
  double r;
  std::size_t arg = 0;
  switch (kind) {
    case Reduce::Sum:
    case Reduce::Mean: {
      r = std::accumulate(xv.begin(), xv.end(), 0.0);
      if (kind == Reduce::Mean) r /= static_cast<double>(n);
      break;
    }
    case Reduce::Max: {
      r = xv[0];
      for (std::size_t i = 1; i < n; ++i)
        if (xv[i] > r) {
          r = xv[i];
          arg = i;
        }
      break;
    }
  }
  return make_op({1}, {r}, {x},
                 [x = x.node(), kind, n, arg](Tensor::Node& self) {
                   if (!x->wants_grad()) return;
                   ensure_grad(*x);
                   double g = self.grad[0];
                   switch (kind) {
                     case Reduce::Sum:
                       for (std::size_t i = 0; i < n; ++i) x->grad[i] += g;
                       break;
                     case Reduce::Mean:
                       for (std::size_t i = 0; i < n; ++i)
                         x->grad[i] += g / static_cast<double>(n);
                       break;
                     case Reduce::Max:
                       x->grad[arg] += g;
                       break;
                   }
                 });
}

Tensor reduce(const Tensor& x, int axis, Reduce kind) {
  AxisView v = axis_view(x.shape(), axis);
  std::vector<int> out_shape;
  for (int i = 0; i < x.rank(); ++i)
    if (i != axis) out_shape.push_back(x.dim(i));
  if (out_shape.empty()) out_shape.push_back(1);
  const auto& xv = x.values();
  std::vector<double> out(v.outer * v.inner);
  std::vector<std::size_t> args(kind == Reduce::Max ? v.outer * v.inner : 0);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.n * v.inner + in;
      const std::size_t oi = o * v.inner + in;
      switch (kind) {
        case Reduce::Sum:
        case Reduce::Mean: {
          double s = 0.0;
          for (std::size_t i = 0; i < v.n; ++i) s += xv[base + i * v.inner];
          out[oi] = kind == Reduce::Mean ? s / static_cast<double>(v.n) : s;
          break;
        }
        case Reduce::Max: {
          double mx = xv[base];
          std::size_t a = 0;
          for (std::size_t i = 1; i < v.n; ++i)
            if (xv[base + i * v.inner] > mx) {
              mx = xv[base + i * v.inner];
              a = i;
            }
          out[oi] = mx;
          args[oi] = a;
          break;
        }
      }
    }
  return make_op(std::move(out_shape), std::move(out), {x},
                 [x = x.node(), kind, v, args = std::move(args)](Tensor::Node& self) {
                   if (!x->wants_grad()) return;
                   ensure_grad(*x);
                   for (std::size_t o = 0; o < v.outer; ++o)
                     for (std::size_t in = 0; in < v.inner; ++in) {
                       const std::size_t base = o * v.n * v.inner + in;
                       const std::size_t oi = o * v.inner + in;
                       double g = self.grad[oi];
                       switch (kind) {
                         case Reduce::Sum:
                           for (std::size_t i = 0; i < v.n; ++i)
                             x->grad[base + i * v.inner] += g;
                           break;
                         case Reduce::Mean:
                           for (std::size_t i = 0; i < v.n; ++i)
                             x->grad[base + i * v.inner] += g / static_cast<double>(v.n);
                           break;
                         case Reduce::Max:
                           x->grad[base + args[oi] * v.inner] += g;
                           break;
                       }
                     }
                 });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("transpose expects rank 2, got " + shape_str(x.shape()));
  const int m = x.dim(0), n = x.dim(1);
  std::vector<double> out(x.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j) * m + i] = x.values()[static_cast<std::size_t>(i) * n + j];
  return make_op({n, m}, std::move(out), {x},
                 [x = x.node(), m, n](Tensor::Node& self) {
                   if (!x->wants_grad()) return;
                   ensure_grad(*x);
                   for (int i = 0; i < m; ++i)
                     for (int j = 0; j < n; ++j)
                       x->grad[static_cast<std::size_t>(i) * n + j] +=
                           self.grad[static_cast<std::size_t>(j) * m + i];
                 });
}

Tensor slice_cols(const Tensor& x, int begin, int end) {
  if (x.rank() != 2) throw DimensionError("slice_cols expects rank 2");
  const int m = x.dim(0), n = x.dim(1);
  if (begin < 0 || end > n || begin >= end)
    throw DimensionError("slice_cols [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") invalid for " + shape_str(x.shape()));
  const int w = end - begin;
  std::vector<double> out(static_cast<std::size_t>(m) * w);
  for (int i = 0; i < m; ++i)
    std::copy_n(x.values().data() + static_cast<std::size_t>(i) * n + begin, w,
                out.data() + static_cast<std::size_t>(i) * w);
  return make_op({m, w}, std::move(out), {x},
                 [x = x.node(), m, n, w, begin](Tensor::Node& self) {
                   if (!x->wants_grad()) return;
                   ensure_grad(*x);
                   for (int i = 0; i < m; ++i)
                     for (int j = 0; j < w; ++j)
                       x->grad[static_cast<std::size_t>(i) * n + begin + j] +=
                           self.grad[static_cast<std::size_t>(i) * w + j];
                 });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const int m = parts[0].dim(0);
  int total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != m)
      throw DimensionError("concat_cols row mismatch");
    total += p.dim(1);
  }
  std::vector<double> out(static_cast<std::size_t>(m) * total);
  int off = 0;
  for (const auto& p : parts) {
    const int w = p.dim(1);
    for (int i = 0; i < m; ++i)
      std::copy_n(p.values().data() + static_cast<std::size_t>(i) * w, w,
                  out.data() + static_cast<std::size_t>(i) * total + off);
    off += w;
  }
  std::vector<int> widths;
  for (const auto& p : parts) widths.push_back(p.dim(1));
  return make_op({m, total}, std::move(out), parts,
                 [widths = std::move(widths), m, total](Tensor::Node& self) {
                   int off = 0;
                   for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
                     auto& p = *self.parents[pi];
                     const int w = widths[pi];
                     if (p.wants_grad()) {
                       ensure_grad(p);
                       for (int i = 0; i < m; ++i)
                         for (int j = 0; j < w; ++j)
                           p.grad[static_cast<std::size_t>(i) * w + j] +=
                               self.grad[static_cast<std::size_t>(i) * total + off + j];
                     }
                     off += w;
                   }
                 });
}

Tensor gather_rows(const Tensor& x, std::vector<int> rows) {
  if (x.rank() != 2) throw DimensionError("gather_rows expects rank 2");
  const int n = x.dim(1);
  for (int r : rows)
    if (r < 0 || r >= x.dim(0))
      throw DimensionError("gather_rows index " + std::to_string(r) +
                           " out of range for " + shape_str(x.shape()));
  const int n_rows = static_cast<int>(rows.size());
  std::vector<double> out(rows.size() * n);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(x.values().data() + static_cast<std::size_t>(rows[i]) * n, n,
                out.data() + i * n);
  return make_op({n_rows, n}, std::move(out), {x},
                 [x = x.node(), rows = std::move(rows), n](Tensor::Node& self) {
                   if (!x->wants_grad()) return;
                   ensure_grad(*x);
                   for (std::size_t i = 0; i < rows.size(); ++i)
                     for (int j = 0; j < n; ++j)
                       x->grad[static_cast<std::size_t>(rows[i]) * n + j] +=
                           self.grad[i * n + j];
                 });
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  if (numel(shape) != x.size())
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " +
                         shape_str(shape) + " changes element count");
  return make_op(std::move(shape), x.values(), {x},
                 [x = x.node()](Tensor::Node& self) {
                   if (!x->wants_grad()) return;
                   ensure_grad(*x);
                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                     x->grad[i] += self.grad[i];
                 });
}

void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ContractError("backward requires a scalar loss, got " +
                        shape_str(loss.shape()));
  // iterative post-order topological sort
  std::vector<Tensor::Node*> order;
  std::unordered_set<Tensor::Node*> seen;
  struct Frame {
    Tensor::Node* n;
    std::size_t next;
  };
  std::vector<Frame> stack;
  Tensor::Node* root = loss.node().get();
  if (!root->wants_grad()) return;  // loss does not depend on any parameter
  stack.push_back({root, 0});
  seen.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Tensor::Node* p = f.n->parents[f.next++].get();
      if (p->wants_grad() && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }
  for (Tensor::Node* n : order) n->grad.assign(n->data.size(), 0.0);
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double eps) {
  Tensor xg = Tensor::from_data(x.shape(), x.values(), true);
  Tensor y = f(xg);
  backward(y);
  std::vector<double> analytic = xg.grad();
  double worst = 0.0;
  std::vector<double> base = x.values();
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> hi = base, lo = base;
    hi[i] += eps;
    lo[i] -= eps;
    double fp = f(Tensor::from_data(x.shape(), std::move(hi))).value();
    double fm = f(Tensor::from_data(x.shape(), std::move(lo))).value();
    double fd = (fp - fm) / (2.0 * eps);
    double err = std::fabs(analytic[i] - fd) / std::max(1.0, std::fabs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace eadk::ad
