#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace eadk::ad {

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense f64 tensor participating in a dynamically taped reverse-mode graph.
// A Tensor is a cheap handle onto a shared node; ops record parents and a
// local backward rule on the output node. Gradients only flow along paths
// that reach a requires_grad leaf; everything else is constant-folded out of
// the tape.
class Tensor {
 public:
  struct Node {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // sized lazily during backward
    bool requires_grad = false;  // leaf flag, set by the owner
    bool needs_grad = false;     // true if on a path to a requires_grad leaf
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    bool wants_grad() const { return requires_grad || needs_grad; }
  };

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value,
                     bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(std::size_t i) const { return node_->shape[i]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::size_t size() const { return node_->data.size(); }

  std::vector<double>& values() { return node_->data; }
  const std::vector<double>& values() const { return node_->data; }
  double at(std::size_t i) const { return node_->data[i]; }
  double value() const;  // scalar accessor; throws on non-scalar

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad() { node_->grad.clear(); }

  // identity of the underlying node, for parameter bookkeeping
  const std::shared_ptr<Node>& node() const { return node_; }

  // deep copy with no tape history
  Tensor detached_copy() const;

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;

  friend Tensor make_op(std::vector<int> shape, std::vector<double> data,
                        std::vector<Tensor> parents,
                        std::function<void(Tensor::Node&)> backward_fn);
};

enum class Elementwise { Add, Sub, Mul };
enum class Activation { Sigmoid, Relu, Exp, Log };
enum class Reduce { Sum, Mean, Max };

Tensor matmul(const Tensor& a, const Tensor& b);

// b must have equal shape, be a trailing suffix of a's shape, or be scalar
Tensor elementwise(const Tensor& a, const Tensor& b, Elementwise op);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor emax(const Tensor& a, const Tensor& b);  // ties route gradient to a
Tensor emin(const Tensor& a, const Tensor& b);
Tensor eabs(const Tensor& a);

Tensor scale(const Tensor& a, double c);
Tensor reciprocal(const Tensor& a);  // elementwise 1/x; x must be nonzero
Tensor add_scalar(const Tensor& a, double c);
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor activation(const Tensor& x, Activation kind);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

Tensor softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

Tensor reduce(const Tensor& x, Reduce kind);            // over all elements
Tensor reduce(const Tensor& x, int axis, Reduce kind);  // collapse one axis

Tensor transpose(const Tensor& x);  // 2-d
Tensor slice_cols(const Tensor& x, int begin, int end);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& x, std::vector<int> rows);
Tensor reshape(const Tensor& x, std::vector<int> shape);

// Accumulates exact gradients into every wants_grad node reachable from
// loss. Grads are reset first, so repeated calls are bit-identical.
void backward(const Tensor& loss);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// f must be a pure scalar-valued function of its argument.
double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double eps = 1e-5);

std::string shape_str(const std::vector<int>& s);

}  // namespace eadk::ad
