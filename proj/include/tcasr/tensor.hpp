#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace tcasr {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// A node in a dynamically recorded reverse-mode autodiff graph.
// Values are 64-bit reals in row-major order. Supported ranks are 1 and 2;
// a scalar is shape {1}. The grad buffer exists iff requires_grad.
class Tensor {
 public:
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;

  std::vector<TensorPtr> parents;
  std::function<void(Tensor&)> backward_fn;

  static TensorPtr create(std::vector<int> shape, bool requires_grad = false);
  static TensorPtr from_values(std::vector<int> shape, std::vector<double> v,
                               bool requires_grad = false);
  static TensorPtr scalar(double v);

  int64_t size() const;
  int rows() const;
  int cols() const;
  double& at(int r, int c) { return values[static_cast<size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return values[static_cast<size_t>(r) * cols() + c]; }
  double item() const;

  void zero_grad();
  void ensure_grad();
  bool all_finite() const;
  void check_finite(const std::string& what) const;
};

// Primitive ops. Each builds a graph node whose backward_fn accumulates
// exact gradients into the parents that require them.
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(const TensorPtr& a);
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
// rows of x each get b added; b has shape {1, d} or {d}
TensorPtr add_bias(const TensorPtr& x, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double c);
TensorPtr relu(const TensorPtr& a);
// axis 0 normalizes down columns, axis 1 along rows; 1-D input uses axis 0
TensorPtr softmax(const TensorPtr& a, int axis = 1);
TensorPtr log_softmax_rows(const TensorPtr& a);
TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma,
                     const TensorPtr& beta, double eps = 1e-5);
TensorPtr embedding_lookup(const TensorPtr& table, const std::vector<int>& ids);
TensorPtr slice_cols(const TensorPtr& x, int start, int len);
TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
TensorPtr dropout(const TensorPtr& x, double p, class Rng& rng);
TensorPtr sum_all(const TensorPtr& x);
TensorPtr mean_all(const TensorPtr& x);

// Reverse sweep from a scalar root. seed is the incoming gradient, so a
// mean over a batch can be folded in by passing 1/batch.
void backward(const TensorPtr& root, double seed = 1.0);

}  // namespace tcasr
