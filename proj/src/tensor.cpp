#include "tcasr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "tcasr/rng.hpp"

namespace tcasr {

namespace {

int64_t shape_size(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor: dimension error, non-positive dim");
    n *= d;
  }
  if (shape.empty()) throw std::invalid_argument("tensor: dimension error, empty shape");
  return n;
}

std::string shape_str(const std::vector<int>& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

TensorPtr make_node(std::vector<int> shape, std::vector<TensorPtr> parents) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->values.assign(static_cast<size_t>(shape_size(t->shape)), 0.0);
  for (const auto& p : parents) {
    if (p->requires_grad) t->requires_grad = true;
  }
  if (t->requires_grad) t->grad.assign(t->values.size(), 0.0);
  t->parents = std::move(parents);
  return t;
}

}  // namespace

TensorPtr Tensor::create(std::vector<int> shape, bool requires_grad) {
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->values.assign(static_cast<size_t>(shape_size(t->shape)), 0.0);
  t->requires_grad = requires_grad;
  if (requires_grad) t->grad.assign(t->values.size(), 0.0);
  return t;
}

TensorPtr Tensor::from_values(std::vector<int> shape, std::vector<double> v,
                              bool requires_grad) {
  if (static_cast<int64_t>(v.size()) != shape_size(shape)) {
    throw std::invalid_argument("tensor: dimension error, values do not fill shape " +
                                shape_str(shape));
  }
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->values = std::move(v);
  t->requires_grad = requires_grad;
  if (requires_grad) t->grad.assign(t->values.size(), 0.0);
  return t;
}

TensorPtr Tensor::scalar(double v) { return from_values({1}, {v}); }

int64_t Tensor::size() const { return static_cast<int64_t>(values.size()); }

int Tensor::rows() const {
  return shape.size() == 2 ? shape[0] : 1;
}

int Tensor::cols() const {
  return shape.size() == 2 ? shape[1] : shape[0];
}

double Tensor::item() const {
  if (values.size() != 1) {
    throw std::invalid_argument("tensor: item() on non-scalar " + shape_str(shape));
  }
  return values[0];
}

void Tensor::zero_grad() {
  std::fill(grad.begin(), grad.end(), 0.0);
}

void Tensor::ensure_grad() {
  if (!requires_grad) {
    requires_grad = true;
    grad.assign(values.size(), 0.0);
  }
}

bool Tensor::all_finite() const {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::check_finite(const std::string& what) const {
  if (!all_finite()) {
    throw std::runtime_error("tensor: non-finite values in " + what);
  }
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0]) {
    throw std::invalid_argument("matmul: dimension error " + shape_str(a->shape) +
                                " vs " + shape_str(b->shape));
  }
  const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
  auto out = make_node({m, n}, {a, b});
  const double* av = a->values.data();
  const double* bv = b->values.data();
  double* ov = out->values.data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv + p * n;
      double* orow = ov + i * n;
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  out->backward_fn = [m, k, n](Tensor& self) {
    const auto& a = self.parents[0];
    const auto& b = self.parents[1];
    const double* g = self.grad.data();
    if (a->requires_grad) {
      // dA = G * B^T
      double* ga = a->grad.data();
      const double* bv = b->values.data();
      for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* grow = g + i * n;
          const double* brow = bv + p * n;
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (b->requires_grad) {
      // dB = A^T * G
      double* gb = b->grad.data();
      const double* av = a->values.data();
      for (int i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (int p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          double* brow = gb + p * n;
          for (int j = 0; j < n; ++j) brow[j] += aip * grow[j];
        }
      }
    }
  };
  return out;
}

TensorPtr transpose(const TensorPtr& a) {
  if (a->shape.size() != 2) {
    throw std::invalid_argument("transpose: dimension error " + shape_str(a->shape));
  }
  const int m = a->shape[0], n = a->shape[1];
  auto out = make_node({n, m}, {a});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) out->values[j * m + i] = a->values[i * n + j];
  }
  out->backward_fn = [m, n](Tensor& self) {
    const auto& a = self.parents[0];
    if (!a->requires_grad) return;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) a->grad[i * n + j] += self.grad[j * m + i];
    }
  };
  return out;
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape != b->shape) {
    throw std::invalid_argument("add: dimension error " + shape_str(a->shape) +
                                " vs " + shape_str(b->shape));
  }
  auto out = make_node(a->shape, {a, b});
  for (size_t i = 0; i < out->values.size(); ++i) {
    out->values[i] = a->values[i] + b->values[i];
  }
  out->backward_fn = [](Tensor& self) {
    for (const auto& p : self.parents) {
      if (!p->requires_grad) continue;
      for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  };
  return out;
}

TensorPtr add_bias(const TensorPtr& x, const TensorPtr& b) {
  const int n = x->cols();
  if (static_cast<int64_t>(n) != b->size()) {
    throw std::invalid_argument("add_bias: dimension error " + shape_str(x->shape) +
                                " vs " + shape_str(b->shape));
  }
  const int m = x->rows();
  auto out = make_node(x->shape, {x, b});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      out->values[i * n + j] = x->values[i * n + j] + b->values[j];
    }
  }
  out->backward_fn = [m, n](Tensor& self) {
    const auto& x = self.parents[0];
    const auto& b = self.parents[1];
    if (x->requires_grad) {
      for (size_t i = 0; i < self.grad.size(); ++i) x->grad[i] += self.grad[i];
    }
    if (b->requires_grad) {
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) b->grad[j] += self.grad[i * n + j];
      }
    }
  };
  return out;
}

TensorPtr scale(const TensorPtr& a, double c) {
  auto out = make_node(a->shape, {a});
  for (size_t i = 0; i < out->values.size(); ++i) out->values[i] = a->values[i] * c;
  out->backward_fn = [c](Tensor& self) {
    const auto& a = self.parents[0];
    if (!a->requires_grad) return;
    for (size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += c * self.grad[i];
  };
  return out;
}

TensorPtr relu(const TensorPtr& a) {
  auto out = make_node(a->shape, {a});
  for (size_t i = 0; i < out->values.size(); ++i) {
    out->values[i] = a->values[i] > 0.0 ? a->values[i] : 0.0;
  }
  out->backward_fn = [](Tensor& self) {
    const auto& a = self.parents[0];
    if (!a->requires_grad) return;
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if (a->values[i] > 0.0) a->grad[i] += self.grad[i];
    }
  };
  return out;
}

namespace {

// softmax over contiguous runs of length n with stride 1, m runs spaced n apart
// (axis-1 layout); the axis-0 case is handled by transposing indices.
void softmax_run(const double* in, double* out, int n) {
  double mx = in[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, in[j]);
  double denom = 0.0;
  for (int j = 0; j < n; ++j) {
    out[j] = std::exp(in[j] - mx);
    denom += out[j];
  }
  for (int j = 0; j < n; ++j) out[j] /= denom;
}

}  // namespace

TensorPtr softmax(const TensorPtr& a, int axis) {
  if (a->shape.size() == 1) axis = 0;
  if (axis < 0 || axis >= static_cast<int>(a->shape.size()) || a->shape[axis] == 0) {
    throw std::invalid_argument("softmax: dimension error, bad axis for " +
                                shape_str(a->shape));
  }
  auto out = make_node(a->shape, {a});
  const int m = a->rows(), n = a->cols();
  if (a->shape.size() == 1 || axis == 1) {
    for (int i = 0; i < m; ++i) {
      softmax_run(a->values.data() + i * n, out->values.data() + i * n, n);
    }
  } else {
    std::vector<double> col(m), res(m);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < m; ++i) col[static_cast<size_t>(i)] = a->at(i, j);
      softmax_run(col.data(), res.data(), m);
      for (int i = 0; i < m; ++i) out->at(i, j) = res[static_cast<size_t>(i)];
    }
  }
  const bool row_mode = (a->shape.size() == 1 || axis == 1);
  out->backward_fn = [row_mode, m, n](Tensor& self) {
    const auto& a = self.parents[0];
    if (!a->requires_grad) return;
    // dx = s * (g - sum(g*s)) along the reduced axis
    if (row_mode) {
      for (int i = 0; i < m; ++i) {
        const double* s = self.values.data() + i * n;
        const double* g = self.grad.data() + i * n;
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += g[j] * s[j];
        double* ga = a->grad.data() + i * n;
        for (int j = 0; j < n; ++j) ga[j] += s[j] * (g[j] - dot);
      }
    } else {
      for (int j = 0; j < n; ++j) {
        double dot = 0.0;
        for (int i = 0; i < m; ++i) dot += self.grad[i * n + j] * self.values[i * n + j];
        for (int i = 0; i < m; ++i) {
          a->grad[i * n + j] +=
              self.values[i * n + j] * (self.grad[i * n + j] - dot);
        }
      }
    }
  };
  return out;
}

TensorPtr log_softmax_rows(const TensorPtr& a) {
  const int m = a->rows(), n = a->cols();
  if (n == 0) throw std::invalid_argument("log_softmax: dimension error, empty rows");
  auto out = make_node(a->shape, {a});
  for (int i = 0; i < m; ++i) {
    const double* in = a->values.data() + i * n;
    double* o = out->values.data() + i * n;
    double mx = in[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    double denom = 0.0;
    for (int j = 0; j < n; ++j) denom += std::exp(in[j] - mx);
    const double lse = mx + std::log(denom);
    for (int j = 0; j < n; ++j) o[j] = in[j] - lse;
  }
  out->backward_fn = [m, n](Tensor& self) {
    const auto& a = self.parents[0];
    if (!a->requires_grad) return;
    for (int i = 0; i < m; ++i) {
      const double* g = self.grad.data() + i * n;
      const double* o = self.values.data() + i * n;
      double gsum = 0.0;
      for (int j = 0; j < n; ++j) gsum += g[j];
      double* ga = a->grad.data() + i * n;
      for (int j = 0; j < n; ++j) ga[j] += g[j] - std::exp(o[j]) * gsum;
    }
  };
  return out;
}

TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma,
                     const TensorPtr& beta, double eps) {
  const int d = x->cols();
  if (d < 1) throw std::invalid_argument("layer_norm: dimension error, d == 0");
  if (gamma->size() != d || beta->size() != d) {
    throw std::invalid_argument("layer_norm: dimension error, gamma/beta mismatch");
  }
  if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be > 0");
  const int m = x->rows();
  auto out = make_node(x->shape, {x, gamma, beta});
  // stash per-row inv_std and normalized values for the backward pass
  auto norm = std::make_shared<std::vector<double>>(x->values.size());
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double* in = x->values.data() + i * d;
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += in[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(i)] = is;
    for (int j = 0; j < d; ++j) {
      const double y = (in[j] - mean) * is;
      (*norm)[static_cast<size_t>(i * d + j)] = y;
      out->values[i * d + j] = gamma->values[j] * y + beta->values[j];
    }
  }
  out->backward_fn = [m, d, norm, inv_std](Tensor& self) {
    const auto& x = self.parents[0];
    const auto& gamma = self.parents[1];
    const auto& beta = self.parents[2];
    for (int i = 0; i < m; ++i) {
      const double* g = self.grad.data() + i * d;
      const double* y = norm->data() + i * d;
      if (gamma->requires_grad) {
        for (int j = 0; j < d; ++j) gamma->grad[j] += g[j] * y[j];
      }
      if (beta->requires_grad) {
        for (int j = 0; j < d; ++j) beta->grad[j] += g[j];
      }
      if (x->requires_grad) {
        const double is = (*inv_std)[static_cast<size_t>(i)];
        double mean_dy = 0.0, mean_dyy = 0.0;
        for (int j = 0; j < d; ++j) {
          const double dy = g[j] * gamma->values[j];
          mean_dy += dy;
          mean_dyy += dy * y[j];
        }
        mean_dy /= d;
        mean_dyy /= d;
        double* gx = x->grad.data() + i * d;
        for (int j = 0; j < d; ++j) {
          const double dy = g[j] * gamma->values[j];
          gx[j] += is * (dy - mean_dy - y[j] * mean_dyy);
        }
      }
    }
  };
  return out;
}

TensorPtr embedding_lookup(const TensorPtr& table, const std::vector<int>& ids) {
  if (table->shape.size() != 2) {
    throw std::invalid_argument("embedding_lookup: dimension error, table must be 2-D");
  }
  const int v = table->shape[0], d = table->shape[1];
  if (ids.empty()) {
    throw std::invalid_argument("embedding_lookup: degenerate input, empty id list");
  }
  for (int id : ids) {
    if (id < 0 || id >= v) {
      throw std::out_of_range("embedding_lookup: vocabulary error, id " +
                              std::to_string(id) + " outside [0, " + std::to_string(v) + ")");
    }
  }
  auto out = make_node({static_cast<int>(ids.size()), d}, {table});
  for (size_t i = 0; i < ids.size(); ++i) {
    const double* row = table->values.data() + static_cast<size_t>(ids[i]) * d;
    std::copy(row, row + d, out->values.data() + i * d);
  }
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  out->backward_fn = [d, ids_copy](Tensor& self) {
    const auto& table = self.parents[0];
    if (!table->requires_grad) return;
    for (size_t i = 0; i < ids_copy->size(); ++i) {
      double* row = table->grad.data() + static_cast<size_t>((*ids_copy)[i]) * d;
      const double* g = self.grad.data() + i * d;
      for (int j = 0; j < d; ++j) row[j] += g[j];
    }
  };
  return out;
}

TensorPtr slice_cols(const TensorPtr& x, int start, int len) {
  const int m = x->rows(), n = x->cols();
  if (start < 0 || len < 1 || start + len > n) {
    throw std::invalid_argument("slice_cols: dimension error, slice [" +
                                std::to_string(start) + ", " +
                                std::to_string(start + len) + ") of " + std::to_string(n));
  }
  auto out = make_node({m, len}, {x});
  for (int i = 0; i < m; ++i) {
    std::copy(x->values.data() + i * n + start, x->values.data() + i * n + start + len,
              out->values.data() + i * len);
  }
  out->backward_fn = [m, n, start, len](Tensor& self) {
    const auto& x = self.parents[0];
    if (!x->requires_grad) return;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < len; ++j) {
        x->grad[i * n + start + j] += self.grad[i * len + j];
      }
    }
  };
  return out;
}

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty part list");
  const int m = parts[0]->rows();
  int n = 0;
  for (const auto& p : parts) {
    if (p->rows() != m) {
      throw std::invalid_argument("concat_cols: dimension error, row mismatch");
    }
    n += p->cols();
  }
  auto out = make_node({m, n}, parts);
  int off = 0;
  for (const auto& p : parts) {
    const int pc = p->cols();
    for (int i = 0; i < m; ++i) {
      std::copy(p->values.data() + i * pc, p->values.data() + (i + 1) * pc,
                out->values.data() + i * n + off);
    }
    off += pc;
  }
  out->backward_fn = [m, n](Tensor& self) {
    int off = 0;
    for (const auto& p : self.parents) {
      const int pc = p->cols();
      if (p->requires_grad) {
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < pc; ++j) {
            p->grad[i * pc + j] += self.grad[i * n + off + j];
          }
        }
      }
      off += pc;
    }
  };
  return out;
}

TensorPtr dropout(const TensorPtr& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0, 1)");
  if (p == 0.0) return x;
  auto out = make_node(x->shape, {x});
  auto mask = std::make_shared<std::vector<double>>(x->values.size());
  const double keep = 1.0 - p;
  for (size_t i = 0; i < x->values.size(); ++i) {
    const double m = rng.uniform() < p ? 0.0 : 1.0 / keep;
    (*mask)[i] = m;
    out->values[i] = x->values[i] * m;
  }
  out->backward_fn = [mask](Tensor& self) {
    const auto& x = self.parents[0];
    if (!x->requires_grad) return;
    for (size_t i = 0; i < self.grad.size(); ++i) x->grad[i] += (*mask)[i] * self.grad[i];
  };
  return out;
}

TensorPtr sum_all(const TensorPtr& x) {
  auto out = make_node({1}, {x});
  double s = 0.0;
  for (double v : x->values) s += v;
  out->values[0] = s;
  out->backward_fn = [](Tensor& self) {
    const auto& x = self.parents[0];
    if (!x->requires_grad) return;
    const double g = self.grad[0];
    for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
  };
  return out;
}

TensorPtr mean_all(const TensorPtr& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x->size()));
}

void backward(const TensorPtr& root, double seed) {
  if (root->size() != 1) {
    throw std::invalid_argument("backward: root must be a scalar");
  }
  if (!root->requires_grad) return;

  // iterative DFS topological order over the recorded graph
  std::vector<Tensor*> order;
  std::unordered_set<Tensor*> visited;
  std::vector<std::pair<TensorPtr, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorPtr next = node->parents[idx++];
      if (next->requires_grad && !visited.count(next.get())) {
        visited.insert(next.get());
        stack.emplace_back(next, 0);
      }
    } else {
      order.push_back(node.get());
      stack.pop_back();
    }
  }

  root->grad[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

}  // namespace tcasr
