#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcasr/tensor.hpp"

namespace tcasr {

// Named learnable tensors in a stable registration order.
class ParamStore {
 public:
  TensorPtr add(const std::string& name, TensorPtr t);
  TensorPtr find(const std::string& name) const;
  void zero_grad();
  int64_t count_scalars() const;

  struct Item {
    std::string name;
    TensorPtr tensor;
  };
  const std::vector<Item>& items() const { return items_; }
  std::vector<Item>& items() { return items_; }

 private:
  std::vector<Item> items_;
};

struct AdamState {
  int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double base_lr = 1e-3;
  std::vector<std::vector<double>> m, v;  // aligned with the param store

  void init(const ParamStore& params);
};

// One Adam update with bias correction; gradients are read from the
// parameters' grad buffers. Throws on non-finite gradients, naming the
// offending parameter.
void adam_step(ParamStore& params, AdamState& state, double lr);

struct LRSchedule {
  double base_lr = 1e-3;
  int warmup_epochs = 10;
};

// Linear warmup to base_lr over warmup_epochs, constant afterwards.
double lr_at(const LRSchedule& schedule, int epoch);

}  // namespace tcasr
