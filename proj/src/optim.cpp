#include "tcasr/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace tcasr {

TensorPtr ParamStore::add(const std::string& name, TensorPtr t) {
  for (const auto& it : items_) {
    if (it.name == name) {
      throw std::invalid_argument("param store: duplicate parameter " + name);
    }
  }
  t->ensure_grad();
  items_.push_back({name, t});
  return items_.back().tensor;
}

TensorPtr ParamStore::find(const std::string& name) const {
  for (const auto& it : items_) {
    if (it.name == name) return it.tensor;
  }
  return nullptr;
}

void ParamStore::zero_grad() {
  for (auto& it : items_) it.tensor->zero_grad();
}

int64_t ParamStore::count_scalars() const {
  int64_t n = 0;
  for (const auto& it : items_) n += it.tensor->size();
  return n;
}

void AdamState::init(const ParamStore& params) {
  step = 0;
  m.clear();
  v.clear();
  for (const auto& it : params.items()) {
    m.emplace_back(it.tensor->values.size(), 0.0);
    v.emplace_back(it.tensor->values.size(), 0.0);
  }
}

void adam_step(ParamStore& params, AdamState& state, double lr) {
  if (lr <= 0.0) throw std::invalid_argument("adam_step: lr must be > 0");
  if (state.m.size() != params.items().size()) {
    throw std::invalid_argument("adam_step: state does not match param store");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t k = 0; k < params.items().size(); ++k) {
    auto& p = *params.items()[k].tensor;
    if (state.m[k].size() != p.values.size()) {
      throw std::invalid_argument("adam_step: shape mismatch for parameter " +
                                  params.items()[k].name);
    }
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (size_t i = 0; i < p.values.size(); ++i) {
      const double g = p.grad[i];
      if (!std::isfinite(g)) {
        throw std::runtime_error("adam_step: training error, non-finite gradient in " +
                                 params.items()[k].name);
      }
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.values[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double lr_at(const LRSchedule& schedule, int epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_at: epoch must be >= 0");
  if (epoch < schedule.warmup_epochs) {
    return schedule.base_lr * static_cast<double>(epoch + 1) /
           static_cast<double>(schedule.warmup_epochs);
  }
  return schedule.base_lr;
}

}  // namespace tcasr
