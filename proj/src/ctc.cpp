#include "tcasr/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tcasr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double mx = std::max(a, b);
  return mx + std::log1p(std::exp(std::min(a, b) - mx));
}

}  // namespace

std::string PhoneVocab::token_name(int t) const {
  if (t == blank()) return "<blk>";
  if (t == iph()) return "<IPH>";
  if (t == ipt()) return "<IPT>";
  return "p" + std::to_string(t - 1);
}

std::vector<int> strip_pivots(const std::vector<int>& tokens, const PhoneVocab& v) {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (int t : tokens) {
    if (!v.is_pivot(t)) out.push_back(t);
  }
  return out;
}

CtcResult ctc_loss(const std::vector<double>& log_probs, int T, int V,
                   const std::vector<int>& target, int blank) {
  if (T < 1 || V < 2 || static_cast<int64_t>(log_probs.size()) !=
                            static_cast<int64_t>(T) * V) {
    throw std::invalid_argument("ctc_loss: dimension error, bad log_probs shape");
  }
  if (target.empty()) {
    throw std::invalid_argument("ctc_loss: degenerate input, empty target");
  }
  for (int t : target) {
    if (t == blank) {
      throw std::invalid_argument("ctc_loss: input error, blank inside target");
    }
    if (t < 0 || t >= V) {
      throw std::out_of_range("ctc_loss: vocabulary error, label " + std::to_string(t));
    }
  }
  for (int t = 0; t < T; ++t) {
    double s = 0.0;
    for (int k = 0; k < V; ++k) s += std::exp(log_probs[static_cast<size_t>(t) * V + k]);
    if (std::abs(s - 1.0) > 1e-6) {
      throw std::invalid_argument("ctc_loss: input error, row " + std::to_string(t) +
                                  " of exp(log_probs) sums to " + std::to_string(s));
    }
  }

  const int L = static_cast<int>(target.size());
  int repeats = 0;
  for (int i = 1; i < L; ++i) {
    if (target[i] == target[i - 1]) ++repeats;
  }
  if (T < L + repeats) {
    throw std::invalid_argument(
        "ctc_loss: infeasible alignment, T=" + std::to_string(T) + " < " +
        std::to_string(L + repeats) + " required for the target");
  }

  // blank-interleaved extended target
  const int S = 2 * L + 1;
  std::vector<int> ext(static_cast<size_t>(S), blank);
  for (int i = 0; i < L; ++i) ext[static_cast<size_t>(2 * i + 1)] = target[i];

  auto lp = [&](int t, int k) { return log_probs[static_cast<size_t>(t) * V + k]; };
  auto can_skip = [&](int s) {
    return ext[static_cast<size_t>(s)] != blank && s >= 2 &&
           ext[static_cast<size_t>(s)] != ext[static_cast<size_t>(s - 2)];
  };

  // alpha(t, s): prefix paths ending at ext state s, emission at t included
  std::vector<double> alpha(static_cast<size_t>(T) * S, kNegInf);
  alpha[0] = lp(0, blank);
  if (S > 1) alpha[1] = lp(0, ext[1]);
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double a = alpha[static_cast<size_t>(t - 1) * S + s];
      if (s >= 1) a = log_add(a, alpha[static_cast<size_t>(t - 1) * S + s - 1]);
      if (can_skip(s)) a = log_add(a, alpha[static_cast<size_t>(t - 1) * S + s - 2]);
      if (a != kNegInf) a += lp(t, ext[static_cast<size_t>(s)]);
      alpha[static_cast<size_t>(t) * S + s] = a;
    }
  }

  double log_p = alpha[static_cast<size_t>(T - 1) * S + S - 1];
  if (S > 1) log_p = log_add(log_p, alpha[static_cast<size_t>(T - 1) * S + S - 2]);
  if (log_p == kNegInf) {
    throw std::invalid_argument("ctc_loss: infeasible alignment, no valid path");
  }

  // beta(t, s): suffix paths strictly after t, so alpha * beta covers every
  // emission exactly once
  std::vector<double> beta(static_cast<size_t>(T) * S, kNegInf);
  beta[static_cast<size_t>(T - 1) * S + S - 1] = 0.0;
  if (S > 1) beta[static_cast<size_t>(T - 1) * S + S - 2] = 0.0;
  for (int t = T - 2; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      double b = beta[static_cast<size_t>(t + 1) * S + s] + lp(t + 1, ext[static_cast<size_t>(s)]);
      if (s + 1 < S) {
        b = log_add(b, beta[static_cast<size_t>(t + 1) * S + s + 1] +
                           lp(t + 1, ext[static_cast<size_t>(s + 1)]));
      }
      if (s + 2 < S && can_skip(s + 2)) {
        b = log_add(b, beta[static_cast<size_t>(t + 1) * S + s + 2] +
                           lp(t + 1, ext[static_cast<size_t>(s + 2)]));
      }
      beta[static_cast<size_t>(t) * S + s] = b;
    }
  }

  CtcResult res;
  res.loss = -log_p;
  res.grad.assign(static_cast<size_t>(T) * V, 0.0);
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      const double ab = alpha[static_cast<size_t>(t) * S + s] +
                        beta[static_cast<size_t>(t) * S + s];
      if (ab == kNegInf) continue;
      const int k = ext[static_cast<size_t>(s)];
      double& g = res.grad[static_cast<size_t>(t) * V + k];
      // accumulate in probability space relative to log_p
      g += std::exp(ab - log_p);
    }
  }
  for (double& g : res.grad) g = -g;
  return res;
}

TensorPtr ctc_loss_node(const TensorPtr& log_probs, const std::vector<int>& target,
                        int blank) {
  const int T = log_probs->rows(), V = log_probs->cols();
  CtcResult res = ctc_loss(log_probs->values, T, V, target, blank);
  auto out = Tensor::create({1}, log_probs->requires_grad);
  out->values[0] = res.loss;
  out->parents = {log_probs};
  auto grad = std::make_shared<std::vector<double>>(std::move(res.grad));
  out->backward_fn = [grad](Tensor& self) {
    const auto& lp = self.parents[0];
    if (!lp->requires_grad) return;
    const double g = self.grad[0];
    for (size_t i = 0; i < grad->size(); ++i) lp->grad[i] += g * (*grad)[i];
  };
  return out;
}

std::vector<int> greedy_decode(const std::vector<double>& log_probs, int T, int V,
                               int blank) {
  std::vector<int> out;
  int prev = blank;
  for (int t = 0; t < T; ++t) {
    const double* row = log_probs.data() + static_cast<size_t>(t) * V;
    int best = 0;
    for (int k = 1; k < V; ++k) {
      if (row[k] > row[best]) best = k;
    }
    if (best != blank && best != prev) out.push_back(best);
    prev = best;
  }
  return out;
}

std::vector<int> greedy_decode(const Tensor& log_probs, int blank) {
  return greedy_decode(log_probs.values, log_probs.rows(), log_probs.cols(), blank);
}

EditCounts edit_counts(const std::vector<int>& hyp, const std::vector<int>& ref) {
  const size_t H = hyp.size(), R = ref.size();
  // dp over (ref index, hyp index), tracking the triple behind the distance
  struct Cell {
    long cost;
    long s, d, i;
  };
  std::vector<Cell> prev(H + 1), cur(H + 1);
  for (size_t j = 0; j <= H; ++j) prev[j] = {static_cast<long>(j), 0, 0, static_cast<long>(j)};
  for (size_t i = 1; i <= R; ++i) {
    cur[0] = {static_cast<long>(i), 0, static_cast<long>(i), 0};
    for (size_t j = 1; j <= H; ++j) {
      const bool match = ref[i - 1] == hyp[j - 1];
      Cell best = prev[j - 1];
      if (!match) best.cost += 1, best.s += 1;  // substitution or match
      Cell del = prev[j];
      del.cost += 1, del.d += 1;
      Cell ins = cur[j - 1];
      ins.cost += 1, ins.i += 1;
      if (del.cost < best.cost) best = del;
      if (ins.cost < best.cost) best = ins;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  EditCounts out;
  out.substitutions = prev[H].s;
  out.deletions = prev[H].d;
  out.insertions = prev[H].i;
  out.ref_len = static_cast<long>(R);
  return out;
}

double per(const std::vector<int>& hyp, const std::vector<int>& ref,
           const PhoneVocab& vocab, bool strip) {
  const std::vector<int> h = strip ? strip_pivots(hyp, vocab) : hyp;
  const std::vector<int> r = strip ? strip_pivots(ref, vocab) : ref;
  if (r.empty()) {
    throw std::invalid_argument("per: scoring error, empty reference");
  }
  return edit_counts(h, r).per();
}

}  // namespace tcasr
