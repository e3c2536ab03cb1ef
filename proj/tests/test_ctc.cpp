#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "tcasr/ctc.hpp"
#include "tcasr/rng.hpp"

using namespace tcasr;

namespace {

// Exhaustive CTC oracle: walk all V^T frame paths, collapse repeats then
// drop blanks, and sum the probability of the ones that spell the target.
double brute_force_ctc(const std::vector<double>& log_probs, int T, int V,
                       const std::vector<int>& target, int blank = 0) {
  double total = 0.0;
  std::vector<int> path(static_cast<size_t>(T), 0);
  const int64_t n_paths = static_cast<int64_t>(std::pow(V, T));
  for (int64_t code = 0; code < n_paths; ++code) {
    int64_t c = code;
    double logp = 0.0;
    for (int t = 0; t < T; ++t) {
      path[static_cast<size_t>(t)] = static_cast<int>(c % V);
      c /= V;
      logp += log_probs[static_cast<size_t>(t) * V + path[static_cast<size_t>(t)]];
    }
    std::vector<int> collapsed;
    int prev = blank;
    for (int t = 0; t < T; ++t) {
      const int k = path[static_cast<size_t>(t)];
      if (k != blank && k != prev) collapsed.push_back(k);
      prev = k;
    }
    if (collapsed == target) total += std::exp(logp);
  }
  return -std::log(total);
}

std::vector<double> random_log_probs(int T, int V, Rng& rng) {
  std::vector<double> lp(static_cast<size_t>(T) * V);
  for (int t = 0; t < T; ++t) {
    double denom = 0.0;
    std::vector<double> e(static_cast<size_t>(V));
    for (int v = 0; v < V; ++v) {
      e[static_cast<size_t>(v)] = std::exp(rng.uniform(-2.0, 2.0));
      denom += e[static_cast<size_t>(v)];
    }
    for (int v = 0; v < V; ++v) {
      lp[static_cast<size_t>(t) * V + v] = std::log(e[static_cast<size_t>(v)] / denom);
    }
  }
  return lp;
}

}  // namespace

TEST_CASE("single-frame single-label loss is -log q") {
  const double q = 0.37;
  std::vector<double> lp = {std::log(1.0 - q), std::log(q)};
  const CtcResult res = ctc_loss(lp, 1, 2, {1});
  CHECK(res.loss == doctest::Approx(-std::log(q)).epsilon(1e-12));
}

TEST_CASE("uniform two-frame case enumerates to ln 3") {
  // V=3 (blank, a, b), both rows uniform; target [a] has paths aa, a-, -a
  std::vector<double> lp(6, std::log(1.0 / 3.0));
  const CtcResult res = ctc_loss(lp, 2, 3, {1});
  CHECK(res.loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("loss matches exhaustive enumeration and gradient matches finite differences") {
  Rng rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 220; ++trial) {
    const int T = 2 + rng.randint(5);  // 2..6
    const int V = 2 + rng.randint(3);  // 2..4
    const int L = 1 + rng.randint(3);  // 1..3
    std::vector<int> target(static_cast<size_t>(L));
    for (int& t : target) t = 1 + rng.randint(V - 1);
    int repeats = 0;
    for (int i = 1; i < L; ++i) repeats += target[static_cast<size_t>(i)] == target[static_cast<size_t>(i - 1)];
    if (T < L + repeats) continue;  // structurally infeasible draw

    const std::vector<double> lp = random_log_probs(T, V, rng);
    const CtcResult res = ctc_loss(lp, T, V, target);
    const double oracle = brute_force_ctc(lp, T, V, target);
    CHECK(std::abs(res.loss - oracle) <= 1e-9);

    // small step keeps rows normalized within the 1e-6 contract
    const double eps = 1e-7;
    for (size_t i = 0; i < lp.size(); ++i) {
      std::vector<double> lp2 = lp;
      lp2[i] = lp[i] + eps;
      const double fp = ctc_loss(lp2, T, V, target).loss;
      lp2[i] = lp[i] - eps;
      const double fm = ctc_loss(lp2, T, V, target).loss;
      const double fd = (fp - fm) / (2.0 * eps);
      CHECK(std::abs(res.grad[i] - fd) / std::max(1.0, std::abs(fd)) <= 1e-5);
    }
    ++checked;
  }
  CHECK(checked >= 200);
}

TEST_CASE("loss is non-negative and zero only for a certain path") {
  // a single label owning all frames with probability ~1
  std::vector<double> lp = {std::log(1e-12), std::log(1.0 - 1e-12)};
  const CtcResult res = ctc_loss(lp, 1, 2, {1});
  CHECK(res.loss >= 0.0);
  CHECK(res.loss == doctest::Approx(0.0).epsilon(1e-9));

  Rng rng(5);
  const auto lp2 = random_log_probs(4, 3, rng);
  CHECK(ctc_loss(lp2, 4, 3, {1, 2}).loss > 0.0);
}

TEST_CASE("infeasible targets and malformed rows are rejected") {
  std::vector<double> lp(6, std::log(1.0 / 3.0));
  CHECK_THROWS_WITH_AS(ctc_loss(lp, 2, 3, {1, 1, 2}), doctest::Contains("infeasible"),
                       std::invalid_argument);
  // repeated label needs a separating blank frame: [a, a] needs T >= 3
  CHECK_THROWS_AS(ctc_loss(lp, 2, 3, {1, 1}), std::invalid_argument);

  std::vector<double> bad(6, std::log(0.5));
  CHECK_THROWS_WITH_AS(ctc_loss(bad, 2, 3, {1}), doctest::Contains("input error"),
                       std::invalid_argument);
  CHECK_THROWS_AS(ctc_loss(lp, 2, 3, {0}), std::invalid_argument);  // blank in target
  CHECK_THROWS_AS(ctc_loss(lp, 2, 3, {}), std::invalid_argument);
}

TEST_CASE("ctc autodiff node forwards loss and scales gradients") {
  Rng rng(17);
  auto lp = Tensor::from_values({3, 3}, random_log_probs(3, 3, rng), true);
  auto loss = ctc_loss_node(lp, {1, 2});
  const CtcResult direct = ctc_loss(lp->values, 3, 3, {1, 2});
  CHECK(loss->item() == doctest::Approx(direct.loss).epsilon(1e-12));
  backward(loss, 0.5);
  for (size_t i = 0; i < lp->grad.size(); ++i) {
    CHECK(lp->grad[i] == doctest::Approx(0.5 * direct.grad[i]).epsilon(1e-12));
  }
}

TEST_CASE("greedy decode collapses repeats and drops blanks") {
  auto make = [](std::vector<int> argmaxes, int V) {
    std::vector<double> out;
    for (int a : argmaxes) {
      for (int v = 0; v < V; ++v) out.push_back(v == a ? -0.01 : -5.0);
    }
    return out;
  };
  CHECK(greedy_decode(make({1, 1, 0, 2}, 3), 4, 3) == std::vector<int>{1, 2});
  CHECK(greedy_decode(make({0, 0, 0}, 3), 3, 3).empty());
  CHECK(greedy_decode(make({1, 0, 1}, 3), 3, 3) == std::vector<int>{1, 1});
}

TEST_CASE("greedy decode of a one-hot valid path reproduces its collapsed label") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const int T = 4 + rng.randint(5);
    const int V = 3 + rng.randint(2);
    std::vector<int> path(static_cast<size_t>(T));
    for (int& p : path) p = rng.randint(V);
    std::vector<double> lp(static_cast<size_t>(T) * V, -9.0);
    for (int t = 0; t < T; ++t) lp[static_cast<size_t>(t) * V + path[static_cast<size_t>(t)]] = -0.001;
    std::vector<int> collapsed;
    int prev = 0;
    for (int p : path) {
      if (p != 0 && p != prev) collapsed.push_back(p);
      prev = p;
    }
    CHECK(greedy_decode(lp, T, V) == collapsed);
  }
}

TEST_CASE("per hand-checked values") {
  const PhoneVocab vocab(8);
  const std::vector<int> ref = {1, 2, 3};
  CHECK(per(ref, ref, vocab) == doctest::Approx(0.0));
  CHECK(per({}, ref, vocab) == doctest::Approx(100.0));
  CHECK(per({1, 7, 3}, ref, vocab) == doctest::Approx(100.0 / 3).epsilon(1e-9));
  CHECK_THROWS_WITH_AS(per({1}, {}, vocab), doctest::Contains("scoring error"),
                       std::invalid_argument);
}

TEST_CASE("per exceeds 100 on insertion-heavy hypotheses") {
  const PhoneVocab vocab(8);
  const std::vector<int> ref = {1, 2, 3};
  std::vector<int> doubled = {1, 7, 3, 1, 7, 3};  // imperfect hyp, doubled
  const double score = per(doubled, ref, vocab);
  CHECK(score > 100.0);
  CHECK(score == doctest::Approx(400.0 / 3).epsilon(1e-9));
}

TEST_CASE("per strips pivots by default and is symmetric in substitutions") {
  const PhoneVocab vocab(8);
  const std::vector<int> ref = {vocab.iph(), 1, 2, vocab.ipt(), 3};
  const std::vector<int> hyp = {1, 2, 3};
  CHECK(per(hyp, ref, vocab) == doctest::Approx(0.0));
  CHECK(per(hyp, ref, vocab, false) > 0.0);
  // substitution cost is symmetric
  const EditCounts ab = edit_counts({1, 5, 3}, {1, 2, 3});
  const EditCounts ba = edit_counts({1, 2, 3}, {1, 5, 3});
  CHECK(ab.substitutions == ba.substitutions);
}

TEST_CASE("edit counts break down into S, D, I") {
  const EditCounts c = edit_counts({1, 2, 2, 4}, {1, 2, 3});
  CHECK(c.ref_len == 3);
  CHECK(c.substitutions + c.deletions + c.insertions == 2);  // one sub + one insert
  CHECK(c.insertions >= 1);
}
