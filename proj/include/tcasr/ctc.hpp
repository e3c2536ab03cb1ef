#pragma once

#include <string>
#include <vector>

#include "tcasr/tensor.hpp"

namespace tcasr {

// Token layout: blank at 0, phones at 1..n_phones, then the keyword
// boundary markers <IPH> and <IPT>. The markers are ordinary label tokens
// for CTC purposes; blank never appears in a label sequence.
struct PhoneVocab {
  int n_phones = 0;

  explicit PhoneVocab(int n_phones_) : n_phones(n_phones_) {}
  PhoneVocab() = default;

  int blank() const { return 0; }
  int token_of_phone(int p) const { return 1 + p; }
  int phone_of_token(int t) const { return t - 1; }
  int iph() const { return 1 + n_phones; }
  int ipt() const { return 2 + n_phones; }
  int size() const { return n_phones + 3; }
  bool is_pivot(int t) const { return t == iph() || t == ipt(); }
  std::string token_name(int t) const;
};

std::vector<int> strip_pivots(const std::vector<int>& tokens, const PhoneVocab& v);

struct CtcResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d log_probs, T x V row-major
};

// Negative log total path probability of target under log_probs (T x V,
// rows of exp summing to 1), computed by the log-space forward recursion
// over the blank-interleaved target. grad is exact, from the alpha/beta
// decomposition. Throws when T is below the path-existence bound
// (target length plus adjacent repeats) or when rows are not normalized.
CtcResult ctc_loss(const std::vector<double>& log_probs, int T, int V,
                   const std::vector<int>& target, int blank = 0);

// Autodiff wrapper: scalar loss node whose parent is the log_probs tensor.
TensorPtr ctc_loss_node(const TensorPtr& log_probs, const std::vector<int>& target,
                        int blank = 0);

// Best-path decoding: per-frame argmax, collapse repeats, drop blanks.
std::vector<int> greedy_decode(const std::vector<double>& log_probs, int T, int V,
                               int blank = 0);
std::vector<int> greedy_decode(const Tensor& log_probs, int blank = 0);

struct EditCounts {
  long substitutions = 0;
  long deletions = 0;
  long insertions = 0;
  long ref_len = 0;

  double per() const {
    return 100.0 * static_cast<double>(substitutions + deletions + insertions) /
           static_cast<double>(ref_len);
  }
};

// Levenshtein alignment with unit costs.
EditCounts edit_counts(const std::vector<int>& hyp, const std::vector<int>& ref);

// Phone error rate in percent; pivots are stripped from both sequences
// first unless strip is false. Can exceed 100.
double per(const std::vector<int>& hyp, const std::vector<int>& ref,
           const PhoneVocab& vocab, bool strip = true);

}  // namespace tcasr
