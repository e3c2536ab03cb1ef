#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcasr/optim.hpp"
#include "tcasr/tensor.hpp"

namespace tcasr {

class Rng;

struct ModelConfig {
  int d_model = 256;
  int speech_blocks = 8;
  int keyword_blocks = 4;
  int sa_heads = 4;
  int ca_heads = 1;
  int input_dim = 200;
  int vocab_size = 0;  // phones + 2 pivots + 1 blank
  bool share_ca_kv = false;
  double dropout = 0.0;

  void validate() const;
};

// Fixed sinusoidal table: PE[t, 2i] = sin(t / 10000^(2i/d)),
// PE[t, 2i+1] = cos of the same angle. Not learned.
TensorPtr positional_encoding(int T, int d_model);

struct AttentionModule {
  TensorPtr wq, wk, wv, wo;  // d_model x d_model projections
  int heads = 1;
  int d_model = 0;
};

struct AttnMap {
  int block = -1;
  bool cross = false;
  int head = 0;
  int tq = 0;
  int tk = 0;
  std::vector<double> weights;  // row-major tq x tk, rows sum to 1
};

struct AttnRecorder {
  std::vector<AttnMap> maps;
};

// softmax(Q K^T / sqrt(d_k)) V per head, heads concatenated and output
// projected; no masking. Self-attention is the kv_in == q_in case.
TensorPtr attention(const TensorPtr& q_in, const TensorPtr& kv_in,
                    const AttentionModule& m, AttnRecorder* rec = nullptr,
                    int block_idx = -1, bool cross = false);

// One record per map: magic "ATTN1", uint32 block index, uint32 Tq,
// uint32 Tk, float64 row-major weights.
void write_attention_maps(const std::string& path, const std::vector<AttnMap>& maps,
                          bool cross_only = true);
std::vector<AttnMap> read_attention_maps(const std::string& path);

struct KeywordBlock {
  AttentionModule sa;
  TensorPtr ln1_g, ln1_b, ln2_g, ln2_b;
  TensorPtr nl_w, nl_b, nl_ln_g, nl_ln_b;
};

struct SpeechBlock {
  AttentionModule sa;
  AttentionModule ca;
  TensorPtr ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
  TensorPtr nl_w, nl_b, nl_ln_g, nl_ln_b;
};

// The TC-ASR network. The keyword encoder embeds the phone sequence and
// runs plain transformer blocks; the speech encoder interleaves self-
// attention with single-head cross-attention over the keyword memory in
// every block, then projects to per-frame phone logits.
class Model {
 public:
  Model(ModelConfig cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  int64_t count_parameters() const { return params_.count_scalars(); }

  TensorPtr encode_keyword(const std::vector<int>& tokens,
                           AttnRecorder* rec = nullptr,
                           Rng* dropout_rng = nullptr) const;
  TensorPtr encode_speech(const TensorPtr& features, const TensorPtr& keyword_memory,
                          AttnRecorder* rec = nullptr,
                          Rng* dropout_rng = nullptr) const;

 private:
  ModelConfig cfg_;
  ParamStore params_;
  TensorPtr embed_;
  std::vector<KeywordBlock> kw_blocks_;
  TensorPtr in_w_, in_b_, out_w_, out_b_;
  TensorPtr shared_ca_wk_, shared_ca_wv_;
  std::vector<SpeechBlock> spe_blocks_;
};

}  // namespace tcasr
