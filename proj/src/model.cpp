#include "tcasr/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "tcasr/rng.hpp"

namespace tcasr {

void ModelConfig::validate() const {
  if (d_model < 1 || speech_blocks < 1 || keyword_blocks < 1 || input_dim < 1) {
    throw std::invalid_argument("model config error: non-positive dimension");
  }
  if (sa_heads < 1 || d_model % sa_heads != 0) {
    throw std::invalid_argument("model config error: d_model not divisible by sa_heads");
  }
  if (ca_heads < 1 || d_model % ca_heads != 0) {
    throw std::invalid_argument("model config error: d_model not divisible by ca_heads");
  }
  if (vocab_size < 3) {
    throw std::invalid_argument("model config error: vocab_size < 3");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw std::invalid_argument("model config error: dropout outside [0, 1)");
  }
}

TensorPtr positional_encoding(int T, int d_model) {
  if (T < 1 || d_model < 1) {
    throw std::invalid_argument("positional_encoding: dimension error");
  }
  auto pe = Tensor::create({T, d_model});
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < d_model; ++j) {
      const int i = j / 2;
      const double angle = t / std::pow(10000.0, 2.0 * i / d_model);
      pe->at(t, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

TensorPtr attention(const TensorPtr& q_in, const TensorPtr& kv_in,
                    const AttentionModule& m, AttnRecorder* rec, int block_idx,
                    bool cross) {
  if (kv_in->rows() < 1) {
    throw std::invalid_argument("attention: empty-memory error, Tk == 0");
  }
  if (q_in->cols() != m.d_model || kv_in->cols() != m.d_model) {
    throw std::invalid_argument("attention: dimension error, input width vs d_model");
  }
  const int d_k = m.d_model / m.heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d_k));

  const TensorPtr q = matmul(q_in, m.wq);
  const TensorPtr k = matmul(kv_in, m.wk);
  const TensorPtr v = matmul(kv_in, m.wv);

  std::vector<TensorPtr> heads;
  heads.reserve(static_cast<size_t>(m.heads));
  for (int h = 0; h < m.heads; ++h) {
    const TensorPtr qh = m.heads == 1 ? q : slice_cols(q, h * d_k, d_k);
    const TensorPtr kh = m.heads == 1 ? k : slice_cols(k, h * d_k, d_k);
    const TensorPtr vh = m.heads == 1 ? v : slice_cols(v, h * d_k, d_k);
    const TensorPtr scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dk);
    const TensorPtr weights = softmax(scores, 1);
    if (rec) {
      rec->maps.push_back(
          {block_idx, cross, h, weights->rows(), weights->cols(), weights->values});
    }
    heads.push_back(matmul(weights, vh));
  }
  const TensorPtr merged = m.heads == 1 ? heads[0] : concat_cols(heads);
  return matmul(merged, m.wo);
}

namespace {

constexpr char kAttnMagic[5] = {'A', 'T', 'T', 'N', '1'};

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("attention map file: truncated record");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void write_attention_maps(const std::string& path, const std::vector<AttnMap>& maps,
                          bool cross_only) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("attention map file: cannot open " + path);
  for (const auto& m : maps) {
    if (cross_only && !m.cross) continue;
    os.write(kAttnMagic, sizeof(kAttnMagic));
    write_u32(os, static_cast<uint32_t>(m.block));
    write_u32(os, static_cast<uint32_t>(m.tq));
    write_u32(os, static_cast<uint32_t>(m.tk));
    os.write(reinterpret_cast<const char*>(m.weights.data()),
             static_cast<std::streamsize>(m.weights.size() * sizeof(double)));
  }
}

std::vector<AttnMap> read_attention_maps(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("attention map file: cannot open " + path);
  std::vector<AttnMap> maps;
  char magic[5];
  while (is.read(magic, 5)) {
    if (std::memcmp(magic, kAttnMagic, 5) != 0) {
      throw std::runtime_error("attention map file: bad magic in " + path);
    }
    AttnMap m;
    m.cross = true;
    m.block = static_cast<int>(read_u32(is));
    m.tq = static_cast<int>(read_u32(is));
    m.tk = static_cast<int>(read_u32(is));
    m.weights.resize(static_cast<size_t>(m.tq) * m.tk);
    is.read(reinterpret_cast<char*>(m.weights.data()),
            static_cast<std::streamsize>(m.weights.size() * sizeof(double)));
    if (!is) throw std::runtime_error("attention map file: truncated weights");
    maps.push_back(std::move(m));
  }
  return maps;
}

namespace {

TensorPtr init_matrix(ParamStore& store, const std::string& name, int in_dim,
                      int out_dim, Rng& rng) {
  auto t = Tensor::create({in_dim, out_dim});
  const double bound = std::sqrt(1.0 / in_dim);
  for (double& v : t->values) v = rng.uniform(-bound, bound);
  return store.add(name, t);
}

TensorPtr init_bias(ParamStore& store, const std::string& name, int dim) {
  return store.add(name, Tensor::create({dim}));
}

TensorPtr init_ones(ParamStore& store, const std::string& name, int dim) {
  auto t = Tensor::create({dim});
  std::fill(t->values.begin(), t->values.end(), 1.0);
  return store.add(name, t);
}

TensorPtr init_embedding(ParamStore& store, const std::string& name, int vocab,
                         int dim, Rng& rng) {
  auto t = Tensor::create({vocab, dim});
  const double sigma = 1.0 / std::sqrt(static_cast<double>(dim));
  for (double& v : t->values) v = sigma * rng.normal();
  return store.add(name, t);
}

AttentionModule init_attention(ParamStore& store, const std::string& prefix,
                               int d_model, int heads, Rng& rng) {
  AttentionModule m;
  m.heads = heads;
  m.d_model = d_model;
  m.wq = init_matrix(store, prefix + ".wq", d_model, d_model, rng);
  m.wk = init_matrix(store, prefix + ".wk", d_model, d_model, rng);
  m.wv = init_matrix(store, prefix + ".wv", d_model, d_model, rng);
  m.wo = init_matrix(store, prefix + ".wo", d_model, d_model, rng);
  return m;
}

}  // namespace

Model::Model(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int d = cfg_.d_model;

  embed_ = init_embedding(params_, "kw.embed", cfg_.vocab_size, d, rng);
  for (int i = 0; i < cfg_.keyword_blocks; ++i) {
    const std::string p = "kw.blk" + std::to_string(i);
    KeywordBlock b;
    b.sa = init_attention(params_, p + ".sa", d, cfg_.sa_heads, rng);
    b.ln1_g = init_ones(params_, p + ".ln1.g", d);
    b.ln1_b = init_bias(params_, p + ".ln1.b", d);
    b.ln2_g = init_ones(params_, p + ".ln2.g", d);
    b.ln2_b = init_bias(params_, p + ".ln2.b", d);
    b.nl_w = init_matrix(params_, p + ".nl.w", d, d, rng);
    b.nl_b = init_bias(params_, p + ".nl.b", d);
    b.nl_ln_g = init_ones(params_, p + ".nl_ln.g", d);
    b.nl_ln_b = init_bias(params_, p + ".nl_ln.b", d);
    kw_blocks_.push_back(std::move(b));
  }

  in_w_ = init_matrix(params_, "spe.in.w", cfg_.input_dim, d, rng);
  in_b_ = init_bias(params_, "spe.in.b", d);
  if (cfg_.share_ca_kv) {
    shared_ca_wk_ = init_matrix(params_, "spe.ca_shared.wk", d, d, rng);
    shared_ca_wv_ = init_matrix(params_, "spe.ca_shared.wv", d, d, rng);
  }
  for (int i = 0; i < cfg_.speech_blocks; ++i) {
    const std::string p = "spe.blk" + std::to_string(i);
    SpeechBlock b;
    b.sa = init_attention(params_, p + ".sa", d, cfg_.sa_heads, rng);
    if (cfg_.share_ca_kv) {
      b.ca.heads = cfg_.ca_heads;
      b.ca.d_model = d;
      b.ca.wq = init_matrix(params_, p + ".ca.wq", d, d, rng);
      b.ca.wk = shared_ca_wk_;
      b.ca.wv = shared_ca_wv_;
      b.ca.wo = init_matrix(params_, p + ".ca.wo", d, d, rng);
    } else {
      b.ca = init_attention(params_, p + ".ca", d, cfg_.ca_heads, rng);
    }
    b.ln1_g = init_ones(params_, p + ".ln1.g", d);
    b.ln1_b = init_bias(params_, p + ".ln1.b", d);
    b.ln2_g = init_ones(params_, p + ".ln2.g", d);
    b.ln2_b = init_bias(params_, p + ".ln2.b", d);
    b.ln3_g = init_ones(params_, p + ".ln3.g", d);
    b.ln3_b = init_bias(params_, p + ".ln3.b", d);
    b.nl_w = init_matrix(params_, p + ".nl.w", d, d, rng);
    b.nl_b = init_bias(params_, p + ".nl.b", d);
    b.nl_ln_g = init_ones(params_, p + ".nl_ln.g", d);
    b.nl_ln_b = init_bias(params_, p + ".nl_ln.b", d);
    spe_blocks_.push_back(std::move(b));
  }
  out_w_ = init_matrix(params_, "spe.out.w", d, cfg_.vocab_size, rng);
  out_b_ = init_bias(params_, "spe.out.b", cfg_.vocab_size);
}

namespace {

// the non-linear sub-block: one linear d->d, layer normalization, ReLU
TensorPtr nonlinear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b,
                    const TensorPtr& ln_g, const TensorPtr& ln_b) {
  return relu(layer_norm(add_bias(matmul(x, w), b), ln_g, ln_b));
}

TensorPtr maybe_dropout(const TensorPtr& x, double p, Rng* rng) {
  if (!rng || p <= 0.0) return x;
  return dropout(x, p, *rng);
}

}  // namespace

TensorPtr Model::encode_keyword(const std::vector<int>& tokens, AttnRecorder* rec,
                                Rng* dropout_rng) const {
  if (tokens.empty()) {
    throw std::invalid_argument("encode_keyword: degenerate input, empty phone sequence");
  }
  TensorPtr x = embedding_lookup(embed_, tokens);
  x = add(x, positional_encoding(static_cast<int>(tokens.size()), cfg_.d_model));
  for (size_t i = 0; i < kw_blocks_.size(); ++i) {
    const auto& b = kw_blocks_[i];
    const TensorPtr n1 = layer_norm(x, b.ln1_g, b.ln1_b);
    TensorPtr h = attention(n1, n1, b.sa, rec, static_cast<int>(i), false);
    x = add(x, maybe_dropout(h, cfg_.dropout, dropout_rng));
    h = nonlinear(layer_norm(x, b.ln2_g, b.ln2_b), b.nl_w, b.nl_b, b.nl_ln_g, b.nl_ln_b);
    x = add(x, maybe_dropout(h, cfg_.dropout, dropout_rng));
  }
  return x;
}

TensorPtr Model::encode_speech(const TensorPtr& features,
                               const TensorPtr& keyword_memory, AttnRecorder* rec,
                               Rng* dropout_rng) const {
  if (features->rows() < 1) {
    throw std::invalid_argument("encode_speech: degenerate input, T < 1");
  }
  if (features->cols() != cfg_.input_dim) {
    throw std::invalid_argument("encode_speech: dimension error, expected input_dim " +
                                std::to_string(cfg_.input_dim));
  }
  if (!keyword_memory || keyword_memory->rows() < 1) {
    throw std::invalid_argument("encode_speech: empty-memory error");
  }
  TensorPtr x = add_bias(matmul(features, in_w_), in_b_);
  x = add(x, positional_encoding(features->rows(), cfg_.d_model));
  for (size_t i = 0; i < spe_blocks_.size(); ++i) {
    const auto& b = spe_blocks_[i];
    const TensorPtr n1 = layer_norm(x, b.ln1_g, b.ln1_b);
    TensorPtr h = attention(n1, n1, b.sa, rec, static_cast<int>(i), false);
    x = add(x, maybe_dropout(h, cfg_.dropout, dropout_rng));
    h = attention(layer_norm(x, b.ln2_g, b.ln2_b), keyword_memory, b.ca, rec,
                  static_cast<int>(i), true);
    x = add(x, maybe_dropout(h, cfg_.dropout, dropout_rng));
    h = nonlinear(layer_norm(x, b.ln3_g, b.ln3_b), b.nl_w, b.nl_b, b.nl_ln_g, b.nl_ln_b);
    x = add(x, maybe_dropout(h, cfg_.dropout, dropout_rng));
  }
  return add_bias(matmul(x, out_w_), out_b_);
}

}  // namespace tcasr
