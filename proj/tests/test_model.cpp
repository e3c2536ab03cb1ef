#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "tcasr/ctc.hpp"
#include "tcasr/model.hpp"
#include "tcasr/rng.hpp"

using namespace tcasr;

namespace {

ModelConfig tiny_config(int vocab = 8) {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.speech_blocks = 2;
  cfg.keyword_blocks = 1;
  cfg.sa_heads = 2;
  cfg.ca_heads = 1;
  cfg.input_dim = 12;
  cfg.vocab_size = vocab;
  return cfg;
}

TensorPtr random_input(int rows, int cols, Rng& rng, bool grad = false) {
  auto t = Tensor::create({rows, cols}, grad);
  for (double& v : t->values) v = rng.uniform(-1.0, 1.0);
  return t;
}

AttentionModule random_module(int d, int heads, Rng& rng) {
  AttentionModule m;
  m.heads = heads;
  m.d_model = d;
  auto mk = [&] {
    auto t = Tensor::create({d, d});
    for (double& v : t->values) v = rng.uniform(-0.7, 0.7);
    return t;
  };
  m.wq = mk();
  m.wk = mk();
  m.wv = mk();
  m.wo = mk();
  return m;
}

}  // namespace

TEST_CASE("positional encoding values and range") {
  const TensorPtr pe = positional_encoding(6, 8);
  for (int j = 0; j < 8; ++j) {
    CHECK(pe->at(0, j) == (j % 2 == 0 ? 0.0 : 1.0));
  }
  CHECK(pe->at(1, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
  for (double v : pe->values) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("single-key attention returns the projected value row for any query") {
  Rng rng(1);
  const AttentionModule m = random_module(6, 1, rng);
  const TensorPtr kv = random_input(1, 6, rng);
  const TensorPtr q1 = random_input(3, 6, rng);
  const TensorPtr q2 = random_input(3, 6, rng);
  const TensorPtr o1 = attention(q1, kv, m);
  const TensorPtr o2 = attention(q2, kv, m);
  // expected: kv * Wv * Wo, independent of the queries
  const TensorPtr expect = matmul(matmul(kv, m.wv), m.wo);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 6; ++c) {
      CHECK(o1->at(r, c) == doctest::Approx(expect->at(0, c)).epsilon(1e-15));
      CHECK(o2->at(r, c) == o1->at(r, c));
    }
  }
}

TEST_CASE("identical keys with distinct values attend to the exact mean") {
  // Wk keeps only the first coordinate, which the two kv rows share
  AttentionModule m;
  m.heads = 1;
  m.d_model = 2;
  m.wq = Tensor::from_values({2, 2}, {1.0, 0.0, 0.0, 1.0});
  m.wk = Tensor::from_values({2, 2}, {1.0, 0.0, 0.0, 0.0});
  m.wv = Tensor::from_values({2, 2}, {1.0, 0.0, 0.0, 1.0});
  m.wo = Tensor::from_values({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const TensorPtr kv = Tensor::from_values({2, 2}, {1.0, 4.0, 1.0, -2.0});
  const TensorPtr q = Tensor::from_values({1, 2}, {0.3, -0.9});
  const TensorPtr out = attention(q, kv, m);
  CHECK(out->at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out->at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));  // mean of 4 and -2
}

TEST_CASE("attention agrees with a dense evaluation of the scaled-dot formula") {
  Rng rng(2);
  const int d = 6;
  const AttentionModule m = random_module(d, 1, rng);
  const TensorPtr q_in = random_input(3, d, rng);
  const TensorPtr kv_in = random_input(4, d, rng);
  const TensorPtr got = attention(q_in, kv_in, m);

  // direct dense computation, no graph machinery
  auto mm = [&](const std::vector<double>& a, int ar, int ac,
                const std::vector<double>& b, int bc) {
    std::vector<double> out(static_cast<size_t>(ar) * bc, 0.0);
    for (int i = 0; i < ar; ++i) {
      for (int k = 0; k < ac; ++k) {
        for (int j = 0; j < bc; ++j) {
          out[static_cast<size_t>(i) * bc + j] +=
              a[static_cast<size_t>(i) * ac + k] * b[static_cast<size_t>(k) * bc + j];
        }
      }
    }
    return out;
  };
  const auto q = mm(q_in->values, 3, d, m.wq->values, d);
  const auto k = mm(kv_in->values, 4, d, m.wk->values, d);
  const auto v = mm(kv_in->values, 4, d, m.wv->values, d);
  std::vector<double> att(12, 0.0);
  for (int i = 0; i < 3; ++i) {
    double row[4];
    double mx = -1e300;
    for (int j = 0; j < 4; ++j) {
      double s = 0.0;
      for (int c = 0; c < d; ++c) s += q[static_cast<size_t>(i) * d + c] * k[static_cast<size_t>(j) * d + c];
      row[j] = s / std::sqrt(static_cast<double>(d));
      mx = std::max(mx, row[j]);
    }
    double denom = 0.0;
    for (int j = 0; j < 4; ++j) denom += std::exp(row[j] - mx);
    for (int j = 0; j < 4; ++j) {
      const double w = std::exp(row[j] - mx) / denom;
      for (int c = 0; c < d; ++c) att[static_cast<size_t>(i) * d + c] += w * v[static_cast<size_t>(j) * d + c];
    }
  }
  const auto expect = mm(att, 3, d, m.wo->values, d);
  for (size_t i = 0; i < expect.size(); ++i) {
    CHECK(std::abs(got->values[i] - expect[i]) <= 1e-10);
  }
}

TEST_CASE("attention weight rows are probability vectors in every block") {
  Model model(tiny_config(), 3);
  Rng rng(3);
  const TensorPtr feat = random_input(7, 12, rng);
  AttnRecorder rec;
  const TensorPtr memory = model.encode_keyword({1, 2, 3, 7}, &rec);
  model.encode_speech(feat, memory, &rec);
  // keyword blocks: 1 SA x 2 heads; speech blocks: 2 x (SA x 2 heads + CA)
  CHECK(rec.maps.size() == 2 + 2 * 3);
  for (const auto& map : rec.maps) {
    for (int r = 0; r < map.tq; ++r) {
      double sum = 0.0;
      for (int c = 0; c < map.tk; ++c) sum += map.weights[static_cast<size_t>(r) * map.tk + c];
      CHECK(std::abs(sum - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("self-attention without positional encoding is permutation-equivariant") {
  Rng rng(4);
  const int d = 8;
  const AttentionModule m = random_module(d, 2, rng);
  auto gamma = Tensor::create({d});
  std::fill(gamma->values.begin(), gamma->values.end(), 1.0);
  auto beta = Tensor::create({d});
  const TensorPtr x = random_input(5, d, rng);

  // a block body without the encoder's positional table
  auto block = [&](const TensorPtr& in) {
    const TensorPtr n = layer_norm(in, gamma, beta);
    return add(in, attention(n, n, m));
  };
  const TensorPtr out = block(x);

  const std::vector<int> perm = {3, 0, 4, 1, 2};
  auto permuted = Tensor::create({5, d});
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < d; ++c) permuted->at(r, c) = x->at(perm[static_cast<size_t>(r)], c);
  }
  const TensorPtr out_p = block(permuted);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < d; ++c) {
      CHECK(std::abs(out_p->at(r, c) - out->at(perm[static_cast<size_t>(r)], c)) <= 1e-9);
    }
  }
}

TEST_CASE("attention rejects degenerate shapes") {
  Rng rng(5);
  const AttentionModule m = random_module(4, 1, rng);
  const TensorPtr q = random_input(3, 6, rng);
  CHECK_THROWS_WITH_AS(attention(q, q, m), doctest::Contains("dimension"),
                       std::invalid_argument);
}

TEST_CASE("keyword encoder shapes, determinism, and order sensitivity") {
  const ModelConfig cfg = tiny_config(10);
  Model model(cfg, 7);
  const PhoneVocab vocab(7);  // vocab.size() == 10
  const std::vector<int> tokens = {vocab.iph(), 2, 5, vocab.ipt()};
  const TensorPtr mem = model.encode_keyword(tokens);
  CHECK(mem->rows() == 4);
  CHECK(mem->cols() == cfg.d_model);

  const TensorPtr mem2 = model.encode_keyword(tokens);
  CHECK(mem->values == mem2->values);

  const TensorPtr swapped = model.encode_keyword({vocab.iph(), 5, 2, vocab.ipt()});
  double diff = 0.0;
  for (size_t i = 0; i < mem->values.size(); ++i) {
    diff = std::max(diff, std::abs(mem->values[i] - swapped->values[i]));
  }
  CHECK(diff > 0.0);

  CHECK_THROWS_WITH_AS(model.encode_keyword({}), doctest::Contains("degenerate"),
                       std::invalid_argument);
  CHECK_THROWS_AS(model.encode_keyword({10}), std::out_of_range);
}

TEST_CASE("speech encoder emits per-frame logits and feels the keyword") {
  const ModelConfig cfg = tiny_config(9);
  Model model(cfg, 11);
  Rng rng(6);
  const TensorPtr feat = random_input(6, 12, rng);
  const TensorPtr mem_a = model.encode_keyword({1, 2, 3});
  const TensorPtr mem_b = model.encode_keyword({4, 5, 6});
  const TensorPtr la = model.encode_speech(feat, mem_a);
  const TensorPtr lb = model.encode_speech(feat, mem_b);
  CHECK(la->rows() == 6);
  CHECK(la->cols() == 9);
  double diff = 0.0;
  for (size_t i = 0; i < la->values.size(); ++i) {
    diff = std::max(diff, std::abs(la->values[i] - lb->values[i]));
  }
  CHECK(diff > 0.0);

  CHECK_THROWS_WITH_AS(model.encode_speech(random_input(3, 5, rng), mem_a),
                       doctest::Contains("dimension"), std::invalid_argument);
}

TEST_CASE("gradient flows through cross-attention into the keyword embedding") {
  Model model(tiny_config(9), 13);
  Rng rng(7);
  const TensorPtr feat = random_input(5, 12, rng);
  const TensorPtr mem = model.encode_keyword({1, 2});
  const TensorPtr logits = model.encode_speech(feat, mem);
  model.params().zero_grad();
  backward(mean_all(logits));
  const TensorPtr embed = model.params().find("kw.embed");
  REQUIRE(embed);
  double norm = 0.0;
  for (double g : embed->grad) norm += g * g;
  CHECK(norm > 0.0);
}

TEST_CASE("keyword encoder carries no cross-attention parameters") {
  Model model(tiny_config(), 1);
  for (const auto& item : model.params().items()) {
    if (item.name.rfind("kw.", 0) == 0) {
      CHECK(item.name.find(".ca.") == std::string::npos);
    }
  }
}

TEST_CASE("parameter counting") {
  ModelConfig cfg = tiny_config(10);
  Model model(cfg, 1);
  CHECK(model.params().find("kw.embed")->size() == 10 * cfg.d_model);

  // block count enters linearly
  ModelConfig c1 = cfg, c2 = cfg, c3 = cfg;
  c1.speech_blocks = 1;
  c2.speech_blocks = 2;
  c3.speech_blocks = 3;
  const int64_t n1 = Model(c1, 1).count_parameters();
  const int64_t n2 = Model(c2, 1).count_parameters();
  const int64_t n3 = Model(c3, 1).count_parameters();
  CHECK(n2 - n1 == n3 - n2);
  CHECK(n2 > n1);

  ModelConfig half = cfg;
  half.d_model = 4;
  half.input_dim = 6;
  half.sa_heads = 2;
  CHECK(Model(half, 1).count_parameters() < model.count_parameters());
}

TEST_CASE("shared cross-attention key/value projections shrink the model") {
  ModelConfig cfg = tiny_config();
  ModelConfig shared = cfg;
  shared.share_ca_kv = true;
  Model m1(cfg, 1);
  Model m2(shared, 1);
  CHECK(m2.count_parameters() < m1.count_parameters());
  CHECK(m2.params().find("spe.ca_shared.wk"));
  CHECK(!m2.params().find("spe.blk0.ca.wk"));
  // the shared projections still feed every block
  CHECK(m1.count_parameters() - m2.count_parameters() ==
        (cfg.speech_blocks - 1) * 2 * cfg.d_model * cfg.d_model);
}

TEST_CASE("model initialization is seed-deterministic") {
  Model a(tiny_config(), 21);
  Model b(tiny_config(), 21);
  Model c(tiny_config(), 22);
  CHECK(a.params().find("spe.in.w")->values == b.params().find("spe.in.w")->values);
  CHECK(a.params().find("spe.in.w")->values != c.params().find("spe.in.w")->values);
}

TEST_CASE("end-to-end gradients through cross-attention and ctc match finite differences") {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.speech_blocks = 2;
  cfg.keyword_blocks = 1;
  cfg.sa_heads = 2;
  cfg.ca_heads = 1;
  cfg.input_dim = 10;
  cfg.vocab_size = 6;
  Model model(cfg, 99);
  Rng rng(8);
  const TensorPtr feat = random_input(5, 10, rng);
  const std::vector<int> keyword = {1, 4};
  const std::vector<int> target = {2, 3};

  auto loss_value = [&] {
    const TensorPtr mem = model.encode_keyword(keyword);
    const TensorPtr logits = model.encode_speech(feat, mem);
    return ctc_loss_node(log_softmax_rows(logits), target);
  };

  model.params().zero_grad();
  backward(loss_value());

  const double eps = 1e-4;
  double worst = 0.0;
  for (const auto& item : model.params().items()) {
    auto& p = *item.tensor;
    for (size_t i = 0; i < p.values.size(); ++i) {
      const double x0 = p.values[i];
      p.values[i] = x0 + eps;
      const double fp = loss_value()->item();
      p.values[i] = x0 - eps;
      const double fm = loss_value()->item();
      p.values[i] = x0;
      const double fd = (fp - fm) / (2.0 * eps);
      worst = std::max(worst, std::abs(p.grad[i] - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  CHECK(worst <= 1e-3);
}

TEST_CASE("attention map files round-trip") {
  Model model(tiny_config(), 3);
  Rng rng(9);
  AttnRecorder rec;
  const TensorPtr mem = model.encode_keyword({1, 2, 3}, &rec);
  model.encode_speech(random_input(4, 12, rng), mem, &rec);
  const std::string path = "attn_test.bin";
  write_attention_maps(path, rec.maps, true);
  const auto loaded = read_attention_maps(path);
  size_t n_cross = 0;
  for (const auto& m : rec.maps) n_cross += m.cross ? 1 : 0;
  REQUIRE(loaded.size() == n_cross);
  size_t j = 0;
  for (const auto& m : rec.maps) {
    if (!m.cross) continue;
    CHECK(loaded[j].block == m.block);
    CHECK(loaded[j].tq == m.tq);
    CHECK(loaded[j].tk == m.tk);
    CHECK(loaded[j].weights == m.weights);
    ++j;
  }
  std::remove(path.c_str());
}

TEST_CASE("config validation") {
  ModelConfig cfg = tiny_config();
  cfg.sa_heads = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.vocab_size = 2;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
