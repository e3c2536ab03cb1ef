#include "tcasr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tcasr {

Regime regime_from_string(const std::string& s) {
  if (s == "clean") return Regime::clean;
  if (s == "da_strong") return Regime::da_strong;
  if (s == "da_weak") return Regime::da_weak;
  if (s == "tc_strong") return Regime::tc_strong;
  if (s == "tc_weak") return Regime::tc_weak;
  if (s == "tc_full") return Regime::tc_full;
  throw std::invalid_argument("config error: unknown regime " + s);
}

std::string regime_to_string(Regime r) {
  switch (r) {
    case Regime::clean: return "clean";
    case Regime::da_strong: return "da_strong";
    case Regime::da_weak: return "da_weak";
    case Regime::tc_strong: return "tc_strong";
    case Regime::tc_weak: return "tc_weak";
    case Regime::tc_full: return "tc_full";
  }
  return "?";
}

bool regime_uses_keyword(Regime r) {
  return r == Regime::tc_strong || r == Regime::tc_weak || r == Regime::tc_full;
}

ExperimentConfig ExperimentConfig::desk_default() {
  ExperimentConfig cfg;
  cfg.corpus = SyntheticCorpusConfig{};
  cfg.model.d_model = 32;
  cfg.model.speech_blocks = 3;
  cfg.model.keyword_blocks = 2;
  cfg.model.sa_heads = 4;
  cfg.model.ca_heads = 1;
  cfg.model.input_dim = 0;
  cfg.model.vocab_size = 0;
  cfg.optim.lr = 2e-3;
  return cfg;
}

void ExperimentConfig::finalize() {
  corpus.validate();
  if (model.input_dim == 0) model.input_dim = 5 * corpus.feat_dim;
  if (model.vocab_size == 0) model.vocab_size = PhoneVocab(corpus.phone_set_size).size();
  model.validate();
  if (epochs < 1 || batch_size < 1 || warmup_epochs < 1) {
    throw std::invalid_argument("config error: epochs, batch_size, warmup_epochs must be >= 1");
  }
  if (checkpoint_average_n < 1 || checkpoint_average_n > epochs) {
    throw std::invalid_argument("config error: checkpoint_average_n outside [1, epochs]");
  }
  if (train_fraction <= 0.0 || train_fraction >= 1.0) {
    throw std::invalid_argument("config error: train_fraction outside (0, 1)");
  }
  if (eval.n_per_cell < 1 || eval.snrs.empty() || eval.conditions.empty() ||
      eval.kw_words.empty()) {
    throw std::invalid_argument("config error: empty eval grid");
  }
}

namespace {

json corpus_to_json(const SyntheticCorpusConfig& c) {
  return json{{"n_speakers", c.n_speakers},
              {"n_utterances", c.n_utterances},
              {"phone_set_size", c.phone_set_size},
              {"lexicon_size", c.lexicon_size},
              {"words_per_utt", {c.words_per_utt_min, c.words_per_utt_max}},
              {"phones_per_word", {c.phones_per_word_min, c.phones_per_word_max}},
              {"phone_dur", {c.phone_dur_min, c.phone_dur_max}},
              {"signature_strength", c.signature_strength},
              {"noise_level", c.noise_level},
              {"feat_dim", c.feat_dim},
              {"seed", c.seed}};
}

SyntheticCorpusConfig corpus_from_json(const json& j) {
  SyntheticCorpusConfig c;
  c.n_speakers = j.value("n_speakers", c.n_speakers);
  c.n_utterances = j.value("n_utterances", c.n_utterances);
  c.phone_set_size = j.value("phone_set_size", c.phone_set_size);
  c.lexicon_size = j.value("lexicon_size", c.lexicon_size);
  if (j.contains("words_per_utt")) {
    c.words_per_utt_min = j["words_per_utt"][0];
    c.words_per_utt_max = j["words_per_utt"][1];
  }
  if (j.contains("phones_per_word")) {
    c.phones_per_word_min = j["phones_per_word"][0];
    c.phones_per_word_max = j["phones_per_word"][1];
  }
  if (j.contains("phone_dur")) {
    c.phone_dur_min = j["phone_dur"][0];
    c.phone_dur_max = j["phone_dur"][1];
  }
  c.signature_strength = j.value("signature_strength", c.signature_strength);
  c.noise_level = j.value("noise_level", c.noise_level);
  c.feat_dim = j.value("feat_dim", c.feat_dim);
  c.seed = j.value("seed", c.seed);
  return c;
}

json grid_to_json(const EvalGrid& g) {
  return json{{"snrs", g.snrs},          {"conditions", g.conditions},
              {"kw_words", g.kw_words},  {"pivots", g.pivots},
              {"n_per_cell", g.n_per_cell}, {"seed", g.seed}};
}

EvalGrid grid_from_json(const json& j) {
  EvalGrid g;
  if (j.contains("snrs")) g.snrs = j["snrs"].get<std::vector<double>>();
  if (j.contains("conditions")) g.conditions = j["conditions"].get<std::vector<std::string>>();
  if (j.contains("kw_words")) g.kw_words = j["kw_words"].get<std::vector<int>>();
  g.pivots = j.value("pivots", g.pivots);
  g.n_per_cell = j.value("n_per_cell", g.n_per_cell);
  g.seed = j.value("seed", g.seed);
  return g;
}

json experiment_to_json(const ExperimentConfig& cfg) {
  return json{{"corpus", corpus_to_json(cfg.corpus)},
              {"model",
               {{"d_model", cfg.model.d_model},
                {"speech_blocks", cfg.model.speech_blocks},
                {"keyword_blocks", cfg.model.keyword_blocks},
                {"sa_heads", cfg.model.sa_heads},
                {"ca_heads", cfg.model.ca_heads},
                {"input_dim", cfg.model.input_dim},
                {"vocab_size", cfg.model.vocab_size},
                {"share_ca_kv", cfg.model.share_ca_kv},
                {"dropout", cfg.model.dropout}}},
              {"optim",
               {{"lr", cfg.optim.lr},
                {"beta1", cfg.optim.beta1},
                {"beta2", cfg.optim.beta2},
                {"eps", cfg.optim.eps}}},
              {"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"warmup_epochs", cfg.warmup_epochs},
              {"checkpoint_average_n", cfg.checkpoint_average_n},
              {"regime", regime_to_string(cfg.regime)},
              {"use_pivots", cfg.use_pivots},
              {"train_examples_per_epoch", cfg.train_examples_per_epoch},
              {"train_fraction", cfg.train_fraction},
              {"holdout_speakers", cfg.holdout_speakers},
              {"seed", cfg.seed},
              {"eval", grid_to_json(cfg.eval)}};
}

ExperimentConfig experiment_from_json(const json& j) {
  ExperimentConfig cfg = ExperimentConfig::desk_default();
  if (j.contains("corpus")) cfg.corpus = corpus_from_json(j["corpus"]);
  if (j.contains("model")) {
    const auto& m = j["model"];
    cfg.model.d_model = m.value("d_model", cfg.model.d_model);
    cfg.model.speech_blocks = m.value("speech_blocks", cfg.model.speech_blocks);
    cfg.model.keyword_blocks = m.value("keyword_blocks", cfg.model.keyword_blocks);
    cfg.model.sa_heads = m.value("sa_heads", cfg.model.sa_heads);
    cfg.model.ca_heads = m.value("ca_heads", cfg.model.ca_heads);
    cfg.model.input_dim = m.value("input_dim", 0);
    cfg.model.vocab_size = m.value("vocab_size", 0);
    cfg.model.share_ca_kv = m.value("share_ca_kv", cfg.model.share_ca_kv);
    cfg.model.dropout = m.value("dropout", cfg.model.dropout);
  }
  if (j.contains("optim")) {
    const auto& o = j["optim"];
    cfg.optim.lr = o.value("lr", cfg.optim.lr);
    cfg.optim.beta1 = o.value("beta1", cfg.optim.beta1);
    cfg.optim.beta2 = o.value("beta2", cfg.optim.beta2);
    cfg.optim.eps = o.value("eps", cfg.optim.eps);
  }
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.warmup_epochs = j.value("warmup_epochs", cfg.warmup_epochs);
  cfg.checkpoint_average_n = j.value("checkpoint_average_n", cfg.checkpoint_average_n);
  if (j.contains("regime")) cfg.regime = regime_from_string(j["regime"]);
  cfg.use_pivots = j.value("use_pivots", cfg.use_pivots);
  cfg.train_examples_per_epoch =
      j.value("train_examples_per_epoch", cfg.train_examples_per_epoch);
  cfg.train_fraction = j.value("train_fraction", cfg.train_fraction);
  cfg.holdout_speakers = j.value("holdout_speakers", cfg.holdout_speakers);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("eval")) cfg.eval = grid_from_json(j["eval"]);
  return cfg;
}

}  // namespace

std::string experiment_to_json_string(const ExperimentConfig& cfg) {
  return experiment_to_json(cfg).dump(2);
}

ExperimentConfig experiment_from_json_string(const std::string& text) {
  return experiment_from_json(json::parse(text));
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config error: cannot open " + path);
  return experiment_from_json(json::parse(is));
}

EvalGrid load_eval_grid(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config error: cannot open " + path);
  return grid_from_json(json::parse(is));
}

SplitPools split_corpus(const Corpus& corpus, double train_fraction, uint64_t seed,
                        bool by_speaker) {
  SplitPools pools;
  Rng rng(mix_seed(seed, 0x5117));
  if (by_speaker) {
    std::vector<int> speakers(static_cast<size_t>(corpus.cfg.n_speakers));
    std::iota(speakers.begin(), speakers.end(), 0);
    rng.shuffle(speakers);
    const int n_train =
        std::max(1, static_cast<int>(train_fraction * corpus.cfg.n_speakers));
    std::vector<bool> is_train(static_cast<size_t>(corpus.cfg.n_speakers), false);
    for (int i = 0; i < n_train; ++i) is_train[static_cast<size_t>(speakers[static_cast<size_t>(i)])] = true;
    for (const auto& u : corpus.utts) {
      (is_train[static_cast<size_t>(u.speaker_id)] ? pools.train : pools.test).push_back(u.id);
    }
  } else {
    std::vector<int> ids(corpus.utts.size());
    std::iota(ids.begin(), ids.end(), 0);
    rng.shuffle(ids);
    const size_t n_train = std::max<size_t>(
        1, static_cast<size_t>(train_fraction * static_cast<double>(ids.size())));
    pools.train.assign(ids.begin(), ids.begin() + static_cast<long>(n_train));
    pools.test.assign(ids.begin() + static_cast<long>(n_train), ids.end());
  }
  if (pools.test.empty() || pools.train.empty()) {
    throw std::invalid_argument("config error: degenerate train/test split");
  }
  return pools;
}

TrainingExample make_training_example(const Corpus& corpus,
                                      const std::vector<int>& pool, Regime regime,
                                      bool use_pivots, Rng& rng) {
  const PhoneVocab vocab(corpus.cfg.phone_set_size);
  ExampleRequest req;
  req.opt.kw_words = 0;
  req.opt.pivots = use_pivots;
  req.opt.dummy_keyword = !regime_uses_keyword(regime);
  switch (regime) {
    case Regime::clean:
      req.mode = MixMode::clean;
      break;
    case Regime::da_strong:
    case Regime::tc_strong:
      req.mode = MixMode::mix;
      req.policy = WeightPolicy::snr;
      req.snr_lo = 3.0;
      req.snr_hi = 9.0;
      break;
    case Regime::da_weak:
    case Regime::tc_weak:
      req.mode = MixMode::mix;
      req.policy = WeightPolicy::snr;
      req.snr_lo = -9.0;
      req.snr_hi = -3.0;
      break;
    case Regime::tc_full:
      req.mode = MixMode::mix;
      req.policy = WeightPolicy::snr;
      if (rng.uniform() < 0.5) {
        req.snr_lo = 3.0;
        req.snr_hi = 9.0;
      } else {
        req.snr_lo = -9.0;
        req.snr_hi = -3.0;
      }
      break;
  }
  return build_example(corpus, pool, req, vocab, rng);
}

TensorPtr features_to_input(const FeatureMatrix& feat) {
  const FeatureMatrix pipelined = subsample(splice(feat));
  return Tensor::from_values({pipelined.T, pipelined.F}, pipelined.data);
}

TrainResult train(const ExperimentConfig& cfg_in, const std::string& out_dir,
                  std::ostream* log) {
  ExperimentConfig cfg = cfg_in;
  cfg.finalize();
  fs::create_directories(out_dir);

  const Corpus corpus = generate_corpus(cfg.corpus);
  const PhoneVocab vocab(cfg.corpus.phone_set_size);
  const SplitPools pools =
      split_corpus(corpus, cfg.train_fraction, cfg.seed, cfg.holdout_speakers);

  Model model(cfg.model, mix_seed(cfg.seed, 0xa11ce));
  AdamState adam;
  adam.beta1 = cfg.optim.beta1;
  adam.beta2 = cfg.optim.beta2;
  adam.eps = cfg.optim.eps;
  adam.base_lr = cfg.optim.lr;
  adam.init(model.params());
  const LRSchedule schedule{cfg.optim.lr, cfg.warmup_epochs};

  {
    std::ofstream os(fs::path(out_dir) / "config.json");
    json j = json::parse(experiment_to_json_string(cfg));
    j["param_count"] = model.count_parameters();
    os << j.dump(2) << "\n";
  }
  if (log) {
    *log << "training " << regime_to_string(cfg.regime) << ", "
         << model.count_parameters() << " parameters\n";
  }

  TrainResult result;
  std::ofstream train_log(fs::path(out_dir) / "train_log.jsonl");
  Rng dropout_rng(mix_seed(cfg.seed, 0xd20));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(schedule, epoch);
    double loss_sum = 0.0;
    int loss_count = 0;
    int index = 0;
    while (index < cfg.train_examples_per_epoch) {
      const int batch =
          std::min(cfg.batch_size, cfg.train_examples_per_epoch - index);
      model.params().zero_grad();
      double batch_loss = 0.0;
      int batch_items = 0;
      for (int b = 0; b < batch; ++b, ++index) {
        Rng ex_rng(mix_seed(cfg.seed, 0x70000000ULL +
                                          static_cast<uint64_t>(epoch) * 100000 +
                                          static_cast<uint64_t>(index)));
        const TrainingExample ex =
            make_training_example(corpus, pools.train, cfg.regime, cfg.use_pivots, ex_rng);
        try {
          const TensorPtr input = features_to_input(ex.features);
          const TensorPtr memory = model.encode_keyword(
              ex.keyword, nullptr, cfg.model.dropout > 0.0 ? &dropout_rng : nullptr);
          const TensorPtr logits = model.encode_speech(
              input, memory, nullptr, cfg.model.dropout > 0.0 ? &dropout_rng : nullptr);
          const TensorPtr loss =
              ctc_loss_node(log_softmax_rows(logits), ex.target, vocab.blank());
          if (!std::isfinite(loss->item())) {
            throw std::runtime_error("training error: loss diverged (non-finite) at epoch " +
                                     std::to_string(epoch));
          }
          batch_loss += loss->item();
          batch_items += 1;
          backward(loss, 1.0 / batch);
        } catch (const std::invalid_argument& e) {
          // infeasible alignments are skipped with a count; anything else
          // is a real error
          if (std::string(e.what()).find("infeasible") == std::string::npos) throw;
          result.skipped_infeasible += 1;
        }
      }
      if (batch_items > 0) {
        adam_step(model.params(), adam, lr);
        loss_sum += batch_loss;
        loss_count += batch_items;
      }
    }
    const double epoch_loss = loss_count ? loss_sum / loss_count : 0.0;
    result.epoch_loss.push_back(epoch_loss);

    char name[48];
    std::snprintf(name, sizeof(name), "ckpt_epoch_%03d.ckpt", epoch);
    const std::string ckpt_path = (fs::path(out_dir) / name).string();
    save_checkpoint(ckpt_path, model.params());
    result.checkpoints.push_back(ckpt_path);

    train_log << json{{"epoch", epoch},
                      {"lr", lr},
                      {"loss", epoch_loss},
                      {"skipped", result.skipped_infeasible}}
                     .dump()
              << "\n";
    train_log.flush();
    if (log) {
      *log << "epoch " << epoch << "  lr " << lr << "  loss " << epoch_loss << "\n";
      log->flush();
    }
  }
  return result;
}

const ResultRow* ResultsTable::find(const std::string& condition, double snr_db,
                                    int kw_words) const {
  const ResultRow* hit = nullptr;
  for (const auto& row : rows) {
    if (row.condition != condition || std::abs(row.snr_db - snr_db) > 1e-9) continue;
    if (kw_words >= 0 && row.kw_words != kw_words) continue;
    if (!hit || (kw_words < 0 && row.kw_words == 3)) hit = &row;
  }
  return hit;
}

namespace {

struct CellSpec {
  std::string condition;
  double snr = 0.0;
  int kw_words = 3;
};

ExampleRequest request_for_condition(const std::string& condition, double snr,
                                     int kw_words, bool dummy, bool pivots) {
  ExampleRequest req;
  if (condition == "A+B") {
    req.mode = MixMode::mix;
    req.pairing = Pairing::cross_speaker;
  } else if (condition == "A+A'") {
    req.mode = MixMode::mix;
    req.pairing = Pairing::same_speaker;
  } else if (condition == "A|B") {
    req.mode = MixMode::concat;
    req.pairing = Pairing::cross_speaker;
  } else if (condition == "A|A'") {
    req.mode = MixMode::concat;
    req.pairing = Pairing::same_speaker;
  } else {
    throw std::invalid_argument("config error: unknown condition " + condition);
  }
  req.policy = WeightPolicy::snr;
  req.snr_lo = req.snr_hi = snr;
  req.target_first = true;
  req.opt.kw_words = kw_words;
  req.opt.pivots = pivots;
  req.opt.dummy_keyword = dummy;
  return req;
}

template <typename LogitsFn>
ResultsTable evaluate_impl(const Corpus& corpus, const std::vector<int>& pool,
                           const EvalGrid& grid, bool dummy_keyword, bool pivots,
                           const std::string& model_name, LogitsFn&& logits_fn) {
  if (grid.snrs.empty() || grid.conditions.empty() || grid.kw_words.empty() ||
      grid.n_per_cell < 1) {
    throw std::invalid_argument("config error: empty eval grid");
  }
  const PhoneVocab vocab(corpus.cfg.phone_set_size);
  ResultsTable table;
  uint64_t cell_index = 0;
  for (const auto& condition : grid.conditions) {
    for (const double snr : grid.snrs) {
      for (const int kw : grid.kw_words) {
        const ExampleRequest req =
            request_for_condition(condition, snr, kw, dummy_keyword, pivots);
        ResultRow row;
        row.model = model_name;
        row.condition = condition;
        row.snr_db = snr;
        row.kw_words = dummy_keyword ? 0 : kw;
        row.pivots = pivots && !dummy_keyword;
        for (int i = 0; i < grid.n_per_cell; ++i) {
          Rng ex_rng(mix_seed(grid.seed, cell_index * 1000003ULL +
                                             static_cast<uint64_t>(i)));
          const TrainingExample ex = build_example(corpus, pool, req, vocab, ex_rng);
          const TensorPtr log_probs = logits_fn(ex);
          const std::vector<int> hyp =
              strip_pivots(greedy_decode(*log_probs, vocab.blank()), vocab);
          const std::vector<int> ref = strip_pivots(ex.target, vocab);
          const EditCounts counts = edit_counts(hyp, ref);
          row.substitutions += counts.substitutions;
          row.deletions += counts.deletions;
          row.insertions += counts.insertions;
          row.ref_len += counts.ref_len;
          row.n_utts += 1;
        }
        row.per = 100.0 *
                  static_cast<double>(row.substitutions + row.deletions + row.insertions) /
                  static_cast<double>(row.ref_len);
        table.rows.push_back(std::move(row));
        cell_index += 1;
      }
    }
  }
  return table;
}

}  // namespace

ResultsTable evaluate(const Model& model, const Corpus& corpus,
                      const std::vector<int>& pool, const EvalGrid& grid,
                      Regime regime, bool use_pivots, const std::string& model_name) {
  const bool dummy = !regime_uses_keyword(regime);
  const bool pivots = use_pivots && grid.pivots && !dummy;
  return evaluate_impl(corpus, pool, grid, dummy, pivots, model_name,
                       [&](const TrainingExample& ex) {
                         const TensorPtr input = features_to_input(ex.features);
                         const TensorPtr memory = model.encode_keyword(ex.keyword);
                         return log_softmax_rows(model.encode_speech(input, memory));
                       });
}

TensorPtr oracle_logits(const TrainingExample& ex, const Corpus& corpus,
                        const PhoneVocab& vocab, int subsample_factor) {
  const Utterance& tgt = corpus.utts.at(static_cast<size_t>(ex.utt_target));
  const int t_out = pipeline_frames(ex.features.T, subsample_factor);

  // frame budget per label token at the subsampled rate
  auto frames_in = [&](int lo, int hi) {
    // multiples of subsample_factor in [lo, hi)
    if (hi <= lo) return 0;
    const int first = (lo + subsample_factor - 1) / subsample_factor;
    const int last = (hi - 1) / subsample_factor;
    return std::max(0, last - first + 1);
  };

  struct Run {
    int token;
    int count;
  };
  std::vector<Run> runs;
  const int offset = ex.target_offset;
  runs.push_back({vocab.blank(), frames_in(0, offset + tgt.alignment.front().start_frame)});
  for (size_t p = 0; p < tgt.phones.size(); ++p) {
    runs.push_back({vocab.token_of_phone(tgt.phones[p]),
                    frames_in(offset + tgt.alignment[p].start_frame,
                              offset + tgt.alignment[p].end_frame)});
  }
  runs.push_back({vocab.blank(),
                  frames_in(offset + tgt.alignment.back().end_frame,
                            ex.features.T)});

  if (ex.pivots) {
    // phone index i lives at runs[1 + i]; steal one frame for each marker
    const int head = 1 + ex.kw_phone_begin;
    const int tail = 1 + ex.kw_phone_end - 1;
    runs[static_cast<size_t>(head)].count -= 1;
    runs.insert(runs.begin() + head, {vocab.iph(), 1});
    // head insertion shifted indices past it by one
    runs[static_cast<size_t>(tail + 1)].count -= 1;
    runs.insert(runs.begin() + tail + 2, {vocab.ipt(), 1});
  }

  // a blank must separate equal adjacent labels
  for (size_t i = 1; i < runs.size(); ++i) {
    if (runs[i].token != vocab.blank() && runs[i].token == runs[i - 1].token) {
      runs[i].count -= 1;
      runs.insert(runs.begin() + static_cast<long>(i), {vocab.blank(), 1});
      ++i;
    }
  }

  std::vector<int> labels;
  labels.reserve(static_cast<size_t>(t_out));
  for (const auto& run : runs) {
    if (run.token != vocab.blank() && run.count < 1) {
      throw std::runtime_error("oracle_logits: degenerate input, phone run too short "
                               "to host the label path");
    }
    for (int c = 0; c < run.count; ++c) labels.push_back(run.token);
  }
  if (static_cast<int>(labels.size()) != t_out) {
    throw std::runtime_error("oracle_logits: internal frame accounting mismatch");
  }

  auto logits = Tensor::create({t_out, vocab.size()});
  for (int t = 0; t < t_out; ++t) {
    logits->at(t, labels[static_cast<size_t>(t)]) = 12.0;
  }
  return logits;
}

ResultsTable evaluate_oracle(const Corpus& corpus, const std::vector<int>& pool,
                             const EvalGrid& grid) {
  const PhoneVocab vocab(corpus.cfg.phone_set_size);
  return evaluate_impl(corpus, pool, grid, false, grid.pivots, "oracle",
                       [&](const TrainingExample& ex) {
                         return log_softmax_rows(oracle_logits(ex, corpus, vocab));
                       });
}

void write_results_csv(const std::string& path, const ResultsTable& table) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("results: cannot open " + path);
  os << "# PER scoring: pivot tokens stripped from hyp and ref before alignment\n";
  os << "condition,snr_db,n_utts,substitutions,deletions,insertions,ref_len,per,"
        "kw_words,pivots,model\n";
  char line[256];
  for (const auto& r : table.rows) {
    std::snprintf(line, sizeof(line), "%s,%g,%d,%ld,%ld,%ld,%ld,%.6f,%d,%d,%s\n",
                  r.condition.c_str(), r.snr_db, r.n_utts, r.substitutions,
                  r.deletions, r.insertions, r.ref_len, r.per, r.kw_words,
                  r.pivots ? 1 : 0, r.model.c_str());
    os << line;
  }
}

ResultsTable read_results_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("results: cannot open " + path);
  ResultsTable table;
  std::string line;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 8) {
      throw std::runtime_error("results: malformed row in " + path);
    }
    ResultRow r;
    r.condition = fields[0];
    r.snr_db = std::stod(fields[1]);
    r.n_utts = std::stoi(fields[2]);
    r.substitutions = std::stol(fields[3]);
    r.deletions = std::stol(fields[4]);
    r.insertions = std::stol(fields[5]);
    r.ref_len = std::stol(fields[6]);
    r.per = std::stod(fields[7]);
    r.kw_words = fields.size() > 8 ? std::stoi(fields[8]) : 0;
    r.pivots = fields.size() > 9 ? fields[9] == "1" : false;
    r.model = fields.size() > 10 ? fields[10] : "";
    table.rows.push_back(std::move(r));
  }
  return table;
}

std::string format_results_text(const ResultsTable& table) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-12s %-6s %6s %4s %6s %8s\n", "model",
                "cond", "snr", "kw", "n", "per");
  os << line;
  for (const auto& r : table.rows) {
    std::snprintf(line, sizeof(line), "%-12s %-6s %6.1f %4d %6d %8.2f\n",
                  r.model.c_str(), r.condition.c_str(), r.snr_db, r.kw_words,
                  r.n_utts, r.per);
    os << line;
  }
  return os.str();
}

namespace {

void add_assertion(TrendReport& report, const std::string& name,
                   const std::string& detail, double lhs, double rhs, bool pass) {
  report.items.push_back({name, detail, lhs, rhs, rhs - lhs, pass});
  if (!pass) report.all_pass = false;
}

}  // namespace

TrendReport compare_models(const ResultsTable& baseline, const ResultsTable& tc_full,
                           const ResultsTable* nopivot) {
  TrendReport report;

  const ResultRow* base_ab = baseline.find("A+B", 0.0);
  const ResultRow* tc_ab = tc_full.find("A+B", 0.0, 3);
  if (!tc_ab) tc_ab = tc_full.find("A+B", 0.0);
  if (base_ab && tc_ab) {
    add_assertion(report, "keyword_bias_0db",
                  "tc-full PER <= 0.6 x baseline PER at 0 dB on A+B", tc_ab->per,
                  0.6 * base_ab->per, tc_ab->per <= 0.6 * base_ab->per);
  }

  const ResultRow* tc_aa = tc_full.find("A+A'", 0.0);
  if (tc_aa && tc_ab) {
    add_assertion(report, "same_speaker_mix_0db",
                  "PER(A+A') > PER(A+B) at 0 dB", tc_aa->per, tc_ab->per,
                  tc_aa->per > tc_ab->per);
  }
  const ResultRow* tc_cb = tc_full.find("A|B", 0.0);
  const ResultRow* tc_ca = tc_full.find("A|A'", 0.0);
  if (tc_cb && tc_ca) {
    add_assertion(report, "same_speaker_concat_0db",
                  "PER(A|A') > PER(A|B) at 0 dB", tc_ca->per, tc_cb->per,
                  tc_ca->per > tc_cb->per);
  }

  for (int k = 1; k <= 2; ++k) {
    const ResultRow* shorter = tc_full.find("A+B", 0.0, k);
    const ResultRow* longer = tc_full.find("A+B", 0.0, k + 1);
    if (shorter && longer) {
      add_assertion(report, "kw_len_" + std::to_string(k) + "_vs_" + std::to_string(k + 1),
                    "PER(" + std::to_string(k) + "-word) >= PER(" +
                        std::to_string(k + 1) + "-word) at 0 dB",
                    shorter->per, longer->per, shorter->per >= longer->per);
    }
  }

  if (nopivot) {
    for (const auto& row : tc_full.rows) {
      if (row.condition != "A+B" || row.kw_words != 3) continue;
      const ResultRow* np = nopivot->find("A+B", row.snr_db, 3);
      if (!np) np = nopivot->find("A+B", row.snr_db);
      if (!np) continue;
      char name[48];
      std::snprintf(name, sizeof(name), "pivot_%+gdb", row.snr_db);
      add_assertion(report, name, "no-pivot PER >= with-pivot PER", np->per,
                    row.per, np->per >= row.per);
    }
  }
  return report;
}

void print_report(const TrendReport& report, std::ostream& os) {
  for (const auto& a : report.items) {
    char line[256];
    std::snprintf(line, sizeof(line), "[%s] %-24s lhs=%8.3f rhs=%8.3f margin=%8.3f  %s\n",
                  a.pass ? "PASS" : "FAIL", a.name.c_str(), a.lhs, a.rhs, a.margin,
                  a.detail.c_str());
    os << line;
  }
  os << (report.all_pass ? "all trend assertions passed\n"
                         : "trend assertions FAILED\n");
}

}  // namespace tcasr
