#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tcasr/checkpoint.hpp"
#include "tcasr/corpus.hpp"
#include "tcasr/model.hpp"

namespace tcasr {

// Training regimes. da_* replace the keyword with a constant dummy token
// so the cross-attention path carries no content information; they are the
// energy-bias baselines. Strong regimes mix the target at +3..+9 dB, weak
// at -9..-3 dB, full draws from the union.
enum class Regime { clean, da_strong, da_weak, tc_strong, tc_weak, tc_full };

Regime regime_from_string(const std::string& s);
std::string regime_to_string(Regime r);
bool regime_uses_keyword(Regime r);

struct OptimConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct EvalGrid {
  std::vector<double> snrs{-3.0, 0.0, 3.0};
  std::vector<std::string> conditions{"A+B", "A+A'", "A|B", "A|A'"};
  std::vector<int> kw_words{3};
  bool pivots = true;
  int n_per_cell = 100;
  uint64_t seed = 1234;
};

struct ExperimentConfig {
  SyntheticCorpusConfig corpus;
  ModelConfig model;
  OptimConfig optim;
  int epochs = 30;
  int batch_size = 8;
  int warmup_epochs = 5;
  int checkpoint_average_n = 5;
  Regime regime = Regime::tc_full;
  bool use_pivots = true;  // false: pivot-ablated tc training
  int train_examples_per_epoch = 128;
  double train_fraction = 0.8;
  bool holdout_speakers = false;
  uint64_t seed = 7;
  EvalGrid eval;

  // Desk-scale defaults sized so the full trend suite runs in minutes on
  // one core. Paper-scale values stay reachable through config files.
  static ExperimentConfig desk_default();

  // Fills model.vocab_size and model.input_dim from the corpus config
  // when left at 0, then validates.
  void finalize();
};

std::string experiment_to_json_string(const ExperimentConfig& cfg);
ExperimentConfig experiment_from_json_string(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);
EvalGrid load_eval_grid(const std::string& path);

struct SplitPools {
  std::vector<int> train;
  std::vector<int> test;
};

// Deterministic utterance split; test examples never touch a training
// utterance. With by_speaker the split holds out whole speakers.
SplitPools split_corpus(const Corpus& corpus, double train_fraction, uint64_t seed,
                        bool by_speaker = false);

TrainingExample make_training_example(const Corpus& corpus,
                                      const std::vector<int>& pool, Regime regime,
                                      bool use_pivots, Rng& rng);

// splice [-2..2] then 3-frame subsample, as a graph constant
TensorPtr features_to_input(const FeatureMatrix& feat);

struct TrainResult {
  std::vector<std::string> checkpoints;
  std::vector<double> epoch_loss;
  int skipped_infeasible = 0;
};

// Minibatch Adam with linear warmup; one checkpoint per epoch plus a
// config.json echo next to them. Aborts with a diagnostic if the loss
// goes non-finite.
TrainResult train(const ExperimentConfig& cfg, const std::string& out_dir,
                  std::ostream* log = nullptr);

struct ResultRow {
  std::string model;
  std::string condition;
  double snr_db = 0.0;
  int kw_words = 0;
  bool pivots = false;
  int n_utts = 0;
  long substitutions = 0;
  long deletions = 0;
  long insertions = 0;
  long ref_len = 0;
  double per = 0.0;
};

struct ResultsTable {
  std::vector<ResultRow> rows;
  const ResultRow* find(const std::string& condition, double snr_db,
                        int kw_words = -1) const;
};

ResultsTable evaluate(const Model& model, const Corpus& corpus,
                      const std::vector<int>& pool, const EvalGrid& grid,
                      Regime regime, bool use_pivots, const std::string& model_name);

// Ground-truth logits built from the target utterance's alignment; decoding
// them reproduces the example's label sequence exactly.
TensorPtr oracle_logits(const TrainingExample& ex, const Corpus& corpus,
                        const PhoneVocab& vocab, int subsample_factor = 3);

ResultsTable evaluate_oracle(const Corpus& corpus, const std::vector<int>& pool,
                             const EvalGrid& grid);

void write_results_csv(const std::string& path, const ResultsTable& table);
ResultsTable read_results_csv(const std::string& path);
std::string format_results_text(const ResultsTable& table);

struct TrendAssertion {
  std::string name;
  std::string detail;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
  bool pass = false;
};

struct TrendReport {
  std::vector<TrendAssertion> items;
  bool all_pass = true;
};

// Trend assertions over result tables; assertions whose cells are missing
// are skipped. nopivot may be null.
TrendReport compare_models(const ResultsTable& baseline, const ResultsTable& tc_full,
                           const ResultsTable* nopivot);
void print_report(const TrendReport& report, std::ostream& os);

}  // namespace tcasr
