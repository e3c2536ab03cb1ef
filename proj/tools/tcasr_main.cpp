#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tcasr/harness.hpp"

namespace fs = std::filesystem;
using namespace tcasr;

namespace {

SyntheticCorpusConfig corpus_config_from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config error: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(is);
  // accept either a bare corpus config or a full experiment config
  const std::string text = j.contains("corpus") ? j.dump() : nlohmann::json{{"corpus", j}}.dump();
  return experiment_from_json_string(text).corpus;
}

int run_gen_corpus(const std::string& config_path, const std::string& out_dir) {
  SyntheticCorpusConfig cfg =
      config_path.empty() ? ExperimentConfig::desk_default().corpus
                          : corpus_config_from_file(config_path);
  const Corpus corpus = generate_corpus(cfg);
  save_corpus(corpus, out_dir);
  std::cout << "wrote " << corpus.utts.size() << " utterances to " << out_dir
            << "/manifest.json\n";
  return 0;
}

int run_prepare(const std::string& corpus_path, const std::string& mode,
                const std::string& pairing, double snr_db, bool have_snr,
                int kw_words, bool no_pivot, int count, uint64_t seed,
                const std::string& out_path) {
  const Corpus corpus = load_corpus(corpus_path);
  const PhoneVocab vocab(corpus.cfg.phone_set_size);
  std::vector<int> pool(corpus.utts.size());
  for (size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);

  ExampleRequest req;
  if (mode == "mix") {
    req.mode = MixMode::mix;
    req.policy = WeightPolicy::uniform_0109;
  } else if (mode == "snr") {
    req.mode = MixMode::mix;
    req.policy = WeightPolicy::snr;
    if (!have_snr) throw std::runtime_error("config error: --mode snr needs --snr-db");
  } else if (mode == "concat") {
    req.mode = MixMode::concat;
    req.policy = have_snr ? WeightPolicy::snr : WeightPolicy::none;
  } else {
    throw std::runtime_error("config error: unknown --mode " + mode);
  }
  req.pairing = pairing == "same" ? Pairing::same_speaker : Pairing::cross_speaker;
  req.snr_lo = req.snr_hi = snr_db;
  req.opt.kw_words = kw_words;
  req.opt.pivots = !no_pivot;

  std::vector<TrainingExample> examples;
  examples.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(i)));
    examples.push_back(build_example(corpus, pool, req, vocab, rng));
  }
  save_examples_jsonl(out_path, examples);
  std::cout << "wrote " << examples.size() << " examples to " << out_path << "\n";
  return 0;
}

int run_train(const std::string& config_path, const std::string& regime,
              int64_t seed, const std::string& out_dir, int epochs) {
  ExperimentConfig cfg = config_path.empty() ? ExperimentConfig::desk_default()
                                             : load_experiment_config(config_path);
  if (!regime.empty()) {
    cfg.regime = regime_from_string(regime);
    if (regime == "tc_full_nopivot") cfg.use_pivots = false;
  }
  if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
  if (epochs > 0) cfg.epochs = epochs;
  const TrainResult result = train(cfg, out_dir, &std::cout);
  std::cout << "final epoch loss " << result.epoch_loss.back() << ", "
            << result.checkpoints.size() << " checkpoints in " << out_dir << "\n";
  return 0;
}

int run_eval(const std::string& ckpt_dir, const std::string& grid_path, int avg_last,
             const std::string& csv_path, const std::string& attn_path) {
  ExperimentConfig cfg = load_experiment_config((fs::path(ckpt_dir) / "config.json").string());
  cfg.finalize();
  const EvalGrid grid = grid_path.empty() ? cfg.eval : load_eval_grid(grid_path);

  std::vector<std::string> ckpts;
  for (const auto& entry : fs::directory_iterator(ckpt_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("ckpt_epoch_", 0) == 0) ckpts.push_back(entry.path().string());
  }
  std::sort(ckpts.begin(), ckpts.end());
  if (ckpts.empty()) throw std::runtime_error("checkpoint error: none found in " + ckpt_dir);
  const int n = avg_last > 0 ? std::min<int>(avg_last, static_cast<int>(ckpts.size()))
                             : static_cast<int>(ckpts.size());
  const std::vector<std::string> last(ckpts.end() - n, ckpts.end());

  Model model(cfg.model, mix_seed(cfg.seed, 0xa11ce));
  apply_records(average_checkpoints(last), model.params());

  const Corpus corpus = generate_corpus(cfg.corpus);
  const SplitPools pools =
      split_corpus(corpus, cfg.train_fraction, cfg.seed, cfg.holdout_speakers);
  const std::string model_name = regime_to_string(cfg.regime) +
                                 (cfg.use_pivots || !regime_uses_keyword(cfg.regime)
                                      ? ""
                                      : "_nopivot");
  const ResultsTable table =
      evaluate(model, corpus, pools.test, grid, cfg.regime, cfg.use_pivots, model_name);
  std::cout << format_results_text(table);
  if (!csv_path.empty()) {
    write_results_csv(csv_path, table);
    std::cout << "wrote " << csv_path << "\n";
  }

  if (!attn_path.empty()) {
    const PhoneVocab vocab(cfg.corpus.phone_set_size);
    Rng rng(mix_seed(grid.seed, 0xa770));
    const ExampleRequest req = [&] {
      ExampleRequest r;
      r.mode = MixMode::mix;
      r.policy = WeightPolicy::snr;
      r.snr_lo = r.snr_hi = grid.snrs.front();
      r.opt.kw_words = grid.kw_words.front();
      r.opt.pivots = cfg.use_pivots;
      r.opt.dummy_keyword = !regime_uses_keyword(cfg.regime);
      return r;
    }();
    const TrainingExample ex = build_example(corpus, pools.test, req, vocab, rng);
    AttnRecorder rec;
    const TensorPtr memory = model.encode_keyword(ex.keyword, &rec);
    model.encode_speech(features_to_input(ex.features), memory, &rec);
    write_attention_maps(attn_path, rec.maps, /*cross_only=*/true);
    std::cout << "wrote cross-attention maps to " << attn_path << "\n";
  }
  return 0;
}

int run_compare(const std::string& a_path, const std::string& b_path,
                const std::string& nopivot_path) {
  const ResultsTable a = read_results_csv(a_path);
  const ResultsTable b = read_results_csv(b_path);
  ResultsTable np;
  const bool have_np = !nopivot_path.empty();
  if (have_np) np = read_results_csv(nopivot_path);
  const TrendReport report = compare_models(a, b, have_np ? &np : nullptr);
  print_report(report, std::cout);
  return report.all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"target-content ASR: keyword-biased transformer-CTC pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_path, corpus_path, grid_path, csv_path, attn_path;
  std::string regime, mode = "snr", pairing = "cross";
  std::string a_path, b_path, nopivot_path;
  double snr_db = 0.0;
  int kw_words = 0, count = 100, epochs = 0, avg_last = 0;
  int64_t seed = -1;
  uint64_t useed = 1;

  auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic aligned corpus");
  gen->add_option("--config", config_path, "corpus config JSON");
  gen->add_option("--out", out_path, "output directory")->required();

  auto* prep = app.add_subcommand("prepare", "build a mixed/concatenated example set");
  prep->add_option("--corpus", corpus_path, "corpus manifest.json")->required();
  prep->add_option("--mode", mode, "mix | snr | concat");
  prep->add_option("--pairing", pairing, "cross | same");
  auto* snr_opt = prep->add_option("--snr-db", snr_db, "target-to-interference SNR");
  prep->add_option("--kw-words", kw_words, "keyword length in words (0: sample 2-4)");
  auto* nopivot_flag = prep->add_flag("--no-pivot", "do not insert pivot tokens");
  prep->add_option("--n", count, "number of examples");
  prep->add_option("--seed", useed, "example sampling seed");
  prep->add_option("--out", out_path, "output JSONL path")->required();

  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--config", config_path, "experiment config JSON");
  tr->add_option("--regime", regime, "clean|da_strong|da_weak|tc_strong|tc_weak|tc_full");
  tr->add_option("--seed", seed, "experiment seed");
  tr->add_option("--epochs", epochs, "override epoch count");
  tr->add_option("--out", out_path, "checkpoint directory")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint directory on a grid");
  ev->add_option("--ckpt", corpus_path, "checkpoint directory")->required();
  ev->add_option("--grid", grid_path, "eval grid JSON");
  ev->add_option("--avg-last", avg_last, "average the last n checkpoints");
  ev->add_option("--csv", csv_path, "write results CSV here");
  ev->add_option("--attn-dump", attn_path, "dump cross-attention maps for one example");

  auto* cmp = app.add_subcommand("compare", "run trend assertions over result CSVs");
  cmp->add_option("--a", a_path, "baseline results CSV")->required();
  cmp->add_option("--b", b_path, "tc-full results CSV")->required();
  cmp->add_option("--no-pivot", nopivot_path, "pivot-ablated results CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return run_gen_corpus(config_path, out_path);
    if (prep->parsed()) {
      return run_prepare(corpus_path, mode, pairing, snr_db, snr_opt->count() > 0,
                         kw_words, nopivot_flag->count() > 0, count, useed, out_path);
    }
    if (tr->parsed()) return run_train(config_path, regime, seed, out_path, epochs);
    if (ev->parsed()) return run_eval(corpus_path, grid_path, avg_last, csv_path, attn_path);
    if (cmp->parsed()) return run_compare(a_path, b_path, nopivot_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
