#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tcasr/ctc.hpp"
#include "tcasr/frontend.hpp"
#include "tcasr/rng.hpp"

namespace tcasr {

// Stand-in for an aligned speech corpus: each speaker has a fixed random
// signature vector, each phone a fixed template vector, and an utterance
// frame is template + signature + i.i.d. noise. Words come from a shared
// lexicon so the same keyword can occur in more than one utterance.
struct SyntheticCorpusConfig {
  int n_speakers = 8;
  int n_utterances = 200;
  int phone_set_size = 16;
  int lexicon_size = 40;
  int words_per_utt_min = 3;
  int words_per_utt_max = 6;
  int phones_per_word_min = 2;
  int phones_per_word_max = 4;
  int phone_dur_min = 10;  // frames
  int phone_dur_max = 16;
  double signature_strength = 1.0;
  double noise_level = 0.1;
  int feat_dim = 40;
  uint64_t seed = 1;

  void validate() const;
};

struct PhoneSpan {
  int start_frame = 0;
  int end_frame = 0;  // exclusive
};

struct WordSpan {
  int word_id = 0;
  int phone_begin = 0;
  int phone_end = 0;  // exclusive phone index range
};

struct Utterance {
  int id = 0;
  int speaker_id = 0;
  std::vector<int> phones;  // raw phone indices in [0, phone_set_size)
  std::vector<PhoneSpan> alignment;
  std::vector<WordSpan> words;
  FeatureMatrix features;
};

struct Corpus {
  SyntheticCorpusConfig cfg;
  std::vector<std::vector<int>> lexicon;  // word id -> phone sequence
  std::vector<Utterance> utts;
};

Corpus generate_corpus(const SyntheticCorpusConfig& cfg);

enum class MixMode { clean, mix, concat };
enum class Pairing { cross_speaker, same_speaker };
enum class WeightPolicy { uniform_0109, fixed_w, snr, none };

struct MixSpec {
  MixMode mode = MixMode::mix;
  Pairing pairing = Pairing::cross_speaker;
  WeightPolicy policy = WeightPolicy::uniform_0109;
  double w1 = 0.0;
  double w2 = 0.0;
  double snr_db = 0.0;
  bool target_first = true;
};

struct TrainingExample {
  FeatureMatrix features;    // mixed or concatenated stream, pre-splice
  std::vector<int> keyword;  // token ids (pivot-wrapped unless disabled)
  std::vector<int> target;   // token ids
  MixSpec spec;
  int utt_target = -1;
  int utt_interf = -1;
  int target_offset = 0;  // frame where the target stream begins
  int target_frames = 0;
  int kw_words = 0;
  bool pivots = true;
  int kw_phone_begin = 0;  // phone-index span of the keyword in the target utterance
  int kw_phone_end = 0;
};

struct ExampleOptions {
  int kw_words = 0;           // 0: sample uniformly from {2,3,4}
  bool pivots = true;
  bool dummy_keyword = false;  // constant-token keyword, no pivots (clean/da regimes)
};

struct KeywordSpan {
  std::vector<int> phones;  // raw phone indices
  int word_begin = 0;
  int word_end = 0;
  int phone_begin = 0;
  int phone_end = 0;
};

// Uniformly random contiguous n-word span of the utterance.
KeywordSpan select_keyword(const Utterance& u, int n_words, Rng& rng);

struct PivotedPair {
  std::vector<int> keyword;
  std::vector<int> target;
};

// Wraps the keyword in <IPH>/<IPT> and inserts the same tokens around the
// keyword span [span_begin, span_end) of the target. Ablation mode
// (enabled = false) returns both sequences unchanged.
PivotedPair add_pivots(const std::vector<int>& keyword, const std::vector<int>& target,
                       int span_begin, int span_end, const PhoneVocab& vocab,
                       bool enabled = true);

double mean_frame_energy(const FeatureMatrix& f);

// Single clean utterance, no interference.
TrainingExample clean_example(const Utterance& u, const PhoneVocab& vocab,
                              const ExampleOptions& opt, Rng& rng);

// w1, w2 ~ Uniform[0.1, 0.9], mixed = w1*U1 + w2*U2 framewise with tail
// zero-padding; the keyword comes from u1 or u2 with probability 1/2.
TrainingExample mix_weighted(const Utterance& u1, const Utterance& u2,
                             const PhoneVocab& vocab, const ExampleOptions& opt,
                             Rng& rng);
// Same, with fixed weights.
TrainingExample mix_fixed(const Utterance& u1, const Utterance& u2, double w1,
                          double w2, const PhoneVocab& vocab,
                          const ExampleOptions& opt, Rng& rng);

// Interference is tiled to the target length, then gain-scaled so the
// achieved target-to-interference ratio equals snr_db exactly.
TrainingExample mix_snr(const Utterance& target, const Utterance& interf,
                        double snr_db, const PhoneVocab& vocab,
                        const ExampleOptions& opt, Rng& rng);

// Features stacked in time; the label and keyword always come from a.
// A finite snr_db scales b to the requested relative energy first.
TrainingExample concat_pair(const Utterance& a, const Utterance& b,
                            bool target_first, double snr_db,
                            const PhoneVocab& vocab, const ExampleOptions& opt,
                            Rng& rng);

int pipeline_frames(int T, int subsample_factor = 3);
bool ctc_feasible(const TrainingExample& ex, int subsample_factor = 3);

struct ExampleRequest {
  MixMode mode = MixMode::mix;
  Pairing pairing = Pairing::cross_speaker;
  WeightPolicy policy = WeightPolicy::snr;
  double snr_lo = 0.0;  // snr sampled uniformly in [snr_lo, snr_hi]
  double snr_hi = 0.0;
  bool target_first = true;
  ExampleOptions opt;
  int max_tries = 64;
};

// Draws utterances from pool per the pairing policy and builds one example,
// resampling until the CTC feasibility bound ceil(T/3) >= 2*len(target)+1
// holds.
TrainingExample build_example(const Corpus& corpus, const std::vector<int>& pool,
                              const ExampleRequest& req, const PhoneVocab& vocab,
                              Rng& rng);

// Corpus manifest: JSON listing per-utterance metadata and feature file
// paths (written under <dir>/feats/).
void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& manifest_path);

// Example-set manifest: one JSON descriptor per line; features are written
// next to the manifest.
void save_examples_jsonl(const std::string& path,
                         const std::vector<TrainingExample>& examples);

}  // namespace tcasr
