#include "tcasr/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tcasr {

void SyntheticCorpusConfig::validate() const {
  if (phone_set_size < 8) throw std::invalid_argument("corpus config error: phone_set_size < 8");
  if (n_speakers < 2) throw std::invalid_argument("corpus config error: n_speakers < 2");
  if (n_utterances < 2) throw std::invalid_argument("corpus config error: n_utterances < 2");
  if (lexicon_size < 2) throw std::invalid_argument("corpus config error: lexicon_size < 2");
  if (feat_dim < 1) throw std::invalid_argument("corpus config error: feat_dim < 1");
  auto range_ok = [](int lo, int hi) { return lo >= 1 && lo <= hi; };
  if (!range_ok(words_per_utt_min, words_per_utt_max) ||
      !range_ok(phones_per_word_min, phones_per_word_max) ||
      !range_ok(phone_dur_min, phone_dur_max)) {
    throw std::invalid_argument("corpus config error: degenerate range");
  }
  if (signature_strength < 0.0 || noise_level < 0.0) {
    throw std::invalid_argument("corpus config error: negative strength or noise");
  }
}

Corpus generate_corpus(const SyntheticCorpusConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int d = cfg.feat_dim;

  std::vector<std::vector<double>> templates(static_cast<size_t>(cfg.phone_set_size));
  for (auto& t : templates) {
    t.resize(static_cast<size_t>(d));
    for (double& x : t) x = rng.normal();
  }
  std::vector<std::vector<double>> signatures(static_cast<size_t>(cfg.n_speakers));
  for (auto& s : signatures) {
    s.resize(static_cast<size_t>(d));
    for (double& x : s) x = cfg.signature_strength * rng.normal();
  }

  Corpus corpus;
  corpus.cfg = cfg;
  corpus.lexicon.resize(static_cast<size_t>(cfg.lexicon_size));
  for (auto& word : corpus.lexicon) {
    const int len = rng.randint(cfg.phones_per_word_min, cfg.phones_per_word_max);
    word.resize(static_cast<size_t>(len));
    for (int& p : word) p = rng.randint(cfg.phone_set_size);
  }

  corpus.utts.resize(static_cast<size_t>(cfg.n_utterances));
  for (int i = 0; i < cfg.n_utterances; ++i) {
    Utterance& u = corpus.utts[static_cast<size_t>(i)];
    u.id = i;
    u.speaker_id = i % cfg.n_speakers;
    const int n_words = rng.randint(cfg.words_per_utt_min, cfg.words_per_utt_max);
    for (int w = 0; w < n_words; ++w) {
      const int word_id = rng.randint(cfg.lexicon_size);
      const auto& phones = corpus.lexicon[static_cast<size_t>(word_id)];
      u.words.push_back({word_id, static_cast<int>(u.phones.size()),
                         static_cast<int>(u.phones.size() + phones.size())});
      u.phones.insert(u.phones.end(), phones.begin(), phones.end());
    }
    int t = 0;
    for (size_t p = 0; p < u.phones.size(); ++p) {
      const int dur = rng.randint(cfg.phone_dur_min, cfg.phone_dur_max);
      u.alignment.push_back({t, t + dur});
      t += dur;
    }
    u.features = FeatureMatrix::zeros(t, d);
    const auto& sig = signatures[static_cast<size_t>(u.speaker_id)];
    for (size_t p = 0; p < u.phones.size(); ++p) {
      const auto& tpl = templates[static_cast<size_t>(u.phones[p])];
      for (int f = u.alignment[p].start_frame; f < u.alignment[p].end_frame; ++f) {
        double* row = u.features.row(f);
        for (int j = 0; j < d; ++j) {
          row[j] = tpl[static_cast<size_t>(j)] + sig[static_cast<size_t>(j)] +
                   cfg.noise_level * rng.normal();
        }
      }
    }
  }
  return corpus;
}

KeywordSpan select_keyword(const Utterance& u, int n_words, Rng& rng) {
  const int total = static_cast<int>(u.words.size());
  if (n_words < 1 || n_words > total) {
    throw std::invalid_argument("select_keyword: degenerate input, asked for " +
                                std::to_string(n_words) + " of " +
                                std::to_string(total) + " words");
  }
  const int start = rng.randint(total - n_words + 1);
  KeywordSpan span;
  span.word_begin = start;
  span.word_end = start + n_words;
  span.phone_begin = u.words[static_cast<size_t>(start)].phone_begin;
  span.phone_end = u.words[static_cast<size_t>(start + n_words - 1)].phone_end;
  span.phones.assign(u.phones.begin() + span.phone_begin,
                     u.phones.begin() + span.phone_end);
  return span;
}

PivotedPair add_pivots(const std::vector<int>& keyword, const std::vector<int>& target,
                       int span_begin, int span_end, const PhoneVocab& vocab,
                       bool enabled) {
  if (span_begin < 0 || span_end < span_begin ||
      span_end > static_cast<int>(target.size())) {
    throw std::out_of_range("add_pivots: indexing error, span [" +
                            std::to_string(span_begin) + ", " +
                            std::to_string(span_end) + ") outside target of length " +
                            std::to_string(target.size()));
  }
  if (static_cast<int>(keyword.size()) != span_end - span_begin ||
      !std::equal(keyword.begin(), keyword.end(), target.begin() + span_begin)) {
    throw std::out_of_range("add_pivots: indexing error, span does not match keyword");
  }
  if (!enabled) return {keyword, target};
  PivotedPair out;
  out.keyword.reserve(keyword.size() + 2);
  out.keyword.push_back(vocab.iph());
  out.keyword.insert(out.keyword.end(), keyword.begin(), keyword.end());
  out.keyword.push_back(vocab.ipt());
  out.target.reserve(target.size() + 2);
  out.target.insert(out.target.end(), target.begin(), target.begin() + span_begin);
  out.target.push_back(vocab.iph());
  out.target.insert(out.target.end(), target.begin() + span_begin,
                    target.begin() + span_end);
  out.target.push_back(vocab.ipt());
  out.target.insert(out.target.end(), target.begin() + span_end, target.end());
  return out;
}

double mean_frame_energy(const FeatureMatrix& f) {
  if (f.T == 0) return 0.0;
  double acc = 0.0;
  for (double v : f.data) acc += v * v;
  return acc / static_cast<double>(f.T);
}

namespace {

std::vector<int> to_tokens(const std::vector<int>& phones, const PhoneVocab& vocab) {
  std::vector<int> out;
  out.reserve(phones.size());
  for (int p : phones) out.push_back(vocab.token_of_phone(p));
  return out;
}

void attach_labels(TrainingExample& ex, const Utterance& tgt, const PhoneVocab& vocab,
                   const ExampleOptions& opt, Rng& rng) {
  std::vector<int> target_tokens = to_tokens(tgt.phones, vocab);
  if (opt.dummy_keyword) {
    ex.keyword = {vocab.iph()};
    ex.target = std::move(target_tokens);
    ex.kw_words = 0;
    ex.pivots = false;
    ex.kw_phone_begin = ex.kw_phone_end = 0;
    return;
  }
  int n = opt.kw_words > 0 ? opt.kw_words : rng.randint(2, 4);
  n = std::min(n, static_cast<int>(tgt.words.size()));
  const KeywordSpan span = select_keyword(tgt, n, rng);
  const std::vector<int> kw_tokens = to_tokens(span.phones, vocab);
  PivotedPair pair = add_pivots(kw_tokens, target_tokens, span.phone_begin,
                                span.phone_end, vocab, opt.pivots);
  ex.keyword = std::move(pair.keyword);
  ex.target = std::move(pair.target);
  ex.kw_words = n;
  ex.pivots = opt.pivots;
  ex.kw_phone_begin = span.phone_begin;
  ex.kw_phone_end = span.phone_end;
}

void check_dims(const Utterance& a, const Utterance& b) {
  if (a.features.F != b.features.F) {
    throw std::invalid_argument("mix: shape error, feature dims " +
                                std::to_string(a.features.F) + " vs " +
                                std::to_string(b.features.F));
  }
}

Pairing pairing_of(const Utterance& a, const Utterance& b) {
  return a.speaker_id == b.speaker_id ? Pairing::same_speaker : Pairing::cross_speaker;
}

}  // namespace

TrainingExample clean_example(const Utterance& u, const PhoneVocab& vocab,
                              const ExampleOptions& opt, Rng& rng) {
  TrainingExample ex;
  ex.features = u.features;
  ex.spec.mode = MixMode::clean;
  ex.spec.policy = WeightPolicy::none;
  ex.utt_target = u.id;
  ex.target_offset = 0;
  ex.target_frames = u.features.T;
  attach_labels(ex, u, vocab, opt, rng);
  return ex;
}

TrainingExample mix_fixed(const Utterance& u1, const Utterance& u2, double w1,
                          double w2, const PhoneVocab& vocab,
                          const ExampleOptions& opt, Rng& rng) {
  check_dims(u1, u2);
  if (w1 <= 0.0 || w1 > 1.0 || w2 < 0.0 || w2 > 1.0) {
    throw std::invalid_argument("mix_fixed: config error, weights outside (0, 1]");
  }
  const int T = std::max(u1.features.T, u2.features.T);
  const int F = u1.features.F;
  TrainingExample ex;
  ex.features = FeatureMatrix::zeros(T, F);
  for (int t = 0; t < T; ++t) {
    double* row = ex.features.row(t);
    if (t < u1.features.T) {
      const double* r1 = u1.features.row(t);
      for (int f = 0; f < F; ++f) row[f] += w1 * r1[f];
    }
    if (t < u2.features.T) {
      const double* r2 = u2.features.row(t);
      for (int f = 0; f < F; ++f) row[f] += w2 * r2[f];
    }
  }
  const bool pick_first = rng.uniform() < 0.5;
  const Utterance& tgt = pick_first ? u1 : u2;
  const Utterance& other = pick_first ? u2 : u1;
  ex.spec.mode = MixMode::mix;
  ex.spec.pairing = pairing_of(u1, u2);
  ex.spec.policy = WeightPolicy::fixed_w;
  ex.spec.w1 = w1;
  ex.spec.w2 = w2;
  ex.utt_target = tgt.id;
  ex.utt_interf = other.id;
  ex.target_offset = 0;
  ex.target_frames = tgt.features.T;
  attach_labels(ex, tgt, vocab, opt, rng);
  return ex;
}

TrainingExample mix_weighted(const Utterance& u1, const Utterance& u2,
                             const PhoneVocab& vocab, const ExampleOptions& opt,
                             Rng& rng) {
  const double w1 = rng.uniform(0.1, 0.9);
  const double w2 = rng.uniform(0.1, 0.9);
  TrainingExample ex = mix_fixed(u1, u2, w1, w2, vocab, opt, rng);
  ex.spec.policy = WeightPolicy::uniform_0109;
  return ex;
}

TrainingExample mix_snr(const Utterance& target, const Utterance& interf,
                        double snr_db, const PhoneVocab& vocab,
                        const ExampleOptions& opt, Rng& rng) {
  check_dims(target, interf);
  if (!std::isfinite(snr_db)) {
    throw std::invalid_argument("mix_snr: config error, non-finite snr");
  }
  const int T = target.features.T;
  const int F = target.features.F;
  if (T < 1) throw std::invalid_argument("mix_snr: degenerate input, empty target");
  if (interf.features.T < 1) {
    throw std::invalid_argument("mix_snr: degenerate input, empty interference");
  }

  // tile the interference over the whole target, truncating the last copy
  FeatureMatrix tiled = FeatureMatrix::zeros(T, F);
  for (int t = 0; t < T; ++t) {
    const double* src = interf.features.row(t % interf.features.T);
    std::copy(src, src + F, tiled.row(t));
  }
  const double e_t = mean_frame_energy(target.features);
  const double e_i = mean_frame_energy(tiled);
  if (e_i <= 0.0 || e_t <= 0.0) {
    throw std::invalid_argument("mix_snr: degenerate input, silent stream");
  }
  const double gain = std::sqrt(e_t / (e_i * std::pow(10.0, snr_db / 10.0)));

  TrainingExample ex;
  ex.features = FeatureMatrix::zeros(T, F);
  for (int t = 0; t < T; ++t) {
    const double* rt = target.features.row(t);
    const double* ri = tiled.row(t);
    double* row = ex.features.row(t);
    for (int f = 0; f < F; ++f) row[f] = rt[f] + gain * ri[f];
  }
  ex.spec.mode = MixMode::mix;
  ex.spec.pairing = pairing_of(target, interf);
  ex.spec.policy = WeightPolicy::snr;
  ex.spec.snr_db = snr_db;
  ex.utt_target = target.id;
  ex.utt_interf = interf.id;
  ex.target_offset = 0;
  ex.target_frames = T;
  attach_labels(ex, target, vocab, opt, rng);
  return ex;
}

TrainingExample concat_pair(const Utterance& a, const Utterance& b,
                            bool target_first, double snr_db,
                            const PhoneVocab& vocab, const ExampleOptions& opt,
                            Rng& rng) {
  check_dims(a, b);
  const int F = a.features.F;
  double gain = 1.0;
  if (std::isfinite(snr_db)) {
    const double e_a = mean_frame_energy(a.features);
    const double e_b = mean_frame_energy(b.features);
    if (e_a <= 0.0 || e_b <= 0.0) {
      throw std::invalid_argument("concat: degenerate input, silent stream");
    }
    gain = std::sqrt(e_a / (e_b * std::pow(10.0, snr_db / 10.0)));
  }
  TrainingExample ex;
  ex.features = FeatureMatrix::zeros(a.features.T + b.features.T, F);
  const int offset_a = target_first ? 0 : b.features.T;
  const int offset_b = target_first ? a.features.T : 0;
  for (int t = 0; t < a.features.T; ++t) {
    std::copy(a.features.row(t), a.features.row(t) + F, ex.features.row(offset_a + t));
  }
  for (int t = 0; t < b.features.T; ++t) {
    const double* src = b.features.row(t);
    double* dst = ex.features.row(offset_b + t);
    for (int f = 0; f < F; ++f) dst[f] = gain * src[f];
  }
  ex.spec.mode = MixMode::concat;
  ex.spec.pairing = pairing_of(a, b);
  ex.spec.policy = std::isfinite(snr_db) ? WeightPolicy::snr : WeightPolicy::none;
  ex.spec.snr_db = std::isfinite(snr_db) ? snr_db : 0.0;
  ex.spec.target_first = target_first;
  ex.utt_target = a.id;
  ex.utt_interf = b.id;
  ex.target_offset = offset_a;
  ex.target_frames = a.features.T;
  attach_labels(ex, a, vocab, opt, rng);
  return ex;
}

int pipeline_frames(int T, int subsample_factor) {
  return (T + subsample_factor - 1) / subsample_factor;
}

bool ctc_feasible(const TrainingExample& ex, int subsample_factor) {
  return pipeline_frames(ex.features.T, subsample_factor) >=
         2 * static_cast<int>(ex.target.size()) + 1;
}

namespace {

std::pair<int, int> sample_pair(const Corpus& corpus, const std::vector<int>& pool,
                                Pairing pairing, Rng& rng) {
  const int n = static_cast<int>(pool.size());
  if (n < 2) throw std::invalid_argument("corpus: degenerate input, pool too small");
  for (int tries = 0; tries < 4096; ++tries) {
    const int a = pool[static_cast<size_t>(rng.randint(n))];
    const int b = pool[static_cast<size_t>(rng.randint(n))];
    if (a == b) continue;
    const bool same = corpus.utts[static_cast<size_t>(a)].speaker_id ==
                      corpus.utts[static_cast<size_t>(b)].speaker_id;
    if (same == (pairing == Pairing::same_speaker)) return {a, b};
  }
  throw std::runtime_error("corpus: degenerate input, no pair satisfies pairing policy");
}

}  // namespace

TrainingExample build_example(const Corpus& corpus, const std::vector<int>& pool,
                              const ExampleRequest& req, const PhoneVocab& vocab,
                              Rng& rng) {
  if (pool.empty()) throw std::invalid_argument("build_example: empty utterance pool");
  for (int attempt = 0; attempt < req.max_tries; ++attempt) {
    TrainingExample ex;
    if (req.mode == MixMode::clean) {
      const int i = pool[static_cast<size_t>(rng.randint(static_cast<int>(pool.size())))];
      ex = clean_example(corpus.utts[static_cast<size_t>(i)], vocab, req.opt, rng);
    } else {
      const auto [ia, ib] = sample_pair(corpus, pool, req.pairing, rng);
      const double snr =
          req.snr_lo == req.snr_hi ? req.snr_lo : rng.uniform(req.snr_lo, req.snr_hi);
      const Utterance& a = corpus.utts[static_cast<size_t>(ia)];
      const Utterance& b = corpus.utts[static_cast<size_t>(ib)];
      if (req.mode == MixMode::mix) {
        if (req.policy == WeightPolicy::snr) {
          ex = mix_snr(a, b, snr, vocab, req.opt, rng);
        } else {
          ex = mix_weighted(a, b, vocab, req.opt, rng);
        }
      } else {
        const double concat_snr = req.policy == WeightPolicy::snr
                                      ? snr
                                      : std::numeric_limits<double>::quiet_NaN();
        ex = concat_pair(a, b, req.target_first, concat_snr, vocab, req.opt, rng);
      }
    }
    if (ctc_feasible(ex)) return ex;
  }
  throw std::runtime_error("build_example: no CTC-feasible example after " +
                           std::to_string(req.max_tries) + " tries");
}

namespace {

json config_to_json(const SyntheticCorpusConfig& c) {
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

SyntheticCorpusConfig config_from_json(const json& j) {
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

const char* mode_name(MixMode m) {
  switch (m) {
    case MixMode::clean: return "clean";
    case MixMode::mix: return "mix";
    case MixMode::concat: return "concat";
  }
  return "?";
}

const char* pairing_name(Pairing p) {
  return p == Pairing::same_speaker ? "same_speaker" : "cross_speaker";
}

const char* policy_name(WeightPolicy p) {
  switch (p) {
    case WeightPolicy::uniform_0109: return "uniform_0.1_0.9";
    case WeightPolicy::fixed_w: return "fixed";
    case WeightPolicy::snr: return "snr_db";
    case WeightPolicy::none: return "none";
  }
  return "?";
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "feats");
  json utts = json::array();
  double sum = 0.0, sum2 = 0.0;
  int64_t count = 0;
  for (const auto& u : corpus.utts) {
    char name[32];
    std::snprintf(name, sizeof(name), "feats/u%05d.feat", u.id);
    save_features((fs::path(dir) / name).string(), u.features);
    json alignment = json::array();
    for (const auto& s : u.alignment) alignment.push_back({s.start_frame, s.end_frame});
    json words = json::array();
    for (const auto& w : u.words) words.push_back({w.word_id, w.phone_begin, w.phone_end});
    utts.push_back({{"id", u.id},
                    {"speaker_id", u.speaker_id},
                    {"phones", u.phones},
                    {"alignment", alignment},
                    {"words", words},
                    {"feature_file", name},
                    {"n_frames", u.features.T}});
    for (double v : u.features.data) {
      sum += v;
      sum2 += v * v;
    }
    count += static_cast<int64_t>(u.features.data.size());
  }
  const double mean = count ? sum / static_cast<double>(count) : 0.0;
  const double var = count ? sum2 / static_cast<double>(count) - mean * mean : 0.0;
  json manifest{{"format", "tcasr-corpus-1"},
                {"config", config_to_json(corpus.cfg)},
                {"feature_dim", corpus.cfg.feat_dim},
                {"frame_shift_ms", 10.0},
                {"stats", {{"mean", mean}, {"std", std::sqrt(std::max(0.0, var))}}},
                {"lexicon", corpus.lexicon},
                {"utterances", utts}};
  std::ofstream os(fs::path(dir) / "manifest.json");
  if (!os) throw std::runtime_error("corpus: cannot write manifest in " + dir);
  os << manifest.dump(2) << "\n";
}

Corpus load_corpus(const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw std::runtime_error("corpus: cannot open " + manifest_path);
  json manifest = json::parse(is);
  Corpus corpus;
  corpus.cfg = config_from_json(manifest.at("config"));
  corpus.lexicon = manifest.at("lexicon").get<std::vector<std::vector<int>>>();
  const fs::path base = fs::path(manifest_path).parent_path();
  for (const auto& ju : manifest.at("utterances")) {
    Utterance u;
    u.id = ju.at("id");
    u.speaker_id = ju.at("speaker_id");
    u.phones = ju.at("phones").get<std::vector<int>>();
    for (const auto& s : ju.at("alignment")) u.alignment.push_back({s[0], s[1]});
    for (const auto& w : ju.at("words")) u.words.push_back({w[0], w[1], w[2]});
    u.features = load_features((base / ju.at("feature_file").get<std::string>()).string());
    corpus.utts.push_back(std::move(u));
  }
  return corpus;
}

void save_examples_jsonl(const std::string& path,
                         const std::vector<TrainingExample>& examples) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("examples: cannot open " + path);
  const std::string stem = p.stem().string();
  for (size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    char name[64];
    std::snprintf(name, sizeof(name), "%s_ex%06zu.feat", stem.c_str(), i);
    const fs::path feat_path = p.has_parent_path() ? p.parent_path() / name : fs::path(name);
    save_features(feat_path.string(), ex.features);
    json line{{"mode", mode_name(ex.spec.mode)},
              {"pairing", pairing_name(ex.spec.pairing)},
              {"weight_policy", policy_name(ex.spec.policy)},
              {"w1", ex.spec.w1},
              {"w2", ex.spec.w2},
              {"snr_db", ex.spec.snr_db},
              {"target_first", ex.spec.target_first},
              {"utt_target", ex.utt_target},
              {"utt_interf", ex.utt_interf},
              {"target_offset", ex.target_offset},
              {"target_frames", ex.target_frames},
              {"kw_words", ex.kw_words},
              {"pivots", ex.pivots},
              {"keyword", ex.keyword},
              {"target", ex.target},
              {"feature_file", name}};
    os << line.dump() << "\n";
  }
}

}  // namespace tcasr
