#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tcasr/ctc.hpp"
#include "tcasr/frontend.hpp"
#include "tcasr/harness.hpp"
#include "tcasr/model.hpp"

namespace py = pybind11;
using namespace tcasr;

namespace {

FeatureMatrix feat_from_array(const py::array_t<double, py::array::c_style>& arr) {
  if (arr.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  FeatureMatrix f = FeatureMatrix::zeros(static_cast<int>(arr.shape(0)),
                                         static_cast<int>(arr.shape(1)));
  std::copy(arr.data(), arr.data() + arr.size(), f.data.begin());
  return f;
}

py::array_t<double> feat_to_array(const FeatureMatrix& f) {
  py::array_t<double> out({f.T, f.F});
  std::copy(f.data.begin(), f.data.end(), out.mutable_data());
  return out;
}

py::array_t<double> tensor_to_array(const Tensor& t) {
  py::array_t<double> out({t.rows(), t.cols()});
  std::copy(t.values.begin(), t.values.end(), out.mutable_data());
  return out;
}

Utterance features_only_utterance(const py::array_t<double, py::array::c_style>& arr) {
  Utterance u;
  u.features = feat_from_array(arr);
  return u;
}

}  // namespace

PYBIND11_MODULE(_tcasr, m) {
  m.doc() = "target-content ASR core: features, mixing, model, CTC, scoring";

  py::class_<PhoneVocab>(m, "PhoneVocab")
      .def(py::init<int>(), py::arg("n_phones"))
      .def_readonly("n_phones", &PhoneVocab::n_phones)
      .def_property_readonly("blank", &PhoneVocab::blank)
      .def_property_readonly("iph", &PhoneVocab::iph)
      .def_property_readonly("ipt", &PhoneVocab::ipt)
      .def("size", &PhoneVocab::size)
      .def("token_of_phone", &PhoneVocab::token_of_phone)
      .def("token_name", &PhoneVocab::token_name)
      .def("strip_pivots", [](const PhoneVocab& v, const std::vector<int>& seq) {
        return strip_pivots(seq, v);
      });

  m.def(
      "logmel",
      [](const py::array_t<double, py::array::c_style>& samples, double sample_rate,
         int n_mels, double frame_len_ms, double frame_shift_ms) {
        Waveform w;
        w.samples.assign(samples.data(), samples.data() + samples.size());
        w.sample_rate = sample_rate;
        return feat_to_array(logmel(w, n_mels, frame_len_ms, frame_shift_ms));
      },
      py::arg("samples"), py::arg("sample_rate") = 16000.0, py::arg("n_mels") = 40,
      py::arg("frame_len_ms") = 25.0, py::arg("frame_shift_ms") = 10.0);

  m.def(
      "splice",
      [](const py::array_t<double, py::array::c_style>& feat,
         const std::vector<int>& context) {
        return feat_to_array(splice(feat_from_array(feat), context));
      },
      py::arg("feat"), py::arg("context") = std::vector<int>{-2, -1, 0, 1, 2});

  m.def(
      "subsample",
      [](const py::array_t<double, py::array::c_style>& feat, int factor) {
        return feat_to_array(subsample(feat_from_array(feat), factor));
      },
      py::arg("feat"), py::arg("factor") = 3);

  m.def(
      "positional_encoding",
      [](int T, int d_model) { return tensor_to_array(*positional_encoding(T, d_model)); },
      py::arg("T"), py::arg("d_model"));

  m.def(
      "mix_at_snr",
      [](const py::array_t<double, py::array::c_style>& target,
         const py::array_t<double, py::array::c_style>& interf, double snr_db) {
        const Utterance a = features_only_utterance(target);
        const Utterance b = features_only_utterance(interf);
        ExampleOptions opt;
        opt.dummy_keyword = true;
        Rng rng(0);
        return feat_to_array(
            mix_snr(a, b, snr_db, PhoneVocab(1), opt, rng).features);
      },
      py::arg("target"), py::arg("interference"), py::arg("snr_db"),
      "tile interference to the target length and mix at the requested SNR");

  m.def("mean_frame_energy",
        [](const py::array_t<double, py::array::c_style>& feat) {
          return mean_frame_energy(feat_from_array(feat));
        });

  m.def(
      "add_pivots",
      [](const std::vector<int>& keyword, const std::vector<int>& target,
         int span_begin, int span_end, const PhoneVocab& vocab, bool enabled) {
        const PivotedPair p =
            add_pivots(keyword, target, span_begin, span_end, vocab, enabled);
        return py::make_tuple(p.keyword, p.target);
      },
      py::arg("keyword"), py::arg("target"), py::arg("span_begin"),
      py::arg("span_end"), py::arg("vocab"), py::arg("enabled") = true);

  m.def(
      "ctc_loss",
      [](const py::array_t<double, py::array::c_style>& log_probs,
         const std::vector<int>& target, int blank) {
        const int T = static_cast<int>(log_probs.shape(0));
        const int V = static_cast<int>(log_probs.shape(1));
        std::vector<double> lp(log_probs.data(), log_probs.data() + log_probs.size());
        const CtcResult res = ctc_loss(lp, T, V, target, blank);
        py::array_t<double> grad({T, V});
        std::copy(res.grad.begin(), res.grad.end(), grad.mutable_data());
        return py::make_tuple(res.loss, grad);
      },
      py::arg("log_probs"), py::arg("target"), py::arg("blank") = 0);

  m.def(
      "greedy_decode",
      [](const py::array_t<double, py::array::c_style>& log_probs, int blank) {
        const int T = static_cast<int>(log_probs.shape(0));
        const int V = static_cast<int>(log_probs.shape(1));
        std::vector<double> lp(log_probs.data(), log_probs.data() + log_probs.size());
        return greedy_decode(lp, T, V, blank);
      },
      py::arg("log_probs"), py::arg("blank") = 0);

  m.def(
      "per",
      [](const std::vector<int>& hyp, const std::vector<int>& ref,
         const PhoneVocab& vocab, bool strip) { return per(hyp, ref, vocab, strip); },
      py::arg("hyp"), py::arg("ref"), py::arg("vocab"), py::arg("strip") = true);

  py::class_<Model>(m, "Model")
      .def(py::init([](const std::string& config_json, uint64_t seed) {
             const ExperimentConfig cfg = experiment_from_json_string(config_json);
             ExperimentConfig full = cfg;
             full.finalize();
             return new Model(full.model, seed);
           }),
           py::arg("experiment_config_json"), py::arg("seed") = 1)
      .def("count_parameters", &Model::count_parameters)
      .def("load_checkpoint",
           [](Model& self, const std::string& path) {
             apply_records(load_checkpoint(path), self.params());
           })
      .def(
          "log_probs",
          [](const Model& self, const py::array_t<double, py::array::c_style>& feat,
             const std::vector<int>& keyword) {
            const TensorPtr input = features_to_input(feat_from_array(feat));
            const TensorPtr memory = self.encode_keyword(keyword);
            const TensorPtr logits = self.encode_speech(input, memory);
            return tensor_to_array(*log_softmax_rows(logits));
          },
          py::arg("features"), py::arg("keyword"),
          "splice + subsample the raw features, encode, and return per-frame "
          "log phone probabilities");

  m.def("desk_experiment_json",
        [] { return experiment_to_json_string(ExperimentConfig::desk_default()); });
}
