#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <complex>
#include <cstdio>

#include "doctest.h"
#include "tcasr/frontend.hpp"
#include "tcasr/rng.hpp"

using namespace tcasr;

namespace {

Waveform sine(double freq, double seconds, double sr = 16000.0, double amp = 0.5) {
  Waveform w;
  w.sample_rate = sr;
  const int n = static_cast<int>(seconds * sr);
  w.samples.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    w.samples[static_cast<size_t>(i)] = amp * std::sin(2.0 * M_PI * freq * i / sr);
  }
  return w;
}

// direct O(N^2) DFT of one windowed frame, then the same mel filters
int oracle_argmax_bin(const Waveform& w, int n_mels) {
  const int frame = 400, n_fft = 512;
  std::vector<double> windowed(static_cast<size_t>(n_fft), 0.0);
  for (int i = 0; i < frame; ++i) {
    const double win = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / frame);
    windowed[static_cast<size_t>(i)] = w.samples[static_cast<size_t>(i)] * win;
  }
  std::vector<double> power(static_cast<size_t>(n_fft / 2 + 1));
  for (int k = 0; k <= n_fft / 2; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (int n = 0; n < n_fft; ++n) {
      const double ang = -2.0 * M_PI * k * n / n_fft;
      acc += windowed[static_cast<size_t>(n)] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    power[static_cast<size_t>(k)] = std::norm(acc);
  }
  const auto fb = mel_filterbank(n_mels, n_fft, w.sample_rate);
  int best = 0;
  double best_e = -1.0;
  for (int m = 0; m < n_mels; ++m) {
    double e = 0.0;
    for (int k = 0; k <= n_fft / 2; ++k) e += fb[static_cast<size_t>(m) * (n_fft / 2 + 1) + k] * power[static_cast<size_t>(k)];
    if (e > best_e) {
      best_e = e;
      best = m;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("frame count formula") {
  Waveform w;
  w.samples.assign(16000, 0.0);
  const FeatureMatrix f = logmel(w);
  CHECK(f.T == 98);
  CHECK(f.F == 40);
}

TEST_CASE("all-zero signal hits the log floor everywhere") {
  Waveform w;
  w.samples.assign(1600, 0.0);
  const FeatureMatrix f = logmel(w);
  for (double v : f.data) CHECK(v == doctest::Approx(std::log(1e-10)).epsilon(1e-12));
}

TEST_CASE("too-short or misconfigured input throws") {
  Waveform w;
  w.samples.assign(100, 0.1);
  CHECK_THROWS_WITH_AS(logmel(w), doctest::Contains("empty-feature"),
                       std::invalid_argument);
  w.samples.assign(1600, 0.1);
  w.sample_rate = 0.0;
  CHECK_THROWS_WITH_AS(logmel(w), doctest::Contains("config error"),
                       std::invalid_argument);
}

TEST_CASE("sine at a mel bin center lands in that bin") {
  const int n_mels = 40;
  const double mel_lo = hz_to_mel(20.0), mel_hi = hz_to_mel(8000.0);
  for (int k : {6, 20, 34}) {
    const double fc = mel_to_hz(mel_lo + (mel_hi - mel_lo) * (k + 1) / (n_mels + 1));
    const Waveform w = sine(fc, 0.2);
    const FeatureMatrix f = logmel(w, n_mels);
    // mean energy per bin across frames
    int best = 0;
    double best_e = -1e300;
    for (int m = 0; m < n_mels; ++m) {
      double e = 0.0;
      for (int t = 0; t < f.T; ++t) e += f.at(t, m);
      if (e > best_e) {
        best_e = e;
        best = m;
      }
    }
    CHECK(best == k);
    CHECK(oracle_argmax_bin(w, n_mels) == k);
  }
}

TEST_CASE("log-domain scale covariance") {
  Rng rng(8);
  Waveform w;
  w.samples.resize(3200);
  for (double& s : w.samples) s = 0.3 * rng.uniform(-1.0, 1.0);
  Waveform w2 = w;
  const double g = 2.5;
  for (double& s : w2.samples) s *= g;
  const FeatureMatrix a = logmel(w), b = logmel(w2);
  for (size_t i = 0; i < a.data.size(); ++i) {
    if (a.data[i] > std::log(1e-10) + 8.0) {  // away from the floor
      CHECK(std::abs(b.data[i] - a.data[i] - 2.0 * std::log(g)) <= 1e-6);
    }
  }
}

TEST_CASE("splice clamps at the edges") {
  FeatureMatrix f = FeatureMatrix::zeros(3, 2);
  for (int t = 0; t < 3; ++t) {
    f.at(t, 0) = t;
    f.at(t, 1) = 10 + t;
  }
  const FeatureMatrix s = splice(f);
  CHECK(s.T == 3);
  CHECK(s.F == 10);
  // row 0: blocks 0,1 clamp to row 0; blocks 2,3,4 are rows 0,1,2
  const std::vector<double> expect_row0 = {0, 10, 0, 10, 0, 10, 1, 11, 2, 12};
  for (int j = 0; j < 10; ++j) CHECK(s.at(0, j) == expect_row0[static_cast<size_t>(j)]);
  // interior c=0 block equals the original row
  CHECK(s.at(1, 4) == f.at(1, 0));
  CHECK(s.at(1, 5) == f.at(1, 1));

  FeatureMatrix one = FeatureMatrix::zeros(1, 2);
  one.at(0, 0) = 4;
  one.at(0, 1) = 5;
  const FeatureMatrix s1 = splice(one);
  CHECK(s1.F == 10);
  for (int c = 0; c < 5; ++c) {
    CHECK(s1.at(0, 2 * c) == 4);
    CHECK(s1.at(0, 2 * c + 1) == 5);
  }

  FeatureMatrix empty = FeatureMatrix::zeros(0, 2);
  CHECK_THROWS_WITH_AS(splice(empty), doctest::Contains("empty-feature"),
                       std::invalid_argument);
}

TEST_CASE("subsample keeps frames 0, 3, 6, ...") {
  FeatureMatrix f = FeatureMatrix::zeros(9, 1);
  for (int t = 0; t < 9; ++t) f.at(t, 0) = t;
  const FeatureMatrix s = subsample(f);
  CHECK(s.T == 3);
  CHECK(s.at(0, 0) == 0);
  CHECK(s.at(1, 0) == 3);
  CHECK(s.at(2, 0) == 6);

  FeatureMatrix f10 = FeatureMatrix::zeros(10, 1);
  CHECK(subsample(f10).T == 4);
  CHECK(subsample(f, 1).data == f.data);
  CHECK_THROWS_WITH_AS(subsample(f, 0), doctest::Contains("config error"),
                       std::invalid_argument);
}

TEST_CASE("pipeline length contract for all small T") {
  for (int T = 1; T <= 30; ++T) {
    FeatureMatrix f = FeatureMatrix::zeros(T, 4);
    const FeatureMatrix out = subsample(splice(f));
    CHECK(out.T == (T + 2) / 3);
    CHECK(out.F == 20);
  }
}

TEST_CASE("feature file round-trip") {
  Rng rng(77);
  FeatureMatrix f = FeatureMatrix::zeros(5, 3);
  for (double& v : f.data) v = rng.uniform(-4.0, 4.0);
  const std::string path = "feat_test.bin";
  save_features(path, f);
  const FeatureMatrix g = load_features(path);
  CHECK(g.T == 5);
  CHECK(g.F == 3);
  for (size_t i = 0; i < f.data.size(); ++i) {
    CHECK(g.data[i] == doctest::Approx(f.data[i]).epsilon(1e-6));
  }
  std::remove(path.c_str());
}

TEST_CASE("fft agrees with the analytic transform of a delta") {
  std::vector<std::complex<double>> a(8, 0.0);
  a[1] = 1.0;
  fft_radix2(a);
  for (int k = 0; k < 8; ++k) {
    const double ang = -2.0 * M_PI * k / 8.0;
    CHECK(a[static_cast<size_t>(k)].real() == doctest::Approx(std::cos(ang)).epsilon(1e-12));
    CHECK(a[static_cast<size_t>(k)].imag() == doctest::Approx(std::sin(ang)).epsilon(1e-12));
  }
  std::vector<std::complex<double>> bad(6, 0.0);
  CHECK_THROWS_AS(fft_radix2(bad), std::invalid_argument);
}
