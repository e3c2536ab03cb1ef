#pragma once

#include <complex>
#include <string>
#include <vector>

namespace tcasr {

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  double sample_rate = 16000.0;
};

struct FeatureMatrix {
  int T = 0;
  int F = 0;
  std::vector<double> data;  // row-major T x F
  double frame_len_ms = 25.0;
  double frame_shift_ms = 10.0;

  double& at(int t, int f) { return data[static_cast<size_t>(t) * F + f]; }
  double at(int t, int f) const { return data[static_cast<size_t>(t) * F + f]; }
  const double* row(int t) const { return data.data() + static_cast<size_t>(t) * F; }
  double* row(int t) { return data.data() + static_cast<size_t>(t) * F; }

  static FeatureMatrix zeros(int T, int F);
};

// In-place radix-2 FFT; size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a);

// Triangular mel filterbank on FFT bin centers, HTK mel scale
// mel(f) = 2595 log10(1 + f/700), filters spanning [f_lo, sample_rate/2].
// Returns n_mels x (n_fft/2 + 1) weights, row-major.
std::vector<double> mel_filterbank(int n_mels, int n_fft, double sample_rate,
                                   double f_lo = 20.0);
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Log mel filterbank features: Hann window, power spectrum over the next
// power-of-two FFT, mel filters, log(x + 1e-10).
FeatureMatrix logmel(const Waveform& wave, int n_mels = 40,
                     double frame_len_ms = 25.0, double frame_shift_ms = 10.0);

// Row t becomes the concatenation of rows t+c for c in context, with
// out-of-range indices clamped to the edges.
FeatureMatrix splice(const FeatureMatrix& feat,
                     const std::vector<int>& context = {-2, -1, 0, 1, 2});

// Keeps frames 0, factor, 2*factor, ...
FeatureMatrix subsample(const FeatureMatrix& feat, int factor = 3);

// Feature file: magic "FEAT1", uint32 T, uint32 F, then T*F float32 cells,
// little-endian.
void save_features(const std::string& path, const FeatureMatrix& feat);
FeatureMatrix load_features(const std::string& path);

}  // namespace tcasr
