#include "tcasr/frontend.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tcasr {

FeatureMatrix FeatureMatrix::zeros(int T, int F) {
  FeatureMatrix out;
  out.T = T;
  out.F = F;
  out.data.assign(static_cast<size_t>(T) * F, 0.0);
  return out;
}

void fft_radix2(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) {
    throw std::invalid_argument("fft: size must be a power of two");
  }
  // bit-reversal permutation
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_filterbank(int n_mels, int n_fft, double sample_rate,
                                   double f_lo) {
  const int n_bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(f_lo);
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  // n_mels + 2 edge points, triangle m spans points m, m+1, m+2
  std::vector<double> edges(static_cast<size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[static_cast<size_t>(i)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
  }
  std::vector<double> weights(static_cast<size_t>(n_mels) * n_bins, 0.0);
  for (int m = 0; m < n_mels; ++m) {
    const double fl = edges[static_cast<size_t>(m)];
    const double fc = edges[static_cast<size_t>(m) + 1];
    const double fr = edges[static_cast<size_t>(m) + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = sample_rate * k / n_fft;
      double w = 0.0;
      if (f >= fl && f <= fc) {
        w = (f - fl) / (fc - fl);
      } else if (f > fc && f <= fr) {
        w = (fr - f) / (fr - fc);
      }
      if (w > 0.0) weights[static_cast<size_t>(m) * n_bins + k] = w;
    }
  }
  return weights;
}

FeatureMatrix logmel(const Waveform& wave, int n_mels, double frame_len_ms,
                     double frame_shift_ms) {
  if (wave.sample_rate <= 0.0) {
    throw std::invalid_argument("logmel: config error, sample_rate <= 0");
  }
  const int frame_samples =
      static_cast<int>(std::lround(frame_len_ms / 1000.0 * wave.sample_rate));
  const int shift_samples =
      static_cast<int>(std::lround(frame_shift_ms / 1000.0 * wave.sample_rate));
  if (frame_samples < 2 || shift_samples < 1) {
    throw std::invalid_argument("logmel: config error, degenerate frame geometry");
  }
  const int64_t n = static_cast<int64_t>(wave.samples.size());
  if (n < frame_samples) {
    throw std::invalid_argument("logmel: empty-feature error, signal shorter than one frame");
  }
  const int T = 1 + static_cast<int>((n - frame_samples) / shift_samples);

  int n_fft = 1;
  while (n_fft < frame_samples) n_fft <<= 1;
  const int n_bins = n_fft / 2 + 1;

  std::vector<double> window(static_cast<size_t>(frame_samples));
  for (int i = 0; i < frame_samples; ++i) {
    window[static_cast<size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * M_PI * i / frame_samples);
  }
  const std::vector<double> fbank = mel_filterbank(n_mels, n_fft, wave.sample_rate);

  FeatureMatrix out = FeatureMatrix::zeros(T, n_mels);
  out.frame_len_ms = frame_len_ms;
  out.frame_shift_ms = frame_shift_ms;
  std::vector<std::complex<double>> buf(static_cast<size_t>(n_fft));
  std::vector<double> power(static_cast<size_t>(n_bins));
  for (int t = 0; t < T; ++t) {
    const double* frame = wave.samples.data() + static_cast<size_t>(t) * shift_samples;
    for (int i = 0; i < n_fft; ++i) {
      buf[static_cast<size_t>(i)] =
          i < frame_samples ? frame[i] * window[static_cast<size_t>(i)] : 0.0;
    }
    fft_radix2(buf);
    for (int k = 0; k < n_bins; ++k) power[static_cast<size_t>(k)] = std::norm(buf[static_cast<size_t>(k)]);
    for (int m = 0; m < n_mels; ++m) {
      const double* w = fbank.data() + static_cast<size_t>(m) * n_bins;
      double acc = 0.0;
      for (int k = 0; k < n_bins; ++k) acc += w[k] * power[static_cast<size_t>(k)];
      out.at(t, m) = std::log(acc + 1e-10);
    }
  }
  return out;
}

FeatureMatrix splice(const FeatureMatrix& feat, const std::vector<int>& context) {
  if (feat.T < 1) {
    throw std::invalid_argument("splice: empty-feature error, T == 0");
  }
  if (context.empty()) {
    throw std::invalid_argument("splice: config error, empty context");
  }
  const int C = static_cast<int>(context.size());
  FeatureMatrix out = FeatureMatrix::zeros(feat.T, feat.F * C);
  out.frame_len_ms = feat.frame_len_ms;
  out.frame_shift_ms = feat.frame_shift_ms;
  for (int t = 0; t < feat.T; ++t) {
    for (int c = 0; c < C; ++c) {
      int src = t + context[static_cast<size_t>(c)];
      src = std::max(0, std::min(feat.T - 1, src));
      std::memcpy(out.row(t) + static_cast<size_t>(c) * feat.F, feat.row(src),
                  sizeof(double) * static_cast<size_t>(feat.F));
    }
  }
  return out;
}

FeatureMatrix subsample(const FeatureMatrix& feat, int factor) {
  if (factor < 1) {
    throw std::invalid_argument("subsample: config error, factor < 1");
  }
  if (feat.T < 1) {
    throw std::invalid_argument("subsample: empty-feature error, T == 0");
  }
  const int T_out = (feat.T + factor - 1) / factor;
  FeatureMatrix out = FeatureMatrix::zeros(T_out, feat.F);
  out.frame_len_ms = feat.frame_len_ms;
  out.frame_shift_ms = feat.frame_shift_ms * factor;
  for (int t = 0; t < T_out; ++t) {
    std::memcpy(out.row(t), feat.row(t * factor),
                sizeof(double) * static_cast<size_t>(feat.F));
  }
  return out;
}

namespace {

constexpr char kFeatMagic[5] = {'F', 'E', 'A', 'T', '1'};

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
  if (!is) throw std::runtime_error("feature file: truncated header");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_features(const std::string& path, const FeatureMatrix& feat) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("feature file: cannot open " + path);
  os.write(kFeatMagic, sizeof(kFeatMagic));
  write_u32(os, static_cast<uint32_t>(feat.T));
  write_u32(os, static_cast<uint32_t>(feat.F));
  std::vector<float> cells(feat.data.size());
  for (size_t i = 0; i < feat.data.size(); ++i) cells[i] = static_cast<float>(feat.data[i]);
  os.write(reinterpret_cast<const char*>(cells.data()),
           static_cast<std::streamsize>(cells.size() * sizeof(float)));
  if (!os) throw std::runtime_error("feature file: write failed for " + path);
}

FeatureMatrix load_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("feature file: cannot open " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, kFeatMagic, 5) != 0) {
    throw std::runtime_error("feature file: bad magic in " + path);
  }
  const uint32_t T = read_u32(is);
  const uint32_t F = read_u32(is);
  FeatureMatrix out = FeatureMatrix::zeros(static_cast<int>(T), static_cast<int>(F));
  std::vector<float> cells(static_cast<size_t>(T) * F);
  is.read(reinterpret_cast<char*>(cells.data()),
          static_cast<std::streamsize>(cells.size() * sizeof(float)));
  if (!is) throw std::runtime_error("feature file: truncated cells in " + path);
  for (size_t i = 0; i < cells.size(); ++i) out.data[i] = static_cast<double>(cells[i]);
  return out;
}

}  // namespace tcasr
