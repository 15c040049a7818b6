// src/signal.cpp

// Copyright 2026  The avtse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "avtse/signal.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>

#include <unsupported/Eigen/FFT>

namespace avtse {

std::string hex_digest(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

LossResult si_snr_loss(std::span<const Eigen::VectorXd> estimates,
                       std::span<const Eigen::VectorXd> targets, bool with_gradient) {
  if (estimates.size() != targets.size() || estimates.empty())
    throw Error("si_snr_loss: batch size mismatch");
  const double scale = 1.0 / static_cast<double>(estimates.size());
  LossResult out;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    SiSnrTerm term = si_snr_term(estimates[i], targets[i], with_gradient);
    out.value -= scale * term.value;
    if (with_gradient) out.gradients.push_back(-scale * term.gradient);
  }
  return out;
}

PitResult pit_si_snr_loss(std::span<const Eigen::VectorXd> estimates,
                          std::span<const Eigen::VectorXd> targets, bool with_gradient) {
  const std::size_t n = estimates.size();
  if (n != targets.size() || n == 0) throw Error("pit_si_snr_loss: source count mismatch");
  if (n > 4) throw Error("pit_si_snr_loss: more than 4 sources");

  // Pairwise table, then every assignment in lexicographic order; the first
  // strict minimum wins ties.
  std::vector<std::vector<double>> table(n, std::vector<double>(n));
  for (std::size_t e = 0; e < n; ++e)
    for (std::size_t t = 0; t < n; ++t)
      table[e][t] = si_snr_term(estimates[e], targets[t], false).value;

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  PitResult best;
  bool first = true;
  do {
    double loss = 0.0;
    for (std::size_t t = 0; t < n; ++t) loss -= table[perm[t]][t];
    loss /= static_cast<double>(n);
    if (first || loss < best.value) {
      best.value = loss;
      best.permutation = perm;
      first = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  if (with_gradient) {
    best.gradients.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
      const int e = best.permutation[t];
      best.gradients[e] =
          -si_snr_term(estimates[e], targets[t], true).gradient / static_cast<double>(n);
    }
  }
  return best;
}

Eigen::VectorXd hann_window(int length) {
  Eigen::VectorXd w(length);
  for (int n = 0; n < length; ++n)
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / length);
  return w;
}

Spectrogram stft(const Eigen::VectorXd& samples, int window_len, int hop) {
  if (window_len <= 0 || window_len % 2 != 0) throw Error("stft: window length must be even");
  if (hop <= 0 || hop > window_len) throw Error("stft: hop must be in (0, window_len]");
  if (samples.size() < window_len) throw Error("stft: waveform shorter than one window");

  const Eigen::Index num_frames = (samples.size() - window_len) / hop + 1;
  const int bins = window_len / 2 + 1;
  const Eigen::VectorXd window = hann_window(window_len);

  Spectrogram spec;
  spec.window_len = window_len;
  spec.hop = hop;
  spec.frames.resize(num_frames, bins);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(window_len);
  std::vector<std::complex<double>> out;
  for (Eigen::Index f = 0; f < num_frames; ++f) {
    for (int n = 0; n < window_len; ++n) frame[n] = samples[f * hop + n] * window[n];
    fft.fwd(out, frame);
    for (int k = 0; k < bins; ++k) spec.frames(f, k) = out[k];
  }
  return spec;
}

Eigen::VectorXd istft(const Spectrogram& spec, const Spectrogram* phase_source) {
  const int window_len = spec.window_len;
  const int hop = spec.hop;
  const int bins = window_len / 2 + 1;
  if (spec.num_bins() != bins || spec.num_frames() < 1) throw Error("istft: malformed spectrogram");
  if (phase_source != nullptr &&
      (phase_source->frames.rows() != spec.frames.rows() ||
       phase_source->frames.cols() != spec.frames.cols()))
    throw Error("istft: phase source shape mismatch");

  const Eigen::Index num_frames = spec.num_frames();
  const Eigen::Index length = (num_frames - 1) * hop + window_len;
  const Eigen::VectorXd window = hann_window(window_len);

  Eigen::VectorXd signal = Eigen::VectorXd::Zero(length);
  Eigen::VectorXd norm = Eigen::VectorXd::Zero(length);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> half(bins);
  std::vector<double> frame;
  for (Eigen::Index f = 0; f < num_frames; ++f) {
    for (int k = 0; k < bins; ++k) {
      if (phase_source == nullptr) {
        half[k] = spec.frames(f, k);
      } else {
        half[k] = std::polar(std::abs(spec.frames(f, k)), std::arg(phase_source->frames(f, k)));
      }
    }
    // DC and Nyquist of a real frame carry no imaginary part.
    half[0] = {half[0].real(), 0.0};
    half[bins - 1] = {half[bins - 1].real(), 0.0};
    fft.inv(frame, half, window_len);
    for (int n = 0; n < window_len; ++n) {
      signal[f * hop + n] += frame[n] * window[n];
      norm[f * hop + n] += window[n] * window[n];
    }
  }
  // Edge samples covered by window tails are divided by a floor instead of
  // their vanishing window sum, which would amplify inconsistent spectra.
  const double floor = 0.1 * norm.maxCoeff();
  for (Eigen::Index i = 0; i < length; ++i) signal[i] /= std::max(norm[i], floor);
  return signal;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ostream& os, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

std::uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingArtifactError("cannot open wav file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw IoError("not a RIFF/WAVE file: " + path);

  std::size_t pos = 12;
  int channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = get_u32(chunk + 4);
    if (pos + 8 + size > bytes.size()) throw IoError("truncated wav chunk: " + path);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && size >= 16) {
      format = get_u16(chunk + 8);
      channels = get_u16(chunk + 10);
      rate = get_u32(chunk + 12);
      bits = get_u16(chunk + 22);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = size;
    }
    pos += 8 + size + (size & 1);
  }
  if (format != 1 || channels != 1 || bits != 16)
    throw IoError("only 16-bit PCM mono wav is supported: " + path);
  if (data == nullptr) throw IoError("wav file has no data chunk: " + path);

  Waveform w;
  w.rate = static_cast<int>(rate);
  w.samples.resize(static_cast<Eigen::Index>(data_size / 2));
  for (Eigen::Index i = 0; i < w.samples.size(); ++i) {
    const auto v = static_cast<std::int16_t>(get_u16(data + 2 * i));
    w.samples[i] = v / 32768.0;
  }
  return w;
}

double write_wav(const std::string& path, const Waveform& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write wav file: " + path);
  const double peak = w.samples.size() > 0 ? w.samples.cwiseAbs().maxCoeff() : 0.0;
  const double gain = peak >= 1.0 ? 0.99 / peak : 1.0;
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  os.write("RIFF", 4);
  put_u32(os, 36 + 2 * n);
  os.write("WAVEfmt ", 8);
  put_u32(os, 16);
  put_u16(os, 1);
  put_u16(os, 1);
  put_u32(os, static_cast<std::uint32_t>(w.rate));
  put_u32(os, static_cast<std::uint32_t>(w.rate) * 2);
  put_u16(os, 2);
  put_u16(os, 16);
  os.write("data", 4);
  put_u32(os, 2 * n);
  for (Eigen::Index i = 0; i < w.samples.size(); ++i) {
    const double v = std::round(w.samples[i] * gain * 32768.0);
    put_u16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0))));
  }
  if (!os) throw IoError("failed writing wav file: " + path);
  return gain;
}

}  // namespace avtse
