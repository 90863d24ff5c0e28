#include "rfp/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>

namespace rfp::dsp {

ComplexFrame normalize_energy(const ComplexFrame& frame) {
  const auto& y = frame.samples;
  if (y.size() == 0) throw DegenerateInput("cannot normalize an empty frame");
  double mean_power = y.squaredNorm() / static_cast<double>(y.size());
  if (mean_power == 0.0) throw DegenerateInput("cannot normalize an all-zero frame");
  ComplexFrame out;
  out.sample_rate_hz = frame.sample_rate_hz;
  out.samples = y / std::sqrt(mean_power);
  return out;
}

namespace {
constexpr int kLag = 16;

Complex lag_product_sum(const CVector& y) {
  Complex acc(0.0, 0.0);
  for (int n = 0; n + kLag < y.size(); ++n) acc += std::conj(y[n]) * y[n + kLag];
  return acc;
}
}  // namespace

double estimate_cfo(const ComplexFrame& frame) {
  if (frame.length() < kLag + 1)
    throw ShapeError("CFO estimation needs at least 17 samples, got " +
                     std::to_string(frame.length()));
  return std::arg(lag_product_sum(frame.samples)) / static_cast<double>(kLag);
}

Eigen::VectorXd cfo_representation(const ComplexFrame& frame) {
  if (frame.length() < kLag + 1)
    throw ShapeError("CFO representation needs at least 17 samples, got " +
                     std::to_string(frame.length()));
  const auto& y = frame.samples;
  Eigen::VectorXd r = Eigen::VectorXd::Zero(y.size());
  for (int n = 0; n + kLag < y.size(); ++n) r[n] = std::arg(std::conj(y[n]) * y[n + kLag]);
  return r;
}

CVector fft_representation(const ComplexFrame& frame) {
  Eigen::FFT<double> fft;
  CVector out(frame.samples.size());
  fft.fwd(out, frame.samples);
  return out;
}

Eigen::VectorXd window_coefficients(Window window, int n) {
  Eigen::VectorXd w(n);
  if (window == Window::rectangular) {
    w.setOnes();
  } else {
    for (int i = 0; i < n; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

Eigen::MatrixXcd stft_representation(const ComplexFrame& frame, int window_len, int shift,
                                     Window window) {
  const int n = frame.length();
  if (window_len > n)
    throw ShapeError("STFT window length " + std::to_string(window_len) +
                     " exceeds frame length " + std::to_string(n));
  if (window_len < 1 || shift < 1) throw ShapeError("STFT window length and shift must be >= 1");
  const int frames = (n - window_len) / shift + 1;
  const Eigen::VectorXd w = window_coefficients(window, window_len);

  Eigen::FFT<double> fft;
  Eigen::MatrixXcd out(frames, window_len);
  CVector segment(window_len), spectrum(window_len);
  for (int m = 0; m < frames; ++m) {
    for (int i = 0; i < window_len; ++i) segment[i] = frame.samples[m * shift + i] * w[i];
    fft.fwd(spectrum, segment);
    out.row(m) = spectrum.transpose();
  }
  return out;
}

RepresentationBundle build_bundle(const ComplexFrame& frame, const ReprConfig& config) {
  ComplexFrame y = normalize_energy(frame);
  const int n = y.length();

  RepresentationBundle b;
  b.iq.resize(n, 2);
  b.iq.col(0) = y.samples.real();
  b.iq.col(1) = y.samples.imag();

  b.cfo = cfo_representation(y);

  CVector spectrum = fft_representation(y);
  b.fft.resize(2, n);
  b.fft.row(0) = spectrum.real().transpose();
  b.fft.row(1) = spectrum.imag().transpose();

  Eigen::MatrixXcd stft =
      stft_representation(y, config.stft_window_len, config.stft_shift, config.window);
  b.stft_re = stft.real();
  b.stft_im = stft.imag();
  return b;
}

}  // namespace rfp::dsp
