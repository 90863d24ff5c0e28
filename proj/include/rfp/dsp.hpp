#pragma once

#include <Eigen/Core>
#include <complex>

#include "rfp/errors.hpp"

namespace rfp::dsp {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;

/// One captured or synthesized baseband burst: N_s complex samples plus the
/// rate they were taken at. 160 samples at 20 MSa/s in WFDI mode.
struct ComplexFrame {
  CVector samples;
  double sample_rate_hz = 20e6;

  int length() const { return static_cast<int>(samples.size()); }
};

enum class Window { hann, rectangular };

struct ReprConfig {
  int stft_window_len = 120;  // J
  int stft_shift = 5;         // K
  Window window = Window::hann;
};

/// The four model inputs computed from one frame. Complex-valued transforms
/// are stored as separate real/imaginary planes, matching how they feed the
/// classifier.
struct RepresentationBundle {
  Eigen::MatrixXd iq;        // N_s x 2, columns (I, Q)
  Eigen::VectorXd cfo;       // N_s, trailing 16 entries exactly zero
  Eigen::MatrixXd fft;       // 2 x N_s, rows (re, im)
  Eigen::MatrixXd stft_re;   // M x J
  Eigen::MatrixXd stft_im;   // M x J
};

/// Divides by the RMS magnitude so the output frame has unit average power.
/// Throws DegenerateInput on an all-zero frame.
ComplexFrame normalize_energy(const ComplexFrame& frame);

/// Coarse frequency-offset estimate from the lag-16 autocorrelation:
/// (1/16) * angle(sum conj(y[n]) * y[n+16]). Radians per sample, in
/// (-pi/16, pi/16]. Requires N_s >= 17.
double estimate_cfo(const ComplexFrame& frame);

/// Per-lag phase vector angle(conj(y[n]) * y[n+16]) for n < N_s-16,
/// zero-padded at the tail to length N_s.
Eigen::VectorXd cfo_representation(const ComplexFrame& frame);

/// Unnormalized forward DFT, bins 0..N_s-1.
CVector fft_representation(const ComplexFrame& frame);

/// Windowed frame DFTs: frame m covers samples [mK, mK+J), each transformed
/// with a length-J DFT. Result is M x J with M = floor((N_s-J)/K) + 1.
/// Throws ShapeError if J > N_s.
Eigen::MatrixXcd stft_representation(const ComplexFrame& frame, int window_len, int shift,
                                     Window window);

/// Window coefficients of length n (periodic Hann or all-ones).
Eigen::VectorXd window_coefficients(Window window, int n);

/// Energy-normalizes the frame and assembles all four representations.
RepresentationBundle build_bundle(const ComplexFrame& frame, const ReprConfig& config = {});

}  // namespace rfp::dsp
