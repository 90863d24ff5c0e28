#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rfp/dsp.hpp"
#include "rfp/rng.hpp"

namespace rfp::sim {

using dsp::Complex;
using dsp::ComplexFrame;
using dsp::CVector;

/// Per-device impairment parameter set. Gains are linear, the phase error is
/// radians, the PA fitting parameters follow the rational AM/AM / AM/PM
/// model, and eps_f_hz is the oscillator offset.
struct DeviceProfile {
  double g_i = 1.0;
  double g_q = 1.0;
  double eps_p = 0.0;
  double alpha_a = 2.0;
  double beta_a = 0.5;
  double alpha_phi = 1.0;
  double beta_phi = 1.0;
  double eps_f_hz = 0.0;
  double drift_sigma = 0.02;

  bool valid() const {
    return g_i > 0.0 && g_q > 0.0 && beta_a >= 0.0 && beta_phi >= 0.0 &&
           std::abs(eps_p) < M_PI / 2.0;
  }
};

/// Documented sampling ranges for synthetic devices; magnitudes consistent
/// with commodity WiFi hardware, separable but overlapping.
struct ProfileRanges {
  double gain_lo = 0.90, gain_hi = 1.10;
  double eps_p_deg = 5.0;
  double alpha_a_lo = 1.5, alpha_a_hi = 2.5;
  double beta_a_lo = 0.2, beta_a_hi = 1.0;
  double alpha_phi_lo = 0.5, alpha_phi_hi = 2.0;
  double beta_phi_lo = 0.5, beta_phi_hi = 2.0;
  double eps_f_hz = 50e3;
  double drift_sigma = 0.02;
};

constexpr int kLstfLength = 160;
constexpr double kWifiSampleRate = 20e6;

/// The legacy short training field at 20 MSa/s: ten exact repetitions of a
/// 16-sample short symbol (12 occupied subcarriers scaled by sqrt(13/6)),
/// normalized to unit RMS.
ComplexFrame generate_lstf();

/// Baseband-equivalent quadrature-mixer imbalance with branch gains g_i, g_q
/// and phase error eps_p split evenly between the carriers:
///   out_I = g_i*cos(eps_p/2)*x_I + g_q*sin(eps_p/2)*x_Q
///   out_Q = g_i*sin(eps_p/2)*x_I + g_q*cos(eps_p/2)*x_Q
ComplexFrame apply_iq_imbalance(const ComplexFrame& x, double g_i, double g_q, double eps_p);

/// Rational PA nonlinearity: with r=|x|, the output magnitude is
/// alpha_a*r/(1+beta_a*r^2) and the phase gains alpha_phi*r^2/(1+beta_phi*r^2).
ComplexFrame apply_pa(const ComplexFrame& x, double alpha_a, double beta_a, double alpha_phi,
                      double beta_phi);

/// Residual carrier rotation: sample n is multiplied by e^{-j*2*pi*eps_f*n/f_s}.
ComplexFrame apply_cfo(const ComplexFrame& x, double eps_f_hz, double sample_rate_hz);

/// Circular complex Gaussian noise at the requested SNR relative to the
/// frame's measured power. +infinity passes the frame through unchanged.
ComplexFrame apply_awgn(const ComplexFrame& x, double snr_db, Rng& rng);

DeviceProfile sample_device_profile(Rng& rng, const ProfileRanges& ranges = {});

/// Day-realized parameters: every profile entry jittered by an independent
/// (1 + delta), delta ~ N(0, drift_sigma^2), deterministic per (device, day).
DeviceProfile realize_day(const DeviceProfile& profile, Rng& rng);

/// Full transmit-side chain over the clean L-STF:
/// IQ imbalance -> PA -> CFO -> AWGN.
ComplexFrame synthesize_frame(const DeviceProfile& realized, double snr_db, Rng& rng);

struct DetectorConfig {
  double plateau_threshold = 0.9;
  int min_plateau_run = 128;
  int metric_window = 16;   // lag-16 correlation accumulation length
  int smoothing = 9;        // centered moving average over the raw metric
};

/// Frame starts found by the lag-16 autocorrelation plateau detector.
/// Candidates whose mean frame power is below power_threshold times the
/// median candidate power are dropped (low-power downlink rejection).
std::vector<std::int64_t> detect_frames(const std::vector<Complex>& stream,
                                        double power_threshold,
                                        const DetectorConfig& config = {});

/// Realized per-day parameters for one device.
struct DeviceRecord {
  DeviceProfile profile;                // day-independent draw
  std::vector<DeviceProfile> by_day;    // realized per day
};

/// Dataset descriptor: extents, seed, realized profiles, noise level and the
/// backing file path. n_c is always 2 (I and Q planes).
struct DatasetManifest {
  int devices = 0;   // N_n
  int days = 0;      // N_d
  int frames = 0;    // N_f
  int samples = 0;   // N_s
  int channels = 2;  // N_c
  std::uint64_t seed = 0;
  double snr_db = 30.0;  // +inf for noiseless
  double sample_rate_hz = kWifiSampleRate;
  ProfileRanges ranges;
  std::vector<DeviceRecord> device_records;
  std::string path;

  std::int64_t total_frames() const {
    return static_cast<std::int64_t>(devices) * days * frames;
  }
};

/// All frames of a dataset, I/Q interleaved per frame in (sample, channel)
/// order, stored as f32 exactly as on disk.
struct FrameArray {
  std::vector<float> values;  // row-major (n, d, f, s, c)
  std::int64_t frame_count = 0;
  int samples = 0;

  const float* frame(std::int64_t idx) const {
    return values.data() + idx * samples * 2;
  }
  ComplexFrame to_frame(std::int64_t idx, double sample_rate_hz) const;
};

/// Synthesizes the full (devices x days x frames) grid for a manifest with
/// counter-based RNG streams keyed by (seed, device, day, frame).
FrameArray synthesize_dataset(DatasetManifest& manifest);

/// Re-synthesizes one frame of the grid at an arbitrary SNR, reusing the
/// manifest's realized parameters and the original frame noise stream.
ComplexFrame resynthesize_frame(const DatasetManifest& manifest, int device, int day, int frame,
                                double snr_db);

void write_dataset(const DatasetManifest& manifest, const FrameArray& frames);
std::pair<DatasetManifest, FrameArray> read_dataset(const std::string& path);

/// Sidecar path for a dataset file: extension replaced by ".manifest.json".
std::string manifest_path_for(const std::string& dataset_path);

}  // namespace rfp::sim
