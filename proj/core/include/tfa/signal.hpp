#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace tfa {

/// Uniformly sampled real waveform.
struct Signal {
  std::vector<double> samples;
  double sample_rate = 0.0;  ///< Hz

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

enum class SweepKind { LinearUp, LinearDown };

/// Linear shaft-speed ramp: instantaneous frequency moves from f_start to
/// f_end over `duration` seconds and holds f_end afterwards.
struct SpeedProfile {
  SweepKind kind = SweepKind::LinearUp;
  double f_start = 0.0;  ///< Hz
  double f_end = 0.0;    ///< Hz
  double duration = 0.0; ///< s

  static SpeedProfile linear(double f_start, double f_end, double duration);

  /// Instantaneous frequency at time t (clamped to the ramp interval).
  double freq_at(double t) const;

  /// Accumulated revolutions by time t (integral of freq_at).
  double revolutions_at(double t) const;

  /// Throws std::invalid_argument when the fields are inconsistent.
  void validate() const;
};

/// Synthetic bearing-fault recipe: class 0 is healthy (no impulses); faulty
/// classes inject `impulses_per_rev` resonance bursts per shaft revolution.
struct FaultSpec {
  int class_id = 0;              ///< 0=H, 1=IR, 2=OR, 3=B
  double impulses_per_rev = 0.0; ///< 0 for healthy
  double resonance_hz = 0.0;     ///< burst carrier; must be below Nyquist
  double decay = 1.0;            ///< burst envelope decay, 1/s
  double snr_db = 0.0;           ///< white-noise level; +inf means clean
};

/// Linear frequency sweep. Rejects sweeps whose endpoints reach Nyquist.
Signal gen_chirp(const SpeedProfile& profile, double sample_rate, std::size_t n_samples,
                 double amplitude);

/// Onset times (seconds) of the impulse train locked to the shaft phase:
/// one onset each time profile revolutions cross k / impulses_per_rev, k >= 1.
std::vector<double> impulse_onset_times(const SpeedProfile& profile, double impulses_per_rev,
                                        double t_end);

/// Chirp + speed-locked decaying resonance impulses + white noise at snr_db.
/// Deterministic for a fixed seed; healthy spec with infinite SNR returns the
/// plain chirp.
Signal gen_fault_signal(const SpeedProfile& profile, const FaultSpec& fault, double sample_rate,
                        std::size_t n_samples, std::uint64_t rng_seed);

/// Signal file format: line 1 "# sample_rate=<float>", then one sample per
/// line, 17 significant digits.
void save_signal(const Signal& signal, const std::filesystem::path& path);
Signal load_signal(const std::filesystem::path& path);

}  // namespace tfa
