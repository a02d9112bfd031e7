#include "tfa/signal.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>

#include "tfa/rng.hpp"
#include "tfa/text_io.hpp"

namespace tfa {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

SpeedProfile SpeedProfile::linear(double f_start, double f_end, double duration) {
  SpeedProfile p;
  p.kind = f_end >= f_start ? SweepKind::LinearUp : SweepKind::LinearDown;
  p.f_start = f_start;
  p.f_end = f_end;
  p.duration = duration;
  p.validate();
  return p;
}

void SpeedProfile::validate() const {
  if (!(f_start > 0.0) || !(f_end > 0.0)) {
    throw std::invalid_argument("SpeedProfile: frequencies must be positive");
  }
  if (!(duration > 0.0)) throw std::invalid_argument("SpeedProfile: duration must be positive");
  if (kind == SweepKind::LinearUp && f_end < f_start) {
    throw std::invalid_argument("SpeedProfile: linear_up requires f_end >= f_start");
  }
  if (kind == SweepKind::LinearDown && f_end > f_start) {
    throw std::invalid_argument("SpeedProfile: linear_down requires f_end <= f_start");
  }
}

double SpeedProfile::freq_at(double t) const {
  const double u = std::clamp(t / duration, 0.0, 1.0);
  return f_start + (f_end - f_start) * u;
}

double SpeedProfile::revolutions_at(double t) const {
  if (t <= 0.0) return 0.0;
  const double ramp_t = std::min(t, duration);
  double rev = f_start * ramp_t + (f_end - f_start) * ramp_t * ramp_t / (2.0 * duration);
  if (t > duration) rev += f_end * (t - duration);
  return rev;
}

Signal gen_chirp(const SpeedProfile& profile, double sample_rate, std::size_t n_samples,
                 double amplitude) {
  profile.validate();
  if (n_samples == 0) throw std::invalid_argument("gen_chirp: n_samples must be positive");
  if (!(sample_rate > 0.0)) throw std::invalid_argument("gen_chirp: sample_rate must be positive");
  if (std::max(profile.f_start, profile.f_end) >= 0.5 * sample_rate) {
    throw std::invalid_argument("gen_chirp: sweep reaches the Nyquist frequency");
  }
  Signal out;
  out.sample_rate = sample_rate;
  out.samples.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    out.samples[i] = amplitude * std::sin(kTwoPi * profile.revolutions_at(t));
  }
  return out;
}

std::vector<double> impulse_onset_times(const SpeedProfile& profile, double impulses_per_rev,
                                        double t_end) {
  std::vector<double> onsets;
  if (impulses_per_rev <= 0.0 || t_end <= 0.0) return onsets;
  const double total = profile.revolutions_at(t_end) * impulses_per_rev;
  const auto count = static_cast<long>(std::floor(total));
  onsets.reserve(static_cast<std::size_t>(std::max(count, 0L)));
  for (long k = 1; k <= count; ++k) {
    // revolutions_at is strictly increasing (frequencies are positive), so
    // bisection on phase * ipr - k is exact enough at 64 iterations.
    const double target = static_cast<double>(k) / impulses_per_rev;
    double lo = onsets.empty() ? 0.0 : onsets.back();
    double hi = t_end;
    for (int it = 0; it < 64; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (profile.revolutions_at(mid) < target) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    onsets.push_back(0.5 * (lo + hi));
  }
  return onsets;
}

Signal gen_fault_signal(const SpeedProfile& profile, const FaultSpec& fault, double sample_rate,
                        std::size_t n_samples, std::uint64_t rng_seed) {
  if (fault.impulses_per_rev < 0.0) {
    throw std::invalid_argument("gen_fault_signal: impulses_per_rev must be >= 0");
  }
  if (fault.impulses_per_rev > 0.0) {
    if (!(fault.decay > 0.0)) throw std::invalid_argument("gen_fault_signal: decay must be positive");
    if (fault.resonance_hz >= 0.5 * sample_rate) {
      throw std::invalid_argument("gen_fault_signal: resonance reaches the Nyquist frequency");
    }
  }
  Signal out = gen_chirp(profile, sample_rate, n_samples, 1.0);

  if (fault.impulses_per_rev > 0.0) {
    const double t_end = static_cast<double>(n_samples) / sample_rate;
    const auto onsets = impulse_onset_times(profile, fault.impulses_per_rev, t_end);
    // Burst support: envelope below 1e-9 contributes nothing visible.
    const double tail = std::log(1e9) / fault.decay;
    for (double onset : onsets) {
      const auto first = static_cast<std::size_t>(std::ceil(onset * sample_rate));
      const auto last = std::min(
          n_samples, static_cast<std::size_t>(std::ceil((onset + tail) * sample_rate)));
      for (std::size_t i = first; i < last; ++i) {
        const double tau = static_cast<double>(i) / sample_rate - onset;
        out.samples[i] += std::exp(-fault.decay * tau) * std::sin(kTwoPi * fault.resonance_hz * tau);
      }
    }
  }

  if (std::isfinite(fault.snr_db)) {
    double power = 0.0;
    for (double s : out.samples) power += s * s;
    power /= static_cast<double>(n_samples);
    const double noise_std = std::sqrt(power * std::pow(10.0, -fault.snr_db / 10.0));
    Rng rng(rng_seed);
    for (double& s : out.samples) s += noise_std * rng.gaussian();
  }
  return out;
}

void save_signal(const Signal& signal, const std::filesystem::path& path) {
  if (signal.samples.empty()) throw std::invalid_argument("save_signal: empty signal");
  if (!(signal.sample_rate > 0.0)) throw std::invalid_argument("save_signal: sample_rate must be positive");
  std::ostringstream os;
  os << "# sample_rate=" << format_double(signal.sample_rate) << '\n';
  for (double s : signal.samples) os << format_double(s) << '\n';
  write_text_file(path, os.str());
}

Signal load_signal(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw io_error(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  constexpr std::string_view kHeader = "# sample_rate=";
  if (line.rfind(kHeader, 0) != 0) {
    throw io_error(path.string() + ": missing sample_rate header");
  }
  Signal out;
  out.sample_rate = parse_double(line.substr(kHeader.size()), path.string() + " header");
  if (!(out.sample_rate > 0.0)) {
    throw io_error(path.string() + ": malformed header, sample_rate must be positive");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.samples.push_back(parse_double(line, path.string() + " line " + std::to_string(lineno)));
  }
  if (out.samples.empty()) throw io_error(path.string() + ": empty signal");
  return out;
}

}  // namespace tfa
