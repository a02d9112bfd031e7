#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "tfa/signal.hpp"
#include "tfa/text_io.hpp"

using namespace tfa;

namespace {

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_SUITE("signal") {

TEST_CASE("constant-speed chirp degenerates to a sinusoid") {
  const SpeedProfile profile = SpeedProfile::linear(64.0, 64.0, 1.0);
  const Signal sig = gen_chirp(profile, 1024.0, 1024, 1.0);
  REQUIRE(sig.samples.size() == 1024);
  for (std::size_t i = 0; i < sig.samples.size(); ++i) {
    const double t = static_cast<double>(i) / 1024.0;
    CHECK(sig.samples[i] == doctest::Approx(std::sin(2.0 * M_PI * 64.0 * t)).epsilon(1e-9));
  }
}

TEST_CASE("zero amplitude gives the zero signal") {
  const Signal sig = gen_chirp(SpeedProfile::linear(100.0, 400.0, 1.0), 8192.0, 4096, 0.0);
  for (double s : sig.samples) CHECK(s == 0.0);
}

TEST_CASE("linear sweep midpoint frequency") {
  const SpeedProfile profile = SpeedProfile::linear(100.0, 400.0, 1.0);
  CHECK(profile.freq_at(0.5) == 250.0);
  // and the generated waveform agrees: zero-crossing estimates near t=0.5
  const Signal sig = gen_chirp(profile, 8192.0, 8192, 1.0);
  for (const auto& [t, f] : oracle::zero_crossing_freqs(sig)) {
    if (std::abs(t - 0.5) < 0.01) CHECK(f == doctest::Approx(profile.freq_at(t)).epsilon(0.02));
  }
}

TEST_CASE("chirp instantaneous frequency tracks the profile within 2%") {
  const SpeedProfile profile = SpeedProfile::linear(50.0, 300.0, 0.5);
  const Signal sig = gen_chirp(profile, 8192.0, 4096, 2.0);
  int checked = 0;
  for (const auto& [t, f] : oracle::zero_crossing_freqs(sig)) {
    if (t < 0.05 || t > 0.45) continue;  // endpoints excluded
    CHECK(std::abs(f - profile.freq_at(t)) / profile.freq_at(t) <= 0.02);
    ++checked;
  }
  CHECK(checked > 20);
}

TEST_CASE("sweeps reaching Nyquist are rejected") {
  CHECK_THROWS_AS(gen_chirp(SpeedProfile::linear(100.0, 512.0, 1.0), 1024.0, 1024, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(gen_chirp(SpeedProfile::linear(600.0, 100.0, 1.0), 1024.0, 1024, 1.0),
                  std::invalid_argument);
}

TEST_CASE("healthy clean fault signal equals the chirp") {
  const SpeedProfile profile = SpeedProfile::linear(10.0, 20.0, 1.0);
  FaultSpec healthy;
  healthy.class_id = 0;
  healthy.impulses_per_rev = 0.0;
  healthy.snr_db = std::numeric_limits<double>::infinity();
  healthy.decay = 100.0;
  const Signal faulty = gen_fault_signal(profile, healthy, 4096.0, 4096, 3407);
  const Signal chirp = gen_chirp(profile, 4096.0, 4096, 1.0);
  for (std::size_t i = 0; i < chirp.samples.size(); ++i) {
    CHECK(faulty.samples[i] == chirp.samples[i]);
  }
}

TEST_CASE("fault signals are deterministic per seed") {
  const SpeedProfile profile = SpeedProfile::linear(10.0, 25.0, 0.5);
  FaultSpec fault{1, 5.4, 900.0, 300.0, 8.0};
  const Signal a = gen_fault_signal(profile, fault, 8192.0, 4096, 12345);
  const Signal b = gen_fault_signal(profile, fault, 8192.0, 4096, 12345);
  const Signal c = gen_fault_signal(profile, fault, 8192.0, 4096, 54321);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
}

TEST_CASE("impulse count: constant 10 rev/s, 3 per rev, 1 s") {
  const SpeedProfile profile = SpeedProfile::linear(10.0, 10.0, 1.0);
  const auto onsets = impulse_onset_times(profile, 3.0, 1.0);
  const long expected = oracle::count_onsets_by_integration(profile, 3.0, 1.0);
  CHECK(std::llabs(static_cast<long>(onsets.size()) - expected) <= 1);
  CHECK(expected == 30);
}

TEST_CASE("impulse counts match the phase-integral oracle on ramps") {
  for (const auto& [f0, f1, ipr] : {std::tuple{8.0, 30.0, 5.4}, std::tuple{25.0, 6.0, 3.56},
                                    std::tuple{12.0, 12.0, 2.32}}) {
    const SpeedProfile profile = SpeedProfile::linear(f0, f1, 0.4);
    const auto onsets = impulse_onset_times(profile, ipr, 0.4);
    const long expected = oracle::count_onsets_by_integration(profile, ipr, 0.4);
    CHECK(std::llabs(static_cast<long>(onsets.size()) - expected) <= 1);
  }
}

TEST_CASE("signal files round-trip") {
  Signal sig;
  sig.sample_rate = 8192.0;
  sig.samples = {0.25, -1.0 / 3.0, 1e-17};
  const auto path = temp_file("tfa_test_signal.txt");
  save_signal(sig, path);
  const Signal loaded = load_signal(path);
  CHECK(loaded.sample_rate == sig.sample_rate);
  REQUIRE(loaded.samples.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(loaded.samples[i] - sig.samples[i]) <= 1e-12);
  }
  std::filesystem::remove(path);
}

TEST_CASE("signal file error paths") {
  const auto path = temp_file("tfa_test_bad_signal.txt");

  SUBCASE("header only") {
    write_text_file(path, "# sample_rate=1000\n");
    CHECK_THROWS_WITH_AS(load_signal(path), doctest::Contains("empty signal"), io_error);
  }
  SUBCASE("missing sample_rate") {
    write_text_file(path, "0.5\n0.25\n");
    CHECK_THROWS_WITH_AS(load_signal(path), doctest::Contains("missing sample_rate"), io_error);
  }
  SUBCASE("non-numeric line") {
    write_text_file(path, "# sample_rate=1000\n0.5\nbogus\n");
    CHECK_THROWS_WITH_AS(load_signal(path), doctest::Contains("non-numeric"), io_error);
  }
  SUBCASE("empty file") {
    write_text_file(path, "");
    CHECK_THROWS_WITH_AS(load_signal(path), doctest::Contains("empty file"), io_error);
  }
  std::filesystem::remove(path);
}

}  // TEST_SUITE
