// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "avjoint/dsp.hpp"
#include "avjoint/error.hpp"
#include "support.hpp"

using namespace avjoint;
using namespace avjoint::dsp;
using testsupport::TempDir;

namespace {

Waveform stereo(std::vector<double> l, std::vector<double> r, int sr = 16000) {
  Waveform w;
  w.sample_rate = sr;
  w.channels = {std::move(l), std::move(r)};
  return w;
}

Waveform sine(double hz, int sr, std::size_t n, double amp = 0.5) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * i / sr);
  return stereo(x, x, sr);
}

// 16-bit PCM grid values in [-1, 1).
std::vector<double> pcm_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(-32768, 32767);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng) / 32768.0;
  return v;
}

StftConfig stft_1024(WindowFn fn = WindowFn::Hann) {
  StftConfig c;
  c.window_ms = 64.0;
  c.hop_ms = 64.0;
  c.window = fn;
  return c;
}

}  // namespace

TEST_SUITE("waveform") {
  TEST_CASE("validate rejects ragged channels and bad rates") {
    CHECK_THROWS_AS(stereo({1, 2}, {1}).validate(), InvalidInput);
    Waveform w = stereo({1}, {1});
    w.sample_rate = 0;
    CHECK_THROWS_AS(w.validate(), InvalidInput);
  }

  TEST_CASE("to_avg_diff on identical channels") {
    auto x = testsupport::uniform_vec(100, 3);
    auto ad = to_avg_diff(stereo(x, x));
    CHECK(ad.channels[0] == x);
    for (double d : ad.channels[1]) CHECK(d == 0.0);
  }

  TEST_CASE("to_avg_diff small example") {
    auto ad = to_avg_diff(stereo({1, 0}, {0, 1}));
    CHECK(ad.channels[0] == std::vector<double>{0.5, 0.5});
    CHECK(ad.channels[1] == std::vector<double>{0.5, -0.5});
  }

  TEST_CASE("to_avg_diff rejects mono") {
    Waveform w;
    w.channels = {{1.0, 2.0}};
    CHECK_THROWS_AS(to_avg_diff(w), InvalidInput);
  }

  TEST_CASE("avg/diff reconstructs PCM-valued channels exactly") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto l = pcm_vec(4096, seed), r = pcm_vec(4096, seed + 100);
      auto ad = to_avg_diff(stereo(l, r));
      for (std::size_t i = 0; i < l.size(); ++i) {
        REQUIRE(ad.channels[0][i] + ad.channels[1][i] == l[i]);
        REQUIRE(ad.channels[0][i] - ad.channels[1][i] == r[i]);
      }
    }
  }
}

TEST_SUITE("resample") {
  TEST_CASE("matching rate is bit-identical") {
    auto w = stereo(testsupport::uniform_vec(1000, 1), testsupport::uniform_vec(1000, 2));
    auto out = resample(w, 16000);
    CHECK(out.channels == w.channels);
    CHECK(out.sample_rate == 16000);
  }

  TEST_CASE("length scales with the rate ratio") {
    auto w = stereo(std::vector<double>(160000, 0.0), std::vector<double>(160000, 0.0));
    auto out = resample(w, 48000);
    CHECK(out.sample_rate == 48000);
    CHECK(std::llabs(static_cast<long long>(out.length()) - 480000) <= 1);
    CHECK(std::abs(out.duration() - w.duration()) <= 1.0 / 16000);
  }

  TEST_CASE("440 Hz tone keeps its spectral peak after 48k -> 16k") {
    auto w = sine(440.0, 48000, 48000);
    auto out = resample(w, 16000);
    // 1600 samples at 16 kHz: 10 Hz per DFT bin, 440 Hz lands on bin 44.
    std::vector<double> seg(out.channels[0].begin() + 4000, out.channels[0].begin() + 5600);
    auto mag = testsupport::naive_dft_mag(seg);
    auto peak = std::max_element(mag.begin(), mag.end()) - mag.begin();
    CHECK(peak == 44);
  }

  TEST_CASE("errors") {
    Waveform empty;
    empty.channels = {{}, {}};
    CHECK_THROWS_AS(resample(empty, 8000), InvalidInput);
    CHECK_THROWS_AS(resample(sine(100, 16000, 10), 0), InvalidInput);
  }
}

TEST_SUITE("stft") {
  TEST_CASE("default sample counts") {
    StftConfig c;
    CHECK(c.window_samples() == 8192);
    CHECK(c.hop_samples() == 2736);
  }

  TEST_CASE("10 s clip yields 56 frames") {
    CHECK(frame_count(160000, 8192, 2736) == 56);
    std::vector<double> x(160000, 0.0);
    auto m = stft_magnitude(x, StftConfig{});
    CHECK(m.rows == 56);
    CHECK(m.cols == 4097);
  }

  TEST_CASE("zero signal gives zero magnitudes") {
    std::vector<double> x(3000, 0.0);
    auto m = stft_magnitude(x, stft_1024());
    for (double v : m.data) CHECK(v == 0.0);
  }

  TEST_CASE("frame count formula over random lengths") {
    std::mt19937_64 rng(9);
    auto cfg = stft_1024();
    cfg.hop_ms = 20.0;  // 320 samples
    for (int i = 0; i < 25; ++i) {
      std::size_t len = 1024 + rng() % 5000;
      std::vector<double> x(len, 0.1);
      auto m = stft_magnitude(x, cfg);
      CHECK(m.rows == (len - 1024) / 320 + 1);
    }
  }

  TEST_CASE("bin-centred sine peaks at its bin with a rectangular window") {
    auto cfg = stft_1024(WindowFn::Rectangular);
    cfg.hop_ms = 32.0;
    for (std::size_t k : {5u, 37u, 200u, 511u}) {
      auto w = sine(16000.0 * k / 1024.0, 16000, 4096);
      auto m = stft_magnitude(w.channels[0], cfg);
      for (std::size_t t = 0; t < m.rows; ++t) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < m.cols; ++j)
          if (m(t, j) > m(t, best)) best = j;
        CHECK(best == k);
      }
    }
  }

  TEST_CASE("matches a naive DFT of the Hann-windowed frame") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto x = testsupport::uniform_vec(1024, 500 + seed);
      auto m = stft_magnitude(x, stft_1024());
      REQUIRE(m.rows == 1);
      std::vector<double> wx(1024);
      for (std::size_t i = 0; i < 1024; ++i)
        wx[i] = x[i] * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / 1024.0));
      auto ref = testsupport::naive_dft_mag(wx);
      for (std::size_t k = 0; k < ref.size(); ++k)
        REQUIRE(std::abs(m(0, k) - ref[k]) <= 1e-9 * std::abs(ref[k]));
    }
  }

  TEST_CASE("short signal and bad configs") {
    std::vector<double> x(100, 0.0);
    CHECK_THROWS_AS(stft_magnitude(x, StftConfig{}), InvalidInput);
    StftConfig c;
    c.hop_ms = 600;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
  }
}

TEST_SUITE("filterbanks") {
  TEST_CASE("mel scale round trip") {
    for (double f : {0.0, 100.0, 700.0, 4000.0, 8000.0}) CHECK(mel_to_hz(hz_to_mel(f)) == doctest::Approx(f).epsilon(1e-12));
    CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  }

  TEST_CASE("single mel triangle peaks at the mid-mel point") {
    auto fb = build_mel_filterbank(1, 257, 16000);
    CHECK(fb.center_freqs[0] == doctest::Approx(mel_to_hz(hz_to_mel(8000.0) / 2)));
    CHECK(fb.weight(0, 0) == 0.0);
    CHECK(fb.weight(0, 256) == 0.0);
    std::size_t peak = 0;
    for (std::size_t k = 0; k < 257; ++k)
      if (fb.weight(0, k) > fb.weight(0, peak)) peak = k;
    CHECK(std::abs(peak * 8000.0 / 256 - fb.center_freqs[0]) <= 8000.0 / 256);
  }

  TEST_CASE("four mel bins follow the mel formula") {
    auto fb = build_mel_filterbank(4, 257, 16000);
    const double top = 2595.0 * std::log10(1.0 + 8000.0 / 700.0);
    for (std::size_t b = 0; b < 4; ++b) {
      double mel = top * (b + 1) / 5.0;
      double hz = 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
      CHECK(fb.center_freqs[b] == doctest::Approx(hz).epsilon(1e-12));
      double s = 0;
      for (std::size_t k = 0; k < 257; ++k) s += fb.weight(b, k);
      CHECK(s > 0.0);
      if (b) CHECK(fb.center_freqs[b] > fb.center_freqs[b - 1]);
    }
  }

  TEST_CASE("mel coverage between first and last center") {
    for (std::size_t n : {4u, 40u, 256u}) {
      auto fb = build_mel_filterbank(n, 4097, 16000);
      const double hz = 8000.0 / 4096;
      for (std::size_t k = 0; k < 4097; ++k) {
        double f = k * hz;
        if (f < fb.center_freqs.front() || f > fb.center_freqs.back()) continue;
        double s = 0;
        for (std::size_t b = 0; b < n; ++b) s += fb.weight(b, k);
        REQUIRE(s > 0.0);
      }
    }
  }

  TEST_CASE("bank argument errors") {
    CHECK_THROWS_AS(build_mel_filterbank(257, 257, 16000), InvalidConfig);
    CHECK_THROWS_AS(build_wavelet_filterbank(300, 257, 16000), InvalidConfig);
    CHECK_THROWS_AS(build_wavelet_filterbank(10, 4097, 16000, 9000.0), InvalidConfig);
  }

  TEST_CASE("single wavelet bump has unit peak") {
    auto fb = build_wavelet_filterbank(1, 4097, 16000);
    CHECK(fb.center_freqs[0] == doctest::Approx(std::sqrt(50.0 * 8000.0)));
    double peak = *std::max_element(fb.weights.begin(), fb.weights.end());
    CHECK(peak <= 1.0);
    CHECK(peak > 0.99);
  }

  TEST_CASE("290 wavelet centers are geometric") {
    auto fb = build_wavelet_filterbank(290, 4097, 16000);
    REQUIRE(fb.center_freqs.size() == 290);
    CHECK(fb.center_freqs.front() == doctest::Approx(50.0));
    CHECK(fb.center_freqs.back() == doctest::Approx(8000.0));
    const double r0 = fb.center_freqs[1] / fb.center_freqs[0];
    for (std::size_t i = 1; i + 1 < 290; ++i) {
      REQUIRE(fb.center_freqs[i + 1] > fb.center_freqs[i]);
      REQUIRE(std::abs(fb.center_freqs[i + 1] / fb.center_freqs[i] - r0) < 1e-9);
    }
  }

  TEST_CASE("rows are nonnegative, finite and non-empty") {
    for (auto fb : {build_mel_filterbank(256, 4097, 16000), build_wavelet_filterbank(290, 4097, 16000),
                    build_mel_filterbank(64, 513, 22050), build_wavelet_filterbank(30, 513, 8000, 100.0)}) {
      for (std::size_t b = 0; b < fb.n_bins; ++b) {
        double s = 0;
        for (std::size_t k = 0; k < fb.n_fft_bins; ++k) {
          double w = fb.weight(b, k);
          REQUIRE(std::isfinite(w));
          REQUIRE(w >= 0.0);
          s += w;
        }
        REQUIRE(s > 0.0);
        if (b) REQUIRE(fb.center_freqs[b] > fb.center_freqs[b - 1]);
      }
    }
  }

  TEST_CASE("white noise scalogram has no empty rows and varies smoothly") {
    FeatureConfig cfg;
    cfg.stft.hop_ms = 40.0;  // 100 frames in ~4.5 s
    std::size_t n = cfg.stft.window_samples() + 99 * cfg.stft.hop_samples();
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(0.0, 0.1);
    std::vector<double> l(n), r(n);
    for (std::size_t i = 0; i < n; ++i) l[i] = g(rng), r[i] = g(rng);
    auto frames = extract_features(stereo(l, r), cfg, "noise");
    REQUIRE(frames.size() == 100);
    for (std::size_t c = 0; c < 2; ++c) {
      std::vector<double> mean(290, 0.0);
      for (const auto& f : frames)
        for (std::size_t b = 0; b < 290; ++b) mean[b] += f.at(c, b) / 100.0;
      for (std::size_t b = 0; b < 290; ++b) REQUIRE(mean[b] > std::log(1e-10) + 10.0);
      for (std::size_t b = 1; b < 290; ++b) REQUIRE(std::abs(mean[b] - mean[b - 1]) < 1.0);
    }
  }
}

TEST_SUITE("apply_filterbank") {
  TEST_CASE("zero spectrogram gives the log floor") {
    auto fb = build_mel_filterbank(8, 33, 16000);
    Matrix spec(3, 33, 0.0);
    auto out = apply_filterbank(spec, fb, 1e-10);
    for (double v : out.data) CHECK(v == std::log(1e-10));
  }

  TEST_CASE("identity bank") {
    FilterBank fb;
    fb.n_bins = fb.n_fft_bins = 5;
    fb.weights.assign(25, 0.0);
    for (std::size_t i = 0; i < 5; ++i) fb.weights[i * 5 + i] = 1.0;
    fb.center_freqs = {1, 2, 3, 4, 5};
    for (std::size_t i = 0; i < 5; ++i) fb.support.push_back({i, i + 1});
    Matrix spec(2, 5);
    spec.data = {0.0, 1e-12, 0.5, 2.0, 7.0, 1.0, 0.0, 3.0, 1e-11, 4.0};
    auto out = apply_filterbank(spec, fb, 1e-10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(out.data[i] == std::log(std::max(spec.data[i], 1e-10)));
  }

  TEST_CASE("matches a double-loop oracle") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto s = testsupport::uniform_vec(15, seed, 0.0, 2.0);
      auto w = testsupport::uniform_vec(10, seed + 50, 0.0, 1.0);
      FilterBank fb;
      fb.n_bins = 2;
      fb.n_fft_bins = 5;
      fb.weights = w;
      fb.center_freqs = {1, 2};
      fb.support = {{0, 5}, {0, 5}};
      Matrix spec(3, 5);
      spec.data = s;
      auto out = apply_filterbank(spec, fb, 1e-10);
      for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t b = 0; b < 2; ++b) {
          double acc = 0;
          for (std::size_t k = 0; k < 5; ++k) acc += w[b * 5 + k] * s[t * 5 + k];
          CHECK(std::abs(out(t, b) - std::log(std::max(acc, 1e-10))) <= 1e-12);
        }
    }
  }

  TEST_CASE("monotone under spectrogram scaling") {
    auto fb = build_wavelet_filterbank(40, 513, 16000);
    Matrix spec(4, 513);
    spec.data = testsupport::uniform_vec(4 * 513, 8, 0.0, 1.0);
    auto a = apply_filterbank(spec, fb, 1e-10);
    for (double c : {1.01, 2.0, 1000.0}) {
      Matrix s2 = spec;
      for (auto& v : s2.data) v *= c;
      auto b = apply_filterbank(s2, fb, 1e-10);
      for (std::size_t i = 0; i < a.data.size(); ++i) REQUIRE(b.data[i] >= a.data[i]);
    }
  }

  TEST_CASE("shape mismatch") {
    auto fb = build_mel_filterbank(4, 33, 16000);
    CHECK_THROWS_AS(apply_filterbank(Matrix(2, 32), fb, 1e-10), InvalidInput);
  }
}

TEST_SUITE("extract_features") {
  TEST_CASE("10 s clip shapes for both kinds") {
    auto w = stereo(testsupport::uniform_vec(160000, 1, -0.3, 0.3), testsupport::uniform_vec(160000, 2, -0.3, 0.3));
    for (auto [kind, bins] : {std::pair{FeatureKind::Scalogram, 290u}, std::pair{FeatureKind::FBank, 256u}}) {
      FeatureConfig cfg;
      cfg.kind = kind;
      auto frames = extract_features(w, cfg, "c");
      REQUIRE(frames.size() == 56);
      for (std::size_t t = 0; t < frames.size(); ++t) {
        CHECK(frames[t].bins == bins);
        CHECK(frames[t].data.size() == 2 * bins);
        CHECK(frames[t].frame_index == t);
        CHECK(frames[t].frame_center_time == doctest::Approx((t * 2736 + 4096) / 16000.0).epsilon(1e-15));
        for (float v : frames[t].data) REQUIRE(std::isfinite(v));
      }
    }
  }

  TEST_CASE("identical channels give a floor-valued difference row") {
    auto x = testsupport::uniform_vec(20000, 4, -0.5, 0.5);
    auto frames = extract_features(stereo(x, x), FeatureConfig{}, "same");
    const float floor_v = static_cast<float>(std::log(1e-10));
    for (const auto& f : frames)
      for (std::size_t b = 0; b < f.bins; ++b) REQUIRE(f.at(1, b) == floor_v);
  }

  TEST_CASE("bit-identical on repeat") {
    auto w = stereo(testsupport::uniform_vec(30000, 5), testsupport::uniform_vec(30000, 6));
    auto a = extract_features(w, FeatureConfig{}, "x");
    auto b = extract_features(w, FeatureConfig{}, "x");
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].data == b[i].data);
  }

  TEST_CASE("mono input is duplicated") {
    Waveform w;
    w.channels = {testsupport::uniform_vec(20000, 7, -0.5, 0.5)};
    auto frames = extract_features(w, FeatureConfig{}, "mono");
    REQUIRE(!frames.empty());
    CHECK(frames[0].at(1, 10) == static_cast<float>(std::log(1e-10)));
  }

  TEST_CASE("other sample rates are resampled first") {
    auto w = sine(1000.0, 8000, 40000);
    auto frames = extract_features(w, FeatureConfig{}, "lo");
    CHECK(frames.size() == frame_count(80000, 8192, 2736));
  }

  TEST_CASE("feature kind names") {
    CHECK(parse_feature_kind("fbank") == FeatureKind::FBank);
    CHECK(std::string(to_string(FeatureKind::Scalogram)) == "scalogram");
    CHECK_THROWS_AS(parse_feature_kind("mfcc"), InvalidConfig);
  }
}

TEST_SUITE("file formats") {
  TEST_CASE("WAV round trip of PCM values") {
    TempDir dir("wav");
    auto w = stereo(pcm_vec(1000, 1), pcm_vec(1000, 2), 22050);
    write_wav(dir / "a.wav", w);
    auto r = read_wav(dir / "a.wav");
    CHECK(r.sample_rate == 22050);
    CHECK(r.channels == w.channels);
  }

  TEST_CASE("WAV corruption") {
    TempDir dir("wav");
    testsupport::spit(dir / "bad.wav", "RIFX0000WAVEfmt ");
    CHECK_THROWS_AS(read_wav(dir / "bad.wav"), FormatError);
    auto w = stereo(pcm_vec(100, 1), pcm_vec(100, 2));
    write_wav(dir / "t.wav", w);
    auto bytes = testsupport::slurp(dir / "t.wav");
    testsupport::spit(dir / "t.wav", bytes.substr(0, 30));
    CHECK_THROWS_AS(read_wav(dir / "t.wav"), FormatError);
    CHECK_THROWS_AS(read_wav(dir / "missing.wav"), Error);
  }

  TEST_CASE("AVF1 round trip is exact") {
    TempDir dir("avf");
    auto w = stereo(testsupport::uniform_vec(20000, 1), testsupport::uniform_vec(20000, 2));
    auto frames = extract_features(w, FeatureConfig{}, "clip_é");
    write_avf1(dir / "f.avf1", frames);
    auto back = read_avf1(dir / "f.avf1");
    REQUIRE(back.size() == frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
      CHECK(back[i].data == frames[i].data);
      CHECK(back[i].clip_id == "clip_é");
      CHECK(back[i].frame_center_time == frames[i].frame_center_time);
      CHECK(back[i].frame_index == i);
    }
  }

  TEST_CASE("AVF1 corruption is a FormatError") {
    TempDir dir("avf");
    auto frames = extract_features(stereo(testsupport::uniform_vec(9000, 1), testsupport::uniform_vec(9000, 2)),
                                   FeatureConfig{}, "c");
    write_avf1(dir / "f.avf1", frames);
    const auto good = testsupport::slurp(dir / "f.avf1");
    auto bad = good;
    bad[0] = 'X';
    testsupport::spit(dir / "f.avf1", bad);
    CHECK_THROWS_AS(read_avf1(dir / "f.avf1"), FormatError);
    testsupport::spit(dir / "f.avf1", good.substr(0, good.size() - 3));
    CHECK_THROWS_AS(read_avf1(dir / "f.avf1"), FormatError);
    testsupport::spit(dir / "f.avf1", good + "z");
    CHECK_THROWS_AS(read_avf1(dir / "f.avf1"), FormatError);
    bad = good;
    bad[8] = 7;  // rank
    testsupport::spit(dir / "f.avf1", bad);
    CHECK_THROWS_AS(read_avf1(dir / "f.avf1"), FormatError);
  }
}
