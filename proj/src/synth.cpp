#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include "melody/errors.hpp"
#include "melody/frontend.hpp"
#include "melody/rng.hpp"
#include "melody/synth.hpp"

namespace melody {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kRate = kTargetRate;
constexpr std::array<int, 7> kMajorScale{0, 2, 4, 5, 7, 9, 11};
constexpr int kLowestNote = 40 + 5;   // E2 + 5 semitones
constexpr int kHighestNote = 95 - 5;  // B6 - 5 semitones
constexpr double kHarmonicCeilingHz = 3600.0;
constexpr int kMaxHarmonics = 12;

double midi_to_hz(double midi) { return 440.0 * std::exp2((midi - 69.0) / 12.0); }

int scale_note(int key, int degree) {
  const int octave = degree >= 0 ? degree / 7 : -((-degree + 6) / 7);
  return key + 12 * octave + kMajorScale[static_cast<std::size_t>(degree - 7 * octave)];
}

// Splits `total` into parts proportional to `weights` (largest remainder).
std::vector<int> apportion(int total, const std::vector<double>& weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<int> parts(weights.size());
  std::vector<std::pair<double, std::size_t>> rem;
  int used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = total * weights[i] / sum;
    parts[i] = static_cast<int>(std::floor(exact));
    used += parts[i];
    rem.emplace_back(exact - parts[i], i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first > b.first; });
  for (int k = 0; k < total - used; ++k) ++parts[rem[static_cast<std::size_t>(k)].second];
  return parts;
}

void check_range(double v, double lo, double hi, const char* name) {
  if (!(v >= lo && v <= hi)) throw ArgumentError(std::string("song spec field out of range: ") + name);
}

// Frame owning sample n: frames are centred on multiples of 80 samples.
std::size_t owning_frame(std::size_t n) { return (n + kHopSamples / 2) / kHopSamples; }

}  // namespace

std::string to_string(SongKind kind) { return kind == SongKind::kVocal ? "vocal" : "instrumental"; }

SongKind song_kind_from_string(const std::string& s) {
  if (s == "vocal") return SongKind::kVocal;
  if (s == "instrumental") return SongKind::kInstrumental;
  throw DataError("unknown song kind: " + s);
}

SongSpec sample_song_spec(std::uint64_t seed, SongKind kind) {
  Rng rng(derive_seed(seed, "song-spec"));
  SongSpec s;
  s.seed = seed;
  s.kind = kind;
  s.key = uniform_int(rng, 52, 64);
  s.tempo_bpm = uniform(rng, 60, 140);
  s.duration_seconds = uniform(rng, 6, 12);
  s.vibrato_rate_hz = uniform(rng, 4, 7);
  s.vibrato_depth_cents = uniform(rng, 10, 60);
  s.portamento_ms = uniform(rng, 30, 80);
  s.voicing_density = uniform(rng, 0.5, 0.9);
  s.snr_db = uniform(rng, -5, 10);
  return s;
}

void validate(const SongSpec& s) {
  check_range(s.key, 52, 64, "key");
  check_range(s.tempo_bpm, 60, 140, "tempo_bpm");
  check_range(s.duration_seconds, 6, 12, "duration_seconds");
  check_range(s.vibrato_rate_hz, 4, 7, "vibrato_rate_hz");
  check_range(s.vibrato_depth_cents, 10, 60, "vibrato_depth_cents");
  check_range(s.portamento_ms, 30, 80, "portamento_ms");
  check_range(s.voicing_density, 0.5, 0.9, "voicing_density");
  check_range(s.snr_db, -5, 10, "snr_db");
}

std::size_t sample_count(const SongSpec& spec) {
  return static_cast<std::size_t>(std::llround(spec.duration_seconds * kRate));
}

F0Contour sample_contour(const SongSpec& spec) {
  validate(spec);
  const int n_frames = frames_for_samples(sample_count(spec));
  F0Contour contour;
  contour.freqs.assign(static_cast<std::size_t>(n_frames), 0.0);
  if (spec.kind == SongKind::kInstrumental) return contour;

  Rng rng(derive_seed(spec.seed, "contour"));
  const int voiced = static_cast<int>(std::lround(spec.voicing_density * n_frames));
  const int n_phrases = std::max(1, static_cast<int>(std::lround(spec.duration_seconds / 3.0)));

  std::vector<double> phrase_w, gap_w;
  for (int i = 0; i < n_phrases; ++i) phrase_w.push_back(uniform(rng, 0.6, 1.4));
  for (int i = 0; i <= n_phrases; ++i) {
    const bool edge = i == 0 || i == n_phrases;
    gap_w.push_back(edge ? uniform(rng, 0.2, 1.0) : uniform(rng, 0.6, 1.4));
  }
  const auto phrase_len = apportion(voiced, phrase_w);
  const auto gap_len = apportion(n_frames - voiced, gap_w);

  const int base = spec.key + 12 * uniform_int(rng, 0, 1);
  const int lo_note = std::max(kLowestNote, base - 9);
  const int hi_note = std::min(kHighestNote, base + 12);
  const double beat_frames = 6000.0 / spec.tempo_bpm;
  constexpr std::array<double, 5> kBeats{0.5, 1.0, 1.0, 1.5, 2.0};
  constexpr std::array<int, 11> kSteps{-2, -1, -1, 0, 1, 1, 2, -3, 3, -4, 4};
  const double glide_s = spec.portamento_ms / 1000.0;
  const double vib_phase = uniform(rng, 0, 2 * kPi);

  int degree = uniform_int(rng, 0, 4);
  auto in_range = [&](int d) {
    const int m = scale_note(base, d);
    return m >= lo_note && m <= hi_note;
  };
  while (!in_range(degree)) degree += scale_note(base, degree) < lo_note ? 1 : -1;

  int frame = 0;
  for (int p = 0; p < n_phrases; ++p) {
    frame += gap_len[static_cast<std::size_t>(p)];
    const int phrase_end = frame + phrase_len[static_cast<std::size_t>(p)];
    double prev_cents = 0.0;
    bool first = true;
    while (frame < phrase_end) {
      const double beats = kBeats[static_cast<std::size_t>(uniform_int(rng, 0, kBeats.size() - 1))];
      int len = std::max(8, static_cast<int>(std::lround(beats * beat_frames)));
      if (phrase_end - (frame + len) < 8) len = phrase_end - frame;

      if (!first) {
        int step = kSteps[static_cast<std::size_t>(uniform_int(rng, 0, kSteps.size() - 1))];
        if (!in_range(degree + step)) step = -step;
        if (in_range(degree + step)) degree += step;
      }
      const double target = 100.0 * scale_note(base, degree);
      for (int k = 0; k < len; ++k) {
        const double tau = k * kHopSeconds;
        const double t = (frame + k) * kHopSeconds;
        double cents;
        if (!first && tau < glide_s) {
          cents = target + (prev_cents - target) * std::exp(-5.0 * tau / glide_s);
        } else {
          cents = target + spec.vibrato_depth_cents * std::sin(2 * kPi * spec.vibrato_rate_hz * t + vib_phase);
        }
        contour.freqs[static_cast<std::size_t>(frame + k)] = round_to_micro(midi_to_hz(cents / 100.0));
      }
      prev_cents = target;
      first = false;
      frame += len;
    }
  }
  return contour;
}

AudioClip render_vocal(const F0Contour& contour, std::uint64_t seed, std::size_t n_samples) {
  validate(contour);
  for (double f : contour.freqs) {
    if (f >= kRate / 2) throw DataError("contour frequency at or above Nyquist cannot be rendered");
  }
  const std::size_t n_frames = contour.size();
  if (n_samples == 0) n_samples = n_frames * kHopSamples;
  if (frames_for_samples(n_samples) != static_cast<int>(n_frames)) {
    throw ArgumentError("sample count does not match the contour grid");
  }

  Rng rng(derive_seed(seed, "vocal-phase"));
  std::array<double, kMaxHarmonics> phase0{};
  for (auto& p : phase0) p = uniform(rng, 0, 2 * kPi);

  std::vector<char> voiced(n_samples, 0);
  for (std::size_t n = 0; n < n_samples; ++n) {
    const std::size_t k = std::min(owning_frame(n), n_frames - 1);
    voiced[n] = contour.freqs[k] > 0.0;
  }

  // Raised-cosine fades inside each voiced run.
  std::vector<double> env(n_samples, 0.0);
  for (std::size_t a = 0; a < n_samples;) {
    if (!voiced[a]) {
      ++a;
      continue;
    }
    std::size_t b = a;
    while (b < n_samples && voiced[b]) ++b;
    const std::size_t run = b - a;
    const std::size_t fade = std::min<std::size_t>(kHopSamples, run / 2);
    for (std::size_t i = 0; i < run; ++i) {
      double g = 1.0;
      if (i < fade) g = 0.5 - 0.5 * std::cos(kPi * (i + 0.5) / fade);
      if (run - 1 - i < fade) g = std::min(g, 0.5 - 0.5 * std::cos(kPi * (run - 1 - i + 0.5) / fade));
      env[a + i] = g;
    }
    a = b;
  }

  std::vector<float> out(n_samples, 0.0f);
  double phase = 0.0;
  constexpr double kLevel = 0.25;
  for (std::size_t n = 0; n < n_samples; ++n) {
    if (!voiced[n]) continue;
    const double pos = static_cast<double>(n) / kHopSamples;
    const auto i0 = std::min(static_cast<std::size_t>(pos), n_frames - 1);
    const std::size_t i1 = std::min(i0 + 1, n_frames - 1);
    const double fa = contour.freqs[i0], fb = contour.freqs[i1];
    double f;
    if (fa > 0.0 && fb > 0.0) {
      f = fa + (fb - fa) * (pos - static_cast<double>(i0));
    } else {
      f = contour.freqs[std::min(owning_frame(n), n_frames - 1)];
    }
    const int harmonics = std::min(kMaxHarmonics, static_cast<int>(kHarmonicCeilingHz / f));
    double acc = 0.0;
    for (int h = 1; h <= harmonics; ++h) {
      acc += std::sin(h * phase + phase0[static_cast<std::size_t>(h - 1)]) / h;
    }
    out[n] = static_cast<float>(kLevel * env[n] * acc);
    phase = std::fmod(phase + 2 * kPi * f / kRate, 2 * kPi);
  }
  return make_mono(std::move(out));
}

namespace {

// Band-limited sawtooth at fixed frequency, added into out[start, end) with
// linear attack/release ramps.
void add_saw(std::vector<double>& out, std::size_t start, std::size_t end, double freq, double amp,
             int max_harmonics, Rng& rng) {
  const int harmonics = std::min(max_harmonics, static_cast<int>(3900.0 / freq));
  const std::size_t len = end - start;
  const std::size_t ramp = std::min<std::size_t>(240, len / 2);
  std::vector<double> note(len, 0.0);
  for (int k = 1; k <= harmonics; ++k) {
    std::complex<double> z = std::polar(1.0, uniform(rng, 0, 2 * kPi));
    const std::complex<double> step = std::polar(1.0, 2 * kPi * k * freq / kRate);
    const double a = 1.0 / k;
    for (std::size_t i = 0; i < len; ++i) {
      note[i] += a * z.imag();
      z *= step;
    }
  }
  for (std::size_t i = 0; i < len; ++i) {
    double g = 1.0;
    if (i < ramp) g = static_cast<double>(i) / ramp;
    if (len - i < ramp) g = std::min(g, static_cast<double>(len - i) / ramp);
    out[start + i] += amp * g * note[i];
  }
}

}  // namespace

AudioClip render_accompaniment(const SongSpec& spec) {
  validate(spec);
  Rng rng(derive_seed(spec.seed, "accompaniment"));
  const std::size_t n = sample_count(spec);
  const double beat = kRate * 60.0 / spec.tempo_bpm;
  const double bar = 4 * beat;
  constexpr std::array<int, 4> kProgression{0, 3, 4, 5};  // I IV V vi

  std::vector<double> pads(n, 0.0);
  for (int b = 0; static_cast<double>(b) * bar < static_cast<double>(n); ++b) {
    const auto start = static_cast<std::size_t>(std::lround(b * bar));
    const auto end = std::min(n, static_cast<std::size_t>(std::lround((b + 1) * bar)));
    if (end <= start) break;
    const int degree = b == 0 ? 0 : kProgression[static_cast<std::size_t>(uniform_int(rng, 0, 3))];
    int root = scale_note(spec.key, degree);
    const int shift = 12 * static_cast<int>(std::floor((root - 48) / 12.0));
    for (int v = 0; v < 3; ++v) {
      const double midi = scale_note(spec.key, degree + 2 * v) - shift + uniform(rng, -0.05, 0.05);
      add_saw(pads, start, end, midi_to_hz(midi), 0.15, 40, rng);
    }
    root -= shift;
    add_saw(pads, start, end, midi_to_hz(root - 12), 0.3, 10, rng);
  }

  double pad_power = 0.0;
  for (double v : pads) pad_power += v * v;
  pad_power /= static_cast<double>(n);

  // Paul Kellet's pink-noise filter.
  std::vector<double> pink(n);
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  for (auto& v : pink) {
    const double w = uniform(rng, -1, 1);
    b0 = 0.99886 * b0 + w * 0.0555179;
    b1 = 0.99332 * b1 + w * 0.0750759;
    b2 = 0.96900 * b2 + w * 0.1538520;
    b3 = 0.86650 * b3 + w * 0.3104856;
    b4 = 0.55000 * b4 + w * 0.5329522;
    b5 = -0.7616 * b5 - w * 0.0168980;
    v = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
    b6 = w * 0.115926;
  }
  double pink_power = 0.0;
  for (double v : pink) pink_power += v * v;
  pink_power /= static_cast<double>(n);
  const double pink_gain = pink_power > 0 ? std::sqrt(0.01 * pad_power / pink_power) : 0.0;

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = pads[i] + pink_gain * pink[i];

  const double hit_level = 2.0 * std::sqrt(pad_power);
  for (int k = 0; static_cast<double>(k) * beat < static_cast<double>(n); ++k) {
    const auto start = static_cast<std::size_t>(std::lround(k * beat));
    for (std::size_t i = 0; i < 800 && start + i < n; ++i) {
      const double t = static_cast<double>(i);
      const double click = uniform(rng, -1, 1) * std::exp(-t / 40.0);
      const double thump = 0.8 * std::sin(2 * kPi * 60.0 * t / kRate) * std::exp(-t / 400.0);
      out[start + i] += hit_level * (click + thump);
    }
  }

  double p = 0.0;
  for (double v : out) p = std::max(p, std::abs(v));
  const double g = p > 0.0 ? 0.5 / p : 0.0;
  std::vector<float> samples(n);
  for (std::size_t i = 0; i < n; ++i) samples[i] = static_cast<float>(g * out[i]);
  return make_mono(std::move(samples));
}

MixResult mix(const AudioClip& vocal, const AudioClip& accomp, double snr_db) {
  if (vocal.samples.size() != accomp.samples.size()) throw ArgumentError("mix needs equal-length stems");
  const std::size_t n = vocal.samples.size();
  const std::size_t n_frames = static_cast<std::size_t>(frames_for_samples(n));

  // Frames where the vocal sounds; each frame owns the 80 samples around it.
  std::vector<char> frame_voiced(n_frames, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (vocal.samples[i] != 0.0f) frame_voiced[std::min(owning_frame(i), n_frames - 1)] = 1;
  }
  double pv = 0.0, pa = 0.0, pa_all = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = accomp.samples[i];
    pa_all += a * a;
    if (frame_voiced[std::min(owning_frame(i), n_frames - 1)]) {
      pv += static_cast<double>(vocal.samples[i]) * vocal.samples[i];
      pa += a * a;
    }
  }
  if (pa_all == 0.0) throw DataError("accompaniment has zero energy");

  MixResult r;
  r.vocal_gain = pv > 0.0 ? std::sqrt(pa / pv * std::pow(10.0, snr_db / 10.0)) : 0.0;
  std::vector<double> v(n), a(n), m(n);
  double p = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = r.vocal_gain * vocal.samples[i];
    a[i] = accomp.samples[i];
    m[i] = v[i] + a[i];
    p = std::max(p, std::abs(m[i]));
  }
  const double g = p > 0.99 ? 0.99 / p : 1.0;
  std::vector<float> fv(n), fa(n), fm(n);
  for (std::size_t i = 0; i < n; ++i) {
    fv[i] = static_cast<float>(g * v[i]);
    fa[i] = static_cast<float>(g * a[i]);
    fm[i] = static_cast<float>(g * m[i]);
  }
  r.mixture = make_mono(std::move(fm));
  r.vocal = make_mono(std::move(fv));
  r.accomp = make_mono(std::move(fa));
  return r;
}

RenderedTrack render_track(const SongSpec& spec) {
  RenderedTrack t;
  const std::size_t n = sample_count(spec);
  t.contour = sample_contour(spec);
  const AudioClip accomp = render_accompaniment(spec);
  const AudioClip vocal = spec.kind == SongKind::kVocal
                              ? render_vocal(t.contour, derive_seed(spec.seed, "vocal"), n)
                              : make_mono(std::vector<float>(n, 0.0f));
  MixResult m = mix(vocal, accomp, spec.snr_db);
  t.mixture = std::move(m.mixture);
  t.vocal_stem = std::move(m.vocal);
  t.accomp_stem = std::move(m.accomp);
  return t;
}

}  // namespace melody
