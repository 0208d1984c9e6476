#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include "melody/augment.hpp"
#include "melody/errors.hpp"
#include "melody/frontend.hpp"
#include "melody/rng.hpp"

namespace melody {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kRate = kTargetRate;

// Direct form I biquad, coefficients normalised by a0.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;

  void run(std::vector<double>& x) const {
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (double& v : x) {
      const double y = b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = v;
      y2 = y1;
      y1 = y;
      v = y;
    }
  }
};

Biquad normalise(double b0, double b1, double b2, double a0, double a1, double a2) {
  return {b0 / a0, b1 / a0, b2 / a0, a1 / a0, a2 / a0};
}

// Audio EQ cookbook forms; Q = 1/sqrt(2) for the pass filters, shelf slope 1.
Biquad low_pass(double fc) {
  const double w = 2 * kPi * fc / kRate, c = std::cos(w), alpha = std::sin(w) / (2 * std::numbers::sqrt2 / 2);
  return normalise((1 - c) / 2, 1 - c, (1 - c) / 2, 1 + alpha, -2 * c, 1 - alpha);
}

Biquad high_pass(double fc) {
  const double w = 2 * kPi * fc / kRate, c = std::cos(w), alpha = std::sin(w) / (2 * std::numbers::sqrt2 / 2);
  return normalise((1 + c) / 2, -(1 + c), (1 + c) / 2, 1 + alpha, -2 * c, 1 - alpha);
}

Biquad shelf(double fc, double gain_db, bool low) {
  const double A = std::pow(10.0, gain_db / 40.0);
  const double w = 2 * kPi * fc / kRate, c = std::cos(w), s = std::sin(w);
  const double alpha = s / 2 * std::numbers::sqrt2;  // slope S = 1
  const double k = 2 * std::sqrt(A) * alpha;
  if (low) {
    return normalise(A * ((A + 1) - (A - 1) * c + k), 2 * A * ((A - 1) - (A + 1) * c),
                     A * ((A + 1) - (A - 1) * c - k), (A + 1) + (A - 1) * c + k,
                     -2 * ((A - 1) + (A + 1) * c), (A + 1) + (A - 1) * c - k);
  }
  return normalise(A * ((A + 1) + (A - 1) * c + k), -2 * A * ((A - 1) + (A + 1) * c),
                   A * ((A + 1) + (A - 1) * c - k), (A + 1) - (A - 1) * c + k,
                   2 * ((A - 1) - (A + 1) * c), (A + 1) - (A - 1) * c - k);
}

void overdrive(std::vector<double>& x, double gain_db) {
  const double g = std::pow(10.0, gain_db / 20.0);
  const double norm = 1.0 / std::tanh(g);
  for (double& v : x) v = std::tanh(g * v) * norm;
}

constexpr int kPhaserStages = 4;
constexpr double kPhaserMinHz = 200.0;
constexpr double kPhaserMaxHz = 2000.0;

void phaser(std::vector<double>& x, const Phaser& p) {
  std::array<double, kPhaserStages> xs{}, ys{};
  const double ratio = kPhaserMaxHz / kPhaserMinHz;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double lfo = 0.5 * (1.0 + std::sin(2 * kPi * p.rate_hz * static_cast<double>(n) / kRate + p.lfo_phase));
    const double fb = kPhaserMinHz * std::pow(ratio, lfo);
    const double t = std::tan(kPi * fb / kRate);
    const double a = (t - 1.0) / (t + 1.0);
    double v = x[n];
    for (int s = 0; s < kPhaserStages; ++s) {
      const double y = a * v + xs[s] - a * ys[s];
      xs[s] = v;
      ys[s] = y;
      v = y;
    }
    x[n] = 0.5 * x[n] + 0.5 * v;
  }
}

class DelayLine {
 public:
  explicit DelayLine(int length) : buf_(static_cast<std::size_t>(length), 0.0) {}
  double read() const { return buf_[pos_]; }
  void write(double v) {
    buf_[pos_] = v;
    pos_ = (pos_ + 1) % buf_.size();
  }

 private:
  std::vector<double> buf_;
  std::size_t pos_ = 0;
};

int delay_samples(double ms) { return static_cast<int>(std::lround(ms * kRate / 1000.0)); }

// Schroeder: four parallel feedback combs into two series all-passes.
void reverb(std::vector<double>& x, const Reverb& r) {
  constexpr std::array<double, 4> kCombMs{29.7, 37.1, 41.1, 43.7};
  constexpr std::array<double, 2> kAllpassMs{5.0, 1.7};
  constexpr double kAllpassGain = 0.7;
  std::vector<DelayLine> combs, allpasses;
  for (double ms : kCombMs) combs.emplace_back(delay_samples(ms));
  for (double ms : kAllpassMs) allpasses.emplace_back(delay_samples(ms));
  for (double& v : x) {
    double wet = 0.0;
    for (auto& c : combs) {
      const double y = c.read();
      c.write(v + r.feedback * y);
      wet += y;
    }
    wet *= 0.25;
    for (auto& a : allpasses) {
      const double d = a.read();
      const double w = wet + kAllpassGain * d;
      a.write(w);
      wet = d - kAllpassGain * w;
    }
    v = (1.0 - r.wet) * v + r.wet * wet;
  }
}

struct Applier {
  std::vector<double>& x;
  void operator()(const LowShelf& e) const { shelf(e.corner_hz, e.gain_db, true).run(x); }
  void operator()(const HighShelf& e) const { shelf(e.corner_hz, e.gain_db, false).run(x); }
  void operator()(const LowPass& e) const { low_pass(e.cutoff_hz).run(x); }
  void operator()(const HighPass& e) const { high_pass(e.cutoff_hz).run(x); }
  void operator()(const Overdrive& e) const { overdrive(x, e.gain_db); }
  void operator()(const Phaser& e) const { phaser(x, e); }
  void operator()(const Reverb& e) const { reverb(x, e); }
};

}  // namespace

EffectChain raa_sample(std::uint64_t seed) {
  Rng rng(seed);
  EffectChain chain;
  chain.seed = seed;
  std::bernoulli_distribution include(kEffectInclusionProbability);
  // Fixed kind order; parameters are drawn only for included effects.
  if (include(rng)) chain.effects.emplace_back(LowShelf{uniform(rng, 100, 500), uniform(rng, -12, 12)});
  if (include(rng)) chain.effects.emplace_back(HighShelf{uniform(rng, 1500, 3500), uniform(rng, -12, 12)});
  if (include(rng)) chain.effects.emplace_back(LowPass{uniform(rng, 1000, 3500)});
  if (include(rng)) chain.effects.emplace_back(HighPass{uniform(rng, 40, 400)});
  if (include(rng)) chain.effects.emplace_back(Overdrive{uniform(rng, 5, 20)});
  if (include(rng)) chain.effects.emplace_back(Phaser{uniform(rng, 0.1, 2.0), uniform(rng, 0, 2 * kPi)});
  if (include(rng)) chain.effects.emplace_back(Reverb{uniform(rng, 0.6, 0.8), uniform(rng, 0.1, 0.5)});
  return chain;
}

AudioClip apply_chain(const AudioClip& clip, const EffectChain& chain) {
  if (!clip.is_mono_8k()) throw ArgumentError("apply_chain expects 8 kHz mono audio");
  if (chain.effects.empty()) return clip;
  std::vector<double> x(clip.samples.begin(), clip.samples.end());
  for (const auto& e : chain.effects) std::visit(Applier{x}, e);
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw NumericError("effect chain produced a non-finite sample");
    out[i] = static_cast<float>(x[i]);
  }
  limit_peak(out, 0.99);
  return make_mono(std::move(out));
}

std::string effect_name(const Effect& effect) {
  static constexpr std::array<const char*, kNumEffectKinds> kNames{
      "low_shelf", "high_shelf", "low_pass", "high_pass", "overdrive", "phaser", "reverb"};
  return kNames[effect.index()];
}

std::string describe(const EffectChain& chain) {
  std::ostringstream out;
  out << "seed " << chain.seed << "\n";
  for (const auto& e : chain.effects) {
    out << effect_name(e);
    std::visit(
        [&out](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, LowShelf> || std::is_same_v<T, HighShelf>) {
            out << " corner_hz=" << p.corner_hz << " gain_db=" << p.gain_db;
          } else if constexpr (std::is_same_v<T, LowPass> || std::is_same_v<T, HighPass>) {
            out << " cutoff_hz=" << p.cutoff_hz;
          } else if constexpr (std::is_same_v<T, Overdrive>) {
            out << " gain_db=" << p.gain_db;
          } else if constexpr (std::is_same_v<T, Phaser>) {
            out << " rate_hz=" << p.rate_hz << " lfo_phase=" << p.lfo_phase;
          } else {
            out << " feedback=" << p.feedback << " wet=" << p.wet;
          }
        },
        e);
    out << "\n";
  }
  return out.str();
}

std::pair<AudioClip, F0Contour> pitch_shift_pair(const AudioClip& clip, const F0Contour& contour,
                                                 int semitones) {
  if (!clip.is_mono_8k()) throw ArgumentError("pitch_shift_pair expects 8 kHz mono audio");
  if (semitones == 0 || std::abs(semitones) > 12) {
    throw ArgumentError("pitch shift must be a non-zero number of semitones within one octave");
  }
  const double factor = std::exp2(semitones / 12.0);  // frequency multiplier
  const double ratio = 1.0 / factor;                  // duration multiplier
  AudioClip shifted = make_mono(resample(clip.samples, ratio));

  F0Contour out;
  out.hop_seconds = contour.hop_seconds;
  const int n_frames = frames_for_samples(shifted.samples.size());
  out.freqs.resize(static_cast<std::size_t>(n_frames), 0.0);
  if (contour.freqs.empty()) return {std::move(shifted), std::move(out)};
  const double last = static_cast<double>(contour.size() - 1);
  for (int j = 0; j < n_frames; ++j) {
    const double u = std::min(static_cast<double>(j) / ratio, last);
    const auto lo = static_cast<std::size_t>(std::floor(u));
    const auto hi = static_cast<std::size_t>(std::ceil(u));
    const double flo = contour.freqs[lo], fhi = contour.freqs[hi];
    double f;
    if (flo > 0.0 && fhi > 0.0) {
      const double w = u - static_cast<double>(lo);
      f = std::exp2((1.0 - w) * std::log2(flo) + w * std::log2(fhi));
    } else {
      f = contour.freqs[static_cast<std::size_t>(std::lround(u))];
    }
    out.freqs[static_cast<std::size_t>(j)] = f * factor;
  }
  return {std::move(shifted), std::move(out)};
}

}  // namespace melody
