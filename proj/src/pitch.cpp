#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "melody/errors.hpp"
#include "melody/pitch.hpp"

namespace melody {

LabelResult quantize_frequency(double hz) {
  if (!std::isfinite(hz) || hz < 0.0) throw DataError("frequency must be finite and non-negative");
  if (hz == 0.0) return {PitchLabel{0}, false};
  // std::round rounds halves away from zero.
  const double steps = std::round(kBinsPerOctave * std::log2(hz / kLowestHz));
  const double index = 1.0 + steps;
  if (index < 1.0) return {PitchLabel{1}, true};
  if (index > kNumPitchBins) return {PitchLabel{kNumPitchBins}, true};
  return {PitchLabel{static_cast<int>(index)}, false};
}

PitchLabel freq_to_label(double hz) { return quantize_frequency(hz).label; }

double label_to_freq(PitchLabel label) {
  if (label.index <= 0) return 0.0;
  return kLowestHz * std::exp2(static_cast<double>(label.index - 1) / kBinsPerOctave);
}

LabelSequence contour_to_labels(const F0Contour& contour) {
  LabelSequence out;
  out.labels.reserve(contour.size());
  for (double f : contour.freqs) {
    const auto r = quantize_frequency(f);
    out.labels.push_back(r.label);
    out.clamped += r.clamped ? 1 : 0;
  }
  return out;
}

LabelSequence shift_labels(std::span<const PitchLabel> labels, int semitones) {
  if (std::abs(semitones) > 4) throw ArgumentError("label shift limited to 4 semitones");
  LabelSequence out;
  out.labels.reserve(labels.size());
  for (auto l : labels) {
    if (!l.voiced()) {
      out.labels.push_back(l);
      continue;
    }
    const int shifted = l.index + kBinsPerSemitone * semitones;
    const int bounded = std::clamp(shifted, 1, kNumPitchBins);
    out.clamped += bounded != shifted ? 1 : 0;
    out.labels.push_back(PitchLabel{bounded});
  }
  return out;
}

F0Contour labels_to_contour(std::span<const PitchLabel> labels) {
  F0Contour c;
  c.freqs.reserve(labels.size());
  for (auto l : labels) c.freqs.push_back(label_to_freq(l));
  return c;
}

void validate(const F0Contour& contour) {
  if (!(contour.hop_seconds > 0.0)) throw DataError("contour hop must be positive");
  for (double f : contour.freqs) {
    if (!std::isfinite(f) || f < 0.0) throw DataError("contour frequencies must be finite and >= 0");
  }
}

double round_to_micro(double value) { return std::round(value * 1e6) / 1e6; }

namespace {

void append_fixed(std::string& line, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 6);
  line.append(buf, res.ptr);
}

}  // namespace

void write_f0(std::ostream& out, const F0Contour& contour) {
  validate(contour);
  std::string line;
  for (std::size_t t = 0; t < contour.size(); ++t) {
    line.clear();
    append_fixed(line, contour.time_of(t));
    line += '\t';
    append_fixed(line, contour.freqs[t]);
    line += '\n';
    out << line;
  }
}

void write_f0(const std::filesystem::path& path, const F0Contour& contour) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write f0 file: " + path.string());
  write_f0(f, contour);
  if (!f) throw DataError("write failed: " + path.string());
}

F0Contour read_f0(std::istream& in) {
  F0Contour c;
  std::string line;
  std::vector<double> times;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const char* p = line.data();
    const char* end = p + line.size();
    double t = 0.0, f = 0.0;
    auto r1 = std::from_chars(p, end, t);
    if (r1.ec != std::errc{}) throw DataError("bad f0 time at line " + std::to_string(line_no));
    p = r1.ptr;
    while (p < end && (*p == '\t' || *p == ' ' || *p == ',')) ++p;
    auto r2 = std::from_chars(p, end, f);
    if (r2.ec != std::errc{}) throw DataError("bad f0 value at line " + std::to_string(line_no));
    // MIREX files sometimes mark unvoiced frames with negative pitch.
    if (f < 0.0) f = 0.0;
    times.push_back(t);
    c.freqs.push_back(f);
  }
  if (times.size() >= 2) {
    const double hop = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
    if (std::abs(hop - kHopSeconds) > 1e-4) {
      throw DataError("f0 file is not on the 10 ms grid");
    }
  }
  validate(c);
  return c;
}

F0Contour read_f0(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open f0 file: " + path.string());
  return read_f0(f);
}

}  // namespace melody
