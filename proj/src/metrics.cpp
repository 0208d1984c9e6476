#include <cmath>

#include "melody/errors.hpp"
#include "melody/metrics.hpp"
#include "melody/report_json.hpp"

namespace melody {
namespace {

// Absorbs the rounding of ref * 2^(tol/1200) so the boundary is inclusive.
constexpr double kBoundarySlackCents = 1e-9;

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

FrameCounts& FrameCounts::operator+=(const FrameCounts& o) {
  total += o.total;
  ref_voiced += o.ref_voiced;
  ref_unvoiced += o.ref_unvoiced;
  voiced_detected += o.voiced_detected;
  pitch_correct += o.pitch_correct;
  false_alarm += o.false_alarm;
  correct_unvoiced += o.correct_unvoiced;
  return *this;
}

EvalPair align(F0Contour ref, F0Contour est) {
  const std::size_t n = std::max(ref.size(), est.size());
  ref.freqs.resize(n, 0.0);
  est.freqs.resize(n, 0.0);
  return {std::move(ref), std::move(est)};
}

FrameCounts count_frames(const EvalPair& pair, double tolerance_cents) {
  if (pair.ref.size() != pair.est.size()) throw DataError("evaluation pair lengths differ");
  FrameCounts c;
  c.total = static_cast<std::int64_t>(pair.ref.size());
  for (std::size_t t = 0; t < pair.ref.size(); ++t) {
    const double r = pair.ref.freqs[t];
    const double e = pair.est.freqs[t];
    if (r > 0.0) {
      ++c.ref_voiced;
      if (e > 0.0) {
        ++c.voiced_detected;
        const double cents = 1200.0 * std::log2(e / r);
        if (std::abs(cents) <= tolerance_cents + kBoundarySlackCents) ++c.pitch_correct;
      }
    } else {
      ++c.ref_unvoiced;
      if (e > 0.0) {
        ++c.false_alarm;
      } else {
        ++c.correct_unvoiced;
      }
    }
  }
  return c;
}

EvalReport report_from_counts(const FrameCounts& c) {
  EvalReport r;
  r.counts = c;
  r.rpa = ratio(c.pitch_correct, c.ref_voiced);
  r.vr = ratio(c.voiced_detected, c.ref_voiced);
  r.vfa = ratio(c.false_alarm, c.ref_unvoiced);
  r.oa = ratio(c.pitch_correct + c.correct_unvoiced, c.total);
  return r;
}

EvalReport evaluate(const EvalPair& pair, double tolerance_cents) {
  return report_from_counts(count_frames(pair, tolerance_cents));
}

CorpusReport evaluate_corpus(const std::vector<EvalPair>& pairs, const std::vector<std::string>& ids,
                             double tolerance_cents) {
  if (pairs.empty()) throw DataError("evaluate_corpus needs at least one pair");
  CorpusReport out;
  FrameCounts pooled;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const FrameCounts c = count_frames(pairs[i], tolerance_cents);
    pooled += c;
    EvalReport r = report_from_counts(c);
    r.track_id = i < ids.size() ? ids[i] : std::to_string(i);
    out.tracks.push_back(std::move(r));
  }
  out.corpus = report_from_counts(pooled);
  out.corpus.track_id = "corpus";
  return out;
}

nlohmann::json report_json(const EvalReport& r) {
  return {
      {"id", r.track_id},
      {"oa", round_to_micro(r.oa)},
      {"rpa", round_to_micro(r.rpa)},
      {"vr", round_to_micro(r.vr)},
      {"vfa", round_to_micro(r.vfa)},
      {"frames", r.counts.total},
      {"voiced_ref", r.counts.ref_voiced},
      {"unvoiced_ref", r.counts.ref_unvoiced},
  };
}

std::string report_to_json(const CorpusReport& report) {
  nlohmann::json j;
  j["tracks"] = nlohmann::json::array();
  for (const auto& t : report.tracks) j["tracks"].push_back(report_json(t));
  j["corpus"] = report_json(report.corpus);
  return j.dump(2);
}

}  // namespace melody
