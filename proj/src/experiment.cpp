#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "melody/errors.hpp"
#include "melody/experiment.hpp"
#include "melody/log.hpp"
#include "melody/report_json.hpp"
#include "melody/rng.hpp"
#include "melody/selector.hpp"

namespace fs = std::filesystem;

namespace melody {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

EvalReport mean_report(const std::vector<EvalReport>& reports) {
  EvalReport m;
  m.track_id = "mean";
  if (reports.empty()) return m;
  for (const auto& r : reports) {
    m.oa += r.oa;
    m.rpa += r.rpa;
    m.vr += r.vr;
    m.vfa += r.vfa;
    m.counts += r.counts;
  }
  const double n = static_cast<double>(reports.size());
  m.oa /= n;
  m.rpa /= n;
  m.vr /= n;
  m.vfa /= n;
  return m;
}

std::vector<AudioTrack> subset(std::span<const AudioTrack> pool, const std::vector<std::size_t>& idx) {
  std::vector<AudioTrack> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(pool[i]);
  return out;
}

// Collects per-seed outcomes of one condition.
struct ConditionAccumulator {
  ConditionResult result;
  std::vector<std::vector<double>> iteration_oa;  // [iteration][seed]
  Clock::duration elapsed{};

  void add(std::uint64_t seed, const EvalReport& report, const std::vector<double>& per_iteration) {
    result.seeds.push_back(seed);
    result.per_seed.push_back(report);
    if (iteration_oa.size() < per_iteration.size()) iteration_oa.resize(per_iteration.size());
    for (std::size_t i = 0; i < per_iteration.size(); ++i) iteration_oa[i].push_back(per_iteration[i]);
  }

  ConditionResult finish() {
    result.mean = mean_report(result.per_seed);
    for (const auto& v : iteration_oa) {
      result.iteration_mean_oa.push_back(std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()));
    }
    result.wall_seconds = std::chrono::duration<double>(elapsed).count();
    return result;
  }
};

struct Condition {
  std::string name;
  SslConfig ssl;
  bool supervised = false;
  double pool_fraction = 1.0;
  bool select = false;
};

std::vector<Condition> conditions_for(const std::string& id, const RunConfig& config) {
  std::vector<Condition> out;
  const SslConfig base = config.ssl;
  auto with = [&](std::string name, auto mutate) {
    Condition c{std::move(name), base};
    c.ssl.iterations = 1;
    c.ssl.schedule = TrainSchedule::kJoint;
    c.ssl.mode = TsMode::kNoisyStudent;
    mutate(c);
    out.push_back(c);
  };
  if (id == "E1") {
    with("supervised", [](Condition& c) { c.supervised = true; });
    with("basic", [](Condition& c) { c.ssl.mode = TsMode::kBasic; });
    with("noisy-teacher-student", [](Condition& c) { c.ssl.mode = TsMode::kNoisyTeacherStudent; });
    with("noisy-student", [](Condition&) {});
  } else if (id == "E2") {
    for (auto s : {TrainSchedule::kJoint, TrainSchedule::kPretrainThenFinetune, TrainSchedule::kPretrainOnly}) {
      with(to_string(s), [s](Condition& c) { c.ssl.schedule = s; });
    }
  } else if (id == "E3") {
    for (double f : {0.25, 0.5, 1.0}) {
      for (bool sel : {false, true}) {
        const std::string name = "pool-" + std::to_string(static_cast<int>(f * 100)) + (sel ? "-selected" : "-all");
        with(name, [f, sel](Condition& c) {
          c.pool_fraction = f;
          c.select = sel;
        });
      }
    }
  } else if (id == "E4") {
    with("iterations", [](Condition& c) { c.ssl.iterations = 4; });
  } else {
    throw ArgumentError("unknown experiment id: " + id + " (expected E1, E2, E3 or E4)");
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace

CorpusData load_corpus_data(const fs::path& root, std::span<const int> pitch_shifts) {
  CorpusData d;
  d.manifest = read_manifest(root);
  d.train = load_labeled_tracks(d.manifest.labeled(Split::kTrain), pitch_shifts);
  d.val = load_labeled_tracks(d.manifest.labeled(Split::kVal));
  DatasetManifest unl = d.manifest.unlabeled();
  d.pool = load_audio_tracks(unl, false);
  for (std::size_t i = 0; i < unl.entries.size(); ++i) {
    const fs::path hidden = unl.hidden(unl.entries[i]);
    if (fs::exists(hidden)) d.pool[i].reference = read_f0(hidden);
  }
  d.test = load_audio_tracks(d.manifest.test(), true);
  log_info("corpus ", root.string(), ": ", d.train.size(), " training tracks (with shifts), ", d.val.size(),
           " validation, ", d.pool.size(), " unlabelled, ", d.test.size(), " test");
  return d;
}

ExperimentResult run_experiment(const std::string& id, const RunConfig& config, const CorpusData& data,
                                const fs::path& out_dir) {
  const auto t0 = Clock::now();
  const std::vector<Condition> conditions = conditions_for(id, config);
  if (data.test.empty()) throw DataError("the corpus has no test tracks");

  std::vector<ConditionAccumulator> acc(conditions.size());
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    acc[c].result.name = conditions[c].name;
    RunConfig rc = config;
    rc.ssl = conditions[c].ssl;
    rc.select = conditions[c].select;
    acc[c].result.config_hash = config_hash(rc, id + "/" + conditions[c].name + "/pool=" +
                                                    std::to_string(conditions[c].pool_fraction));
  }

  fs::path staging;
  if (!out_dir.empty()) {
    staging = out_dir / (id + ".partial");
    fs::remove_all(staging);
    fs::create_directories(staging);
  }

  for (std::uint64_t seed : config.seeds) {
    SslConfig teacher_cfg = config.ssl;
    teacher_cfg.train.seed = seed;
    auto t_teacher = Clock::now();
    const TeacherResult teacher = train_teacher(data.train, data.val, config.ssl.model, teacher_cfg.train);
    const EvalReport teacher_test = evaluate_model(teacher.params, data.test).corpus;
    const auto teacher_time = Clock::now() - t_teacher;
    log_info(id, " seed ", seed, ": supervised test OA ", teacher_test.oa);

    // Pool ordering for subsets and, when needed, vocal ratios of the whole pool.
    std::vector<std::size_t> order(data.pool.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "pool-subset"));
    std::shuffle(order.begin(), order.end(), rng);
    std::optional<std::vector<double>> ratios;

    for (std::size_t c = 0; c < conditions.size(); ++c) {
      const Condition& cond = conditions[c];
      auto tc = Clock::now();
      if (cond.supervised) {
        acc[c].add(seed, teacher_test, {});
        acc[c].elapsed += teacher_time;
        continue;
      }
      std::size_t take = static_cast<std::size_t>(std::lround(cond.pool_fraction * data.pool.size()));
      take = std::clamp<std::size_t>(take, 1, data.pool.size());
      std::vector<std::size_t> idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
      std::sort(idx.begin(), idx.end());
      if (cond.select) {
        if (!ratios) {
          const VoicingDetector det = config.detector == DetectorKind::kModel
                                          ? VoicingDetector::from_model(teacher.params)
                                          : VoicingDetector::heuristic();
          ratios.emplace();
          for (const auto& t : data.pool) ratios->push_back(vocal_ratio(t.clip, det));
        }
        std::erase_if(idx, [&](std::size_t i) { return (*ratios)[i] < config.threshold; });
        if (idx.empty()) throw DataError("vocal selection removed every unlabelled track");
      }
      const std::vector<AudioTrack> pool = subset(data.pool, idx);
      SslConfig ssl = cond.ssl;
      ssl.train.seed = seed;
      SslData sd{data.train, data.val, pool, data.test};
      const fs::path run_dir =
          staging.empty() ? fs::path() : staging / cond.name / ("seed_" + std::to_string(seed));
      const SelfTrainResult r = self_train(sd, ssl, teacher.params, run_dir);
      std::vector<double> per_iter;
      for (const auto& it : r.iterations) per_iter.push_back(it.student_test->oa);
      acc[c].add(seed, *r.iterations.back().student_test, per_iter);
      acc[c].result.pool_size = static_cast<int>(pool.size());
      acc[c].elapsed += Clock::now() - tc;
      log_info(id, " seed ", seed, " ", cond.name, ": test OA ", r.iterations.back().student_test->oa);
    }
  }

  ExperimentResult result;
  result.id = id;
  for (auto& a : acc) result.conditions.push_back(a.finish());
  result.wall_seconds = seconds_since(t0);
  if (!staging.empty()) {
    write_text(staging / "experiment.json", experiment_json(result) + "\n");
    write_text(staging / "table.txt", experiment_table(result));
    write_text(staging / "config.txt", canonical_text(config));
    const fs::path final_dir = out_dir / id;
    fs::remove_all(final_dir);
    fs::rename(staging, final_dir);
  }
  return result;
}

std::string experiment_json(const ExperimentResult& result) {
  nlohmann::json j;
  j["experiment"] = result.id;
  j["wall_seconds"] = round_to_micro(result.wall_seconds);
  j["conditions"] = nlohmann::json::array();
  for (const auto& c : result.conditions) {
    nlohmann::json cj;
    cj["name"] = c.name;
    cj["config_hash"] = c.config_hash;
    cj["seeds"] = c.seeds;
    cj["pool_size"] = c.pool_size;
    cj["wall_seconds"] = round_to_micro(c.wall_seconds);
    cj["per_seed"] = nlohmann::json::array();
    for (const auto& r : c.per_seed) cj["per_seed"].push_back(report_json(r));
    // One synthetic test set: the per-set block and the mean over sets
    // are reported separately so that further sets can be added.
    cj["test_sets"] = {{"test", round_to_micro(c.mean.oa)}};
    cj["mean_over_sets_oa"] = round_to_micro(c.mean.oa);
    cj["mean"] = {{"oa", round_to_micro(c.mean.oa)},
                  {"rpa", round_to_micro(c.mean.rpa)},
                  {"vr", round_to_micro(c.mean.vr)},
                  {"vfa", round_to_micro(c.mean.vfa)}};
    if (!c.iteration_mean_oa.empty()) {
      cj["iteration_mean_oa"] = nlohmann::json::array();
      for (double v : c.iteration_mean_oa) cj["iteration_mean_oa"].push_back(round_to_micro(v));
    }
    j["conditions"].push_back(cj);
  }
  return j.dump(2);
}

std::string experiment_table(const ExperimentResult& result) {
  std::ostringstream s;
  char line[256];
  s << "experiment " << result.id << "\n";
  std::snprintf(line, sizeof line, "%-26s %8s %8s %8s %8s %6s  %s\n", "condition", "OA", "RPA", "VR", "VFA", "pool",
                "config");
  s << line;
  for (const auto& c : result.conditions) {
    std::snprintf(line, sizeof line, "%-26s %8.4f %8.4f %8.4f %8.4f %6d  %s\n", c.name.c_str(), c.mean.oa,
                  c.mean.rpa, c.mean.vr, c.mean.vfa, c.pool_size, c.config_hash.c_str());
    s << line;
    for (std::size_t i = 0; i < c.iteration_mean_oa.size() && c.iteration_mean_oa.size() > 1; ++i) {
      std::snprintf(line, sizeof line, "  after iteration %zu: OA %.4f\n", i + 1, c.iteration_mean_oa[i]);
      s << line;
    }
  }
  return s.str();
}

}  // namespace melody
