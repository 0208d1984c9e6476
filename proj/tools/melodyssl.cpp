// Command-line front end: corpus synthesis, supervised and self-training,
// vocal selection, augmentation preview, inference, scoring and the
// experiment playbook.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "melody/augment.hpp"
#include "melody/config.hpp"
#include "melody/corpus.hpp"
#include "melody/errors.hpp"
#include "melody/experiment.hpp"
#include "melody/log.hpp"
#include "melody/metrics.hpp"
#include "melody/parallel.hpp"
#include "melody/report_json.hpp"
#include "melody/selector.hpp"
#include "melody/ssl.hpp"

namespace fs = std::filesystem;
using namespace melody;

namespace {

// --threads on the command line wins over run.threads in a config file.
bool threads_from_cli = false;

void apply_config_threads(const RunConfig& rc) {
  if (!threads_from_cli) set_thread_count(rc.threads);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    out << text;
    if (!out) throw DataError("cannot write " + path.string());
  }
  fs::rename(tmp, path);
}

std::vector<int> parse_shifts(const std::string& text) {
  std::vector<int> out;
  if (text == "none" || text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::logic_error&) {
      throw ArgumentError("invalid pitch shift list: " + text);
    }
  }
  return out;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  fs::path out;
  CorpusCounts counts{40, 200, 30, 60};
  std::uint64_t seed = 7;
};

int cmd_synth(const SynthArgs& a) {
  if (a.counts.labeled < 0 || a.counts.unlabeled < 0 || a.counts.test < 0 || a.counts.instrumental < 0) {
    throw ArgumentError("track counts must be non-negative");
  }
  if (a.counts.labeled == 0) log_info("warning: --labeled 0 produces a corpus without train/val labelled tracks");
  const DatasetManifest m = build_corpus(a.out, a.counts, a.seed);
  double seconds = 0.0;
  for (const auto& e : m.entries) seconds += load_wav(m.audio(e)).duration_seconds();
  std::printf("corpus %s: %zu tracks (%d labelled, %d unlabelled vocal, %d instrumental, %d test), %.1f s of audio\n",
              a.out.string().c_str(), m.entries.size(), a.counts.labeled, a.counts.unlabeled, a.counts.instrumental,
              a.counts.test, seconds);
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  fs::path corpus, out, report;
  std::string preset = "desk";
  std::string shifts = "-2,-1,1,2";
  TrainOptions options;
};

int cmd_train(const TrainArgs& a) {
  const std::vector<int> shifts = parse_shifts(a.shifts);
  const ModelConfig model = model_preset(a.preset);
  const DatasetManifest m = read_manifest(a.corpus);
  const auto train = load_labeled_tracks(m.labeled(Split::kTrain), shifts);
  const auto val = load_labeled_tracks(m.labeled(Split::kVal));
  const auto test = load_audio_tracks(m.test(), true);
  const TeacherResult r = train_teacher(train, val, model, a.options);
  save_checkpoint(a.out, r.params);

  nlohmann::json j;
  j["checkpoint"] = a.out.string();
  j["best_epoch"] = r.history.best_epoch;
  j["best_val_oa"] = round_to_micro(r.history.best_val_oa);
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : r.history.epochs) {
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"train_loss", round_to_micro(e.train_loss)},
                           {"val_oa", round_to_micro(e.val_oa)},
                           {"learning_rate", e.learning_rate}});
  }
  if (!test.empty()) j["test"] = report_json(evaluate_model(r.params, test).corpus);
  if (!a.report.empty()) write_text(a.report, j.dump(2) + "\n");
  std::printf("saved %s (best epoch %d, validation OA %.4f", a.out.string().c_str(), r.history.best_epoch,
              r.history.best_val_oa);
  if (j.contains("test")) std::printf(", test OA %.4f", j["test"]["oa"].get<double>());
  std::printf(")\n");
  return 0;
}

// ------------------------------------------------------------ ssl-train

struct SslArgs {
  fs::path corpus, out, config, teacher;
  std::string mode, schedule, form, detector, shifts;
  std::optional<int> iterations, epochs;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  bool select = false, warm_start = false;
};

int cmd_ssl_train(const SslArgs& a) {
  RunConfig rc = a.config.empty() ? RunConfig{} : load_config(a.config);
  apply_config_threads(rc);
  if (!a.corpus.empty()) rc.corpus = a.corpus;
  if (!a.out.empty()) rc.output = a.out;
  if (!a.mode.empty()) rc.ssl.mode = ts_mode_from_string(a.mode);
  if (!a.schedule.empty()) rc.ssl.schedule = schedule_from_string(a.schedule);
  if (!a.form.empty()) rc.ssl.form = label_form_from_string(a.form);
  if (!a.detector.empty()) rc.detector = detector_kind_from_string(a.detector);
  if (!a.shifts.empty()) rc.pitch_shifts = parse_shifts(a.shifts);
  if (a.iterations) rc.ssl.iterations = *a.iterations;
  if (a.epochs) rc.ssl.train.epochs = *a.epochs;
  if (a.seed) rc.seeds = {*a.seed};
  if (a.threshold) rc.threshold = *a.threshold;
  if (a.select) rc.select = true;
  if (a.warm_start) rc.ssl.warm_start = true;
  validate(rc.ssl);
  if (rc.corpus.empty() || rc.output.empty()) throw ArgumentError("ssl-train needs a corpus and an output directory");
  rc.ssl.train.seed = rc.seeds.front();

  CorpusData data = load_corpus_data(rc.corpus, rc.pitch_shifts);
  const fs::path staging = fs::path(rc.output.string() + ".partial");
  fs::remove_all(staging);
  fs::create_directories(staging);

  std::optional<ModelParams> teacher;
  if (!a.teacher.empty()) {
    teacher = load_checkpoint(a.teacher);
  } else {
    teacher = train_teacher(data.train, data.val, rc.ssl.model, rc.ssl.train).params;
  }

  if (rc.select) {
    const VoicingDetector det =
        rc.detector == DetectorKind::kModel ? VoicingDetector::from_model(*teacher) : VoicingDetector::heuristic();
    const SelectionResult sel = select(data.manifest.unlabeled(), det, rc.threshold);
    write_selection(staging / "selection.jsonl", sel.report);
    std::vector<AudioTrack> kept;
    for (std::size_t i = 0; i < data.pool.size(); ++i) {
      if (sel.report.entries[i].selected) kept.push_back(std::move(data.pool[i]));
    }
    log_info("vocal selection kept ", kept.size(), " of ", data.pool.size(), " unlabelled tracks");
    data.pool = std::move(kept);
  }

  SslData sd{data.train, data.val, data.pool, data.test};
  const SelfTrainResult r = self_train(sd, rc.ssl, std::move(teacher), staging);
  save_checkpoint(staging / "final.ckpt", r.final_model);
  write_text(staging / "config.txt", canonical_text(rc));

  nlohmann::json j;
  j["config_hash"] = config_hash(rc);
  j["iterations"] = nlohmann::json::array();
  for (const auto& it : r.iterations) {
    nlohmann::json ij{{"iteration", it.iteration},
                      {"teacher_val_oa", round_to_micro(it.teacher_val_oa)},
                      {"student_val_oa", round_to_micro(it.student_val_oa)}};
    if (it.teacher_test) ij["teacher_test"] = report_json(*it.teacher_test);
    if (it.student_test) ij["student_test"] = report_json(*it.student_test);
    j["iterations"].push_back(ij);
  }
  write_text(staging / "summary.json", j.dump(2) + "\n");
  fs::remove_all(rc.output);
  fs::rename(staging, rc.output);

  for (const auto& it : r.iterations) {
    std::printf("iteration %d: teacher test OA %.4f -> student test OA %.4f\n", it.iteration,
                it.teacher_test ? it.teacher_test->oa : 0.0, it.student_test ? it.student_test->oa : 0.0);
  }
  return 0;
}

// --------------------------------------------------------------- select

struct SelectArgs {
  fs::path corpus, out, checkpoint;
  std::string detector = "heuristic";
  double threshold = kDefaultVocalThreshold;
};

int cmd_select(const SelectArgs& a) {
  const DetectorKind kind = detector_kind_from_string(a.detector);
  std::optional<ModelParams> model;
  if (kind == DetectorKind::kModel) {
    if (a.checkpoint.empty()) throw ArgumentError("the model detector needs --checkpoint");
    model = load_checkpoint(a.checkpoint);
  }
  const VoicingDetector det = model ? VoicingDetector::from_model(*model) : VoicingDetector::heuristic();
  const DatasetManifest pool = read_manifest(a.corpus).unlabeled();
  const SelectionResult r = select(pool, det, a.threshold);
  const fs::path out = a.out.empty() ? a.corpus / "selection.jsonl" : a.out;
  write_selection(out, r.report);
  std::printf("selected %zu of %zu unlabelled tracks (threshold %.3f, %s detector) -> %s\n",
              r.selected.entries.size(), pool.entries.size(), a.threshold, to_string(kind).c_str(),
              out.string().c_str());
  return 0;
}

// ------------------------------------------------------ augment-preview

struct AugmentArgs {
  fs::path in, out, f0_in, f0_out;
  std::uint64_t seed = 1;
  int shift = 0;
};

int cmd_augment_preview(const AugmentArgs& a) {
  AudioClip clip = to_mono_8k(load_wav(a.in));
  if (a.shift != 0) {
    F0Contour contour = a.f0_in.empty() ? F0Contour{} : read_f0(a.f0_in);
    if (contour.freqs.empty()) contour.freqs.assign(static_cast<std::size_t>(frames_for_samples(clip.frames())), 0.0);
    auto [shifted, shifted_contour] = pitch_shift_pair(clip, contour, a.shift);
    clip = std::move(shifted);
    if (!a.f0_out.empty()) write_f0(a.f0_out, shifted_contour);
    std::printf("pitch shift %+d semitones\n", a.shift);
  }
  const EffectChain chain = raa_sample(a.seed);
  const AudioClip out = apply_chain(clip, chain);
  write_wav(a.out, out);

  // Sidecar listing the sampled chain next to the audio.
  fs::path sidecar = a.out;
  sidecar.replace_extension(".chain.txt");
  std::string text = describe(chain);
  if (a.shift != 0) text = "pitch_shift " + std::to_string(a.shift) + " semitones\n" + text;
  {
    std::ofstream f(sidecar, std::ios::trunc);
    f << text;
    if (!f) throw DataError("cannot write " + sidecar.string());
  }
  std::printf("%s", text.c_str());
  std::printf("wrote %s and %s\n", a.out.string().c_str(), sidecar.string().c_str());
  return 0;
}

// -------------------------------------------------------------- predict

struct PredictArgs {
  fs::path checkpoint, in, out;
};

int cmd_predict(const PredictArgs& a) {
  const ModelParams params = load_checkpoint(a.checkpoint);
  const AudioClip clip = load_wav(a.in);
  const F0Contour contour = predict_contour(params, clip);
  write_f0(a.out, contour);
  std::size_t voiced = 0;
  for (double f : contour.freqs) voiced += f > 0.0;
  std::printf("%zu frames (%zu voiced) -> %s\n", contour.size(), voiced, a.out.string().c_str());
  return 0;
}

// ----------------------------------------------------------------- eval

struct EvalArgs {
  fs::path ref, est, corpus, out;
  double tolerance = kDefaultToleranceCents;
};

int cmd_eval(const EvalArgs& a) {
  std::vector<EvalPair> pairs;
  std::vector<std::string> ids;
  if (fs::is_directory(a.ref) || fs::is_directory(a.est)) {
    if (!fs::is_directory(a.ref) || !fs::is_directory(a.est)) {
      throw ArgumentError("--ref and --est must both be files or both be directories");
    }
    if (a.corpus.empty()) throw ArgumentError("directory evaluation needs --corpus for the track list");
    for (const auto& e : read_manifest(a.corpus).entries) {
      const fs::path r = a.ref / (e.track_id + ".f0");
      if (!fs::exists(r)) continue;
      const fs::path s = a.est / (e.track_id + ".f0");
      if (!fs::exists(s)) throw DataError("missing estimate for " + e.track_id);
      pairs.push_back(align(read_f0(r), read_f0(s)));
      ids.push_back(e.track_id);
    }
    if (pairs.empty()) throw DataError("no manifest track has a reference file in " + a.ref.string());
  } else {
    pairs.push_back(align(read_f0(a.ref), read_f0(a.est)));
    ids.push_back(a.est.stem().string());
  }
  const CorpusReport report = evaluate_corpus(pairs, ids, a.tolerance);
  const std::string json = report_to_json(report) + "\n";
  if (a.out.empty()) {
    std::fputs(json.c_str(), stdout);
  } else {
    write_text(a.out, json);
    std::printf("OA %.6f  RPA %.6f  VR %.6f  VFA %.6f  (%lld frames) -> %s\n", report.corpus.oa, report.corpus.rpa,
                report.corpus.vr, report.corpus.vfa, static_cast<long long>(report.corpus.counts.total),
                a.out.string().c_str());
  }
  return 0;
}

// ----------------------------------------------------------- experiment

struct ExperimentArgs {
  std::string id;
  fs::path config, corpus, out;
  std::vector<std::uint64_t> seeds;
  std::optional<int> epochs;
};

int cmd_experiment(const ExperimentArgs& a) {
  RunConfig rc = a.config.empty() ? RunConfig{} : load_config(a.config);
  apply_config_threads(rc);
  if (!a.corpus.empty()) rc.corpus = a.corpus;
  if (!a.out.empty()) rc.output = a.out;
  if (!a.seeds.empty()) rc.seeds = a.seeds;
  if (a.epochs) rc.ssl.train.epochs = *a.epochs;
  validate(rc.ssl);
  if (rc.corpus.empty()) throw ArgumentError("experiment needs a corpus");
  if (!fs::exists(rc.corpus / "manifest.jsonl")) throw DataError("no corpus at " + rc.corpus.string());
  const CorpusData data = load_corpus_data(rc.corpus, rc.pitch_shifts);
  const ExperimentResult r = run_experiment(a.id, rc, data, rc.output);
  std::fputs(experiment_table(r).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised vocal melody extraction"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  int threads = 1;
  bool quiet = false, verbose = false;
  auto* threads_opt =
      app.add_option("--threads", threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", quiet, "Only print results");
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Render a synthetic corpus with exact f0 labels");
  s->add_option("--out", synth.out, "Corpus directory")->required();
  s->add_option("--labeled", synth.counts.labeled, "Labelled vocal tracks (train/val)");
  s->add_option("--unlabeled", synth.counts.unlabeled, "Unlabelled vocal tracks");
  s->add_option("--test", synth.counts.test, "Held-out test tracks");
  s->add_option("--instrumental", synth.counts.instrumental, "Instrumental tracks in the unlabelled pool");
  s->add_option("--seed", synth.seed, "Master seed");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Supervised training on the labelled split");
  t->add_option("--corpus", train.corpus, "Corpus directory")->required();
  t->add_option("--out", train.out, "Checkpoint to write")->required();
  t->add_option("--report", train.report, "JSON training report");
  t->add_option("--preset", train.preset, "Model preset (desk | large)");
  t->add_option("--shifts", train.shifts, "Pitch-shift augmentation in semitones, or 'none'");
  t->add_option("--epochs", train.options.epochs, "Epochs");
  t->add_option("--batch", train.options.batch_patches, "Patches per step");
  t->add_option("--lr", train.options.adam.learning_rate, "Initial learning rate");
  t->add_option("--seed", train.options.seed, "Seed");

  SslArgs ssl;
  auto* st = app.add_subcommand("ssl-train", "Teacher-student self-training");
  st->add_option("--corpus", ssl.corpus, "Corpus directory");
  st->add_option("--out", ssl.out, "Output directory");
  st->add_option("--config", ssl.config, "Run configuration file");
  st->add_option("--teacher", ssl.teacher, "Start from this teacher checkpoint");
  st->add_option("--mode", ssl.mode, "basic | noisy-teacher-student | noisy-student");
  st->add_option("--schedule", ssl.schedule, "joint | pretrain-finetune | pretrain-only");
  st->add_option("--form", ssl.form, "Pseudo-label form: soft | hard");
  st->add_option("--iterations", ssl.iterations, "Self-training iterations (1-8)");
  st->add_option("--epochs", ssl.epochs, "Epochs per phase");
  st->add_option("--seed", ssl.seed, "Seed");
  st->add_option("--shifts", ssl.shifts, "Pitch-shift augmentation in semitones, or 'none'");
  st->add_flag("--select", ssl.select, "Filter the unlabelled pool by vocal ratio first");
  st->add_option("--detector", ssl.detector, "Voicing detector for --select: model | heuristic");
  st->add_option("--threshold", ssl.threshold, "Vocal-ratio threshold");
  st->add_flag("--warm-start", ssl.warm_start, "Initialise students from their teacher");

  SelectArgs sel;
  auto* se = app.add_subcommand("select", "Estimate vocal ratios of the unlabelled pool");
  se->add_option("--corpus", sel.corpus, "Corpus directory")->required();
  se->add_option("--out", sel.out, "selection.jsonl path (default: inside the corpus)");
  se->add_option("--detector", sel.detector, "heuristic | model");
  se->add_option("--checkpoint", sel.checkpoint, "Model for the model detector");
  se->add_option("--threshold", sel.threshold, "Vocal-ratio threshold");

  AugmentArgs aug;
  auto* au = app.add_subcommand("augment-preview", "Apply a random effect chain to a WAV file");
  au->add_option("--in", aug.in, "Input WAV")->required();
  au->add_option("--out", aug.out, "Output WAV")->required();
  au->add_option("--seed", aug.seed, "Chain seed");
  au->add_option("--shift", aug.shift, "Pitch shift in semitones before the chain");
  au->add_option("--f0", aug.f0_in, "Contour to shift along with the audio");
  au->add_option("--f0-out", aug.f0_out, "Where to write the shifted contour");

  PredictArgs pred;
  auto* p = app.add_subcommand("predict", "Write the melody of a WAV file");
  p->add_option("--checkpoint", pred.checkpoint, "Model checkpoint")->required();
  p->add_option("--in", pred.in, "Input WAV")->required();
  p->add_option("--out", pred.out, "Output f0 file")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score estimated against reference contours");
  e->add_option("--ref", ev.ref, "Reference f0 file or directory")->required();
  e->add_option("--est", ev.est, "Estimated f0 file or directory")->required();
  e->add_option("--corpus", ev.corpus, "Corpus whose manifest lists the tracks (directories)");
  e->add_option("--out", ev.out, "Report JSON (default: stdout)");
  e->add_option("--tolerance", ev.tolerance, "Pitch tolerance in cents");

  ExperimentArgs ex;
  auto* x = app.add_subcommand("experiment", "Run an experiment of the playbook");
  x->add_option("--id", ex.id, "E1 | E2 | E3 | E4")->required()->check(CLI::IsMember({"E1", "E2", "E3", "E4"}));
  x->add_option("--config", ex.config, "Run configuration file");
  x->add_option("--corpus", ex.corpus, "Corpus directory");
  x->add_option("--out", ex.out, "Output directory");
  x->add_option("--seeds", ex.seeds, "Seeds")->delimiter(',');
  x->add_option("--epochs", ex.epochs, "Epochs per phase");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kBadArguments);
  }

  threads_from_cli = threads_opt->count() > 0;
  set_thread_count(threads);
  set_log_level(quiet ? LogLevel::kQuiet : verbose ? LogLevel::kDebug : LogLevel::kInfo);
  try {
    if (*s) return cmd_synth(synth);
    if (*t) return cmd_train(train);
    if (*st) return cmd_ssl_train(ssl);
    if (*se) return cmd_select(sel);
    if (*au) return cmd_augment_preview(aug);
    if (*p) return cmd_predict(pred);
    if (*e) return cmd_eval(ev);
    if (*x) return cmd_experiment(ex);
  } catch (const Error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return static_cast<int>(err.code());
  } catch (const fs::filesystem_error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return static_cast<int>(ExitCode::kDataError);
  } catch (const std::exception& err) {
    std::fprintf(stderr, "internal error: %s\n", err.what());
    return 1;
  }
  return static_cast<int>(ExitCode::kBadArguments);
}
