#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "melody/errors.hpp"
#include "melody/log.hpp"
#include "melody/parallel.hpp"
#include "melody/report_json.hpp"
#include "melody/rng.hpp"
#include "melody/ssl.hpp"

namespace fs = std::filesystem;

namespace melody {

std::string to_string(TsMode mode) {
  switch (mode) {
    case TsMode::kBasic: return "basic";
    case TsMode::kNoisyTeacherStudent: return "noisy-teacher-student";
    case TsMode::kNoisyStudent: return "noisy-student";
  }
  return "basic";
}

std::string to_string(TrainSchedule schedule) {
  switch (schedule) {
    case TrainSchedule::kJoint: return "joint";
    case TrainSchedule::kPretrainThenFinetune: return "pretrain-finetune";
    case TrainSchedule::kPretrainOnly: return "pretrain-only";
  }
  return "joint";
}

std::string to_string(LabelForm form) { return form == LabelForm::kSoft ? "soft" : "hard"; }

TsMode ts_mode_from_string(const std::string& s) {
  if (s == "basic") return TsMode::kBasic;
  if (s == "noisy-teacher-student") return TsMode::kNoisyTeacherStudent;
  if (s == "noisy-student") return TsMode::kNoisyStudent;
  throw ArgumentError("unknown teacher-student mode: " + s);
}

TrainSchedule schedule_from_string(const std::string& s) {
  if (s == "joint") return TrainSchedule::kJoint;
  if (s == "pretrain-finetune") return TrainSchedule::kPretrainThenFinetune;
  if (s == "pretrain-only") return TrainSchedule::kPretrainOnly;
  throw ArgumentError("unknown training schedule: " + s);
}

LabelForm label_form_from_string(const std::string& s) {
  if (s == "soft") return LabelForm::kSoft;
  if (s == "hard") return LabelForm::kHard;
  throw ArgumentError("unknown pseudo-label form: " + s);
}

void validate(const SslConfig& c) {
  if (c.iterations < 1 || c.iterations > kMaxIterations) {
    throw ArgumentError("iterations must be between 1 and " + std::to_string(kMaxIterations));
  }
  if (c.mix_labeled < 1 || c.mix_unlabeled < 1) throw ArgumentError("batch mix ratio components must be positive");
  if (c.train.epochs < 0) throw ArgumentError("epochs must be non-negative");
  if (c.train.batch_patches < 1) throw ArgumentError("batch size must be positive");
  validate(c.model);
}

EffectChain epoch_chain(std::uint64_t augment_seed, int iteration, int epoch, const std::string& id) {
  const std::uint64_t s = derive_seed(derive_seed(augment_seed, static_cast<std::uint64_t>(iteration)),
                                      static_cast<std::uint64_t>(epoch));
  return raa_sample(derive_seed(s, id));
}

std::vector<Spectrogram> augment_pool(std::span<const AudioTrack> pool, std::uint64_t augment_seed, int iteration,
                                      int epoch) {
  std::vector<Spectrogram> out(pool.size());
  parallel_for(pool.size(), [&](std::size_t i) {
    const EffectChain chain = epoch_chain(augment_seed, iteration, epoch, pool[i].id);
    out[i] = chain.effects.empty() ? pool[i].spec : stft_logmag(apply_chain(pool[i].clip, chain));
  });
  return out;
}

PseudoLabelSet make_pseudo_labels(const ModelParams& teacher, std::span<const AudioTrack> pool,
                                  std::span<const Spectrogram> noisy, TsMode mode, LabelForm form,
                                  int teacher_iteration) {
  const bool use_noisy = mode == TsMode::kNoisyTeacherStudent;
  if (use_noisy && noisy.size() != pool.size()) {
    throw ArgumentError("the noisy teacher needs one augmented spectrogram per unlabelled track");
  }
  PseudoLabelSet set;
  set.teacher_iteration = teacher_iteration;
  set.form = form;
  set.tracks.resize(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    TrackPseudoLabels& t = set.tracks[i];
    t.id = pool[i].id;
    RowMatrix<float> probs = frame_posteriors(teacher, use_noisy ? noisy[i] : pool[i].spec);
    t.labels.resize(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
      Eigen::Index best = 0;
      probs.row(r).maxCoeff(&best);
      t.labels[static_cast<std::size_t>(r)] = PitchLabel{static_cast<int>(best)};
    }
    if (form == LabelForm::kSoft) t.probs = std::move(probs);
  }
  return set;
}

RowMatrix<float> gather_pseudo_targets(std::span<const PatchRef> refs, const PseudoLabelSet& pseudo) {
  RowMatrix<float> targets = RowMatrix<float>::Zero(static_cast<Eigen::Index>(refs.size()) * kContextFrames,
                                                    kNumClasses);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const TrackPseudoLabels& t = pseudo.tracks.at(static_cast<std::size_t>(refs[i].track));
    const int n = static_cast<int>(t.labels.size());
    for (int r = 0; r < kContextFrames; ++r) {
      const int frame = reflect_index(static_cast<long long>(refs[i].center) - kHalfContext + r, n);
      const Eigen::Index row = static_cast<Eigen::Index>(i) * kContextFrames + r;
      if (pseudo.form == LabelForm::kSoft) {
        targets.row(row) = t.probs.row(frame);
      } else {
        targets(row, t.labels[static_cast<std::size_t>(frame)].index) = 1.0f;
      }
    }
  }
  return targets;
}

double student_loss(TsMode mode, const ModelParams& student, const Batch& labeled, const UnlabeledBatch& unlabeled,
                    Gradients* grads) {
  const double supervised = batch_loss(student, labeled, grads);
  if (unlabeled.count == 0) return supervised;
  const std::vector<float>& input = mode == TsMode::kBasic ? unlabeled.clean : unlabeled.noisy;
  const std::size_t patch_size = static_cast<std::size_t>(kContextFrames) * kNumBins;
  if (input.size() != patch_size * static_cast<std::size_t>(unlabeled.count)) {
    throw ArgumentError("unlabelled batch lacks the input view required by mode " + to_string(mode));
  }
  return supervised + batch_loss(student, unlabeled.count, input.data(), unlabeled.targets, grads);
}

namespace {

std::vector<const Spectrogram*> spec_pointers(std::span<const AudioTrack> pool) {
  std::vector<const Spectrogram*> v;
  for (const auto& t : pool) v.push_back(&t.spec);
  return v;
}

std::vector<const Spectrogram*> spec_pointers(std::span<const Spectrogram> specs) {
  std::vector<const Spectrogram*> v;
  for (const auto& s : specs) v.push_back(&s);
  return v;
}

// Unlabelled side of a student phase: per-epoch augmentation, optional
// per-epoch noisy-teacher labelling, and a cyclic patch stream.
class UnlabeledStream {
 public:
  UnlabeledStream(std::span<const AudioTrack> pool, const SslConfig& config, const ModelParams& teacher,
                  const PseudoLabelSet* clean_pseudo, int iteration, const NormStats& stats, std::uint64_t seed)
      : pool_(pool),
        config_(config),
        teacher_(teacher),
        clean_pseudo_(clean_pseudo),
        iteration_(iteration),
        stats_(stats),
        augment_seed_(derive_seed(config.train.seed, "augment")),
        rng_(seed),
        clean_specs_(spec_pointers(pool)) {
    for (const auto& t : pool) frame_counts_.push_back(t.spec.n_frames);
  }

  // Augments the pool for `epoch` and, for the noisy teacher, relabels it.
  void begin_epoch(int epoch) {
    if (config_.mode != TsMode::kBasic) {
      noisy_ = augment_pool(pool_, augment_seed_, iteration_, epoch);
      noisy_specs_ = spec_pointers(noisy_);
    }
    if (config_.mode == TsMode::kNoisyTeacherStudent) {
      epoch_pseudo_ = make_pseudo_labels(teacher_, pool_, noisy_, config_.mode, config_.form, iteration_);
      if (!first_epoch_labels_) {
        first_epoch_labels_ = epoch_pseudo_;
        for (auto& t : first_epoch_labels_->tracks) t.probs.resize(0, 0);
      }
    }
    refs_ = epoch_patches(frame_counts_, rng_);
    cursor_ = 0;
  }

  std::size_t patches_per_epoch() const { return refs_.size(); }

  UnlabeledBatch next(int count) {
    std::vector<PatchRef> refs;
    refs.reserve(static_cast<std::size_t>(count));
    while (static_cast<int>(refs.size()) < count && !refs_.empty()) {
      if (cursor_ == refs_.size()) {
        std::shuffle(refs_.begin(), refs_.end(), rng_);
        cursor_ = 0;
      }
      refs.push_back(refs_[cursor_++]);
    }
    UnlabeledBatch b;
    b.count = static_cast<int>(refs.size());
    if (config_.mode == TsMode::kBasic) {
      b.clean = gather_inputs(refs, clean_specs_, stats_);
    } else {
      b.noisy = gather_inputs(refs, noisy_specs_, stats_);
    }
    b.targets = gather_pseudo_targets(refs, current_pseudo());
    return b;
  }

  const PseudoLabelSet& current_pseudo() const {
    return config_.mode == TsMode::kNoisyTeacherStudent ? epoch_pseudo_ : *clean_pseudo_;
  }
  const std::optional<PseudoLabelSet>& first_epoch_labels() const { return first_epoch_labels_; }

 private:
  std::span<const AudioTrack> pool_;
  const SslConfig& config_;
  const ModelParams& teacher_;
  const PseudoLabelSet* clean_pseudo_;
  int iteration_;
  NormStats stats_;  // copied: the student it came from is moved during training
  std::uint64_t augment_seed_;
  Rng rng_;
  std::vector<const Spectrogram*> clean_specs_;
  std::vector<int> frame_counts_;
  std::vector<Spectrogram> noisy_;
  std::vector<const Spectrogram*> noisy_specs_;
  PseudoLabelSet epoch_pseudo_;
  std::optional<PseudoLabelSet> first_epoch_labels_;
  std::vector<PatchRef> refs_;
  std::size_t cursor_ = 0;
};

// Mixed labelled + unlabelled steps; an epoch is one pass over the
// labelled patches.
class JointSource : public StepSource {
 public:
  JointSource(LabeledSource& labeled, UnlabeledStream& unlabeled, const SslConfig& config)
      : labeled_(labeled), unlabeled_(unlabeled), config_(config) {
    const double ratio = static_cast<double>(config.mix_unlabeled) / config.mix_labeled;
    unlabeled_batch_ = std::max(1, static_cast<int>(std::lround(config.train.batch_patches * ratio)));
  }

  int begin_epoch(int epoch, const ModelParams& current) override {
    unlabeled_.begin_epoch(epoch);
    return labeled_.begin_epoch(epoch, current);
  }

  double step(int step, const ModelParams& current, Gradients& grads) override {
    const Batch lb = labeled_.make_batch(step);
    const UnlabeledBatch ub = unlabeled_.next(unlabeled_batch_);
    return student_loss(config_.mode, current, lb, ub, &grads);
  }

 private:
  LabeledSource& labeled_;
  UnlabeledStream& unlabeled_;
  const SslConfig& config_;
  int unlabeled_batch_ = 1;
};

// Unlabelled-only steps; an epoch is one pass over the unlabelled patches.
class PretrainSource : public StepSource {
 public:
  PretrainSource(UnlabeledStream& unlabeled, const SslConfig& config) : unlabeled_(unlabeled), config_(config) {}

  int begin_epoch(int epoch, const ModelParams&) override {
    unlabeled_.begin_epoch(epoch);
    const auto n = unlabeled_.patches_per_epoch();
    const auto b = static_cast<std::size_t>(config_.train.batch_patches);
    return static_cast<int>((n + b - 1) / b);
  }

  double step(int, const ModelParams& current, Gradients& grads) override {
    const UnlabeledBatch ub = unlabeled_.next(config_.train.batch_patches);
    return student_loss(config_.mode, current, Batch{}, ub, &grads);
  }

 private:
  UnlabeledStream& unlabeled_;
  const SslConfig& config_;
};

void append_history(TrainHistory& into, const TrainHistory& phase) {
  const int offset = static_cast<int>(into.epochs.size());
  for (EpochRecord r : phase.epochs) {
    r.epoch += offset;
    into.epochs.push_back(r);
  }
  into.best_epoch = phase.best_epoch > 0 ? phase.best_epoch + offset : into.best_epoch;
  into.best_val_oa = phase.best_val_oa;
}

void write_iteration(const fs::path& dir, const ModelParams& teacher, const ModelParams& student,
                     const PseudoLabelSet& pseudo, const IterationRecord& rec, const SslConfig& config) {
  fs::create_directories(dir / "pseudo");
  save_checkpoint(dir / "teacher.ckpt", teacher);
  save_checkpoint(dir / "student.ckpt", student);
  for (const auto& t : pseudo.tracks) write_f0(dir / "pseudo" / (t.id + ".f0"), labels_to_contour(t.labels));

  nlohmann::json j;
  j["iteration"] = rec.iteration;
  j["mode"] = to_string(config.mode);
  j["schedule"] = to_string(config.schedule);
  j["pseudo_label_form"] = to_string(config.form);
  j["pseudo_label_teacher"] = pseudo.teacher_iteration;
  j["seed"] = config.train.seed;
  j["teacher_val_oa"] = round_to_micro(rec.teacher_val_oa);
  j["student_val_oa"] = round_to_micro(rec.student_val_oa);
  if (rec.teacher_test) j["teacher_test"] = report_json(*rec.teacher_test);
  if (rec.student_test) j["student_test"] = report_json(*rec.student_test);
  j["best_epoch"] = rec.history.best_epoch;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : rec.history.epochs) {
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"train_loss", round_to_micro(e.train_loss)},
                           {"val_oa", round_to_micro(e.val_oa)},
                           {"learning_rate", e.learning_rate},
                           {"skipped_batches", e.skipped_batches}});
  }
  std::ofstream out(dir / "metrics.json");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("cannot write " + (dir / "metrics.json").string());
}

}  // namespace

SelfTrainResult self_train(const SslData& data, const SslConfig& config, std::optional<ModelParams> teacher,
                           const fs::path& out_dir) {
  validate(config);
  if (data.pool.empty()) throw DataError("the unlabelled pool is empty");
  const bool needs_labeled = config.schedule != TrainSchedule::kPretrainOnly;
  if (needs_labeled && data.train.empty()) throw DataError("no labelled training tracks");

  SelfTrainResult result;
  if (teacher) {
    result.teacher = std::move(*teacher);
  } else {
    result.teacher = train_teacher(data.train, data.val, config.model, config.train).params;
  }

  ModelParams current = result.teacher;
  std::optional<EvalReport> current_test;
  if (!data.test.empty()) current_test = evaluate_model(current, data.test).corpus;
  double current_val = validation_accuracy(current, data.val);

  for (int i = 1; i <= config.iterations; ++i) {
    log_info("self-training iteration ", i, "/", config.iterations, ": ", to_string(config.mode), ", ",
             to_string(config.schedule), ", ", data.pool.size(), " unlabelled tracks");
    IterationRecord rec;
    rec.iteration = i;
    rec.teacher_test = current_test;
    rec.teacher_val_oa = current_val;

    PseudoLabelSet clean_pseudo;
    if (config.mode != TsMode::kNoisyTeacherStudent) {
      clean_pseudo = make_pseudo_labels(current, data.pool, {}, config.mode, config.form, i);
    }

    ModelParams student;
    if (config.warm_start) {
      student = current;
    } else {
      student = init_params(config.model, derive_seed(derive_seed(config.train.seed, "student-init"),
                                                      static_cast<std::uint64_t>(i)));
      student.stats = current.stats;
    }
    const std::uint64_t batching = derive_seed(derive_seed(config.train.seed, "student-batching"),
                                               static_cast<std::uint64_t>(i));
    UnlabeledStream stream(data.pool, config, current, &clean_pseudo, i, student.stats,
                           derive_seed(batching, "unlabeled"));

    if (config.schedule == TrainSchedule::kJoint) {
      LabeledSource labeled(data.train, student.stats, config.train.batch_patches, derive_seed(batching, "labeled"));
      JointSource source(labeled, stream, config);
      student = run_phase(std::move(student), source, data.val, config.train, &rec.history);
    } else {
      PretrainSource pre(stream, config);
      TrainHistory pre_history;
      student = run_phase(std::move(student), pre, data.val, config.train, &pre_history);
      append_history(rec.history, pre_history);
      if (config.schedule == TrainSchedule::kPretrainThenFinetune) {
        LabeledSource labeled(data.train, student.stats, config.train.batch_patches,
                              derive_seed(batching, "finetune"));
        TrainHistory fine_history;
        student = run_phase(std::move(student), labeled, data.val, config.train, &fine_history);
        append_history(rec.history, fine_history);
      }
    }

    rec.student_val_oa = validation_accuracy(student, data.val);
    if (!data.test.empty()) rec.student_test = evaluate_model(student, data.test).corpus;
    log_info("iteration ", i, ": teacher val OA ", rec.teacher_val_oa, ", student val OA ", rec.student_val_oa,
             rec.student_test ? ", student test OA " + std::to_string(rec.student_test->oa) : std::string());

    if (!out_dir.empty()) {
      const PseudoLabelSet& dumped =
          config.mode == TsMode::kNoisyTeacherStudent && stream.first_epoch_labels() ? *stream.first_epoch_labels()
                                                                                     : clean_pseudo;
      write_iteration(out_dir / ("iter_" + std::to_string(i)), current, student, dumped, rec, config);
    }

    current = std::move(student);
    current_test = rec.student_test;
    current_val = rec.student_val_oa;
    result.iterations.push_back(std::move(rec));
  }
  result.final_model = std::move(current);
  return result;
}

}  // namespace melody
