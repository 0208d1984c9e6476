#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "melody/config.hpp"
#include "melody/dataset.hpp"
#include "melody/metrics.hpp"

namespace melody {

// Everything a training run reads from a corpus, loaded once.
struct CorpusData {
  DatasetManifest manifest;
  std::vector<LabeledTrack> train;  // with pitch-shifted copies
  std::vector<LabeledTrack> val;
  std::vector<AudioTrack> pool;     // unlabelled, hidden references attached when present
  std::vector<AudioTrack> test;
};

CorpusData load_corpus_data(const std::filesystem::path& root, std::span<const int> pitch_shifts);

struct ConditionResult {
  std::string name;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::vector<EvalReport> per_seed;        // held-out test scores, one per seed
  EvalReport mean;                         // simple mean of per_seed metrics
  std::vector<double> iteration_mean_oa;   // mean test OA after each iteration
  int pool_size = 0;                       // unlabelled tracks used (0: none)
  double wall_seconds = 0.0;
};

struct ExperimentResult {
  std::string id;
  std::vector<ConditionResult> conditions;
  double wall_seconds = 0.0;
};

// Conditions per experiment:
//   E1  supervised, basic, noisy-teacher-student, noisy-student (joint, k = 1)
//   E2  noisy-student with joint, pretrain-finetune and pretrain-only
//   E3  noisy-student on 25 / 50 / 100 % of the pool, selection off / on
//   E4  noisy-student for k = 4 iterations, OA after each
// All conditions of one seed share the same supervised teacher.
ExperimentResult run_experiment(const std::string& id, const RunConfig& config, const CorpusData& data,
                                const std::filesystem::path& out_dir = {});

std::string experiment_json(const ExperimentResult& result);
std::string experiment_table(const ExperimentResult& result);

}  // namespace melody
