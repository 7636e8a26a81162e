#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2lab/attack.hpp"
#include "c2lab/core_data.hpp"
#include "c2lab/trainer.hpp"

namespace c2lab {

/// 100 * correct / total. Throws ValidationError on an empty test set.
double cacc(const TrainedHead& head, const EmbeddingDataset& test);

/// confusion(true, predicted) over the test set, C x C.
Matrix<std::uint64_t> confusion_matrix(const TrainedHead& head, const EmbeddingDataset& test);

/// ASR with its evaluation-set size. `percent` is empty when no test sample
/// qualifies (undefined, distinct from 0).
struct AsrResult {
  std::optional<double> percent;
  std::size_t hits = 0;
  std::size_t evaluated = 0;
};

/// Test samples that count toward concept ASR: score >= the plan's
/// training-time threshold for at least one trigger concept, and true label
/// != target.
std::vector<std::size_t> asr_eval_set(const EmbeddingDataset& test, const ConceptScores& test_scores,
                                      const PoisonPlan& plan);

/// Percentage of asr_eval_set predicted as the target label.
AsrResult asr(const TrainedHead& head, const EmbeddingDataset& test, const ConceptScores& test_scores,
              const PoisonPlan& plan);

/// Fixed-trigger ASR: every test sample with true label != target gets the
/// trigger added; percentage predicted as target.
AsrResult asr_baseline(const TrainedHead& head, const EmbeddingDataset& test, std::span<const float> trigger,
                       std::uint32_t target_label);

struct AttackReport {
  std::string label;
  double cacc = 0.0;
  std::optional<double> asr;
  std::size_t n_clean_test = 0;
  std::size_t n_trigger_test = 0;
  std::size_t asr_hits = 0;
  nlohmann::json plan;
  nlohmann::json config;
  Matrix<std::uint64_t> confusion;

  nlohmann::json to_json() const;
  static AttackReport from_json(const nlohmann::json& j);
};

AttackReport evaluate_attack(const TrainedHead& head, const EmbeddingDataset& test, const ConceptScores& test_scores,
                             const PoisonPlan& plan, std::string label = {});

/// Fixed inputs shared by every point of a sweep.
struct AttackSetup {
  EmbeddingDataset train;
  EmbeddingDataset test;
  ConceptScores train_scores;
  ConceptScores test_scores;
};

struct GridPoint {
  std::string label;
  std::vector<std::size_t> trigger_concepts;
  double poison_ratio = 0.01;
  std::uint32_t target_label = 0;
  HeadConfig head;
};

/// plan -> poison -> train -> evaluate for one grid point.
AttackReport run_attack(const AttackSetup& setup, const GridPoint& point);

/// One report per grid point, in grid order. Points run on up to
/// `max_threads` threads; each point is independent and deterministic.
std::vector<AttackReport> sweep(const AttackSetup& setup, std::span<const GridPoint> grid, unsigned max_threads = 1);

/// Concept,CACC,ASR table (plus poison ratio) with a header line.
std::string reports_csv(std::span<const AttackReport> reports);

/// One JSON object per line.
std::string reports_jsonl(std::span<const AttackReport> reports);

}  // namespace c2lab
