#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2lab/core_data.hpp"

namespace c2lab {

/// Trigger concepts, their thresholds, and the samples chosen for flipping.
struct PoisonPlan {
  std::vector<std::size_t> trigger_concepts;
  std::vector<std::string> trigger_names;
  std::vector<double> thresholds;  // one per trigger concept
  double poison_ratio = 0.0;
  std::uint32_t target_label = 0;
  std::vector<std::size_t> selected;  // ascending
  /// Selected samples whose label already equalled the target (label no-ops).
  std::size_t already_target = 0;

  nlohmann::json to_json() const;
  static PoisonPlan from_json(const nlohmann::json& j);
};

/// ceil(pr * n), clamped to [1, n]. A relative guard of 1e-9 absorbs binary
/// rounding in the product (0.07 * 100 evaluates to 7.000000000000001).
std::size_t poison_count(std::size_t n, double pr);

/// m-th largest value of column k (descending order, duplicates kept) with
/// m = poison_count(N, pr). Throws ValidationError for pr outside (0, 1), an
/// empty column, or k out of range.
double select_threshold(const ConceptScores& scores, std::size_t k, double pr);

/// Exactly poison_count(N, pr) indices: the top scores of column k, ties at
/// the boundary resolved toward lower sample indices. Returned ascending.
std::vector<std::size_t> recognize(const ConceptScores& scores, std::size_t k, double pr);

/// Union (ascending, deduplicated) of per-concept recognize() selections,
/// each at its own ratio. Needs at least two concepts; the union may exceed
/// any single concept's budget.
std::vector<std::size_t> multi_recognize(const ConceptScores& scores, std::span<const std::size_t> concepts,
                                         std::span<const double> ratios);

/// Thresholds and selection for one or more trigger concepts sharing `pr`.
PoisonPlan make_plan(const ConceptScores& scores, std::span<const std::size_t> concepts, double pr,
                     std::uint32_t target_label);

/// Rewrites labels at `selected` to `target_label`; everything else is
/// copied untouched. Throws ValidationError on an out-of-range index or
/// target class.
BackdooredDataset build_poisoned(const EmbeddingDataset& ds, std::span<const std::size_t> selected,
                                 std::uint32_t target_label);

/// Fixed-vector embedding trigger for defense comparisons.
struct BaselinePlan {
  double epsilon = 0.0;
  std::vector<float> trigger;
  std::uint32_t target_label = 0;
  std::vector<std::size_t> selected;  // ascending
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static BaselinePlan from_json(const nlohmann::json& j);
};

/// poison_count(n, epsilon) seeded-random samples get `trigger` added to
/// their embedding and their label set to `target_label`.
BackdooredDataset baseline_trigger(const EmbeddingDataset& ds, double epsilon, std::span<const float> trigger,
                                   std::uint32_t target_label, std::uint64_t seed, BaselinePlan* plan = nullptr);

/// Seeded Gaussian direction scaled to the given Euclidean norm.
std::vector<float> random_trigger(std::size_t d, double magnitude, std::uint64_t seed);

/// Copy of `embeddings` with `trigger` added to every row.
MatrixF apply_trigger(const MatrixF& embeddings, std::span<const float> trigger);

}  // namespace c2lab
