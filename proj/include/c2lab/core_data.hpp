#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "c2lab/matrix.hpp"

namespace c2lab {

/// Frozen encoder outputs with integer labels. The class count comes from
/// `class_names`, never from the largest label, so a split may lack classes.
struct EmbeddingDataset {
  MatrixF embeddings;  // n x d, row-major
  std::vector<std::uint32_t> labels;
  std::vector<std::string> class_names;
  std::vector<std::string> ids;

  std::size_t n() const { return embeddings.rows(); }
  std::size_t d() const { return embeddings.cols(); }
  std::size_t num_classes() const { return class_names.size(); }

  /// Throws ValidationError on any broken invariant (sizes, label range,
  /// non-finite entries, fewer than two classes).
  void validate() const;

  /// Rows in the given order; indices must be < n.
  EmbeddingDataset subset(std::span<const std::size_t> indices) const;

  /// Content id over embedding and label bytes.
  std::string content_id() const;

  bool operator==(const EmbeddingDataset&) const = default;
};

/// Per-sample spatial feature maps, n tensors of h x w x m, row-major.
struct FeatureMapSet {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t m = 0;
  std::vector<float> values;  // n*h*w*m

  std::size_t n() const { return h * w * m == 0 ? 0 : values.size() / (h * w * m); }
  std::size_t cells() const { return h * w; }
  std::span<const float> cell(std::size_t sample, std::size_t c) const {
    return {values.data() + (sample * cells() + c) * m, m};
  }
  void validate() const;
  bool operator==(const FeatureMapSet&) const = default;
};

/// K concept activation vectors with names. Rows are kept exactly as
/// fitted (not normalized); squared norms are cached in double.
class ConceptBank {
 public:
  ConceptBank() = default;
  ConceptBank(MatrixF cavs, std::vector<std::string> names);

  std::size_t k() const { return cavs_.rows(); }
  std::size_t d() const { return cavs_.cols(); }
  const MatrixF& cavs() const { return cavs_; }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<double>& squared_norms() const { return squared_norms_; }

  /// Index of a named concept; ValidationError if absent.
  std::size_t index_of(const std::string& name) const;
  std::string content_id() const;

  /// Same names, row `k` multiplied by `factor`.
  ConceptBank with_scaled_row(std::size_t k, float factor) const;

 private:
  MatrixF cavs_;
  std::vector<std::string> names_;
  std::vector<double> squared_norms_;
};

/// N x K concept scores c(x)_k plus provenance of the inputs they came from.
struct ConceptScores {
  MatrixD scores;
  std::vector<std::string> concept_names;
  std::string dataset_id;
  std::string bank_id;

  std::size_t n() const { return scores.rows(); }
  std::size_t k() const { return scores.cols(); }
  std::vector<double> column(std::size_t k) const;
  void validate() const;
};

/// Dataset whose labels at `poisoned_indices` were rewritten to
/// `target_label`; `original_labels[j]` is the pre-flip label of
/// `poisoned_indices[j]`.
struct BackdooredDataset {
  EmbeddingDataset base;
  std::vector<std::size_t> poisoned_indices;
  std::vector<std::uint32_t> original_labels;
  std::uint32_t target_label = 0;

  void validate() const;
  /// Labels with every flip undone.
  std::vector<std::uint32_t> restored_labels() const;
};

// -- Bundle directory: manifest.json, embeddings.f32le, labels.u32le, ids.jsonl

inline constexpr int kBundleVersion = 1;

void save_bundle(const EmbeddingDataset& ds, const std::filesystem::path& dir);
EmbeddingDataset load_bundle(const std::filesystem::path& dir);

/// Adds feature_maps.f32le and the manifest's "feature_map" entry to an
/// existing bundle. The map count must equal the bundle's n.
void save_feature_maps(const FeatureMapSet& maps, const std::filesystem::path& dir);
std::optional<FeatureMapSet> load_feature_maps(const std::filesystem::path& dir);

// -- Bank directory: bank.json + cavs.f32le (K x d row-major binary32)

void save_bank(const ConceptBank& bank, const std::filesystem::path& dir);
ConceptBank load_bank(const std::filesystem::path& dir);

// -- Scores directory: scores.json + scores.f64le (N x K row-major binary64)

void save_scores(const ConceptScores& scores, const std::filesystem::path& dir);
ConceptScores load_scores(const std::filesystem::path& dir);

struct Split {
  EmbeddingDataset train;
  EmbeddingDataset test;
  std::vector<std::size_t> train_indices;  // ascending
  std::vector<std::size_t> test_indices;   // ascending
};

/// Seeded shuffle, then the first round_half_up(test_fraction * n) shuffled
/// indices form the test set. Both parts keep ascending original order.
/// Throws ValidationError when either side would be empty.
Split split(const EmbeddingDataset& ds, double test_fraction, std::uint64_t seed);

}  // namespace c2lab
