#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "c2lab/core_data.hpp"
#include "c2lab/matrix.hpp"

namespace c2lab {

/// Planted-concept generator parameters. Each sample is
///   x = class_mean_scale * mu_y + concept_strength * sum_k beta_k u_k + noise_sigma * eps
/// with y uniform over classes, beta_k ~ Bernoulli(prevalence[k]) and eps
/// standard normal. mu_y are unit-norm Gaussian draws; u_k are Gram-Schmidt
/// orthonormalized Gaussian draws.
struct SynthSpec {
  std::size_t n = 2000;
  std::size_t d = 64;
  std::size_t num_classes = 10;
  std::size_t num_concepts = 8;
  double concept_strength = 4.0;
  double noise_sigma = 1.0;
  std::vector<double> prevalence;  // one per concept, each in (0, 1]
  double class_mean_scale = 4.0;
  std::uint64_t seed = 0;
  /// Optional [class][concept] prevalence override; empty means presence is
  /// independent of the label.
  std::vector<std::vector<double>> prevalence_by_class;

  void validate() const;
  double prevalence_for(std::size_t cls, std::size_t k) const;
};

struct GroundTruth {
  Matrix<std::uint8_t> concept_presence;  // n x K, 0/1
  MatrixD planted_directions;             // K x d, orthonormal rows
  MatrixD class_means;                    // C x d, unit rows
};

struct PlantedData {
  EmbeddingDataset dataset;
  GroundTruth truth;
};

/// Deterministic in `spec.seed`. Throws ValidationError when K > d.
PlantedData gen_planted(const SynthSpec& spec);

/// Draws `count` further samples from the model fixed by `truth` (same class
/// means and directions) using an independent stream. `force_concept`, when
/// set, pins beta for that concept to `force_value` instead of sampling it.
struct SampleRequest {
  std::size_t count = 0;
  std::uint64_t stream_seed = 0;
  std::string id_prefix = "s";
  int force_concept = -1;
  bool force_value = true;
};
PlantedData sample_planted(const SynthSpec& spec, const GroundTruth& truth, const SampleRequest& request);

/// Per-sample h x w feature maps with m = d: every cell is the sample's
/// embedding plus independent N(0, cell_noise^2) noise, so concept-present
/// samples carry alpha * u_k in every cell.
FeatureMapSet gen_feature_maps(const EmbeddingDataset& ds, std::size_t h, std::size_t w, double cell_noise,
                               std::uint64_t seed);

/// Simulated concept activation matrix (n x K): column k is the projection of
/// each embedding on u_k plus N(0, noise^2). Stands in for an externally
/// computed image-text activation matrix.
MatrixF gen_activation_matrix(const EmbeddingDataset& ds, const GroundTruth& truth, double noise, std::uint64_t seed);

/// Default concept names "concept_0" ... and class names "class_0" ...
std::vector<std::string> synth_concept_names(std::size_t k);
std::vector<std::string> synth_class_names(std::size_t c);

}  // namespace c2lab
