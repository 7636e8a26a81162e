#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "c2lab/core_data.hpp"
#include "c2lab/matrix.hpp"

namespace c2lab {

// ============================================================ TCAV

/// Pegasos linear SVM settings. Step size at update t is 1 / (lambda * t).
struct SvmParams {
  double lambda = 10.0;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
};

/// Trains a linear SVM separating `pos` (+1) from `neg` (-1) and returns the
/// boundary normal w (length d, unnormalized). A constant input feature
/// carries the offset; its weight is dropped from the result.
///
/// Throws ValidationError on empty sides, a dimension mismatch, or when
/// every input row is identical (no separating direction exists).
std::vector<double> train_cav(const MatrixF& pos, const MatrixF& neg, const SvmParams& params);

/// scores(i, k) = <x_i, c_k> / ||c_k||^2.
ConceptScores tcav_scores(const EmbeddingDataset& ds, const ConceptBank& bank);

/// Positive and negative exemplar embeddings for one concept.
struct ConceptExemplars {
  std::string name;
  MatrixF pos;
  MatrixF neg;
};

/// exemplars.json + per-concept pos/neg binary32 files under `dir`.
void save_exemplars(std::span<const ConceptExemplars> concepts, const std::filesystem::path& dir);
std::vector<ConceptExemplars> load_exemplars(const std::filesystem::path& dir);

/// One CAV per exemplar set; concept i uses seed params.seed + i.
ConceptBank build_tcav_bank(std::span<const ConceptExemplars> concepts, const SvmParams& params);

// ============================================================ label-free CBM

/// Cos-cubed similarity: both vectors are mean-centered and scaled to unit
/// norm, cubed elementwise, then compared by cosine. Symmetric; 1 for
/// identical inputs. Throws ValidationError on a zero-variance input.
double cos_cubed_similarity(std::span<const double> a, std::span<const double> b);

struct LfcbmParams {
  std::size_t iters = 500;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
  double filter_threshold = 0.45;
};

struct LfcbmFit {
  MatrixD projection;               // M x d, one unit-norm row per concept
  std::vector<double> similarity;   // cos-cubed sim of each row at the end
  std::vector<bool> filtered;       // similarity < filter_threshold
  double filter_threshold = 0.45;
  std::vector<double> loss_log;     // objective per iteration
};

/// Objective sum_i -sim(features * w_i, activation[:, i]).
double lfcbm_loss(const MatrixF& features, const MatrixF& activation, const MatrixD& projection);

/// Gradient of lfcbm_loss with respect to `projection`.
MatrixD lfcbm_gradient(const MatrixF& features, const MatrixF& activation, const MatrixD& projection);

/// Gradient descent on lfcbm_loss from a seeded Gaussian start. The loss is
/// invariant to the scale of each row, so rows are renormalized after every
/// step. Throws ValidationError when an activation column is constant or
/// fewer than two samples are given.
LfcbmFit lfcbm_fit_projection(const MatrixF& features, const MatrixF& activation, const LfcbmParams& params);

/// Bank whose rows are the unfiltered projection rows.
ConceptBank lfcbm_bank(const LfcbmFit& fit, std::span<const std::string> names);

/// Raw projection scores f_c(x) = W_c x (the rows of `bank`, no rescaling).
ConceptScores projection_scores(const EmbeddingDataset& ds, const ConceptBank& bank);

/// n x M activation matrix with concept names, stored as activation.json +
/// activation.f32le.
struct ActivationMatrix {
  MatrixF values;
  std::vector<std::string> names;
};
void save_activation(const ActivationMatrix& act, const std::filesystem::path& dir);
ActivationMatrix load_activation(const std::filesystem::path& dir);

// ============================================================ elastic net

struct ElasticNetParams {
  double lambda = 0.0;
  double alpha = 0.99;
  std::size_t max_iters = 5000;
  double step = 0.1;
  double tolerance = 1e-7;
};

struct ElasticNetFit {
  MatrixD weights;            // C x M
  std::vector<double> bias;   // C
  std::size_t iterations = 0;
  bool converged = false;
  double objective = 0.0;

  std::size_t nonzero_count() const;
};

/// prox_{t}(v) = sign(v) * max(|v| - t, 0). Returns exactly 0 when |v| <= t.
double soft_threshold(double v, double threshold);

/// Mean cross-entropy + lambda * ((1 - alpha) / 2 * ||W||_F^2 + alpha * ||W||_1).
double elastic_net_objective(const MatrixD& z, std::span<const std::uint32_t> labels, const MatrixD& weights,
                             std::span<const double> bias, double lambda, double alpha);

/// Proximal gradient (ISTA): a gradient step on the cross-entropy and ridge
/// terms followed by soft-thresholding at step * lambda * alpha. Bias is not
/// penalized. Stops when the largest parameter change falls below
/// `tolerance`; otherwise returns after max_iters with converged = false.
ElasticNetFit elastic_net_fit(const MatrixD& z, std::span<const std::uint32_t> labels, std::size_t num_classes,
                              const ElasticNetParams& params, std::uint64_t seed);

std::vector<std::uint32_t> elastic_net_predict(const ElasticNetFit& fit, const MatrixD& z);

// ============================================================ semi-supervised CBM

/// Per sample and concept: mean over all spatial cells of
/// cos(e_k, V[p, q]). `concept_embeddings` is K x m. Throws ValidationError
/// naming the sample and cell when a cell vector has zero norm.
ConceptScores sscbm_scores(const FeatureMapSet& maps, const MatrixF& concept_embeddings,
                           std::span<const std::string> concept_names);

/// 1 - cos(a, b).
double cosine_distance(std::span<const float> a, std::span<const float> b);

/// Label of the labeled sample nearest to x in cosine distance; ties go to
/// the lowest index. Throws ValidationError on zero-norm inputs.
std::uint32_t sscbm_pseudo_label(std::span<const float> x, const EmbeddingDataset& labeled);

}  // namespace c2lab
