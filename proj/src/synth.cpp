#include "c2lab/synth.hpp"

#include <cmath>
#include <cstdio>

#include "c2lab/errors.hpp"
#include "c2lab/rng.hpp"

namespace c2lab {

namespace {

std::string sample_id(const std::string& prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return prefix + buf;
}

MatrixD gaussian_rows(Rng& rng, std::size_t rows, std::size_t cols) {
  MatrixD m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

void normalize_rows(MatrixD& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double nr = norm(m.row(r));
    for (double& v : m.row(r)) v /= nr;
  }
}

// Modified Gram-Schmidt, two passes for orthogonality at binary64 precision.
void orthonormalize_rows(MatrixD& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t q = 0; q < r; ++q) {
        const double proj = dot(m.row(r), m.row(q));
        for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) -= proj * m(q, c);
      }
    }
    const double nr = norm(m.row(r));
    if (nr < 1e-12) throw ValidationError("planted directions are linearly dependent");
    for (double& v : m.row(r)) v /= nr;
  }
}

}  // namespace

void SynthSpec::validate() const {
  if (num_classes < 2) throw ValidationError("synth: num_classes must be >= 2");
  if (num_concepts > d) throw ValidationError("synth: num_concepts K must not exceed d");
  if (d == 0) throw ValidationError("synth: d must be positive");
  if (!(concept_strength > 0.0) || !std::isfinite(concept_strength)) {
    throw ValidationError("synth: concept_strength must be finite and > 0");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ValidationError("synth: noise_sigma must be >= 0");
  if (!std::isfinite(class_mean_scale)) throw ValidationError("synth: class_mean_scale must be finite");
  if (prevalence.size() != num_concepts) throw ValidationError("synth: need one prevalence per concept");
  auto check_rho = [](double p) {
    if (!(p > 0.0 && p <= 1.0)) throw ValidationError("synth: prevalence must lie in (0, 1]");
  };
  for (double p : prevalence) check_rho(p);
  if (!prevalence_by_class.empty()) {
    if (prevalence_by_class.size() != num_classes) throw ValidationError("synth: per-class prevalence needs C rows");
    for (const auto& row : prevalence_by_class) {
      if (row.size() != num_concepts) throw ValidationError("synth: per-class prevalence rows need K entries");
      for (double p : row) check_rho(p);
    }
  }
}

double SynthSpec::prevalence_for(std::size_t cls, std::size_t k) const {
  return prevalence_by_class.empty() ? prevalence[k] : prevalence_by_class[cls][k];
}

PlantedData gen_planted(const SynthSpec& spec) {
  spec.validate();
  Rng structure(derive_seed(spec.seed, "synth/structure"));
  GroundTruth truth;
  truth.planted_directions = gaussian_rows(structure, spec.num_concepts, spec.d);
  orthonormalize_rows(truth.planted_directions);
  truth.class_means = gaussian_rows(structure, spec.num_classes, spec.d);
  normalize_rows(truth.class_means);

  SampleRequest req;
  req.count = spec.n;
  req.stream_seed = derive_seed(spec.seed, "synth/samples");
  req.id_prefix = "s";
  PlantedData out = sample_planted(spec, truth, req);
  return out;
}

PlantedData sample_planted(const SynthSpec& spec, const GroundTruth& truth, const SampleRequest& request) {
  spec.validate();
  const std::size_t K = spec.num_concepts;
  const std::size_t d = spec.d;
  if (request.force_concept >= static_cast<int>(K)) throw ValidationError("synth: forced concept out of range");

  Rng rng(request.stream_seed);
  PlantedData out;
  out.truth.planted_directions = truth.planted_directions;
  out.truth.class_means = truth.class_means;
  out.truth.concept_presence = Matrix<std::uint8_t>(request.count, K);

  EmbeddingDataset& ds = out.dataset;
  ds.class_names = synth_class_names(spec.num_classes);
  ds.embeddings = MatrixF(request.count, d);
  ds.labels.resize(request.count);
  ds.ids.resize(request.count);

  std::vector<double> x(d);
  for (std::size_t i = 0; i < request.count; ++i) {
    const auto y = static_cast<std::uint32_t>(rng.below(spec.num_classes));
    ds.labels[i] = y;
    ds.ids[i] = sample_id(request.id_prefix, i);
    for (std::size_t c = 0; c < d; ++c) x[c] = spec.class_mean_scale * truth.class_means(y, c);
    for (std::size_t k = 0; k < K; ++k) {
      // The Bernoulli draw is always consumed so forcing one concept leaves
      // the stream of every other draw unchanged.
      bool present = rng.bernoulli(spec.prevalence_for(y, k));
      if (static_cast<int>(k) == request.force_concept) present = request.force_value;
      out.truth.concept_presence(i, k) = present ? 1 : 0;
      if (present) {
        for (std::size_t c = 0; c < d; ++c) x[c] += spec.concept_strength * truth.planted_directions(k, c);
      }
    }
    for (std::size_t c = 0; c < d; ++c) {
      const double eps = rng.normal();
      ds.embeddings(i, c) = static_cast<float>(x[c] + spec.noise_sigma * eps);
    }
  }
  return out;
}

FeatureMapSet gen_feature_maps(const EmbeddingDataset& ds, std::size_t h, std::size_t w, double cell_noise,
                               std::uint64_t seed) {
  if (h * w == 0) throw ValidationError("feature maps need h*w > 0");
  if (!(cell_noise >= 0.0)) throw ValidationError("cell noise must be >= 0");
  Rng rng(seed);
  FeatureMapSet maps;
  maps.h = h;
  maps.w = w;
  maps.m = ds.d();
  maps.values.reserve(ds.n() * h * w * ds.d());
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto x = ds.embeddings.row(i);
    for (std::size_t cell = 0; cell < h * w; ++cell) {
      for (std::size_t c = 0; c < ds.d(); ++c) {
        const double noise = cell_noise == 0.0 ? 0.0 : cell_noise * rng.normal();
        maps.values.push_back(static_cast<float>(static_cast<double>(x[c]) + noise));
      }
    }
  }
  return maps;
}

MatrixF gen_activation_matrix(const EmbeddingDataset& ds, const GroundTruth& truth, double noise, std::uint64_t seed) {
  const std::size_t K = truth.planted_directions.rows();
  if (truth.planted_directions.cols() != ds.d()) throw ValidationError("activation: dimension mismatch");
  Rng rng(seed);
  MatrixF act(ds.n(), K);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      const double proj = dot(ds.embeddings.row(i), truth.planted_directions.row(k));
      act(i, k) = static_cast<float>(proj + noise * rng.normal());
    }
  }
  return act;
}

std::vector<std::string> synth_concept_names(std::size_t k) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < k; ++i) names.push_back("concept_" + std::to_string(i));
  return names;
}

std::vector<std::string> synth_class_names(std::size_t c) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < c; ++i) names.push_back("class_" + std::to_string(i));
  return names;
}

}  // namespace c2lab
