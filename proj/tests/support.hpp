#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "c2lab/core_data.hpp"
#include "c2lab/extractors.hpp"
#include "c2lab/synth.hpp"
#include "c2lab/trainer.hpp"
#include "c2lab/rng.hpp"

namespace c2lab::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("c2lab_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline EmbeddingDataset random_dataset(std::size_t n, std::size_t d, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingDataset ds;
  ds.embeddings = MatrixF(n, d);
  for (auto& v : ds.embeddings.data()) v = static_cast<float>(rng.normal());
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels.push_back(static_cast<std::uint32_t>(rng.below(classes)));
    ds.ids.push_back("x" + std::to_string(i));
  }
  for (std::size_t c = 0; c < classes; ++c) ds.class_names.push_back("c" + std::to_string(c));
  return ds;
}

// Scores matrix with one column per entry of `columns`.
inline ConceptScores make_scores(const std::vector<std::vector<double>>& columns) {
  ConceptScores s;
  const std::size_t n = columns.front().size();
  s.scores = MatrixD(n, columns.size());
  for (std::size_t k = 0; k < columns.size(); ++k) {
    s.concept_names.push_back("k" + std::to_string(k));
    for (std::size_t i = 0; i < n; ++i) s.scores(i, k) = columns[k][i];
  }
  return s;
}

// Sparse-signal multiclass instance: only the first three of `m` concept
// features carry label information.
struct EnetInstance {
  MatrixD z;
  std::vector<std::uint32_t> labels;
  std::size_t classes = 3;
};

inline EnetInstance enet_instance(std::uint64_t seed, std::size_t n = 200, std::size_t m = 20) {
  Rng rng(seed);
  EnetInstance inst;
  inst.z = MatrixD(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::uint32_t>(rng.below(3));
    inst.labels.push_back(y);
    for (std::size_t j = 0; j < m; ++j) inst.z(i, j) = rng.normal() + (j == y ? 2.0 : 0.0);
  }
  return inst;
}

// Cosine of each TCAV concept vector with its planted direction, for
// exemplars drawn at the given activation-free noise level.
inline std::vector<double> cav_cosines(std::uint64_t seed, double noise, std::size_t per_side, const SvmParams& svm) {
  SynthSpec spec;
  spec.prevalence.assign(8, 0.1);
  spec.noise_sigma = noise;
  spec.seed = seed;
  const auto pd = gen_planted(spec);
  std::vector<double> out;
  for (std::size_t k = 0; k < spec.num_concepts; ++k) {
    const int kk = static_cast<int>(k);
    const auto pos = sample_planted(spec, pd.truth, {per_side, derive_seed(seed, "pos" + std::to_string(k)), "p", kk, true});
    const auto neg = sample_planted(spec, pd.truth, {per_side, derive_seed(seed, "neg" + std::to_string(k)), "n", kk, false});
    const auto w = train_cav(pos.dataset.embeddings, neg.dataset.embeddings, svm);
    out.push_back(cosine(w, pd.truth.planted_directions.row(k)));
  }
  return out;
}

// Union selection by full sorting and an explicit OR over membership flags.
inline std::vector<std::size_t> brute_force_union(const ConceptScores& scores, const std::vector<std::size_t>& concepts,
                                                  const std::vector<double>& ratios) {
  const std::size_t n = scores.n();
  std::vector<bool> member(n, false);
  for (std::size_t j = 0; j < concepts.size(); ++j) {
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t i = 0; i < n; ++i) order.push_back({-scores.scores(i, concepts[j]), i});
    std::sort(order.begin(), order.end());
    const double exact = ratios[j] * static_cast<double>(n);
    const auto m = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact))), 1, n);
    for (std::size_t r = 0; r < m; ++r) member[order[r].second] = true;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (member[i]) out.push_back(i);
  }
  return out;
}

// Largest |analytic - central difference| over all parameters, relative to
// the largest gradient magnitude, on a 3-sample instance.
inline double gradient_check(Architecture arch, std::uint64_t seed, double h = 1e-3) {
  const EmbeddingDataset ds = random_dataset(3, 5, 3, seed);
  HeadConfig cfg;
  cfg.architecture = arch;
  cfg.hidden_width = 4;
  cfg.seed = seed;
  TrainedHead head = init_head(ds.d(), ds.num_classes(), cfg);
  const std::vector<std::size_t> rows{0, 1, 2};
  std::vector<Layer> grad;
  loss_and_gradient(head, ds.embeddings, ds.labels, rows, {}, &grad);
  double worst = 0.0;
  double scale = 0.0;
  for (std::size_t l = 0; l < head.layers.size(); ++l) {
    auto probe = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + h;
      const double up = loss_and_gradient(head, ds.embeddings, ds.labels, rows, {}, nullptr);
      param = saved - h;
      const double dn = loss_and_gradient(head, ds.embeddings, ds.labels, rows, {}, nullptr);
      param = saved;
      worst = std::max(worst, std::abs((up - dn) / (2 * h) - analytic));
      scale = std::max(scale, std::abs(analytic));
    };
    for (std::size_t i = 0; i < head.layers[l].weight.size(); ++i) {
      probe(head.layers[l].weight.data()[i], grad[l].weight.data()[i]);
    }
    for (std::size_t i = 0; i < head.layers[l].bias.size(); ++i) probe(head.layers[l].bias[i], grad[l].bias[i]);
  }
  return worst / scale;
}

}  // namespace c2lab::testing
