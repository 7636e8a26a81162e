#include "c2lab/extractors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "c2lab/binary_io.hpp"
#include "c2lab/errors.hpp"
#include "c2lab/rng.hpp"

namespace c2lab {
namespace fs = std::filesystem;
using nlohmann::json;

// ============================================================ TCAV

std::vector<double> train_cav(const MatrixF& pos, const MatrixF& neg, const SvmParams& params) {
  if (pos.rows() == 0 || neg.rows() == 0) throw ValidationError("train_cav: need at least one example per side");
  if (pos.cols() != neg.cols()) throw ValidationError("train_cav: positive and negative dimensions differ");
  if (!(params.lambda > 0.0)) throw ValidationError("train_cav: lambda must be > 0");
  if (params.epochs < 1) throw ValidationError("train_cav: epochs must be >= 1");
  const std::size_t d = pos.cols();

  std::vector<std::span<const float>> rows;
  std::vector<double> y;
  for (std::size_t i = 0; i < pos.rows(); ++i) {
    rows.push_back(pos.row(i));
    y.push_back(1.0);
  }
  for (std::size_t i = 0; i < neg.rows(); ++i) {
    rows.push_back(neg.row(i));
    y.push_back(-1.0);
  }
  const bool all_identical = std::all_of(rows.begin(), rows.end(), [&](std::span<const float> r) {
    return std::equal(r.begin(), r.end(), rows.front().begin());
  });
  if (all_identical) throw ValidationError("train_cav: all examples are identical; no separating direction");

  // w[d] is the weight of a constant 1 feature (the offset).
  std::vector<double> w(d + 1, 0.0);
  const double radius = 1.0 / std::sqrt(params.lambda);
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(params.seed);
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t i : order) {
      ++t;
      const double eta = 1.0 / (params.lambda * static_cast<double>(t));
      const auto x = rows[i];
      double margin = w[d];
      for (std::size_t c = 0; c < d; ++c) margin += w[c] * x[c];
      margin *= y[i];
      const double shrink = 1.0 - eta * params.lambda;
      for (double& v : w) v *= shrink;
      if (margin < 1.0) {
        for (std::size_t c = 0; c < d; ++c) w[c] += eta * y[i] * x[c];
        w[d] += eta * y[i];
      }
      const double wn = norm(w);
      if (wn > radius) {
        for (double& v : w) v *= radius / wn;
      }
    }
  }
  w.resize(d);
  if (squared_norm(w) == 0.0) throw ValidationError("train_cav: SVM returned a zero normal vector");
  return w;
}

ConceptScores tcav_scores(const EmbeddingDataset& ds, const ConceptBank& bank) {
  if (ds.d() != bank.d()) {
    throw ValidationError("tcav_scores: dataset d=" + std::to_string(ds.d()) + " but bank d=" + std::to_string(bank.d()));
  }
  ConceptScores out;
  out.scores = MatrixD(ds.n(), bank.k());
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t k = 0; k < bank.k(); ++k) {
      out.scores(i, k) = dot(ds.embeddings.row(i), bank.cavs().row(k)) / bank.squared_norms()[k];
    }
  }
  out.concept_names = bank.names();
  out.dataset_id = ds.content_id();
  out.bank_id = bank.content_id();
  return out;
}

void save_exemplars(std::span<const ConceptExemplars> concepts, const fs::path& dir) {
  if (concepts.empty()) throw ValidationError("no exemplar sets to save");
  const std::size_t d = concepts.front().pos.cols();
  json entries = json::array();
  for (std::size_t k = 0; k < concepts.size(); ++k) {
    const auto& c = concepts[k];
    if (c.pos.cols() != d || c.neg.cols() != d) throw ValidationError("exemplar dimensions differ");
    const fs::path sub = std::to_string(k);
    fs::create_directories(dir / sub);
    io::write_f32le(dir / sub / "pos.f32le", c.pos.data());
    io::write_f32le(dir / sub / "neg.f32le", c.neg.data());
    entries.push_back({{"name", c.name},
                       {"pos_file", (sub / "pos.f32le").generic_string()},
                       {"neg_file", (sub / "neg.f32le").generic_string()},
                       {"n_pos", c.pos.rows()},
                       {"n_neg", c.neg.rows()}});
  }
  io::write_json(dir / "exemplars.json", {{"version", kBundleVersion}, {"d", d}, {"concepts", entries}});
}

std::vector<ConceptExemplars> load_exemplars(const fs::path& dir) {
  const json manifest = io::read_json(dir / "exemplars.json");
  try {
    if (manifest.at("version").get<int>() != kBundleVersion) throw IoError("unsupported exemplar manifest version");
    const auto d = manifest.at("d").get<std::size_t>();
    std::vector<ConceptExemplars> out;
    for (const auto& e : manifest.at("concepts")) {
      ConceptExemplars c;
      c.name = e.at("name").get<std::string>();
      const auto n_pos = e.at("n_pos").get<std::size_t>();
      const auto n_neg = e.at("n_neg").get<std::size_t>();
      c.pos = MatrixF(n_pos, d, io::read_f32le(dir / e.at("pos_file").get<std::string>(), n_pos * d));
      c.neg = MatrixF(n_neg, d, io::read_f32le(dir / e.at("neg_file").get<std::string>(), n_neg * d));
      out.push_back(std::move(c));
    }
    return out;
  } catch (const json::exception& e) {
    throw IoError("malformed exemplars.json in " + dir.string() + ": " + e.what());
  }
}

ConceptBank build_tcav_bank(std::span<const ConceptExemplars> concepts, const SvmParams& params) {
  if (concepts.empty()) throw ValidationError("build_tcav_bank: no concepts");
  const std::size_t d = concepts.front().pos.cols();
  MatrixF cavs(concepts.size(), d);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < concepts.size(); ++k) {
    SvmParams p = params;
    p.seed = params.seed + k;
    const auto w = train_cav(concepts[k].pos, concepts[k].neg, p);
    if (w.size() != d) throw ValidationError("build_tcav_bank: exemplar dimensions differ");
    for (std::size_t c = 0; c < d; ++c) cavs(k, c) = static_cast<float>(w[c]);
    names.push_back(concepts[k].name);
  }
  return ConceptBank(std::move(cavs), std::move(names));
}

// ============================================================ label-free CBM

namespace {

// Centered, unit-norm pattern and its elementwise cube.
struct CubedPattern {
  std::vector<double> unit;  // n = c / ||c||
  double center_norm = 0.0;  // ||c||
  std::vector<double> cube;  // u = n^3
  double cube_norm = 0.0;    // ||u||
};

CubedPattern cube_pattern(std::span<const double> v, const char* what) {
  const std::size_t n = v.size();
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(n);
  CubedPattern p;
  p.unit.resize(n);
  for (std::size_t i = 0; i < n; ++i) p.unit[i] = v[i] - mean;
  p.center_norm = norm(p.unit);
  if (!(p.center_norm > 0.0) || !std::isfinite(p.center_norm)) {
    throw ValidationError(std::string("cos-cubed: zero-variance ") + what);
  }
  for (double& x : p.unit) x /= p.center_norm;
  p.cube.resize(n);
  for (std::size_t i = 0; i < n; ++i) p.cube[i] = p.unit[i] * p.unit[i] * p.unit[i];
  p.cube_norm = norm(p.cube);
  if (!(p.cube_norm > 0.0)) throw ValidationError(std::string("cos-cubed: degenerate ") + what);
  return p;
}

std::vector<double> column_of(const MatrixF& m, std::size_t c) {
  std::vector<double> col(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) col[r] = m(r, c);
  return col;
}

std::vector<double> project(const MatrixF& features, std::span<const double> w) {
  std::vector<double> z(features.rows());
  for (std::size_t r = 0; r < features.rows(); ++r) z[r] = dot(features.row(r), w);
  return z;
}

void check_lfcbm_inputs(const MatrixF& features, const MatrixF& activation, const MatrixD& projection) {
  if (features.rows() < 2) throw ValidationError("lfcbm: need at least two samples");
  if (activation.rows() != features.rows()) throw ValidationError("lfcbm: activation rows != feature rows");
  if (projection.rows() != activation.cols() || projection.cols() != features.cols()) {
    throw ValidationError("lfcbm: projection shape must be M x d");
  }
}

// sim of one concept and, optionally, d sim / d w.
double concept_sim(const MatrixF& features, const CubedPattern& target, std::span<const double> w,
                   std::vector<double>* grad) {
  const auto z = project(features, w);
  const CubedPattern q = cube_pattern(z, "projection activation pattern");
  const std::size_t n = z.size();
  double uv = 0.0;
  for (std::size_t i = 0; i < n; ++i) uv += q.cube[i] * target.cube[i];
  const double sim = uv / (q.cube_norm * target.cube_norm);
  if (grad == nullptr) return sim;

  // Back through cosine, cube, unit-normalization and centering.
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double g_u = target.cube[i] / (target.cube_norm * q.cube_norm) - sim * q.cube[i] / (q.cube_norm * q.cube_norm);
    g[i] = 3.0 * q.unit[i] * q.unit[i] * g_u;
  }
  const double ng = dot(q.unit, g);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = (g[i] - q.unit[i] * ng) / q.center_norm;
    mean += g[i];
  }
  mean /= static_cast<double>(n);
  grad->assign(features.cols(), 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double gz = g[r] - mean;
    const auto x = features.row(r);
    for (std::size_t c = 0; c < features.cols(); ++c) (*grad)[c] += gz * x[c];
  }
  return sim;
}

}  // namespace

double cos_cubed_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("cos-cubed: length mismatch");
  if (a.size() < 2) throw ValidationError("cos-cubed: need at least two entries");
  const auto pa = cube_pattern(a, "first argument");
  const auto pb = cube_pattern(b, "second argument");
  return dot(pa.cube, pb.cube) / (pa.cube_norm * pb.cube_norm);
}

double lfcbm_loss(const MatrixF& features, const MatrixF& activation, const MatrixD& projection) {
  check_lfcbm_inputs(features, activation, projection);
  double loss = 0.0;
  for (std::size_t i = 0; i < projection.rows(); ++i) {
    const auto target = cube_pattern(column_of(activation, i), "activation column");
    loss -= concept_sim(features, target, projection.row(i), nullptr);
  }
  return loss;
}

MatrixD lfcbm_gradient(const MatrixF& features, const MatrixF& activation, const MatrixD& projection) {
  check_lfcbm_inputs(features, activation, projection);
  MatrixD grad(projection.rows(), projection.cols());
  std::vector<double> g;
  for (std::size_t i = 0; i < projection.rows(); ++i) {
    const auto target = cube_pattern(column_of(activation, i), "activation column");
    concept_sim(features, target, projection.row(i), &g);
    for (std::size_t c = 0; c < g.size(); ++c) grad(i, c) = -g[c];
  }
  return grad;
}

LfcbmFit lfcbm_fit_projection(const MatrixF& features, const MatrixF& activation, const LfcbmParams& params) {
  const std::size_t M = activation.cols();
  const std::size_t d = features.cols();
  MatrixD w(M, d);
  Rng rng(params.seed);
  for (double& v : w.data()) v = rng.normal();
  check_lfcbm_inputs(features, activation, w);

  std::vector<CubedPattern> targets;
  for (std::size_t i = 0; i < M; ++i) targets.push_back(cube_pattern(column_of(activation, i), "activation column"));
  auto renormalize = [&](std::size_t i) {
    const double nr = norm(w.row(i));
    for (double& v : w.row(i)) v /= nr;
  };
  for (std::size_t i = 0; i < M; ++i) renormalize(i);

  LfcbmFit fit;
  fit.filter_threshold = params.filter_threshold;
  fit.similarity.assign(M, 0.0);
  std::vector<double> g;
  for (std::size_t it = 0; it < params.iters; ++it) {
    double loss = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
      loss -= concept_sim(features, targets[i], w.row(i), &g);
      for (std::size_t c = 0; c < d; ++c) w(i, c) += params.learning_rate * g[c];
      renormalize(i);
    }
    fit.loss_log.push_back(loss);
  }
  for (std::size_t i = 0; i < M; ++i) fit.similarity[i] = concept_sim(features, targets[i], w.row(i), nullptr);
  fit.filtered.resize(M);
  for (std::size_t i = 0; i < M; ++i) fit.filtered[i] = fit.similarity[i] < params.filter_threshold;
  fit.projection = std::move(w);
  return fit;
}

ConceptBank lfcbm_bank(const LfcbmFit& fit, std::span<const std::string> names) {
  if (names.size() != fit.projection.rows()) throw ValidationError("lfcbm_bank: one name per concept required");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < fit.filtered.size(); ++i) {
    if (!fit.filtered[i]) keep.push_back(i);
  }
  if (keep.empty()) throw ValidationError("lfcbm_bank: every concept fell below the similarity filter");
  MatrixF rows(keep.size(), fit.projection.cols());
  std::vector<std::string> kept_names;
  for (std::size_t r = 0; r < keep.size(); ++r) {
    for (std::size_t c = 0; c < rows.cols(); ++c) rows(r, c) = static_cast<float>(fit.projection(keep[r], c));
    kept_names.push_back(names[keep[r]]);
  }
  return ConceptBank(std::move(rows), std::move(kept_names));
}

ConceptScores projection_scores(const EmbeddingDataset& ds, const ConceptBank& bank) {
  if (ds.d() != bank.d()) throw ValidationError("projection_scores: dimension mismatch");
  ConceptScores out;
  out.scores = MatrixD(ds.n(), bank.k());
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t k = 0; k < bank.k(); ++k) out.scores(i, k) = dot(ds.embeddings.row(i), bank.cavs().row(k));
  }
  out.concept_names = bank.names();
  out.dataset_id = ds.content_id();
  out.bank_id = bank.content_id();
  return out;
}

void save_activation(const ActivationMatrix& act, const fs::path& dir) {
  if (act.names.size() != act.values.cols()) throw ValidationError("activation: one name per column required");
  fs::create_directories(dir);
  io::write_f32le(dir / "activation.f32le", act.values.data());
  io::write_json(dir / "activation.json", {{"version", kBundleVersion},
                                           {"n", act.values.rows()},
                                           {"m", act.values.cols()},
                                           {"names", act.names},
                                           {"file", "activation.f32le"}});
}

ActivationMatrix load_activation(const fs::path& dir) {
  const json manifest = io::read_json(dir / "activation.json");
  try {
    if (manifest.at("version").get<int>() != kBundleVersion) throw IoError("unsupported activation manifest version");
    const auto n = manifest.at("n").get<std::size_t>();
    const auto m = manifest.at("m").get<std::size_t>();
    ActivationMatrix act;
    act.names = manifest.at("names").get<std::vector<std::string>>();
    act.values = MatrixF(n, m, io::read_f32le(dir / manifest.at("file").get<std::string>(), n * m));
    for (float v : act.values.data()) {
      if (!std::isfinite(v)) throw ValidationError("activation: non-finite entry");
    }
    return act;
  } catch (const json::exception& e) {
    throw IoError("malformed activation.json in " + dir.string() + ": " + e.what());
  }
}

// ============================================================ elastic net

namespace {

// Row-wise softmax probabilities of W z + b, max-subtracted.
void class_probs(const MatrixD& weights, std::span<const double> bias, std::span<const double> z,
                 std::vector<double>& probs) {
  const std::size_t C = weights.rows();
  probs.resize(C);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < C; ++c) {
    probs[c] = dot(weights.row(c), z) + bias[c];
    mx = std::max(mx, probs[c]);
  }
  double s = 0.0;
  for (double& p : probs) {
    p = std::exp(p - mx);
    s += p;
  }
  for (double& p : probs) p /= s;
}

}  // namespace

std::size_t ElasticNetFit::nonzero_count() const {
  return static_cast<std::size_t>(std::count_if(weights.data().begin(), weights.data().end(), [](double v) { return v != 0.0; }));
}

double soft_threshold(double v, double threshold) {
  if (v > threshold) return v - threshold;
  if (v < -threshold) return v + threshold;
  return 0.0;
}

double elastic_net_objective(const MatrixD& z, std::span<const std::uint32_t> labels, const MatrixD& weights,
                             std::span<const double> bias, double lambda, double alpha) {
  std::vector<double> probs;
  double ce = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    class_probs(weights, bias, z.row(i), probs);
    ce -= std::log(std::max(probs[labels[i]], std::numeric_limits<double>::min()));
  }
  ce /= static_cast<double>(z.rows());
  double l1 = 0.0;
  double l2 = 0.0;
  for (double w : weights.data()) {
    l1 += std::abs(w);
    l2 += w * w;
  }
  return ce + lambda * ((1.0 - alpha) * 0.5 * l2 + alpha * l1);
}

ElasticNetFit elastic_net_fit(const MatrixD& z, std::span<const std::uint32_t> labels, std::size_t num_classes,
                              const ElasticNetParams& params, std::uint64_t seed) {
  const std::size_t N = z.rows();
  const std::size_t M = z.cols();
  if (N == 0) throw ValidationError("elastic_net_fit: empty input");
  if (labels.size() != N) throw ValidationError("elastic_net_fit: labels length != rows");
  if (num_classes < 2) throw ValidationError("elastic_net_fit: need at least two classes");
  if (!(params.lambda >= 0.0)) throw ValidationError("elastic_net_fit: lambda must be >= 0");
  if (!(params.alpha >= 0.0 && params.alpha <= 1.0)) throw ValidationError("elastic_net_fit: alpha must lie in [0, 1]");
  if (!(params.tolerance > 0.0)) throw ValidationError("elastic_net_fit: tolerance must be > 0");
  if (!(params.step > 0.0)) throw ValidationError("elastic_net_fit: step must be > 0");
  for (double v : z.data()) {
    if (!std::isfinite(v)) throw ValidationError("elastic_net_fit: non-finite feature");
  }
  for (auto y : labels) {
    if (y >= num_classes) throw ValidationError("elastic_net_fit: label out of range");
  }

  ElasticNetFit fit;
  fit.weights = MatrixD(num_classes, M);
  fit.bias.assign(num_classes, 0.0);
  Rng rng(seed);
  for (double& w : fit.weights.data()) w = 0.01 * rng.normal();

  const double ridge = params.lambda * (1.0 - params.alpha);
  const double threshold = params.step * params.lambda * params.alpha;
  MatrixD grad_w(num_classes, M);
  std::vector<double> grad_b(num_classes);
  std::vector<double> probs;
  const double inv_n = 1.0 / static_cast<double>(N);

  for (fit.iterations = 0; fit.iterations < params.max_iters;) {
    std::fill(grad_w.data().begin(), grad_w.data().end(), 0.0);
    std::fill(grad_b.begin(), grad_b.end(), 0.0);
    for (std::size_t i = 0; i < N; ++i) {
      class_probs(fit.weights, fit.bias, z.row(i), probs);
      probs[labels[i]] -= 1.0;
      for (std::size_t c = 0; c < num_classes; ++c) {
        const double r = probs[c] * inv_n;
        grad_b[c] += r;
        for (std::size_t m = 0; m < M; ++m) grad_w(c, m) += r * z(i, m);
      }
    }
    double max_change = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) {
      for (std::size_t m = 0; m < M; ++m) {
        const double w = fit.weights(c, m);
        const double stepped = w - params.step * (grad_w(c, m) + ridge * w);
        const double next = soft_threshold(stepped, threshold);
        max_change = std::max(max_change, std::abs(next - w));
        fit.weights(c, m) = next;
      }
      const double nb = fit.bias[c] - params.step * grad_b[c];
      max_change = std::max(max_change, std::abs(nb - fit.bias[c]));
      fit.bias[c] = nb;
    }
    ++fit.iterations;
    if (max_change < params.tolerance) {
      fit.converged = true;
      break;
    }
  }
  fit.objective = elastic_net_objective(z, labels, fit.weights, fit.bias, params.lambda, params.alpha);
  return fit;
}

std::vector<std::uint32_t> elastic_net_predict(const ElasticNetFit& fit, const MatrixD& z) {
  std::vector<std::uint32_t> out(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    std::size_t best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < fit.weights.rows(); ++c) {
      const double v = dot(fit.weights.row(c), z.row(i)) + fit.bias[c];
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    out[i] = static_cast<std::uint32_t>(best);
  }
  return out;
}

// ============================================================ semi-supervised CBM

ConceptScores sscbm_scores(const FeatureMapSet& maps, const MatrixF& concept_embeddings,
                           std::span<const std::string> concept_names) {
  maps.validate();
  const std::size_t K = concept_embeddings.rows();
  if (concept_embeddings.cols() != maps.m) {
    throw ValidationError("sscbm_scores: concept embedding width " + std::to_string(concept_embeddings.cols()) +
                          " != feature map depth " + std::to_string(maps.m));
  }
  if (concept_names.size() != K) throw ValidationError("sscbm_scores: one name per concept required");
  std::vector<double> e_norm(K);
  for (std::size_t k = 0; k < K; ++k) {
    e_norm[k] = norm(concept_embeddings.row(k));
    if (!(e_norm[k] > 0.0)) throw ValidationError("sscbm_scores: concept embedding " + std::to_string(k) + " has zero norm");
  }
  const std::size_t n = maps.n();
  const std::size_t cells = maps.cells();
  ConceptScores out;
  out.scores = MatrixD(n, K);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t cell = 0; cell < cells; ++cell) {
      const auto v = maps.cell(i, cell);
      const double vn = norm(v);
      if (!(vn > 0.0)) {
        throw ValidationError("sscbm_scores: zero-norm feature cell (sample " + std::to_string(i) + ", cell " +
                              std::to_string(cell) + ")");
      }
      for (std::size_t k = 0; k < K; ++k) out.scores(i, k) += dot(concept_embeddings.row(k), v) / (e_norm[k] * vn);
    }
    for (std::size_t k = 0; k < K; ++k) out.scores(i, k) /= static_cast<double>(cells);
  }
  out.concept_names.assign(concept_names.begin(), concept_names.end());
  std::vector<unsigned char> bytes(reinterpret_cast<const unsigned char*>(maps.values.data()),
                                   reinterpret_cast<const unsigned char*>(maps.values.data() + maps.values.size()));
  out.dataset_id = io::content_id(bytes);
  std::vector<unsigned char> ebytes(
      reinterpret_cast<const unsigned char*>(concept_embeddings.data().data()),
      reinterpret_cast<const unsigned char*>(concept_embeddings.data().data() + concept_embeddings.size()));
  out.bank_id = io::content_id(ebytes);
  return out;
}

double cosine_distance(std::span<const float> a, std::span<const float> b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw ValidationError("cosine_distance: zero-norm input");
  return 1.0 - dot(a, b) / (na * nb);
}

std::uint32_t sscbm_pseudo_label(std::span<const float> x, const EmbeddingDataset& labeled) {
  if (labeled.n() == 0) throw ValidationError("sscbm_pseudo_label: labeled set is empty");
  if (labeled.d() != x.size()) throw ValidationError("sscbm_pseudo_label: dimension mismatch");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < labeled.n(); ++j) {
    const double dj = cosine_distance(x, labeled.embeddings.row(j));
    if (dj < best_d) {
      best_d = dj;
      best = j;
    }
  }
  return labeled.labels[best];
}

}  // namespace c2lab
