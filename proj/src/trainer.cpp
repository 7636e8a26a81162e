#include "c2lab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "c2lab/binary_io.hpp"
#include "c2lab/errors.hpp"
#include "c2lab/rng.hpp"

namespace c2lab {
namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- config

void HeadConfig::validate() const {
  if (batch_size < 1) throw ValidationError("head config: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ValidationError("head config: learning_rate must be > 0");
  if (architecture == Architecture::kMlp && hidden_width < 1) {
    throw ValidationError("head config: mlp needs hidden_width >= 1");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("head config: Adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw ValidationError("head config: adam epsilon must be > 0");
  if (!(init_scale >= 0.0)) throw ValidationError("head config: init_scale must be >= 0");
}

json HeadConfig::to_json() const {
  return {{"architecture", architecture == Architecture::kLinear ? "linear" : "mlp"},
          {"hidden_width", hidden_width},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"beta1", beta1},
          {"beta2", beta2},
          {"adam_epsilon", adam_epsilon},
          {"seed", seed},
          {"init_scale", init_scale}};
}

HeadConfig HeadConfig::from_json(const json& j) {
  HeadConfig c;
  try {
    const std::string arch = j.value("architecture", std::string("linear"));
    if (arch == "linear") {
      c.architecture = Architecture::kLinear;
    } else if (arch == "mlp") {
      c.architecture = Architecture::kMlp;
    } else {
      throw ValidationError("head config: unknown architecture '" + arch + "'");
    }
    c.hidden_width = j.value("hidden_width", c.hidden_width);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
    c.seed = j.value("seed", c.seed);
    c.init_scale = j.value("init_scale", c.init_scale);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed head config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- forward

namespace {

std::vector<Layer> zeros_like(const std::vector<Layer>& layers) {
  std::vector<Layer> out;
  out.reserve(layers.size());
  for (const auto& l : layers) {
    out.push_back({MatrixD(l.weight.rows(), l.weight.cols()), std::vector<double>(l.bias.size(), 0.0)});
  }
  return out;
}

// Activations per layer: acts[0] is the input, acts[l+1] the output of layer
// l (ReLU applied except on the last layer).
void forward(const TrainedHead& head, std::span<const float> x, std::vector<std::vector<double>>& acts) {
  acts.resize(head.layers.size() + 1);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < head.layers.size(); ++l) {
    const Layer& layer = head.layers[l];
    auto& out = acts[l + 1];
    out.resize(layer.weight.rows());
    for (std::size_t r = 0; r < layer.weight.rows(); ++r) out[r] = dot(layer.weight.row(r), acts[l]) + layer.bias[r];
    if (l + 1 < head.layers.size()) {
      for (double& v : out) v = std::max(v, 0.0);
    }
  }
}

}  // namespace

void softmax_inplace(std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    s += v;
  }
  for (double& v : logits) v /= s;
}

std::vector<double> head_logits(const TrainedHead& head, std::span<const float> x) {
  if (x.size() != head.input_dim()) {
    throw ValidationError("head expects input dimension " + std::to_string(head.input_dim()) + ", got " +
                          std::to_string(x.size()));
  }
  std::vector<std::vector<double>> acts;
  forward(head, x, acts);
  return acts.back();
}

TrainedHead init_head(std::size_t input_dim, std::size_t num_classes, const HeadConfig& cfg) {
  cfg.validate();
  if (input_dim == 0) throw ValidationError("head: input dimension must be positive");
  if (num_classes < 2) throw ValidationError("head: need at least two classes");
  TrainedHead head;
  head.config = cfg;
  std::vector<std::size_t> widths = {input_dim};
  if (cfg.architecture == Architecture::kMlp) widths.push_back(cfg.hidden_width);
  widths.push_back(num_classes);
  Rng rng(derive_seed(cfg.seed, "trainer/init"));
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Layer layer{MatrixD(widths[l + 1], widths[l]), std::vector<double>(widths[l + 1], 0.0)};
    const double sd = cfg.init_scale / std::sqrt(static_cast<double>(widths[l]));
    for (double& w : layer.weight.data()) w = sd * rng.normal();
    head.layers.push_back(std::move(layer));
  }
  return head;
}

// ---------------------------------------------------------------- loss

double loss_and_gradient(const TrainedHead& head, const MatrixF& x, std::span<const std::uint32_t> labels,
                         std::span<const std::size_t> rows, const LossCoefficient& coefficient,
                         std::vector<Layer>* grad) {
  if (rows.empty()) throw ValidationError("loss_and_gradient: empty batch");
  if (grad != nullptr) *grad = zeros_like(head.layers);
  const double inv_b = 1.0 / static_cast<double>(rows.size());
  std::vector<std::vector<double>> acts;
  std::vector<double> delta;
  std::vector<double> prev_delta;
  double total = 0.0;
  for (std::size_t i : rows) {
    forward(head, x.row(i), acts);
    std::vector<double> probs = acts.back();
    softmax_inplace(probs);
    const std::uint32_t y = labels[i];
    const double loss = -std::log(std::max(probs[y], std::numeric_limits<double>::min()));
    const double coef = coefficient ? coefficient(loss) : 1.0;
    total += coef * loss;
    if (grad == nullptr) continue;

    delta = probs;
    delta[y] -= 1.0;
    for (double& v : delta) v *= coef * inv_b;
    for (std::size_t l = head.layers.size(); l-- > 0;) {
      const Layer& layer = head.layers[l];
      Layer& g = (*grad)[l];
      const auto& input = acts[l];
      for (std::size_t r = 0; r < layer.weight.rows(); ++r) {
        g.bias[r] += delta[r];
        auto grow = g.weight.row(r);
        for (std::size_t c = 0; c < input.size(); ++c) grow[c] += delta[r] * input[c];
      }
      if (l == 0) break;
      prev_delta.assign(layer.weight.cols(), 0.0);
      for (std::size_t r = 0; r < layer.weight.rows(); ++r) {
        const auto wrow = layer.weight.row(r);
        for (std::size_t c = 0; c < wrow.size(); ++c) prev_delta[c] += wrow[c] * delta[r];
      }
      // ReLU gate: acts[l] is the post-activation output of layer l-1.
      for (std::size_t c = 0; c < prev_delta.size(); ++c) {
        if (acts[l][c] <= 0.0) prev_delta[c] = 0.0;
      }
      delta.swap(prev_delta);
    }
  }
  return total * inv_b;
}

std::vector<double> per_sample_loss(const TrainedHead& head, const EmbeddingDataset& ds) {
  if (ds.d() != head.input_dim()) throw ValidationError("per_sample_loss: dimension mismatch");
  std::vector<double> out(ds.n());
  for (std::size_t i = 0; i < ds.n(); ++i) {
    auto probs = head_logits(head, ds.embeddings.row(i));
    softmax_inplace(probs);
    out[i] = -std::log(std::max(probs[ds.labels[i]], std::numeric_limits<double>::min()));
  }
  return out;
}

// ---------------------------------------------------------------- training

TrainedHead continue_training(TrainedHead head, const EmbeddingDataset& ds, const HeadConfig& cfg,
                              const LossCoefficient& coefficient) {
  cfg.validate();
  if (ds.d() != head.input_dim()) throw ValidationError("train: dataset d != head input dimension");
  if (ds.num_classes() != head.num_classes()) throw ValidationError("train: dataset class count != head outputs");
  if (cfg.epochs == 0 || ds.n() == 0) return head;

  std::vector<Layer> m = zeros_like(head.layers);
  std::vector<Layer> v = zeros_like(head.layers);
  std::vector<Layer> grad;
  Rng rng(derive_seed(cfg.seed, "trainer/shuffle"));
  std::vector<std::size_t> order(ds.n());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;

  auto adam = [&](double& param, double g, double& m1, double& m2, double c1, double c2) {
    m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * g;
    m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * g * g;
    param -= cfg.learning_rate * (m1 / c1) / (std::sqrt(m2 / c2) + cfg.adam_epsilon);
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      const double loss = loss_and_gradient(head, ds.embeddings, ds.labels, batch, coefficient, &grad);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      }
      epoch_loss += loss * static_cast<double>(batch.size());
      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t l = 0; l < head.layers.size(); ++l) {
        auto& w = head.layers[l].weight.data();
        for (std::size_t p = 0; p < w.size(); ++p) {
          adam(w[p], grad[l].weight.data()[p], m[l].weight.data()[p], v[l].weight.data()[p], c1, c2);
        }
        auto& b = head.layers[l].bias;
        for (std::size_t p = 0; p < b.size(); ++p) adam(b[p], grad[l].bias[p], m[l].bias[p], v[l].bias[p], c1, c2);
      }
    }
    head.loss_log.push_back(epoch_loss / static_cast<double>(ds.n()));
  }
  for (const auto& layer : head.layers) {
    for (double w : layer.weight.data()) {
      if (!std::isfinite(w)) throw NumericError("training produced non-finite parameters");
    }
  }
  return head;
}

TrainedHead train_head(const EmbeddingDataset& ds, const HeadConfig& cfg) {
  ds.validate();
  TrainedHead head = init_head(ds.d(), ds.num_classes(), cfg);
  return continue_training(std::move(head), ds, cfg);
}

std::uint32_t argmax_lowest(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < values.size(); ++c) {
    if (values[c] > values[best]) best = c;
  }
  return static_cast<std::uint32_t>(best);
}

std::vector<std::uint32_t> predict(const TrainedHead& head, const MatrixF& embeddings) {
  if (embeddings.cols() != head.input_dim()) {
    throw ValidationError("predict: head expects d=" + std::to_string(head.input_dim()) + ", got " +
                          std::to_string(embeddings.cols()));
  }
  std::vector<std::uint32_t> out(embeddings.rows());
  for (std::size_t i = 0; i < embeddings.rows(); ++i) out[i] = argmax_lowest(head_logits(head, embeddings.row(i)));
  return out;
}

// ---------------------------------------------------------------- persistence

void save_head(const TrainedHead& head, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<float> params;
  json shapes = json::array();
  for (const auto& layer : head.layers) {
    shapes.push_back({{"rows", layer.weight.rows()}, {"cols", layer.weight.cols()}});
    for (double w : layer.weight.data()) params.push_back(static_cast<float>(w));
    for (double b : layer.bias) params.push_back(static_cast<float>(b));
  }
  io::write_f32le(dir / "params.f32le", params);
  io::write_json(dir / "head.json", {{"version", kBundleVersion},
                                     {"input_dim", head.input_dim()},
                                     {"num_classes", head.num_classes()},
                                     {"layers", shapes},
                                     {"config", head.config.to_json()},
                                     {"loss_log", head.loss_log},
                                     {"param_file", "params.f32le"}});
}

TrainedHead load_head(const fs::path& dir) {
  const json manifest = io::read_json(dir / "head.json");
  TrainedHead head;
  std::size_t total = 0;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  std::string param_file;
  try {
    if (manifest.at("version").get<int>() != kBundleVersion) throw IoError("unsupported head version");
    for (const auto& s : manifest.at("layers")) {
      const auto r = s.at("rows").get<std::size_t>();
      const auto c = s.at("cols").get<std::size_t>();
      shapes.emplace_back(r, c);
      total += r * c + r;
    }
    head.config = HeadConfig::from_json(manifest.at("config"));
    head.loss_log = manifest.at("loss_log").get<std::vector<double>>();
    param_file = manifest.at("param_file").get<std::string>();
  } catch (const json::exception& e) {
    throw IoError("malformed head.json in " + dir.string() + ": " + e.what());
  }
  if (shapes.empty()) throw IoError("head.json lists no layers");
  const auto params = io::read_f32le(dir / param_file, total);
  std::size_t p = 0;
  for (const auto& [r, c] : shapes) {
    Layer layer{MatrixD(r, c), std::vector<double>(r)};
    for (double& w : layer.weight.data()) w = params[p++];
    for (double& b : layer.bias) b = params[p++];
    head.layers.push_back(std::move(layer));
  }
  for (std::size_t l = 1; l < head.layers.size(); ++l) {
    if (head.layers[l].weight.cols() != head.layers[l - 1].weight.rows()) throw IoError("head.json: layer shapes do not chain");
  }
  for (float v : params) {
    if (!std::isfinite(v)) throw ValidationError("head parameters contain non-finite values");
  }
  return head;
}

}  // namespace c2lab
