#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2lab/core_data.hpp"
#include "c2lab/matrix.hpp"

namespace c2lab {

enum class Architecture { kLinear, kMlp };

/// Classification-head training settings. Learning rate and epoch defaults
/// follow the full-scale fine-tuning setup (1e-5, one epoch); synthetic
/// experiments override both.
struct HeadConfig {
  Architecture architecture = Architecture::kLinear;
  std::size_t hidden_width = 64;  // mlp only
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  double init_scale = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
  static HeadConfig from_json(const nlohmann::json& j);
};

/// Affine layer y = W x + b with W stored out x in.
struct Layer {
  MatrixD weight;
  std::vector<double> bias;
};

/// Linear head: one layer. Mlp head: hidden layer with ReLU, then output.
struct TrainedHead {
  std::vector<Layer> layers;
  HeadConfig config;
  std::vector<double> loss_log;  // mean cross-entropy per epoch

  std::size_t input_dim() const { return layers.front().weight.cols(); }
  std::size_t num_classes() const { return layers.back().weight.rows(); }
};

/// Seeded initialization: weights ~ N(0, init_scale^2 / fan_in), biases 0.
TrainedHead init_head(std::size_t input_dim, std::size_t num_classes, const HeadConfig& cfg);

/// Logits for one input row.
std::vector<double> head_logits(const TrainedHead& head, std::span<const float> x);

/// Max-subtracted softmax, computed in place.
void softmax_inplace(std::vector<double>& logits);

/// Per-sample coefficient applied to each cross-entropy term (and its
/// gradient) given the sample's current loss. Empty means coefficient 1.
using LossCoefficient = std::function<double(double loss)>;

/// Mean over `rows` of coefficient(l_i) * l_i where l_i is the cross-entropy
/// of row i; accumulates d(mean)/d(params) into `grad` when non-null (grad
/// gets the head's layer shapes).
double loss_and_gradient(const TrainedHead& head, const MatrixF& x, std::span<const std::uint32_t> labels,
                         std::span<const std::size_t> rows, const LossCoefficient& coefficient,
                         std::vector<Layer>* grad);

/// Cross-entropy of every sample under `head`.
std::vector<double> per_sample_loss(const TrainedHead& head, const EmbeddingDataset& ds);

/// Fresh head trained with mini-batch Adam on mean cross-entropy. Each epoch
/// visits a seeded permutation; the last batch may be partial. Identical
/// inputs give bit-identical parameters. Throws NumericError (with epoch and
/// batch index) on a non-finite loss.
TrainedHead train_head(const EmbeddingDataset& ds, const HeadConfig& cfg);

/// Continues training `head` on `ds` with `cfg` (fresh Adam moments). With a
/// coefficient, each sample's loss term is scaled by coefficient(loss); a
/// constant -1 ascends the loss.
TrainedHead continue_training(TrainedHead head, const EmbeddingDataset& ds, const HeadConfig& cfg,
                              const LossCoefficient& coefficient = {});

/// Argmax of logits, lowest class index on ties.
std::vector<std::uint32_t> predict(const TrainedHead& head, const MatrixF& embeddings);
std::uint32_t argmax_lowest(std::span<const double> values);

/// head.json + params.f32le (each layer's W row-major, then b).
void save_head(const TrainedHead& head, const std::filesystem::path& dir);
TrainedHead load_head(const std::filesystem::path& dir);

}  // namespace c2lab
