#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2lab/core_data.hpp"
#include "c2lab/trainer.hpp"

namespace c2lab {

/// Continues training a possibly backdoored head on a small trusted set.
TrainedHead finetune_defense(const TrainedHead& head, const EmbeddingDataset& clean_subset, const HeadConfig& cfg);

/// Anti-backdoor learning settings. Zero epoch counts fall back to the head
/// config's epochs.
struct AblParams {
  double lga_gamma = 0.5;            // loss floor, nats
  double isolation_fraction = 0.01;  // must be < 0.5
  std::size_t pretrain_epochs = 0;
  std::size_t retrain_epochs = 0;
  std::size_t unlearn_epochs = 5;
  double unlearn_learning_rate = 1e-4;

  void validate() const;
  nlohmann::json to_json() const;
};

struct AblResult {
  TrainedHead head;                   // after unlearning
  TrainedHead pretrained;             // after the loss-floor phase
  std::vector<std::size_t> isolated;  // ascending
};

/// Loss-floor training: each sample's loss enters as sign(l - gamma) * l, so
/// samples already below gamma are pushed back up. gamma = -inf is ordinary
/// training (same initialization and shuffles as train_head).
TrainedHead abl_pretrain(const EmbeddingDataset& ds, const HeadConfig& cfg, double gamma);

/// The poison_count(n, fraction) samples with the lowest loss under `head`,
/// ties to lower index; returned ascending.
std::vector<std::size_t> isolate_lowest_loss(const TrainedHead& head, const EmbeddingDataset& ds, double fraction);

/// Four phases: loss-floor pretraining, isolation of the lowest-loss
/// fraction, retraining on the rest, then gradient ascent on the isolated
/// samples. `ds` is treated as untrusted: only its labels are used.
AblResult abl_defense(const EmbeddingDataset& ds, const HeadConfig& head_cfg, const AblParams& params);

/// |isolated ∩ poisoned| / |isolated|; both lists ascending.
double isolation_precision(std::span<const std::size_t> isolated, std::span<const std::size_t> poisoned);

/// Defense outcome row: {defense, pre_asr, post_asr, pre_cacc, post_cacc}
/// plus free-form extras.
struct DefenseReport {
  std::string defense;
  std::string attack;
  std::optional<double> pre_asr;
  std::optional<double> post_asr;
  double pre_cacc = 0.0;
  double post_cacc = 0.0;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
};

}  // namespace c2lab
