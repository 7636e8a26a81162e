#include "c2lab/defenses.hpp"

#include <algorithm>
#include <numeric>

#include "c2lab/attack.hpp"
#include "c2lab/errors.hpp"

namespace c2lab {
using nlohmann::json;

TrainedHead finetune_defense(const TrainedHead& head, const EmbeddingDataset& clean_subset, const HeadConfig& cfg) {
  clean_subset.validate();
  return continue_training(head, clean_subset, cfg);
}

void AblParams::validate() const {
  if (!(isolation_fraction > 0.0 && isolation_fraction < 0.5)) {
    throw ValidationError("abl: isolation_fraction must lie in (0, 0.5)");
  }
  if (!(unlearn_learning_rate > 0.0)) throw ValidationError("abl: unlearn learning rate must be > 0");
}

json AblParams::to_json() const {
  return {{"lga_gamma", lga_gamma},
          {"isolation_fraction", isolation_fraction},
          {"pretrain_epochs", pretrain_epochs},
          {"retrain_epochs", retrain_epochs},
          {"unlearn_epochs", unlearn_epochs},
          {"unlearn_learning_rate", unlearn_learning_rate}};
}

TrainedHead abl_pretrain(const EmbeddingDataset& ds, const HeadConfig& cfg, double gamma) {
  ds.validate();
  TrainedHead head = init_head(ds.d(), ds.num_classes(), cfg);
  return continue_training(std::move(head), ds, cfg, [gamma](double loss) { return loss >= gamma ? 1.0 : -1.0; });
}

std::vector<std::size_t> isolate_lowest_loss(const TrainedHead& head, const EmbeddingDataset& ds, double fraction) {
  const std::size_t m = poison_count(ds.n(), fraction);
  const auto losses = per_sample_loss(head, ds);
  std::vector<std::size_t> order(ds.n());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
  order.resize(m);
  std::sort(order.begin(), order.end());
  return order;
}

AblResult abl_defense(const EmbeddingDataset& ds, const HeadConfig& head_cfg, const AblParams& params) {
  params.validate();
  head_cfg.validate();
  AblResult out;

  HeadConfig pre_cfg = head_cfg;
  if (params.pretrain_epochs > 0) pre_cfg.epochs = params.pretrain_epochs;
  out.pretrained = abl_pretrain(ds, pre_cfg, params.lga_gamma);

  out.isolated = isolate_lowest_loss(out.pretrained, ds, params.isolation_fraction);
  std::vector<std::size_t> rest;
  rest.reserve(ds.n() - out.isolated.size());
  for (std::size_t i = 0, j = 0; i < ds.n(); ++i) {
    if (j < out.isolated.size() && out.isolated[j] == i) {
      ++j;
    } else {
      rest.push_back(i);
    }
  }

  HeadConfig retrain_cfg = head_cfg;
  if (params.retrain_epochs > 0) retrain_cfg.epochs = params.retrain_epochs;
  TrainedHead head = continue_training(out.pretrained, ds.subset(rest), retrain_cfg);

  HeadConfig unlearn_cfg = head_cfg;
  unlearn_cfg.epochs = params.unlearn_epochs;
  unlearn_cfg.learning_rate = params.unlearn_learning_rate;
  out.head = continue_training(std::move(head), ds.subset(out.isolated), unlearn_cfg, [](double) { return -1.0; });
  return out;
}

double isolation_precision(std::span<const std::size_t> isolated, std::span<const std::size_t> poisoned) {
  if (isolated.empty()) throw ValidationError("isolation_precision: nothing isolated");
  std::vector<std::size_t> common;
  std::set_intersection(isolated.begin(), isolated.end(), poisoned.begin(), poisoned.end(), std::back_inserter(common));
  return static_cast<double>(common.size()) / static_cast<double>(isolated.size());
}

json DefenseReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j = {{"defense", defense},     {"attack", attack},       {"pre_asr", opt(pre_asr)},
            {"post_asr", opt(post_asr)}, {"pre_cacc", pre_cacc}, {"post_cacc", post_cacc}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

}  // namespace c2lab
