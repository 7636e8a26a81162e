#include "c2lab/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "c2lab/errors.hpp"
#include "c2lab/rng.hpp"

namespace c2lab {
using nlohmann::json;

namespace {

void check_ratio(double pr, const char* what) {
  if (!(pr > 0.0 && pr < 1.0)) throw ValidationError(std::string(what) + " must lie in (0, 1)");
}

// Sample indices ordered by descending score, ascending index among ties.
std::vector<std::size_t> rank_column(const ConceptScores& scores, std::size_t k) {
  if (k >= scores.k()) throw ValidationError("concept index " + std::to_string(k) + " out of range");
  if (scores.n() == 0) throw ValidationError("empty score column");
  std::vector<std::size_t> order(scores.n());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores.scores(a, k) > scores.scores(b, k); });
  return order;
}

}  // namespace

std::size_t poison_count(std::size_t n, double pr) {
  check_ratio(pr, "poison ratio");
  if (n == 0) throw ValidationError("poison_count: empty dataset");
  const double exact = pr * static_cast<double>(n);
  auto m = static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
  return std::clamp<std::size_t>(m, 1, n);
}

double select_threshold(const ConceptScores& scores, std::size_t k, double pr) {
  const std::size_t m = poison_count(scores.n(), pr);
  const auto order = rank_column(scores, k);
  return scores.scores(order[m - 1], k);
}

std::vector<std::size_t> recognize(const ConceptScores& scores, std::size_t k, double pr) {
  const std::size_t m = poison_count(scores.n(), pr);
  auto order = rank_column(scores, k);
  order.resize(m);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<std::size_t> multi_recognize(const ConceptScores& scores, std::span<const std::size_t> concepts,
                                         std::span<const double> ratios) {
  if (concepts.size() < 2) throw ValidationError("multi_recognize: need at least two trigger concepts");
  if (ratios.size() != concepts.size()) throw ValidationError("multi_recognize: one ratio per concept required");
  std::vector<std::size_t> all;
  for (std::size_t j = 0; j < concepts.size(); ++j) {
    const auto sel = recognize(scores, concepts[j], ratios[j]);
    all.insert(all.end(), sel.begin(), sel.end());
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

PoisonPlan make_plan(const ConceptScores& scores, std::span<const std::size_t> concepts, double pr,
                     std::uint32_t target_label) {
  if (concepts.empty()) throw ValidationError("make_plan: no trigger concepts");
  PoisonPlan plan;
  plan.trigger_concepts.assign(concepts.begin(), concepts.end());
  plan.poison_ratio = pr;
  plan.target_label = target_label;
  for (std::size_t k : concepts) {
    plan.thresholds.push_back(select_threshold(scores, k, pr));
    plan.trigger_names.push_back(scores.concept_names.at(k));
  }
  if (concepts.size() == 1) {
    plan.selected = recognize(scores, concepts[0], pr);
  } else {
    const std::vector<double> ratios(concepts.size(), pr);
    plan.selected = multi_recognize(scores, concepts, ratios);
  }
  return plan;
}

BackdooredDataset build_poisoned(const EmbeddingDataset& ds, std::span<const std::size_t> selected,
                                 std::uint32_t target_label) {
  if (target_label >= ds.num_classes()) {
    throw ValidationError("target label " + std::to_string(target_label) + " is not a valid class");
  }
  BackdooredDataset out;
  out.base = ds;
  out.target_label = target_label;
  out.poisoned_indices.assign(selected.begin(), selected.end());
  std::sort(out.poisoned_indices.begin(), out.poisoned_indices.end());
  out.poisoned_indices.erase(std::unique(out.poisoned_indices.begin(), out.poisoned_indices.end()),
                             out.poisoned_indices.end());
  for (std::size_t i : out.poisoned_indices) {
    if (i >= ds.n()) throw ValidationError("selected index " + std::to_string(i) + " out of range");
    out.original_labels.push_back(ds.labels[i]);
    out.base.labels[i] = target_label;
  }
  return out;
}

std::vector<float> random_trigger(std::size_t d, double magnitude, std::uint64_t seed) {
  if (d == 0 || !(magnitude > 0.0)) throw ValidationError("random_trigger: need d > 0 and magnitude > 0");
  Rng rng(seed);
  std::vector<double> v(d);
  for (double& x : v) x = rng.normal();
  const double nv = norm(v);
  std::vector<float> out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = static_cast<float>(v[i] * magnitude / nv);
  return out;
}

MatrixF apply_trigger(const MatrixF& embeddings, std::span<const float> trigger) {
  if (trigger.size() != embeddings.cols()) throw ValidationError("trigger length != embedding dimension");
  MatrixF out = embeddings;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += trigger[c];
  }
  return out;
}

BackdooredDataset baseline_trigger(const EmbeddingDataset& ds, double epsilon, std::span<const float> trigger,
                                   std::uint32_t target_label, std::uint64_t seed, BaselinePlan* plan) {
  check_ratio(epsilon, "epsilon");
  if (trigger.size() != ds.d()) throw ValidationError("trigger length != embedding dimension");
  if (std::all_of(trigger.begin(), trigger.end(), [](float v) { return v == 0.0f; })) {
    throw ValidationError("baseline trigger vector is zero");
  }
  const std::size_t m = poison_count(ds.n(), epsilon);
  std::vector<std::size_t> order(ds.n());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  order.resize(m);
  std::sort(order.begin(), order.end());

  BackdooredDataset out = build_poisoned(ds, order, target_label);
  for (std::size_t i : out.poisoned_indices) {
    auto row = out.base.embeddings.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += trigger[c];
  }
  if (plan != nullptr) {
    plan->epsilon = epsilon;
    plan->trigger.assign(trigger.begin(), trigger.end());
    plan->target_label = target_label;
    plan->selected = out.poisoned_indices;
    plan->seed = seed;
  }
  return out;
}

// ---------------------------------------------------------------- JSON

json PoisonPlan::to_json() const {
  return {{"mode", "concept"},
          {"trigger_concepts", trigger_concepts},
          {"trigger_names", trigger_names},
          {"thresholds", thresholds},
          {"poison_ratio", poison_ratio},
          {"target_label", target_label},
          {"selected", selected},
          {"n_selected", selected.size()},
          {"already_target", already_target}};
}

PoisonPlan PoisonPlan::from_json(const json& j) {
  try {
    PoisonPlan p;
    p.trigger_concepts = j.at("trigger_concepts").get<std::vector<std::size_t>>();
    p.trigger_names = j.at("trigger_names").get<std::vector<std::string>>();
    p.thresholds = j.at("thresholds").get<std::vector<double>>();
    p.poison_ratio = j.at("poison_ratio").get<double>();
    p.target_label = j.at("target_label").get<std::uint32_t>();
    p.selected = j.at("selected").get<std::vector<std::size_t>>();
    p.already_target = j.value("already_target", std::size_t{0});
    if (p.trigger_concepts.empty() || p.thresholds.size() != p.trigger_concepts.size()) {
      throw ValidationError("poison plan: need one threshold per trigger concept");
    }
    return p;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed poison plan: ") + e.what());
  }
}

json BaselinePlan::to_json() const {
  return {{"mode", "baseline"},       {"epsilon", epsilon},   {"trigger", trigger}, {"target_label", target_label},
          {"selected", selected}, {"n_selected", selected.size()}, {"seed", seed}};
}

BaselinePlan BaselinePlan::from_json(const json& j) {
  try {
    BaselinePlan p;
    p.epsilon = j.at("epsilon").get<double>();
    p.trigger = j.at("trigger").get<std::vector<float>>();
    p.target_label = j.at("target_label").get<std::uint32_t>();
    p.selected = j.at("selected").get<std::vector<std::size_t>>();
    p.seed = j.at("seed").get<std::uint64_t>();
    return p;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed baseline plan: ") + e.what());
  }
}

}  // namespace c2lab
