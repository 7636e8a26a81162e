#include "c2lab/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <thread>

#include "c2lab/errors.hpp"

namespace c2lab {
using nlohmann::json;

double cacc(const TrainedHead& head, const EmbeddingDataset& test) {
  if (test.n() == 0) throw ValidationError("cacc: empty test set");
  const auto pred = predict(head, test.embeddings);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.n(); ++i) correct += pred[i] == test.labels[i] ? 1 : 0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(test.n());
}

Matrix<std::uint64_t> confusion_matrix(const TrainedHead& head, const EmbeddingDataset& test) {
  const std::size_t C = test.num_classes();
  if (head.num_classes() != C) throw ValidationError("confusion: head and test set disagree on class count");
  Matrix<std::uint64_t> m(C, C, 0);
  const auto pred = predict(head, test.embeddings);
  for (std::size_t i = 0; i < test.n(); ++i) ++m(test.labels[i], pred[i]);
  return m;
}

std::vector<std::size_t> asr_eval_set(const EmbeddingDataset& test, const ConceptScores& test_scores,
                                      const PoisonPlan& plan) {
  if (test_scores.n() != test.n()) throw ValidationError("asr: score rows != test samples");
  if (plan.thresholds.size() != plan.trigger_concepts.size()) throw ValidationError("asr: plan lacks thresholds");
  for (std::size_t k : plan.trigger_concepts) {
    if (k >= test_scores.k()) throw ValidationError("asr: trigger concept column missing from test scores");
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < test.n(); ++i) {
    if (test.labels[i] == plan.target_label) continue;
    for (std::size_t j = 0; j < plan.trigger_concepts.size(); ++j) {
      if (test_scores.scores(i, plan.trigger_concepts[j]) >= plan.thresholds[j]) {
        out.push_back(i);
        break;
      }
    }
  }
  return out;
}

namespace {

AsrResult hit_rate(const std::vector<std::uint32_t>& predictions, std::uint32_t target) {
  AsrResult r;
  r.evaluated = predictions.size();
  r.hits = static_cast<std::size_t>(std::count(predictions.begin(), predictions.end(), target));
  if (r.evaluated > 0) r.percent = 100.0 * static_cast<double>(r.hits) / static_cast<double>(r.evaluated);
  return r;
}

}  // namespace

AsrResult asr(const TrainedHead& head, const EmbeddingDataset& test, const ConceptScores& test_scores,
              const PoisonPlan& plan) {
  const auto rows = asr_eval_set(test, test_scores, plan);
  std::vector<std::uint32_t> pred;
  pred.reserve(rows.size());
  for (std::size_t i : rows) pred.push_back(argmax_lowest(head_logits(head, test.embeddings.row(i))));
  return hit_rate(pred, plan.target_label);
}

AsrResult asr_baseline(const TrainedHead& head, const EmbeddingDataset& test, std::span<const float> trigger,
                       std::uint32_t target_label) {
  if (trigger.size() != test.d()) throw ValidationError("asr_baseline: trigger length != d");
  std::vector<std::uint32_t> pred;
  std::vector<float> x(test.d());
  for (std::size_t i = 0; i < test.n(); ++i) {
    if (test.labels[i] == target_label) continue;
    const auto row = test.embeddings.row(i);
    for (std::size_t c = 0; c < x.size(); ++c) x[c] = row[c] + trigger[c];
    pred.push_back(argmax_lowest(head_logits(head, x)));
  }
  return hit_rate(pred, target_label);
}

// ---------------------------------------------------------------- reports

json AttackReport::to_json() const {
  json conf = json::array();
  for (std::size_t r = 0; r < confusion.rows(); ++r) {
    conf.push_back(std::vector<std::uint64_t>(confusion.row(r).begin(), confusion.row(r).end()));
  }
  return {{"label", label},
          {"cacc", cacc},
          {"asr", asr ? json(*asr) : json(nullptr)},
          {"n_clean_test", n_clean_test},
          {"n_trigger_test", n_trigger_test},
          {"asr_hits", asr_hits},
          {"plan", plan},
          {"config", config},
          {"confusion", conf}};
}

AttackReport AttackReport::from_json(const json& j) {
  try {
    AttackReport r;
    r.label = j.at("label").get<std::string>();
    r.cacc = j.at("cacc").get<double>();
    if (!j.at("asr").is_null()) r.asr = j.at("asr").get<double>();
    r.n_clean_test = j.at("n_clean_test").get<std::size_t>();
    r.n_trigger_test = j.at("n_trigger_test").get<std::size_t>();
    r.asr_hits = j.at("asr_hits").get<std::size_t>();
    r.plan = j.at("plan");
    r.config = j.at("config");
    const auto rows = j.at("confusion").get<std::vector<std::vector<std::uint64_t>>>();
    r.confusion = Matrix<std::uint64_t>(rows.size(), rows.size(), 0);
    for (std::size_t a = 0; a < rows.size(); ++a) {
      if (rows[a].size() != rows.size()) throw ValidationError("attack report: confusion matrix is not square");
      for (std::size_t b = 0; b < rows.size(); ++b) r.confusion(a, b) = rows[a][b];
    }
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed attack report: ") + e.what());
  }
}

AttackReport evaluate_attack(const TrainedHead& head, const EmbeddingDataset& test, const ConceptScores& test_scores,
                             const PoisonPlan& plan, std::string label) {
  AttackReport r;
  r.label = label.empty() && !plan.trigger_names.empty() ? plan.trigger_names.front() : std::move(label);
  r.cacc = cacc(head, test);
  const AsrResult a = asr(head, test, test_scores, plan);
  r.asr = a.percent;
  r.asr_hits = a.hits;
  r.n_trigger_test = a.evaluated;
  r.n_clean_test = test.n();
  r.plan = plan.to_json();
  r.config = head.config.to_json();
  r.confusion = confusion_matrix(head, test);
  return r;
}

AttackReport run_attack(const AttackSetup& setup, const GridPoint& point) {
  const PoisonPlan base_plan = make_plan(setup.train_scores, point.trigger_concepts, point.poison_ratio,
                                         point.target_label);
  const BackdooredDataset poisoned = build_poisoned(setup.train, base_plan.selected, point.target_label);
  PoisonPlan plan = base_plan;
  plan.already_target = static_cast<std::size_t>(
      std::count(poisoned.original_labels.begin(), poisoned.original_labels.end(), point.target_label));
  const TrainedHead head = train_head(poisoned.base, point.head);
  return evaluate_attack(head, setup.test, setup.test_scores, plan, point.label);
}

std::vector<AttackReport> sweep(const AttackSetup& setup, std::span<const GridPoint> grid, unsigned max_threads) {
  std::vector<AttackReport> reports(grid.size());
  const unsigned workers = std::max(1u, std::min<unsigned>(max_threads, static_cast<unsigned>(grid.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) reports[i] = run_attack(setup, grid[i]);
    return reports;
  }
  std::vector<std::exception_ptr> errors(grid.size());
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < grid.size(); i += workers) {
        try {
          reports[i] = run_attack(setup, grid[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return reports;
}

std::string reports_csv(std::span<const AttackReport> reports) {
  std::string out = "Concept,PoisonRatio,CACC,ASR\n";
  char buf[128];
  for (const auto& r : reports) {
    const double pr = r.plan.value("poison_ratio", 0.0);
    if (r.asr) {
      std::snprintf(buf, sizeof buf, ",%.6g,%.2f,%.2f\n", pr, r.cacc, *r.asr);
    } else {
      std::snprintf(buf, sizeof buf, ",%.6g,%.2f,undefined\n", pr, r.cacc);
    }
    out += r.label + buf;
  }
  return out;
}

std::string reports_jsonl(std::span<const AttackReport> reports) {
  std::string out;
  for (const auto& r : reports) out += r.to_json().dump() + "\n";
  return out;
}

}  // namespace c2lab
