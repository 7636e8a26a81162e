#include <doctest.h>

#include <set>

#include "c2lab/attack.hpp"
#include "c2lab/errors.hpp"
#include "c2lab/extractors.hpp"
#include "c2lab/synth.hpp"
#include "support.hpp"

using namespace c2lab;
using c2lab::testing::make_scores;

TEST_CASE("poison count is ceil(pr * n)") {
  CHECK(poison_count(2000, 0.01) == 20);
  CHECK(poison_count(1000, 0.01) == 10);
  CHECK(poison_count(100, 0.07) == 7);
  CHECK(poison_count(50, 0.001) == 1);
  CHECK(poison_count(5, 0.4) == 2);
  CHECK(poison_count(3, 0.5) == 2);
  CHECK_THROWS_AS(poison_count(10, 0.0), ValidationError);
  CHECK_THROWS_AS(poison_count(10, 1.0), ValidationError);
}

TEST_CASE("threshold is the m-th largest score") {
  std::vector<double> col(1000);
  for (std::size_t i = 0; i < col.size(); ++i) col[i] = 0.001 * static_cast<double>((i * 7919) % 1000);
  col[0] = 0.9;
  col[1] = 0.5;
  col[2] = 0.1;
  col[3] = 0.05;
  const auto s = make_scores({col});
  std::vector<double> sorted = col;
  std::sort(sorted.rbegin(), sorted.rend());
  CHECK(select_threshold(s, 0, 0.01) == sorted[9]);
  CHECK(select_threshold(s, 0, 0.0005) == sorted[0]);
  CHECK(select_threshold(make_scores({std::vector<double>(40, 0.25)}), 0, 0.1) == 0.25);
  CHECK_THROWS_AS(select_threshold(s, 1, 0.01), ValidationError);
}

TEST_CASE("recognize examples") {
  CHECK(recognize(make_scores({{.9, .9, .5, .2, .1}}), 0, 0.4) == std::vector<std::size_t>{0, 1});
  CHECK(recognize(make_scores({{.9, .5, .5, .1}}), 0, 0.5) == std::vector<std::size_t>{0, 1});
  CHECK(recognize(make_scores({{.1, .5, .9, .5}}), 0, 0.5) == std::vector<std::size_t>{1, 2});
}

TEST_CASE("build_poisoned edge cases") {
  const auto ds = c2lab::testing::random_dataset(30, 4, 3, 5);
  const auto none = build_poisoned(ds, std::vector<std::size_t>{}, 1);
  CHECK(none.base == ds);
  std::vector<std::size_t> all(ds.n());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto every = build_poisoned(ds, all, 2);
  for (auto y : every.base.labels) CHECK(y == 2);
  CHECK(every.restored_labels() == ds.labels);
  CHECK_THROWS_AS(build_poisoned(ds, std::vector<std::size_t>{30}, 0), ValidationError);
  CHECK_THROWS_AS(build_poisoned(ds, std::vector<std::size_t>{0}, 3), ValidationError);
}

TEST_CASE("twenty flips at n=2000 and pr=0.01") {
  SynthSpec spec;
  spec.prevalence.assign(8, 0.1);
  spec.seed = 2;
  const auto pd = gen_planted(spec);
  ConceptScores s;
  s.scores = MatrixD(2000, 1);
  for (std::size_t i = 0; i < 2000; ++i) s.scores(i, 0) = pd.dataset.embeddings(i, 0);
  s.concept_names = {"Airplane"};
  const std::vector<std::size_t> k{0};
  const auto plan = make_plan(s, k, 0.01, 0);
  CHECK(plan.selected.size() == 20);
  const auto bd = build_poisoned(pd.dataset, plan.selected, 0);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < 2000; ++i) changed += bd.base.labels[i] != pd.dataset.labels[i];
  std::size_t already = 0;
  for (auto i : plan.selected) already += pd.dataset.labels[i] == 0;
  CHECK(changed + already == 20);
  CHECK(bd.poisoned_indices.size() == 20);
}

TEST_CASE("build_poisoned is idempotent") {
  const auto ds = c2lab::testing::random_dataset(40, 3, 4, 8);
  const std::vector<std::size_t> sel{1, 5, 9, 33};
  const auto once = build_poisoned(ds, sel, 3);
  const auto twice = build_poisoned(once.base, sel, 3);
  CHECK(twice.base == once.base);
}

TEST_CASE("multi-concept union examples") {
  std::vector<double> a(100, 0.0), b(100, 0.0);
  for (std::size_t i = 0; i < 10; ++i) {
    a[i] = 1.0 + static_cast<double>(i);
    b[50 + i] = 1.0 + static_cast<double>(i);
  }
  const auto s = make_scores({a, b});
  const std::vector<std::size_t> ks{0, 1};
  const std::vector<double> pr{0.1, 0.1};
  CHECK(multi_recognize(s, ks, pr).size() == 20);
  const std::vector<std::size_t> same{0, 0};
  CHECK(multi_recognize(s, same, pr) == recognize(s, 0, 0.1));
  CHECK_THROWS_AS(multi_recognize(s, std::vector<std::size_t>{0}, std::vector<double>{0.1}), ValidationError);
}

TEST_CASE("multi-concept union matches the OR oracle on planted data") {
  SynthSpec spec;
  spec.prevalence.assign(8, 0.1);
  spec.seed = 11;
  const auto pd = gen_planted(spec);
  MatrixF dirs(8, 64);
  for (std::size_t k = 0; k < 8; ++k) {
    for (std::size_t c = 0; c < 64; ++c) dirs(k, c) = static_cast<float>(pd.truth.planted_directions(k, c));
  }
  const auto scores = tcav_scores(pd.dataset, ConceptBank(dirs, synth_concept_names(8)));
  for (const auto& [ks, pr] : std::vector<std::pair<std::vector<std::size_t>, std::vector<double>>>{
           {{0, 1}, {0.01, 0.01}}, {{2, 5, 7}, {0.005, 0.02, 0.01}}, {{3, 3}, {0.05, 0.01}}}) {
    CHECK(multi_recognize(scores, ks, pr) == c2lab::testing::brute_force_union(scores, ks, pr));
  }
}

TEST_CASE("zero-noise planted data: recognize returns the planted positives") {
  SynthSpec spec;
  spec.n = 500;
  spec.d = 16;
  spec.num_classes = 4;
  spec.num_concepts = 3;
  spec.noise_sigma = 0.0;
  spec.class_mean_scale = 0.0;
  spec.prevalence = {0.1, 0.2, 0.05};
  spec.seed = 3;
  const auto pd = gen_planted(spec);
  MatrixF dirs(3, 16);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t c = 0; c < 16; ++c) dirs(k, c) = static_cast<float>(pd.truth.planted_directions(k, c));
  }
  const auto scores = tcav_scores(pd.dataset, ConceptBank(dirs, synth_concept_names(3)));
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<std::size_t> positives;
    for (std::size_t i = 0; i < spec.n; ++i) {
      if (pd.truth.concept_presence(i, k)) positives.push_back(i);
    }
    REQUIRE(!positives.empty());
    const double pr = static_cast<double>(positives.size()) / static_cast<double>(spec.n);
    CHECK(recognize(scores, k, pr) == positives);
  }
}

TEST_CASE("plan json round trip") {
  const auto s = make_scores({{.3, .9, .1, .7}, {.2, .2, .8, .1}});
  const std::vector<std::size_t> ks{0, 1};
  auto plan = make_plan(s, ks, 0.25, 2);
  plan.trigger_names = {"k0", "k1"};
  const auto back = PoisonPlan::from_json(plan.to_json());
  CHECK(back.selected == plan.selected);
  CHECK(back.thresholds == plan.thresholds);
  CHECK(back.target_label == 2);
  CHECK(plan.selected == std::vector<std::size_t>{1, 2});
}

TEST_CASE("baseline trigger") {
  const auto ds = c2lab::testing::random_dataset(50, 6, 3, 2);
  const auto trig = random_trigger(6, 5.0, 1);
  CHECK(norm(trig) == doctest::Approx(5.0).epsilon(1e-6));
  BaselinePlan plan;
  const auto bd = baseline_trigger(ds, 0.01, trig, 1, 9, &plan);
  CHECK(bd.poisoned_indices.size() == 1);
  CHECK(plan.selected == bd.poisoned_indices);
  const std::size_t i = bd.poisoned_indices[0];
  CHECK(bd.base.labels[i] == 1);
  for (std::size_t c = 0; c < 6; ++c) {
    const float restored = bd.base.embeddings(i, c) - trig[c];
    CHECK(std::abs(restored - ds.embeddings(i, c)) <= 1e-6f * std::max(1.f, std::abs(ds.embeddings(i, c))));
  }
  const auto again = baseline_trigger(ds, 0.01, trig, 1, 9);
  CHECK(again.base == bd.base);
  CHECK_THROWS_AS(baseline_trigger(ds, 0.1, std::vector<float>(6, 0.f), 1, 9), ValidationError);
  const auto back = BaselinePlan::from_json(plan.to_json());
  CHECK(back.trigger == plan.trigger);
}
