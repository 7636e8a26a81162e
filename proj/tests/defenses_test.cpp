#include <doctest.h>

#include <limits>

#include "c2lab/attack.hpp"
#include "c2lab/defenses.hpp"
#include "c2lab/errors.hpp"
#include "c2lab/eval.hpp"
#include "support.hpp"

using namespace c2lab;

namespace {

HeadConfig small_cfg(std::uint64_t seed) {
  HeadConfig cfg;
  cfg.epochs = 4;
  cfg.learning_rate = 0.01;
  cfg.batch_size = 16;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("finetune with zero epochs leaves the head unchanged") {
  const auto ds = c2lab::testing::random_dataset(40, 5, 3, 1);
  const auto head = train_head(ds, small_cfg(2));
  auto cfg = small_cfg(3);
  cfg.epochs = 0;
  const auto same = finetune_defense(head, ds.subset(std::vector<std::size_t>{0, 1, 2, 3}), cfg);
  CHECK(same.layers[0].weight == head.layers[0].weight);
  CHECK(same.layers[0].bias == head.layers[0].bias);
}

TEST_CASE("finetune moves the head toward the clean labels") {
  const auto ds = c2lab::testing::random_dataset(120, 4, 2, 5);
  auto cfg = small_cfg(1);
  cfg.epochs = 0;
  const auto head = train_head(ds, cfg);
  cfg.epochs = 40;
  const auto tuned = finetune_defense(head, ds, cfg);
  double before = 0.0, after = 0.0;
  for (double l : per_sample_loss(head, ds)) before += l;
  for (double l : per_sample_loss(tuned, ds)) after += l;
  CHECK(after < before);
}

TEST_CASE("isolation picks ceil(fraction * n) lowest-loss samples") {
  const auto ds = c2lab::testing::random_dataset(250, 4, 3, 7);
  const auto head = train_head(ds, small_cfg(4));
  const auto iso = isolate_lowest_loss(head, ds, 0.01);
  CHECK(iso.size() == 3);
  CHECK(std::is_sorted(iso.begin(), iso.end()));
  const auto losses = per_sample_loss(head, ds);
  double worst_isolated = 0.0;
  for (auto i : iso) worst_isolated = std::max(worst_isolated, losses[i]);
  std::size_t below = 0;
  for (double l : losses) below += l < worst_isolated;
  CHECK(below <= 2);
  CHECK(isolate_lowest_loss(head, ds, 0.05).size() == 13);
}

TEST_CASE("isolation ties go to the lower index") {
  auto ds = c2lab::testing::random_dataset(10, 2, 2, 1);
  TrainedHead flat;
  flat.layers.push_back({MatrixD(2, 2), {0.0, 0.0}});
  CHECK(isolate_lowest_loss(flat, ds, 0.2) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("loss floor at minus infinity is ordinary training") {
  const auto ds = c2lab::testing::random_dataset(64, 6, 3, 9);
  const auto cfg = small_cfg(11);
  const auto plain = train_head(ds, cfg);
  const auto floor = abl_pretrain(ds, cfg, -std::numeric_limits<double>::infinity());
  CHECK(plain.layers[0].weight == floor.layers[0].weight);
  CHECK(plain.layers[0].bias == floor.layers[0].bias);
}

TEST_CASE("abl is deterministic and reports its isolation") {
  const auto ds = c2lab::testing::random_dataset(200, 5, 3, 13);
  const auto bd = baseline_trigger(ds, 0.05, random_trigger(5, 30.0, 2), 0, 3);
  AblParams p;
  p.isolation_fraction = 0.05;
  p.unlearn_epochs = 2;
  const auto a = abl_defense(bd.base, small_cfg(6), p);
  const auto b = abl_defense(bd.base, small_cfg(6), p);
  CHECK(a.isolated == b.isolated);
  CHECK(a.head.layers[0].weight == b.head.layers[0].weight);
  CHECK(a.isolated.size() == 10);
  const double prec = isolation_precision(a.isolated, bd.poisoned_indices);
  CHECK(prec >= 0.0);
  CHECK(prec <= 1.0);
}

TEST_CASE("abl parameter validation") {
  AblParams p;
  p.isolation_fraction = 0.5;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p.isolation_fraction = 0.01;
  p.unlearn_learning_rate = 0.0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  CHECK(AblParams{}.to_json()["lga_gamma"] == 0.5);
}

TEST_CASE("isolation precision") {
  const std::vector<std::size_t> iso{1, 4, 7, 9};
  const std::vector<std::size_t> poisoned{2, 4, 9, 11};
  CHECK(isolation_precision(iso, poisoned) == 0.5);
  CHECK(isolation_precision(poisoned, poisoned) == 1.0);
  CHECK_THROWS_AS(isolation_precision(std::vector<std::size_t>{}, poisoned), ValidationError);
}

TEST_CASE("defense report json") {
  DefenseReport r;
  r.defense = "finetune";
  r.attack = "baseline";
  r.pre_asr = 99.0;
  r.post_cacc = 90.0;
  r.extra["n_isolated"] = 3;
  const auto j = r.to_json();
  CHECK(j["post_asr"].is_null());
  CHECK(j["pre_asr"] == 99.0);
  CHECK(j["n_isolated"] == 3);
}
