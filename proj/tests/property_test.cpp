#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "c2lab/attack.hpp"
#include "c2lab/core_data.hpp"
#include "c2lab/extractors.hpp"
#include "c2lab/rng.hpp"
#include "c2lab/theory.hpp"
#include "support.hpp"

using namespace c2lab;
using c2lab::testing::make_scores;

namespace {

// Random column; coarse grids force ties.
std::vector<double> random_column(Rng& rng, std::size_t n) {
  std::vector<double> col(n);
  const bool coarse = rng.bernoulli(0.5);
  const std::uint64_t levels = 2 + rng.below(6);
  for (auto& v : col) v = coarse ? static_cast<double>(rng.below(levels)) - 2.0 : rng.normal();
  return col;
}

// Top-m by descending score, ties to lower index, via a full sort.
std::vector<std::size_t> sorted_oracle(const std::vector<double>& col, std::size_t m) {
  std::vector<std::size_t> order(col.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return col[a] != col[b] ? col[a] > col[b] : a < b;
  });
  order.resize(m);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

TEST_CASE("recognize returns exactly ceil(pr * n) indices") {
  Rng rng(20240101);
  for (int trial = 0; trial < 1500; ++trial) {
    const std::size_t n = 1 + rng.below(400);
    const double pr = 0.0005 + 0.9 * rng.uniform();
    const auto col = random_column(rng, n);
    const auto s = make_scores({col});
    const auto sel = recognize(s, 0, pr);
    const std::size_t m = poison_count(n, pr);
    REQUIRE(sel.size() == m);
    CHECK(std::adjacent_find(sel.begin(), sel.end(), std::greater_equal<>()) == sel.end());
    CHECK(sel == sorted_oracle(col, m));
    const double thr = select_threshold(s, 0, pr);
    for (auto i : sel) CHECK(col[i] >= thr);
  }
}

TEST_CASE("recognize is invariant to positive rescaling and shifts") {
  Rng rng(77);
  for (int trial = 0; trial < 1200; ++trial) {
    const std::size_t n = 2 + rng.below(300);
    const double pr = 0.001 + 0.5 * rng.uniform();
    const auto col = random_column(rng, n);
    const double scale = std::ldexp(1.0, static_cast<int>(rng.below(40)) - 20);
    std::vector<double> scaled(n), shifted(n);
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = col[i] * scale;
      shifted[i] = col[i] + 1024.0;
    }
    const auto base = recognize(make_scores({col}), 0, pr);
    CHECK(recognize(make_scores({scaled}), 0, pr) == base);
    const bool integral = std::all_of(col.begin(), col.end(), [](double v) { return v == std::floor(v); });
    if (integral) CHECK(recognize(make_scores({shifted}), 0, pr) == base);
  }
}

TEST_CASE("union selection matches the OR oracle on random columns") {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(200);
    const std::size_t k = 2 + rng.below(3);
    std::vector<std::vector<double>> cols;
    std::vector<std::size_t> concepts;
    std::vector<double> ratios;
    for (std::size_t j = 0; j < k; ++j) {
      cols.push_back(random_column(rng, n));
      concepts.push_back(rng.below(k));
      ratios.push_back(0.001 + 0.3 * rng.uniform());
    }
    const auto s = make_scores(cols);
    CHECK(multi_recognize(s, concepts, ratios) == c2lab::testing::brute_force_union(s, concepts, ratios));
  }
}

TEST_CASE("poison count stays within one of pr * n") {
  Rng rng(9);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng.below(100000);
    const double pr = 1e-6 + 0.999 * rng.uniform();
    const std::size_t m = poison_count(n, pr);
    CHECK(m >= 1);
    CHECK(m <= n);
    CHECK(static_cast<double>(m) >= std::min(pr * static_cast<double>(n), static_cast<double>(n)) - 1e-6);
    CHECK(static_cast<double>(m) < pr * static_cast<double>(n) + 1.0);
  }
}

TEST_CASE("split is a partition for random sizes") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(300);
    const double frac = 0.05 + 0.9 * rng.uniform();
    const auto ds = c2lab::testing::random_dataset(n, 2, 2, trial);
    Split s;
    try {
      s = split(ds, frac, trial);
    } catch (const std::exception&) {
      continue;
    }
    std::set<std::size_t> seen(s.train_indices.begin(), s.train_indices.end());
    for (auto i : s.test_indices) CHECK(seen.insert(i).second);
    CHECK(seen.size() == n);
    CHECK(s.train.n() + s.test.n() == n);
  }
}

TEST_CASE("poisoning changes only selected labels") {
  Rng rng(41);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 5 + rng.below(100);
    const auto ds = c2lab::testing::random_dataset(n, 3, 4, trial + 100);
    const auto sel = recognize(make_scores({random_column(rng, n)}), 0, 0.01 + 0.3 * rng.uniform());
    const auto target = static_cast<std::uint32_t>(rng.below(4));
    const auto bd = build_poisoned(ds, sel, target);
    CHECK(bd.base.embeddings == ds.embeddings);
    CHECK(bd.restored_labels() == ds.labels);
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool chosen = j < sel.size() && sel[j] == i;
      if (chosen) ++j;
      CHECK(bd.base.labels[i] == (chosen ? target : ds.labels[i]));
    }
  }
}

TEST_CASE("soft threshold is odd and shrinks toward zero") {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const double v = 10 * rng.normal();
    const double t = 5 * rng.uniform();
    const double s = soft_threshold(v, t);
    CHECK(soft_threshold(-v, t) == -s);
    CHECK(std::abs(s) <= std::abs(v));
    if (std::abs(v) <= t) CHECK(s == 0.0);
    else CHECK(std::abs(std::abs(v) - std::abs(s) - t) <= 1e-12);
  }
}

TEST_CASE("eps_min is never negative and base invariant on random inputs") {
  Rng rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    BoundInputs in{1 + rng.below(1u << 20), 0.001 + 0.998 * rng.uniform(), 1 + rng.below(10000), 2 + rng.below(1000)};
    const auto r = eps_min(in);
    CHECK(r.eps_min >= 0.0);
    CHECK(r.clamped == (r.raw <= 0.0));
    CHECK(std::abs(eps_min_raw_in_base(in, 2.0) - r.raw) <= 1e-12);
  }
}

TEST_CASE("mutual information stays within its entropy limits") {
  for (std::uint64_t seed = 1000; seed < 1200; ++seed) {
    const std::size_t n = 1 + seed % 3;
    const auto ch = random_channel(seed, n, seed % (n + 1));
    const auto r = mi_exact(ch);
    CHECK(r.mi >= 0.0);
    CHECK(r.mi <= std::min(r.h_q, r.h_output) + 1e-12);
    CHECK(r.mi <= ch.flip_fraction() * static_cast<double>(n) * std::log(static_cast<double>(ch.num_labels)) + 1e-12);
  }
}
