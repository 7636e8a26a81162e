#include "c2lab/theory.hpp"

#include <cmath>
#include <unordered_map>

#include "c2lab/errors.hpp"
#include "c2lab/rng.hpp"

namespace c2lab {
using nlohmann::json;

void BoundInputs::validate() const {
  if (num_concepts < 1) throw ValidationError("bound: K must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("bound: delta must lie in (0, 1)");
  if (num_samples < 1) throw ValidationError("bound: N must be >= 1");
  if (num_labels < 2) throw ValidationError("bound: |Y| must be >= 2 (iota = ln|Y| would be 0)");
}

BoundReport eps_min(const BoundInputs& inputs) {
  inputs.validate();
  BoundReport r;
  r.h_q = std::log(static_cast<double>(inputs.num_concepts));
  r.iota = std::log(static_cast<double>(inputs.num_labels));
  r.numerator = r.h_q - std::log(1.0 / inputs.delta) - std::log(2.0);
  r.raw = r.numerator / (static_cast<double>(inputs.num_samples) * r.iota);
  r.clamped = r.raw <= 0.0;
  r.eps_min = r.clamped ? 0.0 : r.raw;
  r.delta_n = inputs.num_concepts >= 2 ? concentration_delta(inputs.num_concepts, inputs.num_samples, inputs.delta) : 0.0;
  r.delta_above_inverse_k = inputs.delta > 1.0 / static_cast<double>(inputs.num_concepts);
  return r;
}

double eps_min_raw_in_base(const BoundInputs& inputs, double base) {
  inputs.validate();
  const double lb = std::log(base);
  const auto lg = [lb](double x) { return std::log(x) / lb; };
  const double num = lg(static_cast<double>(inputs.num_concepts)) - lg(1.0 / inputs.delta) - lg(2.0);
  return num / (static_cast<double>(inputs.num_samples) * lg(static_cast<double>(inputs.num_labels)));
}

json BoundReport::to_json(const BoundInputs& inputs) const {
  return {{"K", inputs.num_concepts},
          {"delta", inputs.delta},
          {"N", inputs.num_samples},
          {"ycard", inputs.num_labels},
          {"unit", "nats"},
          {"h_q", h_q},
          {"iota", iota},
          {"numerator", numerator},
          {"raw", raw},
          {"eps_min", eps_min},
          {"clamped", clamped},
          {"delta_n", delta_n},
          {"delta_above_inverse_k", delta_above_inverse_k}};
}

double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("binary_entropy: p must lie in [0, 1]");
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log(p) - (1.0 - p) * std::log1p(-p);
}

double empirical_entropy(std::span<const std::uint64_t> counts) {
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw ValidationError("empirical_entropy: all counts are zero");
  const double n = static_cast<double>(total);
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

double concentration_delta(std::size_t num_concepts, std::size_t num_samples, double delta_prime) {
  if (num_concepts < 2) throw ValidationError("concentration_delta: K must be >= 2");
  if (num_samples < 1) throw ValidationError("concentration_delta: N must be >= 1");
  if (!(delta_prime > 0.0 && delta_prime < 1.0)) throw ValidationError("concentration_delta: delta' must lie in (0, 1)");
  return std::log(static_cast<double>(num_concepts)) *
         std::sqrt(2.0 * std::log(2.0 / delta_prime) / static_cast<double>(num_samples));
}

double simulate_concentration(std::size_t num_concepts, std::size_t num_samples, std::size_t trials,
                              double delta_prime, std::uint64_t seed) {
  if (trials < 1) throw ValidationError("simulate_concentration: trials must be >= 1");
  const double t = concentration_delta(num_concepts, num_samples, delta_prime);
  const double h_true = std::log(static_cast<double>(num_concepts));
  Rng rng(seed);
  std::vector<std::uint64_t> counts(num_concepts);
  std::size_t violations = 0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < num_samples; ++i) ++counts[rng.below(num_concepts)];
    if (std::abs(empirical_entropy(counts) - h_true) > t) ++violations;
  }
  return static_cast<double>(violations) / static_cast<double>(trials);
}

// ---------------------------------------------------------------- channels

double ChannelSpec::flip_fraction() const {
  return static_cast<double>(flipped_positions.size()) / static_cast<double>(num_samples);
}

void ChannelSpec::validate() const {
  if (num_concepts < 1) throw ValidationError("channel: K must be >= 1");
  if (num_samples < 1 || num_samples > 4) throw ValidationError("channel: N must lie in [1, 4]");
  if (num_labels < 2 || num_labels > 3) throw ValidationError("channel: |Y| must lie in [2, 3]");
  if (atom_probs.empty() || atom_probs.size() > 4) throw ValidationError("channel: need 1 to 4 feature atoms");
  if (clean_label.size() != atom_probs.size()) throw ValidationError("channel: one clean label per atom");
  double total = 0.0;
  for (double p : atom_probs) {
    if (!(p >= 0.0)) throw ValidationError("channel: negative atom probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ValidationError("channel: atom probabilities must sum to 1");
  for (auto y : clean_label) {
    if (y >= num_labels) throw ValidationError("channel: clean label out of range");
  }
  if (!concept_prior.empty()) {
    if (concept_prior.size() != num_concepts) throw ValidationError("channel: prior needs K entries");
    double s = 0.0;
    for (double p : concept_prior) s += p;
    if (std::abs(s - 1.0) > 1e-12) throw ValidationError("channel: prior must sum to 1");
  }
  std::vector<bool> seen(num_samples, false);
  for (auto pos : flipped_positions) {
    if (pos >= num_samples || seen[pos]) throw ValidationError("channel: flipped positions must be distinct and < N");
    seen[pos] = true;
  }
  if (relabel.size() != num_concepts) throw ValidationError("channel: relabel table needs K rows");
  for (const auto& per_q : relabel) {
    if (per_q.size() != flipped_positions.size()) throw ValidationError("channel: one relabel row per flipped position");
    for (const auto& per_t : per_q) {
      if (per_t.size() != atom_probs.size()) throw ValidationError("channel: relabel row needs one label per atom");
      for (auto y : per_t) {
        if (y >= num_labels) throw ValidationError("channel: relabel target out of range");
      }
    }
  }
  double outcomes = static_cast<double>(num_concepts);
  for (std::size_t i = 0; i < num_samples; ++i) outcomes *= static_cast<double>(atom_probs.size() * num_labels);
  if (outcomes > static_cast<double>(kMaxJointOutcomes)) throw ValidationError("channel: state space too large");
}

MutualInformation mi_exact(const ChannelSpec& spec) {
  spec.validate();
  const std::size_t K = spec.num_concepts;
  const std::size_t N = spec.num_samples;
  const std::size_t A = spec.atom_probs.size();
  const std::size_t Y = spec.num_labels;

  std::vector<double> prior = spec.concept_prior;
  if (prior.empty()) prior.assign(K, 1.0 / static_cast<double>(K));
  // flip slot of each position, or -1
  std::vector<int> slot(N, -1);
  for (std::size_t t = 0; t < spec.flipped_positions.size(); ++t) slot[spec.flipped_positions[t]] = static_cast<int>(t);

  std::size_t feature_tuples = 1;
  for (std::size_t i = 0; i < N; ++i) feature_tuples *= A;

  // Dataset key: features in base A, then labels in base Y.
  std::unordered_map<std::uint64_t, std::vector<double>> joint;
  std::vector<std::size_t> atoms(N);
  for (std::size_t q = 0; q < K; ++q) {
    if (prior[q] == 0.0) continue;
    for (std::size_t f = 0; f < feature_tuples; ++f) {
      std::size_t rem = f;
      double p = prior[q];
      for (std::size_t i = 0; i < N; ++i) {
        atoms[i] = rem % A;
        rem /= A;
        p *= spec.atom_probs[atoms[i]];
      }
      if (p == 0.0) continue;
      std::uint64_t key = f;
      for (std::size_t i = 0; i < N; ++i) {
        const std::uint32_t y = slot[i] < 0 ? spec.clean_label[atoms[i]]
                                            : spec.relabel[q][static_cast<std::size_t>(slot[i])][atoms[i]];
        key = key * Y + y;
      }
      auto& row = joint[key];
      if (row.empty()) row.assign(K, 0.0);
      row[q] += p;
    }
  }

  MutualInformation out;
  for (double p : prior) {
    if (p > 0.0) out.h_q -= p * std::log(p);
  }
  for (const auto& [key, row] : joint) {
    double ps = 0.0;
    for (double v : row) ps += v;
    if (ps > 0.0) out.h_output -= ps * std::log(ps);
    for (std::size_t q = 0; q < K; ++q) {
      if (row[q] > 0.0) out.mi += row[q] * std::log(row[q] / (prior[q] * ps));
    }
  }
  if (out.mi < 0.0 && out.mi > -1e-15) out.mi = 0.0;
  return out;
}

ChannelSpec random_channel(std::uint64_t seed, std::size_t num_samples, std::size_t flips) {
  if (flips > num_samples) throw ValidationError("random_channel: more flips than samples");
  Rng rng(seed);
  ChannelSpec c;
  c.num_samples = num_samples;
  c.num_concepts = 2 + rng.below(5);
  c.num_labels = 2 + rng.below(2);
  const std::size_t atoms = 1 + rng.below(4);
  double total = 0.0;
  for (std::size_t a = 0; a < atoms; ++a) {
    c.atom_probs.push_back(0.05 + rng.uniform());
    total += c.atom_probs.back();
  }
  for (double& p : c.atom_probs) p /= total;
  // Renormalize so the sum is 1 within rounding.
  double s = 0.0;
  for (std::size_t a = 0; a + 1 < atoms; ++a) s += c.atom_probs[a];
  c.atom_probs.back() = 1.0 - s;
  for (std::size_t a = 0; a < atoms; ++a) c.clean_label.push_back(static_cast<std::uint32_t>(rng.below(c.num_labels)));
  std::vector<std::size_t> positions(num_samples);
  for (std::size_t i = 0; i < num_samples; ++i) positions[i] = i;
  rng.shuffle(positions);
  positions.resize(flips);
  std::sort(positions.begin(), positions.end());
  c.flipped_positions = positions;
  c.relabel.assign(c.num_concepts, std::vector<std::vector<std::uint32_t>>(flips, std::vector<std::uint32_t>(atoms)));
  for (auto& per_q : c.relabel) {
    for (auto& per_t : per_q) {
      for (auto& y : per_t) y = static_cast<std::uint32_t>(rng.below(c.num_labels));
    }
  }
  return c;
}

}  // namespace c2lab
