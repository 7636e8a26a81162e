#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

namespace c2lab {

// All quantities are in nats unless a function takes an explicit base.

struct BoundInputs {
  std::size_t num_concepts = 1;  // K >= 1
  double delta = 0.1;            // in (0, 1)
  std::size_t num_samples = 1;   // N >= 1
  std::size_t num_labels = 2;    // |Y| >= 2

  void validate() const;
};

/// Minimum flipping rate for success probability 1 - delta under a uniform
/// prior over K trigger concepts:
///   eps_min = max(0, (ln K - ln(1/delta) - ln 2) / (N ln|Y|)).
struct BoundReport {
  double h_q = 0.0;        // ln K
  double iota = 0.0;       // ln |Y|, per-flip information budget
  double numerator = 0.0;  // h_q - ln(1/delta) - ln 2
  double raw = 0.0;        // numerator / (N * iota), unclamped
  double eps_min = 0.0;
  bool clamped = false;    // raw <= 0, bound vacuous
  double delta_n = 0.0;    // concentration_delta(K, N, delta); 0 when K == 1
  /// delta > 1/K: the regime where the bound grows with delta.
  bool delta_above_inverse_k = false;

  nlohmann::json to_json(const BoundInputs& inputs) const;
};

/// Throws ValidationError when |Y| < 2 (iota = 0) or other inputs are out of range.
BoundReport eps_min(const BoundInputs& inputs);

/// Same ratio with every logarithm taken in `base`.
double eps_min_raw_in_base(const BoundInputs& inputs, double base);

/// -p ln p - (1-p) ln(1-p), exactly 0 at both endpoints.
double binary_entropy(double p);

/// Plug-in entropy of empirical frequencies; zero counts contribute 0.
double empirical_entropy(std::span<const std::uint64_t> counts);

/// Deviation t with P(|H_hat - E H_hat| >= t) <= delta_prime from McDiarmid's
/// inequality with per-sample sensitivity 2 ln K / N:
///   t = ln K * sqrt(2 ln(2 / delta_prime) / N).
double concentration_delta(std::size_t num_concepts, std::size_t num_samples, double delta_prime);

/// Fraction of `trials` uniform-over-K samples of size N whose plug-in
/// entropy misses ln K by more than concentration_delta(K, N, delta_prime).
double simulate_concentration(std::size_t num_concepts, std::size_t num_samples, std::size_t trials,
                              double delta_prime, std::uint64_t seed);

/// Tiny label-flipping channel from trigger concept Q to a poisoned dataset.
/// N features are drawn iid from `atom_probs`; unflipped positions keep the
/// clean label of their atom, and each position in the fixed set
/// `flipped_positions` is relabelled by relabel[q][t][atom].
struct ChannelSpec {
  std::size_t num_concepts = 2;
  std::vector<double> concept_prior;  // empty = uniform
  std::size_t num_samples = 1;        // N <= 4
  std::size_t num_labels = 2;         // |Y| <= 3
  std::vector<double> atom_probs;     // <= 4 atoms
  std::vector<std::uint32_t> clean_label;
  std::vector<std::size_t> flipped_positions;
  std::vector<std::vector<std::vector<std::uint32_t>>> relabel;  // [q][t][atom]

  double flip_fraction() const;
  void validate() const;
};

struct MutualInformation {
  double mi = 0.0;        // I(Q; D)
  double h_q = 0.0;       // H(Q)
  double h_output = 0.0;  // H(D)
};

inline constexpr std::size_t kMaxJointOutcomes = 1'000'000;

/// I(Q; D) by enumerating every (q, features) pair; 0 ln 0 := 0. Throws
/// ValidationError when K * atoms^N * |Y|^N exceeds kMaxJointOutcomes or the
/// spec is malformed.
MutualInformation mi_exact(const ChannelSpec& spec);

/// Seeded random channel with N samples, `flips` flipped positions, and
/// randomly drawn K (2..6), |Y| (2..3), atom count (1..4), atom
/// distribution, clean labels and relabel tables.
ChannelSpec random_channel(std::uint64_t seed, std::size_t num_samples, std::size_t flips);

}  // namespace c2lab
