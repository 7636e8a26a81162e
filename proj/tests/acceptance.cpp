// Runs every primary acceptance criterion and prints one PASS/FAIL line each.
// Exit status is nonzero when any criterion fails.

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <thread>

#include "c2lab/attack.hpp"
#include "c2lab/binary_io.hpp"
#include "c2lab/commands.hpp"
#include "c2lab/core_data.hpp"
#include "c2lab/eval.hpp"
#include "c2lab/extractors.hpp"
#include "c2lab/rng.hpp"
#include "c2lab/theory.hpp"
#include "c2lab/trainer.hpp"
#include "support.hpp"

using namespace c2lab;
using nlohmann::json;
using Big = boost::multiprecision::cpp_bin_float_50;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

json base_config() {
  json cfg = io::read_json(fs::path(C2LAB_SOURCE_DIR) / "configs" / "synthetic.json");
  cfg.erase("output_dir");
  return cfg;
}

struct Pipeline {
  AttackSetup setup;
  HeadConfig head;
  std::uint32_t target = 0;
};

Pipeline load_pipeline(const fs::path& out, const json& cfg) {
  Pipeline p;
  p.setup.train = load_bundle(out / "data" / "train");
  p.setup.test = load_bundle(out / "data" / "test");
  p.setup.train_scores = load_scores(out / "scores" / "train");
  p.setup.test_scores = load_scores(out / "scores" / "test");
  p.head = HeadConfig::from_json(cfg.at("head"));
  p.head.seed = derive_seed(cfg.at("seed").get<std::uint64_t>(), cli::kStageTrain);
  p.target = cfg.at("attack").at("target").get<std::uint32_t>();
  return p;
}

double asr_or_zero(const AttackReport& r) { return r.asr.value_or(0.0); }

void end_to_end(const fs::path& root, Pipeline* pipeline) {
  json cfg = base_config();
  cfg.erase("baseline");
  cfg.erase("defenses");
  cfg.erase("theory");
  io::write_json(root / "e2e.json", cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const json r = cli::cmd_run({root / "e2e.json", root / "e2e"});
  const double secs = seconds_since(t0);
  const double asr = r.at("attack").at("asr").is_null() ? 0.0 : r.at("attack").at("asr").get<double>();
  const double cacc = r.at("attack").at("cacc").get<double>();
  const double clean = r.at("clean").at("cacc").get<double>();
  const bool pass = asr >= 95.0 && std::abs(clean - cacc) <= 2.0 && secs <= 60.0;
  report("end-to-end synthetic attack", pass,
         fmt("ASR %.2f%% (need >= 95), CACC %.2f vs clean %.2f (need within 2), %.1f s (limit 60)", asr, cacc, clean, secs));
  *pipeline = load_pipeline(root / "e2e", cfg);
}

void poison_rate_sweep(const Pipeline& p) {
  std::vector<GridPoint> grid;
  for (int i = 1; i <= 10; ++i) {
    GridPoint g;
    g.trigger_concepts = {0};
    g.poison_ratio = 0.001 * i;
    g.target_label = p.target;
    g.head = p.head;
    g.label = "concept_0";
    grid.push_back(g);
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto reports = sweep(p.setup, grid, std::max(1u, std::thread::hardware_concurrency()));
  const double secs = seconds_since(t0);
  double worst = 100.0;
  std::string points;
  for (const auto& r : reports) {
    worst = std::min(worst, asr_or_zero(r));
    points += fmt(" %.3f:%.1f", r.plan.value("poison_ratio", 0.0), asr_or_zero(r));
  }
  report("poison-rate sweep", worst >= 90.0 && secs <= 600.0,
         fmt("min ASR %.2f%% (need >= 90 at every pr), %.1f s (limit 600);", worst, secs) + points);
}

void multi_concept(const Pipeline& p) {
  const std::vector<std::size_t> ks{0, 1};
  const std::vector<double> ratios{0.01, 0.01};
  const auto plan = make_plan(p.setup.train_scores, ks, 0.01, p.target);
  const bool oracle = plan.selected == c2lab::testing::brute_force_union(p.setup.train_scores, {0, 1}, {0.01, 0.01}) &&
                      plan.selected == multi_recognize(p.setup.train_scores, ks, ratios);
  GridPoint g;
  g.trigger_concepts = ks;
  g.poison_ratio = 0.01;
  g.target_label = p.target;
  g.head = p.head;
  g.label = "concept_0+concept_1";
  const auto r = run_attack(p.setup, g);
  report("multi-concept union", oracle && asr_or_zero(r) >= 90.0,
         fmt("ASR %.2f%% (need >= 90), union size %.0f, oracle set equality ", asr_or_zero(r),
             static_cast<double>(plan.selected.size())) +
             (oracle ? "holds" : "BROKEN"));
}

void flipping_rate_bound() {
  struct Case {
    unsigned K, N, Y;
    Big delta;
  };
  const Case cases[] = {{1024, 100, 10, Big(1) / 10}, {65536, 50, 2, Big(1) / 100}, {1u << 20, 1000, 100, Big(1) / 20},
                        {8, 3, 3, Big(1) / 1000}};
  double worst = 0.0;
  for (const auto& c : cases) {
    const Big num = log(Big(c.K)) - log(Big(1) / c.delta) - log(Big(2));
    const double oracle = static_cast<double>(num / (Big(c.N) * log(Big(c.Y))));
    const auto r = eps_min({c.K, static_cast<double>(c.delta), c.N, c.Y});
    worst = std::max(worst, std::abs(r.raw - oracle));
    if (oracle > 0) worst = std::max(worst, std::abs(r.eps_min - oracle));
  }
  const double golden = eps_min({1024, 0.1, 100, 10}).eps_min;
  const bool golden_ok = std::abs(golden - 0.0170926996097583075692365) <= 1e-9;
  double base_gap = 0.0;
  for (std::size_t K : {3u, 1024u, 65536u}) {
    const BoundInputs in{K, 0.05, 77, 5};
    base_gap = std::max(base_gap, std::abs(eps_min_raw_in_base(in, 2.0) - eps_min(in).raw));
    base_gap = std::max(base_gap, std::abs(eps_min_raw_in_base(in, 10.0) - eps_min(in).raw));
  }
  const auto k1 = eps_min({1, 0.2, 50, 10});
  const auto k2 = eps_min({2, 0.5, 50, 10});
  const bool clamps = k1.eps_min == 0.0 && k1.clamped && k2.eps_min == 0.0 && k2.clamped;
  report("flipping-rate bound", worst <= 1e-9 && golden_ok && base_gap <= 1e-12 && clamps,
         fmt("eps_min(1024, 0.1, 100, 10) = %.12f, max oracle gap %.2e (<= 1e-9), base gap %.2e (<= 1e-12), clamps ",
             golden, worst, base_gap) +
             (clamps ? "exact" : "wrong"));
}

void injection_bound() {
  std::size_t violations = 0;
  double tightest = -1e9;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const std::size_t flips = seed % 2 == 0 ? 1 : 2;
    const auto ch = random_channel(seed, 3, flips);
    const double mi = mi_exact(ch).mi;
    const double cap = ch.flip_fraction() * 3.0 * std::log(static_cast<double>(ch.num_labels));
    if (mi > cap + 1e-12) ++violations;
    tightest = std::max(tightest, mi - cap);
  }
  ChannelSpec perfect;
  perfect.num_concepts = 2;
  perfect.num_samples = 1;
  perfect.num_labels = 2;
  perfect.atom_probs = {1.0};
  perfect.clean_label = {0};
  perfect.flipped_positions = {0};
  perfect.relabel = {{{0}}, {{1}}};
  const double gap = std::abs(mi_exact(perfect).mi - std::log(2.0));
  report("injection bound", violations == 0 && gap <= 1e-12,
         fmt("%.0f violations over 100 channels (max I - eps N ln|Y| = %.3g), perfect channel gap %.2e", static_cast<double>(violations),
             tightest, gap));
}

void concentration() {
  const auto t0 = std::chrono::steady_clock::now();
  const double rate = simulate_concentration(16, 10000, 1000, 0.05, 1);
  const double secs = seconds_since(t0);
  report("entropy concentration", rate <= 0.05 && secs <= 30.0,
         fmt("violation rate %.4f (need <= 0.05), %.2f s (limit 30)", rate, secs));
}

void gradient_checks() {
  double lin = 0.0, mlp = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    lin = std::max(lin, c2lab::testing::gradient_check(Architecture::kLinear, seed));
    mlp = std::max(mlp, c2lab::testing::gradient_check(Architecture::kMlp, seed));
  }
  report("gradient checks", lin <= 1e-4 && mlp <= 1e-4, fmt("max relative error linear %.2e, mlp %.2e (need <= 1e-4)", lin, mlp));
}

void cav_recovery() {
  double worst = 1.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (double c : c2lab::testing::cav_cosines(seed, 0.5, 50, {})) worst = std::min(worst, c);
  }
  report("CAV recovery", worst >= 0.9, fmt("min cosine %.4f over 8 concepts x 10 seeds (need >= 0.9)", worst));
}

void recognize_properties() {
  Rng rng(4242);
  std::size_t cases = 0, bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(500);
    const double pr = 0.0005 + 0.9 * rng.uniform();
    std::vector<double> col(n);
    const bool coarse = rng.bernoulli(0.5);
    for (auto& v : col) v = coarse ? static_cast<double>(rng.below(4)) : rng.normal();
    const auto s = c2lab::testing::make_scores({col});
    const auto sel = recognize(s, 0, pr);
    ++cases;
    if (sel.size() != poison_count(n, pr)) ++bad;
    std::vector<double> scaled(col);
    const double scale = std::ldexp(1.0, static_cast<int>(rng.below(60)) - 30);
    for (auto& v : scaled) v *= scale;
    ++cases;
    if (recognize(c2lab::testing::make_scores({scaled}), 0, pr) != sel) ++bad;
  }
  report("recognize properties", bad == 0 && cases >= 1000,
         fmt("%.0f randomized cases (exact count and positive rescaling), %.0f failures", static_cast<double>(cases),
             static_cast<double>(bad)));
}

void defense_contrast(const fs::path& root) {
  json cfg = base_config();
  cfg.erase("theory");
  io::write_json(root / "contrast.json", cfg);
  const json r = cli::cmd_run({root / "contrast.json", root / "contrast"});
  auto find = [&](const std::string& defense, const std::string& attack) {
    for (const auto& d : r.at("defenses")) {
      if (d.at("defense") == defense && d.at("attack") == attack) return d;
    }
    return json();
  };
  auto pct = [](const json& v) { return v.is_null() ? std::nan("") : v.get<double>(); };
  const json ft_base = find("finetune", "baseline");
  const json ft_concept = find("finetune", "concept");
  const double pre = pct(ft_base.at("pre_asr"));
  const double post = pct(ft_base.at("post_asr"));
  report("defense contrast", post < 10.0,
         fmt("FineTune on the fixed trigger: ASR %.2f%% -> %.2f%% (need < 10); concept attack ASR %.2f%% -> %.2f%% (informational)",
             pre, post, pct(ft_concept.at("pre_asr")), pct(ft_concept.at("post_asr"))));
}

void elastic_net() {
  const auto inst = c2lab::testing::enet_instance(6);
  std::size_t previous = SIZE_MAX;
  bool monotone = true;
  std::string counts;
  for (double lambda : {0.0, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0}) {
    ElasticNetParams p;
    p.lambda = lambda;
    const auto fit = elastic_net_fit(inst.z, inst.labels, 3, p, 7);
    monotone = monotone && fit.nonzero_count() <= previous;
    previous = fit.nonzero_count();
    counts += " " + std::to_string(fit.nonzero_count());
  }
  bool exact_zero = soft_threshold(0.3, 0.3) == 0.0 && soft_threshold(-0.29, 0.3) == 0.0 && soft_threshold(1.0, 0.3) == 0.7;
  ElasticNetParams p;
  p.lambda = 0.1;
  const auto fit = elastic_net_fit(inst.z, inst.labels, 3, p, 7);
  std::size_t exact = 0;
  for (double w : fit.weights.data()) exact += w == 0.0;
  exact_zero = exact_zero && exact > 0;
  report("elastic-net sparsity", monotone && exact_zero,
         "nonzero counts over lambda {0, .01, .03, .1, .3, 1, 3}:" + counts + fmt("; %.0f exact zeros at lambda 0.1", static_cast<double>(exact)));
}

template <typename Fn>
void guarded(const char* name, Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    report(name, false, std::string("error: ") + e.what());
  }
}

}  // namespace

int main() {
  c2lab::testing::TempDir root("acceptance");
  Pipeline pipeline;
  bool have_pipeline = false;
  guarded("end-to-end synthetic attack", [&] {
    end_to_end(root.path(), &pipeline);
    have_pipeline = true;
  });
  if (have_pipeline) {
    guarded("poison-rate sweep", [&] { poison_rate_sweep(pipeline); });
    guarded("multi-concept union", [&] { multi_concept(pipeline); });
  }
  guarded("flipping-rate bound", flipping_rate_bound);
  guarded("injection bound", injection_bound);
  guarded("entropy concentration", concentration);
  guarded("gradient checks", gradient_checks);
  guarded("CAV recovery", cav_recovery);
  guarded("recognize properties", recognize_properties);
  guarded("defense contrast", [&] { defense_contrast(root.path()); });
  guarded("elastic-net sparsity", elastic_net);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
