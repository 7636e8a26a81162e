#include "c2lab/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include "c2lab/attack.hpp"
#include "c2lab/binary_io.hpp"
#include "c2lab/errors.hpp"
#include "c2lab/eval.hpp"
#include "c2lab/rng.hpp"

namespace c2lab::cli {
using nlohmann::json;

namespace {

template <typename T>
T field(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config field \"") + key + "\": " + e.what());
  }
}

void require_path(const fs::path& p, const char* flag) {
  if (p.empty()) throw ValidationError(std::string("missing required ") + flag);
}

// Outputs must never land in an input directory.
void check_output(const fs::path& out, std::initializer_list<fs::path> inputs) {
  require_path(out, "--out");
  const fs::path o = fs::weakly_canonical(out);
  for (const auto& in : inputs) {
    if (in.empty()) continue;
    const fs::path i = fs::weakly_canonical(in);
    if (o == i) throw ValidationError("output " + out.string() + " would overwrite input " + in.string());
  }
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::vector<std::size_t> concept_indices(const ConceptScores& scores, const std::vector<std::string>& names) {
  if (names.empty()) throw ValidationError("at least one --concept is required");
  std::vector<std::size_t> out;
  for (const auto& name : names) {
    const auto it = std::find(scores.concept_names.begin(), scores.concept_names.end(), name);
    if (it == scores.concept_names.end()) throw ValidationError("unknown concept name: " + name);
    out.push_back(static_cast<std::size_t>(it - scores.concept_names.begin()));
  }
  return out;
}

ConceptScores load_matching_scores(const fs::path& dir, const EmbeddingDataset& ds) {
  ConceptScores s = load_scores(dir);
  if (s.n() != ds.n()) throw ValidationError("scores have " + std::to_string(s.n()) + " rows but the bundle has " +
                                             std::to_string(ds.n()) + " samples");
  if (!s.dataset_id.empty() && s.dataset_id != ds.content_id()) {
    throw ValidationError("scores in " + dir.string() + " were computed for a different dataset");
  }
  return s;
}

bool is_baseline(const json& plan) { return plan.value("mode", std::string("concept")) == "baseline"; }

AttackReport baseline_report(const TrainedHead& head, const EmbeddingDataset& test, const BaselinePlan& plan,
                             const json& plan_json, std::string label) {
  AttackReport r;
  r.label = label.empty() ? "baseline" : std::move(label);
  r.cacc = cacc(head, test);
  const AsrResult a = asr_baseline(head, test, plan.trigger, plan.target_label);
  r.asr = a.percent;
  r.asr_hits = a.hits;
  r.n_trigger_test = a.evaluated;
  r.n_clean_test = test.n();
  r.plan = plan_json;
  r.plan.erase("trigger");
  r.plan["poison_ratio"] = plan.epsilon;
  r.config = head.config.to_json();
  r.confusion = confusion_matrix(head, test);
  return r;
}

// ASR and CACC of `head` under either plan mode.
AttackReport measure(const TrainedHead& head, const EmbeddingDataset& test, const fs::path& test_scores,
                     const json& plan_json, const std::string& label) {
  if (is_baseline(plan_json)) return baseline_report(head, test, BaselinePlan::from_json(plan_json), plan_json, label);
  require_path(test_scores, "--test-scores");
  const ConceptScores scores = load_matching_scores(test_scores, test);
  return evaluate_attack(head, test, scores, PoisonPlan::from_json(plan_json), label);
}

HeadConfig synthetic_head_defaults() {
  HeadConfig h;
  h.epochs = 20;
  h.learning_rate = 0.01;
  return h;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------- synth

json synth_spec_to_json(const SynthSpec& s) {
  json j = {{"n", s.n},
            {"d", s.d},
            {"num_classes", s.num_classes},
            {"num_concepts", s.num_concepts},
            {"concept_strength", s.concept_strength},
            {"noise_sigma", s.noise_sigma},
            {"prevalence", s.prevalence},
            {"class_mean_scale", s.class_mean_scale},
            {"seed", s.seed}};
  if (!s.prevalence_by_class.empty()) j["prevalence_by_class"] = s.prevalence_by_class;
  return j;
}

SynthSpec synth_spec_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("synth spec must be a JSON object");
  SynthSpec s;
  s.n = field(j, "n", s.n);
  s.d = field(j, "d", s.d);
  s.num_classes = field(j, "num_classes", s.num_classes);
  s.num_concepts = field(j, "num_concepts", s.num_concepts);
  s.concept_strength = field(j, "concept_strength", s.concept_strength);
  s.noise_sigma = field(j, "noise_sigma", s.noise_sigma);
  s.class_mean_scale = field(j, "class_mean_scale", s.class_mean_scale);
  s.seed = field(j, "seed", s.seed);
  if (j.contains("prevalence") && j.at("prevalence").is_array()) {
    s.prevalence = field(j, "prevalence", std::vector<double>{});
  } else {
    s.prevalence.assign(s.num_concepts, field(j, "prevalence", 0.1));
  }
  s.prevalence_by_class = field(j, "prevalence_by_class", std::vector<std::vector<double>>{});
  s.validate();
  return s;
}

void cmd_synth(const SynthOptions& o) {
  require_path(o.out, "--out");
  const SynthSpec& spec = o.spec;
  spec.validate();
  if (o.test_n == 0) throw ValidationError("--test-n must be >= 1");
  if (o.exemplars == 0) throw ValidationError("--exemplars must be >= 1");
  if ((o.map_h == 0) != (o.map_w == 0)) throw ValidationError("feature maps need both h and w");
  make_dir(o.out);

  const PlantedData train = gen_planted(spec);
  save_bundle(train.dataset, o.out / "train");
  const PlantedData test =
      sample_planted(spec, train.truth, {o.test_n, derive_seed(spec.seed, kStageSynthTest), "t", -1, true});
  save_bundle(test.dataset, o.out / "test");
  if (o.clean_n > 0) {
    const PlantedData clean =
        sample_planted(spec, train.truth, {o.clean_n, derive_seed(spec.seed, kStageSynthClean), "c", -1, true});
    save_bundle(clean.dataset, o.out / "clean");
  }

  const auto names = synth_concept_names(spec.num_concepts);
  std::vector<ConceptExemplars> ex;
  for (std::size_t k = 0; k < spec.num_concepts; ++k) {
    const int kk = static_cast<int>(k);
    const auto pos = sample_planted(
        spec, train.truth, {o.exemplars, derive_seed(spec.seed, "synth/exemplars/pos/" + names[k]), "p", kk, true});
    const auto neg = sample_planted(
        spec, train.truth, {o.exemplars, derive_seed(spec.seed, "synth/exemplars/neg/" + names[k]), "n", kk, false});
    ex.push_back({names[k], pos.dataset.embeddings, neg.dataset.embeddings});
  }
  save_exemplars(ex, o.out / "exemplars");

  ActivationMatrix act;
  act.values = gen_activation_matrix(train.dataset, train.truth, o.activation_noise,
                                     derive_seed(spec.seed, kStageSynthActivation));
  act.names = names;
  save_activation(act, o.out / "activation");

  if (o.map_h > 0) {
    save_feature_maps(gen_feature_maps(train.dataset, o.map_h, o.map_w, o.cell_noise,
                                       derive_seed(spec.seed, "synth/feature_maps/train")),
                      o.out / "train");
    save_feature_maps(gen_feature_maps(test.dataset, o.map_h, o.map_w, o.cell_noise,
                                       derive_seed(spec.seed, "synth/feature_maps/test")),
                      o.out / "test");
  }

  MatrixF planted(spec.num_concepts, spec.d);
  for (std::size_t k = 0; k < spec.num_concepts; ++k) {
    for (std::size_t c = 0; c < spec.d; ++c) planted(k, c) = static_cast<float>(train.truth.planted_directions(k, c));
  }
  save_bank(ConceptBank(std::move(planted), names), o.out / "planted");

  auto presence = [&](const GroundTruth& t) {
    json cols = json::array();
    for (std::size_t k = 0; k < spec.num_concepts; ++k) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < t.concept_presence.rows(); ++i) {
        if (t.concept_presence(i, k)) idx.push_back(i);
      }
      cols.push_back(idx);
    }
    return cols;
  };
  io::write_json(o.out / "truth.json", {{"spec", synth_spec_to_json(spec)},
                                        {"concept_names", names},
                                        {"presence_train", presence(train.truth)},
                                        {"presence_test", presence(test.truth)},
                                        {"test_n", o.test_n},
                                        {"clean_n", o.clean_n},
                                        {"exemplars_per_side", o.exemplars},
                                        {"activation_noise", o.activation_noise}});
}

// ---------------------------------------------------------------- extract / score

void cmd_extract(const ExtractOptions& o) {
  if (o.method == "tcav") {
    require_path(o.exemplars, "--exemplars");
    check_output(o.out, {o.exemplars});
    const auto ex = load_exemplars(o.exemplars);
    SvmParams p = o.svm;
    p.seed = derive_seed(o.seed, kStageExtractTcav);
    save_bank(build_tcav_bank(ex, p), o.out);
  } else if (o.method == "lfcbm") {
    require_path(o.bundle, "--bundle");
    require_path(o.activation, "--activation");
    check_output(o.out, {o.bundle, o.activation});
    const EmbeddingDataset ds = load_bundle(o.bundle);
    const ActivationMatrix act = load_activation(o.activation);
    if (act.values.rows() != ds.n()) {
      throw ValidationError("activation matrix has " + std::to_string(act.values.rows()) + " rows but the bundle has " +
                            std::to_string(ds.n()) + " samples");
    }
    LfcbmParams p = o.lfcbm;
    p.seed = derive_seed(o.seed, kStageExtractLfcbm);
    const LfcbmFit fit = lfcbm_fit_projection(ds.embeddings, act.values, p);
    const ConceptBank bank = lfcbm_bank(fit, act.names);
    save_bank(bank, o.out);
    io::write_json(o.out / "lfcbm_fit.json", {{"concept_names", act.names},
                                              {"similarity", fit.similarity},
                                              {"filtered", fit.filtered},
                                              {"filter_threshold", fit.filter_threshold},
                                              {"final_loss", fit.loss_log.empty() ? 0.0 : fit.loss_log.back()},
                                              {"iters", p.iters},
                                              {"learning_rate", p.learning_rate}});
  } else if (o.method == "sscbm") {
    require_path(o.embeddings, "--embeddings");
    check_output(o.out, {o.embeddings});
    save_bank(load_bank(o.embeddings), o.out);
  } else {
    throw ValidationError("unknown extractor '" + o.method + "' (expected tcav, lfcbm or sscbm)");
  }
}

void cmd_score(const ScoreOptions& o) {
  require_path(o.bundle, "--bundle");
  require_path(o.bank, "--bank");
  check_output(o.out, {o.bundle, o.bank});
  const EmbeddingDataset ds = load_bundle(o.bundle);
  const ConceptBank bank = load_bank(o.bank);
  ConceptScores scores;
  if (o.method == "tcav") {
    scores = tcav_scores(ds, bank);
  } else if (o.method == "lfcbm") {
    scores = projection_scores(ds, bank);
  } else if (o.method == "sscbm") {
    const auto maps = load_feature_maps(o.bundle);
    if (!maps) throw ValidationError("bundle " + o.bundle.string() + " has no feature maps");
    if (maps->n() != ds.n()) throw ValidationError("feature map count differs from bundle size");
    scores = sscbm_scores(*maps, bank.cavs(), bank.names());
  } else {
    throw ValidationError("unknown scoring method '" + o.method + "' (expected tcav, lfcbm or sscbm)");
  }
  scores.dataset_id = ds.content_id();
  scores.bank_id = bank.content_id();
  save_scores(scores, o.out);
}

// ---------------------------------------------------------------- poison / train

json cmd_poison(const PoisonOptions& o) {
  require_path(o.bundle, "--bundle");
  check_output(o.out, {o.bundle, o.scores});
  const EmbeddingDataset ds = load_bundle(o.bundle);
  if (o.target >= ds.num_classes()) throw ValidationError("--target " + std::to_string(o.target) + " out of range");
  json plan;
  BackdooredDataset bd;
  if (o.baseline) {
    const auto trigger = random_trigger(ds.d(), o.magnitude, derive_seed(o.seed, kStageTrigger));
    BaselinePlan bp;
    bd = baseline_trigger(ds, o.epsilon, trigger, o.target, derive_seed(o.seed, kStageBaseline), &bp);
    plan = bp.to_json();
    plan["magnitude"] = o.magnitude;
  } else {
    require_path(o.scores, "--scores");
    const ConceptScores scores = load_matching_scores(o.scores, ds);
    const auto idx = concept_indices(scores, o.concepts);
    PoisonPlan p = make_plan(scores, idx, o.pr, o.target);
    bd = build_poisoned(ds, p.selected, o.target);
    p.already_target = static_cast<std::size_t>(std::count(bd.original_labels.begin(), bd.original_labels.end(), o.target));
    plan = p.to_json();
  }
  plan["original_labels"] = bd.original_labels;
  plan["dataset_id"] = ds.content_id();
  save_bundle(bd.base, o.out);
  io::write_json(o.out / "plan.json", plan);
  return plan;
}

void cmd_train(const TrainOptions& o) {
  require_path(o.bundle, "--bundle");
  check_output(o.out, {o.bundle});
  const EmbeddingDataset ds = load_bundle(o.bundle);
  HeadConfig cfg = o.head;
  cfg.seed = derive_seed(o.seed, kStageTrain);
  save_head(train_head(ds, cfg), o.out);
}

// ---------------------------------------------------------------- eval

json cmd_eval(const EvalOptions& o) {
  std::vector<AttackReport> reports;
  if (!o.grid.empty()) {
    require_path(o.train, "--train");
    require_path(o.train_scores, "--train-scores");
    require_path(o.test, "--test");
    require_path(o.test_scores, "--test-scores");
    check_output(o.out, {o.train, o.train_scores, o.test, o.test_scores});
    const json grid = io::read_json(o.grid);
    AttackSetup setup;
    setup.train = load_bundle(o.train);
    setup.test = load_bundle(o.test);
    setup.train_scores = load_matching_scores(o.train_scores, setup.train);
    setup.test_scores = load_matching_scores(o.test_scores, setup.test);
    HeadConfig head = grid.contains("head") ? HeadConfig::from_json(grid.at("head")) : o.head_cfg;
    head.seed = derive_seed(o.seed, kStageTrain);
    std::vector<GridPoint> points;
    const auto sets = field(grid, "concepts", std::vector<std::vector<std::string>>{});
    const auto ratios = field(grid, "poison_ratios", std::vector<double>{});
    const auto target = field(grid, "target", std::uint32_t{0});
    if (sets.empty() || ratios.empty()) throw ValidationError("sweep grid needs non-empty \"concepts\" and \"poison_ratios\"");
    for (const auto& names : sets) {
      const auto idx = concept_indices(setup.train_scores, names);
      std::string label;
      for (const auto& n : names) label += (label.empty() ? "" : "+") + n;
      for (double pr : ratios) points.push_back({label, idx, pr, target, head});
    }
    reports = sweep(setup, points, std::max(1u, o.threads));
  } else {
    require_path(o.head, "--head");
    require_path(o.test, "--test");
    require_path(o.plan, "--plan");
    check_output(o.out, {o.head, o.test, o.test_scores});
    const TrainedHead head = load_head(o.head);
    const EmbeddingDataset test = load_bundle(o.test);
    reports.push_back(measure(head, test, o.test_scores, io::read_json(o.plan), o.label));
  }
  make_dir(o.out);
  json out = json::array();
  for (const auto& r : reports) out.push_back(r.to_json());
  if (o.grid.empty()) io::write_json(o.out / "report.json", out.front());
  io::write_text(o.out / "reports.jsonl", reports_jsonl(reports));
  io::write_text(o.out / "reports.csv", reports_csv(reports));
  return out;
}

// ---------------------------------------------------------------- defend

json cmd_defend(const DefendOptions& o) {
  require_path(o.test, "--test");
  require_path(o.plan, "--plan");
  check_output(o.out, {o.head, o.clean, o.bundle, o.test, o.test_scores});
  const EmbeddingDataset test = load_bundle(o.test);
  const json plan = io::read_json(o.plan);

  DefenseReport rep;
  rep.defense = o.method;
  rep.attack = is_baseline(plan) ? "baseline" : "concept";
  std::optional<TrainedHead> attacked;
  if (!o.head.empty()) {
    attacked = load_head(o.head);
    const AttackReport pre = measure(*attacked, test, o.test_scores, plan, "");
    rep.pre_asr = pre.asr;
    rep.pre_cacc = pre.cacc;
  }

  TrainedHead post_head;
  make_dir(o.out);
  if (o.method == "finetune") {
    require_path(o.clean, "--clean");
    if (!attacked) throw ValidationError("finetune needs --head");
    HeadConfig cfg = o.head_cfg;
    cfg.seed = derive_seed(o.seed, kStageFinetune);
    post_head = finetune_defense(*attacked, load_bundle(o.clean), cfg);
    rep.extra["finetune"] = {{"epochs", cfg.epochs}, {"learning_rate", cfg.learning_rate}, {"batch_size", cfg.batch_size}};
  } else if (o.method == "abl") {
    require_path(o.bundle, "--bundle");
    HeadConfig cfg = o.head_cfg;
    cfg.seed = derive_seed(o.seed, kStageAbl);
    const EmbeddingDataset untrusted = load_bundle(o.bundle);
    const AblResult res = abl_defense(untrusted, cfg, o.abl);
    post_head = res.head;
    const auto poisoned = plan.at("selected").get<std::vector<std::size_t>>();
    rep.extra["abl"] = o.abl.to_json();
    rep.extra["n_isolated"] = res.isolated.size();
    rep.extra["isolation_precision"] = isolation_precision(res.isolated, poisoned);
    io::write_json(o.out / "isolated.json", {{"isolated", res.isolated}});
  } else {
    throw ValidationError("unknown defense '" + o.method + "' (expected finetune or abl)");
  }
  save_head(post_head, o.out / "head");
  const AttackReport post = measure(post_head, test, o.test_scores, plan, "");
  rep.post_asr = post.asr;
  rep.post_cacc = post.cacc;
  const json j = rep.to_json();
  io::write_json(o.out / "defense.json", j);
  io::write_text(o.out / "reports.jsonl", j.dump() + "\n");
  return j;
}

// ---------------------------------------------------------------- bound

std::vector<std::pair<std::string, std::vector<double>>> parse_sweep(const std::string& text) {
  std::vector<std::pair<std::string, std::vector<double>>> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    std::string tok = text.substr(pos, comma - pos);
    pos = comma + 1;
    if (tok.empty()) throw ValidationError("empty item in sweep '" + text + "'");
    const auto eq = tok.find('=');
    if (eq != std::string::npos) {
      const std::string key = tok.substr(0, eq);
      if (key != "K" && key != "N" && key != "delta" && key != "ycard") {
        throw ValidationError("unknown sweep key '" + key + "' (expected K, N, delta or ycard)");
      }
      for (const auto& [k, v] : out) {
        if (k == key) throw ValidationError("sweep key '" + key + "' given twice");
      }
      out.push_back({key, {}});
      tok = tok.substr(eq + 1);
    }
    if (out.empty()) throw ValidationError("sweep must start with KEY=value");
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      out.back().second.push_back(v);
    } catch (const std::logic_error&) {
      throw ValidationError("bad number '" + tok + "' in sweep");
    }
  }
  return out;
}

std::string cmd_bound(const BoundOptions& o) {
  if (o.sweep.empty()) return eps_min(o.inputs).to_json(o.inputs).dump(2) + "\n";

  const auto axes = parse_sweep(o.sweep);
  auto values_for = [&](const std::string& key, double fallback) {
    for (const auto& [k, v] : axes) {
      if (k == key) return v;
    }
    return std::vector<double>{fallback};
  };
  auto as_count = [](double v, const char* key) {
    if (!(v >= 1.0) || v != static_cast<double>(static_cast<std::size_t>(v))) {
      throw ValidationError(std::string("sweep ") + key + " values must be positive integers");
    }
    return static_cast<std::size_t>(v);
  };
  std::string out = "K,delta,N,ycard,h_q,iota,raw,eps_min,clamped,delta_n,delta_above_inverse_k\n";
  for (double k : values_for("K", static_cast<double>(o.inputs.num_concepts))) {
    for (double delta : values_for("delta", o.inputs.delta)) {
      for (double n : values_for("N", static_cast<double>(o.inputs.num_samples))) {
        for (double y : values_for("ycard", static_cast<double>(o.inputs.num_labels))) {
          BoundInputs in{as_count(k, "K"), delta, as_count(n, "N"), as_count(y, "ycard")};
          const BoundReport r = eps_min(in);
          out += std::to_string(in.num_concepts) + "," + fmt_double(delta) + "," + std::to_string(in.num_samples) + "," +
                 std::to_string(in.num_labels) + "," + fmt_double(r.h_q) + "," + fmt_double(r.iota) + "," +
                 fmt_double(r.raw) + "," + fmt_double(r.eps_min) + "," + (r.clamped ? "true" : "false") + "," +
                 fmt_double(r.delta_n) + "," + (r.delta_above_inverse_k ? "true" : "false") + "\n";
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- run

json cmd_run(const RunOptions& o) {
  require_path(o.config, "--config");
  const json cfg = io::read_json(o.config);
  if (!cfg.is_object()) throw ValidationError("config must be a JSON object");
  const fs::path base = o.config.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

  fs::path out;
  if (!o.out.empty()) {
    out = o.out;
  } else if (const char* env = std::getenv("C2LAB_OUT"); env != nullptr && *env != '\0') {
    out = env;
  } else {
    out = resolve(field(cfg, "output_dir", std::string("c2lab_out")));
  }
  make_dir(out);

  const std::uint64_t seed = field(cfg, "seed", std::uint64_t{0});
  json report = {{"version", 1}, {"seed", seed}, {"config", cfg}};
  json stages = json::array();
  auto rel = [&](const fs::path& p) { return fs::path(p).lexically_relative(out).generic_string(); };

  // Inputs: synthesized or given.
  fs::path train, test, clean, exemplars, activation, planted;
  if (cfg.contains("synth")) {
    const json& sj = cfg.at("synth");
    SynthOptions so;
    json spec_json = sj;
    if (!spec_json.contains("seed")) spec_json["seed"] = seed;
    so.spec = synth_spec_from_json(spec_json);
    so.out = out / "data";
    so.test_n = field(sj, "test_n", so.test_n);
    so.exemplars = field(sj, "exemplars", so.exemplars);
    so.activation_noise = field(sj, "activation_noise", so.activation_noise);
    so.clean_n = field(sj, "clean_n", so.clean_n);
    if (sj.contains("feature_map")) {
      const json& fm = sj.at("feature_map");
      so.map_h = field(fm, "h", std::size_t{0});
      so.map_w = field(fm, "w", std::size_t{0});
      so.cell_noise = field(fm, "cell_noise", so.cell_noise);
    }
    cmd_synth(so);
    train = so.out / "train";
    test = so.out / "test";
    if (so.clean_n > 0) clean = so.out / "clean";
    exemplars = so.out / "exemplars";
    activation = so.out / "activation";
    planted = so.out / "planted";
    stages.push_back({{"stage", "synth"}, {"out", rel(so.out)}});
  } else {
    const json d = field(cfg, "data", json::object());
    auto opt_path = [&](const char* key) {
      return d.contains(key) ? resolve(field(d, key, std::string())) : fs::path();
    };
    train = opt_path("train");
    test = opt_path("test");
    clean = opt_path("clean");
    exemplars = opt_path("exemplars");
    activation = opt_path("activation");
    planted = opt_path("embeddings");
    require_path(train, "data.train");
    require_path(test, "data.test");
  }

  // Extract.
  const json ej = field(cfg, "extractor", json::object());
  ExtractOptions eo;
  eo.method = field(ej, "method", std::string("tcav"));
  eo.exemplars = exemplars;
  eo.bundle = train;
  eo.activation = activation;
  eo.embeddings = ej.contains("embeddings") ? resolve(field(ej, "embeddings", std::string())) : planted;
  eo.out = out / "bank";
  eo.svm.lambda = field(ej, "lambda", eo.svm.lambda);
  eo.svm.epochs = field(ej, "svm_epochs", eo.svm.epochs);
  eo.lfcbm.iters = field(ej, "iters", eo.lfcbm.iters);
  eo.lfcbm.learning_rate = field(ej, "learning_rate", eo.lfcbm.learning_rate);
  eo.lfcbm.filter_threshold = field(ej, "filter_threshold", eo.lfcbm.filter_threshold);
  eo.seed = seed;
  cmd_extract(eo);
  stages.push_back({{"stage", "extract"}, {"method", eo.method}, {"out", rel(eo.out)}});

  // Score.
  ScoreOptions sc;
  sc.method = eo.method;
  sc.bank = eo.out;
  sc.bundle = train;
  sc.out = out / "scores" / "train";
  cmd_score(sc);
  sc.bundle = test;
  sc.out = out / "scores" / "test";
  cmd_score(sc);
  stages.push_back({{"stage", "score"}, {"out", rel(out / "scores")}});

  // Poison.
  const json aj = field(cfg, "attack", json::object());
  PoisonOptions po;
  po.bundle = train;
  po.scores = out / "scores" / "train";
  po.out = out / "poison";
  po.concepts = field(aj, "concepts", std::vector<std::string>{});
  po.pr = field(aj, "poison_ratio", po.pr);
  po.target = field(aj, "target", po.target);
  po.seed = seed;
  const json plan = cmd_poison(po);
  stages.push_back({{"stage", "poison"}, {"out", rel(po.out)}, {"n_selected", plan.at("n_selected")}});

  // Train: attacked head and a clean reference with the same seed.
  json head_json = synthetic_head_defaults().to_json();
  head_json.update(field(cfg, "head", json::object()));
  const HeadConfig head_cfg = HeadConfig::from_json(head_json);
  TrainOptions to;
  to.head = head_cfg;
  to.seed = seed;
  to.bundle = po.out;
  to.out = out / "head";
  cmd_train(to);
  to.bundle = train;
  to.out = out / "head_clean";
  cmd_train(to);
  stages.push_back({{"stage", "train"}, {"out", rel(out / "head")}, {"clean_out", rel(out / "head_clean")}});

  // Eval.
  EvalOptions ev;
  ev.test = test;
  ev.test_scores = out / "scores" / "test";
  ev.plan = po.out / "plan.json";
  ev.head = out / "head";
  ev.out = out / "eval";
  ev.label = field(aj, "label", std::string());
  const json attack = cmd_eval(ev).front();
  ev.head = out / "head_clean";
  ev.out = out / "eval_clean";
  ev.label = "clean";
  const json clean_eval = cmd_eval(ev).front();
  stages.push_back({{"stage", "eval"}, {"out", rel(out / "eval")}, {"clean_out", rel(out / "eval_clean")}});
  report["attack"] = attack;
  report["clean"] = {{"cacc", clean_eval.at("cacc")}, {"asr", clean_eval.at("asr")}};
  report["cacc_drop"] = clean_eval.at("cacc").get<double>() - attack.at("cacc").get<double>();

  std::string stream = attack.dump() + "\n";
  std::string csv_rows;

  // Optional fixed-trigger baseline attack for defense contrasts.
  struct Attacked {
    std::string name;
    fs::path head, plan, bundle;
  };
  std::vector<Attacked> attacked{{"concept", out / "head", po.out / "plan.json", po.out}};
  if (cfg.contains("baseline")) {
    const json& bj = cfg.at("baseline");
    PoisonOptions bo;
    bo.baseline = true;
    bo.bundle = train;
    bo.out = out / "baseline" / "poison";
    bo.epsilon = field(bj, "epsilon", bo.epsilon);
    bo.magnitude = field(bj, "magnitude", bo.magnitude);
    bo.target = field(bj, "target", po.target);
    bo.seed = seed;
    cmd_poison(bo);
    TrainOptions bt = to;
    bt.bundle = bo.out;
    bt.out = out / "baseline" / "head";
    cmd_train(bt);
    EvalOptions be;
    be.head = bt.out;
    be.test = test;
    be.plan = bo.out / "plan.json";
    be.out = out / "baseline" / "eval";
    be.label = "baseline";
    const json b = cmd_eval(be).front();
    report["baseline"] = b;
    stream += b.dump() + "\n";
    attacked.push_back({"baseline", bt.out, bo.out / "plan.json", bo.out});
    stages.push_back({{"stage", "baseline"}, {"out", rel(out / "baseline")}});
  }

  // Defenses against every attack.
  json defenses = json::array();
  for (const json& dj : field(cfg, "defenses", json::array())) {
    DefendOptions d;
    d.method = field(dj, "method", std::string());
    d.head_cfg = head_cfg;
    d.head_cfg.epochs = field(dj, "epochs", head_cfg.epochs);
    d.head_cfg.learning_rate = field(dj, "learning_rate", head_cfg.learning_rate);
    d.head_cfg.batch_size = field(dj, "batch_size", head_cfg.batch_size);
    d.abl.lga_gamma = field(dj, "lga_gamma", d.abl.lga_gamma);
    d.abl.isolation_fraction = field(dj, "isolation_fraction", d.abl.isolation_fraction);
    d.abl.pretrain_epochs = field(dj, "pretrain_epochs", d.abl.pretrain_epochs);
    d.abl.retrain_epochs = field(dj, "retrain_epochs", d.abl.retrain_epochs);
    d.abl.unlearn_epochs = field(dj, "unlearn_epochs", d.abl.unlearn_epochs);
    d.abl.unlearn_learning_rate = field(dj, "unlearn_learning_rate", d.abl.unlearn_learning_rate);
    d.clean = dj.contains("clean") ? resolve(field(dj, "clean", std::string())) : clean;
    d.test = test;
    d.seed = seed;
    for (const auto& a : attacked) {
      d.head = a.head;
      d.plan = a.plan;
      d.bundle = a.bundle;
      d.test_scores = a.name == "concept" ? out / "scores" / "test" : fs::path();
      d.out = out / "defend" / (d.method + "_" + a.name);
      const json r = cmd_defend(d);
      defenses.push_back(r);
      stream += r.dump() + "\n";
    }
  }
  if (!defenses.empty()) {
    report["defenses"] = defenses;
    stages.push_back({{"stage", "defend"}, {"out", rel(out / "defend")}});
  }

  // Theory.
  if (cfg.contains("theory")) {
    const json& tj = cfg.at("theory");
    BoundOptions b;
    b.inputs.num_concepts = field(tj, "K", std::size_t{1024});
    b.inputs.delta = field(tj, "delta", 0.1);
    b.inputs.num_samples = field(tj, "N", std::size_t{100});
    b.inputs.num_labels = field(tj, "ycard", std::size_t{10});
    report["bound"] = json::parse(cmd_bound(b));
    if (tj.contains("sweep")) {
      b.sweep = field(tj, "sweep", std::string());
      make_dir(out / "theory");
      io::write_text(out / "theory" / "bound_sweep.csv", cmd_bound(b));
      stages.push_back({{"stage", "bound"}, {"out", rel(out / "theory" / "bound_sweep.csv")}});
    }
  }

  io::write_text(out / "reports.jsonl", stream);
  report["stages"] = stages;
  io::write_json(out / "run_report.json", report);
  return report;
}

// ---------------------------------------------------------------- entry

namespace {

void add_head_flags(CLI::App* app, HeadConfig& h, std::string& arch) {
  app->add_option("--arch", arch, "linear | mlp")->check(CLI::IsMember({"linear", "mlp"}));
  app->add_option("--hidden", h.hidden_width, "MLP hidden width");
  app->add_option("--epochs", h.epochs, "Training epochs");
  app->add_option("--batch", h.batch_size, "Mini-batch size");
  app->add_option("--lr", h.learning_rate, "Adam learning rate");
  app->add_option("--init-scale", h.init_scale, "Initial weight scale");
}

void apply_arch(HeadConfig& h, const std::string& arch) {
  h.architecture = arch == "mlp" ? Architecture::kMlp : Architecture::kLinear;
  h.validate();
}

}  // namespace

int main_entry(int argc, char** argv) {
  CLI::App app{"c2lab: concept-trigger backdoor lab on frozen embeddings"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;

  // synth
  SynthOptions so;
  std::string prevalence = "0.1";
  auto* synth = app.add_subcommand("synth", "Generate a planted-concept dataset");
  synth->add_option("--out", so.out, "Output directory")->required();
  synth->add_option("--n", so.spec.n);
  synth->add_option("--d", so.spec.d);
  synth->add_option("--classes", so.spec.num_classes);
  synth->add_option("--concepts", so.spec.num_concepts);
  synth->add_option("--strength", so.spec.concept_strength, "Concept strength alpha");
  synth->add_option("--noise", so.spec.noise_sigma);
  synth->add_option("--prevalence", prevalence, "One value or a comma list, one per concept");
  synth->add_option("--class-mean-scale", so.spec.class_mean_scale);
  synth->add_option("--test-n", so.test_n);
  synth->add_option("--exemplars", so.exemplars, "Exemplars per side and concept");
  synth->add_option("--activation-noise", so.activation_noise);
  synth->add_option("--map-h", so.map_h);
  synth->add_option("--map-w", so.map_w);
  synth->add_option("--cell-noise", so.cell_noise);
  synth->add_option("--clean-n", so.clean_n, "Size of the trusted clean set (0 = none)");
  synth->add_option("--seed", seed);

  // extract
  ExtractOptions eo;
  auto* extract = app.add_subcommand("extract", "Build a concept bank");
  extract->add_option("--method", eo.method)->check(CLI::IsMember({"tcav", "lfcbm", "sscbm"}));
  extract->add_option("--exemplars", eo.exemplars);
  extract->add_option("--bundle", eo.bundle);
  extract->add_option("--activation", eo.activation);
  extract->add_option("--embeddings", eo.embeddings);
  extract->add_option("--out", eo.out)->required();
  extract->add_option("--svm-lambda", eo.svm.lambda);
  extract->add_option("--svm-epochs", eo.svm.epochs);
  extract->add_option("--iters", eo.lfcbm.iters);
  extract->add_option("--lr", eo.lfcbm.learning_rate);
  extract->add_option("--filter-threshold", eo.lfcbm.filter_threshold);
  extract->add_option("--seed", seed);

  // score
  ScoreOptions sc;
  auto* score = app.add_subcommand("score", "Concept scores for a bundle");
  score->add_option("--method", sc.method)->check(CLI::IsMember({"tcav", "lfcbm", "sscbm"}));
  score->add_option("--bundle", sc.bundle)->required();
  score->add_option("--bank", sc.bank)->required();
  score->add_option("--out", sc.out)->required();

  // poison
  PoisonOptions po;
  auto* poison = app.add_subcommand("poison", "Flip labels of strong-concept samples");
  poison->add_option("--bundle", po.bundle)->required();
  poison->add_option("--scores", po.scores);
  poison->add_option("--concept", po.concepts, "Trigger concept name (repeatable)");
  poison->add_option("--pr", po.pr, "Poison ratio");
  poison->add_option("--target", po.target);
  poison->add_flag("--baseline", po.baseline, "Fixed-vector trigger instead of a concept");
  poison->add_option("--epsilon", po.epsilon, "Baseline poison fraction");
  poison->add_option("--magnitude", po.magnitude, "Baseline trigger norm");
  poison->add_option("--out", po.out)->required();
  poison->add_option("--seed", seed);

  // train
  TrainOptions to;
  to.head = synthetic_head_defaults();
  std::string train_arch = "linear";
  auto* train = app.add_subcommand("train", "Train a classification head");
  train->add_option("--bundle", to.bundle)->required();
  train->add_option("--out", to.out)->required();
  add_head_flags(train, to.head, train_arch);
  train->add_option("--seed", seed);

  // eval
  EvalOptions ev;
  ev.head_cfg = synthetic_head_defaults();
  std::string eval_arch = "linear";
  auto* eval = app.add_subcommand("eval", "ASR / CACC reports");
  eval->add_option("--head", ev.head);
  eval->add_option("--test", ev.test);
  eval->add_option("--test-scores", ev.test_scores);
  eval->add_option("--plan", ev.plan);
  eval->add_option("--label", ev.label);
  eval->add_option("--sweep", ev.grid, "Grid JSON: concepts, poison_ratios, target, head");
  eval->add_option("--train", ev.train);
  eval->add_option("--train-scores", ev.train_scores);
  eval->add_option("--threads", ev.threads);
  eval->add_option("--out", ev.out)->required();
  add_head_flags(eval, ev.head_cfg, eval_arch);
  eval->add_option("--seed", seed);

  // defend
  DefendOptions de;
  de.head_cfg = synthetic_head_defaults();
  std::string defend_arch = "linear";
  auto* defend = app.add_subcommand("defend", "Run FineTune or ABL");
  defend->add_option("--method", de.method)->check(CLI::IsMember({"finetune", "abl"}));
  defend->add_option("--head", de.head);
  defend->add_option("--clean", de.clean);
  defend->add_option("--bundle", de.bundle);
  defend->add_option("--test", de.test)->required();
  defend->add_option("--test-scores", de.test_scores);
  defend->add_option("--plan", de.plan)->required();
  defend->add_option("--out", de.out)->required();
  defend->add_option("--gamma", de.abl.lga_gamma);
  defend->add_option("--isolation-fraction", de.abl.isolation_fraction);
  defend->add_option("--pretrain-epochs", de.abl.pretrain_epochs);
  defend->add_option("--retrain-epochs", de.abl.retrain_epochs);
  defend->add_option("--unlearn-epochs", de.abl.unlearn_epochs);
  defend->add_option("--unlearn-lr", de.abl.unlearn_learning_rate);
  add_head_flags(defend, de.head_cfg, defend_arch);
  defend->add_option("--seed", seed);

  // bound
  BoundOptions bo;
  bo.inputs = {1024, 0.1, 100, 10};
  fs::path bound_out;
  auto* bound = app.add_subcommand("bound", "Minimum flipping-rate bound");
  bound->add_option("--K", bo.inputs.num_concepts);
  bound->add_option("--delta", bo.inputs.delta);
  bound->add_option("--N", bo.inputs.num_samples);
  bound->add_option("--ycard", bo.inputs.num_labels);
  bound->add_option("--sweep", bo.sweep, "e.g. K=2,16,1024,N=100,1000");
  bound->add_option("--out", bound_out, "Write to a file instead of stdout");

  // run
  RunOptions ro;
  auto* run = app.add_subcommand("run", "Config-driven end-to-end pipeline");
  run->add_option("--config", ro.config)->required();
  run->add_option("--out", ro.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*synth) {
      so.spec.seed = seed;
      std::vector<double> rho;
      std::stringstream ss(prevalence);
      for (std::string item; std::getline(ss, item, ',');) {
        try {
          rho.push_back(std::stod(item));
        } catch (const std::logic_error&) {
          throw ValidationError("bad --prevalence value '" + item + "'");
        }
      }
      if (rho.size() == 1) rho.assign(so.spec.num_concepts, rho.front());
      so.spec.prevalence = rho;
      cmd_synth(so);
    } else if (*extract) {
      eo.seed = seed;
      cmd_extract(eo);
    } else if (*score) {
      cmd_score(sc);
    } else if (*poison) {
      po.seed = seed;
      const json plan = cmd_poison(po);
      std::cout << "selected " << plan.at("n_selected") << " samples\n";
    } else if (*train) {
      apply_arch(to.head, train_arch);
      to.seed = seed;
      cmd_train(to);
    } else if (*eval) {
      apply_arch(ev.head_cfg, eval_arch);
      ev.seed = seed;
      std::vector<AttackReport> reps;
      for (const auto& j : cmd_eval(ev)) reps.push_back(AttackReport::from_json(j));
      std::cout << reports_csv(reps);
    } else if (*defend) {
      apply_arch(de.head_cfg, defend_arch);
      de.seed = seed;
      std::cout << cmd_defend(de).dump() << "\n";
    } else if (*bound) {
      const std::string text = cmd_bound(bo);
      if (bound_out.empty()) {
        std::cout << text;
      } else {
        io::write_text(bound_out, text);
      }
    } else if (*run) {
      const json r = cmd_run(ro);
      std::cout << "cacc " << r.at("attack").at("cacc") << " asr " << r.at("attack").at("asr") << "\n";
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace c2lab::cli
