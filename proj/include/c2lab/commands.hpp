#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "c2lab/defenses.hpp"
#include "c2lab/extractors.hpp"
#include "c2lab/synth.hpp"
#include "c2lab/theory.hpp"
#include "c2lab/trainer.hpp"

// Subcommand implementations behind the c2lab executable. Every command
// takes the global seed and derives its own stage seed with derive_seed, so
// a stage re-run in isolation with the same --seed reproduces the pipeline.
namespace c2lab::cli {

namespace fs = std::filesystem;

// Stage names fed to derive_seed.
inline constexpr const char* kStageSynthTest = "synth/test";
inline constexpr const char* kStageSynthClean = "synth/clean";
inline constexpr const char* kStageSynthActivation = "synth/activation";
inline constexpr const char* kStageExtractTcav = "extract/tcav";
inline constexpr const char* kStageExtractLfcbm = "extract/lfcbm";
inline constexpr const char* kStageTrigger = "poison/trigger";
inline constexpr const char* kStageBaseline = "poison/baseline";
inline constexpr const char* kStageTrain = "train";
inline constexpr const char* kStageFinetune = "defend/finetune";
inline constexpr const char* kStageAbl = "defend/abl";

nlohmann::json synth_spec_to_json(const SynthSpec& spec);
/// Missing keys keep SynthSpec defaults; "prevalence" may be a number
/// (shared by all concepts) or a list. Default prevalence is 0.1.
SynthSpec synth_spec_from_json(const nlohmann::json& j);

struct SynthOptions {
  SynthSpec spec;
  fs::path out;
  std::size_t test_n = 10000;
  std::size_t exemplars = 50;  // per side and concept
  double activation_noise = 0.5;
  std::size_t map_h = 0;  // 0 = no feature maps
  std::size_t map_w = 0;
  double cell_noise = 0.1;
  std::size_t clean_n = 200;  // defender's trusted set; 0 = none
};

/// Writes train/, test/, clean/ bundles, exemplars/, activation/, the
/// planted directions as a bank in planted/, and truth.json.
void cmd_synth(const SynthOptions& o);

struct ExtractOptions {
  std::string method = "tcav";  // tcav | lfcbm | sscbm
  fs::path exemplars;           // tcav
  fs::path bundle;              // lfcbm
  fs::path activation;          // lfcbm
  fs::path embeddings;          // sscbm: bank dir of concept embeddings
  fs::path out;
  SvmParams svm;
  LfcbmParams lfcbm;
  std::uint64_t seed = 0;
};

/// Writes a bank directory; lfcbm also writes lfcbm_fit.json.
void cmd_extract(const ExtractOptions& o);

struct ScoreOptions {
  std::string method = "tcav";
  fs::path bundle;
  fs::path bank;
  fs::path out;
};

void cmd_score(const ScoreOptions& o);

struct PoisonOptions {
  fs::path bundle;
  fs::path scores;  // concept mode
  fs::path out;
  std::vector<std::string> concepts;
  double pr = 0.01;
  std::uint32_t target = 0;
  bool baseline = false;
  double epsilon = 0.01;
  double magnitude = 64.0;
  std::uint64_t seed = 0;
};

/// Writes the poisoned bundle and plan.json under `out`; returns the plan.
nlohmann::json cmd_poison(const PoisonOptions& o);

struct TrainOptions {
  fs::path bundle;
  fs::path out;
  HeadConfig head;  // seed is replaced by the derived stage seed
  std::uint64_t seed = 0;
};

void cmd_train(const TrainOptions& o);

struct EvalOptions {
  fs::path head;
  fs::path test;
  fs::path test_scores;  // concept plans only
  fs::path plan;
  fs::path out;
  std::string label;
  // sweep mode
  fs::path grid;
  fs::path train;
  fs::path train_scores;
  HeadConfig head_cfg;
  unsigned threads = 1;
  std::uint64_t seed = 0;
};

/// Writes report.json (single mode), reports.jsonl and reports.csv. Returns
/// the list of report objects.
nlohmann::json cmd_eval(const EvalOptions& o);

struct DefendOptions {
  std::string method = "finetune";  // finetune | abl
  fs::path head;                    // attacked head (finetune input, pre metrics)
  fs::path clean;                   // finetune trusted subset
  fs::path bundle;                  // abl: untrusted training bundle
  fs::path test;
  fs::path test_scores;
  fs::path plan;
  fs::path out;
  HeadConfig head_cfg;
  AblParams abl;
  std::uint64_t seed = 0;
};

/// Writes head/, defense.json, reports.jsonl (and isolated.json for abl).
nlohmann::json cmd_defend(const DefendOptions& o);

struct BoundOptions {
  BoundInputs inputs;
  std::string sweep;  // e.g. "K=2,16,1024,N=100,1000"; empty = single report
};

/// JSON report text, or a CSV grid in sweep mode.
std::string cmd_bound(const BoundOptions& o);

/// Parses "K=2,16,N=100,1000" into per-key value lists. Keys: K, N, delta,
/// ycard.
std::vector<std::pair<std::string, std::vector<double>>> parse_sweep(const std::string& text);

struct RunOptions {
  fs::path config;
  fs::path out;  // overrides C2LAB_OUT and the config's output_dir
};

/// Full pipeline; writes run_report.json under the output dir and returns it.
nlohmann::json cmd_run(const RunOptions& o);

/// Entry point used by the executable. Exit codes: 0 success, 1 validation
/// or numeric error (including bad flags), 2 I/O error.
int main_entry(int argc, char** argv);

}  // namespace c2lab::cli
