#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "attrbench/attribution.hpp"
#include "attrbench/corpus.hpp"
#include "attrbench/evaluation.hpp"
#include "attrbench/training.hpp"

namespace attrbench::pipeline {

namespace fs = std::filesystem;

struct DatasetSection {
  /// "template" generates from the bundled lexicon; "load" reads JSONL files.
  std::string mode = "template";
  std::vector<corpus::Scope> scopes = {corpus::Scope::AllWords, corpus::Scope::SubjectOnly};
  std::size_t n_base = 1610;
  std::uint64_t seed = 7;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 1;
  /// Load mode: one unsplit JSONL file per scope directory name.
  std::map<std::string, fs::path> paths;
  /// Optional lexicon file; the bundled table otherwise.
  fs::path lexicon;
};

struct TrainingSection {
  std::vector<model::TrainScheme> schemes = {model::kAllSchemes.begin(), model::kAllSchemes.end()};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::size_t dim = 64;
  std::size_t hidden = 64;
  model::TrainConfig train;  // seed is overridden per job
};

struct AttributionSection {
  std::vector<attribution::Method> methods = {attribution::kAllMethods.begin(), attribution::kAllMethods.end()};
  attribution::MethodOptions options;
  /// Explain only the first N test sentences; 0 = all.
  std::size_t max_sentences = 0;
};

struct EvaluationSection {
  std::string baseline_scheme = "ZS";
  fs::path output_dir = "attrbench-out";
  bool svg = true;
};

struct RunConfig {
  DatasetSection dataset;
  TrainingSection training;
  AttributionSection attribution;
  EvaluationSection evaluation;

  /// Throws ValidationError for inconsistent settings, including missing
  /// load-mode paths.
  void validate() const;
};

/// Parses a JSON config; absent keys keep their defaults, unknown keys are
/// rejected. Relative load paths resolve against `base_dir`.
RunConfig parse_config(std::string_view json, const fs::path& base_dir = {});
RunConfig load_config(const fs::path& path);
std::string config_to_json(const RunConfig& config);
/// FNV-1a 64 of the canonical JSON form, as 16 hex digits.
std::string config_hash(const RunConfig& config);

std::uint64_t fnv1a(std::string_view bytes) noexcept;
std::string hex64(std::uint64_t v);

struct RunOptions {
  fs::path out;  // output root
  std::size_t workers = 1;
  bool force = false;
};

/// Output root: `--out` if given, else ATTRBENCH_OUT, else the config value.
fs::path resolve_output_root(const RunConfig& config, const fs::path& flag);

// --- layout -----------------------------------------------------------------

fs::path data_dir(const fs::path& root, corpus::Scope scope);
fs::path checkpoint_path(const fs::path& root, corpus::Scope scope, model::TrainScheme scheme, std::uint64_t seed);
fs::path dump_path(const fs::path& root, corpus::Scope scope, model::TrainScheme scheme, std::uint64_t seed,
                   attribution::Method method);
fs::path report_dir(const fs::path& root, corpus::Scope scope);

// --- commands ---------------------------------------------------------------

struct ScopeAudit {
  corpus::Scope scope = corpus::Scope::AllWords;
  std::size_t train = 0;
  std::size_t test = 0;
  std::array<double, corpus::kNumClasses> bias{};
};

/// Writes data/<scope>/{train,test}.jsonl and data/manifest.json. Throws
/// ValidationError when a template AllWords corpus is not balanced to 1/3
/// within 1e-6.
std::vector<ScopeAudit> cmd_generate(const RunConfig& config, const RunOptions& options);

struct TrainedModel {
  corpus::Scope scope = corpus::Scope::AllWords;
  model::TrainScheme scheme = model::TrainScheme::ZS;
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;
  std::size_t best_epoch = 0;
  bool reused = false;
};

/// Trains every (scope, scheme, seed); existing checkpoints are reused unless
/// `force`. Writes models/<scope>/manifest.json with test accuracies.
std::vector<TrainedModel> cmd_train(const RunConfig& config, const RunOptions& options);

struct DumpStatus {
  fs::path path;
  bool reused = false;
};

/// Writes one JSONL dump per (scope, scheme, seed, method) with a checksum
/// sidecar. Dumps whose checksum verifies are skipped; a mismatching dump
/// raises ChecksumError unless `force` regenerates it.
std::vector<DumpStatus> cmd_attribute(const RunConfig& config, const RunOptions& options);

/// Verifies and reads every dump, then writes reports/<scope>/report.{csv,json}
/// (+ report.svg) and rma_ladder.txt. Throws IncompleteGridError when a dump
/// is missing.
std::vector<evaluation::BenchmarkReport> cmd_report(const RunConfig& config, const RunOptions& options);

/// Reads a dump after checking its sidecar checksum.
std::vector<attribution::AttributionMap> read_dump(const fs::path& path);

/// Runs `jobs` on up to `workers` threads; rethrows the first failure.
void run_parallel(std::size_t jobs, std::size_t workers, const std::function<void(std::size_t)>& job);

}  // namespace attrbench::pipeline
