#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attrbench/attribution.hpp"
#include "attrbench/corpus.hpp"

namespace attrbench::evaluation {

using attribution::AttributionMap;
using attribution::Method;

/// Normalized per-word attribution: non-negative, sums to 1.
struct WordExplanation {
  std::vector<double> word_scores;
  std::uint64_t sentence_idx = 0;
  int target = 0;
  Method method = Method::Saliency;
  std::string scheme;
  std::uint64_t seed = 0;
};

/// Absolute token scores summed per word and divided by their total;
/// special tokens (alignment -1) are dropped and an all-zero vector becomes
/// uniform. Throws AlignmentError for a word index >= n_words and
/// ArgumentError for n_words == 0.
WordExplanation normalize_and_aggregate(const AttributionMap& map, std::size_t n_words);

/// sum_j s_j h_j. Throws ContractError on a length mismatch.
double mass_accuracy(std::span<const std::uint8_t> ground_truth, const WordExplanation& explanation);
double mass_accuracy(std::span<const std::uint8_t> ground_truth, std::span<const double> word_scores);

/// ma / ma_baseline. Throws UndefinedRmaError unless ma_baseline > 0.
double relative_mass_accuracy(double ma, double ma_baseline);

/// Ground-truth masks keyed by (sentence_idx, target).
using GroundTruthIndex = std::map<std::pair<std::uint64_t, int>, std::vector<std::uint8_t>>;
GroundTruthIndex ground_truth_index(std::span<const corpus::LabeledSentence> sentences);

struct GridSpec {
  std::vector<std::string> schemes;
  std::vector<Method> methods;
  std::vector<std::uint64_t> seeds;
  std::string baseline_scheme = "ZS";
};

struct ReportMetadata {
  std::string scope;
  std::string config_hash;
};

/// MA statistics of one (scheme, method, seed) over the explained sentences.
struct SeedCell {
  std::string scheme;
  Method method = Method::Saliency;
  std::uint64_t seed = 0;
  std::size_t sentences = 0;
  double mean_ma = 0.0;
  double std_ma = 0.0;  // population
};

/// Seed means aggregated per (scheme, method).
struct CellSummary {
  std::string scheme;
  Method method = Method::Saliency;
  std::size_t seeds = 0;
  double mean_ma = 0.0;  // mean of seed means
  double std_ma = 0.0;   // population std of seed means
  std::optional<double> rma;
};

struct BenchmarkReport {
  ReportMetadata metadata;
  std::string baseline_scheme;
  std::vector<SeedCell> seed_cells;  // grid order: scheme, method, seed
  std::vector<CellSummary> cells;    // grid order: scheme, method

  const CellSummary* cell(std::string_view scheme, Method method) const;
};

/// Scores every explanation against its mask and aggregates over the grid.
/// RMA is set when the baseline scheme's cell for the same method exists
/// and has a positive mean. Throws IncompleteGridError listing every
/// (scheme, method, seed) without explanations and ValidationError for an
/// explanation without a ground-truth mask.
BenchmarkReport summarize(std::span<const WordExplanation> explanations, const GroundTruthIndex& ground_truth,
                          const GridSpec& grid, const ReportMetadata& metadata = {});

/// Columns scheme,method,seed,mean_MA,std_MA,RMA. One row per seed, then one
/// row per cell with seed "all".
std::string report_csv(const BenchmarkReport& report);
std::string report_json(const BenchmarkReport& report);
/// Grouped bar chart of mean MA and RMA per method, one bar per scheme.
std::string report_svg(const BenchmarkReport& report);
/// Text table of the RMA ladder per method across `schemes`.
std::string rma_ladder(const BenchmarkReport& report, std::span<const std::string> schemes);

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace attrbench::evaluation
