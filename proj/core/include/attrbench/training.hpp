#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attrbench/corpus.hpp"
#include "attrbench/ola_model.hpp"
#include "attrbench/tokenizer.hpp"

namespace attrbench::model {

/// Layer-freezing ladder for a randomly initialised OLA model.
enum class TrainScheme : std::uint8_t {
  ZS,   // no updates
  C,    // classifier head only
  CE,   // classifier + embedding
  CEA,  // everything
};

inline constexpr std::array<TrainScheme, 4> kAllSchemes = {TrainScheme::ZS, TrainScheme::C, TrainScheme::CE,
                                                           TrainScheme::CEA};

const char* scheme_name(TrainScheme s) noexcept;
TrainScheme scheme_from_string(std::string_view s);
/// Trainable flag per ParamGroup.
std::array<bool, kNumGroups> trainable_groups(TrainScheme s) noexcept;

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t epochs = 200;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  /// Stop after this many epochs without a validation improvement; 0 disables.
  std::size_t patience = 20;
  /// Share of training base sentences held out for snapshot selection.
  double validation_fraction = 0.1;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0 = evaluation of the initial parameters
  double train_loss = 0.0;
  double validation_accuracy = 0.0;
};

struct TrainResult {
  OlaModel model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

/// Mean cross-entropy over sentences.
double mean_loss(const OlaModel& model, const Tokenizer& tokenizer, std::span<const corpus::LabeledSentence> data);

/// Argmax-logit accuracy; ties resolve to the lowest class id.
double evaluate_accuracy(const OlaModel& model, const Tokenizer& tokenizer,
                         std::span<const corpus::LabeledSentence> sentences);

/// Predicted class per sentence.
std::vector<std::size_t> predict(const OlaModel& model, const Tokenizer& tokenizer,
                                 std::span<const corpus::LabeledSentence> sentences);

/// Mini-batch Adam on cross-entropy over `bundle.train`, updating only the
/// groups the scheme unfreezes. A validation share of the training base
/// sentences selects the returned snapshot (best validation accuracy,
/// earliest epoch on ties). ZS returns `initial` untouched with an
/// evaluation-only history.
TrainResult train(const OlaModel& initial, TrainScheme scheme, const TrainConfig& config,
                  const Tokenizer& tokenizer, const corpus::DatasetBundle& bundle);

// --- checkpoints ------------------------------------------------------------

struct Checkpoint {
  OlaModel model;
  Tokenizer tokenizer;
  TrainScheme scheme = TrainScheme::ZS;
  std::uint64_t seed = 0;
};

/// Text format, version 1:
///   attrbench-checkpoint 1
///   scheme <ZS|C|CE|CEA>
///   seed <n>
///   dims <vocab> <dim> <hidden> <classes>
///   pieces <n>            followed by n lines, one piece each
///   tensor <name> <shape...>   followed by one line of space-separated values
///   end
/// Values use the shortest round-trip decimal form, so reloading is exact.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::string_view text);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace attrbench::model
