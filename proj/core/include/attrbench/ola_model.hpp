#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "attrbench/tape.hpp"
#include "attrbench/tokenizer.hpp"

namespace attrbench::model {

enum class ParamGroup : std::uint8_t { Embedding = 0, Attention = 1, Classifier = 2 };
inline constexpr std::size_t kNumGroups = 3;

struct OlaConfig {
  std::size_t vocab_size = 0;
  std::size_t dim = 64;
  std::size_t hidden = 64;
  std::size_t classes = 3;

  friend bool operator==(const OlaConfig&, const OlaConfig&) = default;
};

/// Index of each parameter tensor in OlaModel::parameters().
enum class Param : std::uint8_t { Embedding, Query, Key, Value, Output, Hidden, HiddenBias, Logits, LogitsBias };
inline constexpr std::size_t kNumParams = 9;

ParamGroup group_of(Param p) noexcept;
const char* param_name(Param p) noexcept;

/// One-layer attention classifier:
///   E = embedding rows of the non-PAD tokens
///   A = softmax(E Wq (E Wk)^T / sqrt(dim))       (row-wise)
///   pooled = mean_t (A E Wv Wo)_t
///   logits = relu(pooled W1 + b1) W2 + b2
class OlaModel {
 public:
  OlaModel() = default;
  /// Embedding ~ N(0, 1); linear layers ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  OlaModel(const OlaConfig& config, std::uint64_t seed);
  OlaModel(const OlaConfig& config, std::vector<numerics::Tensor> parameters);

  const OlaConfig& config() const noexcept { return config_; }
  const std::vector<numerics::Tensor>& parameters() const noexcept { return params_; }
  std::vector<numerics::Tensor>& mutable_parameters() noexcept { return params_; }
  const numerics::Tensor& parameter(Param p) const { return params_[static_cast<std::size_t>(p)]; }

  /// Graph handles of one forward evaluation.
  struct Graph {
    numerics::Var embeddings;  // T x dim input rows
    numerics::Var attention;   // T x T
    numerics::Var logits;      // classes
    std::array<numerics::Var, kNumParams> params{};
  };

  /// Records the forward pass from explicit input embedding rows. Parameters
  /// in groups flagged in `trainable` become gradient-carrying leaves.
  Graph forward_embeddings(numerics::Tape& tape, numerics::Var embeddings,
                           std::array<bool, kNumGroups> trainable = {}) const;

  /// Records lookup + forward for token ids. PAD ids are masked out (they are
  /// neither attended to nor pooled). The embedding rows are a leaf that
  /// carries a gradient when `embeddings_require_grad` is set.
  Graph forward(numerics::Tape& tape, std::span<const TokenId> ids, std::array<bool, kNumGroups> trainable = {},
                bool embeddings_require_grad = false) const;

  /// Logits without recording a tape.
  numerics::Tensor logits(std::span<const TokenId> ids) const;

  /// Embedding rows of the non-PAD ids. Throws VocabularyError for ids
  /// outside the table and ArgumentError when nothing is left.
  numerics::Tensor embed(std::span<const TokenId> ids) const;

  friend bool operator==(const OlaModel&, const OlaModel&) = default;

 private:
  OlaConfig config_;
  std::vector<numerics::Tensor> params_;
};

/// Tape-free scorer with the query/key/value projections of every vocabulary
/// entry precomputed. Intended for the many black-box evaluations of the
/// sampling-based explainers.
class FastScorer {
 public:
  explicit FastScorer(const OlaModel& model);
  numerics::Tensor logits(std::span<const TokenId> ids) const;

 private:
  const OlaModel* model_;
  numerics::Tensor q_, k_, vo_;  // vocab x dim; vo_ = E Wv Wo
};

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace attrbench::model
