#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attrbench/corpus.hpp"
#include "attrbench/ola_model.hpp"
#include "attrbench/random.hpp"
#include "attrbench/tape.hpp"
#include "attrbench/tokenizer.hpp"

namespace attrbench::attribution {

using model::TokenId;
using numerics::Tensor;

enum class Method : std::uint8_t {
  Saliency,
  InputXGradient,
  GuidedBackprop,
  IntegratedGradients,
  DeepLift,
  GradientSHAP,
  LIME,
  KernelSHAP,
  UniformRandom,
  PatternVariant,
};

inline constexpr std::array<Method, 10> kAllMethods = {
    Method::Saliency,     Method::InputXGradient, Method::GuidedBackprop, Method::IntegratedGradients,
    Method::DeepLift,     Method::GradientSHAP,   Method::LIME,           Method::KernelSHAP,
    Method::UniformRandom, Method::PatternVariant};

const char* method_name(Method m) noexcept;
/// Throws MethodError for an unknown name.
Method method_from_string(std::string_view name);
bool is_gradient_method(Method m) noexcept;

enum class Baseline : std::uint8_t { ZeroEmbedding, MaskToken };
const char* baseline_name(Baseline b) noexcept;
Baseline baseline_from_string(std::string_view name);

struct MethodOptions {
  Baseline baseline = Baseline::MaskToken;
  std::size_t ig_steps = 64;
  std::size_t shap_samples = 2048;
  std::size_t lime_samples = 1000;
  std::size_t gradshap_baselines = 20;
  double gradshap_sigma = 0.1;
  /// Exponential kernel width over the cosine coalition distance (x100);
  /// infinity gives uniform sample weights.
  double lime_kernel_width = 25.0;
  double lime_ridge = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Raw per-token scores of one explanation.
struct AttributionMap {
  Method method = Method::Saliency;
  std::vector<double> token_scores;
  /// Token -> word index; -1 marks special tokens.
  std::vector<std::int64_t> alignment;
  std::size_t n_words = 0;
  std::uint64_t sentence_idx = 0;
  int target = 0;
  std::size_t attributed_class = 0;
  std::string scheme;
  std::uint64_t seed = 0;
  /// Sample counts used, recorded for provenance.
  std::map<std::string, std::uint64_t> samples;

  friend bool operator==(const AttributionMap&, const AttributionMap&) = default;
};

/// A classifier whose first layer consumes token embedding rows.
class ExplainableModel {
 public:
  virtual ~ExplainableModel() = default;
  virtual std::size_t num_classes() const = 0;
  /// T x D input rows for token ids.
  virtual Tensor embed(std::span<const TokenId> ids) const = 0;
  /// T x D rows of the reference input.
  virtual Tensor baseline_embeddings(std::size_t tokens, Baseline baseline) const = 0;
  /// Records logits for input rows on `tape`.
  virtual numerics::Var logits(numerics::Tape& tape, numerics::Var embeddings) const = 0;
  /// Black-box logits for token ids.
  virtual Tensor predict(std::span<const TokenId> ids) const = 0;
};

/// ExplainableModel view of a trained OLA model. The model must outlive it.
class OlaExplainable final : public ExplainableModel {
 public:
  explicit OlaExplainable(const model::OlaModel& model) : model_(&model), scorer_(model) {}
  std::size_t num_classes() const override { return model_->config().classes; }
  Tensor embed(std::span<const TokenId> ids) const override { return model_->embed(ids); }
  Tensor baseline_embeddings(std::size_t tokens, Baseline baseline) const override;
  numerics::Var logits(numerics::Tape& tape, numerics::Var embeddings) const override {
    return model_->forward_embeddings(tape, embeddings).logits;
  }
  Tensor predict(std::span<const TokenId> ids) const override { return scorer_.logits(ids); }

 private:
  const model::OlaModel* model_;
  model::FastScorer scorer_;
};

// --- gradient-based ---------------------------------------------------------

/// Per-token scores of a gradient method for the logit of `target_class`.
/// Saliency and GuidedBackprop reduce with the L2 norm over the embedding
/// axis, the product-form methods with a sum. Throws MethodError for a
/// non-gradient method and NumericError for non-finite gradients.
std::vector<double> gradient_attribution(const ExplainableModel& model, std::span<const TokenId> ids, Method method,
                                         std::size_t target_class, const MethodOptions& options, Rng& rng);

/// Logit of `target_class` at explicit input rows.
double score_embeddings(const ExplainableModel& model, const Tensor& embeddings, std::size_t target_class);

// --- surrogate --------------------------------------------------------------

/// Value of a coalition: present[j] tells whether feature j is kept.
using CoalitionValue = std::function<double(const std::vector<bool>& present)>;

struct LinearExplanation {
  std::vector<double> coefficients;
  double intercept = 0.0;
};

/// Shapley-kernel weighted least squares with the empty and full coalitions
/// imposed as exact constraints (intercept = v(empty), coefficients sum to
/// v(full) - v(empty)). When 2^d - 2 coalitions fit into `samples`, all are
/// enumerated and the result equals the Shapley values; otherwise coalition
/// sizes are sampled proportionally to their total kernel weight.
/// For d == 1 the single feature receives v(full) - v(empty).
LinearExplanation kernel_shap(const CoalitionValue& value, std::size_t d, std::size_t samples, Rng& rng);

struct LimeOptions {
  std::size_t samples = 1000;
  double kernel_width = 25.0;
  double ridge = 1.0;
};

/// Weighted ridge fit with intercept over random removal coalitions; the
/// first sample is the unperturbed input. Sample weight exp(-D^2 / width^2)
/// with D the cosine distance to the full coalition times 100.
LinearExplanation lime(const CoalitionValue& value, std::size_t d, const LimeOptions& options, Rng& rng);

/// Surrogate attribution over tokens, masking absent tokens with `mask_id`.
std::vector<double> surrogate_attribution(const ExplainableModel& model, std::span<const TokenId> ids, Method method,
                                          std::size_t target_class, TokenId mask_id, const MethodOptions& options,
                                          Rng& rng);

// --- baselines --------------------------------------------------------------

/// i.i.d. U(0, 1) scores (open interval), one per token.
std::vector<double> uniform_random_baseline(std::size_t tokens, Rng& rng);

/// Sentence x vocabulary tf-idf with tf = raw count and idf = ln(N / df).
/// Words are lowercased.
struct TfIdfMatrix {
  std::vector<std::string> vocabulary;  // sorted
  Tensor values;                        // sentences x vocabulary

  std::optional<std::size_t> column(std::string_view word) const;
};

/// Throws ArgumentError for an empty corpus.
TfIdfMatrix tfidf_features(std::span<const corpus::LabeledSentence> corpus);

/// Global per-class word scores Cov(tf-idf column, one-vs-rest target).
/// Identical for every explained sentence; signed.
struct PatternScores {
  std::vector<std::string> vocabulary;
  std::vector<std::vector<double>> by_class;  // class -> column -> covariance

  /// Score of `word` for `cls`; 0 for words outside the vocabulary.
  double score(std::string_view word, std::size_t cls) const;
};

/// Throws ArgumentError when rows and targets differ in count and
/// DegenerateError when fewer than two classes are present.
PatternScores pattern_variant(const TfIdfMatrix& tfidf, std::span<const int> targets, std::size_t num_classes = 3);

// --- orchestration ----------------------------------------------------------

/// Explains sentences of one trained model with any method.
class Explainer {
 public:
  Explainer(const model::OlaModel& model, const model::Tokenizer& tokenizer, const PatternScores& pattern,
            MethodOptions options, std::string scheme, std::uint64_t model_seed);

  /// Attributes the model's predicted class of `sentence`.
  AttributionMap explain(const corpus::LabeledSentence& sentence, Method method) const;

 private:
  OlaExplainable model_;
  const model::Tokenizer* tokenizer_;
  const PatternScores* pattern_;
  MethodOptions options_;
  std::string scheme_;
  std::uint64_t model_seed_;
};

/// Line-delimited dump records.
std::string to_json_line(const AttributionMap& map);
AttributionMap attribution_from_json_line(std::string_view line);

}  // namespace attrbench::attribution
