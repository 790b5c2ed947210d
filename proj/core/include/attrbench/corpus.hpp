#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace attrbench::corpus {

/// Class ids: Female = 0, Male = 1, NonBinary = 2.
enum class GenderVariant : std::uint8_t { Female = 0, Male = 1, NonBinary = 2 };

inline constexpr std::array<GenderVariant, 3> kAllVariants = {GenderVariant::Female, GenderVariant::Male,
                                                              GenderVariant::NonBinary};
inline constexpr std::size_t kNumClasses = 3;

const char* variant_name(GenderVariant v) noexcept;
GenderVariant variant_from_target(int target);

enum class Scope { SubjectOnly, AllWords };

const char* scope_name(Scope s) noexcept;
/// "gender_subj" / "gender_all".
const char* scope_directory(Scope s) noexcept;
Scope scope_from_string(std::string_view s);

struct LabeledSentence {
  std::vector<std::string> words;
  std::vector<std::uint8_t> ground_truth;
  GenderVariant variant = GenderVariant::Female;
  std::uint64_t sentence_idx = 0;

  int target() const noexcept { return static_cast<int>(variant); }
  std::size_t size() const noexcept { return words.size(); }

  friend bool operator==(const LabeledSentence&, const LabeledSentence&) = default;
};

/// Throws ValidationError on a length mismatch, non-0/1 flags, or an all-zero mask.
void validate(const LabeledSentence& s);

/// A corpus plus its train/test partition. Bundles that have not been split
/// keep every sentence in `train`.
struct DatasetBundle {
  Scope scope = Scope::AllWords;
  std::vector<LabeledSentence> train;
  std::vector<LabeledSentence> test;
  std::set<std::string> vocabulary;  // lowercased words of every sentence

  std::vector<LabeledSentence> all() const;
};

std::string to_lower(std::string_view s);

/// Lowercased word set over sentences.
std::set<std::string> vocabulary_of(std::span<const LabeledSentence> sentences);

// --- JSONL ----------------------------------------------------------------

std::vector<LabeledSentence> load_jsonl(const std::filesystem::path& path);
std::vector<LabeledSentence> parse_jsonl(std::string_view text);
void save_jsonl(std::span<const LabeledSentence> sentences, const std::filesystem::path& path);
/// One line in the published field order, e.g.
/// {"sentence": ["Paul", "loves"], "ground_truth": [1.0, 0.0], "target": 1, "sentence_idx": 0}
std::string to_jsonl_line(const LabeledSentence& s);

// --- splitting ------------------------------------------------------------

/// Splits at the base-sentence level: all variants sharing a sentence_idx
/// land in the same split. Membership depends only on the set of
/// sentence_idx values and the seed, not on input order.
DatasetBundle split_train_test(const DatasetBundle& bundle, double train_fraction, std::uint64_t seed);

/// Sentences of one class.
std::vector<LabeledSentence> filter_class(std::span<const LabeledSentence> sentences, GenderVariant v);

// --- co-occurrence bias ---------------------------------------------------

using WordSet = std::set<std::string>;

/// Sum over sentences of |{(a, w) : a in A, w in V, both present in x}|,
/// case-insensitive, presence rather than multiplicity.
std::uint64_t cooccurrence(std::span<const LabeledSentence> sentences, const WordSet& gender_terms,
                           const WordSet& vocabulary);

/// V = W \ A.
WordSet non_gender_vocabulary(const WordSet& words, const WordSet& gender_terms);

using ClassDecomposition = std::array<std::vector<LabeledSentence>, kNumClasses>;

ClassDecomposition decompose(std::span<const LabeledSentence> sentences);

/// Per-class share C(D^g) / sum_g' C(D^g'). Throws UndefinedBiasError when
/// every count is zero.
std::array<double, kNumClasses> bias_score(const ClassDecomposition& decomposition, const WordSet& gender_terms,
                                           const WordSet& vocabulary);

/// bias_score with V derived from the words of the decomposition itself.
std::array<double, kNumClasses> bias_score(const ClassDecomposition& decomposition, const WordSet& gender_terms);

}  // namespace attrbench::corpus
