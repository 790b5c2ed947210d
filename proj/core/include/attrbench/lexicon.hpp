#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "attrbench/corpus.hpp"

namespace attrbench::corpus {

enum class WordRole { Pronoun, Possessive, CommonNoun, ProperNamePlaceholder };

const char* role_name(WordRole r) noexcept;
WordRole role_from_string(std::string_view s);

/// One gendered lexeme in its three forms. Forms are stored lowercased and may
/// span several words ("parent's sibling").
struct LexiconRule {
  std::string female_form;
  std::string male_form;
  std::string nonbinary_form;
  WordRole role = WordRole::Pronoun;

  const std::string& form(GenderVariant v) const noexcept;
  bool has_form(std::string_view lowercased) const noexcept;
  bool single_word() const noexcept;

  friend bool operator==(const LexiconRule&, const LexiconRule&) = default;
};

class Lexicon {
 public:
  Lexicon() = default;
  /// Throws ValidationError when a rule's forms are not pairwise distinct.
  explicit Lexicon(std::vector<LexiconRule> rules);

  /// Plain-text table, one `female|male|nonbinary|role` rule per line.
  /// Blank lines and lines starting with '#' are skipped.
  static Lexicon parse(std::string_view text);
  static Lexicon load(const std::filesystem::path& path);
  /// The table bundled with the library (same content as data/lexicon.txt).
  static const Lexicon& builtin();
  static std::string_view builtin_text();

  std::string to_text() const;

  /// Rule of `role` that has `word` (any case) as one of its forms. Proper
  /// name placeholders match regardless of the word.
  const LexiconRule* find(std::string_view word, WordRole role) const noexcept;

  /// Set A: every word of every form, lowercased.
  WordSet gender_terms() const;

  const std::vector<LexiconRule>& rules() const noexcept { return rules_; }

 private:
  std::vector<LexiconRule> rules_;
};

enum class Annotation {
  Plain,
  Gendered,     // replaced via a LexiconRule of `role`
  SubjectVerb,  // present-tense verb governed by the subject
};

struct AnnotatedWord {
  std::string text;
  Annotation kind = Annotation::Plain;
  WordRole role = WordRole::Pronoun;
  /// Belongs to (or refers back to) the grammatical subject.
  bool subject = false;

  static AnnotatedWord plain(std::string text) { return {std::move(text)}; }
  static AnnotatedWord gendered(std::string text, WordRole role, bool subject) {
    return {std::move(text), Annotation::Gendered, role, subject};
  }
  static AnnotatedWord verb(std::string text) { return {std::move(text), Annotation::SubjectVerb, {}, true}; }
};

struct AnnotatedSentence {
  std::vector<AnnotatedWord> words;
  std::uint64_t sentence_idx = 0;
};

/// Third-person-singular present -> plural agreement for NonBinary; identity
/// for Female and Male.
std::string verb_agreement(std::string_view verb, GenderVariant target);

/// Produces one gendered variant of an annotated sentence together with its
/// ground-truth mask.
///
/// AllWords replaces and flags every gendered word; SubjectOnly only the
/// subject-linked ones. When the NonBinary subject becomes "they", the
/// governed verb is re-inflected and flagged as well. Multi-word forms expand
/// into several flagged words. Replacements copy the capitalisation of the
/// replaced word's first letter.
///
/// Throws UnknownLexemeError for a gendered word without a rule and
/// AgreementError when agreement is needed but no verb is annotated.
LabeledSentence apply_gender_variant(const AnnotatedSentence& annotated, GenderVariant target,
                                     const Lexicon& lexicon, Scope scope);

/// Splits plain text into words, with punctuation as separate words.
std::vector<std::string> split_words(std::string_view text);

}  // namespace attrbench::corpus
