#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "attrbench/corpus.hpp"
#include "attrbench/lexicon.hpp"

namespace attrbench::corpus {

/// Annotated base sentences drawn from bundled skeletons (subject, verb,
/// object phrase, optional adverbials). Deterministic per seed; base
/// sentences are distinct, and every one yields three all-words variants with
/// equal co-occurrence contributions, so the all-words corpus has
/// bias_C = 1/3 per class by construction.
///
/// Throws EmptyCorpusError for n_base == 0 and ArgumentError when the lexicon
/// lacks the pronoun, possessive or common-noun rules the skeletons need.
std::vector<AnnotatedSentence> generate_base_sentences(std::size_t n_base, std::uint64_t seed,
                                                       const Lexicon& lexicon);

/// Three LabeledSentences per base sentence, in F, M, NB order.
std::vector<LabeledSentence> expand_variants(std::span<const AnnotatedSentence> base, const Lexicon& lexicon,
                                             Scope scope);

/// Unsplit bundle of 3 * n_base sentences.
DatasetBundle generate_template_corpus(std::size_t n_base, std::uint64_t seed, const Lexicon& lexicon,
                                       Scope scope);

}  // namespace attrbench::corpus
