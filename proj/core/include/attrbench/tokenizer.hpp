#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "attrbench/corpus.hpp"

namespace attrbench::model {

using TokenId = std::size_t;

/// Word-level vocabulary with greedy longest-match sub-word fallback.
///
/// The piece inventory holds every training word as a word-initial piece, the
/// same strings as "##" continuation pieces, and single characters in both
/// positions. Words are lowercased. A character outside the inventory becomes
/// the UNK piece.
class Tokenizer {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kMask = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr std::string_view kContinuation = "##";

  struct Encoding {
    std::vector<TokenId> ids;
    std::vector<std::size_t> alignment;  // token index -> word index
  };

  Tokenizer();
  static Tokenizer build(std::span<const corpus::LabeledSentence> training);
  static Tokenizer from_words(std::vector<std::string> words);
  /// Restores a tokenizer from its full piece table (checkpoint loading).
  static Tokenizer from_pieces(std::vector<std::string> pieces);

  /// Throws ArgumentError for an empty word list.
  Encoding encode(std::span<const std::string> words) const;
  Encoding tokenize(const corpus::LabeledSentence& sentence) const { return encode(sentence.words); }

  std::vector<TokenId> segment(std::string_view word) const;
  bool in_vocabulary(std::string_view word) const;

  const std::string& piece(TokenId id) const { return pieces_.at(id); }
  /// Pieces of `ids` joined with continuation markers removed.
  std::string detokenize(std::span<const TokenId> ids) const;
  std::size_t size() const noexcept { return pieces_.size(); }
  const std::vector<std::string>& pieces() const noexcept { return pieces_; }
  static bool is_special(TokenId id) noexcept { return id <= kUnk; }

  friend bool operator==(const Tokenizer& a, const Tokenizer& b) { return a.pieces_ == b.pieces_; }

 private:
  void index_pieces();
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> ids_;
};

}  // namespace attrbench::model
