#include "attrbench/tokenizer.hpp"

#include <algorithm>
#include <set>

#include "attrbench/errors.hpp"

namespace attrbench::model {

Tokenizer::Tokenizer() : pieces_{"[PAD]", "[MASK]", "[UNK]"} { index_pieces(); }

void Tokenizer::index_pieces() {
  ids_.clear();
  for (TokenId i = 0; i < pieces_.size(); ++i) {
    if (!ids_.emplace(pieces_[i], i).second) throw ValidationError("duplicate tokenizer piece '" + pieces_[i] + "'");
  }
}

Tokenizer Tokenizer::from_words(std::vector<std::string> words) {
  std::set<std::string> vocab;
  for (auto& w : words) vocab.insert(corpus::to_lower(w));
  std::set<std::string> chars;
  for (const auto& w : vocab)
    for (char c : w) chars.insert(std::string(1, c));

  Tokenizer t;
  std::set<std::string> seen(t.pieces_.begin(), t.pieces_.end());
  auto add = [&](std::string p) {
    if (seen.insert(p).second) t.pieces_.push_back(std::move(p));
  };
  for (const auto& w : vocab) add(w);
  for (const auto& w : vocab) add(std::string(kContinuation) + w);
  for (const auto& c : chars) add(c);
  for (const auto& c : chars) add(std::string(kContinuation) + c);
  t.index_pieces();
  return t;
}

Tokenizer Tokenizer::build(std::span<const corpus::LabeledSentence> training) {
  std::vector<std::string> words;
  for (const auto& s : training) words.insert(words.end(), s.words.begin(), s.words.end());
  return from_words(std::move(words));
}

Tokenizer Tokenizer::from_pieces(std::vector<std::string> pieces) {
  if (pieces.size() < 3 || pieces[kPad] != "[PAD]" || pieces[kMask] != "[MASK]" || pieces[kUnk] != "[UNK]") {
    throw ValidationError("piece table does not start with [PAD], [MASK], [UNK]");
  }
  Tokenizer t;
  t.pieces_ = std::move(pieces);
  t.index_pieces();
  return t;
}

bool Tokenizer::in_vocabulary(std::string_view word) const {
  return ids_.contains(corpus::to_lower(word));
}

std::vector<TokenId> Tokenizer::segment(std::string_view word) const {
  const std::string w = corpus::to_lower(word);
  if (auto it = ids_.find(w); it != ids_.end() && !is_special(it->second)) return {it->second};

  std::vector<TokenId> out;
  std::size_t start = 0;
  while (start < w.size()) {
    const std::string prefix = start == 0 ? std::string() : std::string(kContinuation);
    TokenId found = kUnk;
    std::size_t end = w.size();
    for (; end > start; --end) {
      auto it = ids_.find(prefix + w.substr(start, end - start));
      if (it != ids_.end() && !is_special(it->second)) {
        found = it->second;
        break;
      }
    }
    if (found == kUnk) end = start + 1;
    out.push_back(found);
    start = end;
  }
  return out;
}

Tokenizer::Encoding Tokenizer::encode(std::span<const std::string> words) const {
  if (words.empty()) throw ArgumentError("cannot tokenize an empty sentence");
  Encoding enc;
  for (std::size_t i = 0; i < words.size(); ++i) {
    for (TokenId id : segment(words[i])) {
      enc.ids.push_back(id);
      enc.alignment.push_back(i);
    }
  }
  return enc;
}

std::string Tokenizer::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    const std::string& p = piece(id);
    if (p.starts_with(kContinuation)) {
      out += p.substr(kContinuation.size());
    } else {
      if (!out.empty()) out += ' ';
      out += p;
    }
  }
  return out;
}

}  // namespace attrbench::model
