#include "attrbench/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "attrbench/errors.hpp"

namespace attrbench::corpus {

std::string_view builtin_lexicon_text() noexcept;  // generated from data/lexicon.txt

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_on_spaces(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

bool starts_upper(std::string_view w) { return !w.empty() && std::isupper(static_cast<unsigned char>(w[0])); }

std::string capitalized(std::string w) {
  if (!w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

const char* role_name(WordRole r) noexcept {
  switch (r) {
    case WordRole::Pronoun: return "Pronoun";
    case WordRole::Possessive: return "Possessive";
    case WordRole::CommonNoun: return "CommonNoun";
    case WordRole::ProperNamePlaceholder: return "ProperNamePlaceholder";
  }
  return "?";
}

WordRole role_from_string(std::string_view s) {
  if (s == "Pronoun") return WordRole::Pronoun;
  if (s == "Possessive") return WordRole::Possessive;
  if (s == "CommonNoun") return WordRole::CommonNoun;
  if (s == "ProperNamePlaceholder") return WordRole::ProperNamePlaceholder;
  throw ValidationError("unknown lexicon role '" + std::string(s) + "'");
}

const std::string& LexiconRule::form(GenderVariant v) const noexcept {
  switch (v) {
    case GenderVariant::Female: return female_form;
    case GenderVariant::Male: return male_form;
    case GenderVariant::NonBinary: break;
  }
  return nonbinary_form;
}

bool LexiconRule::has_form(std::string_view lowercased) const noexcept {
  return female_form == lowercased || male_form == lowercased || nonbinary_form == lowercased;
}

bool LexiconRule::single_word() const noexcept {
  for (const auto* f : {&female_form, &male_form, &nonbinary_form})
    if (f->find(' ') != std::string::npos) return false;
  return true;
}

Lexicon::Lexicon(std::vector<LexiconRule> rules) : rules_(std::move(rules)) {
  for (auto& r : rules_) {
    r.female_form = to_lower(r.female_form);
    r.male_form = to_lower(r.male_form);
    r.nonbinary_form = to_lower(r.nonbinary_form);
    if (r.female_form.empty() || r.male_form.empty() || r.nonbinary_form.empty()) {
      throw ValidationError("lexicon rule with an empty form");
    }
    if (r.female_form == r.male_form || r.female_form == r.nonbinary_form || r.male_form == r.nonbinary_form) {
      throw ValidationError("lexicon rule forms are not distinct: " + r.female_form + "|" + r.male_form + "|" +
                            r.nonbinary_form);
    }
  }
}

Lexicon Lexicon::parse(std::string_view text) {
  std::vector<LexiconRule> rules;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t bar; (bar = line.find('|', start)) != std::string::npos; start = bar + 1)
      fields.push_back(trim(std::string_view(line).substr(start, bar - start)));
    fields.push_back(trim(std::string_view(line).substr(start)));
    if (fields.size() != 4) throw ParseError(line_no, "expected female|male|nonbinary|role");
    try {
      rules.push_back({fields[0], fields[1], fields[2], role_from_string(fields[3])});
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return Lexicon(std::move(rules));
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string_view Lexicon::builtin_text() { return builtin_lexicon_text(); }

const Lexicon& Lexicon::builtin() {
  static const Lexicon lexicon = parse(builtin_lexicon_text());
  return lexicon;
}

std::string Lexicon::to_text() const {
  std::string out = "# female|male|nonbinary|role\n";
  for (const auto& r : rules_) {
    out += r.female_form + "|" + r.male_form + "|" + r.nonbinary_form + "|" + role_name(r.role) + "\n";
  }
  return out;
}

const LexiconRule* Lexicon::find(std::string_view word, WordRole role) const noexcept {
  const std::string lower = to_lower(word);
  for (const auto& r : rules_) {
    if (r.role != role) continue;
    if (role == WordRole::ProperNamePlaceholder || r.has_form(lower)) return &r;
  }
  return nullptr;
}

WordSet Lexicon::gender_terms() const {
  WordSet out;
  for (const auto& r : rules_)
    for (const auto* f : {&r.female_form, &r.male_form, &r.nonbinary_form})
      for (auto& w : split_on_spaces(*f)) out.insert(w);
  return out;
}

std::string verb_agreement(std::string_view verb, GenderVariant target) {
  if (target != GenderVariant::NonBinary) return std::string(verb);
  static const std::map<std::string, std::string, std::less<>> irregular = {
      {"is", "are"}, {"has", "have"}, {"does", "do"}, {"was", "were"}, {"goes", "go"},
  };
  const std::string lower = to_lower(verb);
  std::string out;
  if (auto it = irregular.find(lower); it != irregular.end()) {
    out = it->second;
  } else if (lower.size() > 3 && ends_with(lower, "ies") && !is_vowel(lower[lower.size() - 4])) {
    out = lower.substr(0, lower.size() - 3) + "y";
  } else if (ends_with(lower, "sses") || ends_with(lower, "shes") || ends_with(lower, "ches") ||
             ends_with(lower, "xes") || ends_with(lower, "zes") || ends_with(lower, "oes")) {
    out = lower.substr(0, lower.size() - 2);
  } else if (lower.size() > 1 && ends_with(lower, "s") && !ends_with(lower, "ss")) {
    out = lower.substr(0, lower.size() - 1);
  } else {
    out = lower;
  }
  return starts_upper(verb) ? capitalized(out) : out;
}

LabeledSentence apply_gender_variant(const AnnotatedSentence& annotated, GenderVariant target,
                                     const Lexicon& lexicon, Scope scope) {
  std::vector<const LexiconRule*> rules(annotated.words.size(), nullptr);
  bool subject_becomes_they = false;
  bool has_verb = false;
  for (std::size_t i = 0; i < annotated.words.size(); ++i) {
    const auto& w = annotated.words[i];
    if (w.kind == Annotation::SubjectVerb) has_verb = true;
    if (w.kind != Annotation::Gendered) continue;
    rules[i] = lexicon.find(w.text, w.role);
    if (rules[i] == nullptr) {
      throw UnknownLexemeError("no " + std::string(role_name(w.role)) + " rule for '" + w.text +
                               "' (sentence_idx " + std::to_string(annotated.sentence_idx) + ")");
    }
    if (w.subject && target == GenderVariant::NonBinary && rules[i]->nonbinary_form == "they") {
      subject_becomes_they = true;
    }
  }
  if (subject_becomes_they && !has_verb) {
    throw AgreementError("non-binary subject needs an annotated verb (sentence_idx " +
                         std::to_string(annotated.sentence_idx) + ")");
  }

  LabeledSentence out;
  out.variant = target;
  out.sentence_idx = annotated.sentence_idx;
  auto emit = [&](std::string word, bool flagged) {
    out.words.push_back(std::move(word));
    out.ground_truth.push_back(flagged ? 1 : 0);
  };

  for (std::size_t i = 0; i < annotated.words.size(); ++i) {
    const auto& w = annotated.words[i];
    switch (w.kind) {
      case Annotation::Plain:
        emit(w.text, false);
        break;
      case Annotation::SubjectVerb:
        if (subject_becomes_they) {
          emit(verb_agreement(w.text, target), true);
        } else {
          emit(w.text, false);
        }
        break;
      case Annotation::Gendered: {
        const bool replace = scope == Scope::AllWords || w.subject;
        if (!replace) {
          // An unaltered multi-word form still occupies several words.
          for (auto& part : split_on_spaces(w.text)) emit(std::move(part), false);
          break;
        }
        const bool upper = starts_upper(w.text);
        for (auto& part : split_on_spaces(rules[i]->form(target))) emit(upper ? capitalized(part) : part, true);
        break;
      }
    }
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c) && c != '\'' && c != '-') {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      cur += static_cast<char>(c);
    }
  }
  flush();
  return out;
}

}  // namespace attrbench::corpus
