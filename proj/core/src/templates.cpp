#include "attrbench/templates.hpp"

#include <array>
#include <set>
#include <string_view>
#include <unordered_set>

#include "attrbench/errors.hpp"
#include "attrbench/random.hpp"

namespace attrbench::corpus {

namespace {

using Words = std::vector<std::string_view>;

const Words kFemaleNames = {"Mary", "Anna", "Emma", "Alice", "Clara", "Jane", "Lucy", "Rose", "Sarah", "Helen",
                            "Judith", "Elena", "Margaret", "Nora", "Ruth"};
const Words kMaleNames = {"Paul", "John", "Peter", "Tom", "David", "James", "Henry", "Oliver", "Victor", "Arthur",
                          "Samuel", "Edgar", "Robert", "Hugo", "Walter"};

const Words kPersonVerbs = {"loves",    "visits",    "admires",  "helps",    "calls",   "remembers", "meets",
                            "follows",  "greets",    "teaches",  "misses",   "trusts",  "thanks",    "watches",
                            "finds",    "protects",  "forgives", "hugs",     "answers", "invites",   "warns",
                            "praises",  "blames",    "rescues",  "obeys",    "joins",   "ignores",   "questions",
                            "comforts", "supports",  "defends",  "guides",   "serves",  "carries",   "marries",
                            "betrays",  "recognizes", "believes", "accuses", "fears"};
const Words kThingVerbs = {"touches", "reads",   "opens",    "paints",  "cleans", "buys",     "sells",
                           "fixes",   "washes",  "writes",   "hides",   "keeps",  "loses",    "studies",
                           "describes", "burns", "builds",   "repairs", "signs",  "holds",    "drops",
                           "brings",  "takes",   "sends",    "wants",   "needs",  "checks",   "prepares",
                           "grabs",   "steals",  "examines", "returns", "breaks", "polishes", "guards",
                           "does",    "has",     "is",       "goes"};
// Verbs that do not take a plain noun object are used with fixed complements.
const Words kCopulaComplements = {"happy", "tired", "afraid", "alone", "ready", "angry", "curious", "silent"};
const Words kGoComplements = {"home", "away", "outside", "upstairs", "abroad", "north"};
const Words kDoComplements = {"the work", "the dishes", "the laundry", "the shopping", "the cooking"};

const Words kThings = {"letter",  "book",   "door",  "window", "house",  "car",    "garden", "ring",   "sword",
                       "map",     "horse",  "bread", "table",  "picture", "key",   "coat",   "ship",   "lamp",
                       "box",     "note",   "gift",  "violin", "piano",  "heart",  "crown",  "diary",  "knife",
                       "bag",     "clock",  "basket", "candle", "bottle", "hat",   "boat",   "painting", "cup",
                       "blanket", "jewel",  "mirror", "fence"};
const Words kAdjectives = {"old",    "small",  "red",   "heavy", "strange", "broken", "golden", "new",
                           "dusty",  "little", "secret", "wooden", "beautiful", "dark", "quiet", "precious"};
const Words kFillers = {"in the kitchen", "near the car",     "at the market",    "after dinner",    "every morning",
                        "with great care", "on the train",    "in the garden",    "before the storm", "during the winter",
                        "at night",        "in the city",     "by the river",     "in the library",   "at the office",
                        "on the farm",     "in the evening",  "at the station",   "after the war",    "in the village",
                        "at the church",   "near the bridge", "in the forest",    "at the workshop",  "on the ship",
                        "in the garage",   "at school",       "in the hospital",  "once again",       "without a word"};

struct RuleSet {
  const LexiconRule* subject_pronoun = nullptr;
  const LexiconRule* object_pronoun = nullptr;
  const LexiconRule* possessive = nullptr;
  const LexiconRule* name = nullptr;
  std::vector<const LexiconRule*> nouns;
};

RuleSet select_rules(const Lexicon& lexicon) {
  RuleSet rs;
  for (const auto& r : lexicon.rules()) {
    switch (r.role) {
      case WordRole::Pronoun:
        if (r.nonbinary_form == "they") rs.subject_pronoun = &r;
        if (r.nonbinary_form == "them") rs.object_pronoun = &r;
        break;
      case WordRole::Possessive:
        if (!rs.possessive && r.single_word()) rs.possessive = &r;
        break;
      case WordRole::ProperNamePlaceholder:
        if (!rs.name) rs.name = &r;
        break;
      case WordRole::CommonNoun:
        // Multi-word forms change the word count of one variant only.
        if (r.single_word()) rs.nouns.push_back(&r);
        break;
    }
  }
  if (!rs.subject_pronoun || !rs.object_pronoun || !rs.possessive || !rs.name || rs.nouns.empty()) {
    throw ArgumentError("lexicon lacks the subject/object pronoun, possessive, name or common-noun rules");
  }
  return rs;
}

GenderVariant binary_gender(Rng& rng) { return rng.index(2) == 0 ? GenderVariant::Female : GenderVariant::Male; }

std::string cap(std::string_view w) {
  std::string s(w);
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

void add_plain(std::vector<AnnotatedWord>& out, std::string_view phrase) {
  for (auto& w : split_words(phrase)) out.push_back(AnnotatedWord::plain(std::move(w)));
}

class SentenceBuilder {
 public:
  SentenceBuilder(const RuleSet& rules, Rng& rng) : rules_(rules), rng_(rng) {}

  std::vector<AnnotatedWord> build() {
    std::vector<AnnotatedWord> out;
    const GenderVariant subject_gender = binary_gender(rng_);
    subject(out, subject_gender);

    const auto shape = rng_.index(7);
    if (shape < 3) {
      out.push_back(AnnotatedWord::verb(std::string(rng_.pick(kPersonVerbs))));
      person_object(out, subject_gender);
    } else {
      const std::string_view verb = rng_.pick(kThingVerbs);
      out.push_back(AnnotatedWord::verb(std::string(verb)));
      if (verb == "is") {
        add_plain(out, rng_.pick(kCopulaComplements));
      } else if (verb == "goes") {
        add_plain(out, rng_.pick(kGoComplements));
      } else if (verb == "does") {
        add_plain(out, rng_.pick(kDoComplements));
      } else {
        thing_object(out, subject_gender);
      }
    }
    const auto fillers = rng_.index(3);
    for (std::size_t i = 0; i < fillers; ++i) {
      if (rng_.index(4) == 0) {
        companion(out);
      } else {
        add_plain(out, rng_.pick(kFillers));
      }
    }
    out.push_back(AnnotatedWord::plain("."));
    return out;
  }

 private:
  std::string form(const LexiconRule* r, GenderVariant g) const { return r->form(g); }

  void subject(std::vector<AnnotatedWord>& out, GenderVariant g) {
    switch (rng_.index(3)) {
      case 0:
        out.push_back(AnnotatedWord::gendered(cap(form(rules_.subject_pronoun, g)), WordRole::Pronoun, true));
        break;
      case 1: {
        const auto& names = g == GenderVariant::Female ? kFemaleNames : kMaleNames;
        out.push_back(AnnotatedWord::gendered(std::string(rng_.pick(names)), WordRole::ProperNamePlaceholder, true));
        break;
      }
      default:
        out.push_back(AnnotatedWord::plain("The"));
        out.push_back(AnnotatedWord::gendered(form(rng_.pick(rules_.nouns), g), WordRole::CommonNoun, true));
        break;
    }
  }

  // Possessive referring back to the subject, followed by a kin noun that keeps its own gender.
  void own_relative(std::vector<AnnotatedWord>& out, GenderVariant subject_gender) {
    out.push_back(AnnotatedWord::gendered(form(rules_.possessive, subject_gender), WordRole::Possessive, true));
    out.push_back(AnnotatedWord::gendered(form(rng_.pick(rules_.nouns), binary_gender(rng_)),
                                          WordRole::CommonNoun, false));
  }

  void person_object(std::vector<AnnotatedWord>& out, GenderVariant subject_gender) {
    switch (rng_.index(3)) {
      case 0:
        own_relative(out, subject_gender);
        break;
      case 1:
        out.push_back(AnnotatedWord::plain("the"));
        out.push_back(AnnotatedWord::gendered(form(rng_.pick(rules_.nouns), binary_gender(rng_)),
                                              WordRole::CommonNoun, false));
        break;
      default:
        out.push_back(
            AnnotatedWord::gendered(form(rules_.object_pronoun, binary_gender(rng_)), WordRole::Pronoun, false));
        break;
    }
  }

  void thing_object(std::vector<AnnotatedWord>& out, GenderVariant subject_gender) {
    switch (rng_.index(4)) {
      case 0:
        out.push_back(AnnotatedWord::plain(rng_.index(2) ? "the" : "a"));
        if (rng_.index(2)) out.push_back(AnnotatedWord::plain(std::string(rng_.pick(kAdjectives))));
        out.push_back(AnnotatedWord::plain(std::string(rng_.pick(kThings))));
        break;
      case 1:
        out.push_back(
            AnnotatedWord::gendered(form(rules_.possessive, subject_gender), WordRole::Possessive, true));
        if (rng_.index(2)) out.push_back(AnnotatedWord::plain(std::string(rng_.pick(kAdjectives))));
        out.push_back(AnnotatedWord::plain(std::string(rng_.pick(kThings))));
        break;
      default:
        out.push_back(AnnotatedWord::plain("the"));
        out.push_back(AnnotatedWord::plain(std::string(rng_.pick(kThings))));
        out.push_back(AnnotatedWord::plain("of"));
        own_relative(out, subject_gender);
        break;
    }
  }

  // "with the queen" / "with him": a gendered word not linked to the subject.
  void companion(std::vector<AnnotatedWord>& out) {
    out.push_back(AnnotatedWord::plain("with"));
    if (rng_.index(2)) {
      out.push_back(AnnotatedWord::plain("the"));
      out.push_back(AnnotatedWord::gendered(form(rng_.pick(rules_.nouns), binary_gender(rng_)),
                                            WordRole::CommonNoun, false));
    } else {
      out.push_back(
          AnnotatedWord::gendered(form(rules_.object_pronoun, binary_gender(rng_)), WordRole::Pronoun, false));
    }
  }

  const RuleSet& rules_;
  Rng& rng_;
};

std::uint64_t contribution(const LabeledSentence& s, const WordSet& gender_terms) {
  std::set<std::string> present;
  for (const auto& w : s.words) present.insert(to_lower(w));
  std::uint64_t a = 0;
  for (const auto& w : present) a += gender_terms.contains(w);
  return a * (present.size() - a);
}

// Proper names become pronouns in every variant, so two bases that differ
// only by name are duplicates. The subject-only female rendering fixes
// everything the variants depend on.
std::string key_of(const AnnotatedSentence& s, const Lexicon& lexicon) {
  std::string k;
  for (const auto& w : apply_gender_variant(s, GenderVariant::Female, lexicon, Scope::SubjectOnly).words) {
    k += to_lower(w) + ' ';
  }
  return k;
}

}  // namespace

std::vector<AnnotatedSentence> generate_base_sentences(std::size_t n_base, std::uint64_t seed,
                                                       const Lexicon& lexicon) {
  if (n_base == 0) throw EmptyCorpusError("template corpus needs at least one base sentence");
  const RuleSet rules = select_rules(lexicon);
  const WordSet gender_terms = lexicon.gender_terms();

  Rng rng(seed);
  SentenceBuilder builder(rules, rng);
  std::unordered_set<std::string> seen;
  std::vector<AnnotatedSentence> out;
  const std::size_t max_attempts = 1000 * n_base + 1000;
  for (std::size_t attempt = 0; out.size() < n_base; ++attempt) {
    if (attempt >= max_attempts) {
      throw ArgumentError("template space exhausted after " + std::to_string(out.size()) + " base sentences");
    }
    AnnotatedSentence candidate{builder.build(), out.size()};
    if (!seen.insert(key_of(candidate, lexicon)).second) continue;
    std::array<std::uint64_t, kNumClasses> c{};
    for (auto v : kAllVariants) {
      c[static_cast<std::size_t>(v)] =
          contribution(apply_gender_variant(candidate, v, lexicon, Scope::AllWords), gender_terms);
    }
    if (c[0] != c[1] || c[1] != c[2]) continue;
    out.push_back(std::move(candidate));
  }
  return out;
}

std::vector<LabeledSentence> expand_variants(std::span<const AnnotatedSentence> base, const Lexicon& lexicon,
                                             Scope scope) {
  std::vector<LabeledSentence> out;
  out.reserve(3 * base.size());
  for (const auto& b : base)
    for (auto v : kAllVariants) out.push_back(apply_gender_variant(b, v, lexicon, scope));
  return out;
}

DatasetBundle generate_template_corpus(std::size_t n_base, std::uint64_t seed, const Lexicon& lexicon,
                                       Scope scope) {
  const auto base = generate_base_sentences(n_base, seed, lexicon);
  DatasetBundle bundle;
  bundle.scope = scope;
  bundle.train = expand_variants(base, lexicon, scope);
  bundle.vocabulary = vocabulary_of(bundle.train);
  return bundle;
}

}  // namespace attrbench::corpus
