#include "attrbench/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "attrbench/errors.hpp"
#include "attrbench/random.hpp"

namespace attrbench::corpus {

const char* variant_name(GenderVariant v) noexcept {
  switch (v) {
    case GenderVariant::Female: return "F";
    case GenderVariant::Male: return "M";
    case GenderVariant::NonBinary: return "NB";
  }
  return "?";
}

GenderVariant variant_from_target(int target) {
  if (target < 0 || target > 2) throw ValidationError("target " + std::to_string(target) + " is not in {0, 1, 2}");
  return static_cast<GenderVariant>(target);
}

const char* scope_name(Scope s) noexcept { return s == Scope::AllWords ? "all" : "subject"; }

const char* scope_directory(Scope s) noexcept { return s == Scope::AllWords ? "gender_all" : "gender_subj"; }

Scope scope_from_string(std::string_view s) {
  if (s == "all" || s == "gender_all" || s == "AllWords") return Scope::AllWords;
  if (s == "subject" || s == "gender_subj" || s == "SubjectOnly") return Scope::SubjectOnly;
  throw ArgumentError("unknown scope '" + std::string(s) + "'");
}

void validate(const LabeledSentence& s) {
  const std::string who = "sentence_idx " + std::to_string(s.sentence_idx);
  if (s.words.size() != s.ground_truth.size()) {
    throw ValidationError(who + ": " + std::to_string(s.words.size()) + " words but " +
                          std::to_string(s.ground_truth.size()) + " ground-truth flags");
  }
  bool any = false;
  for (auto f : s.ground_truth) {
    if (f > 1) throw ValidationError(who + ": ground-truth flag is not 0/1");
    any = any || f == 1;
  }
  if (!any) throw ValidationError(who + ": ground truth marks no word");
}

std::vector<LabeledSentence> DatasetBundle::all() const {
  std::vector<LabeledSentence> out = train;
  out.insert(out.end(), test.begin(), test.end());
  return out;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::set<std::string> vocabulary_of(std::span<const LabeledSentence> sentences) {
  std::set<std::string> out;
  for (const auto& s : sentences)
    for (const auto& w : s.words) out.insert(to_lower(w));
  return out;
}

// --- JSONL ----------------------------------------------------------------

namespace {

LabeledSentence from_json(const nlohmann::json& j, std::size_t line) {
  LabeledSentence s;
  try {
    for (const auto& w : j.at("sentence")) s.words.push_back(w.get<std::string>());
    for (const auto& g : j.at("ground_truth")) {
      const double v = g.is_boolean() ? (g.get<bool>() ? 1.0 : 0.0) : g.get<double>();
      if (v != 0.0 && v != 1.0) throw ParseError(line, "ground_truth values must be 0.0 or 1.0");
      s.ground_truth.push_back(v == 1.0 ? 1 : 0);
    }
    const auto idx = j.at("sentence_idx").get<std::int64_t>();
    if (idx < 0) throw ParseError(line, "sentence_idx must be non-negative");
    s.sentence_idx = static_cast<std::uint64_t>(idx);
    s.variant = variant_from_target(j.at("target").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(line, e.what());
  }
  validate(s);
  return s;
}

bool blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::vector<LabeledSentence> parse_jsonl(std::string_view text) {
  std::vector<LabeledSentence> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (blank(line)) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, e.what());
    }
    if (!j.is_object()) throw ParseError(line_no, "record is not a JSON object");
    out.push_back(from_json(j, line_no));
  }
  return out;
}

std::vector<LabeledSentence> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_jsonl(buf.str());
}

std::string to_jsonl_line(const LabeledSentence& s) {
  std::string out = "{\"sentence\": [";
  for (std::size_t i = 0; i < s.words.size(); ++i) {
    if (i) out += ", ";
    out += nlohmann::json(s.words[i]).dump();
  }
  out += "], \"ground_truth\": [";
  for (std::size_t i = 0; i < s.ground_truth.size(); ++i) {
    if (i) out += ", ";
    out += s.ground_truth[i] ? "1.0" : "0.0";
  }
  out += "], \"target\": " + std::to_string(s.target());
  out += ", \"sentence_idx\": " + std::to_string(s.sentence_idx) + "}";
  return out;
}

void save_jsonl(std::span<const LabeledSentence> sentences, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& s : sentences) {
    validate(s);
    out << to_jsonl_line(s) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

// --- splitting ------------------------------------------------------------

DatasetBundle split_train_test(const DatasetBundle& bundle, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ArgumentError("train fraction must lie in (0, 1), got " + std::to_string(train_fraction));
  }
  const auto sentences = bundle.all();
  std::vector<std::uint64_t> ids;
  for (const auto& s : sentences) ids.push_back(s.sentence_idx);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  Rng rng(seed);
  rng.shuffle(std::span<std::uint64_t>(ids));
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * double(ids.size())));
  const std::set<std::uint64_t> train_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));

  DatasetBundle out;
  out.scope = bundle.scope;
  out.vocabulary = bundle.vocabulary;
  for (const auto& s : sentences) (train_ids.contains(s.sentence_idx) ? out.train : out.test).push_back(s);
  auto order = [](const LabeledSentence& a, const LabeledSentence& b) {
    return std::pair(a.sentence_idx, a.target()) < std::pair(b.sentence_idx, b.target());
  };
  std::stable_sort(out.train.begin(), out.train.end(), order);
  std::stable_sort(out.test.begin(), out.test.end(), order);
  return out;
}

std::vector<LabeledSentence> filter_class(std::span<const LabeledSentence> sentences, GenderVariant v) {
  std::vector<LabeledSentence> out;
  for (const auto& s : sentences)
    if (s.variant == v) out.push_back(s);
  return out;
}

// --- co-occurrence bias ---------------------------------------------------

std::uint64_t cooccurrence(std::span<const LabeledSentence> sentences, const WordSet& gender_terms,
                           const WordSet& vocabulary) {
  std::uint64_t total = 0;
  for (const auto& s : sentences) {
    std::set<std::string> present;
    for (const auto& w : s.words) present.insert(to_lower(w));
    std::uint64_t a = 0;
    std::uint64_t v = 0;
    for (const auto& w : present) {
      a += gender_terms.contains(w);
      v += vocabulary.contains(w);
    }
    total += a * v;
  }
  return total;
}

WordSet non_gender_vocabulary(const WordSet& words, const WordSet& gender_terms) {
  WordSet out;
  std::set_difference(words.begin(), words.end(), gender_terms.begin(), gender_terms.end(),
                      std::inserter(out, out.end()));
  return out;
}

ClassDecomposition decompose(std::span<const LabeledSentence> sentences) {
  ClassDecomposition out;
  for (const auto& s : sentences) out[static_cast<std::size_t>(s.variant)].push_back(s);
  return out;
}

std::array<double, kNumClasses> bias_score(const ClassDecomposition& decomposition, const WordSet& gender_terms,
                                           const WordSet& vocabulary) {
  std::array<std::uint64_t, kNumClasses> counts{};
  std::uint64_t total = 0;
  for (std::size_t g = 0; g < kNumClasses; ++g) {
    counts[g] = cooccurrence(decomposition[g], gender_terms, vocabulary);
    total += counts[g];
  }
  if (total == 0) throw UndefinedBiasError("co-occurrence is zero for every class");
  std::array<double, kNumClasses> out{};
  for (std::size_t g = 0; g < kNumClasses; ++g) out[g] = double(counts[g]) / double(total);
  return out;
}

std::array<double, kNumClasses> bias_score(const ClassDecomposition& decomposition, const WordSet& gender_terms) {
  WordSet words;
  for (const auto& part : decomposition) {
    auto w = vocabulary_of(part);
    words.insert(w.begin(), w.end());
  }
  return bias_score(decomposition, gender_terms, non_gender_vocabulary(words, gender_terms));
}

}  // namespace attrbench::corpus
