// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "attrbench/attribution.hpp"
#include "attrbench/errors.hpp"
#include "attrbench/evaluation.hpp"
#include "attrbench/lexicon.hpp"
#include "attrbench/pipeline.hpp"
#include "attrbench/templates.hpp"
#include "attrbench/training.hpp"
#include "temp_dir.hpp"

using namespace attrbench;
using attribution::Method;
using numerics::Tensor;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;
int known_failures = 0;
std::set<int> selected;
std::set<int> known;

bool wanted(int id) { return selected.empty() || selected.contains(id); }

void report(int id, const char* name, const Outcome& o) {
  const bool expected = known.contains(id);
  std::printf("%s %d %s: %s%s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(),
              expected ? (o.pass ? " (listed as a known failure)" : " (known failure)") : "");
  std::fflush(stdout);
  if (o.pass) return;
  if (expected) {
    ++known_failures;
  } else {
    ++failures;
  }
}

void run(int id, const char* name, const std::function<Outcome()>& body) {
  if (!wanted(id)) return;
  try {
    report(id, name, body());
  } catch (const std::exception& e) {
    report(id, name, {false, std::string("exception: ") + e.what()});
  }
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// --- shared trained models --------------------------------------------------

struct TrainedTask {
  corpus::DatasetBundle bundle;
  model::Tokenizer tokenizer;
  model::OlaModel model;
  double accuracy = 0.0;
  std::size_t epochs_run = 0;
  double seconds = 0.0;
};

TrainedTask train_task(corpus::Scope scope) {
  const auto t0 = Clock::now();
  TrainedTask t;
  t.bundle = corpus::split_train_test(
      corpus::generate_template_corpus(1500, 7, corpus::Lexicon::builtin(), scope), 0.8, 1);
  t.tokenizer = model::Tokenizer::build(t.bundle.train);
  const model::OlaModel initial({t.tokenizer.size(), 64, 64, corpus::kNumClasses}, 1);
  model::TrainConfig tc;
  tc.epochs = 200;
  tc.seed = 1;
  auto result = model::train(initial, model::TrainScheme::CEA, tc, t.tokenizer, t.bundle);
  t.model = std::move(result.model);
  t.epochs_run = result.history.size() - 1;
  t.accuracy = model::evaluate_accuracy(t.model, t.tokenizer, t.bundle.test);
  t.seconds = seconds_since(t0);
  return t;
}

// --- independent oracles ----------------------------------------------------

// Exact Shapley values by enumerating all 2^d coalitions.
std::vector<double> shapley_oracle(const attribution::CoalitionValue& v, std::size_t d) {
  std::vector<double> fact(d + 1, 1.0);
  for (std::size_t i = 1; i <= d; ++i) fact[i] = fact[i - 1] * double(i);
  std::vector<double> phi(d, 0.0);
  for (std::size_t mask = 0; mask < (std::size_t{1} << d); ++mask) {
    std::vector<bool> z(d);
    std::size_t s = 0;
    for (std::size_t j = 0; j < d; ++j) s += (z[j] = (mask >> j) & 1);
    const double base = v(z);
    for (std::size_t j = 0; j < d; ++j) {
      if (z[j]) continue;
      z[j] = true;
      phi[j] += fact[s] * fact[d - s - 1] / fact[d] * (v(z) - base);
      z[j] = false;
    }
  }
  return phi;
}

// Minimal JSON reader covering objects, arrays, strings, numbers and literals.
struct JsonValue {
  std::variant<std::nullptr_t, bool, double, std::string, std::vector<JsonValue>,
               std::vector<std::pair<std::string, JsonValue>>>
      v;
};

class MiniJson {
 public:
  explicit MiniJson(const std::string& s) : s_(s) {}

  JsonValue document() {
    JsonValue out = value();
    skip();
    if (i_ != s_.size()) fail("trailing bytes");
    return out;
  }

 private:
  [[noreturn]] void fail(const std::string& why) { throw std::runtime_error("json: " + why); }
  void skip() {
    while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t' || s_[i_] == '\r' || s_[i_] == '\n')) ++i_;
  }
  char peek() {
    skip();
    if (i_ >= s_.size()) fail("unexpected end");
    return s_[i_];
  }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected ") + c);
    ++i_;
  }
  std::string string() {
    expect('"');
    std::string out;
    while (true) {
      if (i_ >= s_.size()) fail("unterminated string");
      const char c = s_[i_++];
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      const char e = s_[i_++];
      switch (e) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case '/': out += '/'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case 'b': out += '\b'; break;
        case 'f': out += '\f'; break;
        case 'u': {
          const unsigned cp = std::stoul(s_.substr(i_, 4), nullptr, 16);
          i_ += 4;
          if (cp < 0x80) {
            out += char(cp);
          } else if (cp < 0x800) {
            out += char(0xC0 | (cp >> 6));
            out += char(0x80 | (cp & 0x3F));
          } else {
            out += char(0xE0 | (cp >> 12));
            out += char(0x80 | ((cp >> 6) & 0x3F));
            out += char(0x80 | (cp & 0x3F));
          }
          break;
        }
        default: fail("bad escape");
      }
    }
  }
  JsonValue value() {
    const char c = peek();
    if (c == '{') {
      ++i_;
      std::vector<std::pair<std::string, JsonValue>> obj;
      if (peek() == '}') {
        ++i_;
        return {obj};
      }
      while (true) {
        std::string key = string();
        expect(':');
        obj.emplace_back(std::move(key), value());
        if (peek() == ',') {
          ++i_;
          continue;
        }
        expect('}');
        return {obj};
      }
    }
    if (c == '[') {
      ++i_;
      std::vector<JsonValue> arr;
      if (peek() == ']') {
        ++i_;
        return {arr};
      }
      while (true) {
        arr.push_back(value());
        if (peek() == ',') {
          ++i_;
          continue;
        }
        expect(']');
        return {arr};
      }
    }
    if (c == '"') return {string()};
    for (const auto& [lit, val] : {std::pair<const char*, JsonValue>{"true", {true}}, {"false", {false}},
                                   {"null", {nullptr}}}) {
      if (s_.compare(i_, std::strlen(lit), lit) == 0) {
        i_ += std::strlen(lit);
        return val;
      }
    }
    const std::size_t start = i_;
    while (i_ < s_.size() && std::strchr("+-0123456789.eE", s_[i_])) ++i_;
    if (start == i_) fail("unexpected character");
    return {std::stod(s_.substr(start, i_ - start))};
  }

  const std::string& s_;
  std::size_t i_ = 0;
};

const JsonValue* field(const JsonValue& obj, const std::string& key) {
  for (const auto& [k, v] : std::get<std::vector<std::pair<std::string, JsonValue>>>(obj.v))
    if (k == key) return &v;
  return nullptr;
}

// Record of one corpus line as read by the independent parser.
struct PlainRecord {
  std::vector<std::string> words;
  std::vector<double> flags;
  int target = -1;
  std::uint64_t idx = 0;
};

PlainRecord plain_record(const std::string& line) {
  const JsonValue doc = MiniJson(line).document();
  const auto& obj = std::get<std::vector<std::pair<std::string, JsonValue>>>(doc.v);
  if (obj.size() != 4) throw std::runtime_error("expected four fields");
  PlainRecord r;
  for (const auto& w : std::get<std::vector<JsonValue>>(field(doc, "sentence")->v))
    r.words.push_back(std::get<std::string>(w.v));
  for (const auto& f : std::get<std::vector<JsonValue>>(field(doc, "ground_truth")->v))
    r.flags.push_back(std::get<double>(f.v));
  r.target = int(std::get<double>(field(doc, "target")->v));
  r.idx = std::uint64_t(std::get<double>(field(doc, "sentence_idx")->v));
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- criteria ---------------------------------------------------------------

Outcome dataset_balance() {
  const auto t0 = Clock::now();
  const auto& lex = corpus::Lexicon::builtin();
  const auto bundle = corpus::generate_template_corpus(1610, 7, lex, corpus::Scope::AllWords);
  const auto bias = corpus::bias_score(corpus::decompose(bundle.all()), lex.gender_terms());
  const double secs = seconds_since(t0);
  double worst = 0;
  for (double b : bias) worst = std::max(worst, std::abs(b - 1.0 / 3.0));
  const bool ok = bundle.all().size() == 4830 && worst <= 1e-6 && secs < 5.0;
  return {ok, fmt("bias (%.9f", bias[0], bias[1], bias[2]) + fmt(", %.9f, %.9f)", bias[1], bias[2]) +
                  fmt(" max deviation %.3g, %.2f s", worst, secs)};
}

Outcome cea_accuracy(const TrainedTask& all, const TrainedTask& subj) {
  const bool ok = all.accuracy >= 0.95 && all.seconds < 600.0 && subj.accuracy < all.accuracy;
  return {ok, fmt("AllWords %.4f in %.1f s", all.accuracy, all.seconds) +
                  fmt(" (%.0f epochs); SubjectOnly %.4f", double(all.epochs_run), subj.accuracy)};
}

Outcome ma_oracle() {
  const std::vector<std::uint8_t> h = {1, 1, 0, 0};
  const double a = evaluation::mass_accuracy(h, std::vector<double>{0.9, 0, 0, 0.1});
  // Indicator explanation passed through the full normalization path.
  attribution::AttributionMap map;
  map.token_scores = {1, 1, 0, 0};
  map.alignment = {0, 1, 2, 3};
  map.n_words = 4;
  const double b = evaluation::mass_accuracy(h, evaluation::normalize_and_aggregate(map, 4));
  return {a == 0.9 && b == 1.0, fmt("MA = %.17g and %.17g", a, b)};
}

Outcome uniform_calibration(const TrainedTask& task) {
  const auto& test = task.bundle.test;
  double expected = 0;
  for (const auto& s : test)
    expected += double(std::count(s.ground_truth.begin(), s.ground_truth.end(), 1)) / double(s.size());
  expected /= double(test.size());

  const auto pattern = attribution::pattern_variant(attribution::tfidf_features(task.bundle.train), [&] {
    std::vector<int> t;
    for (const auto& s : task.bundle.train) t.push_back(s.target());
    return t;
  }());
  double observed = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    attribution::MethodOptions o;
    o.seed = seed;
    const attribution::Explainer ex(task.model, task.tokenizer, pattern, o, "CEA", 1);
    double sum = 0;
    for (const auto& s : test) {
      const auto map = ex.explain(s, Method::UniformRandom);
      sum += evaluation::mass_accuracy(s.ground_truth, evaluation::normalize_and_aggregate(map, s.size()));
    }
    observed += sum / double(test.size()) / 5.0;
  }
  return {std::abs(observed - expected) <= 0.02,
          fmt("mean MA %.5f vs mean(k/d) %.5f over %.0f sentences x 5 seeds", observed, expected,
              double(test.size()))};
}

Outcome gradient_check(const TrainedTask& task) {
  // Reverse-mode gradients of a random projection of the logits against
  // central differences of the forward pass, over every parameter tensor and
  // the input rows. The training loss is saturated on the trained model
  // (~1e-8), where differences of it are roundoff, so the logits are used.
  Rng rng(2024);
  const double eps = 1e-5;
  double worst = 0;
  std::size_t coords = 0;
  for (std::size_t trial = 0; trial < 20; ++trial) {
    const auto& s = task.bundle.test[rng.index(task.bundle.test.size())];
    const auto ids = task.tokenizer.tokenize(s).ids;
    model::OlaModel m = task.model;
    Tensor u({corpus::kNumClasses, 1});
    for (double& x : u.values()) x = rng.normal();

    numerics::Tape tape;
    const auto g = m.forward(tape, ids, {true, true, true}, true);
    const auto grads = numerics::grad(tape, tape.select(tape.matmul(g.logits, tape.constant(u)), 0));

    auto project = [&](const Tensor& logits) {
      double y = 0;
      for (std::size_t c = 0; c < corpus::kNumClasses; ++c) y += u[c] * logits[c];
      return y;
    };
    auto value_at = [&](const model::OlaModel& mm, const Tensor* rows) {
      if (!rows) return project(mm.logits(ids));
      numerics::Tape t;
      return project(t.value(mm.forward_embeddings(t, t.constant(*rows)).logits));
    };
    auto rel = [&](double analytic, double numeric) {
      ++coords;
      worst = std::max(worst, std::abs(analytic - numeric) /
                                  std::max({std::abs(analytic), std::abs(numeric), 1e-6}));
    };

    Tensor rows = m.embed(ids);
    const Tensor& g_rows = grads.wrt(g.embeddings);
    for (std::size_t k = 0; k < 24; ++k) {
      const std::size_t i = rng.index(rows.size());
      const double orig = rows[i];
      rows[i] = orig + eps;
      const double up = value_at(m, &rows);
      rows[i] = orig - eps;
      const double down = value_at(m, &rows);
      rows[i] = orig;
      rel(g_rows[i], (up - down) / (2 * eps));
    }
    for (std::size_t p = 1; p < model::kNumParams; ++p) {
      const Tensor& gp = grads.wrt(g.params[p]);
      for (std::size_t k = 0; k < 12; ++k) {
        Tensor& w = m.mutable_parameters()[p];
        const std::size_t i = rng.index(w.size());
        const double orig = w[i];
        w[i] = orig + eps;
        const double up = value_at(m, nullptr);
        w[i] = orig - eps;
        const double down = value_at(m, nullptr);
        w[i] = orig;
        rel(gp[i], (up - down) / (2 * eps));
      }
    }
  }
  return {worst < 1e-4, fmt("max relative error %.3g over %.0f coordinates, 20 sentences", worst, double(coords))};
}

Outcome ig_completeness(const TrainedTask& task) {
  const attribution::OlaExplainable ex(task.model);
  std::vector<double> medians;
  std::vector<double> errors;
  for (std::size_t steps : {64u, 128u, 256u}) {
    attribution::MethodOptions o;
    o.ig_steps = steps;
    errors.clear();
    for (std::size_t i = 0; i < 60 && i < task.bundle.test.size(); ++i) {
      const auto ids = task.tokenizer.tokenize(task.bundle.test[i]).ids;
      const std::size_t c = model::argmax(ex.predict(ids).data());
      Rng rng(i);
      const auto attr = attribution::gradient_attribution(ex, ids, Method::IntegratedGradients, c, o, rng);
      double sum = 0;
      for (double a : attr) sum += a;
      const double delta = attribution::score_embeddings(ex, ex.embed(ids), c) -
                           attribution::score_embeddings(ex, ex.baseline_embeddings(ids.size(), o.baseline), c);
      errors.push_back(std::abs(sum - delta));
    }
    medians.push_back(median(errors));
  }
  return {errors.size() >= 50 && medians[2] <= 1e-3,
          fmt("median |sum - delta| at 256 steps %.3g (max %.3g) over %.0f sentences", medians[2],
              *std::max_element(errors.begin(), errors.end()), double(errors.size())) +
              fmt("; medians at 64/128 steps %.3g / %.3g", medians[0], medians[1])};
}

Outcome kernel_shap_exact() {
  Rng rng(6);
  double worst = 0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> w(6);
    for (double& x : w) x = rng.normal();
    const double bias = rng.normal();
    const attribution::CoalitionValue v = [&](const std::vector<bool>& z) {
      double s = bias;
      for (std::size_t j = 0; j < 6; ++j) s += z[j] ? w[j] : 0.0;
      return s;
    };
    const auto exact = shapley_oracle(v, 6);
    const auto fit = attribution::kernel_shap(v, 6, 2048, rng);
    for (std::size_t j = 0; j < 6; ++j) worst = std::max(worst, std::abs(fit.coefficients[j] - exact[j]));
  }
  return {worst <= 1e-6, fmt("max |phi - phi_exact| %.3g over 10 random linear models", worst)};
}

struct PipelineRun {
  std::vector<evaluation::BenchmarkReport> reports;
  std::string csv, json, ladder;
  bool byte_identical = false;
  double seconds = 0;
};

PipelineRun run_pipeline(const std::filesystem::path& root) {
  const auto t0 = Clock::now();
  const auto config = pipeline::parse_config(R"({
    "dataset": { "n_base": 400, "scopes": ["AllWords"] },
    "training": { "seeds": [1, 2, 3, 4, 5] },
    "attribution": { "max_sentences": 60, "ig_steps": 32, "shap_samples": 512, "lime_samples": 300 }
  })");
  const pipeline::RunOptions opts{root, 1, false};
  pipeline::cmd_generate(config, opts);
  pipeline::cmd_train(config, opts);
  pipeline::cmd_attribute(config, opts);
  PipelineRun r;
  r.reports = pipeline::cmd_report(config, opts);
  const auto dir = pipeline::report_dir(root, corpus::Scope::AllWords);
  r.csv = slurp(dir / "report.csv");
  r.json = slurp(dir / "report.json");
  r.ladder = slurp(dir / "rma_ladder.txt");
  pipeline::cmd_report(config, opts);
  r.byte_identical = slurp(dir / "report.csv") == r.csv && slurp(dir / "report.json") == r.json &&
                     slurp(dir / "rma_ladder.txt") == r.ladder;
  r.seconds = seconds_since(t0);
  return r;
}

Outcome pattern_dominance(const PipelineRun& run) {
  const auto& report = run.reports.at(0);
  bool ok = true;
  std::string detail;
  for (const auto& scheme : {"ZS", "C", "CE", "CEA"}) {
    const auto* pv = report.cell(scheme, Method::PatternVariant);
    if (!pv) return {false, std::string("no PatternVariant cell for ") + scheme};
    double best_other = 0;
    std::string best_name;
    for (Method m : attribution::kAllMethods) {
      if (m == Method::PatternVariant) continue;
      const auto* c = report.cell(scheme, m);
      if (c->mean_ma > best_other) {
        best_other = c->mean_ma;
        best_name = attribution::method_name(m);
      }
    }
    ok = ok && pv->mean_ma >= best_other;
    detail += std::string(scheme) + fmt(" PV %.3f vs ", pv->mean_ma) + best_name + fmt(" %.3f; ", best_other);
  }
  return {ok, detail + fmt("pipeline %.0f s", run.seconds)};
}

Outcome rma_self_consistency(const PipelineRun& run) {
  bool ok = run.byte_identical;
  std::size_t zs = 0;
  for (const auto& c : run.reports.at(0).cells) {
    if (c.scheme != "ZS") continue;
    ++zs;
    ok = ok && c.rma.has_value() && *c.rma == 1.0;
  }
  return {ok && zs == attribution::kAllMethods.size(),
          fmt("%.0f ZS cells at RMA 1; regeneration byte-identical: ", double(zs)) +
              (run.byte_identical ? "yes" : "no")};
}

Outcome jsonl_conformance(const std::filesystem::path& root) {
  std::size_t lines = 0;
  for (const auto scope : {corpus::Scope::AllWords}) {
    for (const char* split : {"train.jsonl", "test.jsonl"}) {
      const auto path = pipeline::data_dir(root, scope) / split;
      const std::string bytes = slurp(path);
      const auto loaded = corpus::load_jsonl(path);
      std::istringstream in(bytes);
      std::string line;
      std::size_t i = 0;
      while (std::getline(in, line)) {
        const PlainRecord r = plain_record(line);
        if (i >= loaded.size()) return {false, "independent parser found extra records"};
        const auto& s = loaded[i++];
        std::vector<double> flags(s.ground_truth.begin(), s.ground_truth.end());
        if (r.words != s.words || r.flags != flags || r.target != s.target() || r.idx != s.sentence_idx)
          return {false, path.string() + ": record " + std::to_string(i) + " differs"};
        ++lines;
      }
      if (i != loaded.size()) return {false, "record count differs in " + path.string()};
      const auto copy = path.parent_path() / (std::string(split) + ".copy");
      corpus::save_jsonl(loaded, copy);
      if (slurp(copy) != bytes || corpus::load_jsonl(copy) != loaded)
        return {false, "load/save round trip changed " + path.string()};
    }
  }
  return {true, fmt("%.0f records parsed independently and round-tripped", double(lines))};
}

}  // namespace

// Usage: acceptance [--known-failure N]... [N]...
// Positional ids restrict the run to those criteria. A known failure still
// prints FAIL but does not change the exit status.
int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--known-failure" && i + 1 < argc) {
      known.insert(std::stoi(argv[++i]));
    } else {
      selected.insert(std::stoi(arg));
    }
  }

  run(1, "dataset balance", dataset_balance);
  run(3, "mass accuracy oracle", ma_oracle);
  run(8, "kernel shap exactness", kernel_shap_exact);

  std::optional<TrainedTask> all, subj;
  if (wanted(2) || wanted(4) || wanted(6) || wanted(7)) {
    try {
      all = train_task(corpus::Scope::AllWords);
      if (wanted(2)) subj = train_task(corpus::Scope::SubjectOnly);
    } catch (const std::exception& e) {
      std::printf("training failed: %s\n", e.what());
    }
  }
  auto with_model = [&](int id, const char* name, const std::function<Outcome()>& body) {
    if (!wanted(id)) return;
    if (!all) return report(id, name, {false, "no trained model"});
    run(id, name, body);
  };
  with_model(2, "OLA-CEA accuracy", [&] { return cea_accuracy(*all, *subj); });
  with_model(4, "uniform random calibration", [&] { return uniform_calibration(*all); });
  with_model(6, "gradient correctness", [&] { return gradient_check(*all); });
  with_model(7, "integrated gradients completeness", [&] { return ig_completeness(*all); });

  TempDir dir("attrbench-acceptance");
  std::optional<PipelineRun> pipe;
  if (wanted(5) || wanted(9) || wanted(10) || wanted(11)) {
    try {
      pipe = run_pipeline(dir.path());
    } catch (const std::exception& e) {
      std::printf("pipeline failed: %s\n", e.what());
    }
  }
  auto with_pipe = [&](int id, const char* name, const std::function<Outcome()>& body) {
    if (!wanted(id)) return;
    if (!pipe) return report(id, name, {false, "pipeline did not complete"});
    run(id, name, body);
  };
  with_pipe(5, "pattern variant dominance", [&] { return pattern_dominance(*pipe); });
  with_pipe(9, "RMA self-consistency", [&] { return rma_self_consistency(*pipe); });
  with_pipe(10, "JSONL conformance", [&] { return jsonl_conformance(dir.path()); });
  with_pipe(11, "RMA ladder (informational)", [&] { return Outcome{true, "\n" + pipe->ladder}; });

  std::printf("%d criteria failed, %d known failures\n", failures, known_failures);
  return failures == 0 ? 0 : 1;
}
