#include "attrbench/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "attrbench/errors.hpp"
#include "attrbench/lexicon.hpp"
#include "attrbench/templates.hpp"

namespace attrbench::pipeline {

using json = nlohmann::ordered_json;
using attribution::Method;
using corpus::Scope;
using model::TrainScheme;

std::uint64_t fnv1a(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[std::size_t(i)] = digits[v & 0xF];
  return out;
}

// --- config -----------------------------------------------------------------

namespace {

template <class T>
void read(const json& section, const char* key, T& out) {
  if (auto it = section.find(key); it != section.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ValidationError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

void reject_unknown(const json& section, std::string_view name, std::initializer_list<std::string_view> known) {
  if (!section.is_object()) throw ValidationError("config section '" + std::string(name) + "' must be an object");
  for (const auto& [key, value] : section.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ValidationError("unknown config key '" + std::string(name) + "." + key + "'");
    }
  }
}

const json& section_of(const json& root, const char* name) {
  static const json empty = json::object();
  auto it = root.find(name);
  return it == root.end() ? empty : *it;
}

template <class E, class F>
std::vector<E> read_enums(const json& section, const char* key, std::vector<E> fallback, F parse) {
  auto it = section.find(key);
  if (it == section.end()) return fallback;
  if (!it->is_array()) throw ValidationError(std::string("config key '") + key + "' must be a list");
  std::vector<E> out;
  for (const auto& v : *it) {
    if (!v.is_string()) throw ValidationError(std::string("config key '") + key + "' must list names");
    try {
      out.push_back(parse(v.get<std::string>()));
    } catch (const Error& e) {
      throw ValidationError(std::string("config key '") + key + "': " + e.what());
    }
  }
  return out;
}

}  // namespace

RunConfig parse_config(std::string_view text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(0, std::string("config: ") + e.what());
  }
  reject_unknown(root, "config", {"dataset", "training", "attribution", "evaluation"});
  RunConfig c;

  const json& ds = section_of(root, "dataset");
  reject_unknown(ds, "dataset",
                 {"mode", "scopes", "n_base", "seed", "train_fraction", "split_seed", "paths", "lexicon"});
  read(ds, "mode", c.dataset.mode);
  c.dataset.scopes = read_enums(ds, "scopes", c.dataset.scopes, corpus::scope_from_string);
  read(ds, "n_base", c.dataset.n_base);
  read(ds, "seed", c.dataset.seed);
  read(ds, "train_fraction", c.dataset.train_fraction);
  read(ds, "split_seed", c.dataset.split_seed);
  std::map<std::string, std::string> paths;
  read(ds, "paths", paths);
  for (const auto& [scope, p] : paths) {
    const fs::path path(p);
    c.dataset.paths[scope] = path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  }
  std::string lexicon;
  read(ds, "lexicon", lexicon);
  if (!lexicon.empty()) {
    const fs::path path(lexicon);
    c.dataset.lexicon = path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  }

  const json& tr = section_of(root, "training");
  reject_unknown(tr, "training",
                 {"schemes", "seeds", "dim", "hidden", "batch_size", "epochs", "learning_rate", "beta1", "beta2",
                  "adam_epsilon", "patience", "validation_fraction"});
  c.training.schemes = read_enums(tr, "schemes", c.training.schemes, model::scheme_from_string);
  read(tr, "seeds", c.training.seeds);
  read(tr, "dim", c.training.dim);
  read(tr, "hidden", c.training.hidden);
  read(tr, "batch_size", c.training.train.batch_size);
  read(tr, "epochs", c.training.train.epochs);
  read(tr, "learning_rate", c.training.train.learning_rate);
  read(tr, "beta1", c.training.train.beta1);
  read(tr, "beta2", c.training.train.beta2);
  read(tr, "adam_epsilon", c.training.train.adam_epsilon);
  read(tr, "patience", c.training.train.patience);
  read(tr, "validation_fraction", c.training.train.validation_fraction);

  const json& at = section_of(root, "attribution");
  reject_unknown(at, "attribution",
                 {"methods", "baseline", "ig_steps", "shap_samples", "lime_samples", "gradshap_baselines",
                  "gradshap_sigma", "lime_kernel_width", "lime_ridge", "seed", "max_sentences"});
  c.attribution.methods = read_enums(at, "methods", c.attribution.methods, attribution::method_from_string);
  std::string baseline = attribution::baseline_name(c.attribution.options.baseline);
  read(at, "baseline", baseline);
  try {
    c.attribution.options.baseline = attribution::baseline_from_string(baseline);
  } catch (const Error& e) {
    throw ValidationError(e.what());
  }
  auto& o = c.attribution.options;
  read(at, "ig_steps", o.ig_steps);
  read(at, "shap_samples", o.shap_samples);
  read(at, "lime_samples", o.lime_samples);
  read(at, "gradshap_baselines", o.gradshap_baselines);
  read(at, "gradshap_sigma", o.gradshap_sigma);
  read(at, "lime_kernel_width", o.lime_kernel_width);
  read(at, "lime_ridge", o.lime_ridge);
  read(at, "seed", o.seed);
  read(at, "max_sentences", c.attribution.max_sentences);

  const json& ev = section_of(root, "evaluation");
  reject_unknown(ev, "evaluation", {"baseline_scheme", "output_dir", "svg"});
  read(ev, "baseline_scheme", c.evaluation.baseline_scheme);
  std::string out = c.evaluation.output_dir.string();
  read(ev, "output_dir", out);
  c.evaluation.output_dir = fs::path(out).is_relative() && !base_dir.empty() ? base_dir / out : fs::path(out);
  read(ev, "svg", c.evaluation.svg);

  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("config: " + what); };
  if (dataset.mode != "template" && dataset.mode != "load") fail("dataset.mode must be 'template' or 'load'");
  if (dataset.scopes.empty()) fail("dataset.scopes is empty");
  if (dataset.mode == "template" && dataset.n_base == 0) fail("dataset.n_base must be positive");
  if (!(dataset.train_fraction > 0.0 && dataset.train_fraction < 1.0)) fail("dataset.train_fraction not in (0, 1)");
  if (dataset.mode == "load") {
    for (Scope s : dataset.scopes) {
      auto it = dataset.paths.find(corpus::scope_directory(s));
      if (it == dataset.paths.end()) fail(std::string("no dataset.paths entry for ") + corpus::scope_directory(s));
      if (!fs::exists(it->second)) fail("dataset path does not exist: " + it->second.string());
    }
  }
  if (!dataset.lexicon.empty() && !fs::exists(dataset.lexicon)) {
    fail("lexicon does not exist: " + dataset.lexicon.string());
  }
  if (training.schemes.empty()) fail("training.schemes is empty");
  if (training.seeds.empty()) fail("training.seeds is empty");
  if (std::set(training.seeds.begin(), training.seeds.end()).size() != training.seeds.size()) {
    fail("training.seeds has duplicates");
  }
  if (std::set(training.schemes.begin(), training.schemes.end()).size() != training.schemes.size()) {
    fail("training.schemes has duplicates");
  }
  if (training.dim == 0 || training.hidden == 0) fail("model dimensions must be positive");
  if (attribution.methods.empty()) fail("attribution.methods is empty");
  try {
    training.train.validate();
    attribution.options.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
  model::scheme_from_string(evaluation.baseline_scheme);
}

std::string config_to_json(const RunConfig& c) {
  json j;
  auto& ds = j["dataset"];
  ds["mode"] = c.dataset.mode;
  ds["scopes"] = json::array();
  for (Scope s : c.dataset.scopes) ds["scopes"].push_back(corpus::scope_name(s));
  ds["n_base"] = c.dataset.n_base;
  ds["seed"] = c.dataset.seed;
  ds["train_fraction"] = c.dataset.train_fraction;
  ds["split_seed"] = c.dataset.split_seed;
  ds["paths"] = json::object();
  for (const auto& [k, v] : c.dataset.paths) ds["paths"][k] = v.generic_string();
  ds["lexicon"] = c.dataset.lexicon.generic_string();

  auto& tr = j["training"];
  tr["schemes"] = json::array();
  for (auto s : c.training.schemes) tr["schemes"].push_back(model::scheme_name(s));
  tr["seeds"] = c.training.seeds;
  tr["dim"] = c.training.dim;
  tr["hidden"] = c.training.hidden;
  tr["batch_size"] = c.training.train.batch_size;
  tr["epochs"] = c.training.train.epochs;
  tr["learning_rate"] = c.training.train.learning_rate;
  tr["beta1"] = c.training.train.beta1;
  tr["beta2"] = c.training.train.beta2;
  tr["adam_epsilon"] = c.training.train.adam_epsilon;
  tr["patience"] = c.training.train.patience;
  tr["validation_fraction"] = c.training.train.validation_fraction;

  auto& at = j["attribution"];
  at["methods"] = json::array();
  for (Method m : c.attribution.methods) at["methods"].push_back(attribution::method_name(m));
  const auto& o = c.attribution.options;
  at["baseline"] = attribution::baseline_name(o.baseline);
  at["ig_steps"] = o.ig_steps;
  at["shap_samples"] = o.shap_samples;
  at["lime_samples"] = o.lime_samples;
  at["gradshap_baselines"] = o.gradshap_baselines;
  at["gradshap_sigma"] = o.gradshap_sigma;
  at["lime_kernel_width"] = o.lime_kernel_width;
  at["lime_ridge"] = o.lime_ridge;
  at["seed"] = o.seed;
  at["max_sentences"] = c.attribution.max_sentences;

  auto& ev = j["evaluation"];
  ev["baseline_scheme"] = c.evaluation.baseline_scheme;
  ev["output_dir"] = c.evaluation.output_dir.generic_string();
  ev["svg"] = c.evaluation.svg;
  return j.dump(2) + "\n";
}

std::string config_hash(const RunConfig& config) {
  // The output directory does not influence results.
  RunConfig c = config;
  c.evaluation.output_dir.clear();
  return hex64(fnv1a(config_to_json(c)));
}

fs::path resolve_output_root(const RunConfig& config, const fs::path& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("ATTRBENCH_OUT"); env != nullptr && *env != '\0') return env;
  return config.evaluation.output_dir;
}

// --- layout -----------------------------------------------------------------

fs::path data_dir(const fs::path& root, Scope scope) { return root / "data" / corpus::scope_directory(scope); }

fs::path checkpoint_path(const fs::path& root, Scope scope, TrainScheme scheme, std::uint64_t seed) {
  return root / "models" / corpus::scope_directory(scope) / model::scheme_name(scheme) /
         ("seed_" + std::to_string(seed) + ".ckpt");
}

fs::path dump_path(const fs::path& root, Scope scope, TrainScheme scheme, std::uint64_t seed, Method method) {
  return root / "attributions" / corpus::scope_directory(scope) / model::scheme_name(scheme) /
         ("seed_" + std::to_string(seed)) / (std::string(attribution::method_name(method)) + ".jsonl");
}

fs::path report_dir(const fs::path& root, Scope scope) { return root / "reports" / corpus::scope_directory(scope); }

// --- helpers ----------------------------------------------------------------

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write-then-rename so an interrupted run never leaves a truncated file.
void write_file(const fs::path& path, std::string_view content) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), std::streamsize(content.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string jsonl_text(std::span<const corpus::LabeledSentence> sentences) {
  std::string out;
  for (const auto& s : sentences) {
    corpus::validate(s);
    out += corpus::to_jsonl_line(s) + '\n';
  }
  return out;
}

fs::path checksum_path(const fs::path& dump) { return dump.string() + ".fnv1a"; }

corpus::Lexicon lexicon_of(const RunConfig& config) {
  return config.dataset.lexicon.empty() ? corpus::Lexicon::builtin() : corpus::Lexicon::load(config.dataset.lexicon);
}

corpus::DatasetBundle load_split(const fs::path& root, Scope scope) {
  const fs::path dir = data_dir(root, scope);
  if (!fs::exists(dir / "train.jsonl") || !fs::exists(dir / "test.jsonl")) {
    throw ValidationError("missing dataset in " + dir.string() + "; run 'generate' first");
  }
  corpus::DatasetBundle b;
  b.scope = scope;
  b.train = corpus::load_jsonl(dir / "train.jsonl");
  b.test = corpus::load_jsonl(dir / "test.jsonl");
  b.vocabulary = corpus::vocabulary_of(b.all());
  return b;
}

std::vector<corpus::LabeledSentence> explained_sentences(const RunConfig& config,
                                                         const std::vector<corpus::LabeledSentence>& test) {
  const std::size_t n = config.attribution.max_sentences;
  if (n == 0 || n >= test.size()) return test;
  return {test.begin(), test.begin() + std::ptrdiff_t(n)};
}

}  // namespace

void run_parallel(std::size_t jobs, std::size_t workers, const std::function<void(std::size_t)>& job) {
  workers = std::max<std::size_t>(1, std::min(workers, jobs));
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs; i = next++) {
          try {
            job(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = jobs;
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

// --- generate ---------------------------------------------------------------

std::vector<ScopeAudit> cmd_generate(const RunConfig& config, const RunOptions& options) {
  config.validate();
  const corpus::Lexicon lexicon = lexicon_of(config);
  const auto terms = lexicon.gender_terms();
  std::vector<ScopeAudit> audits;
  json scopes = json::array();
  for (Scope scope : config.dataset.scopes) {
    corpus::DatasetBundle bundle;
    if (config.dataset.mode == "template") {
      bundle = corpus::generate_template_corpus(config.dataset.n_base, config.dataset.seed, lexicon, scope);
    } else {
      bundle.scope = scope;
      bundle.train = corpus::load_jsonl(config.dataset.paths.at(corpus::scope_directory(scope)));
      if (bundle.train.empty()) throw EmptyCorpusError("empty dataset for " + std::string(corpus::scope_name(scope)));
      bundle.vocabulary = corpus::vocabulary_of(bundle.train);
    }
    ScopeAudit audit;
    audit.scope = scope;
    audit.bias = corpus::bias_score(corpus::decompose(bundle.all()), terms);
    const bool balanced = std::all_of(audit.bias.begin(), audit.bias.end(),
                                      [](double b) { return std::abs(b - 1.0 / 3.0) <= 1e-6; });
    if (config.dataset.mode == "template" && scope == Scope::AllWords && !balanced) {
      throw ValidationError("template all-words corpus is unbalanced: bias_C = (" +
                            evaluation::format_double(audit.bias[0]) + ", " +
                            evaluation::format_double(audit.bias[1]) + ", " +
                            evaluation::format_double(audit.bias[2]) + ")");
    }
    const auto split = corpus::split_train_test(bundle, config.dataset.train_fraction, config.dataset.split_seed);
    audit.train = split.train.size();
    audit.test = split.test.size();
    const fs::path dir = data_dir(options.out, scope);
    fs::create_directories(dir);
    write_file(dir / "train.jsonl", jsonl_text(split.train));
    write_file(dir / "test.jsonl", jsonl_text(split.test));
    audits.push_back(audit);

    json s;
    s["scope"] = corpus::scope_name(scope);
    s["directory"] = corpus::scope_directory(scope);
    s["sentences"] = bundle.train.size() + bundle.test.size();
    s["train"] = audit.train;
    s["test"] = audit.test;
    s["bias_C"] = {{"F", audit.bias[0]}, {"M", audit.bias[1]}, {"NB", audit.bias[2]}};
    s["balanced"] = balanced;
    s["train_checksum"] = hex64(fnv1a(read_file(dir / "train.jsonl")));
    s["test_checksum"] = hex64(fnv1a(read_file(dir / "test.jsonl")));
    scopes.push_back(std::move(s));
  }
  json manifest;
  manifest["config_hash"] = config_hash(config);
  manifest["mode"] = config.dataset.mode;
  manifest["scopes"] = std::move(scopes);
  write_file(options.out / "data" / "manifest.json", manifest.dump(2) + "\n");
  return audits;
}

// --- train ------------------------------------------------------------------

std::vector<TrainedModel> cmd_train(const RunConfig& config, const RunOptions& options) {
  config.validate();
  struct Job {
    std::size_t scope_index;
    TrainScheme scheme;
    std::uint64_t seed;
  };
  std::vector<corpus::DatasetBundle> bundles;
  std::vector<model::Tokenizer> tokenizers;
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < config.dataset.scopes.size(); ++i) {
    bundles.push_back(load_split(options.out, config.dataset.scopes[i]));
    tokenizers.push_back(model::Tokenizer::build(bundles.back().train));
    for (auto scheme : config.training.schemes)
      for (auto seed : config.training.seeds) jobs.push_back({i, scheme, seed});
  }

  std::vector<TrainedModel> results(jobs.size());
  run_parallel(jobs.size(), options.workers, [&](std::size_t j) {
    const Job& job = jobs[j];
    const Scope scope = config.dataset.scopes[job.scope_index];
    const auto& bundle = bundles[job.scope_index];
    const fs::path path = checkpoint_path(options.out, scope, job.scheme, job.seed);
    const fs::path info = path.string() + ".json";
    TrainedModel& r = results[j];
    r.scope = scope;
    r.scheme = job.scheme;
    r.seed = job.seed;
    if (!options.force && fs::exists(path) && fs::exists(info)) {
      const auto ckpt = model::load_checkpoint(path);
      r.test_accuracy = model::evaluate_accuracy(ckpt.model, ckpt.tokenizer, bundle.test);
      r.best_epoch = nlohmann::json::parse(read_file(info)).at("best_epoch").get<std::size_t>();
      r.reused = true;
      return;
    }
    const auto& tok = tokenizers[job.scope_index];
    const model::OlaModel initial({tok.size(), config.training.dim, config.training.hidden, corpus::kNumClasses},
                                  job.seed);
    model::TrainConfig tc = config.training.train;
    tc.seed = job.seed;
    const auto trained = model::train(initial, job.scheme, tc, tok, bundle);
    r.test_accuracy = model::evaluate_accuracy(trained.model, tok, bundle.test);
    r.best_epoch = trained.best_epoch;
    fs::create_directories(path.parent_path());
    write_file(path, model::serialize_checkpoint({trained.model, tok, job.scheme, job.seed}));
    json meta;
    meta["best_epoch"] = trained.best_epoch;
    meta["epochs_run"] = trained.history.empty() ? 0 : trained.history.back().epoch;
    meta["test_accuracy"] = r.test_accuracy;
    meta["history"] = json::array();
    for (const auto& h : trained.history) {
      meta["history"].push_back(
          {{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"validation_accuracy", h.validation_accuracy}});
    }
    write_file(info, meta.dump(2) + "\n");
  });

  for (Scope scope : config.dataset.scopes) {
    json manifest;
    manifest["config_hash"] = config_hash(config);
    manifest["scope"] = corpus::scope_name(scope);
    json models = json::array();
    json summary = json::object();
    for (auto scheme : config.training.schemes) {
      std::vector<double> accs;
      for (const auto& r : results) {
        if (r.scope != scope || r.scheme != scheme) continue;
        models.push_back({{"scheme", model::scheme_name(scheme)},
                          {"seed", r.seed},
                          {"test_accuracy", r.test_accuracy},
                          {"best_epoch", r.best_epoch}});
        accs.push_back(r.test_accuracy);
      }
      double mean = 0.0, var = 0.0;
      for (double a : accs) mean += a / double(accs.size());
      for (double a : accs) var += (a - mean) * (a - mean) / double(accs.size());
      summary[model::scheme_name(scheme)] = {{"mean_test_accuracy", mean}, {"std_test_accuracy", std::sqrt(var)}};
    }
    manifest["models"] = std::move(models);
    manifest["summary"] = std::move(summary);
    write_file(options.out / "models" / corpus::scope_directory(scope) / "manifest.json", manifest.dump(2) + "\n");
  }
  return results;
}

// --- attribute --------------------------------------------------------------

std::vector<attribution::AttributionMap> read_dump(const fs::path& path) {
  const std::string content = read_file(path);
  const fs::path sidecar = checksum_path(path);
  if (!fs::exists(sidecar)) throw ChecksumError("missing checksum for " + path.string());
  std::string expected = read_file(sidecar);
  while (!expected.empty() && (expected.back() == '\n' || expected.back() == '\r')) expected.pop_back();
  if (expected != hex64(fnv1a(content))) throw ChecksumError("checksum mismatch for " + path.string());
  std::vector<attribution::AttributionMap> maps;
  std::istringstream in(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      maps.push_back(attribution::attribution_from_json_line(line));
    } catch (const ParseError& e) {
      throw ParseError(line_no, path.string() + ": " + e.what());
    }
  }
  return maps;
}

std::vector<DumpStatus> cmd_attribute(const RunConfig& config, const RunOptions& options) {
  config.validate();
  struct Job {
    std::size_t scope_index;
    TrainScheme scheme;
    std::uint64_t seed;
  };
  std::vector<std::vector<corpus::LabeledSentence>> sentences;
  std::vector<attribution::PatternScores> patterns;
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < config.dataset.scopes.size(); ++i) {
    const auto bundle = load_split(options.out, config.dataset.scopes[i]);
    std::vector<int> targets;
    for (const auto& s : bundle.train) targets.push_back(s.target());
    patterns.push_back(attribution::pattern_variant(attribution::tfidf_features(bundle.train), targets));
    sentences.push_back(explained_sentences(config, bundle.test));
    for (auto scheme : config.training.schemes)
      for (auto seed : config.training.seeds) jobs.push_back({i, scheme, seed});
  }

  std::vector<std::vector<DumpStatus>> statuses(jobs.size());
  run_parallel(jobs.size(), options.workers, [&](std::size_t j) {
    const Job& job = jobs[j];
    const Scope scope = config.dataset.scopes[job.scope_index];
    std::vector<Method> pending;
    for (Method m : config.attribution.methods) {
      const fs::path path = dump_path(options.out, scope, job.scheme, job.seed, m);
      if (fs::exists(path) && fs::exists(checksum_path(path)) && !options.force) {
        read_dump(path);  // throws on tampering
        statuses[j].push_back({path, true});
      } else {
        pending.push_back(m);
      }
    }
    if (pending.empty()) return;
    const fs::path ckpt_path = checkpoint_path(options.out, scope, job.scheme, job.seed);
    if (!fs::exists(ckpt_path)) throw ValidationError("missing checkpoint " + ckpt_path.string());
    const auto ckpt = model::load_checkpoint(ckpt_path);
    const attribution::Explainer explainer(ckpt.model, ckpt.tokenizer, patterns[job.scope_index],
                                           config.attribution.options, model::scheme_name(job.scheme), job.seed);
    for (Method m : pending) {
      std::string content;
      for (const auto& s : sentences[job.scope_index]) content += attribution::to_json_line(explainer.explain(s, m)) + '\n';
      const fs::path path = dump_path(options.out, scope, job.scheme, job.seed, m);
      write_file(path, content);
      write_file(checksum_path(path), hex64(fnv1a(content)) + "\n");
      statuses[j].push_back({path, false});
    }
  });

  std::vector<DumpStatus> out;
  for (auto& s : statuses) out.insert(out.end(), s.begin(), s.end());
  return out;
}

// --- report -----------------------------------------------------------------

std::vector<evaluation::BenchmarkReport> cmd_report(const RunConfig& config, const RunOptions& options) {
  config.validate();
  std::vector<evaluation::BenchmarkReport> reports;
  std::string gaps;
  for (Scope scope : config.dataset.scopes)
    for (auto scheme : config.training.schemes)
      for (auto seed : config.training.seeds)
        for (Method m : config.attribution.methods) {
          const fs::path p = dump_path(options.out, scope, scheme, seed, m);
          if (!fs::exists(p)) gaps += "\n  " + p.string();
        }
  if (!gaps.empty()) throw IncompleteGridError("missing attribution dumps:" + gaps);

  for (Scope scope : config.dataset.scopes) {
    const auto bundle = load_split(options.out, scope);
    const auto ground_truth = evaluation::ground_truth_index(bundle.test);
    std::vector<evaluation::WordExplanation> explanations;
    for (auto scheme : config.training.schemes)
      for (auto seed : config.training.seeds)
        for (Method m : config.attribution.methods) {
          for (const auto& map : read_dump(dump_path(options.out, scope, scheme, seed, m))) {
            explanations.push_back(evaluation::normalize_and_aggregate(map, map.n_words));
          }
        }
    evaluation::GridSpec grid;
    for (auto s : config.training.schemes) grid.schemes.push_back(model::scheme_name(s));
    grid.methods = config.attribution.methods;
    grid.seeds = config.training.seeds;
    grid.baseline_scheme = config.evaluation.baseline_scheme;
    auto report = evaluation::summarize(explanations, ground_truth, grid,
                                        {corpus::scope_name(scope), config_hash(config)});
    const fs::path dir = report_dir(options.out, scope);
    write_file(dir / "report.csv", evaluation::report_csv(report));
    write_file(dir / "report.json", evaluation::report_json(report));
    if (config.evaluation.svg) write_file(dir / "report.svg", evaluation::report_svg(report));
    std::vector<std::string> ladder;
    for (auto s : config.training.schemes)
      if (model::scheme_name(s) != config.evaluation.baseline_scheme) ladder.push_back(model::scheme_name(s));
    write_file(dir / "rma_ladder.txt", evaluation::rma_ladder(report, ladder));
    reports.push_back(std::move(report));
  }
  return reports;
}

}  // namespace attrbench::pipeline
