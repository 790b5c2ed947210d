#include "attrbench/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <json.hpp>

#include "attrbench/errors.hpp"

namespace attrbench::attribution {

using numerics::Tape;
using numerics::Var;

const char* method_name(Method m) noexcept {
  switch (m) {
    case Method::Saliency: return "Saliency";
    case Method::InputXGradient: return "InputXGradient";
    case Method::GuidedBackprop: return "GuidedBackprop";
    case Method::IntegratedGradients: return "IntegratedGradients";
    case Method::DeepLift: return "DeepLift";
    case Method::GradientSHAP: return "GradientSHAP";
    case Method::LIME: return "LIME";
    case Method::KernelSHAP: return "KernelSHAP";
    case Method::UniformRandom: return "UniformRandom";
    case Method::PatternVariant: return "PatternVariant";
  }
  return "?";
}

Method method_from_string(std::string_view name) {
  for (Method m : kAllMethods)
    if (name == method_name(m)) return m;
  throw MethodError("unknown attribution method '" + std::string(name) + "'");
}

bool is_gradient_method(Method m) noexcept {
  switch (m) {
    case Method::Saliency:
    case Method::InputXGradient:
    case Method::GuidedBackprop:
    case Method::IntegratedGradients:
    case Method::DeepLift:
    case Method::GradientSHAP: return true;
    default: return false;
  }
}

const char* baseline_name(Baseline b) noexcept { return b == Baseline::MaskToken ? "MaskToken" : "ZeroEmbedding"; }

Baseline baseline_from_string(std::string_view name) {
  if (name == "MaskToken") return Baseline::MaskToken;
  if (name == "ZeroEmbedding") return Baseline::ZeroEmbedding;
  throw ArgumentError("unknown baseline '" + std::string(name) + "'");
}

void MethodOptions::validate() const {
  if (ig_steps == 0 || shap_samples == 0 || lime_samples == 0 || gradshap_baselines == 0) {
    throw ArgumentError("attribution sample counts must be positive");
  }
  if (!(gradshap_sigma >= 0.0)) throw ArgumentError("GradientSHAP noise sigma must be non-negative");
  if (!(lime_kernel_width > 0.0) || !(lime_ridge >= 0.0)) throw ArgumentError("invalid LIME kernel/ridge");
}

Tensor OlaExplainable::baseline_embeddings(std::size_t tokens, Baseline baseline) const {
  const std::size_t d = model_->config().dim;
  Tensor out({tokens, d});
  if (baseline == Baseline::MaskToken) {
    const auto mask = model_->parameter(model::Param::Embedding).row(model::Tokenizer::kMask);
    for (std::size_t t = 0; t < tokens; ++t) std::ranges::copy(mask, out.row(t).begin());
  }
  return out;
}

// --- gradient-based ---------------------------------------------------------

namespace {

struct Evaluation {
  double score;
  Tensor gradient;
};

Evaluation logit_gradient(const ExplainableModel& model, const Tensor& input, std::size_t target_class,
                          const numerics::BackwardPolicy& policy = {}) {
  Tape tape;
  const Var e = tape.leaf(input, true);
  const Var out = tape.select(model.logits(tape, e), target_class);
  auto g = numerics::grad(tape, out, policy);
  return {tape.value(out).item(), g.wrt(e)};
}

std::vector<double> row_norms(const Tensor& g) {
  std::vector<double> out(g.rows());
  for (std::size_t t = 0; t < g.rows(); ++t) {
    double s = 0.0;
    for (double v : g.row(t)) s += v * v;
    out[t] = std::sqrt(s);
  }
  return out;
}

// sum_d (x - b)_td * g_td per token
std::vector<double> weighted_rows(const Tensor& x, const Tensor* b, const Tensor& g) {
  std::vector<double> out(g.rows(), 0.0);
  for (std::size_t t = 0; t < g.rows(); ++t) {
    for (std::size_t c = 0; c < g.cols(); ++c) out[t] += (x.at(t, c) - (b ? b->at(t, c) : 0.0)) * g.at(t, c);
  }
  return out;
}

void check_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError("non-finite attribution");
}

}  // namespace

double score_embeddings(const ExplainableModel& model, const Tensor& embeddings, std::size_t target_class) {
  Tape tape;
  const Var e = tape.constant(embeddings);
  return tape.value(tape.select(model.logits(tape, e), target_class)).item();
}

std::vector<double> gradient_attribution(const ExplainableModel& model, std::span<const TokenId> ids, Method method,
                                         std::size_t target_class, const MethodOptions& options, Rng& rng) {
  if (!is_gradient_method(method)) {
    throw MethodError(std::string(method_name(method)) + " is not a gradient method");
  }
  const Tensor x = model.embed(ids);
  const Tensor b = model.baseline_embeddings(x.rows(), options.baseline);
  std::vector<double> scores;

  switch (method) {
    case Method::Saliency:
      scores = row_norms(logit_gradient(model, x, target_class).gradient);
      break;
    case Method::GuidedBackprop:
      scores = row_norms(logit_gradient(model, x, target_class, {numerics::ReluRule::GuidedClamp, nullptr}).gradient);
      break;
    case Method::InputXGradient:
      scores = weighted_rows(x, nullptr, logit_gradient(model, x, target_class).gradient);
      break;
    case Method::IntegratedGradients: {
      Tensor mean_grad(x.shape());
      Tensor point(x.shape());
      const double m = double(options.ig_steps);
      for (std::size_t k = 0; k < options.ig_steps; ++k) {
        const double alpha = (double(k) + 0.5) / m;
        for (std::size_t i = 0; i < x.size(); ++i) point[i] = b[i] + alpha * (x[i] - b[i]);
        const Tensor g = logit_gradient(model, point, target_class).gradient;
        for (std::size_t i = 0; i < g.size(); ++i) mean_grad[i] += g[i] / m;
      }
      scores = weighted_rows(x, &b, mean_grad);
      break;
    }
    case Method::DeepLift: {
      Tape reference;
      const Var rb = reference.leaf(b, true);
      reference.select(model.logits(reference, rb), target_class);
      const Tensor g =
          logit_gradient(model, x, target_class, {numerics::ReluRule::DeepLiftRescale, &reference}).gradient;
      scores = weighted_rows(x, &b, g);
      break;
    }
    case Method::GradientSHAP: {
      scores.assign(x.rows(), 0.0);
      Tensor noisy(x.shape());
      Tensor point(x.shape());
      for (std::size_t s = 0; s < options.gradshap_baselines; ++s) {
        for (std::size_t i = 0; i < x.size(); ++i) noisy[i] = x[i] + options.gradshap_sigma * rng.normal();
        const double alpha = rng.uniform();
        for (std::size_t i = 0; i < x.size(); ++i) point[i] = b[i] + alpha * (noisy[i] - b[i]);
        const auto contrib = weighted_rows(noisy, &b, logit_gradient(model, point, target_class).gradient);
        for (std::size_t t = 0; t < scores.size(); ++t) scores[t] += contrib[t] / double(options.gradshap_baselines);
      }
      break;
    }
    default:
      break;
  }
  check_finite(scores);
  return scores;
}

// --- surrogate --------------------------------------------------------------

namespace {

double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * double(n - k + i) / double(i);
  return r;
}

// min_x sum_i w_i (a_i . x - y_i)^2 + ridge |x|^2, via a rank-revealing solve.
Eigen::VectorXd weighted_least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& w, double ridge) {
  const Eigen::VectorXd sw = w.array().sqrt();
  Eigen::MatrixXd lhs = sw.asDiagonal() * a;
  Eigen::VectorXd rhs = sw.asDiagonal() * y;
  if (ridge > 0.0) {
    const auto n = a.cols();
    lhs.conservativeResize(lhs.rows() + n, Eigen::NoChange);
    rhs.conservativeResize(rhs.rows() + n);
    lhs.bottomRows(n) = std::sqrt(ridge) * Eigen::MatrixXd::Identity(n, n);
    rhs.tail(n).setZero();
  }
  return lhs.completeOrthogonalDecomposition().solve(rhs);
}

}  // namespace

LinearExplanation kernel_shap(const CoalitionValue& value, std::size_t d, std::size_t samples, Rng& rng) {
  if (d == 0) throw ArgumentError("KernelSHAP needs at least one feature");
  const double v_empty = value(std::vector<bool>(d, false));
  const double v_full = value(std::vector<bool>(d, true));
  if (d == 1) return {{v_full - v_empty}, v_empty};

  std::vector<std::vector<bool>> coalitions;
  std::vector<double> weights;
  const bool enumerate = d < 63 && (std::uint64_t{1} << d) - 2 <= samples;
  if (enumerate) {
    for (std::uint64_t mask = 1; mask + 1 < (std::uint64_t{1} << d); ++mask) {
      std::vector<bool> z(d);
      std::size_t size = 0;
      for (std::size_t j = 0; j < d; ++j) size += (z[j] = (mask >> j) & 1U);
      coalitions.push_back(std::move(z));
      weights.push_back(double(d - 1) / (binomial(d, size) * double(size) * double(d - size)));
    }
  } else {
    // Size s carries total kernel mass (d-1) / (s (d-s)); sampling sizes in
    // that proportion and subsets uniformly leaves unit weight per sample.
    std::vector<double> cdf(d - 1);
    double total = 0.0;
    for (std::size_t s = 1; s < d; ++s) cdf[s - 1] = (total += 1.0 / (double(s) * double(d - s)));
    std::vector<std::size_t> perm(d);
    for (std::size_t n = 0; n < samples; ++n) {
      const double u = rng.uniform() * total;
      const std::size_t size = std::size_t(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()) + 1;
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(perm));
      std::vector<bool> z(d, false);
      for (std::size_t j = 0; j < std::min(size, d - 1); ++j) z[perm[j]] = true;
      coalitions.push_back(std::move(z));
      weights.push_back(1.0);
    }
  }

  // Eliminate the last coefficient through sum(phi) = v_full - v_empty.
  const double delta = v_full - v_empty;
  const auto n = static_cast<Eigen::Index>(coalitions.size());
  const auto k = static_cast<Eigen::Index>(d - 1);
  Eigen::MatrixXd a(n, k);
  Eigen::VectorXd y(n);
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& z = coalitions[std::size_t(i)];
    const double last = z[d - 1] ? 1.0 : 0.0;
    for (Eigen::Index j = 0; j < k; ++j) a(i, j) = (z[std::size_t(j)] ? 1.0 : 0.0) - last;
    y(i) = value(z) - v_empty - last * delta;
    w(i) = weights[std::size_t(i)];
  }
  const Eigen::VectorXd phi = weighted_least_squares(a, y, w, 0.0);

  LinearExplanation out;
  out.intercept = v_empty;
  out.coefficients.resize(d);
  double partial = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) partial += (out.coefficients[std::size_t(j)] = phi(j));
  out.coefficients[d - 1] = delta - partial;
  return out;
}

LinearExplanation lime(const CoalitionValue& value, std::size_t d, const LimeOptions& options, Rng& rng) {
  if (d == 0) throw ArgumentError("LIME needs at least one feature");
  if (options.samples == 0) throw ArgumentError("LIME needs at least one sample");
  const auto n = static_cast<Eigen::Index>(options.samples);
  const auto k = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd z = Eigen::MatrixXd::Ones(n, k);
  Eigen::VectorXd y(n);
  Eigen::VectorXd w(n);
  std::vector<std::size_t> perm(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<bool> present(d, true);
    if (i > 0) {
      const std::size_t removed = 1 + rng.index(d);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(perm));
      for (std::size_t j = 0; j < removed; ++j) {
        present[perm[j]] = false;
        z(i, static_cast<Eigen::Index>(perm[j])) = 0.0;
      }
    }
    y(i) = value(present);
    const double kept = z.row(i).sum();
    const double distance = kept > 0.0 ? (1.0 - std::sqrt(kept / double(d))) * 100.0 : 100.0;
    w(i) = std::isinf(options.kernel_width)
               ? 1.0
               : std::exp(-distance * distance / (options.kernel_width * options.kernel_width));
  }

  // Intercept handled by weighted centring.
  const double wsum = w.sum();
  const Eigen::RowVectorXd z_mean = (w.transpose() * z) / wsum;
  const double y_mean = w.dot(y) / wsum;
  const Eigen::MatrixXd zc = z.rowwise() - z_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;
  const Eigen::VectorXd beta = weighted_least_squares(zc, yc, w, options.ridge);

  LinearExplanation out;
  out.coefficients.assign(beta.data(), beta.data() + beta.size());
  out.intercept = y_mean - z_mean.dot(beta);
  return out;
}

std::vector<double> surrogate_attribution(const ExplainableModel& model, std::span<const TokenId> ids, Method method,
                                          std::size_t target_class, TokenId mask_id, const MethodOptions& options,
                                          Rng& rng) {
  const std::vector<TokenId> original(ids.begin(), ids.end());
  std::vector<TokenId> masked(original.size());
  CoalitionValue value = [&](const std::vector<bool>& present) {
    for (std::size_t t = 0; t < original.size(); ++t) masked[t] = present[t] ? original[t] : mask_id;
    return model.predict(masked)[target_class];
  };
  std::vector<double> scores;
  switch (method) {
    case Method::KernelSHAP:
      scores = kernel_shap(value, original.size(), options.shap_samples, rng).coefficients;
      break;
    case Method::LIME:
      scores = lime(value, original.size(), {options.lime_samples, options.lime_kernel_width, options.lime_ridge}, rng)
                   .coefficients;
      break;
    default:
      throw MethodError(std::string(method_name(method)) + " is not a surrogate method");
  }
  check_finite(scores);
  return scores;
}

// --- baselines --------------------------------------------------------------

std::vector<double> uniform_random_baseline(std::size_t tokens, Rng& rng) {
  std::vector<double> out(tokens);
  for (double& v : out) v = rng.uniform_open();
  return out;
}

std::optional<std::size_t> TfIdfMatrix::column(std::string_view word) const {
  const std::string w = corpus::to_lower(word);
  auto it = std::lower_bound(vocabulary.begin(), vocabulary.end(), w);
  if (it == vocabulary.end() || *it != w) return std::nullopt;
  return std::size_t(it - vocabulary.begin());
}

TfIdfMatrix tfidf_features(std::span<const corpus::LabeledSentence> sentences) {
  if (sentences.empty()) throw ArgumentError("tf-idf needs a non-empty corpus");
  TfIdfMatrix m;
  const auto vocab = corpus::vocabulary_of(sentences);
  m.vocabulary.assign(vocab.begin(), vocab.end());
  m.values = Tensor({sentences.size(), m.vocabulary.size()});
  std::vector<double> df(m.vocabulary.size(), 0.0);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    for (const auto& w : sentences[i].words) {
      const std::size_t c = *m.column(w);
      if (m.values.at(i, c) == 0.0) df[c] += 1.0;
      m.values.at(i, c) += 1.0;
    }
  }
  const double n = double(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    auto row = m.values.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] *= std::log(n / df[c]);
  }
  return m;
}

double PatternScores::score(std::string_view word, std::size_t cls) const {
  const std::string w = corpus::to_lower(word);
  auto it = std::lower_bound(vocabulary.begin(), vocabulary.end(), w);
  if (it == vocabulary.end() || *it != w || cls >= by_class.size()) return 0.0;
  return by_class[cls][std::size_t(it - vocabulary.begin())];
}

PatternScores pattern_variant(const TfIdfMatrix& tfidf, std::span<const int> targets, std::size_t num_classes) {
  const std::size_t n = tfidf.values.rank() == 2 ? tfidf.values.rows() : 0;
  if (n != targets.size()) {
    throw ArgumentError("tf-idf has " + std::to_string(n) + " rows but " + std::to_string(targets.size()) +
                        " targets");
  }
  std::vector<std::size_t> counts(num_classes, 0);
  for (int t : targets) {
    if (t < 0 || std::size_t(t) >= num_classes) throw ArgumentError("target out of range");
    ++counts[std::size_t(t)];
  }
  if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2) {
    throw DegenerateError("pattern variant needs at least two target classes (zero-variance target)");
  }

  const std::size_t v = tfidf.vocabulary.size();
  std::vector<double> col_mean(v, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < v; ++c) col_mean[c] += tfidf.values.at(i, c) / double(n);

  PatternScores out;
  out.vocabulary = tfidf.vocabulary;
  out.by_class.assign(num_classes, std::vector<double>(v, 0.0));
  for (std::size_t cls = 0; cls < num_classes; ++cls) {
    if (counts[cls] == 0) continue;
    const double y_mean = double(counts[cls]) / double(n);
    auto& cov = out.by_class[cls];
    for (std::size_t i = 0; i < n; ++i) {
      const double dy = (std::size_t(targets[i]) == cls ? 1.0 : 0.0) - y_mean;
      auto row = tfidf.values.row(i);
      for (std::size_t c = 0; c < v; ++c) cov[c] += (row[c] - col_mean[c]) * dy;
    }
    for (double& x : cov) x /= double(n);
  }
  return out;
}

// --- orchestration ----------------------------------------------------------

Explainer::Explainer(const model::OlaModel& model, const model::Tokenizer& tokenizer, const PatternScores& pattern,
                     MethodOptions options, std::string scheme, std::uint64_t model_seed)
    : model_(model),
      tokenizer_(&tokenizer),
      pattern_(&pattern),
      options_(options),
      scheme_(std::move(scheme)),
      model_seed_(model_seed) {
  options_.validate();
}

AttributionMap Explainer::explain(const corpus::LabeledSentence& sentence, Method method) const {
  const auto enc = tokenizer_->tokenize(sentence);
  AttributionMap map;
  map.method = method;
  map.n_words = sentence.words.size();
  map.sentence_idx = sentence.sentence_idx;
  map.target = sentence.target();
  map.scheme = scheme_;
  map.seed = model_seed_;
  map.attributed_class = model::argmax(model_.predict(enc.ids).data());
  map.alignment.assign(enc.alignment.begin(), enc.alignment.end());

  Rng rng = Rng::derived({options_.seed, model_seed_, sentence.sentence_idx,
                          static_cast<std::uint64_t>(sentence.target()), static_cast<std::uint64_t>(method)});
  switch (method) {
    case Method::Saliency:
    case Method::InputXGradient:
    case Method::GuidedBackprop:
      map.token_scores = gradient_attribution(model_, enc.ids, method, map.attributed_class, options_, rng);
      break;
    case Method::IntegratedGradients:
      map.samples["ig_steps"] = options_.ig_steps;
      map.token_scores = gradient_attribution(model_, enc.ids, method, map.attributed_class, options_, rng);
      break;
    case Method::DeepLift:
      map.token_scores = gradient_attribution(model_, enc.ids, method, map.attributed_class, options_, rng);
      break;
    case Method::GradientSHAP:
      map.samples["gradshap_baselines"] = options_.gradshap_baselines;
      map.token_scores = gradient_attribution(model_, enc.ids, method, map.attributed_class, options_, rng);
      break;
    case Method::LIME:
      map.samples["lime_samples"] = options_.lime_samples;
      map.token_scores = surrogate_attribution(model_, enc.ids, method, map.attributed_class,
                                               model::Tokenizer::kMask, options_, rng);
      break;
    case Method::KernelSHAP:
      map.samples["shap_samples"] = options_.shap_samples;
      map.token_scores = surrogate_attribution(model_, enc.ids, method, map.attributed_class,
                                               model::Tokenizer::kMask, options_, rng);
      break;
    case Method::UniformRandom:
      map.token_scores = uniform_random_baseline(enc.ids.size(), rng);
      break;
    case Method::PatternVariant:
      // Word-level global scores: one entry per word.
      map.alignment.resize(sentence.words.size());
      std::iota(map.alignment.begin(), map.alignment.end(), std::int64_t{0});
      for (const auto& w : sentence.words) map.token_scores.push_back(pattern_->score(w, map.attributed_class));
      break;
  }
  return map;
}

std::string to_json_line(const AttributionMap& map) {
  nlohmann::ordered_json j;
  j["sentence_idx"] = map.sentence_idx;
  j["target"] = map.target;
  j["method"] = method_name(map.method);
  j["scheme"] = map.scheme;
  j["seed"] = map.seed;
  j["attributed_class"] = map.attributed_class;
  j["n_words"] = map.n_words;
  j["token_scores"] = map.token_scores;
  j["alignment"] = map.alignment;
  j["samples"] = map.samples;
  return j.dump();
}

AttributionMap attribution_from_json_line(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    AttributionMap m;
    m.sentence_idx = j.at("sentence_idx").get<std::uint64_t>();
    m.target = j.at("target").get<int>();
    m.method = method_from_string(j.at("method").get<std::string>());
    m.scheme = j.at("scheme").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.attributed_class = j.at("attributed_class").get<std::size_t>();
    m.n_words = j.at("n_words").get<std::size_t>();
    m.token_scores = j.at("token_scores").get<std::vector<double>>();
    m.alignment = j.at("alignment").get<std::vector<std::int64_t>>();
    m.samples = j.at("samples").get<std::map<std::string, std::uint64_t>>();
    if (m.token_scores.size() != m.alignment.size()) throw ValidationError("token_scores/alignment length mismatch");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("attribution record: ") + e.what());
  }
}

}  // namespace attrbench::attribution
