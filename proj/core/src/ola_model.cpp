#include "attrbench/ola_model.hpp"

#include <algorithm>
#include <cmath>

#include "attrbench/errors.hpp"
#include "attrbench/random.hpp"

namespace attrbench::model {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

ParamGroup group_of(Param p) noexcept {
  switch (p) {
    case Param::Embedding: return ParamGroup::Embedding;
    case Param::Query:
    case Param::Key:
    case Param::Value:
    case Param::Output: return ParamGroup::Attention;
    default: return ParamGroup::Classifier;
  }
}

const char* param_name(Param p) noexcept {
  static constexpr const char* names[] = {"embedding", "query", "key", "value", "output",
                                          "hidden", "hidden_bias", "logits", "logits_bias"};
  return names[static_cast<std::size_t>(p)];
}

namespace {

Tensor uniform_matrix(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(double(fan_in));
  Tensor t({rows, cols});
  for (double& v : t.values()) v = bound * (2.0 * rng.uniform() - 1.0);
  return t;
}

Tensor uniform_vector(std::size_t n, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(double(fan_in));
  Tensor t({n});
  for (double& v : t.values()) v = bound * (2.0 * rng.uniform() - 1.0);
  return t;
}

// out (rows x n) = a (rows x k) * b (k x n)
Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double av = a.at(i, p);
      auto brow = b.row(p);
      for (std::size_t j = 0; j < orow.size(); ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

std::vector<double> vecmat(std::span<const double> v, const Tensor& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t p = 0; p < v.size(); ++p) {
    auto row = m.row(p);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += v[p] * row[j];
  }
  return out;
}

// Shared tail: pooled attention output -> logits.
Tensor classifier_head(const OlaModel& m, std::vector<double> pooled) {
  auto h = vecmat(pooled, m.parameter(Param::Hidden));
  const Tensor& b1 = m.parameter(Param::HiddenBias);
  for (std::size_t j = 0; j < h.size(); ++j) h[j] = std::max(0.0, h[j] + b1[j]);
  auto z = vecmat(h, m.parameter(Param::Logits));
  const Tensor& b2 = m.parameter(Param::LogitsBias);
  for (std::size_t j = 0; j < z.size(); ++j) z[j] += b2[j];
  Tensor out = Tensor::vector(std::move(z));
  if (!out.all_finite()) throw NumericError("non-finite logits");
  return out;
}

// Row-softmax weights of one query against all keys, averaged into `pool_weights`.
void accumulate_attention(std::span<const double> scores, std::span<double> pool_weights, double inv_t) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  double s = 0.0;
  std::vector<double> e(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j) s += (e[j] = std::exp(scores[j] - mx));
  for (std::size_t j = 0; j < scores.size(); ++j) pool_weights[j] += e[j] / s * inv_t;
}

}  // namespace

OlaModel::OlaModel(const OlaConfig& config, std::uint64_t seed) : config_(config) {
  if (config.vocab_size == 0 || config.dim == 0 || config.hidden == 0 || config.classes == 0) {
    throw ArgumentError("OLA dimensions must be positive");
  }
  Rng rng(seed);
  const std::size_t d = config.dim;
  Tensor embedding({config.vocab_size, d});
  for (double& v : embedding.values()) v = rng.normal();
  params_.push_back(std::move(embedding));
  for (int i = 0; i < 4; ++i) params_.push_back(uniform_matrix(d, d, d, rng));
  params_.push_back(uniform_matrix(d, config.hidden, d, rng));
  params_.push_back(uniform_vector(config.hidden, d, rng));
  params_.push_back(uniform_matrix(config.hidden, config.classes, config.hidden, rng));
  params_.push_back(uniform_vector(config.classes, config.hidden, rng));
}

OlaModel::OlaModel(const OlaConfig& config, std::vector<Tensor> parameters)
    : config_(config), params_(std::move(parameters)) {
  const std::size_t d = config.dim;
  const std::vector<std::vector<std::size_t>> expected = {
      {config.vocab_size, d}, {d, d}, {d, d}, {d, d}, {d, d}, {d, config.hidden}, {config.hidden},
      {config.hidden, config.classes}, {config.classes}};
  if (params_.size() != kNumParams) throw ValidationError("OLA model needs 9 parameter tensors");
  for (std::size_t i = 0; i < kNumParams; ++i) {
    if (params_[i].shape() != expected[i]) {
      throw DimensionError(std::string("parameter ") + param_name(Param(i)) + " has shape " +
                           numerics::shape_string(params_[i].shape()) + ", expected " +
                           numerics::shape_string(expected[i]));
    }
    if (!params_[i].all_finite()) throw NumericError(std::string("non-finite parameter ") + param_name(Param(i)));
  }
}

Tensor OlaModel::embed(std::span<const TokenId> ids) const {
  const Tensor& table = parameter(Param::Embedding);
  std::vector<TokenId> kept;
  for (TokenId id : ids) {
    if (id >= table.rows()) {
      throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(table.rows()));
    }
    if (id != Tokenizer::kPad) kept.push_back(id);
  }
  if (kept.empty()) throw ArgumentError("no non-PAD tokens to embed");
  Tensor out({kept.size(), table.cols()});
  for (std::size_t t = 0; t < kept.size(); ++t) std::ranges::copy(table.row(kept[t]), out.row(t).begin());
  return out;
}

OlaModel::Graph OlaModel::forward_embeddings(Tape& tape, Var embeddings,
                                             std::array<bool, kNumGroups> trainable) const {
  Graph g;
  g.embeddings = embeddings;
  for (std::size_t i = 0; i < kNumParams; ++i) {
    const bool train = trainable[static_cast<std::size_t>(group_of(Param(i)))];
    // The embedding table itself is not on this graph; its rows arrive as `embeddings`.
    g.params[i] = i == 0 ? embeddings : tape.leaf(params_[i], train);
  }
  const auto p = [&](Param q) { return g.params[static_cast<std::size_t>(q)]; };
  const Var q = tape.matmul(embeddings, p(Param::Query));
  const Var k = tape.matmul(embeddings, p(Param::Key));
  const Var v = tape.matmul(embeddings, p(Param::Value));
  const Var scores = tape.scale(tape.matmul(q, tape.transpose(k)), 1.0 / std::sqrt(double(config_.dim)));
  g.attention = tape.softmax(scores, 1);
  const Var context = tape.matmul(tape.matmul(g.attention, v), p(Param::Output));
  const Var pooled = tape.mean(context, 0);
  const Var hidden = tape.relu(tape.add(tape.matmul(pooled, p(Param::Hidden)), p(Param::HiddenBias)));
  g.logits = tape.add(tape.matmul(hidden, p(Param::Logits)), p(Param::LogitsBias));
  return g;
}

OlaModel::Graph OlaModel::forward(Tape& tape, std::span<const TokenId> ids, std::array<bool, kNumGroups> trainable,
                                  bool embeddings_require_grad) const {
  const Var e = tape.leaf(embed(ids), embeddings_require_grad);
  return forward_embeddings(tape, e, trainable);
}

Tensor OlaModel::logits(std::span<const TokenId> ids) const {
  const Tensor e = embed(ids);
  const std::size_t t = e.rows();
  const Tensor q = matmul(e, parameter(Param::Query));
  const Tensor k = matmul(e, parameter(Param::Key));
  const Tensor v = matmul(e, parameter(Param::Value));
  const double scale = 1.0 / std::sqrt(double(config_.dim));
  std::vector<double> pool_weights(t, 0.0);
  std::vector<double> scores(t);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < config_.dim; ++c) s += q.at(i, c) * k.at(j, c);
      scores[j] = s * scale;
    }
    accumulate_attention(scores, pool_weights, 1.0 / double(t));
  }
  std::vector<double> pooled_v(config_.dim, 0.0);
  for (std::size_t j = 0; j < t; ++j)
    for (std::size_t c = 0; c < config_.dim; ++c) pooled_v[c] += pool_weights[j] * v.at(j, c);
  return classifier_head(*this, vecmat(pooled_v, parameter(Param::Output)));
}

FastScorer::FastScorer(const OlaModel& model)
    : model_(&model),
      q_(matmul(model.parameter(Param::Embedding), model.parameter(Param::Query))),
      k_(matmul(model.parameter(Param::Embedding), model.parameter(Param::Key))),
      vo_(matmul(matmul(model.parameter(Param::Embedding), model.parameter(Param::Value)),
                 model.parameter(Param::Output))) {}

Tensor FastScorer::logits(std::span<const TokenId> ids) const {
  std::vector<TokenId> kept;
  kept.reserve(ids.size());
  for (TokenId id : ids) {
    if (id >= q_.rows()) throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary");
    if (id != Tokenizer::kPad) kept.push_back(id);
  }
  if (kept.empty()) throw ArgumentError("no non-PAD tokens to score");
  const std::size_t t = kept.size();
  const std::size_t d = q_.cols();
  const double scale = 1.0 / std::sqrt(double(d));
  std::vector<double> pool_weights(t, 0.0);
  std::vector<double> scores(t);
  for (std::size_t i = 0; i < t; ++i) {
    auto qi = q_.row(kept[i]);
    for (std::size_t j = 0; j < t; ++j) {
      auto kj = k_.row(kept[j]);
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += qi[c] * kj[c];
      scores[j] = s * scale;
    }
    accumulate_attention(scores, pool_weights, 1.0 / double(t));
  }
  std::vector<double> pooled(d, 0.0);
  for (std::size_t j = 0; j < t; ++j) {
    auto row = vo_.row(kept[j]);
    for (std::size_t c = 0; c < d; ++c) pooled[c] += pool_weights[j] * row[c];
  }
  return classifier_head(*model_, std::move(pooled));
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw ArgumentError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

}  // namespace attrbench::model
