#include "attrbench/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "attrbench/errors.hpp"
#include "attrbench/random.hpp"

namespace attrbench::model {

using corpus::LabeledSentence;
using numerics::Tape;
using numerics::Tensor;

const char* scheme_name(TrainScheme s) noexcept {
  switch (s) {
    case TrainScheme::ZS: return "ZS";
    case TrainScheme::C: return "C";
    case TrainScheme::CE: return "CE";
    case TrainScheme::CEA: return "CEA";
  }
  return "?";
}

TrainScheme scheme_from_string(std::string_view s) {
  for (auto scheme : kAllSchemes)
    if (s == scheme_name(scheme)) return scheme;
  throw ArgumentError("unknown training scheme '" + std::string(s) + "'");
}

std::array<bool, kNumGroups> trainable_groups(TrainScheme s) noexcept {
  // Order: Embedding, Attention, Classifier.
  switch (s) {
    case TrainScheme::ZS: return {false, false, false};
    case TrainScheme::C: return {false, false, true};
    case TrainScheme::CE: return {true, false, true};
    case TrainScheme::CEA: return {true, true, true};
  }
  return {};
}

void TrainConfig::validate() const {
  if (batch_size == 0 || epochs == 0) throw ArgumentError("batch size and epoch count must be positive");
  if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_epsilon > 0.0)) {
    throw ArgumentError("invalid Adam hyperparameters");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ArgumentError("validation fraction must lie in [0, 1)");
  }
}

namespace {

struct Encoded {
  std::vector<TokenId> ids;
  std::size_t target;
};

std::vector<Encoded> encode_all(const Tokenizer& tokenizer, std::span<const LabeledSentence> data) {
  std::vector<Encoded> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back({tokenizer.tokenize(s).ids, static_cast<std::size_t>(s.target())});
  return out;
}

double accuracy_of(const OlaModel& model, std::span<const Encoded> data) {
  if (data.empty()) return 0.0;
  const FastScorer scorer(model);
  std::size_t correct = 0;
  for (const auto& e : data) correct += argmax(scorer.logits(e.ids).data()) == e.target;
  return double(correct) / double(data.size());
}

double loss_of(const OlaModel& model, std::span<const Encoded> data) {
  if (data.empty()) return 0.0;
  const FastScorer scorer(model);
  double total = 0.0;
  for (const auto& e : data) {
    const Tensor z = scorer.logits(e.ids);
    const double mx = *std::max_element(z.values().begin(), z.values().end());
    double s = 0.0;
    for (double v : z.values()) s += std::exp(v - mx);
    total += mx + std::log(s) - z[e.target];
  }
  return total / double(data.size());
}

class Adam {
 public:
  Adam(const TrainConfig& c, const std::vector<Tensor>& params) : c_(c) {
    for (const auto& p : params) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }

  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, const std::vector<bool>& active) {
    ++t_;
    const double bc1 = 1.0 - std::pow(c_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(c_.beta2, double(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!active[i]) continue;
      auto& p = params[i];
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double g = grads[i][j];
        m_[i][j] = c_.beta1 * m_[i][j] + (1.0 - c_.beta1) * g;
        v_[i][j] = c_.beta2 * v_[i][j] + (1.0 - c_.beta2) * g * g;
        p[j] -= c_.learning_rate * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + c_.adam_epsilon);
      }
    }
  }

 private:
  const TrainConfig& c_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

// Holds out whole base sentences (all variants) for validation.
void carve_validation(std::span<const LabeledSentence> train, double fraction, std::uint64_t seed,
                      std::vector<LabeledSentence>& fit, std::vector<LabeledSentence>& validation) {
  std::vector<std::uint64_t> ids;
  for (const auto& s : train) ids.push_back(s.sentence_idx);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  Rng rng = Rng::derived({seed, 0x76616c});
  rng.shuffle(std::span<std::uint64_t>(ids));
  const auto n_val = static_cast<std::size_t>(std::llround(fraction * double(ids.size())));
  const std::set<std::uint64_t> held(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  for (const auto& s : train) (held.contains(s.sentence_idx) ? validation : fit).push_back(s);
}

}  // namespace

double mean_loss(const OlaModel& model, const Tokenizer& tokenizer, std::span<const LabeledSentence> data) {
  const auto enc = encode_all(tokenizer, data);
  return loss_of(model, enc);
}

std::vector<std::size_t> predict(const OlaModel& model, const Tokenizer& tokenizer,
                                 std::span<const LabeledSentence> sentences) {
  const FastScorer scorer(model);
  std::vector<std::size_t> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(argmax(scorer.logits(tokenizer.tokenize(s).ids).data()));
  return out;
}

double evaluate_accuracy(const OlaModel& model, const Tokenizer& tokenizer,
                         std::span<const LabeledSentence> sentences) {
  const auto enc = encode_all(tokenizer, sentences);
  return accuracy_of(model, enc);
}

TrainResult train(const OlaModel& initial, TrainScheme scheme, const TrainConfig& config,
                  const Tokenizer& tokenizer, const corpus::DatasetBundle& bundle) {
  config.validate();
  if (bundle.train.empty()) throw ArgumentError("training split is empty");
  if (initial.config().vocab_size != tokenizer.size()) {
    throw VocabularyError("model vocabulary (" + std::to_string(initial.config().vocab_size) +
                          ") does not match tokenizer (" + std::to_string(tokenizer.size()) + ")");
  }

  std::vector<LabeledSentence> fit_sentences;
  std::vector<LabeledSentence> val_sentences;
  if (config.validation_fraction > 0.0) {
    carve_validation(bundle.train, config.validation_fraction, config.seed, fit_sentences, val_sentences);
  } else {
    fit_sentences = bundle.train;
  }
  const auto fit = encode_all(tokenizer, fit_sentences);
  const auto val = encode_all(tokenizer, val_sentences.empty() ? fit_sentences : val_sentences);

  TrainResult result{initial, {}, 0};
  result.history.push_back({0, loss_of(initial, fit), accuracy_of(initial, val)});
  if (scheme == TrainScheme::ZS) return result;

  const auto groups = trainable_groups(scheme);
  std::vector<bool> active(kNumParams);
  for (std::size_t i = 0; i < kNumParams; ++i) active[i] = groups[static_cast<std::size_t>(group_of(Param(i)))];

  OlaModel model = initial;
  Adam adam(config, model.parameters());
  double best_accuracy = result.history.front().validation_accuracy;
  std::size_t since_best = 0;

  std::vector<std::size_t> order(fit.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng = Rng::derived({config.seed, epoch});
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Tensor> grads;
      for (const auto& p : model.parameters()) grads.emplace_back(p.shape());

      for (std::size_t b = start; b < end; ++b) {
        const Encoded& ex = fit[order[b]];
        Tape tape;
        const auto graph = model.forward(tape, ex.ids, groups, groups[0]);
        const auto loss = tape.cross_entropy(graph.logits, ex.target);
        epoch_loss += tape.value(loss).item();
        const auto g = numerics::grad(tape, loss);
        for (std::size_t i = 1; i < kNumParams; ++i) {
          if (!active[i]) continue;
          const Tensor& d = g.wrt(graph.params[i]);
          for (std::size_t j = 0; j < d.size(); ++j) grads[i][j] += d[j];
        }
        if (active[0]) {
          const Tensor& d = g.wrt(graph.embeddings);
          for (std::size_t t = 0; t < ex.ids.size(); ++t) {
            auto dst = grads[0].row(ex.ids[t]);
            auto src = d.row(t);
            for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
          }
        }
      }
      const double inv = 1.0 / double(end - start);
      for (auto& g : grads)
        for (double& v : g.values()) v *= inv;
      adam.step(model.mutable_parameters(), grads, active);
    }

    const double val_acc = accuracy_of(model, val);
    result.history.push_back({epoch, epoch_loss / double(fit.size()), val_acc});
    if (val_acc > best_accuracy) {
      best_accuracy = val_acc;
      result.model = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

// --- checkpoints ------------------------------------------------------------

namespace {

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ValidationError("bad number '" + std::string(s) + "'");
  return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  const auto& cfg = c.model.config();
  std::string out = "attrbench-checkpoint 1\n";
  out += std::string("scheme ") + scheme_name(c.scheme) + "\n";
  out += "seed " + std::to_string(c.seed) + "\n";
  out += "dims " + std::to_string(cfg.vocab_size) + " " + std::to_string(cfg.dim) + " " +
         std::to_string(cfg.hidden) + " " + std::to_string(cfg.classes) + "\n";
  out += "pieces " + std::to_string(c.tokenizer.size()) + "\n";
  for (const auto& p : c.tokenizer.pieces()) out += p + "\n";
  for (std::size_t i = 0; i < kNumParams; ++i) {
    const Tensor& t = c.model.parameters()[i];
    out += std::string("tensor ") + param_name(Param(i));
    for (auto d : t.shape()) out += " " + std::to_string(d);
    out += "\n";
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (j) out += ' ';
      out += format_double(t[j]);
    }
    out += "\n";
  }
  out += "end\n";
  return out;
}

Checkpoint parse_checkpoint(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() -> std::string& {
    if (!std::getline(in, line)) throw ParseError(line_no, "unexpected end of checkpoint");
    ++line_no;
    return line;
  };
  auto expect_key = [&](const std::string& key) {
    std::istringstream ls(next());
    std::string k;
    ls >> k;
    if (k != key) throw ParseError(line_no, "expected '" + key + "'");
    std::string rest;
    std::getline(ls, rest);
    return rest;
  };

  if (next() != "attrbench-checkpoint 1") throw ParseError(line_no, "not a version-1 checkpoint");
  Checkpoint c;
  c.scheme = scheme_from_string(std::string(expect_key("scheme").substr(1)));
  c.seed = std::stoull(expect_key("seed"));
  OlaConfig cfg;
  {
    std::istringstream ls(expect_key("dims"));
    ls >> cfg.vocab_size >> cfg.dim >> cfg.hidden >> cfg.classes;
    if (!ls) throw ParseError(line_no, "bad dims line");
  }
  const std::size_t n_pieces = std::stoull(expect_key("pieces"));
  std::vector<std::string> pieces;
  for (std::size_t i = 0; i < n_pieces; ++i) pieces.push_back(next());
  c.tokenizer = Tokenizer::from_pieces(std::move(pieces));

  std::vector<Tensor> params;
  for (std::size_t i = 0; i < kNumParams; ++i) {
    std::istringstream ls(next());
    std::string kw, name;
    ls >> kw >> name;
    if (kw != "tensor" || name != param_name(Param(i))) {
      throw ParseError(line_no, std::string("expected tensor ") + param_name(Param(i)));
    }
    std::vector<std::size_t> shape;
    for (std::size_t d; ls >> d;) shape.push_back(d);
    std::vector<double> values;
    const std::string& data = next();
    std::size_t pos = 0;
    while (pos < data.size()) {
      const std::size_t sp = std::min(data.find(' ', pos), data.size());
      if (sp > pos) values.push_back(parse_double(std::string_view(data).substr(pos, sp - pos)));
      pos = sp + 1;
    }
    params.emplace_back(std::move(shape), std::move(values));
  }
  if (next() != "end") throw ParseError(line_no, "expected 'end'");
  c.model = OlaModel(cfg, std::move(params));
  if (cfg.vocab_size != c.tokenizer.size()) throw ValidationError("checkpoint vocabulary size mismatch");
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << serialize_checkpoint(checkpoint);
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace attrbench::model
