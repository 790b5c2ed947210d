#include <doctest.h>

#include <cmath>

#include "attrbench/errors.hpp"
#include "attrbench/lexicon.hpp"
#include "attrbench/ola_model.hpp"
#include "attrbench/random.hpp"
#include "attrbench/templates.hpp"
#include "attrbench/tokenizer.hpp"
#include "attrbench/training.hpp"
#include "temp_dir.hpp"

using namespace attrbench;
using namespace attrbench::model;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

namespace {

const corpus::DatasetBundle& small_bundle() {
  static const auto b = corpus::split_train_test(
      corpus::generate_template_corpus(150, 17, corpus::Lexicon::builtin(), corpus::Scope::AllWords), 0.8, 2);
  return b;
}

std::vector<TokenId> random_ids(std::size_t n, std::size_t vocab, Rng& rng) {
  std::vector<TokenId> ids(n);
  for (auto& id : ids) id = 3 + rng.index(vocab - 3);
  return ids;
}

// Independent forward pass written out with plain loops.
std::vector<double> reference_logits(const OlaModel& m, std::span<const TokenId> ids) {
  const auto& p = m.parameters();
  const std::size_t d = m.config().dim;
  std::vector<std::vector<double>> e, q, k, v;
  for (TokenId id : ids) {
    if (id == Tokenizer::kPad) continue;
    e.emplace_back(p[0].row(id).begin(), p[0].row(id).end());
  }
  const std::size_t t = e.size();
  auto mul = [&](const std::vector<double>& x, const Tensor& w) {
    std::vector<double> out(w.cols(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t j = 0; j < w.cols(); ++j) out[j] += x[i] * w.at(i, j);
    return out;
  };
  for (const auto& row : e) {
    q.push_back(mul(row, p[1]));
    k.push_back(mul(row, p[2]));
    v.push_back(mul(row, p[3]));
  }
  std::vector<double> pooled(d, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    std::vector<double> s(t);
    double mx = -1e300;
    for (std::size_t j = 0; j < t; ++j) {
      s[j] = 0;
      for (std::size_t c = 0; c < d; ++c) s[j] += q[i][c] * k[j][c];
      s[j] /= std::sqrt(double(d));
      mx = std::max(mx, s[j]);
    }
    double z = 0;
    for (double& x : s) z += (x = std::exp(x - mx));
    std::vector<double> ctx(d, 0.0);
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t c = 0; c < d; ++c) ctx[c] += s[j] / z * v[j][c];
    const auto out = mul(ctx, p[4]);
    for (std::size_t c = 0; c < d; ++c) pooled[c] += out[c] / double(t);
  }
  auto h = mul(pooled, p[5]);
  for (std::size_t j = 0; j < h.size(); ++j) h[j] = std::max(0.0, h[j] + p[6][j]);
  auto logits = mul(h, p[7]);
  for (std::size_t j = 0; j < logits.size(); ++j) logits[j] += p[8][j];
  return logits;
}

}  // namespace

TEST_CASE("tokenizer maps vocabulary words to single tokens") {
  const auto tok = Tokenizer::from_words({"he", "loves", "dogs"});
  const std::vector<std::string> words = {"he", "loves", "dogs"};
  const auto enc = tok.encode(words);
  CHECK(enc.ids.size() == 3);
  CHECK(enc.alignment == std::vector<std::size_t>{0, 1, 2});
  for (auto id : enc.ids) CHECK_FALSE(Tokenizer::is_special(id));
  CHECK(tok.encode(std::vector<std::string>{"He", "LOVES", "Dogs"}).ids == enc.ids);
}

TEST_CASE("out-of-vocabulary words split into aligned pieces") {
  const auto tok = Tokenizer::from_words({"bench", "mark", "dog"});
  const std::vector<std::string> words = {"benchmark", "dog"};
  const auto enc = tok.encode(words);
  REQUIRE(enc.ids.size() == 3);
  CHECK(tok.piece(enc.ids[0]) == "bench");
  CHECK(tok.piece(enc.ids[1]) == "##mark");
  CHECK(enc.alignment == std::vector<std::size_t>{0, 0, 1});
  CHECK(tok.detokenize(std::span(enc.ids).first(2)) == "benchmark");
}

TEST_CASE("unknown characters become the unknown piece") {
  const auto tok = Tokenizer::from_words({"ab"});
  const auto ids = tok.segment("a€b");
  CHECK(std::find(ids.begin(), ids.end(), Tokenizer::kUnk) != ids.end());
  CHECK_THROWS_AS(tok.encode(std::vector<std::string>{}), ArgumentError);
}

TEST_CASE("tokenizer alignment is surjective and pieces reconstruct words") {
  const auto& b = small_bundle();
  const auto tok = Tokenizer::build(b.train);
  Rng rng(3);
  // Characters of the training vocabulary, so every piece is in the inventory.
  std::string letters;
  for (const auto& w : corpus::vocabulary_of(b.train))
    for (char c : w)
      if (letters.find(c) == std::string::npos) letters += c;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> words;
    const std::size_t n = 1 + rng.index(8);
    for (std::size_t i = 0; i < n; ++i) {
      if (rng.uniform() < 0.5) {
        words.push_back(rng.pick(b.test).words[0]);
      } else {
        std::string w;
        for (std::size_t c = 0, len = 1 + rng.index(10); c < len; ++c) w += letters[rng.index(letters.size())];
        words.push_back(w);
      }
    }
    const auto enc = tok.encode(words);
    std::vector<std::vector<TokenId>> per_word(words.size());
    for (std::size_t t = 0; t < enc.ids.size(); ++t) per_word.at(enc.alignment[t]).push_back(enc.ids[t]);
    for (std::size_t w = 0; w < words.size(); ++w) {
      REQUIRE_FALSE(per_word[w].empty());
      CHECK(tok.detokenize(per_word[w]) == corpus::to_lower(words[w]));
    }
    CHECK(std::is_sorted(enc.alignment.begin(), enc.alignment.end()));
  }
}

TEST_CASE("tokenizer restores from its piece table") {
  const auto tok = Tokenizer::build(small_bundle().train);
  CHECK(Tokenizer::from_pieces(tok.pieces()) == tok);
  CHECK_THROWS_AS(Tokenizer::from_pieces({"a", "b"}), ValidationError);
}

TEST_CASE("forward pass matches an independent loop implementation") {
  const OlaModel m({40, 8, 6, 3}, 5);
  Rng rng(6);
  const FastScorer fast(m);
  for (int trial = 0; trial < 30; ++trial) {
    const auto ids = random_ids(1 + rng.index(7), 40, rng);
    const auto ref = reference_logits(m, ids);
    const Tensor a = m.logits(ids);
    const Tensor b = fast.logits(ids);
    Tape tape;
    const Tensor c = tape.value(m.forward(tape, ids).logits);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(a[j] == doctest::Approx(ref[j]).epsilon(1e-12));
      CHECK(b[j] == doctest::Approx(ref[j]).epsilon(1e-12));
      CHECK(c[j] == doctest::Approx(ref[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention structure") {
  const OlaModel m({30, 8, 8, 3}, 7);
  SUBCASE("single token attends to itself") {
    Tape t;
    const std::vector<TokenId> ids = {5};
    const auto g = m.forward(t, ids);
    CHECK(t.value(g.attention).size() == 1);
    CHECK(t.value(g.attention)[0] == 1.0);
  }
  SUBCASE("rows sum to one") {
    Tape t;
    const std::vector<TokenId> ids = {5, 9, 11, 3};
    const auto& a = t.value(m.forward(t, ids).attention);
    for (std::size_t r = 0; r < a.rows(); ++r) {
      double s = 0;
      for (double v : a.row(r)) s += v;
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("PAD tokens are masked out") {
    const std::vector<TokenId> plain = {5, 9, 11};
    const std::vector<TokenId> padded = {5, Tokenizer::kPad, 9, 11, Tokenizer::kPad, Tokenizer::kPad};
    CHECK(m.logits(plain) == m.logits(padded));
    CHECK_THROWS_AS(m.logits(std::vector<TokenId>{Tokenizer::kPad}), ArgumentError);
  }
  SUBCASE("out-of-range ids are rejected") {
    CHECK_THROWS_AS(m.logits(std::vector<TokenId>{30}), VocabularyError);
    CHECK_THROWS_AS(FastScorer(m).logits(std::vector<TokenId>{31}), VocabularyError);
  }
}

TEST_CASE("logits are finite on random initialisations") {
  Rng rng(8);
  const OlaModel m({500, 64, 64, 3}, 8);
  const FastScorer fast(m);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto ids = random_ids(1 + rng.index(20), 500, rng);
    CHECK(fast.logits(ids).all_finite());
  }
}

TEST_CASE("full model graph matches finite differences") {
  Rng rng(9);
  const OlaModel m({20, 6, 5, 3}, 9);
  for (int trial = 0; trial < 5; ++trial) {
    const auto ids = random_ids(6, 20, rng);
    std::vector<Tensor> point = {m.embed(ids)};
    for (std::size_t i = 1; i < kNumParams; ++i) point.push_back(m.parameters()[i]);
    const auto target = std::size_t(trial % 3);
    const numerics::GraphBuilder builder = [&](Tape& t, std::span<const Var> leaves) {
      const Var q = t.matmul(leaves[0], leaves[1]);
      const Var k = t.matmul(leaves[0], leaves[2]);
      const Var v = t.matmul(leaves[0], leaves[3]);
      const Var a = t.softmax(t.scale(t.matmul(q, t.transpose(k)), 1.0 / std::sqrt(6.0)), 1);
      const Var pooled = t.mean(t.matmul(t.matmul(a, v), leaves[4]), 0);
      const Var h = t.relu(t.add(t.matmul(pooled, leaves[5]), leaves[6]));
      return t.cross_entropy(t.add(t.matmul(h, leaves[7]), leaves[8]), target);
    };
    CHECK(numerics::finite_difference_check(builder, point) < 1e-4);
  }
}

TEST_CASE("scheme ladder") {
  CHECK(scheme_from_string("CEA") == TrainScheme::CEA);
  CHECK_THROWS_AS(scheme_from_string("CEfAf"), ArgumentError);
  const auto zs = trainable_groups(TrainScheme::ZS);
  const auto c = trainable_groups(TrainScheme::C);
  const auto ce = trainable_groups(TrainScheme::CE);
  const auto cea = trainable_groups(TrainScheme::CEA);
  const auto E = std::size_t(ParamGroup::Embedding), A = std::size_t(ParamGroup::Attention),
             K = std::size_t(ParamGroup::Classifier);
  CHECK((!zs[E] && !zs[A] && !zs[K]));
  CHECK((!c[E] && !c[A] && c[K]));
  CHECK((ce[E] && !ce[A] && ce[K]));
  CHECK((cea[E] && cea[A] && cea[K]));
}

TEST_CASE("training honours freeze masks and is deterministic") {
  const auto& b = small_bundle();
  const auto tok = Tokenizer::build(b.train);
  const OlaModel init({tok.size(), 16, 16, 3}, 3);
  TrainConfig cfg;
  cfg.seed = 3;
  cfg.epochs = 4;
  cfg.patience = 0;

  SUBCASE("ZS leaves parameters untouched") {
    const auto r = train(init, TrainScheme::ZS, cfg, tok, b);
    CHECK(r.model == init);
    REQUIRE(r.history.size() == 1);
    CHECK(r.history[0].epoch == 0);
  }
  SUBCASE("C freezes embedding and attention bitwise") {
    const auto r = train(init, TrainScheme::C, cfg, tok, b);
    for (std::size_t i = 0; i < kNumParams; ++i) {
      const bool frozen = group_of(Param(i)) != ParamGroup::Classifier;
      CHECK((r.model.parameters()[i] == init.parameters()[i]) == frozen);
    }
  }
  SUBCASE("CE leaves attention bitwise unchanged") {
    const auto r = train(init, TrainScheme::CE, cfg, tok, b);
    for (std::size_t i = 0; i < kNumParams; ++i) {
      const bool frozen = group_of(Param(i)) == ParamGroup::Attention;
      CHECK((r.model.parameters()[i] == init.parameters()[i]) == frozen);
    }
  }
  SUBCASE("same seed gives identical models") {
    const auto r1 = train(init, TrainScheme::CEA, cfg, tok, b);
    const auto r2 = train(init, TrainScheme::CEA, cfg, tok, b);
    CHECK(r1.model == r2.model);
    CHECK(r1.best_epoch == r2.best_epoch);
  }
  SUBCASE("loss decreases for trainable schemes") {
    for (auto s : {TrainScheme::C, TrainScheme::CE, TrainScheme::CEA}) {
      const auto r = train(init, s, cfg, tok, b);
      CHECK(r.history.back().train_loss < r.history.front().train_loss);
    }
  }
}

TEST_CASE("training learns the all-words task") {
  const auto& b = small_bundle();
  const auto tok = Tokenizer::build(b.train);
  const OlaModel init({tok.size(), 32, 32, 3}, 4);
  TrainConfig cfg;
  cfg.seed = 4;
  cfg.epochs = 40;
  cfg.patience = 8;
  const auto r = train(init, TrainScheme::CEA, cfg, tok, b);
  CHECK(evaluate_accuracy(r.model, tok, b.test) > 0.8);
  CHECK(evaluate_accuracy(init, tok, b.test) < 0.6);
}

TEST_CASE("accuracy conventions") {
  const auto& b = small_bundle();
  const auto tok = Tokenizer::build(b.train);
  SUBCASE("constant logits pick class 0") {
    std::vector<Tensor> zeros;
    const OlaConfig cfg{tok.size(), 4, 4, 3};
    for (const auto& shape : std::vector<std::vector<std::size_t>>{
             {cfg.vocab_size, 4}, {4, 4}, {4, 4}, {4, 4}, {4, 4}, {4, 4}, {4}, {4, 3}, {3}})
      zeros.emplace_back(shape);
    const OlaModel flat(cfg, zeros);
    double female = 0;
    for (const auto& s : b.test) female += s.target() == 0;
    CHECK(evaluate_accuracy(flat, tok, b.test) == doctest::Approx(female / double(b.test.size())));
    for (auto p : predict(flat, tok, b.test)) CHECK(p == 0);
  }
  SUBCASE("matches a manual trace") {
    const OlaModel m({tok.size(), 8, 8, 3}, 12);
    std::span<const corpus::LabeledSentence> first(b.test.data(), 10);
    int correct = 0;
    for (const auto& s : first) {
      const auto logits = reference_logits(m, tok.tokenize(s).ids);
      const auto best = std::size_t(std::max_element(logits.begin(), logits.end()) - logits.begin());
      correct += int(best) == s.target();
    }
    CHECK(evaluate_accuracy(m, tok, first) == doctest::Approx(correct / 10.0));
  }
  CHECK(argmax(std::vector<double>{1, 3, 3}) == 1);
  CHECK_THROWS_AS(argmax(std::vector<double>{}), ArgumentError);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = {};
  c.learning_rate = -1;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = {};
  c.validation_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
}

TEST_CASE("checkpoints reload exactly") {
  const auto tok = Tokenizer::build(small_bundle().train);
  const Checkpoint ckpt{OlaModel({tok.size(), 8, 6, 3}, 21), tok, TrainScheme::CE, 21};
  const std::string text = serialize_checkpoint(ckpt);
  const auto back = parse_checkpoint(text);
  CHECK(back.model == ckpt.model);
  CHECK(back.tokenizer == ckpt.tokenizer);
  CHECK(back.scheme == TrainScheme::CE);
  CHECK(back.seed == 21);
  CHECK(serialize_checkpoint(back) == text);

  TempDir dir;
  save_checkpoint(ckpt, dir / "m.ckpt");
  CHECK(load_checkpoint(dir / "m.ckpt").model == ckpt.model);
  CHECK_THROWS_AS(parse_checkpoint("attrbench-checkpoint 2\n"), ParseError);
  CHECK_THROWS_AS(parse_checkpoint(text.substr(0, text.size() / 2)), Error);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
}
