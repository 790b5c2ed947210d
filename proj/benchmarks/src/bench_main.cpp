#include <benchmark/benchmark.h>

#include "attrbench/attribution.hpp"
#include "attrbench/lexicon.hpp"
#include "attrbench/templates.hpp"
#include "attrbench/training.hpp"

using namespace attrbench;

namespace {

struct Fixture {
  corpus::DatasetBundle bundle;
  model::Tokenizer tokenizer;
  model::OlaModel model;
  attribution::PatternScores pattern;

  Fixture() {
    bundle = corpus::split_train_test(
        corpus::generate_template_corpus(300, 3, corpus::Lexicon::builtin(), corpus::Scope::AllWords), 0.8, 1);
    tokenizer = model::Tokenizer::build(bundle.train);
    model = model::OlaModel({tokenizer.size(), 64, 64, corpus::kNumClasses}, 1);
    std::vector<int> targets;
    for (const auto& s : bundle.train) targets.push_back(s.target());
    pattern = attribution::pattern_variant(attribution::tfidf_features(bundle.train), targets);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

static void CorpusGeneration(benchmark::State& state) {
  const auto& lex = corpus::Lexicon::builtin();
  for (auto _ : state) {
    auto b = corpus::generate_template_corpus(std::size_t(state.range(0)), 7, lex, corpus::Scope::AllWords);
    benchmark::DoNotOptimize(b);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 3);
}
BENCHMARK(CorpusGeneration)->Arg(200)->Arg(1610)->Unit(benchmark::kMillisecond);

static void ForwardTape(benchmark::State& state) {
  const auto& f = fixture();
  const auto ids = f.tokenizer.tokenize(f.bundle.test[0]).ids;
  for (auto _ : state) benchmark::DoNotOptimize(f.model.logits(ids));
}
BENCHMARK(ForwardTape);

static void ForwardFastScorer(benchmark::State& state) {
  const auto& f = fixture();
  const model::FastScorer scorer(f.model);
  const auto ids = f.tokenizer.tokenize(f.bundle.test[0]).ids;
  for (auto _ : state) benchmark::DoNotOptimize(scorer.logits(ids));
}
BENCHMARK(ForwardFastScorer);

static void KernelShapToy(benchmark::State& state) {
  const std::size_t d = std::size_t(state.range(0));
  std::vector<double> w(d);
  for (std::size_t j = 0; j < d; ++j) w[j] = double(j) - 0.5 * double(d);
  const attribution::CoalitionValue v = [&](const std::vector<bool>& z) {
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) s += z[j] ? w[j] : 0.0;
    return s * s;
  };
  Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(attribution::kernel_shap(v, d, 2048, rng));
}
BENCHMARK(KernelShapToy)->Arg(6)->Arg(12)->Arg(24)->Unit(benchmark::kMicrosecond);

static void ExplainSentence(benchmark::State& state) {
  const auto& f = fixture();
  const auto method = attribution::kAllMethods[std::size_t(state.range(0))];
  attribution::MethodOptions o;
  const attribution::Explainer ex(f.model, f.tokenizer, f.pattern, o, "ZS", 1);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ex.explain(f.bundle.test[i++ % f.bundle.test.size()], method));
  }
  state.SetLabel(attribution::method_name(method));
}
BENCHMARK(ExplainSentence)->DenseRange(0, 9)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
