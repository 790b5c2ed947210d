#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "attrbench/errors.hpp"
#include "attrbench/evaluation.hpp"
#include "attrbench/pipeline.hpp"

namespace {

using namespace attrbench;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitIncomplete = 2;

void print_generate(const std::vector<pipeline::ScopeAudit>& audits) {
  for (const auto& a : audits) {
    std::cout << corpus::scope_name(a.scope) << ": " << a.train << " train / " << a.test << " test, bias_C = ("
              << evaluation::format_double(a.bias[0]) << ", " << evaluation::format_double(a.bias[1]) << ", "
              << evaluation::format_double(a.bias[2]) << ")\n";
  }
}

void print_train(const std::vector<pipeline::TrainedModel>& models) {
  for (const auto& m : models) {
    std::cout << corpus::scope_name(m.scope) << ' ' << model::scheme_name(m.scheme) << " seed " << m.seed
              << ": test accuracy " << evaluation::format_double(m.test_accuracy)
              << (m.reused ? " (existing checkpoint)" : "") << '\n';
  }
}

void print_attribute(const std::vector<pipeline::DumpStatus>& dumps) {
  std::size_t reused = 0;
  for (const auto& d : dumps) reused += d.reused;
  std::cout << dumps.size() << " attribution dumps (" << dumps.size() - reused << " written, " << reused
            << " verified and kept)\n";
}

void print_report(const std::vector<evaluation::BenchmarkReport>& reports, const pipeline::RunConfig& config) {
  std::vector<std::string> ladder;
  for (auto s : config.training.schemes)
    if (model::scheme_name(s) != config.evaluation.baseline_scheme) ladder.push_back(model::scheme_name(s));
  for (const auto& r : reports) {
    std::cout << "== " << r.metadata.scope << " (RMA vs " << r.baseline_scheme << ")\n"
              << evaluation::rma_ladder(r, ladder);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ground-truth feature attribution benchmark on gender-controlled text"};
  app.require_subcommand(1);

  fs::path config_path;
  fs::path out_flag;
  std::size_t workers = 1;
  bool force = false;
  app.add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
  app.add_option("--workers", workers, "Parallel jobs")->check(CLI::PositiveNumber);
  app.add_option("--out", out_flag, "Output root (overrides ATTRBENCH_OUT and the config)");
  app.add_flag("--force", force, "Recompute existing checkpoints and dumps");

  auto* generate = app.add_subcommand("generate", "Write train/test corpora and the bias audit");
  auto* train = app.add_subcommand("train", "Train one model per (scope, scheme, seed)");
  auto* attribute = app.add_subcommand("attribute", "Write attribution dumps for every trained model");
  auto* report = app.add_subcommand("evaluate-report", "Score dumps and write MA/RMA reports");
  for (auto* sub : {generate, train, attribute, report}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    const auto config = pipeline::load_config(config_path);
    const pipeline::RunOptions options{pipeline::resolve_output_root(config, out_flag), workers, force};
    if (generate->parsed()) print_generate(pipeline::cmd_generate(config, options));
    if (train->parsed()) print_train(pipeline::cmd_train(config, options));
    if (attribute->parsed()) print_attribute(pipeline::cmd_attribute(config, options));
    if (report->parsed()) print_report(pipeline::cmd_report(config, options), config);
    return kExitOk;
  } catch (const IncompleteGridError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIncomplete;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
}
