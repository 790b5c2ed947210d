#include "attrbench/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "attrbench/errors.hpp"

namespace attrbench::evaluation {

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

WordExplanation normalize_and_aggregate(const AttributionMap& map, std::size_t n_words) {
  if (n_words == 0) throw ArgumentError("explanation needs at least one word");
  if (map.alignment.size() != map.token_scores.size()) {
    throw AlignmentError("alignment covers " + std::to_string(map.alignment.size()) + " of " +
                         std::to_string(map.token_scores.size()) + " tokens");
  }
  WordExplanation out;
  out.sentence_idx = map.sentence_idx;
  out.target = map.target;
  out.method = map.method;
  out.scheme = map.scheme;
  out.seed = map.seed;
  out.word_scores.assign(n_words, 0.0);
  for (std::size_t t = 0; t < map.token_scores.size(); ++t) {
    const std::int64_t w = map.alignment[t];
    if (w < 0) continue;
    if (std::size_t(w) >= n_words) {
      throw AlignmentError("token " + std::to_string(t) + " aligned to word " + std::to_string(w) + " of " +
                           std::to_string(n_words));
    }
    if (!std::isfinite(map.token_scores[t])) throw NumericError("non-finite token score");
    out.word_scores[std::size_t(w)] += std::abs(map.token_scores[t]);
  }
  double total = 0.0;
  for (double s : out.word_scores) total += s;
  if (total > 0.0) {
    for (double& s : out.word_scores) s /= total;
  } else {
    std::fill(out.word_scores.begin(), out.word_scores.end(), 1.0 / double(n_words));
  }
  return out;
}

double mass_accuracy(std::span<const std::uint8_t> ground_truth, std::span<const double> word_scores) {
  if (ground_truth.size() != word_scores.size()) {
    throw ContractError("mask has " + std::to_string(ground_truth.size()) + " words, explanation " +
                        std::to_string(word_scores.size()));
  }
  double ma = 0.0;
  for (std::size_t j = 0; j < ground_truth.size(); ++j)
    if (ground_truth[j]) ma += word_scores[j];
  return ma;
}

double mass_accuracy(std::span<const std::uint8_t> ground_truth, const WordExplanation& explanation) {
  return mass_accuracy(ground_truth, std::span<const double>(explanation.word_scores));
}

double relative_mass_accuracy(double ma, double ma_baseline) {
  if (!(ma_baseline > 0.0)) throw UndefinedRmaError("baseline mass accuracy " + format_double(ma_baseline));
  return ma / ma_baseline;
}

GroundTruthIndex ground_truth_index(std::span<const corpus::LabeledSentence> sentences) {
  GroundTruthIndex index;
  for (const auto& s : sentences) index[{s.sentence_idx, s.target()}] = s.ground_truth;
  return index;
}

const CellSummary* BenchmarkReport::cell(std::string_view scheme, Method method) const {
  for (const auto& c : cells)
    if (c.scheme == scheme && c.method == method) return &c;
  return nullptr;
}

namespace {

std::pair<double, double> mean_and_std(std::span<const double> xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= double(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / double(xs.size()))};
}

}  // namespace

BenchmarkReport summarize(std::span<const WordExplanation> explanations, const GroundTruthIndex& ground_truth,
                          const GridSpec& grid, const ReportMetadata& metadata) {
  using Key = std::tuple<std::string, Method, std::uint64_t>;
  // Keyed by sentence so sums run in a fixed order whatever the input order.
  std::map<Key, std::map<std::pair<std::uint64_t, int>, double>> scores;
  for (const auto& e : explanations) {
    auto it = ground_truth.find({e.sentence_idx, e.target});
    if (it == ground_truth.end()) {
      throw ValidationError("no ground truth for sentence " + std::to_string(e.sentence_idx) + " target " +
                            std::to_string(e.target));
    }
    if (!scores[{e.scheme, e.method, e.seed}].emplace(it->first, mass_accuracy(it->second, e)).second) {
      throw ValidationError("duplicate explanation for sentence " + std::to_string(e.sentence_idx) + " target " +
                            std::to_string(e.target) + " in " + e.scheme + " / " +
                            attribution::method_name(e.method) + " / seed " + std::to_string(e.seed));
    }
  }

  std::string gaps;
  for (const auto& scheme : grid.schemes)
    for (Method m : grid.methods)
      for (auto seed : grid.seeds)
        if (!scores.contains({scheme, m, seed}))
          gaps += "\n  " + scheme + " / " + attribution::method_name(m) + " / seed " + std::to_string(seed);
  if (grid.schemes.empty() || grid.methods.empty() || grid.seeds.empty()) gaps += "\n  empty grid";
  if (!gaps.empty()) throw IncompleteGridError("incomplete attribution grid, missing:" + gaps);

  BenchmarkReport report;
  report.metadata = metadata;
  report.baseline_scheme = grid.baseline_scheme;
  for (const auto& scheme : grid.schemes) {
    for (Method m : grid.methods) {
      std::vector<double> seed_means;
      for (auto seed : grid.seeds) {
        std::vector<double> xs;
        for (const auto& [key, ma] : scores.at({scheme, m, seed})) xs.push_back(ma);
        const auto [mean, sd] = mean_and_std(xs);
        report.seed_cells.push_back({scheme, m, seed, xs.size(), mean, sd});
        seed_means.push_back(mean);
      }
      const auto [mean, sd] = mean_and_std(seed_means);
      report.cells.push_back({scheme, m, seed_means.size(), mean, sd, std::nullopt});
    }
  }
  for (auto& c : report.cells) {
    const CellSummary* base = report.cell(grid.baseline_scheme, c.method);
    if (base && base->mean_ma > 0.0) c.rma = relative_mass_accuracy(c.mean_ma, base->mean_ma);
  }
  return report;
}

std::string report_csv(const BenchmarkReport& report) {
  std::string out = "scheme,method,seed,mean_MA,std_MA,RMA\n";
  auto rma_of = [&](const std::string& scheme, Method m) {
    const CellSummary* c = report.cell(scheme, m);
    return c && c->rma ? format_double(*c->rma) : std::string();
  };
  for (const auto& s : report.seed_cells) {
    out += s.scheme + ',' + attribution::method_name(s.method) + ',' + std::to_string(s.seed) + ',' +
           format_double(s.mean_ma) + ',' + format_double(s.std_ma) + ',' + rma_of(s.scheme, s.method) + '\n';
  }
  for (const auto& c : report.cells) {
    out += c.scheme + ',' + attribution::method_name(c.method) + ",all," + format_double(c.mean_ma) + ',' +
           format_double(c.std_ma) + ',' + rma_of(c.scheme, c.method) + '\n';
  }
  return out;
}

std::string report_json(const BenchmarkReport& report) {
  nlohmann::ordered_json j;
  j["scope"] = report.metadata.scope;
  j["config_hash"] = report.metadata.config_hash;
  j["baseline_scheme"] = report.baseline_scheme;
  auto& seeds = j["seed_cells"] = nlohmann::ordered_json::array();
  for (const auto& s : report.seed_cells) {
    seeds.push_back({{"scheme", s.scheme},
                     {"method", attribution::method_name(s.method)},
                     {"seed", s.seed},
                     {"sentences", s.sentences},
                     {"mean_MA", s.mean_ma},
                     {"std_MA", s.std_ma}});
  }
  auto& cells = j["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : report.cells) {
    nlohmann::ordered_json row = {{"scheme", c.scheme},
                                  {"method", attribution::method_name(c.method)},
                                  {"seeds", c.seeds},
                                  {"mean_MA", c.mean_ma},
                                  {"std_MA", c.std_ma}};
    row["RMA"] = c.rma ? nlohmann::ordered_json(*c.rma) : nlohmann::ordered_json(nullptr);
    cells.push_back(std::move(row));
  }
  return j.dump(2) + "\n";
}

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, digits);
  return std::string(buf, ptr);
}

}  // namespace

std::string report_svg(const BenchmarkReport& report) {
  std::vector<std::string> schemes;
  std::vector<Method> methods;
  for (const auto& c : report.cells) {
    if (std::find(schemes.begin(), schemes.end(), c.scheme) == schemes.end()) schemes.push_back(c.scheme);
    if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
  }
  static constexpr const char* palette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};
  const double bar = 12.0, group_gap = 18.0, left = 60.0, panel_h = 200.0, top = 40.0, label_h = 90.0;
  const double group_w = bar * double(schemes.size()) + group_gap;
  const double width = left + group_w * double(methods.size()) + 20.0;
  const double height = top + 2.0 * (panel_h + label_h) + 20.0;

  double max_rma = 1.0;
  for (const auto& c : report.cells)
    if (c.rma) max_rma = std::max(max_rma, *c.rma);

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width, 0) << "\" height=\""
      << fixed(height, 0) << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  for (std::size_t s = 0; s < schemes.size(); ++s) {
    svg << "<rect x=\"" << fixed(left + 70.0 * double(s)) << "\" y=\"8\" width=\"10\" height=\"10\" fill=\""
        << palette[s % 6] << "\"/><text x=\"" << fixed(left + 70.0 * double(s) + 14.0) << "\" y=\"17\">"
        << schemes[s] << "</text>\n";
  }
  auto panel = [&](double y0, const char* title, double vmax, auto value) {
    svg << "<text x=\"4\" y=\"" << fixed(y0 - 6.0) << "\">" << title << "</text>\n";
    svg << "<line x1=\"" << fixed(left) << "\" y1=\"" << fixed(y0 + panel_h) << "\" x2=\"" << fixed(width - 10.0)
        << "\" y2=\"" << fixed(y0 + panel_h) << "\" stroke=\"black\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
      const double v = vmax * tick / 4.0;
      const double y = y0 + panel_h - panel_h * tick / 4.0;
      svg << "<text x=\"" << fixed(left - 6.0) << "\" y=\"" << fixed(y + 3.0) << "\" text-anchor=\"end\">"
          << fixed(v) << "</text>\n";
    }
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const double gx = left + group_w * double(m) + group_gap / 2.0;
      for (std::size_t s = 0; s < schemes.size(); ++s) {
        const CellSummary* c = report.cell(schemes[s], methods[m]);
        const std::optional<double> v = c ? value(*c) : std::nullopt;
        if (!v) continue;
        const double h = panel_h * std::clamp(*v / vmax, 0.0, 1.0);
        svg << "<rect x=\"" << fixed(gx + bar * double(s)) << "\" y=\"" << fixed(y0 + panel_h - h) << "\" width=\""
            << fixed(bar - 1.0) << "\" height=\"" << fixed(h) << "\" fill=\"" << palette[s % 6] << "\"><title>"
            << schemes[s] << ' ' << attribution::method_name(methods[m]) << ' ' << format_double(*v)
            << "</title></rect>\n";
      }
      const double cx = gx + bar * double(schemes.size()) / 2.0;
      const double ly = y0 + panel_h + 8.0;
      svg << "<text transform=\"translate(" << fixed(cx) << ',' << fixed(ly) << ") rotate(60)\">"
          << attribution::method_name(methods[m]) << "</text>\n";
    }
  };
  panel(top, "RMA", max_rma, [](const CellSummary& c) { return c.rma; });
  panel(top + panel_h + label_h, "MA", 1.0, [](const CellSummary& c) { return std::optional<double>(c.mean_ma); });
  svg << "</svg>\n";
  return svg.str();
}

std::string rma_ladder(const BenchmarkReport& report, std::span<const std::string> schemes) {
  std::ostringstream out;
  out << "method";
  for (const auto& s : schemes) out << '\t' << s;
  out << '\n';
  std::vector<Method> methods;
  for (const auto& c : report.cells)
    if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
  for (Method m : methods) {
    out << attribution::method_name(m);
    for (const auto& s : schemes) {
      const CellSummary* c = report.cell(s, m);
      out << '\t' << (c && c->rma ? fixed(*c->rma, 3) : std::string("-"));
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace attrbench::evaluation
