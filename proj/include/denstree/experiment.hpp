#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "denstree/bayes_net.hpp"
#include "denstree/conditional.hpp"
#include "denstree/dataset.hpp"

namespace denstree {

enum class ExperimentMode : std::uint8_t { cart, stratified, joint, approx, bnet, gmm };

std::string_view to_string(ExperimentMode mode);
std::optional<ExperimentMode> parse_experiment_mode(std::string_view name);

/// One algorithm of a comparison.
struct AlgorithmConfig {
  std::string label;  // empty: "<mode>-<leaf>"
  ExperimentMode mode = ExperimentMode::approx;
  LeafFamily leaf = LeafFamily::linear_interp;
  double epsilon = 1e-3;
  bool direct_alpha = false;
  std::optional<ConditionalSpec> spec;  // default: last variable given all others
  SearchConfig search;                   // bnet only; the final tier's leaf is `leaf`
  std::vector<int> k_grid{1, 2, 3, 4, 5, 6, 7, 8};  // gmm only

  std::string display_label() const;
};

/// Parses "mode:leaf" (leaf optional) into an algorithm.
AlgorithmConfig parse_algorithm(std::string_view text);

struct Preprocessing {
  bool scale = true;
  std::optional<NoiseKind> noise;
  double magnitude = 0.001;
};

struct ExperimentConfig {
  std::vector<AlgorithmConfig> algorithms;
  int folds = 10;
  Preprocessing preprocessing;
  std::uint64_t seed = 0;
  bool timing = true;  // false writes zero times so reports are byte-stable
};

/// Throws ConfigError for illegal mode/leaf combinations.
void validate(const ExperimentConfig& config);

struct ReportRow {
  std::string label;
  double mean_ll = 0.0;  // mean over folds of the test-set log-likelihood
  double ci95 = 0.0;     // t-interval half-width, df = folds - 1
  double learn_s = 0.0;
  double eval_s = 0.0;
  bool best_flag = false;
  double visited_per_query = 0.0;
  std::vector<double> fold_ll;
};

/// Scale, then noise (clamped), as configured.
Dataset preprocess(const Dataset& data, const Preprocessing& p, std::uint64_t seed);

/// Applies preprocessing, then k-fold CV for every algorithm; the best row
/// and every row not significantly worse are flagged.
std::vector<ReportRow> run_experiment(const Dataset& data, const ExperimentConfig& config);

struct TTest {
  double t = 0.0;
  int df = 0;
  double p_two_sided = 1.0;
  double p_greater = 0.5;  // one-sided: mean(a - b) > 0
};

/// Paired Student t-test on per-fold values.
TTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b);
double ci95_half_width(const std::vector<double>& values);
void mark_best(std::vector<ReportRow>& rows, double level = 0.05);

enum class ReportFormat : std::uint8_t { tsv, json };

std::string format_report(const std::vector<ReportRow>& rows, ReportFormat format);
std::vector<ReportRow> parse_report_json(std::string_view text);

}  // namespace denstree
