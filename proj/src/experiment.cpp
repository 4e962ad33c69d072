#include "denstree/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "denstree/error.hpp"
#include "denstree/mixture.hpp"
#include "denstree/serialize.hpp"

namespace denstree {

namespace {

constexpr std::uint64_t kNoiseKey = 0xe4e50001;
constexpr std::uint64_t kFoldKey = 0xe4e50002;
constexpr std::uint64_t kLearnKey = 0xe4e50003;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::optional<ConditionalMode> conditional_mode(ExperimentMode m) {
  switch (m) {
    case ExperimentMode::cart: return ConditionalMode::cart;
    case ExperimentMode::stratified: return ConditionalMode::stratified;
    case ExperimentMode::joint: return ConditionalMode::joint;
    case ExperimentMode::approx: return ConditionalMode::approx;
    default: return std::nullopt;
  }
}

ConditionalSpec default_spec(const Schema& schema) {
  ConditionalSpec s;
  s.child = static_cast<int>(schema.size()) - 1;
  for (int v = 0; v < s.child; ++v) s.parents.push_back(v);
  return s;
}

struct FoldResult {
  double ll = 0.0;
  double learn_s = 0.0;
  double eval_s = 0.0;
  EvalCounters counters;
};

FoldResult run_fold(const AlgorithmConfig& alg, const Dataset& train, const Dataset& test, std::uint64_t seed) {
  FoldResult out;
  if (auto mode = conditional_mode(alg.mode)) {
    ConditionalConfig c;
    c.mode = *mode;
    c.leaf = alg.leaf;
    c.epsilon = alg.epsilon;
    c.direct_alpha = alg.direct_alpha;
    c.seed = seed;
    const ConditionalSpec spec = alg.spec.value_or(default_spec(train.schema()));
    auto t0 = Clock::now();
    const auto model = learn_conditional(train, spec, c);
    out.learn_s = seconds_since(t0);
    const Matrix local = project(test, spec);
    t0 = Clock::now();
    out.ll = conditional_log_likelihood(model, local, &out.counters);
    out.eval_s = seconds_since(t0);
  } else if (alg.mode == ExperimentMode::bnet) {
    SearchConfig search = alg.search;
    search.seed = seed;
    search.final.conditional.leaf = alg.leaf;
    search.final.conditional.epsilon = alg.epsilon;
    auto t0 = Clock::now();
    const auto structure = learn_structure(train, search);
    const auto model = parameterize(structure, train, search.final, seed);
    out.learn_s = seconds_since(t0);
    t0 = Clock::now();
    out.ll = joint_log_likelihood(model, test, nullptr, &out.counters);
    out.eval_s = seconds_since(t0);
  } else {
    MixtureConfig mc;
    mc.seed = seed;
    auto t0 = Clock::now();
    const auto sel = fit_gaussian_mixture_baseline(train, alg.k_grid, mc);
    out.learn_s = seconds_since(t0);
    t0 = Clock::now();
    out.ll = joint_log_likelihood(sel.model, test);
    out.eval_s = seconds_since(t0);
  }
  return out;
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

std::string_view to_string(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::cart: return "cart";
    case ExperimentMode::stratified: return "stratified";
    case ExperimentMode::joint: return "joint";
    case ExperimentMode::approx: return "approx";
    case ExperimentMode::bnet: return "bnet";
    case ExperimentMode::gmm: return "gmm-baseline";
  }
  return "?";
}

std::optional<ExperimentMode> parse_experiment_mode(std::string_view name) {
  for (auto m : {ExperimentMode::cart, ExperimentMode::stratified, ExperimentMode::joint, ExperimentMode::approx,
                 ExperimentMode::bnet, ExperimentMode::gmm})
    if (to_string(m) == name) return m;
  if (name == "gmm") return ExperimentMode::gmm;
  return std::nullopt;
}

std::string AlgorithmConfig::display_label() const {
  if (!label.empty()) return label;
  if (mode == ExperimentMode::gmm) return "gmm-baseline";
  return std::string(to_string(mode)) + "-" + std::string(to_string(leaf));
}

AlgorithmConfig parse_algorithm(std::string_view text) {
  AlgorithmConfig a;
  const auto colon = text.find(':');
  const auto mode_text = text.substr(0, colon);
  const auto mode = parse_experiment_mode(mode_text);
  if (!mode) throw ConfigError("unknown mode '" + std::string(mode_text) + "'");
  a.mode = *mode;
  if (a.mode == ExperimentMode::cart) a.leaf = LeafFamily::gaussian;
  if (a.mode == ExperimentMode::bnet) a.leaf = LeafFamily::multilinear_interp;
  if (colon != std::string_view::npos) {
    const auto leaf_text = text.substr(colon + 1);
    const auto leaf = parse_leaf_family(leaf_text);
    if (!leaf) throw ConfigError("unknown leaf family '" + std::string(leaf_text) + "'");
    a.leaf = *leaf;
  }
  return a;
}

void validate(const ExperimentConfig& config) {
  if (config.folds < 2) throw ConfigError("folds must be >= 2");
  if (config.algorithms.empty()) throw ConfigError("no algorithms to run");
  for (const auto& a : config.algorithms) {
    if (auto mode = conditional_mode(a.mode)) {
      ConditionalConfig c;
      c.mode = *mode;
      c.leaf = a.leaf;
      c.epsilon = a.epsilon;
      validate(c);
    } else if (a.mode == ExperimentMode::bnet) {
      if (a.leaf == LeafFamily::linreg_gaussian) throw ConfigError("linreg leaves are only available with cart trees");
      validate(a.search);
    } else if (a.k_grid.empty() || *std::min_element(a.k_grid.begin(), a.k_grid.end()) < 1) {
      throw ConfigError("gmm k grid must be non-empty and positive");
    }
  }
  if (config.preprocessing.noise && !(config.preprocessing.magnitude > 0.0))
    throw ConfigError("noise magnitude must be > 0");
}

Dataset preprocess(const Dataset& data, const Preprocessing& p, std::uint64_t seed) {
  Dataset out = p.scale ? scale_to_unit(data).first : data;
  if (p.noise) out = add_noise(out, *p.noise, p.magnitude, derive_seed(seed, kNoiseKey));
  return out;
}

std::vector<ReportRow> run_experiment(const Dataset& raw, const ExperimentConfig& config) {
  validate(config);
  const Dataset data = preprocess(raw, config.preprocessing, config.seed);
  if (static_cast<std::size_t>(config.folds) > data.size()) throw DataError("more folds than rows");
  const auto tests = kfold_indices(data.size(), config.folds, derive_seed(config.seed, kFoldKey));

  std::vector<std::pair<Dataset, Dataset>> folds;
  for (const auto& test : tests) {
    std::vector<bool> in_test(data.size(), false);
    for (auto r : test) in_test[r] = true;
    std::vector<std::uint32_t> train;
    for (std::uint32_t r = 0; r < data.size(); ++r)
      if (!in_test[r]) train.push_back(r);
    folds.emplace_back(data.subset(train), data.subset(test));
  }

  std::vector<ReportRow> rows;
  for (const auto& alg : config.algorithms) {
    ReportRow row;
    row.label = alg.display_label();
    EvalCounters total;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      FoldResult r;
      const std::string where = "fold " + std::to_string(f) + " of '" + row.label + "': ";
      try {
        r = run_fold(alg, folds[f].first, folds[f].second, derive_seed(derive_seed(config.seed, kLearnKey), f));
      } catch (const ConfigError& e) {
        throw ConfigError(where + e.what());
      } catch (const DataError& e) {
        throw DataError(where + e.what());
      } catch (const std::exception& e) {
        throw std::runtime_error(where + e.what());
      }
      row.fold_ll.push_back(r.ll);
      row.learn_s += r.learn_s;
      row.eval_s += r.eval_s;
      total.queries += r.counters.queries;
      total.visited_leaves += r.counters.visited_leaves;
    }
    row.mean_ll = mean(row.fold_ll);
    row.ci95 = ci95_half_width(row.fold_ll);
    row.learn_s /= static_cast<double>(folds.size());
    row.eval_s /= static_cast<double>(folds.size());
    if (!config.timing) row.learn_s = row.eval_s = 0.0;
    row.visited_per_query =
        total.queries ? static_cast<double>(total.visited_leaves) / static_cast<double>(total.queries) : 0.0;
    rows.push_back(std::move(row));
  }
  mark_best(rows);
  return rows;
}

TTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw ConfigError("paired t-test needs two equal samples of size >= 2");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  TTest t;
  t.df = static_cast<int>(d.size()) - 1;
  const double m = mean(d);
  const double se = sample_sd(d) / std::sqrt(static_cast<double>(d.size()));
  if (!(se > 0.0)) {
    t.t = m == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), m);
    t.p_two_sided = m == 0.0 ? 1.0 : 0.0;
    t.p_greater = m > 0.0 ? 0.0 : (m == 0.0 ? 0.5 : 1.0);
    return t;
  }
  t.t = m / se;
  const boost::math::students_t dist(t.df);
  t.p_greater = boost::math::cdf(boost::math::complement(dist, t.t));
  t.p_two_sided = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t.t)));
  return t;
}

double ci95_half_width(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const boost::math::students_t dist(static_cast<double>(values.size() - 1));
  return boost::math::quantile(boost::math::complement(dist, 0.025)) * sample_sd(values) /
         std::sqrt(static_cast<double>(values.size()));
}

void mark_best(std::vector<ReportRow>& rows, double level) {
  if (rows.empty()) return;
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].mean_ll > rows[best].mean_ll) best = i;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i == best) {
      rows[i].best_flag = true;
      continue;
    }
    if (rows[i].fold_ll.size() != rows[best].fold_ll.size() || rows[i].fold_ll.size() < 2) {
      rows[i].best_flag = false;
      continue;
    }
    rows[i].best_flag = paired_t_test(rows[best].fold_ll, rows[i].fold_ll).p_greater > level;
  }
}

std::string format_report(const std::vector<ReportRow>& rows, ReportFormat format) {
  if (format == ReportFormat::tsv) {
    std::string out = "label\tmean_ll\tci95\tlearn_s\teval_s\tbest_flag\n";
    for (const auto& r : rows) {
      out += r.label + '\t' + format_double(r.mean_ll) + '\t' + format_double(r.ci95) + '\t' + format_double(r.learn_s) +
             '\t' + format_double(r.eval_s) + '\t' + (r.best_flag ? "1" : "0") + '\n';
    }
    return out;
  }
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back(nlohmann::json{{"label", r.label},
                                 {"mean_ll", r.mean_ll},
                                 {"ci95", r.ci95},
                                 {"learn_s", r.learn_s},
                                 {"eval_s", r.eval_s},
                                 {"best_flag", r.best_flag},
                                 {"visited_per_query", r.visited_per_query},
                                 {"fold_ll", r.fold_ll}});
  }
  return nlohmann::json{{"rows", arr}}.dump(2) + "\n";
}

std::vector<ReportRow> parse_report_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    std::vector<ReportRow> rows;
    for (const auto& r : j.at("rows")) {
      ReportRow row;
      row.label = r.at("label").get<std::string>();
      row.mean_ll = r.at("mean_ll").get<double>();
      row.ci95 = r.at("ci95").get<double>();
      row.learn_s = r.at("learn_s").get<double>();
      row.eval_s = r.at("eval_s").get<double>();
      row.best_flag = r.at("best_flag").get<bool>();
      if (r.contains("visited_per_query")) row.visited_per_query = r.at("visited_per_query").get<double>();
      if (r.contains("fold_ll")) row.fold_ll = r.at("fold_ll").get<std::vector<double>>();
      rows.push_back(std::move(row));
    }
    return rows;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("report: ") + e.what(), e.byte);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
}

}  // namespace denstree
