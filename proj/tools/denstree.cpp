// denstree: command-line front end for the density-tree library.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "denstree/bayes_net.hpp"
#include "denstree/csv.hpp"
#include "denstree/error.hpp"
#include "denstree/experiment.hpp"
#include "denstree/serialize.hpp"
#include "denstree/synth.hpp"

using namespace denstree;

namespace {

enum Exit { kOk = 0, kDataError = 1, kConfigError = 2, kInternal = 3 };

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("DENSTREE_SEED")) {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(env, &pos);
      if (pos == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("DENSTREE_SEED is not an unsigned integer: '") + env + "'");
  }
  return 0;
}

void emit(const std::string& path, const std::string& bytes) {
  if (path.empty() || path == "-") std::cout << bytes;
  else write_file(path, bytes);
}

std::optional<NoiseKind> parse_noise(const std::string& s) {
  if (s.empty() || s == "none") return std::nullopt;
  if (s == "uniform") return NoiseKind::uniform;
  if (s == "gaussian") return NoiseKind::gaussian;
  throw ConfigError("unknown noise kind '" + s + "'");
}

int variable_index(const Schema& schema, const std::string& name) {
  const auto i = schema.index_of(name);
  if (!i) throw ConfigError("unknown variable '" + name + "'");
  return static_cast<int>(*i);
}

std::string structure_json(const NetworkStructure& s, const Schema& schema) {
  nlohmann::json names = nlohmann::json::array();
  nlohmann::json parents = nlohmann::json::array();
  for (std::size_t v = 0; v < s.size(); ++v) {
    names.push_back(schema[v].name);
    nlohmann::json p = nlohmann::json::array();
    for (int q : s.parents[v]) p.push_back(schema[static_cast<std::size_t>(q)].name);
    parents.push_back(p);
  }
  return nlohmann::json{{"variables", names}, {"parents", parents}}.dump(2) + "\n";
}

NetworkStructure structure_from(const std::string& text, const Schema& schema) {
  const auto j = nlohmann::json::parse(text);
  NetworkStructure s(schema.size());
  const auto names = j.at("variables").get<std::vector<std::string>>();
  const auto parents = j.at("parents").get<std::vector<std::vector<std::string>>>();
  if (names.size() != parents.size()) throw ConfigError("structure file: variables and parents differ in length");
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto& p = s.parents[static_cast<std::size_t>(variable_index(schema, names[i]))];
    for (const auto& q : parents[i]) p.push_back(variable_index(schema, q));
    std::sort(p.begin(), p.end());
  }
  if (!s.acyclic()) throw ConfigError("structure file describes a cyclic graph");
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tree-based conditional density estimation and Bayesian networks"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed_flag;

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  std::string gen_kind, gen_out, gen_schema_out, gen_truth_out;
  std::size_t gen_n = 0, gen_length = 4;
  gen->add_option("kind", gen_kind, "connected | bio | astro | chain")->required();
  gen->add_option("--n", gen_n, "Row count (default: desk scale for the kind)");
  gen->add_option("--length", gen_length, "Chain length");
  gen->add_option("--seed", seed_flag, "Seed (default: $DENSTREE_SEED or 0)");
  gen->add_option("--out", gen_out, "CSV output (default stdout)");
  gen->add_option("--schema-out", gen_schema_out, "Schema JSON output")->required();
  gen->add_option("--truth-out", gen_truth_out, "Ground-truth JSON output (bio, astro, chain)");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Scale to [0,1] and add noise");
  std::string pre_data, pre_schema, pre_out, pre_schema_out, pre_noise;
  double pre_mag = 0.001;
  bool pre_no_scale = false;
  pre->add_option("--data", pre_data)->required();
  pre->add_option("--schema", pre_schema)->required();
  pre->add_option("--out", pre_out, "CSV output (default stdout)");
  pre->add_option("--schema-out", pre_schema_out, "Schema of the output")->required();
  pre->add_option("--noise", pre_noise, "uniform | gaussian | none");
  pre->add_option("--noise-mag", pre_mag, "Noise range (uniform) or standard deviation (gaussian)");
  pre->add_flag("--no-scale", pre_no_scale);
  pre->add_option("--seed", seed_flag);

  // train
  auto* train = app.add_subcommand("train", "Learn a conditional or network model");
  std::string tr_data, tr_schema, tr_mode = "approx", tr_leaf, tr_child, tr_parents, tr_out, tr_structure;
  double tr_eps = 1e-3;
  int tr_max_parents = 3;
  bool tr_direct = false;
  train->add_option("--data", tr_data)->required();
  train->add_option("--schema", tr_schema)->required();
  train->add_option("--mode", tr_mode, "cart | stratified | joint | approx | bnet");
  train->add_option("--leaf", tr_leaf, "uniform | gaussian | linreg | ili | mli");
  train->add_option("--child", tr_child, "Child variable (default: last)");
  train->add_option("--parents", tr_parents, "Comma-separated parents (default: all others)");
  train->add_option("--structure", tr_structure, "bnet: fixed structure JSON instead of searching");
  train->add_option("--max-parents", tr_max_parents);
  train->add_option("--epsilon", tr_eps);
  train->add_flag("--direct-alpha", tr_direct);
  train->add_option("--seed", seed_flag);
  train->add_option("--out", tr_out, "Model JSON output (default stdout)");

  // eval
  auto* ev = app.add_subcommand("eval", "Log-likelihood of a dataset under a model");
  std::string ev_model, ev_data;
  ev->add_option("--model", ev_model)->required();
  ev->add_option("--data", ev_data)->required();

  // cv
  auto* cv = app.add_subcommand("cv", "Cross-validated comparison");
  std::string cv_data, cv_schema, cv_noise, cv_format = "tsv", cv_out, cv_child, cv_parents;
  std::vector<std::string> cv_modes;
  int cv_folds = 10;
  double cv_mag = 0.001, cv_eps = 1e-3;
  bool cv_no_scale = false, cv_no_timing = false;
  cv->add_option("--data", cv_data)->required();
  cv->add_option("--schema", cv_schema)->required();
  cv->add_option("--mode", cv_modes, "mode[:leaf], repeatable")->required();
  cv->add_option("--folds", cv_folds);
  cv->add_option("--noise", cv_noise, "uniform | gaussian | none");
  cv->add_option("--noise-mag", cv_mag);
  cv->add_option("--epsilon", cv_eps);
  cv->add_option("--child", cv_child);
  cv->add_option("--parents", cv_parents);
  cv->add_flag("--no-scale", cv_no_scale);
  cv->add_flag("--no-timing", cv_no_timing, "Report zero times for byte-stable output");
  cv->add_option("--format", cv_format, "tsv | json");
  cv->add_option("--out", cv_out);
  cv->add_option("--seed", seed_flag);

  // structure
  auto* st = app.add_subcommand("structure", "Learn a network structure");
  std::string st_data, st_schema, st_out;
  int st_max_parents = 3, st_max_iters = 200;
  st->add_option("--data", st_data)->required();
  st->add_option("--schema", st_schema)->required();
  st->add_option("--max-parents", st_max_parents);
  st->add_option("--max-iterations", st_max_iters);
  st->add_option("--out", st_out);
  st->add_option("--seed", seed_flag);

  // sample
  auto* sm = app.add_subcommand("sample", "Draw rows from a network model");
  std::string sm_model, sm_out;
  std::size_t sm_n = 1000;
  sm->add_option("--model", sm_model)->required();
  sm->add_option("--n", sm_n);
  sm->add_option("--out", sm_out);
  sm->add_option("--seed", seed_flag);

  // bench
  auto* bench = app.add_subcommand("bench", "Connected-data comparison of the tree families");
  std::size_t b_n = kConnectedDeskRows;
  int b_folds = 10;
  std::string b_format = "tsv", b_out;
  bool b_no_timing = false;
  bench->add_option("--n", b_n);
  bench->add_option("--folds", b_folds);
  bench->add_option("--format", b_format);
  bench->add_option("--out", b_out);
  bench->add_flag("--no-timing", b_no_timing);
  bench->add_option("--seed", seed_flag);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  auto report_format = [](const std::string& f) {
    if (f == "tsv") return ReportFormat::tsv;
    if (f == "json") return ReportFormat::json;
    throw ConfigError("unknown report format '" + f + "'");
  };
  auto load = [](const std::string& data, const std::string& schema) { return ingest_csv(data, schema); };

  try {
    const std::uint64_t seed = resolve_seed(seed_flag);

    if (*gen) {
      std::optional<Dataset> d;
      std::optional<GroundTruth> truth;
      if (gen_kind == "connected") {
        d = generate_connected(gen_n ? gen_n : kConnectedDeskRows, seed);
      } else if (gen_kind == "chain") {
        truth = make_chain_truth(gen_length, seed);
        d = sample_truth(*truth, gen_n ? gen_n : 5000, seed);
      } else if (auto profile = parse_profile(gen_kind)) {
        GroundTruth t;
        d = generate_standin(*profile, gen_n ? gen_n : default_rows(*profile), seed, &t);
        truth = std::move(t);
      } else {
        throw ConfigError("unknown dataset kind '" + gen_kind + "'");
      }
      write_file(gen_schema_out, encode_schema(d->schema()));
      if (!gen_truth_out.empty()) {
        if (!truth) throw ConfigError("connected data has no network ground truth");
        write_file(gen_truth_out, encode_truth(*truth));
      }
      emit(gen_out, write_csv(*d));
      return kOk;
    }

    if (*pre) {
      const Dataset d = load(pre_data, pre_schema);
      Preprocessing p;
      p.scale = !pre_no_scale;
      p.noise = parse_noise(pre_noise);
      p.magnitude = pre_mag;
      if (p.noise && !(p.magnitude > 0.0)) throw ConfigError("--noise-mag must be > 0");
      const Dataset out = preprocess(d, p, seed);
      write_file(pre_schema_out, encode_schema(out.schema()));
      emit(pre_out, write_csv(out));
      return kOk;
    }

    if (*train) {
      const Dataset d = load(tr_data, tr_schema);
      const Schema& schema = d.schema();
      auto alg = parse_algorithm(tr_mode + (tr_leaf.empty() ? "" : ":" + tr_leaf));
      if (alg.mode == ExperimentMode::gmm) throw ConfigError("gmm-baseline models are not serialized; use cv");
      if (alg.mode == ExperimentMode::bnet) {
        SearchConfig search;
        search.seed = seed;
        search.max_parents = tr_max_parents;
        search.final.conditional.leaf = alg.leaf;
        search.final.conditional.epsilon = tr_eps;
        search.final.conditional.direct_alpha = tr_direct;
        validate(search);
        const auto structure =
            tr_structure.empty() ? learn_structure(d, search) : structure_from(read_file(tr_structure), schema);
        emit(tr_out, encode_model(parameterize(structure, d, search.final, seed)));
        return kOk;
      }
      ConditionalSpec spec;
      spec.child = tr_child.empty() ? static_cast<int>(schema.size()) - 1 : variable_index(schema, tr_child);
      if (tr_parents.empty()) {
        for (int v = 0; v < static_cast<int>(schema.size()); ++v)
          if (v != spec.child) spec.parents.push_back(v);
      } else {
        std::stringstream ss(tr_parents);
        for (std::string name; std::getline(ss, name, ',');) spec.parents.push_back(variable_index(schema, name));
      }
      ConditionalConfig c;
      c.mode = *parse_conditional_mode(to_string(alg.mode));
      c.leaf = alg.leaf;
      c.epsilon = tr_eps;
      c.direct_alpha = tr_direct;
      c.seed = seed;
      emit(tr_out, encode_model(learn_conditional(d, spec, c), schema));
      return kOk;
    }

    if (*ev) {
      const auto file = decode_model(read_file(ev_model));
      const Dataset d = read_csv(read_file(ev_data), file.schema);
      double ll = 0.0;
      if (const auto* fm = std::get_if<FactoredModel>(&file.model)) {
        ll = joint_log_likelihood(*fm, d);
      } else {
        const auto& cm = std::get<ConditionalModel>(file.model);
        ll = conditional_log_likelihood(cm, project(d, cm.spec));
      }
      std::cout << "rows\t" << d.size() << "\nlog_likelihood\t" << format_double(ll) << "\nmean_ll\t"
                << format_double(d.size() ? ll / static_cast<double>(d.size()) : 0.0) << "\n";
      return kOk;
    }

    if (*cv) {
      const Dataset d = load(cv_data, cv_schema);
      ExperimentConfig config;
      config.folds = cv_folds;
      config.seed = seed;
      config.timing = !cv_no_timing;
      config.preprocessing.scale = !cv_no_scale;
      config.preprocessing.noise = parse_noise(cv_noise);
      config.preprocessing.magnitude = cv_mag;
      std::optional<ConditionalSpec> spec;
      if (!cv_child.empty() || !cv_parents.empty()) {
        ConditionalSpec s;
        const Schema& schema = d.schema();
        s.child = cv_child.empty() ? static_cast<int>(schema.size()) - 1 : variable_index(schema, cv_child);
        if (cv_parents.empty()) {
          for (int v = 0; v < static_cast<int>(schema.size()); ++v)
            if (v != s.child) s.parents.push_back(v);
        } else {
          std::stringstream ss(cv_parents);
          for (std::string name; std::getline(ss, name, ',');) s.parents.push_back(variable_index(schema, name));
        }
        spec = s;
      }
      for (const auto& m : cv_modes) {
        auto a = parse_algorithm(m);
        a.epsilon = cv_eps;
        a.spec = spec;
        config.algorithms.push_back(std::move(a));
      }
      emit(cv_out, format_report(run_experiment(d, config), report_format(cv_format)));
      return kOk;
    }

    if (*st) {
      const Dataset d = load(st_data, st_schema);
      SearchConfig search;
      search.seed = seed;
      search.max_parents = st_max_parents;
      search.max_iterations = st_max_iters;
      emit(st_out, structure_json(learn_structure(d, search), d.schema()));
      return kOk;
    }

    if (*sm) {
      const auto file = decode_model(read_file(sm_model));
      const auto* fm = std::get_if<FactoredModel>(&file.model);
      if (!fm) throw ConfigError("sampling needs a network model (train --mode bnet)");
      Rng rng(seed);
      emit(sm_out, write_csv(sample_network(*fm, sm_n, rng)));
      return kOk;
    }

    if (*bench) {
      ExperimentConfig config;
      config.folds = b_folds;
      config.seed = seed;
      config.timing = !b_no_timing;
      config.preprocessing.scale = false;
      for (const char* m : {"cart:gaussian", "stratified:uniform", "stratified:ili", "joint:ili", "approx:ili"})
        config.algorithms.push_back(parse_algorithm(m));
      emit(b_out, format_report(run_experiment(generate_connected(b_n, seed), config), report_format(b_format)));
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
