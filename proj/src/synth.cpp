#include "denstree/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "denstree/error.hpp"
#include "denstree/normal.hpp"

namespace denstree {

namespace {

constexpr std::uint64_t kTruthKey = 0x5e7d0001;
constexpr std::uint64_t kSampleKey = 0x5e7d0002;

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

double parent_signal(const GroundTruth& t, const TruthNode& node, std::span<const double> row) {
  if (node.parents.empty()) return 0.0;
  double g = 0.0;
  for (int p : node.parents) {
    const Variable& v = (*t.schema)[static_cast<std::size_t>(p)];
    const double x = row[static_cast<std::size_t>(p)];
    g += v.is_discrete() ? x / (v.arity - 1) : (x - v.lo) / v.range();
  }
  return g / static_cast<double>(node.parents.size());
}

double component_mean(const TruthNode& n, std::size_t k, double g, const Variable& v) {
  const double m = n.a[k] + n.b[k] * std::sin(n.omega * g + n.phase[k]);
  return v.lo + v.range() * std::clamp(m, 0.0, 1.0);
}

std::vector<double> softmax(const TruthNode& n, double g) {
  std::vector<double> p(n.base.size());
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < p.size(); ++v) {
    p[v] = n.base[v] + n.amp[v] * std::sin(n.omega * g + n.phase[v]);
    hi = std::max(hi, p[v]);
  }
  double s = 0.0;
  for (double& q : p) s += (q = std::exp(q - hi));
  for (double& q : p) q /= s;
  return p;
}

double node_log_density(const GroundTruth& t, std::size_t v, std::span<const double> row) {
  const TruthNode& n = t.nodes[v];
  const Variable& var = (*t.schema)[v];
  const double g = parent_signal(t, n, row);
  const double x = row[v];
  if (var.is_discrete()) return std::log(softmax(n, g)[static_cast<std::size_t>(x)]);
  double p = 0.0;
  for (std::size_t k = 0; k < n.weight.size(); ++k) {
    const double mu = component_mean(n, k, g, var);
    const double sd = n.sd[k] * var.range();
    const double z = normal::interval_mass((var.lo - mu) / sd, (var.hi - mu) / sd);
    p += n.weight[k] * std::exp(normal::log_pdf((x - mu) / sd)) / (sd * z);
  }
  return std::log(p);
}

TruthNode random_continuous(Rng& rng, std::vector<int> parents) {
  TruthNode n;
  n.parents = std::move(parents);
  n.omega = uniform(rng, M_PI, 3.0 * M_PI);
  const double w = uniform(rng, 0.3, 0.7);
  n.weight = {w, 1.0 - w};
  for (int k = 0; k < 2; ++k) {
    n.a.push_back(uniform(rng, 0.25, 0.75));
    n.b.push_back((uniform01(rng) < 0.5 ? -1.0 : 1.0) * uniform(rng, 0.1, 0.3));
    n.phase.push_back(uniform(rng, 0.0, 2.0 * M_PI));
    n.sd.push_back(uniform(rng, 0.04, 0.12));
  }
  return n;
}

TruthNode random_discrete(Rng& rng, int arity, std::vector<int> parents) {
  TruthNode n;
  n.parents = std::move(parents);
  n.omega = uniform(rng, M_PI, 3.0 * M_PI);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int v = 0; v < arity; ++v) {
    n.base.push_back(gauss(rng));
    n.amp.push_back(uniform(rng, 0.5, 2.0));
    n.phase.push_back(uniform(rng, 0.0, 2.0 * M_PI));
  }
  return n;
}

}  // namespace

SchemaPtr connected_schema() {
  return std::make_shared<const Schema>(
      std::vector<Variable>{Variable::continuous("x1", 0.0, 1.0), Variable::continuous("x2", 0.0, 1.0)});
}

Dataset generate_connected(std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("connected data needs n >= 1");
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix m(n, 2);
  for (std::size_t r = 0; r < n;) {
    const double u = uniform01(rng);
    std::size_t k = 0;
    double acc = kConnectedMixture[0].weight;
    while (k < 2 && u >= acc) acc += kConnectedMixture[++k].weight;
    const auto& c = kConnectedMixture[k];
    const double x1 = c.mean[0] + c.sd[0] * gauss(rng);
    const double x2 = c.mean[1] + c.sd[1] * gauss(rng);
    if (x1 < 0.0 || x1 > 1.0 || x2 < 0.0 || x2 > 1.0) continue;
    m(r, 0) = x1;
    m(r, 1) = x2;
    ++r;
  }
  return Dataset(connected_schema(), std::move(m));
}

double connected_log_density(double x1, double x2) {
  if (x1 < 0.0 || x1 > 1.0 || x2 < 0.0 || x2 > 1.0) return -std::numeric_limits<double>::infinity();
  double z = 0.0;
  double p = 0.0;
  for (const auto& c : kConnectedMixture) {
    z += c.weight * normal::interval_mass(-c.mean[0] / c.sd[0], (1.0 - c.mean[0]) / c.sd[0]) *
         normal::interval_mass(-c.mean[1] / c.sd[1], (1.0 - c.mean[1]) / c.sd[1]);
    p += c.weight * std::exp(normal::log_pdf((x1 - c.mean[0]) / c.sd[0]) + normal::log_pdf((x2 - c.mean[1]) / c.sd[1])) /
         (c.sd[0] * c.sd[1]);
  }
  return std::log(p / z);
}

double connected_conditional_log_density(double x2, double x1) {
  if (x1 < 0.0 || x1 > 1.0 || x2 < 0.0 || x2 > 1.0) return -std::numeric_limits<double>::infinity();
  double joint = 0.0;
  double marginal = 0.0;
  for (const auto& c : kConnectedMixture) {
    const double f1 = c.weight * std::exp(normal::log_pdf((x1 - c.mean[0]) / c.sd[0])) / c.sd[0];
    joint += f1 * std::exp(normal::log_pdf((x2 - c.mean[1]) / c.sd[1])) / c.sd[1];
    marginal += f1 * normal::interval_mass(-c.mean[1] / c.sd[1], (1.0 - c.mean[1]) / c.sd[1]);
  }
  return std::log(joint / marginal);
}

NetworkStructure GroundTruth::structure() const {
  NetworkStructure s(nodes.size());
  for (std::size_t v = 0; v < nodes.size(); ++v) {
    s.parents[v] = nodes[v].parents;
    std::sort(s.parents[v].begin(), s.parents[v].end());
  }
  return s;
}

std::optional<StandinProfile> parse_profile(std::string_view name) {
  if (name == "bio") return StandinProfile::bio;
  if (name == "astro") return StandinProfile::astro;
  return std::nullopt;
}

std::size_t default_rows(StandinProfile profile) { return profile == StandinProfile::bio ? 12671 : 10000; }

GroundTruth make_standin_truth(StandinProfile profile, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kTruthKey));
  std::vector<int> arities;
  std::size_t continuous = 0;
  if (profile == StandinProfile::bio) {
    continuous = 26;
    for (int i = 0; i < 5; ++i) arities.push_back(uniform01(rng) < 0.5 ? 2 : 3);
  } else {
    continuous = 65;
    arities = {3, 24, 81};
  }
  const std::size_t total = continuous + arities.size();
  // Discrete variables sit at random positions of the variable order.
  std::vector<int> kind(total, 0);
  for (std::size_t i = 0; i < arities.size(); ++i) kind[i] = static_cast<int>(i) + 1;
  std::shuffle(kind.begin(), kind.end(), rng);

  std::vector<Variable> vars;
  GroundTruth t;
  for (std::size_t v = 0; v < total; ++v) {
    char name[32];
    std::snprintf(name, sizeof name, "%c%02zu", kind[v] ? 'd' : 'c', v);
    std::vector<int> parents;
    const std::size_t want = std::min<std::size_t>(v, static_cast<std::size_t>(uniform01(rng) * 3.0));
    while (parents.size() < want) {
      const int p = static_cast<int>(uniform01(rng) * static_cast<double>(v));
      if (std::find(parents.begin(), parents.end(), p) == parents.end()) parents.push_back(p);
    }
    if (kind[v]) {
      const int arity = arities[static_cast<std::size_t>(kind[v] - 1)];
      vars.push_back(Variable::discrete(name, arity));
      t.nodes.push_back(random_discrete(rng, arity, std::move(parents)));
    } else {
      vars.push_back(Variable::continuous(name, 0.0, 1.0));
      t.nodes.push_back(random_continuous(rng, std::move(parents)));
    }
  }
  t.schema = std::make_shared<const Schema>(std::move(vars));
  return t;
}

GroundTruth make_chain_truth(std::size_t length, std::uint64_t seed) {
  if (length < 1) throw ConfigError("chain needs at least one variable");
  Rng rng(derive_seed(seed, kTruthKey));
  std::vector<Variable> vars;
  GroundTruth t;
  for (std::size_t v = 0; v < length; ++v) {
    vars.push_back(Variable::continuous(std::string(1, static_cast<char>('A' + v % 26)) +
                                            (v >= 26 ? std::to_string(v / 26) : std::string()),
                                        0.0, 1.0));
    TruthNode n;
    if (v > 0) n.parents = {static_cast<int>(v) - 1};
    n.omega = 2.0 * M_PI;
    n.weight = {1.0};
    n.a = {0.5};
    n.b = {v > 0 ? 0.35 : 0.0};
    n.phase = {uniform(rng, 0.0, 2.0 * M_PI)};
    n.sd = {v > 0 ? 0.05 : 0.25};
    t.nodes.push_back(std::move(n));
  }
  t.schema = std::make_shared<const Schema>(std::move(vars));
  return t;
}

Dataset sample_truth(const GroundTruth& truth, std::size_t n, std::uint64_t seed) {
  const auto order = truth.structure().topological_order();
  if (!order) throw ConfigError("ground truth has a cycle");
  const Schema& s = *truth.schema;
  Matrix m(n, s.size());
  for (std::size_t r = 0; r < n; ++r) {
    Rng rng(derive_seed(derive_seed(seed, kSampleKey), r));
    auto row = m.row(r);
    for (int vi : *order) {
      const auto v = static_cast<std::size_t>(vi);
      const TruthNode& node = truth.nodes[v];
      const double g = parent_signal(truth, node, row);
      if (s[v].is_discrete()) {
        const auto p = softmax(node, g);
        double u = uniform01(rng);
        std::size_t k = 0;
        while (k + 1 < p.size() && u >= p[k]) u -= p[k++];
        row[v] = static_cast<double>(k);
      } else {
        double u = uniform01(rng);
        std::size_t k = 0;
        while (k + 1 < node.weight.size() && u >= node.weight[k]) u -= node.weight[k++];
        const double mu = component_mean(node, k, g, s[v]);
        row[v] = normal::sample_truncated(mu, node.sd[k] * s[v].range(), s[v].lo, s[v].hi, rng);
      }
    }
  }
  return Dataset(truth.schema, std::move(m));
}

double truth_log_density(const GroundTruth& truth, std::span<const double> row) {
  double lp = 0.0;
  for (std::size_t v = 0; v < truth.nodes.size(); ++v) lp += node_log_density(truth, v, row);
  return lp;
}

double truth_log_likelihood(const GroundTruth& truth, const Dataset& data) {
  double ll = 0.0;
  for (std::size_t r = 0; r < data.size(); ++r) ll += truth_log_density(truth, data.row(r));
  return ll;
}

Dataset generate_standin(StandinProfile profile, std::size_t n, std::uint64_t seed, GroundTruth* truth) {
  GroundTruth t = make_standin_truth(profile, seed);
  Dataset d = sample_truth(t, n, seed);
  if (truth) *truth = std::move(t);
  return d;
}

std::string encode_truth(const GroundTruth& truth) {
  using nlohmann::json;
  json vars = json::array();
  json nodes = json::array();
  for (std::size_t v = 0; v < truth.nodes.size(); ++v) {
    const Variable& var = (*truth.schema)[v];
    json jv{{"name", var.name}};
    if (var.is_discrete()) {
      jv["kind"] = "discrete";
      jv["arity"] = var.arity;
    } else {
      jv["kind"] = "continuous";
      jv["lo"] = var.lo;
      jv["hi"] = var.hi;
    }
    vars.push_back(jv);
    const auto& n = truth.nodes[v];
    nodes.push_back(json{{"parents", n.parents}, {"omega", n.omega}, {"weight", n.weight}, {"a", n.a},
                         {"b", n.b},             {"phase", n.phase}, {"sd", n.sd},         {"base", n.base},
                         {"amp", n.amp}});
  }
  return json{{"format", "denstree-truth"}, {"variables", vars}, {"nodes", nodes}}.dump() + "\n";
}

GroundTruth decode_truth(std::string_view text) {
  using nlohmann::json;
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "denstree-truth") throw ParseError("not a ground-truth file");
    std::vector<Variable> vars;
    for (const auto& v : j.at("variables")) {
      if (v.at("kind").get<std::string>() == "discrete")
        vars.push_back(Variable::discrete(v.at("name").get<std::string>(), v.at("arity").get<int>()));
      else
        vars.push_back(Variable::continuous(v.at("name").get<std::string>(), v.at("lo").get<double>(),
                                            v.at("hi").get<double>()));
    }
    GroundTruth t;
    t.schema = std::make_shared<const Schema>(std::move(vars));
    for (const auto& n : j.at("nodes")) {
      TruthNode node;
      node.parents = n.at("parents").get<std::vector<int>>();
      node.omega = n.at("omega").get<double>();
      for (auto [key, field] : {std::pair{"weight", &node.weight}, {"a", &node.a}, {"b", &node.b},
                                {"phase", &node.phase}, {"sd", &node.sd}, {"base", &node.base}, {"amp", &node.amp}})
        *field = n.at(key).get<std::vector<double>>();
      t.nodes.push_back(std::move(node));
    }
    if (t.nodes.size() != t.schema->size()) throw ParseError("ground truth node count mismatch");
    return t;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("truth: ") + e.what(), e.byte);
  } catch (const json::exception& e) {
    throw ParseError(std::string("truth: ") + e.what());
  }
}

}  // namespace denstree
