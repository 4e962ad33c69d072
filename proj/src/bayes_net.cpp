#include "denstree/bayes_net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <set>

#include "denstree/error.hpp"

namespace denstree {

namespace {

constexpr std::uint64_t kValidationKey = 0xb0e70001;
constexpr std::uint64_t kSubsampleKey = 0xb0e70002;
constexpr std::uint64_t kFamilyKey = 0xb0e70003;

std::vector<std::uint32_t> subsample_indices(std::size_t n, std::size_t m, std::uint64_t seed) {
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  if (m == 0 || m >= n) return idx;
  std::vector<std::uint64_t> key(n);
  for (std::size_t i = 0; i < n; ++i) key[i] = derive_seed(seed, i);
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m), idx.end(),
                   [&](auto a, auto b) { return key[a] < key[b]; });
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

ConditionalConfig family_config(const TierConfig& tier, std::uint64_t seed, int child) {
  ConditionalConfig c = tier.conditional;
  c.seed = derive_seed(derive_seed(seed, kFamilyKey), static_cast<std::uint64_t>(child));
  return c;
}

ConditionalConfig root_config(ConditionalConfig c) {
  c.mode = ConditionalMode::joint;
  if (c.leaf == LeafFamily::linreg_gaussian) c.leaf = LeafFamily::gaussian;
  return c;
}

bool legal(const NetworkStructure& s, const Move& m, int max_parents) {
  if (m.kind == MoveKind::remove) return s.has_arc(m.from, m.to);
  return !s.has_arc(m.from, m.to) && static_cast<int>(s.parents[static_cast<std::size_t>(m.to)].size()) < max_parents &&
         s.can_add(m.from, m.to);
}

}  // namespace

bool NetworkStructure::has_arc(int from, int to) const {
  const auto& p = parents[static_cast<std::size_t>(to)];
  return std::binary_search(p.begin(), p.end(), from);
}

std::size_t NetworkStructure::arc_count() const {
  std::size_t n = 0;
  for (const auto& p : parents) n += p.size();
  return n;
}

std::optional<std::vector<int>> NetworkStructure::topological_order() const {
  const std::size_t n = parents.size();
  std::vector<int> indegree(n, 0);
  std::vector<std::vector<int>> kids(n);
  for (std::size_t v = 0; v < n; ++v)
    for (int p : parents[v]) {
      if (p < 0 || static_cast<std::size_t>(p) >= n) return std::nullopt;
      kids[static_cast<std::size_t>(p)].push_back(static_cast<int>(v));
      ++indegree[v];
    }
  std::set<int> ready;
  for (std::size_t v = 0; v < n; ++v)
    if (indegree[v] == 0) ready.insert(static_cast<int>(v));
  std::vector<int> order;
  while (!ready.empty()) {
    const int v = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(v);
    for (int k : kids[static_cast<std::size_t>(v)])
      if (--indegree[static_cast<std::size_t>(k)] == 0) ready.insert(k);
  }
  if (order.size() != n) return std::nullopt;
  return order;
}

bool NetworkStructure::can_add(int from, int to) const {
  if (from == to) return false;
  // Adding from -> to closes a cycle iff `from` is reachable from `to`.
  std::vector<std::vector<int>> kids(parents.size());
  for (std::size_t v = 0; v < parents.size(); ++v)
    for (int p : parents[v]) kids[static_cast<std::size_t>(p)].push_back(static_cast<int>(v));
  std::vector<bool> seen(parents.size(), false);
  std::vector<int> stack{to};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    if (v == from) return false;
    if (seen[static_cast<std::size_t>(v)]) continue;
    seen[static_cast<std::size_t>(v)] = true;
    for (int k : kids[static_cast<std::size_t>(v)]) stack.push_back(k);
  }
  return true;
}

TierConfig cheap_tier() {
  TierConfig t;
  t.conditional.mode = ConditionalMode::cart;
  t.conditional.leaf = LeafFamily::gaussian;
  t.max_rows = 2000;
  return t;
}

TierConfig medium_tier() {
  TierConfig t;
  t.conditional.mode = ConditionalMode::approx;
  t.conditional.leaf = LeafFamily::linear_interp;
  return t;
}

TierConfig final_tier() {
  TierConfig t;
  t.conditional.mode = ConditionalMode::approx;
  t.conditional.leaf = LeafFamily::multilinear_interp;
  return t;
}

void validate(const SearchConfig& config) {
  validate(config.cheap.conditional);
  validate(config.medium.conditional);
  validate(config.final.conditional);
  if (config.max_parents < 0) throw ConfigError("max_parents must be >= 0");
  if (config.moves_per_iteration < 1 || config.max_iterations < 1 || config.rescore_period < 1)
    throw ConfigError("search budgets must be positive");
  if (!(config.validation_fraction > 0.0 && config.validation_fraction < 1.0))
    throw ConfigError("validation_fraction must lie in (0, 1)");
}

NetworkStructure apply(const NetworkStructure& structure, const Move& move) {
  NetworkStructure s = structure;
  auto& p = s.parents[static_cast<std::size_t>(move.to)];
  if (move.kind == MoveKind::add) {
    p.insert(std::lower_bound(p.begin(), p.end(), move.from), move.from);
  } else {
    p.erase(std::remove(p.begin(), p.end(), move.from), p.end());
  }
  return s;
}

double joint_log_likelihood(const FactoredModel& model, const Dataset& data, std::vector<double>* per_variable,
                            EvalCounters* counters) {
  const std::size_t n = model.conditionals.size();
  std::vector<double> share(n, 0.0);
  std::vector<double> local;
  for (std::size_t v = 0; v < n; ++v) {
    const auto& cm = model.conditionals[v];
    local.resize(cm.spec.parents.size() + 1);
    double sum = 0.0;
    for (std::size_t r = 0; r < data.size(); ++r) {
      project_row(data.row(r), cm.spec, local);
      sum += cond_log_density(cm, local, counters);
    }
    share[v] = sum;
  }
  if (per_variable) *per_variable = share;
  double total = 0.0;
  for (double s : share) total += s;
  return total;
}

FamilyScorer::FamilyScorer(const Dataset& train, const Dataset& validation, TierConfig tier, std::uint64_t seed)
    : train_(&train), validation_(&validation), tier_(std::move(tier)), seed_(seed) {
  if (tier_.max_rows > 0 && train.size() > tier_.max_rows)
    sub_.emplace(train.subset(subsample_indices(train.size(), tier_.max_rows, derive_seed(seed, kSubsampleKey))));
}

double FamilyScorer::score(int child, const std::vector<int>& parents) {
  auto key = std::make_pair(child, parents);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  const Dataset& fit_on = sub_ ? *sub_ : *train_;
  const ConditionalSpec spec{child, parents};
  const auto model = learn_conditional(fit_on, spec, family_config(tier_, seed_, child));
  const double ll = conditional_log_likelihood(model, project(*validation_, spec));
  ++fits_;
  cache_.emplace(std::move(key), ll);
  return ll;
}

std::vector<Move> score_arc_candidates(const NetworkStructure& structure, FamilyScorer& cheap, int max_parents) {
  const int n = static_cast<int>(structure.size());
  std::vector<double> base(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) base[static_cast<std::size_t>(v)] = cheap.score(v, structure.parents[static_cast<std::size_t>(v)]);
  std::vector<Move> moves;
  for (int to = 0; to < n; ++to) {
    for (int from = 0; from < n; ++from) {
      if (from == to) continue;
      Move m{structure.has_arc(from, to) ? MoveKind::remove : MoveKind::add, from, to, 0.0};
      if (!legal(structure, m, max_parents)) continue;
      const auto next = apply(structure, m);
      m.delta = cheap.score(to, next.parents[static_cast<std::size_t>(to)]) - base[static_cast<std::size_t>(to)];
      moves.push_back(m);
    }
  }
  std::stable_sort(moves.begin(), moves.end(), [](const Move& a, const Move& b) { return a.delta > b.delta; });
  return moves;
}

std::vector<Move> score_arc_candidates(const Dataset& train, const Dataset& validation,
                                       const NetworkStructure& structure, const TierConfig& cheap, int max_parents,
                                       std::uint64_t seed) {
  FamilyScorer scorer(train, validation, cheap, seed);
  return score_arc_candidates(structure, scorer, max_parents);
}

NetworkStructure learn_structure(const Dataset& data, const SearchConfig& config, SearchTrace* trace) {
  validate(config);
  const std::size_t n = data.width();
  if (n < 2) throw ConfigError("structure learning needs at least two variables");
  const auto split = holdout_indices(data.size(), config.validation_fraction, derive_seed(config.seed, kValidationKey));
  const Dataset train = data.subset(split.train);
  const Dataset validation = data.subset(split.holdout);
  FamilyScorer cheap(train, validation, config.cheap, config.seed);
  FamilyScorer medium(train, validation, config.medium, config.seed);

  NetworkStructure s(n);
  std::vector<double> family(n);
  for (std::size_t v = 0; v < n; ++v) family[v] = medium.score(static_cast<int>(v), {});
  auto total = [&] { return std::accumulate(family.begin(), family.end(), 0.0); };
  SearchTrace local;
  SearchTrace& t = trace ? *trace : local;
  t = {};
  t.validation_ll.push_back(total());

  std::vector<Move> ranking;
  std::size_t cursor = 0;
  int since_rescore = config.rescore_period;
  for (int it = 0; it < config.max_iterations; ++it) {
    bool fresh = false;
    if (since_rescore >= config.rescore_period || cursor >= ranking.size()) {
      ranking = score_arc_candidates(s, cheap, config.max_parents);
      cursor = 0;
      since_rescore = 0;
      fresh = true;
      ++t.rescores;
    }
    int accepted = 0;
    while (cursor < ranking.size() && accepted < config.moves_per_iteration) {
      const Move m = ranking[cursor++];
      if (!(m.delta > 0.0)) {
        cursor = ranking.size();
        break;
      }
      if (!legal(s, m, config.max_parents)) continue;
      ++t.tried;
      const auto next = apply(s, m);
      const auto to = static_cast<std::size_t>(m.to);
      const double score = medium.score(m.to, next.parents[to]);
      if (score > family[to]) {
        s = next;
        family[to] = score;
        t.accepted.push_back(m);
        t.validation_ll.push_back(total());
        ++accepted;
        ++since_rescore;
      }
    }
    if (accepted == 0 && cursor >= ranking.size()) {
      if (fresh) break;
      since_rescore = config.rescore_period;
    }
  }
  return s;
}

FactoredModel parameterize(const NetworkStructure& structure, const Dataset& data, const TierConfig& tier,
                           std::uint64_t seed) {
  if (structure.size() != data.width()) throw ConfigError("structure does not match the schema width");
  if (!structure.acyclic()) throw ConfigError("structure has a cycle");
  FactoredModel model;
  model.schema = data.schema_ptr();
  model.structure = structure;
  std::optional<Dataset> sub;
  if (tier.max_rows > 0 && data.size() > tier.max_rows)
    sub.emplace(data.subset(subsample_indices(data.size(), tier.max_rows, derive_seed(seed, kSubsampleKey))));
  const Dataset& fit_on = sub ? *sub : data;
  for (std::size_t v = 0; v < structure.size(); ++v) {
    const ConditionalSpec spec{static_cast<int>(v), structure.parents[v]};
    ConditionalConfig c = family_config(tier, seed, static_cast<int>(v));
    if (spec.parents.empty()) c = root_config(c);
    model.conditionals.push_back(learn_conditional(fit_on, spec, c));
  }
  return model;
}

Dataset sample_network(const FactoredModel& model, std::size_t n, Rng& rng) {
  const auto order = model.structure.topological_order();
  if (!order) throw ConfigError("structure has a cycle");
  const std::size_t width = model.structure.size();
  Matrix out(n, width);
  std::vector<double> local;
  for (std::size_t r = 0; r < n; ++r) {
    auto row = out.row(r);
    for (int v : *order) {
      const auto& cm = model.conditionals[static_cast<std::size_t>(v)];
      local.resize(cm.spec.parents.size() + 1);
      project_row(row, cm.spec, local);
      row[static_cast<std::size_t>(v)] = cond_sample(cm, local, rng);
    }
  }
  return Dataset(model.schema, std::move(out));
}

std::vector<NetworkStructure> enumerate_dags(std::size_t n, int max_parents) {
  // Candidate parent sets per node as bitmasks over the other nodes.
  std::vector<std::vector<std::uint32_t>> options(n);
  for (std::size_t v = 0; v < n; ++v)
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask)
      if (!(mask & (1u << v)) && std::popcount(mask) <= max_parents) options[v].push_back(mask);

  std::vector<NetworkStructure> out;
  std::vector<std::size_t> pick(n, 0);
  while (true) {
    NetworkStructure s(n);
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t p = 0; p < n; ++p)
        if (options[v][pick[v]] & (1u << p)) s.parents[v].push_back(static_cast<int>(p));
    if (s.acyclic()) out.push_back(std::move(s));
    std::size_t k = 0;
    while (k < n && ++pick[k] == options[k].size()) pick[k++] = 0;
    if (k == n) break;
  }
  return out;
}

}  // namespace denstree
