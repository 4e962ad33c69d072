#include "denstree/conditional.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "denstree/error.hpp"

namespace denstree {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::uint64_t kGrowKey = 0xc0de0001;
constexpr std::uint64_t kPruneSplitKey = 0xc0de0002;
constexpr std::uint64_t kInnerKey = 0xc0de0003;

std::vector<int> parent_dims(const Space& space) {
  std::vector<int> dims;
  for (std::size_t d = 1; d < space.size(); ++d) dims.push_back(static_cast<int>(d));
  return dims;
}

std::vector<int> all_dims(const Space& space) {
  std::vector<int> dims(space.size());
  std::iota(dims.begin(), dims.end(), 0);
  return dims;
}

LeafFitOptions fit_options(const ConditionalConfig& config) {
  return {config.leaf, config.pseudo_count, config.em};
}

double child_range_volume(const Box& box, const Space& space) {
  return space[kChildDim].is_discrete() ? static_cast<double>(box[kChildDim].values.size()) : box[kChildDim].width();
}

// Grows on a grow subset and prunes on the remaining rows of `data`.
DensityTree grow_and_prune(const Matrix& data, const Space& space, GrowConfig grow, const SubtreeBuilder& builder,
                           const ReplacementBuilder& replace, const ConditionalConfig& config) {
  const Box box = root_box(space);
  grow.seed = derive_seed(config.seed, kGrowKey);
  if (config.prune && data.rows() >= 2 * config.min_points) {
    const auto split = holdout_indices(data.rows(), config.prune_holdout, derive_seed(config.seed, kPruneSplitKey));
    const Matrix grow_rows = data.select_rows(split.train);
    const Matrix prune_rows = data.select_rows(split.holdout);
    DensityTree tree = grow_tree(grow_rows, space, box, grow, builder);
    return prune_tree(tree, grow_rows, prune_rows, replace, grow.seed).tree;
  }
  return grow_tree(data, space, box, grow, builder);
}

GrowConfig base_grow(const Space& space, const ConditionalConfig& config) {
  GrowConfig g;
  g.min_points = config.min_points;
  g.holdout_fraction = config.stump_holdout;
  g.modeled.assign(space.size(), false);
  return g;
}

void collect_consistent(const Node& node, std::span<const double> point, std::vector<const Leaf*>& out) {
  if (node.is_leaf()) {
    out.push_back(&node.leaf);
    return;
  }
  if (node.var == kChildDim) {
    for (const auto& c : node.children) collect_consistent(c, point, out);
    return;
  }
  const std::size_t k = node.route(point);
  if (k < node.children.size()) collect_consistent(node.children[k], point, out);
}

void collect_consistent(const AuxNode& node, std::span<const double> point, std::vector<const AuxNode*>& out) {
  if (node.is_leaf()) {
    out.push_back(&node);
    return;
  }
  if (node.var == kChildDim) {
    for (const auto& c : node.children) collect_consistent(c, point, out);
    return;
  }
  const std::size_t k = node.route(point);
  if (k < node.children.size()) collect_consistent(node.children[k], point, out);
}

double uniform_child_log_density(const ConditionalModel& model) {
  return -std::log(child_range_volume(model.tree->root_box, model.space()));
}

template <class T>
std::size_t pick(std::span<const T> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

}  // namespace

std::string_view to_string(ConditionalMode mode) {
  switch (mode) {
    case ConditionalMode::cart: return "cart";
    case ConditionalMode::stratified: return "stratified";
    case ConditionalMode::joint: return "joint";
    case ConditionalMode::approx: return "approx";
  }
  return "?";
}

std::optional<ConditionalMode> parse_conditional_mode(std::string_view name) {
  if (name == "cart") return ConditionalMode::cart;
  if (name == "stratified") return ConditionalMode::stratified;
  if (name == "joint") return ConditionalMode::joint;
  if (name == "approx") return ConditionalMode::approx;
  return std::nullopt;
}

void validate(const ConditionalConfig& config) {
  if (config.leaf == LeafFamily::linreg_gaussian && config.mode != ConditionalMode::cart)
    throw ConfigError("linear-regression leaves are only available with cart trees");
  if (config.mode == ConditionalMode::cart &&
      (config.leaf == LeafFamily::linear_interp || config.leaf == LeafFamily::multilinear_interp))
    throw ConfigError("cart trees use gaussian, linreg or uniform leaves");
  if (config.min_points < 2) throw ConfigError("min_points must be >= 2");
  if (!(config.epsilon >= 0.0 && config.epsilon < 1.0)) throw ConfigError("epsilon must lie in [0, 1)");
  if (config.em.max_iters < 1) throw ConfigError("EM needs at least one iteration");
}

std::size_t AuxNode::route(std::span<const double> point) const {
  const double x = point[static_cast<std::size_t>(var)];
  if (kind == Node::Kind::continuous_branch) return x <= split ? 0 : 1;
  const auto it = std::lower_bound(values.begin(), values.end(), static_cast<int>(x));
  if (it == values.end() || *it != static_cast<int>(x)) return static_cast<std::size_t>(-1);
  return static_cast<std::size_t>(it - values.begin());
}

ConditionalModel make_model(ConditionalSpec spec, ConditionalMode mode, LeafFamily leaf, double epsilon,
                            DensityTree tree, std::optional<AuxTree> aux) {
  ConditionalModel m;
  m.spec = std::move(spec);
  m.mode = mode;
  m.leaf = leaf;
  m.epsilon = epsilon;
  auto shared = std::make_shared<const DensityTree>(std::move(tree));
  m.leaves = leaves_by_id(*shared);
  m.tree = std::move(shared);
  if (aux) m.aux = std::make_shared<const AuxTree>(std::move(*aux));
  if (mode == ConditionalMode::approx && !m.aux) throw ConfigError("approx models need an aux tree");
  return m;
}

Space local_space(const Schema& schema, const ConditionalSpec& spec) {
  if (spec.child < 0 || static_cast<std::size_t>(spec.child) >= schema.size())
    throw ConfigError("conditional child is not a schema variable");
  Space space{schema[static_cast<std::size_t>(spec.child)]};
  for (int p : spec.parents) {
    if (p < 0 || static_cast<std::size_t>(p) >= schema.size()) throw ConfigError("parent is not a schema variable");
    if (p == spec.child) throw ConfigError("a variable cannot be its own parent");
    space.push_back(schema[static_cast<std::size_t>(p)]);
  }
  return space;
}

void project_row(std::span<const double> row, const ConditionalSpec& spec, std::span<double> out) {
  out[0] = row[static_cast<std::size_t>(spec.child)];
  for (std::size_t k = 0; k < spec.parents.size(); ++k) out[k + 1] = row[static_cast<std::size_t>(spec.parents[k])];
}

Matrix project(const Dataset& data, const ConditionalSpec& spec) {
  Matrix out(data.size(), spec.parents.size() + 1);
  for (std::size_t r = 0; r < data.size(); ++r) project_row(data.row(r), spec, out.row(r));
  return out;
}

ConditionalModel learn_cart(const Matrix& data, const Space& space, const ConditionalSpec& spec,
                            const ConditionalConfig& config) {
  validate(config);
  GrowConfig grow = base_grow(space, config);
  grow.modeled[kChildDim] = true;
  grow.branch_vars = parent_dims(space);
  auto builder = leaf_builder(space, {kChildDim}, fit_options(config));
  ReplacementBuilder replace = [&](const Node&, const Matrix& d, RowSpan rows, const Box& box, std::uint64_t seed) {
    return builder(d, rows, box, seed);
  };
  DensityTree tree = grow_and_prune(data, space, grow, builder, replace, config);
  return make_model(spec, ConditionalMode::cart, config.leaf, config.epsilon, std::move(tree));
}

ConditionalModel learn_stratified(const Matrix& data, const Space& space, const ConditionalSpec& spec,
                                  const ConditionalConfig& config) {
  validate(config);
  GrowConfig inner = base_grow(space, config);
  inner.modeled[kChildDim] = true;
  inner.branch_vars = {kChildDim};
  GrowConfig outer = inner;
  outer.branch_vars = parent_dims(space);

  auto leaf = leaf_builder(space, {kChildDim}, fit_options(config));
  SubtreeBuilder subtree = [&, inner](const Matrix& d, RowSpan rows, const Box& box, std::uint64_t seed) mutable {
    inner.seed = derive_seed(seed, kInnerKey);
    return grow_subtree(d, rows, box, space, inner, leaf);
  };
  ReplacementBuilder replace = [&](const Node& node, const Matrix& d, RowSpan rows, const Box& box,
                                   std::uint64_t seed) {
    return node.var == kChildDim ? leaf(d, rows, box, seed) : subtree(d, rows, box, seed);
  };
  DensityTree tree = grow_and_prune(data, space, outer, subtree, replace, config);
  return make_model(spec, ConditionalMode::stratified, config.leaf, config.epsilon, std::move(tree));
}

ConditionalModel learn_joint(const Matrix& data, const Space& space, const ConditionalSpec& spec,
                             const ConditionalConfig& config) {
  validate(config);
  GrowConfig grow = base_grow(space, config);
  grow.modeled.assign(space.size(), true);
  grow.branch_vars = all_dims(space);
  auto builder = leaf_builder(space, all_dims(space), fit_options(config));
  ReplacementBuilder replace = [&](const Node&, const Matrix& d, RowSpan rows, const Box& box, std::uint64_t seed) {
    return builder(d, rows, box, seed);
  };
  DensityTree tree = grow_and_prune(data, space, grow, builder, replace, config);
  return make_model(spec, ConditionalMode::joint, config.leaf, config.epsilon, std::move(tree));
}

ConditionalModel learn_approx(const Matrix& data, const Space& space, const ConditionalSpec& spec,
                              const ConditionalConfig& config) {
  ConditionalModel joint = learn_joint(data, space, spec, config);
  AuxTree aux = refine_to_aux(marginalize_structure(*joint.tree), *joint.tree);
  estimate_alphas(aux, *joint.tree, data, config.direct_alpha);
  return make_approx(joint, std::move(aux));
}

ConditionalModel learn_conditional(const Dataset& data, const ConditionalSpec& spec, const ConditionalConfig& config) {
  const Space space = local_space(data.schema(), spec);
  const Matrix local = project(data, spec);
  switch (config.mode) {
    case ConditionalMode::cart: return learn_cart(local, space, spec, config);
    case ConditionalMode::stratified: return learn_stratified(local, space, spec, config);
    case ConditionalMode::joint: return learn_joint(local, space, spec, config);
    case ConditionalMode::approx: return learn_approx(local, space, spec, config);
  }
  throw ConfigError("unknown conditional mode");
}

ConditionalModel make_approx(const ConditionalModel& joint, AuxTree aux) {
  ConditionalModel m = joint;
  m.mode = ConditionalMode::approx;
  m.aux = std::make_shared<const AuxTree>(std::move(aux));
  return m;
}

// ---------------------------------------------------------------------------
// Evaluation

double cond_log_density_direct(const ConditionalModel& model, std::span<const double> point, EvalCounters* counters) {
  if (counters) {
    ++counters->queries;
    ++counters->visited_leaves;
  }
  if (!model.tree->root_box.contains(point)) return kNegInf;
  return node_log_density(model.tree->root, point);
}

double cond_log_density_exact(const ConditionalModel& model, std::span<const double> point, EvalCounters* counters) {
  const DensityTree& tree = *model.tree;
  if (counters) ++counters->queries;
  if (!tree.root_box.contains(point)) return kNegInf;
  if (tree.space.size() == 1) {
    if (counters) ++counters->visited_leaves;
    return node_log_density(tree.root, point);
  }
  const auto parents = parent_dims(tree.space);
  std::vector<const Leaf*> consistent;
  collect_consistent(tree.root, point, consistent);
  if (counters) counters->visited_leaves += consistent.size();
  double denominator = 0.0;
  for (const Leaf* leaf : consistent)
    denominator += leaf->mass * leaf_marginal_density(leaf->dist, point, parents, leaf->box);
  if (!(denominator > 0.0)) return uniform_child_log_density(model);
  const double numerator = node_log_density(tree.root, point);
  return numerator - std::log(denominator);
}

double cond_log_density_approx(const ConditionalModel& model, std::span<const double> point, EvalCounters* counters) {
  if (counters) {
    ++counters->queries;
    ++counters->visited_leaves;
  }
  if (!model.tree->root_box.contains(point)) return kNegInf;
  const AuxNode* n = &model.aux->root;
  while (!n->is_leaf()) {
    const std::size_t k = n->route(point);
    if (k >= n->children.size()) return kNegInf;
    n = &n->children[k];
  }
  const Leaf& leaf = *model.leaves[static_cast<std::size_t>(n->target)];
  return std::log(n->alpha) + leaf_conditional_log_density(leaf.dist, kChildDim, point, leaf.box);
}

double cond_log_density(const ConditionalModel& model, std::span<const double> point, EvalCounters* counters) {
  double raw = kNegInf;
  switch (model.mode) {
    case ConditionalMode::cart:
    case ConditionalMode::stratified: raw = cond_log_density_direct(model, point, counters); break;
    case ConditionalMode::joint: raw = cond_log_density_exact(model, point, counters); break;
    case ConditionalMode::approx: raw = cond_log_density_approx(model, point, counters); break;
  }
  if (model.epsilon <= 0.0) return raw;
  if (!model.tree->root_box.contains(point)) return kNegInf;
  const double uniform = std::log(model.epsilon) + uniform_child_log_density(model);
  if (raw == kNegInf) return uniform;
  const double a = std::log1p(-model.epsilon) + raw;
  const double hi = std::max(a, uniform);
  return hi + std::log(std::exp(a - hi) + std::exp(uniform - hi));
}

double conditional_mass(const ConditionalModel& model, std::span<const double> point) {
  const DensityTree& tree = *model.tree;
  if (model.mode == ConditionalMode::approx) {
    std::vector<const AuxNode*> aux_leaves;
    collect_consistent(model.aux->root, point, aux_leaves);
    double total = 0.0;
    for (const AuxNode* a : aux_leaves) {
      const Leaf& leaf = *model.leaves[static_cast<std::size_t>(a->target)];
      total += a->alpha * leaf_conditional_mass(leaf.dist, kChildDim, a->box[kChildDim], point, leaf.box);
    }
    return total;
  }
  std::vector<const Leaf*> consistent;
  collect_consistent(tree.root, point, consistent);
  if (model.mode == ConditionalMode::joint) {
    const auto parents = parent_dims(tree.space);
    double num = 0.0;
    double den = 0.0;
    for (const Leaf* leaf : consistent) {
      const double w = leaf->mass * leaf_marginal_density(leaf->dist, point, parents, leaf->box);
      den += w;
      num += w * leaf_conditional_mass(leaf->dist, kChildDim, leaf->box[kChildDim], point, leaf->box);
    }
    return den > 0.0 ? num / den : 1.0;
  }
  double total = 0.0;
  for (const Leaf* leaf : consistent)
    total += leaf->mass * leaf_conditional_mass(leaf->dist, kChildDim, leaf->box[kChildDim], point, leaf->box);
  return total;
}

double conditional_log_likelihood(const ConditionalModel& model, const Matrix& local, EvalCounters* counters) {
  double ll = 0.0;
  for (std::size_t r = 0; r < local.rows(); ++r) ll += cond_log_density(model, local.row(r), counters);
  return ll;
}

// ---------------------------------------------------------------------------
// Sampling

double cond_sample(const ConditionalModel& model, std::span<const double> point, Rng& rng) {
  const DensityTree& tree = *model.tree;
  const Box& root = tree.root_box;
  const Space& space = tree.space;
  std::vector<double> q(point.begin(), point.end());
  if (model.epsilon > 0.0 && uniform01(rng) < model.epsilon) {
    if (space[kChildDim].is_discrete()) {
      const auto& vals = root[kChildDim].values;
      return vals[std::min(vals.size() - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(vals.size())))];
    }
    return root[kChildDim].lo + uniform01(rng) * root[kChildDim].width();
  }

  if (model.mode == ConditionalMode::approx) {
    std::vector<const AuxNode*> aux_leaves;
    collect_consistent(model.aux->root, q, aux_leaves);
    std::vector<double> w;
    for (const AuxNode* a : aux_leaves) {
      const Leaf& leaf = *model.leaves[static_cast<std::size_t>(a->target)];
      w.push_back(a->alpha * leaf_conditional_mass(leaf.dist, kChildDim, a->box[kChildDim], q, leaf.box));
    }
    const AuxNode* a = aux_leaves[pick<double>(w, rng)];
    const Leaf& leaf = *model.leaves[static_cast<std::size_t>(a->target)];
    return sample_leaf_conditional(leaf.dist, kChildDim, leaf.box, q, rng, &a->box[kChildDim]);
  }

  std::vector<const Leaf*> consistent;
  collect_consistent(tree.root, q, consistent);
  std::vector<double> w;
  const auto parents = parent_dims(space);
  for (const Leaf* leaf : consistent) {
    double weight = leaf->mass;
    if (model.mode == ConditionalMode::joint) weight *= leaf_marginal_density(leaf->dist, q, parents, leaf->box);
    w.push_back(weight);
  }
  const Leaf* leaf = consistent[pick<double>(w, rng)];
  return sample_leaf_conditional(leaf->dist, kChildDim, leaf->box, q, rng);
}

}  // namespace denstree
