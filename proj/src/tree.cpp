#include "denstree/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "denstree/error.hpp"

namespace denstree {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// seed keys below a node: children use 1..k, these sit above any arity
constexpr std::uint64_t kHoldoutKey = 0x5eed0001;
constexpr std::uint64_t kLeafKey = 0x5eed0002;
constexpr std::uint64_t kStumpKey = 0x5eed1000;

struct Candidate {
  Node skeleton;               // branch fields only
  std::vector<Box> child_boxes;
};

Candidate make_candidate(const Box& box, int var, bool discrete) {
  Candidate c;
  c.skeleton.var = var;
  if (discrete) {
    c.skeleton.kind = Node::Kind::discrete_branch;
    c.skeleton.values = box[var].values;
    for (int v : c.skeleton.values) c.child_boxes.push_back(restrict_value(box, var, v));
  } else {
    c.skeleton.kind = Node::Kind::continuous_branch;
    c.skeleton.split = 0.5 * (box[var].lo + box[var].hi);
    auto [low, high] = split_box(box, var, c.skeleton.split);
    c.child_boxes.push_back(std::move(low));
    c.child_boxes.push_back(std::move(high));
  }
  return c;
}

std::vector<std::vector<RowIndex>> route_rows(const Node& branch, const Matrix& data, RowSpan rows) {
  std::vector<std::vector<RowIndex>> parts(branch.kind == Node::Kind::continuous_branch ? 2 : branch.values.size());
  for (RowIndex r : rows) {
    const std::size_t k = branch.route(data.row(r));
    if (k < parts.size()) parts[k].push_back(r);
  }
  return parts;
}

// Fraction of the node's mass given to each child of a branch on a modeled
// dim: proportional to counts, with one pseudo-point per child for discrete
// branches and for continuous branches that leave a child empty.
std::vector<double> child_fractions(const std::vector<std::vector<RowIndex>>& parts, bool discrete) {
  const bool guard = discrete || std::any_of(parts.begin(), parts.end(), [](const auto& p) { return p.empty(); });
  const double pseudo = guard ? 1.0 : 0.0;
  double total = 0.0;
  for (const auto& p : parts) total += static_cast<double>(p.size()) + pseudo;
  std::vector<double> f;
  for (const auto& p : parts) f.push_back((static_cast<double>(p.size()) + pseudo) / total);
  return f;
}

double holdout_score(const Node& subtree, const Matrix& data, RowSpan rows) {
  double ll = 0.0;
  for (RowIndex r : rows) ll += node_log_density(subtree, data.row(r));
  return ll;
}

class Grower {
 public:
  Grower(const Matrix& data, const Space& space, const GrowConfig& config, const SubtreeBuilder& build)
      : data_(data), space_(space), config_(config), build_(build) {}

  Node grow(RowSpan rows, const Box& box, std::uint64_t seed, std::size_t depth) const {
    auto leaf = [&] { return build_(data_, rows, box, derive_seed(seed, kLeafKey)); };
    if (rows.size() < config_.min_points || depth >= config_.max_depth) return leaf();

    std::vector<Candidate> candidates;
    for (int v : config_.branch_vars) {
      const bool discrete = space_[v].is_discrete();
      if (discrete ? box[v].values.size() < 2 : !(box[v].width() > 1e-9 * space_[v].range())) continue;
      candidates.push_back(make_candidate(box, v, discrete));
    }
    if (candidates.empty()) return leaf();

    // stump scoring on a holdout of this node's rows
    const auto split = holdout_indices(rows.size(), config_.holdout_fraction, derive_seed(seed, kHoldoutKey));
    std::vector<RowIndex> fit_rows, score_rows;
    for (auto i : split.train) fit_rows.push_back(rows[i]);
    for (auto i : split.holdout) score_rows.push_back(rows[i]);

    const double base = holdout_score(build_(data_, fit_rows, box, derive_seed(seed, kLeafKey)), data_, score_rows);
    double best = base;
    const Candidate* chosen = nullptr;
    for (const auto& cand : candidates) {
      const int v = cand.skeleton.var;
      const std::uint64_t stump_seed = derive_seed(seed, kStumpKey + static_cast<std::uint64_t>(v));
      Node stump = cand.skeleton;
      attach_children(stump, cand, fit_rows, stump_seed, [&](RowSpan part, const Box& cbox, std::uint64_t s) {
        return build_(data_, part, cbox, s);
      });
      const double score = holdout_score(stump, data_, score_rows);
      if (score > best) {
        best = score;
        chosen = &cand;
      }
    }
    if (chosen == nullptr) return leaf();

    Node node = chosen->skeleton;
    attach_children(node, *chosen, rows, seed, [&](RowSpan part, const Box& cbox, std::uint64_t s) {
      return grow(part, cbox, s, depth + 1);
    });
    return node;
  }

 private:
  template <class Make>
  void attach_children(Node& node, const Candidate& cand, RowSpan rows, std::uint64_t seed, Make&& make) const {
    const auto parts = route_rows(node, data_, rows);
    const bool modeled = config_.modeled[static_cast<std::size_t>(node.var)];
    std::vector<double> frac(parts.size(), 1.0);
    if (modeled) frac = child_fractions(parts, node.kind == Node::Kind::discrete_branch);
    node.children.clear();
    for (std::size_t k = 0; k < parts.size(); ++k) {
      Node child = make(parts[k], cand.child_boxes[k], derive_seed(seed, k + 1));
      if (frac[k] != 1.0) scale_masses(child, frac[k]);
      node.children.push_back(std::move(child));
    }
  }

  const Matrix& data_;
  const Space& space_;
  const GrowConfig& config_;
  const SubtreeBuilder& build_;
};

class Pruner {
 public:
  Pruner(const Matrix& train, const Matrix& holdout, const std::vector<bool>& modeled,
         const ReplacementBuilder& replace)
      : train_(train), holdout_(holdout), modeled_(modeled), replace_(replace) {}

  std::size_t replaced = 0;

  void prune(Node& node, const Box& box, RowSpan train_rows, RowSpan hold_rows, std::uint64_t seed) {
    if (node.is_leaf()) return;
    const auto train_parts = route_rows(node, train_, train_rows);
    const auto hold_parts = route_rows(node, holdout_, hold_rows);
    for (std::size_t k = 0; k < node.children.size(); ++k) {
      prune(node.children[k], child_box(node, box, k), train_parts[k], hold_parts[k], derive_seed(seed, k + 1));
    }
    const double keep = holdout_score(node, holdout_, hold_rows);
    Node repl = replace_(node, train_, train_rows, box, derive_seed(seed, kLeafKey));
    scale_masses(repl, node_mass(node, modeled_));
    if (!repl.is_leaf()) prune(repl, box, train_rows, hold_rows, seed);
    const double alt = holdout_score(repl, holdout_, hold_rows);
    if (alt >= keep) {
      node = std::move(repl);
      ++replaced;
    }
  }

 private:
  static Box child_box(const Node& node, const Box& box, std::size_t k) {
    if (node.kind == Node::Kind::discrete_branch) return restrict_value(box, node.var, node.values[k]);
    auto [low, high] = split_box(box, node.var, node.split);
    return k == 0 ? low : high;
  }

  const Matrix& train_;
  const Matrix& holdout_;
  const std::vector<bool>& modeled_;
  const ReplacementBuilder& replace_;
};

std::vector<RowIndex> all_rows(std::size_t n) {
  std::vector<RowIndex> rows(n);
  std::iota(rows.begin(), rows.end(), RowIndex{0});
  return rows;
}

}  // namespace

std::size_t Node::route(std::span<const double> point) const {
  const double x = point[static_cast<std::size_t>(var)];
  if (kind == Kind::continuous_branch) return x <= split ? 0 : 1;
  const auto it = std::lower_bound(values.begin(), values.end(), static_cast<int>(x));
  if (it == values.end() || *it != static_cast<int>(x)) return static_cast<std::size_t>(-1);
  return static_cast<std::size_t>(it - values.begin());
}

std::vector<int> DensityTree::modeled_dims() const {
  std::vector<int> dims;
  for (std::size_t d = 0; d < modeled.size(); ++d)
    if (modeled[d]) dims.push_back(static_cast<int>(d));
  return dims;
}

SubtreeBuilder leaf_builder(const Space& space, std::vector<int> modeled, LeafFitOptions options) {
  return [space, modeled = std::move(modeled), options](const Matrix& data, RowSpan rows, const Box& box,
                                                         std::uint64_t seed) {
    Node node;
    node.leaf.box = box;
    node.leaf.mass = 1.0;
    node.leaf.count = rows.size();
    node.leaf.dist = fit_leaf(data, rows, box, space, modeled, options, seed);
    return node;
  };
}

Node grow_subtree(const Matrix& data, RowSpan rows, const Box& box, const Space& space, const GrowConfig& config,
                  const SubtreeBuilder& builder) {
  if (config.min_points < 2) throw ConfigError("min_points must be >= 2");
  if (config.modeled.size() != space.size()) throw ConfigError("modeled mask does not match the space");
  return Grower(data, space, config, builder).grow(rows, box, config.seed, 0);
}

DensityTree grow_tree(const Matrix& train, const Space& space, const Box& box, const GrowConfig& config,
                      const SubtreeBuilder& builder) {
  if (train.rows() == 0) throw DataError("cannot grow a tree on empty data");
  DensityTree tree;
  tree.space = space;
  tree.modeled = config.modeled;
  tree.root_box = box;
  const auto rows = all_rows(train.rows());
  tree.root = grow_subtree(train, rows, box, space, config, builder);
  finalize_tree(tree);
  return tree;
}

PruneResult prune_tree(const DensityTree& tree, const Matrix& train, const Matrix& holdout,
                       const ReplacementBuilder& replace, std::uint64_t seed) {
  PruneResult result{tree, 0, false};
  if (holdout.rows() == 0) {
    result.empty_holdout = true;
    return result;
  }
  Pruner pruner(train, holdout, tree.modeled, replace);
  const auto train_rows = all_rows(train.rows());
  const auto hold_rows = all_rows(holdout.rows());
  pruner.prune(result.tree.root, tree.root_box, train_rows, hold_rows, seed);
  result.replaced = pruner.replaced;
  finalize_tree(result.tree);
  return result;
}

const Leaf& descend(const Node& node, std::span<const double> point) {
  const Node* n = &node;
  while (!n->is_leaf()) {
    const std::size_t k = n->route(point);
    if (k >= n->children.size()) throw DataError("point value not admitted by the tree");
    n = &n->children[k];
  }
  return n->leaf;
}

double node_log_density(const Node& node, std::span<const double> point) {
  const Node* n = &node;
  while (!n->is_leaf()) {
    const std::size_t k = n->route(point);
    if (k >= n->children.size()) return kNegInf;
    n = &n->children[k];
  }
  const Leaf& leaf = n->leaf;
  if (!(leaf.mass > 0.0)) return kNegInf;
  return std::log(leaf.mass) + leaf_log_density(leaf.dist, point, leaf.box);
}

double modeled_volume(const DensityTree& tree) {
  double vol = 1.0;
  for (std::size_t d = 0; d < tree.space.size(); ++d) {
    if (!tree.modeled[d]) continue;
    vol *= tree.space[d].is_discrete() ? static_cast<double>(tree.root_box[d].values.size()) : tree.root_box[d].width();
  }
  return vol;
}

double tree_log_density(const DensityTree& tree, std::span<const double> point) {
  if (!tree.root_box.contains(point)) return kNegInf;
  const double ll = node_log_density(tree.root, point);
  if (tree.epsilon <= 0.0) return ll;
  const double uniform = std::log(tree.epsilon) - std::log(modeled_volume(tree));
  if (tree.epsilon >= 1.0 || ll == kNegInf) return uniform;
  const double a = std::log1p(-tree.epsilon) + ll;
  const double hi = std::max(a, uniform);
  return hi + std::log(std::exp(a - hi) + std::exp(uniform - hi));
}

DensityTree smooth_tree(DensityTree tree, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("smoothing epsilon must lie in [0, 1]");
  tree.epsilon = epsilon;
  return tree;
}

std::vector<double> sample_tree(const DensityTree& tree, Rng& rng) {
  if (std::find(tree.modeled.begin(), tree.modeled.end(), false) != tree.modeled.end())
    throw ConfigError("sample_tree needs a joint tree; conditional trees sample through their model");
  std::vector<double> point(tree.space.size(), 0.0);
  if (tree.epsilon > 0.0 && uniform01(rng) < tree.epsilon) {
    LeafDistribution uniform;
    for (std::size_t d = 0; d < tree.space.size(); ++d) {
      if (tree.space[d].is_discrete()) {
        const auto& vals = tree.root_box[d].values;
        uniform.discrete.push_back({static_cast<int>(d), std::vector<double>(static_cast<std::size_t>(tree.space[d].arity), 0.0)});
        for (int v : vals) uniform.discrete.back().prob[static_cast<std::size_t>(v)] = 1.0 / static_cast<double>(vals.size());
      } else {
        uniform.continuous_dims.push_back(static_cast<int>(d));
      }
    }
    sample_leaf(uniform, tree.root_box, rng, point);
    return point;
  }
  double u = uniform01(rng);
  const Leaf* chosen = nullptr;
  for_each_leaf(tree.root, [&](const Leaf& leaf) {
    if (chosen != nullptr) return;
    if (u < leaf.mass) chosen = &leaf;
    u -= leaf.mass;
  });
  if (chosen == nullptr) {
    // rounding left u just above the total mass: take the last leaf with mass
    for_each_leaf(tree.root, [&](const Leaf& leaf) {
      if (leaf.mass > 0.0) chosen = &leaf;
    });
  }
  sample_leaf(chosen->dist, chosen->box, rng, point);
  return point;
}

void for_each_leaf(const Node& node, const std::function<void(const Leaf&)>& fn) {
  if (node.is_leaf()) {
    fn(node.leaf);
    return;
  }
  for (const auto& c : node.children) for_each_leaf(c, fn);
}

void for_each_leaf(Node& node, const std::function<void(Leaf&)>& fn) {
  if (node.is_leaf()) {
    fn(node.leaf);
    return;
  }
  for (auto& c : node.children) for_each_leaf(c, fn);
}

std::vector<const Leaf*> leaves_by_id(const DensityTree& tree) {
  std::vector<const Leaf*> out(tree.leaf_count, nullptr);
  for_each_leaf(tree.root, [&](const Leaf& leaf) {
    if (leaf.id < 0 || static_cast<std::size_t>(leaf.id) >= out.size())
      throw DataError("tree leaf ids are not finalized");
    out[static_cast<std::size_t>(leaf.id)] = &leaf;
  });
  return out;
}

std::size_t tree_depth(const Node& node) {
  std::size_t depth = 0;
  for (const auto& c : node.children) depth = std::max(depth, 1 + tree_depth(c));
  return depth;
}

void finalize_tree(DensityTree& tree) {
  int next = 0;
  for_each_leaf(tree.root, [&](Leaf& leaf) { leaf.id = next++; });
  tree.leaf_count = static_cast<std::size_t>(next);
}

double node_mass(const Node& node, const std::vector<bool>& modeled) {
  if (node.is_leaf()) return node.leaf.mass;
  if (!modeled[static_cast<std::size_t>(node.var)]) return node_mass(node.children.front(), modeled);
  double m = 0.0;
  for (const auto& c : node.children) m += node_mass(c, modeled);
  return m;
}

void scale_masses(Node& node, double factor) {
  for_each_leaf(node, [factor](Leaf& leaf) { leaf.mass *= factor; });
}

}  // namespace denstree
