#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "denstree/box.hpp"
#include "denstree/leaf.hpp"
#include "denstree/random.hpp"

namespace denstree {

struct Leaf {
  int id = -1;
  Box box;
  double mass = 1.0;
  std::size_t count = 0;
  LeafDistribution dist;

  friend bool operator==(const Leaf&, const Leaf&) = default;
};

struct Node {
  enum class Kind : std::uint8_t { leaf, continuous_branch, discrete_branch };

  Kind kind = Kind::leaf;
  int var = -1;
  double split = 0.0;             // continuous branch: low child takes x <= split
  std::vector<int> values;        // discrete branch: value routed to each child
  std::vector<Node> children;
  Leaf leaf;

  bool is_leaf() const { return kind == Kind::leaf; }
  /// Index of the child a point descends into; npos for an unlisted discrete value.
  std::size_t route(std::span<const double> point) const;

  friend bool operator==(const Node&, const Node&) = default;
};

/// A density tree over a local space. `modeled` marks the dims whose density
/// the tree represents; branches on other dims condition rather than split
/// mass. A joint tree models every dim.
struct DensityTree {
  Space space;
  std::vector<bool> modeled;
  Box root_box;
  Node root;
  double epsilon = 0.0;
  std::size_t leaf_count = 0;

  std::vector<int> modeled_dims() const;
  friend bool operator==(const DensityTree&, const DensityTree&) = default;
};

struct GrowConfig {
  std::size_t min_points = 10;
  double holdout_fraction = 0.3;
  std::vector<int> branch_vars;
  std::vector<bool> modeled;
  std::size_t max_depth = 48;
  std::uint64_t seed = 0;
};

/// Builds the model below a node from the node's rows: a single fitted leaf,
/// or a whole subtree (stratified learning). Leaf masses of the returned
/// subtree are relative to it.
using SubtreeBuilder = std::function<Node(const Matrix& data, RowSpan rows, const Box& box, std::uint64_t seed)>;

SubtreeBuilder leaf_builder(const Space& space, std::vector<int> modeled, LeafFitOptions options);

/// Greedy top-down growth with midpoint splits and stump scoring on a per-node
/// holdout of the node's rows.
Node grow_subtree(const Matrix& data, RowSpan rows, const Box& box, const Space& space, const GrowConfig& config,
                  const SubtreeBuilder& builder);
DensityTree grow_tree(const Matrix& train, const Space& space, const Box& box, const GrowConfig& config,
                      const SubtreeBuilder& builder);

/// Rebuilds a replacement for `subtree` from the training rows reaching it.
using ReplacementBuilder =
    std::function<Node(const Node& subtree, const Matrix& data, RowSpan rows, const Box& box, std::uint64_t seed)>;

struct PruneResult {
  DensityTree tree;
  std::size_t replaced = 0;
  bool empty_holdout = false;
};

/// Bottom-up reduced-error pruning: a branch is replaced when the replacement
/// scores at least as well on the holdout rows reaching it.
PruneResult prune_tree(const DensityTree& tree, const Matrix& train, const Matrix& holdout,
                       const ReplacementBuilder& replace, std::uint64_t seed);

/// log density of the tree at a point (with smoothing applied when epsilon > 0);
/// -infinity outside the root box.
double tree_log_density(const DensityTree& tree, std::span<const double> point);
/// Unsmoothed log density of a subtree whose masses are relative to `node`.
double node_log_density(const Node& node, std::span<const double> point);
const Leaf& descend(const Node& node, std::span<const double> point);

DensityTree smooth_tree(DensityTree tree, double epsilon);

/// Joint trees only: leaf by mass, then a leaf draw.
std::vector<double> sample_tree(const DensityTree& tree, Rng& rng);

/// Uniform reference volume over the modeled dims (discrete dims count values).
double modeled_volume(const DensityTree& tree);

void for_each_leaf(const Node& node, const std::function<void(const Leaf&)>& fn);
void for_each_leaf(Node& node, const std::function<void(Leaf&)>& fn);
std::vector<const Leaf*> leaves_by_id(const DensityTree& tree);
std::size_t tree_depth(const Node& node);
/// Assigns leaf ids in depth-first order and refreshes leaf_count.
void finalize_tree(DensityTree& tree);

/// Conditional mass of a node: sum over children for branches on modeled
/// dims, the (common) child mass for conditioning branches.
double node_mass(const Node& node, const std::vector<bool>& modeled);
void scale_masses(Node& node, double factor);

}  // namespace denstree
