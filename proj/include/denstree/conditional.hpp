#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "denstree/dataset.hpp"
#include "denstree/tree.hpp"

namespace denstree {

/// P(child | parents) over schema columns. In the local space of a
/// conditional model the child is dim 0 and parent k is dim k + 1.
struct ConditionalSpec {
  int child = 0;
  std::vector<int> parents;

  friend bool operator==(const ConditionalSpec&, const ConditionalSpec&) = default;
};

constexpr int kChildDim = 0;

enum class ConditionalMode : std::uint8_t { cart, stratified, joint, approx };

std::string_view to_string(ConditionalMode mode);
std::optional<ConditionalMode> parse_conditional_mode(std::string_view name);

struct ConditionalConfig {
  ConditionalMode mode = ConditionalMode::approx;
  LeafFamily leaf = LeafFamily::linear_interp;
  std::size_t min_points = 10;
  double stump_holdout = 0.3;
  double prune_holdout = 0.3;
  bool prune = true;
  double pseudo_count = 1.0;
  EmFitConfig em;
  double epsilon = 1e-3;
  bool direct_alpha = false;  // alpha = mean posterior P(l_c | pi) instead of the ratio of means
  std::uint64_t seed = 0;
};

/// Throws ConfigError for illegal mode/leaf combinations.
void validate(const ConditionalConfig& config);

/// Tree over the parent space whose branches mirror the joint tree's parent
/// branches and whose leaves list every joint leaf reachable for any parent
/// value inside the leaf region. The aux tree refines those leaves on the
/// child until each points at one joint leaf and carries its alpha.
struct AuxNode {
  Node::Kind kind = Node::Kind::leaf;
  int var = -1;
  double split = 0.0;
  std::vector<int> values;
  std::vector<AuxNode> children;

  Box box;
  std::vector<int> leaf_ids;  // marginal leaves: every intersecting joint leaf
  int target = -1;            // aux leaves: the single joint leaf
  double alpha = 1.0;
  int subtree = -1;           // aux leaves: index of their child-branching subtree t_s

  bool is_leaf() const { return kind == Node::Kind::leaf; }
  std::size_t route(std::span<const double> point) const;

  friend bool operator==(const AuxNode&, const AuxNode&) = default;
};

struct MarginalTree {
  AuxNode root;
  std::size_t leaf_count = 0;
};

struct AuxTree {
  AuxNode root;
  std::size_t leaf_count = 0;
  std::size_t subtree_count = 0;
  std::vector<bool> subtree_fallback;  // no training rows reached the subtree

  friend bool operator==(const AuxTree&, const AuxTree&) = default;
};

/// A learned conditional density estimator. The tree is shared and never
/// mutated after construction, so copies are cheap and thread-safe to read.
struct ConditionalModel {
  ConditionalSpec spec;
  ConditionalMode mode = ConditionalMode::cart;
  LeafFamily leaf = LeafFamily::uniform;
  double epsilon = 0.0;
  std::shared_ptr<const DensityTree> tree;
  std::shared_ptr<const AuxTree> aux;  // approx mode only
  std::vector<const Leaf*> leaves;     // tree leaves by id

  const Space& space() const { return tree->space; }
};

ConditionalModel make_model(ConditionalSpec spec, ConditionalMode mode, LeafFamily leaf, double epsilon,
                            DensityTree tree, std::optional<AuxTree> aux = std::nullopt);

struct EvalCounters {
  std::uint64_t queries = 0;
  std::uint64_t visited_leaves = 0;
};

Space local_space(const Schema& schema, const ConditionalSpec& spec);
Matrix project(const Dataset& data, const ConditionalSpec& spec);
void project_row(std::span<const double> row, const ConditionalSpec& spec, std::span<double> out);

// Learners take data already projected to the local space.
ConditionalModel learn_cart(const Matrix& data, const Space& space, const ConditionalSpec& spec,
                            const ConditionalConfig& config);
ConditionalModel learn_stratified(const Matrix& data, const Space& space, const ConditionalSpec& spec,
                                  const ConditionalConfig& config);
ConditionalModel learn_joint(const Matrix& data, const Space& space, const ConditionalSpec& spec,
                             const ConditionalConfig& config);
/// learn_joint, then marginalize_structure, refine_to_aux and estimate_alphas.
ConditionalModel learn_approx(const Matrix& data, const Space& space, const ConditionalSpec& spec,
                              const ConditionalConfig& config);
ConditionalModel learn_conditional(const Dataset& data, const ConditionalSpec& spec, const ConditionalConfig& config);

MarginalTree marginalize_structure(const DensityTree& joint);
AuxTree refine_to_aux(const MarginalTree& marginal, const DensityTree& joint);
/// Sets alpha on every aux leaf from the training rows consistent with each
/// child-branching subtree.
void estimate_alphas(AuxTree& aux, const DensityTree& joint, const Matrix& train, bool direct = false);
ConditionalModel make_approx(const ConditionalModel& joint, AuxTree aux);

/// Smoothed log P(x | pi) at a local point (child at dim 0).
double cond_log_density(const ConditionalModel& model, std::span<const double> point, EvalCounters* counters = nullptr);
/// Unsmoothed exact conditional of a joint tree by a sweep over the leaves
/// consistent with the parents.
double cond_log_density_exact(const ConditionalModel& model, std::span<const double> point,
                              EvalCounters* counters = nullptr);
/// Unsmoothed single-descent approximation through the aux tree.
double cond_log_density_approx(const ConditionalModel& model, std::span<const double> point,
                               EvalCounters* counters = nullptr);
/// Unsmoothed conditional density of cart and stratified trees.
double cond_log_density_direct(const ConditionalModel& model, std::span<const double> point,
                               EvalCounters* counters = nullptr);

/// Analytic integral of the unsmoothed conditional over the child range.
double conditional_mass(const ConditionalModel& model, std::span<const double> point);

double conditional_log_likelihood(const ConditionalModel& model, const Matrix& local, EvalCounters* counters = nullptr);

/// Draws the child given the parent values in `point` (dim 0 is ignored).
double cond_sample(const ConditionalModel& model, std::span<const double> point, Rng& rng);

}  // namespace denstree
