#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "denstree/conditional.hpp"
#include "denstree/tree.hpp"

namespace denstree::testing {

Space make_space(int continuous, std::vector<int> arities = {});

/// Adaptive Gauss-Kronrod on [a, b].
double integrate(const std::function<double(double)>& f, double a, double b);
/// Sum of integrate() over consecutive breakpoints (sorted, deduplicated).
double integrate_pieces(const std::function<double(double)>& f, std::vector<double> breaks);

/// Integral of a leaf's density over its box by tensor quadrature on the
/// continuous dims and enumeration of the discrete ones.
double leaf_quadrature(const LeafDistribution& leaf, const Box& box, const Space& space);

double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf);
/// Asymptotic Kolmogorov critical value.
double ks_critical(std::size_t n, double alpha = 0.01);

struct Interval {
  double lo, hi;
};
/// Two-sided binomial acceptance region for a count out of n.
Interval binomial_region(std::size_t n, double p, double level = 0.99);
double chi_square_upper_p(double stat, double df);

struct RandomTreeOptions {
  LeafFamily family = LeafFamily::uniform;
  std::size_t max_leaves = 20;
  std::size_t max_depth = 8;
  double branch_prob = 0.75;
};

/// Uniform leaves also get uniform multinomials.
LeafDistribution random_leaf(const Space& space, const Box& box, std::span<const int> modeled, LeafFamily family,
                             Rng& rng);
/// Joint tree over every dim with random branches and masses summing to 1.
DensityTree random_joint_tree(const Space& space, const RandomTreeOptions& options, Rng& rng);
/// Parent branches above child branches; masses are conditional and sum to 1
/// under every parent region. Leaves model dim 0 only.
DensityTree random_stratified_tree(const Space& space, const RandomTreeOptions& options, Rng& rng);
/// Joint tree with stratified shape (parent branches first): every leaf
/// under one parent region shares that region's parent box.
DensityTree random_stratified_joint_tree(const Space& space, const RandomTreeOptions& options, Rng& rng);

std::vector<double> random_point(const Box& box, const Space& space, Rng& rng);
/// A point whose parent dims lie in the root box; dim 0 left at the box low end.
std::vector<double> random_parents(const DensityTree& tree, Rng& rng);

ConditionalSpec local_spec(const Space& space);

/// Leaves admitting the parent values of `point`, found by scanning every
/// leaf box rather than descending.
std::vector<const Leaf*> scan_consistent(const DensityTree& tree, std::span<const double> point);

/// Sum over scanned leaves of the posterior weight times the leaf's
/// analytic child mass.
double scanned_conditional_mass(const DensityTree& tree, std::span<const double> point, bool joint);

/// Breakpoints along dim 0 of every leaf box consistent with `point`.
std::vector<double> child_breaks(const DensityTree& tree, std::span<const double> point);

/// Ratio p(x, pi) / integral of p(x', pi) dx' with the integral by quadrature
/// between child breakpoints; continuous child only.
double grid_conditional(const DensityTree& tree, std::span<const double> point);

/// First n points of the Halton sequence in [0, 1]^d (bases 2, 3, 5, ...).
Matrix halton(std::size_t n, std::size_t d);

Matrix sample_rows(const DensityTree& tree, std::size_t n, Rng& rng);

void for_each_aux_leaf(const AuxNode& node, const std::function<void(const AuxNode&)>& fn);

}  // namespace denstree::testing
