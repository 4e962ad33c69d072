#include "support.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace denstree::testing {

namespace {

std::vector<double> dirichlet(std::size_t k, Rng& rng) {
  std::vector<double> w(k);
  double s = 0.0;
  for (double& x : w) s += (x = -std::log(1.0 - 0.98 * uniform01(rng)));
  for (double& x : w) x /= s;
  return w;
}

bool splittable(const Box& box, const Space& space, int dim) {
  if (space[dim].is_discrete()) return box[dim].values.size() >= 2;
  return box[dim].width() > 1e-3 * space[dim].range();
}

enum class Shape { joint, stratified, stratified_joint };

struct RandomBuilder {
  const Space& space;
  const RandomTreeOptions& opt;
  Rng& rng;
  Shape shape;
  std::size_t leaves = 1;

  std::vector<int> modeled() const {
    if (shape == Shape::stratified) return {0};
    std::vector<int> all(space.size());
    for (std::size_t d = 0; d < space.size(); ++d) all[d] = static_cast<int>(d);
    return all;
  }

  Node leaf(const Box& box, double mass) {
    Node n;
    n.leaf.box = box;
    n.leaf.mass = mass;
    n.leaf.dist = random_leaf(space, box, modeled(), opt.family, rng);
    return n;
  }

  Node build(const Box& box, double mass, std::size_t depth, bool child_phase) {
    std::vector<int> vars;
    for (std::size_t d = 0; d < space.size(); ++d) {
      const int v = static_cast<int>(d);
      if (shape != Shape::joint && child_phase && v != 0) continue;
      if (splittable(box, space, v)) vars.push_back(v);
    }
    if (vars.empty() || depth >= opt.max_depth || uniform01(rng) > opt.branch_prob) return leaf(box, mass);
    const int var = vars[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(vars.size()))];
    const std::size_t k = space[var].is_discrete() ? box[var].values.size() : 2;
    if (leaves + k - 1 > opt.max_leaves) return leaf(box, mass);
    leaves += k - 1;

    Node n;
    n.var = var;
    std::vector<Box> boxes;
    if (space[var].is_discrete()) {
      n.kind = Node::Kind::discrete_branch;
      n.values = box[var].values;
      for (int v : n.values) boxes.push_back(restrict_value(box, var, v));
    } else {
      n.kind = Node::Kind::continuous_branch;
      n.split = 0.5 * (box[var].lo + box[var].hi);
      auto [lo, hi] = split_box(box, var, n.split);
      boxes = {lo, hi};
    }
    const bool divides = shape != Shape::stratified || var == 0;
    const auto frac = dirichlet(k, rng);
    for (std::size_t i = 0; i < k; ++i)
      n.children.push_back(build(boxes[i], divides ? mass * frac[i] : mass, depth + 1, child_phase || var == 0));
    return n;
  }
};

DensityTree random_tree(const Space& space, const RandomTreeOptions& options, Rng& rng, Shape shape) {
  RandomBuilder b{space, options, rng, shape};
  DensityTree t;
  t.space = space;
  t.modeled.assign(space.size(), shape != Shape::stratified);
  t.modeled[0] = true;
  t.root_box = root_box(space);
  t.root = b.build(t.root_box, 1.0, 0, false);
  finalize_tree(t);
  return t;
}

double integrate_dims(const LeafDistribution& leaf, const Box& box, const Space& space, std::vector<double>& point,
                      const std::vector<int>& dims, std::size_t i) {
  if (i == dims.size()) return std::exp(leaf_log_density(leaf, point, box));
  const int d = dims[i];
  if (space[d].is_discrete()) {
    double s = 0.0;
    for (int v : box[d].values) {
      point[d] = v;
      s += integrate_dims(leaf, box, space, point, dims, i + 1);
    }
    return s;
  }
  return integrate(
      [&](double x) {
        point[d] = x;
        return integrate_dims(leaf, box, space, point, dims, i + 1);
      },
      box[d].lo, box[d].hi);
}

}  // namespace

Space make_space(int continuous, std::vector<int> arities) {
  Space s;
  for (int i = 0; i < continuous; ++i) s.push_back(Variable::continuous("c" + std::to_string(i), 0.0, 1.0));
  for (std::size_t i = 0; i < arities.size(); ++i)
    s.push_back(Variable::discrete("d" + std::to_string(i), arities[i]));
  return s;
}

double integrate(const std::function<double(double)>& f, double a, double b) {
  if (!(b > a)) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 12, 1e-12);
}

double integrate_pieces(const std::function<double(double)>& f, std::vector<double> breaks) {
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) s += integrate(f, breaks[i], breaks[i + 1]);
  return s;
}

double leaf_quadrature(const LeafDistribution& leaf, const Box& box, const Space& space) {
  std::vector<double> point(space.size());
  for (std::size_t d = 0; d < space.size(); ++d)
    point[d] = space[d].is_discrete() ? box[d].values.front() : 0.5 * (box[d].lo + box[d].hi);
  std::vector<int> dims = leaf.continuous_dims;
  for (const auto& m : leaf.discrete) dims.push_back(m.dim);
  return integrate_dims(leaf, box, space, point, dims, 0);
}

double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double ks_critical(std::size_t n, double alpha) {
  return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

Interval binomial_region(std::size_t n, double p, double level) {
  boost::math::binomial_distribution<double> b(static_cast<double>(n), p);
  const double tail = 0.5 * (1.0 - level);
  return {boost::math::quantile(b, tail), boost::math::quantile(boost::math::complement(b, tail))};
}

double chi_square_upper_p(double stat, double df) {
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(df), stat));
}

LeafDistribution random_leaf(const Space& space, const Box& box, std::span<const int> modeled, LeafFamily family,
                             Rng& rng) {
  LeafDistribution leaf;
  for (int d : modeled) {
    if (space[d].is_discrete()) {
      Multinomial m{d, std::vector<double>(static_cast<std::size_t>(space[d].arity), 0.0)};
      auto w = dirichlet(box[d].values.size(), rng);
      if (family == LeafFamily::uniform) std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
      for (std::size_t i = 0; i < w.size(); ++i) m.prob[static_cast<std::size_t>(box[d].values[i])] = w[i];
      leaf.discrete.push_back(std::move(m));
    } else {
      leaf.continuous_dims.push_back(d);
    }
  }
  const auto& cont = leaf.continuous_dims;
  if (cont.empty()) return leaf;
  switch (family) {
    case LeafFamily::uniform: break;
    case LeafFamily::gaussian: {
      DiagGaussian g;
      for (int d : cont) {
        const double w = box[d].width();
        g.mean.push_back(box[d].lo - 0.2 * w + 1.4 * w * uniform01(rng));
        const double sd = w * (0.1 + 0.5 * uniform01(rng));
        g.variance.push_back(sd * sd);
      }
      leaf.density = g;
      break;
    }
    case LeafFamily::linreg_gaussian: {
      LinRegGaussian g;
      g.child = cont.front();
      for (std::size_t d = 0; d < space.size(); ++d) {
        if (space[d].is_discrete() || static_cast<int>(d) == g.child) continue;
        if (std::find(modeled.begin(), modeled.end(), static_cast<int>(d)) != modeled.end()) continue;
        g.regressors.push_back(static_cast<int>(d));
        g.coef.push_back(2.0 * uniform01(rng) - 1.0);
      }
      g.intercept = box[g.child].lo + box[g.child].width() * uniform01(rng);
      const double sd = box[g.child].width() * (0.1 + 0.5 * uniform01(rng));
      g.variance = sd * sd;
      leaf.density = g;
      break;
    }
    case LeafFamily::linear_interp: {
      LinearInterp li;
      for (std::size_t j = 0; j < cont.size(); ++j) {
        const double a = 0.05 + 0.9 * uniform01(rng);
        li.weights.push_back({a, 1.0 - a});
      }
      leaf.density = li;
      break;
    }
    case LeafFamily::multilinear_interp:
      leaf.density = MultilinearInterp{dirichlet(std::size_t{1} << cont.size(), rng)};
      break;
  }
  return leaf;
}

DensityTree random_joint_tree(const Space& space, const RandomTreeOptions& options, Rng& rng) {
  return random_tree(space, options, rng, Shape::joint);
}

DensityTree random_stratified_tree(const Space& space, const RandomTreeOptions& options, Rng& rng) {
  return random_tree(space, options, rng, Shape::stratified);
}

DensityTree random_stratified_joint_tree(const Space& space, const RandomTreeOptions& options, Rng& rng) {
  return random_tree(space, options, rng, Shape::stratified_joint);
}

std::vector<double> random_point(const Box& box, const Space& space, Rng& rng) {
  std::vector<double> p(space.size());
  for (std::size_t d = 0; d < space.size(); ++d) {
    const auto& r = box[d];
    if (space[d].is_discrete())
      p[d] = r.values[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(r.values.size()))];
    else
      p[d] = r.lo + r.width() * uniform01(rng);
  }
  return p;
}

std::vector<double> random_parents(const DensityTree& tree, Rng& rng) {
  auto p = random_point(tree.root_box, tree.space, rng);
  p[0] = tree.space[0].is_discrete() ? tree.root_box[0].values.front() : tree.root_box[0].lo;
  return p;
}

ConditionalSpec local_spec(const Space& space) {
  ConditionalSpec spec{0, {}};
  for (std::size_t d = 1; d < space.size(); ++d) spec.parents.push_back(static_cast<int>(d));
  return spec;
}

std::vector<const Leaf*> scan_consistent(const DensityTree& tree, std::span<const double> point) {
  std::vector<const Leaf*> out;
  for_each_leaf(tree.root, [&](const Leaf& leaf) {
    for (std::size_t d = 1; d < tree.space.size(); ++d)
      if (!leaf.box[d].admits(point[d])) return;
    out.push_back(&leaf);
  });
  return out;
}

double scanned_conditional_mass(const DensityTree& tree, std::span<const double> point, bool joint) {
  std::vector<int> parents;
  for (std::size_t d = 1; d < tree.space.size(); ++d) parents.push_back(static_cast<int>(d));
  double num = 0.0;
  double den = 0.0;
  for (const Leaf* leaf : scan_consistent(tree, point)) {
    const double w = joint ? leaf->mass * leaf_marginal_density(leaf->dist, point, parents, leaf->box) : leaf->mass;
    den += w;
    num += w * leaf_conditional_mass(leaf->dist, 0, leaf->box[0], point, leaf->box);
  }
  return joint ? num / den : num;
}

std::vector<double> child_breaks(const DensityTree& tree, std::span<const double> point) {
  std::vector<double> b;
  for (const Leaf* leaf : scan_consistent(tree, point)) {
    b.push_back(leaf->box[0].lo);
    b.push_back(leaf->box[0].hi);
  }
  return b;
}

double grid_conditional(const DensityTree& tree, std::span<const double> point) {
  std::vector<double> q(point.begin(), point.end());
  const double den = integrate_pieces(
      [&](double x) {
        q[0] = x;
        return std::exp(node_log_density(tree.root, q));
      },
      child_breaks(tree, point));
  return std::exp(node_log_density(tree.root, point)) / den;
}

Matrix sample_rows(const DensityTree& tree, std::size_t n, Rng& rng) {
  Matrix m(n, tree.space.size());
  for (std::size_t r = 0; r < n; ++r) {
    const auto p = sample_tree(tree, rng);
    std::copy(p.begin(), p.end(), m.row(r).begin());
  }
  return m;
}

void for_each_aux_leaf(const AuxNode& node, const std::function<void(const AuxNode&)>& fn) {
  if (node.is_leaf()) {
    fn(node);
    return;
  }
  for (const auto& c : node.children) for_each_aux_leaf(c, fn);
}

Matrix halton(std::size_t n, std::size_t d) {
  static constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19};
  Matrix m(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const int b = kPrimes[c];
      double f = 1.0, x = 0.0;
      for (std::size_t i = r + 1; i > 0; i /= static_cast<std::size_t>(b)) {
        f /= b;
        x += f * static_cast<double>(i % static_cast<std::size_t>(b));
      }
      m(r, c) = x;
    }
  return m;
}

}  // namespace denstree::testing
