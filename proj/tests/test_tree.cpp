#include <doctest.h>

#include <cmath>
#include <numeric>

#include "denstree/error.hpp"
#include "denstree/serialize.hpp"
#include "denstree/tree.hpp"
#include "support.hpp"

using namespace denstree;
using namespace denstree::testing;

namespace {

std::vector<RowIndex> all_rows(std::size_t n) {
  std::vector<RowIndex> r(n);
  std::iota(r.begin(), r.end(), RowIndex{0});
  return r;
}

GrowConfig joint_config(const Space& sp, std::uint64_t seed = 1) {
  GrowConfig g;
  g.modeled.assign(sp.size(), true);
  for (std::size_t d = 0; d < sp.size(); ++d) g.branch_vars.push_back(static_cast<int>(d));
  g.seed = seed;
  return g;
}

std::vector<int> dims_of(const Space& sp) {
  std::vector<int> d(sp.size());
  std::iota(d.begin(), d.end(), 0);
  return d;
}

// Two blobs plus a discrete column correlated with the blob.
Matrix blobs(std::size_t n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(n, 3);
  for (std::size_t r = 0; r < n; ++r) {
    const bool a = uniform01(rng) < 0.6;
    m(r, 0) = std::clamp(a ? 0.3 + 0.08 * g(rng) : 0.7 + 0.1 * g(rng), 0.0, 1.0);
    m(r, 1) = std::clamp(a ? 0.6 + 0.1 * g(rng) : 0.25 + 0.05 * g(rng), 0.0, 1.0);
    m(r, 2) = (uniform01(rng) < 0.8) == a ? 0.0 : (uniform01(rng) < 0.5 ? 1.0 : 2.0);
  }
  return m;
}

double total_mass(const DensityTree& t) {
  double s = 0.0;
  for_each_leaf(t.root, [&](const Leaf& l) { s += l.mass; });
  return s;
}

double tree_quadrature(const DensityTree& t) {
  double s = 0.0;
  for_each_leaf(t.root, [&](const Leaf& l) { s += l.mass * leaf_quadrature(l.dist, l.box, t.space); });
  return s;
}

DensityTree grown(LeafFamily fam, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Space sp = make_space(2, {3});
  const Matrix m = blobs(n, rng);
  return grow_tree(m, sp, root_box(sp), joint_config(sp, seed), leaf_builder(sp, dims_of(sp), {fam, 1.0, {}}));
}

}  // namespace

TEST_CASE("fewer than min_points rows give a single leaf") {
  Space sp = make_space(1);
  Matrix m(9, 1);
  for (std::size_t r = 0; r < 9; ++r) m(r, 0) = r < 5 ? 0.1 : 0.9;
  auto t = grow_tree(m, sp, root_box(sp), joint_config(sp), leaf_builder(sp, {0}, {}));
  CHECK(t.leaf_count == 1);
  CHECK(t.root.leaf.count == 9);
}

TEST_CASE("two unbalanced clusters split at the midpoint and beat one leaf") {
  Space sp = make_space(1);
  Rng rng(4);
  auto draw = [&](std::size_t n) {
    Matrix m(n, 1);
    for (std::size_t r = 0; r < n; ++r) m(r, 0) = (r % 5 ? 0.1 : 0.9) + 0.01 * (uniform01(rng) - 0.5);
    return m;
  };
  const Matrix train = draw(400), test = draw(400);
  auto t = grow_tree(train, sp, root_box(sp), joint_config(sp), leaf_builder(sp, {0}, {}));
  REQUIRE_FALSE(t.root.is_leaf());
  CHECK(t.root.split == 0.5);
  double ll = 0.0;
  for (std::size_t r = 0; r < test.rows(); ++r) ll += tree_log_density(t, test.row(r));
  CHECK(ll > 0.0);  // a single uniform leaf on [0, 1] scores exactly 0
}

TEST_CASE("discrete branch has one child per value") {
  Space sp = make_space(0, {3});
  Matrix m(300, 1);
  for (std::size_t r = 0; r < 300; ++r) m(r, 0) = r % 10 < 7 ? 0 : (r % 10 < 9 ? 1 : 2);
  // a multinomial leaf already fits this; the branch must still be well formed if taken
  DensityTree t;
  t.space = sp;
  t.modeled = {true};
  t.root_box = root_box(sp);
  Node n;
  n.kind = Node::Kind::discrete_branch;
  n.var = 0;
  n.values = {0, 1, 2};
  for (int v : n.values) {
    Node c;
    c.leaf.box = restrict_value(t.root_box, 0, v);
    c.leaf.mass = 1.0 / 3.0;
    std::vector<RowIndex> rows;
    for (RowIndex r = 0; r < 300; ++r)
      if (m(r, 0) == v) rows.push_back(r);
    c.leaf.dist = fit_leaf(m, rows, c.leaf.box, sp, std::vector<int>{0}, {}, 0);
    n.children.push_back(c);
  }
  t.root = n;
  finalize_tree(t);
  CHECK(t.leaf_count == 3);
  CHECK(std::exp(tree_log_density(t, std::vector<double>{1})) == doctest::Approx(1.0 / 3.0));

  Space sp2 = make_space(1, {3});
  Matrix m2(600, 2);
  for (std::size_t r = 0; r < 600; ++r) {
    m2(r, 1) = static_cast<double>(r % 3);
    m2(r, 0) = 0.2 + 0.3 * m2(r, 1) + 0.05 * ((r * 37 % 100) / 100.0);
  }
  auto g = grow_tree(m2, sp2, root_box(sp2), joint_config(sp2), leaf_builder(sp2, {0, 1}, {}));
  std::function<void(const Node&)> walk = [&](const Node& node) {
    if (node.kind == Node::Kind::discrete_branch) CHECK(node.children.size() == node.values.size());
    for (const auto& c : node.children) walk(c);
  };
  walk(g.root);
  CHECK(tree_depth(g.root) >= 1);
}

TEST_CASE("grown trees: partition, mass and quadrature") {
  for (LeafFamily fam : {LeafFamily::uniform, LeafFamily::gaussian, LeafFamily::linear_interp,
                         LeafFamily::multilinear_interp}) {
    CAPTURE(to_string(fam));
    auto t = grown(fam, 3000, 12);
    CHECK(t.leaf_count > 3);
    CHECK(total_mass(t) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(tree_quadrature(t) == doctest::Approx(1.0).epsilon(1e-6));

    Rng rng(13);
    const auto leaves = leaves_by_id(t);
    for (int i = 0; i < 10000; ++i) {
      const auto p = random_point(t.root_box, t.space, rng);
      int hits = 0;
      const Leaf* found = nullptr;
      for (const Leaf* l : leaves)
        if (l->box.contains(p)) {
          ++hits;
          found = l;
        }
      REQUIRE(hits == 1);
      CHECK(&descend(t.root, p) == found);
    }
  }
}

TEST_CASE("leaf boxes use the midpoint of the parent range") {
  auto t = grown(LeafFamily::uniform, 3000, 5);
  std::function<void(const Node&, const Box&)> walk = [&](const Node& n, const Box& box) {
    if (n.is_leaf()) {
      CHECK(n.leaf.box == box);
      return;
    }
    if (n.kind == Node::Kind::continuous_branch) {
      CHECK(n.split == 0.5 * (box[n.var].lo + box[n.var].hi));
      auto [lo, hi] = split_box(box, n.var, n.split);
      walk(n.children[0], lo);
      walk(n.children[1], hi);
    } else {
      for (std::size_t k = 0; k < n.children.size(); ++k) walk(n.children[k], restrict_value(box, n.var, n.values[k]));
    }
  };
  walk(t.root, t.root_box);
}

TEST_CASE("growth is deterministic in its seed") {
  auto a = grown(LeafFamily::linear_interp, 2000, 3);
  auto b = grown(LeafFamily::linear_interp, 2000, 3);
  CHECK(a == b);
}

TEST_CASE("pruning: never lowers holdout LL, idempotent, conserves mass") {
  Rng rng(17);
  Space sp = make_space(2, {3});
  const Matrix train = blobs(2000, rng), hold = blobs(800, rng);
  auto builder = leaf_builder(sp, dims_of(sp), {LeafFamily::linear_interp, 1.0, {}});
  ReplacementBuilder replace = [&](const Node&, const Matrix& d, RowSpan rows, const Box& box, std::uint64_t s) {
    return builder(d, rows, box, s);
  };
  GrowConfig cfg = joint_config(sp, 2);
  cfg.min_points = 4;
  auto t = grow_tree(train, sp, root_box(sp), cfg, builder);
  auto ll = [&](const DensityTree& tree) {
    double s = 0.0;
    for (std::size_t r = 0; r < hold.rows(); ++r) s += tree_log_density(tree, hold.row(r));
    return s;
  };
  auto once = prune_tree(t, train, hold, replace, 9);
  CHECK(once.replaced > 0);
  CHECK(ll(once.tree) >= ll(t));
  CHECK(total_mass(once.tree) == doctest::Approx(1.0).epsilon(1e-12));
  auto twice = prune_tree(once.tree, train, hold, replace, 9);
  CHECK(twice.replaced == 0);
  CHECK(twice.tree == once.tree);

  auto empty = prune_tree(t, train, Matrix(0, 3), replace, 9);
  CHECK(empty.empty_holdout);
  CHECK(empty.tree == t);
}

TEST_CASE("pruning pure noise collapses toward a single leaf") {
  Rng rng(23);
  Space sp = make_space(2);
  Matrix train(1000, 2), hold(500, 2);
  for (std::size_t r = 0; r < 1000; ++r) train(r, 0) = uniform01(rng), train(r, 1) = uniform01(rng);
  for (std::size_t r = 0; r < 500; ++r) hold(r, 0) = uniform01(rng), hold(r, 1) = uniform01(rng);
  auto builder = leaf_builder(sp, {0, 1}, {});
  ReplacementBuilder replace = [&](const Node&, const Matrix& d, RowSpan rows, const Box& box, std::uint64_t s) {
    return builder(d, rows, box, s);
  };
  GrowConfig cfg = joint_config(sp, 4);
  cfg.min_points = 3;
  auto t = grow_tree(train, sp, root_box(sp), cfg, builder);
  auto p = prune_tree(t, train, hold, replace, 1);
  CHECK(p.tree.leaf_count <= 3);
  CHECK(p.tree.leaf_count <= t.leaf_count);
}

TEST_CASE("pruning keeps splits that help") {
  Space sp = make_space(1);
  Rng rng(29);
  auto draw = [&](std::size_t n) {
    Matrix m(n, 1);
    for (std::size_t r = 0; r < n; ++r) m(r, 0) = uniform01(rng) < 0.9 ? 0.5 * uniform01(rng) : 0.5 + 0.5 * uniform01(rng);
    return m;
  };
  const Matrix train = draw(1000), hold = draw(500);
  auto builder = leaf_builder(sp, {0}, {});
  DensityTree t;
  t.space = sp;
  t.modeled = {true};
  t.root_box = root_box(sp);
  t.root.kind = Node::Kind::continuous_branch;
  t.root.var = 0;
  t.root.split = 0.5;
  auto [lo, hi] = split_box(t.root_box, 0, 0.5);
  std::vector<RowIndex> a, b;
  for (RowIndex r = 0; r < 1000; ++r) (train(r, 0) <= 0.5 ? a : b).push_back(r);
  t.root.children = {builder(train, a, lo, 0), builder(train, b, hi, 0)};
  t.root.children[0].leaf.mass = static_cast<double>(a.size()) / 1000.0;
  t.root.children[1].leaf.mass = static_cast<double>(b.size()) / 1000.0;
  finalize_tree(t);
  ReplacementBuilder replace = [&](const Node&, const Matrix& d, RowSpan rows, const Box& box, std::uint64_t s) {
    return builder(d, rows, box, s);
  };
  auto p = prune_tree(t, train, hold, replace, 0);
  CHECK(p.replaced == 0);
  CHECK(p.tree == t);
}

TEST_CASE("tree density by mass over volume") {
  Space sp = make_space(1);
  DensityTree t;
  t.space = sp;
  t.modeled = {true};
  t.root_box = root_box(sp);
  t.root.leaf.box = t.root_box;
  finalize_tree(t);
  CHECK(tree_log_density(t, std::vector<double>{0.3}) == 0.0);
  CHECK(tree_log_density(t, std::vector<double>{1.3}) == -INFINITY);

  t.root = Node{};
  t.root.kind = Node::Kind::continuous_branch;
  t.root.var = 0;
  t.root.split = 0.5;
  auto [lo, hi] = split_box(t.root_box, 0, 0.5);
  Node a, b;
  a.leaf = {-1, lo, 0.8, 0, {{}, {0}, UniformBox{}}};
  b.leaf = {-1, hi, 0.2, 0, {{}, {0}, UniformBox{}}};
  t.root.children = {a, b};
  finalize_tree(t);
  CHECK(std::exp(tree_log_density(t, std::vector<double>{0.2})) == doctest::Approx(1.6));
  CHECK(std::exp(tree_log_density(t, std::vector<double>{0.5})) == doctest::Approx(1.6));
  CHECK(std::exp(tree_log_density(t, std::vector<double>{0.7})) == doctest::Approx(0.4));

  SUBCASE("smoothing") {
    CHECK(tree_log_density(smooth_tree(t, 0.0), std::vector<double>{0.7}) == tree_log_density(t, std::vector<double>{0.7}));
    CHECK(tree_log_density(smooth_tree(t, 1.0), std::vector<double>{0.7}) == doctest::Approx(0.0));
    auto s = smooth_tree(t, 0.1);
    CHECK(std::exp(tree_log_density(s, std::vector<double>{0.7})) == doctest::Approx(0.9 * 0.4 + 0.1));
    CHECK_THROWS_AS(smooth_tree(t, 1.5), ConfigError);
    // a zero-mass leaf still gets the uniform floor
    auto z = t;
    z.root.children[1].leaf.mass = 0.0;
    z = smooth_tree(z, 0.01);
    CHECK(std::exp(tree_log_density(z, std::vector<double>{0.7})) >= 0.01);
  }

  SUBCASE("sampling frequencies") {
    Rng rng(31);
    const std::size_t n = 10000;
    std::size_t low = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = sample_tree(t, rng);
      CHECK(t.root_box.contains(p));
      low += p[0] <= 0.5;
    }
    auto r = binomial_region(n, 0.8);
    CHECK(static_cast<double>(low) >= r.lo);
    CHECK(static_cast<double>(low) <= r.hi);
  }
}

TEST_CASE("smoothed densities of grown trees are bounded below") {
  auto t = smooth_tree(grown(LeafFamily::multilinear_interp, 2000, 8), 0.01);
  Rng rng(3);
  const double floor = 0.01 / modeled_volume(t);
  for (int i = 0; i < 2000; ++i) CHECK(std::exp(tree_log_density(t, random_point(t.root_box, t.space, rng))) >= floor);
}

TEST_CASE("random joint trees sample inside the root box") {
  Rng rng(37);
  Space sp = make_space(2, {3});
  auto t = random_joint_tree(sp, {LeafFamily::multilinear_interp, 30, 8, 0.8}, rng);
  CHECK(total_mass(t) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(tree_quadrature(t) == doctest::Approx(1.0).epsilon(1e-6));
  for (int i = 0; i < 2000; ++i) CHECK(t.root_box.contains(sample_tree(t, rng)));
}

TEST_CASE("grow rejects bad configs") {
  Space sp = make_space(1);
  Matrix m(20, 1, 0.5);
  GrowConfig c = joint_config(sp);
  c.min_points = 1;
  CHECK_THROWS_AS(grow_tree(m, sp, root_box(sp), c, leaf_builder(sp, {0}, {})), ConfigError);
  CHECK_THROWS_AS(grow_tree(Matrix(0, 1), sp, root_box(sp), joint_config(sp), leaf_builder(sp, {0}, {})), DataError);
}
