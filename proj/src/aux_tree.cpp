#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "denstree/conditional.hpp"

namespace denstree {

namespace {

using Frontier = std::vector<const Node*>;

// Children of a parent branch whose region meets `range` along the branch var.
std::vector<std::size_t> intersecting_children(const Node& node, const DimRange& range) {
  std::vector<std::size_t> hit;
  if (node.kind == Node::Kind::continuous_branch) {
    if (std::min(range.hi, node.split) - range.lo > 0.0) hit.push_back(0);
    if (range.hi - std::max(range.lo, node.split) > 0.0) hit.push_back(1);
  } else {
    for (std::size_t k = 0; k < node.values.size(); ++k)
      if (std::binary_search(range.values.begin(), range.values.end(), node.values[k])) hit.push_back(k);
  }
  return hit;
}

// Expands the frontier until every entry is a leaf or a parent branch that
// straddles the box. Returns the first straddling branch, if any.
const Node* settle(Frontier& frontier, const Box& box) {
  bool changed = true;
  while (changed) {
    changed = false;
    Frontier next;
    for (const Node* n : frontier) {
      if (n->is_leaf()) {
        next.push_back(n);
      } else if (n->var == kChildDim) {
        for (const auto& c : n->children) next.push_back(&c);
        changed = true;
      } else {
        const auto hit = intersecting_children(*n, box[static_cast<std::size_t>(n->var)]);
        if (hit.size() == 1) {
          next.push_back(&n->children[hit[0]]);
          changed = true;
        } else if (hit.empty()) {
          changed = true;
        } else {
          next.push_back(n);
        }
      }
    }
    frontier = std::move(next);
  }
  for (const Node* n : frontier)
    if (!n->is_leaf()) return n;
  return nullptr;
}

AuxNode build_marginal(Frontier frontier, const Box& box, std::size_t& leaves) {
  AuxNode out;
  out.box = box;
  const Node* straddle = settle(frontier, box);
  if (!straddle) {
    for (const Node* n : frontier) out.leaf_ids.push_back(n->leaf.id);
    std::sort(out.leaf_ids.begin(), out.leaf_ids.end());
    ++leaves;
    return out;
  }
  out.kind = straddle->kind;
  out.var = straddle->var;
  if (straddle->kind == Node::Kind::continuous_branch) {
    out.split = straddle->split;
    auto [lo, hi] = split_box(box, out.var, out.split);
    out.children.push_back(build_marginal(frontier, lo, leaves));
    out.children.push_back(build_marginal(frontier, hi, leaves));
  } else {
    out.values = box[static_cast<std::size_t>(out.var)].values;
    for (int v : out.values) out.children.push_back(build_marginal(frontier, restrict_value(box, out.var, v), leaves));
  }
  return out;
}

struct Refiner {
  const std::vector<const Leaf*>& leaves;
  const Space& space;
  std::size_t leaf_count = 0;

  AuxNode refine(const Box& box, std::vector<int> ids, int subtree) {
    AuxNode out;
    out.box = box;
    out.subtree = subtree;
    out.leaf_ids = ids;
    if (ids.size() == 1) {
      out.target = ids[0];
      ++leaf_count;
      return out;
    }
    if (ids.empty()) throw std::logic_error("aux refinement reached a region without joint leaves");
    const DimRange& r = box[kChildDim];
    out.var = kChildDim;
    if (space[kChildDim].is_discrete()) {
      if (r.values.size() < 2) throw std::logic_error("aux refinement cannot separate joint leaves");
      out.kind = Node::Kind::discrete_branch;
      out.values = r.values;
      for (int v : r.values) {
        std::vector<int> sub;
        for (int id : ids) {
          const auto& vals = leaves[static_cast<std::size_t>(id)]->box[kChildDim].values;
          if (std::binary_search(vals.begin(), vals.end(), v)) sub.push_back(id);
        }
        out.children.push_back(refine(restrict_value(box, kChildDim, v), std::move(sub), subtree));
      }
    } else {
      out.kind = Node::Kind::continuous_branch;
      out.split = 0.5 * (r.lo + r.hi);
      if (!(out.split > r.lo && out.split < r.hi)) throw std::logic_error("aux refinement cannot separate joint leaves");
      auto [lo, hi] = split_box(box, kChildDim, out.split);
      for (const Box* b : {&lo, &hi}) {
        std::vector<int> sub;
        for (int id : ids) {
          const DimRange& lr = leaves[static_cast<std::size_t>(id)]->box[kChildDim];
          if (std::min(lr.hi, (*b)[kChildDim].hi) - std::max(lr.lo, (*b)[kChildDim].lo) > 0.0) sub.push_back(id);
        }
        out.children.push_back(refine(*b, std::move(sub), subtree));
      }
    }
    out.leaf_ids.clear();
    return out;
  }

  AuxNode walk(const AuxNode& m, int& next_subtree) {
    if (m.is_leaf()) return refine(m.box, m.leaf_ids, next_subtree++);
    AuxNode out;
    out.kind = m.kind;
    out.var = m.var;
    out.split = m.split;
    out.values = m.values;
    out.box = m.box;
    for (const auto& c : m.children) out.children.push_back(walk(c, next_subtree));
    return out;
  }
};

// Descends parent branches only; the node reached roots a subtree t_s.
const AuxNode* subtree_root(const AuxNode& root, std::span<const double> point) {
  const AuxNode* n = &root;
  while (!n->is_leaf() && n->var != kChildDim) {
    const std::size_t k = n->route(point);
    if (k >= n->children.size()) return nullptr;
    n = &n->children[k];
  }
  return n;
}

void collect_subtree_leaves(AuxNode& node, std::vector<std::vector<AuxNode*>>& by_subtree) {
  if (node.is_leaf()) {
    by_subtree[static_cast<std::size_t>(node.subtree)].push_back(&node);
    return;
  }
  for (auto& c : node.children) collect_subtree_leaves(c, by_subtree);
}

}  // namespace

MarginalTree marginalize_structure(const DensityTree& joint) {
  MarginalTree m;
  Box box = joint.root_box;
  m.root = build_marginal({&joint.root}, box, m.leaf_count);
  return m;
}

AuxTree refine_to_aux(const MarginalTree& marginal, const DensityTree& joint) {
  const auto leaves = leaves_by_id(joint);
  Refiner r{leaves, joint.space};
  int next = 0;
  AuxTree aux;
  aux.root = r.walk(marginal.root, next);
  aux.leaf_count = r.leaf_count;
  aux.subtree_count = static_cast<std::size_t>(next);
  aux.subtree_fallback.assign(aux.subtree_count, false);
  return aux;
}

void estimate_alphas(AuxTree& aux, const DensityTree& joint, const Matrix& train, bool direct) {
  const auto leaves = leaves_by_id(joint);
  std::vector<int> parents;
  for (std::size_t d = 1; d < joint.space.size(); ++d) parents.push_back(static_cast<int>(d));

  std::vector<std::vector<AuxNode*>> by_subtree(aux.subtree_count);
  collect_subtree_leaves(aux.root, by_subtree);

  std::vector<std::vector<std::uint32_t>> rows_of(aux.subtree_count);
  for (std::size_t r = 0; r < train.rows(); ++r) {
    const AuxNode* s = subtree_root(aux.root, train.row(r));
    if (!s) continue;
    rows_of[static_cast<std::size_t>(s->subtree)].push_back(static_cast<std::uint32_t>(r));
  }

  aux.subtree_fallback.assign(aux.subtree_count, false);
  for (std::size_t s = 0; s < aux.subtree_count; ++s) {
    auto& members = by_subtree[s];
    if (members.empty()) continue;
    std::vector<int> ids;
    for (const AuxNode* a : members) ids.push_back(a->target);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

    std::vector<std::vector<double>> points;
    if (rows_of[s].empty()) {
      aux.subtree_fallback[s] = true;
      points.push_back(box_center(members.front()->box, joint.space));
    } else {
      for (auto r : rows_of[s]) points.emplace_back(train.row(r).begin(), train.row(r).end());
    }

    // score[i] = P(l_i) * mean P(pi | l_i), or the mean posterior when direct.
    std::vector<double> score(ids.size(), 0.0);
    std::vector<double> w(ids.size());
    for (const auto& p : points) {
      double total = 0.0;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const Leaf& l = *leaves[static_cast<std::size_t>(ids[i])];
        w[i] = l.mass * leaf_marginal_density(l.dist, p, parents, l.box);
        total += w[i];
      }
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!direct) score[i] += w[i];
        else if (total > 0.0) score[i] += w[i] / total;
      }
    }
    double norm = 0.0;
    for (double v : score) norm += v;
    if (!(norm > 0.0)) {
      for (std::size_t i = 0; i < ids.size(); ++i) score[i] = leaves[static_cast<std::size_t>(ids[i])]->mass;
      norm = 0.0;
      for (double v : score) norm += v;
    }
    for (AuxNode* a : members) {
      const auto i = static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), a->target) - ids.begin());
      a->alpha = score[i] / norm;
    }
  }
}

}  // namespace denstree
