#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "denstree/conditional.hpp"
#include "denstree/dataset.hpp"

namespace denstree {

/// Parent set per variable; parent lists are kept sorted.
struct NetworkStructure {
  std::vector<std::vector<int>> parents;

  NetworkStructure() = default;
  explicit NetworkStructure(std::size_t n) : parents(n) {}

  std::size_t size() const { return parents.size(); }
  bool has_arc(int from, int to) const;
  std::size_t arc_count() const;
  /// Kahn order, lowest index first among ready nodes; nullopt on a cycle.
  std::optional<std::vector<int>> topological_order() const;
  bool acyclic() const { return topological_order().has_value(); }
  /// True when adding from -> to keeps the graph acyclic.
  bool can_add(int from, int to) const;

  friend bool operator==(const NetworkStructure&, const NetworkStructure&) = default;
};

/// Conditional settings for one tier. Rows beyond max_rows are subsampled
/// (0 keeps every row).
struct TierConfig {
  ConditionalConfig conditional;
  std::size_t max_rows = 0;
};

TierConfig cheap_tier();   // CART with Gaussian leaves on <= 2000 rows
TierConfig medium_tier();  // approx-conditionalized joint trees, ILI leaves
TierConfig final_tier();   // approx-conditionalized joint trees, MLI leaves

struct SearchConfig {
  TierConfig cheap = cheap_tier();
  TierConfig medium = medium_tier();
  TierConfig final = final_tier();
  int max_parents = 3;
  int moves_per_iteration = 1;
  int max_iterations = 200;
  int rescore_period = 5;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
};

void validate(const SearchConfig& config);

struct FactoredModel {
  SchemaPtr schema;
  NetworkStructure structure;
  std::vector<ConditionalModel> conditionals;
};

/// Sum over rows and variables of the smoothed conditional log densities.
/// per_variable, when given, receives each variable's share.
double joint_log_likelihood(const FactoredModel& model, const Dataset& data, std::vector<double>* per_variable = nullptr,
                            EvalCounters* counters = nullptr);

enum class MoveKind : std::uint8_t { add, remove };

struct Move {
  MoveKind kind = MoveKind::add;
  int from = 0;
  int to = 0;
  double delta = 0.0;  // estimated change of the child's held-out conditional LL

  friend bool operator==(const Move&, const Move&) = default;
};

NetworkStructure apply(const NetworkStructure& structure, const Move& move);

/// Held-out conditional log-likelihood of one child under a tier, memoized
/// by parent set. Conditional seeds depend only on the child, so equal
/// trees give equal scores.
class FamilyScorer {
 public:
  FamilyScorer(const Dataset& train, const Dataset& validation, TierConfig tier, std::uint64_t seed);

  double score(int child, const std::vector<int>& parents);
  std::size_t fits() const { return fits_; }

 private:
  const Dataset* train_;
  const Dataset* validation_;
  TierConfig tier_;
  std::uint64_t seed_;
  std::optional<Dataset> sub_;
  std::map<std::pair<int, std::vector<int>>, double> cache_;
  std::size_t fits_ = 0;
};

/// Legal single-arc additions and removals ranked by estimated gain, best
/// first (ties by (to, from, kind)).
std::vector<Move> score_arc_candidates(const NetworkStructure& structure, FamilyScorer& cheap, int max_parents);
std::vector<Move> score_arc_candidates(const Dataset& train, const Dataset& validation,
                                       const NetworkStructure& structure, const TierConfig& cheap, int max_parents,
                                       std::uint64_t seed);

struct SearchTrace {
  std::vector<Move> accepted;
  std::vector<double> validation_ll;  // after the initial fit, then after each accepted move
  std::size_t tried = 0;
  std::size_t rescores = 0;
};

NetworkStructure learn_structure(const Dataset& data, const SearchConfig& config, SearchTrace* trace = nullptr);

/// Learns each variable's conditional given the structure. Root variables
/// get a single-variable joint tree with the tier's leaf family.
FactoredModel parameterize(const NetworkStructure& structure, const Dataset& data, const TierConfig& tier,
                           std::uint64_t seed);

/// Ancestral sampling in topological order.
Dataset sample_network(const FactoredModel& model, std::size_t n, Rng& rng);

/// Every DAG over n nodes with at most max_parents parents per node.
std::vector<NetworkStructure> enumerate_dags(std::size_t n, int max_parents);

}  // namespace denstree
