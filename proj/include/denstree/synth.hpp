#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "denstree/bayes_net.hpp"
#include "denstree/dataset.hpp"

namespace denstree {

// Connected: three Gaussian components restricted to the unit square.
struct ConnectedComponent {
  double weight;
  double mean[2];
  double sd[2];
};

inline constexpr ConnectedComponent kConnectedMixture[3] = {
    {0.35, {0.35, 0.22}, {0.12, 0.05}},
    {0.35, {0.50, 0.68}, {0.15, 0.05}},
    {0.30, {0.72, 0.35}, {0.10, 0.07}},
};

inline constexpr std::size_t kConnectedFullRows = 80000;
inline constexpr std::size_t kConnectedDeskRows = 8000;

SchemaPtr connected_schema();
Dataset generate_connected(std::size_t n, std::uint64_t seed);
double connected_log_density(double x1, double x2);
/// log p(x2 | x1) of the restricted mixture.
double connected_conditional_log_density(double x2, double x1);

/// One node of a ground-truth network. Continuous nodes are mixtures of
/// normals truncated to [lo, hi] with means a + b sin(omega g + phase);
/// discrete nodes are softmax over base + amp sin(omega g + phase). g is the
/// mean of the parents rescaled to [0, 1].
struct TruthNode {
  std::vector<int> parents;
  double omega = 0.0;
  std::vector<double> weight;  // continuous: component weights
  std::vector<double> a, b, phase, sd;
  std::vector<double> base, amp;  // discrete: per value (phase reused per value)
};

struct GroundTruth {
  SchemaPtr schema;
  std::vector<TruthNode> nodes;

  NetworkStructure structure() const;
};

enum class StandinProfile : std::uint8_t { bio, astro };

std::optional<StandinProfile> parse_profile(std::string_view name);
std::size_t default_rows(StandinProfile profile);

GroundTruth make_standin_truth(StandinProfile profile, std::uint64_t seed);
/// Chain X0 -> X1 -> ... with a strong sinusoidal dependence per arc.
GroundTruth make_chain_truth(std::size_t length, std::uint64_t seed);

Dataset sample_truth(const GroundTruth& truth, std::size_t n, std::uint64_t seed);
double truth_log_density(const GroundTruth& truth, std::span<const double> row);
double truth_log_likelihood(const GroundTruth& truth, const Dataset& data);

Dataset generate_standin(StandinProfile profile, std::size_t n, std::uint64_t seed, GroundTruth* truth = nullptr);

std::string encode_truth(const GroundTruth& truth);
GroundTruth decode_truth(std::string_view text);

}  // namespace denstree
