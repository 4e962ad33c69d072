#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "denstree/dataset.hpp"

namespace denstree {

/// Diagonal Gaussians over the continuous columns times independent
/// multinomials over the discrete columns.
struct MixtureComponent {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<std::vector<double>> prob;
};

struct GaussianMixture {
  SchemaPtr schema;
  std::vector<int> continuous;
  std::vector<int> discrete;
  std::vector<MixtureComponent> components;
  std::vector<double> log_likelihood;  // training LL after each EM iteration
};

struct MixtureConfig {
  int max_iters = 300;
  double rel_tol = 1e-8;
  double variance_floor = 1e-3;  // times the variable range, squared
  double prob_floor = 1e-6;      // applied to multinomials once EM has finished
  std::uint64_t seed = 0;
};

GaussianMixture fit_gaussian_mixture(const Dataset& data, int k, const MixtureConfig& config);

struct MixtureSelection {
  GaussianMixture model;
  int k = 1;
  std::vector<double> validation_ll;  // per entry of the k grid
};

/// Picks k on an internal 80/20 split, then refits on all rows.
MixtureSelection fit_gaussian_mixture_baseline(const Dataset& data, std::span<const int> k_grid,
                                               const MixtureConfig& config);

double mixture_log_density(const GaussianMixture& model, std::span<const double> row);
double joint_log_likelihood(const GaussianMixture& model, const Dataset& data);

}  // namespace denstree
