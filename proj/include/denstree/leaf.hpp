#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "denstree/box.hpp"
#include "denstree/random.hpp"

namespace denstree {

using RowIndex = std::uint32_t;
using RowSpan = std::span<const RowIndex>;

enum class LeafFamily : std::uint8_t { uniform, gaussian, linreg_gaussian, linear_interp, multilinear_interp };

std::string_view to_string(LeafFamily family);
std::optional<LeafFamily> parse_leaf_family(std::string_view name);

struct UniformBox {
  friend bool operator==(const UniformBox&, const UniformBox&) = default;
};

/// Independent Gaussians per continuous dim, renormalized over the leaf box.
struct DiagGaussian {
  std::vector<double> mean;
  std::vector<double> variance;
  friend bool operator==(const DiagGaussian&, const DiagGaussian&) = default;
};

/// Gaussian over one child dim whose mean is linear in the regressor dims.
/// Truncated to the leaf's child range at each regressor value.
struct LinRegGaussian {
  int child = 0;
  std::vector<int> regressors;
  std::vector<double> coef;
  double intercept = 0.0;
  double variance = 1.0;
  bool fallback = false;  // design was rank deficient; constant mean used
  friend bool operator==(const LinRegGaussian&, const LinRegGaussian&) = default;
};

/// Per continuous dim a 2-component mixture of the hat bases
/// g0 = 2(1 - t)/L and g1 = 2t/L. weights[j] = {w0, w1}.
struct LinearInterp {
  std::vector<std::array<double, 2>> weights;
  friend bool operator==(const LinearInterp&, const LinearInterp&) = default;
};

/// Mixture of the 2^d corner bases g_c = (2^d / Vol) prod_j h_{c_j}(t_j).
/// Bit j of the corner index selects the high side of continuous dim j.
struct MultilinearInterp {
  std::vector<double> weights;
  friend bool operator==(const MultilinearInterp&, const MultilinearInterp&) = default;
};

using ContinuousDensity = std::variant<UniformBox, DiagGaussian, LinRegGaussian, LinearInterp, MultilinearInterp>;

struct Multinomial {
  int dim = 0;
  std::vector<double> prob;  // indexed by value over the full arity
  friend bool operator==(const Multinomial&, const Multinomial&) = default;
};

/// Distribution inside one tree leaf over the leaf's modeled dims. Discrete
/// dims are independent multinomials; continuous dims share one density
/// normalized over the leaf box. Dims not listed are conditioning dims.
struct LeafDistribution {
  std::vector<Multinomial> discrete;
  std::vector<int> continuous_dims;
  ContinuousDensity density = UniformBox{};

  bool models(int dim) const;
  friend bool operator==(const LeafDistribution&, const LeafDistribution&) = default;
};

struct EmFitConfig {
  int max_iters = 10;
  double rel_tol = 1e-6;
  double weight_floor = 1e-9;
  std::uint64_t seed = 0;
};

constexpr std::size_t multilinear_cap(std::size_t d) { return std::size_t{25} << d; }
constexpr std::size_t linear_interp_cap(std::size_t d) { return 25 * 2 * d; }

template <class D>
struct EmFit {
  D dist;
  std::vector<double> log_likelihood;  // before the first update, then after each
  std::size_t points_used = 0;
  int iterations = 0;
};

/// p_v = (count_v + pseudo) / (n + pseudo * |admissible|); zero outside the set.
std::vector<double> fit_multinomial(std::span<const int> values, std::span<const int> admissible, int arity,
                                    double pseudo_count);

DiagGaussian fit_diag_gaussian(const Matrix& data, RowSpan rows, std::span<const int> dims, const Space& space);

LinRegGaussian fit_linreg_gaussian(const Matrix& data, RowSpan rows, int child, std::span<const int> regressors,
                                   const Space& space);

EmFit<MultilinearInterp> fit_multilinear_em(const Matrix& data, RowSpan rows, std::span<const int> dims,
                                            const Box& box, const EmFitConfig& config);

EmFit<LinearInterp> fit_linear_interp_em(const Matrix& data, RowSpan rows, std::span<const int> dims,
                                         const Box& box, const EmFitConfig& config);

struct LeafFitOptions {
  LeafFamily family = LeafFamily::uniform;
  double pseudo_count = 1.0;
  EmFitConfig em;
};

/// Fits the `modeled` dims of one leaf. Families that need more points than
/// are available degrade (linear regression -> Gaussian -> uniform).
LeafDistribution fit_leaf(const Matrix& data, RowSpan rows, const Box& box, const Space& space,
                          std::span<const int> modeled, const LeafFitOptions& options, std::uint64_t seed);

/// log of (discrete probabilities x continuous density) over the modeled
/// dims; -infinity when the point lies outside the box.
double leaf_log_density(const LeafDistribution& leaf, std::span<const double> point, const Box& box);

/// Density of the modeled dims in `keep`, with every other modeled dim
/// integrated out.
double leaf_marginal_density(const LeafDistribution& leaf, std::span<const double> point,
                             std::span<const int> keep, const Box& box);

/// log P(child | other modeled dims) inside the leaf. A zero marginal
/// yields the uniform conditional over the child range.
double leaf_conditional_log_density(const LeafDistribution& leaf, int child, std::span<const double> point,
                                    const Box& box);

/// Integral of the leaf density over `subbox` (intersected with `box`).
/// Linear-regression leaves read their regressors from `conditioning`.
double leaf_mass_in_subbox(const LeafDistribution& leaf, const Box& subbox, const Box& box,
                           std::span<const double> conditioning = {});

/// Integral over `range` of the child's conditional density at `point`.
double leaf_conditional_mass(const LeafDistribution& leaf, int child, const DimRange& range,
                             std::span<const double> point, const Box& box);

/// Overwrites the modeled dims of `point` with a draw; other dims are read
/// as conditioning values.
void sample_leaf(const LeafDistribution& leaf, const Box& box, Rng& rng, std::span<double> point);

/// Draws the child from its conditional given the rest of `point`,
/// restricted to `range` when given.
double sample_leaf_conditional(const LeafDistribution& leaf, int child, const Box& box,
                               std::span<const double> point, Rng& rng, const DimRange* range = nullptr);

}  // namespace denstree
