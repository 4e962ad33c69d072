#include "denstree/leaf.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "denstree/error.hpp"
#include "denstree/normal.hpp"

namespace denstree {

std::string_view to_string(LeafFamily family) {
  switch (family) {
    case LeafFamily::uniform: return "uniform";
    case LeafFamily::gaussian: return "gaussian";
    case LeafFamily::linreg_gaussian: return "linreg";
    case LeafFamily::linear_interp: return "ili";
    case LeafFamily::multilinear_interp: return "mli";
  }
  return "?";
}

std::optional<LeafFamily> parse_leaf_family(std::string_view name) {
  if (name == "uniform") return LeafFamily::uniform;
  if (name == "gaussian" || name == "gauss") return LeafFamily::gaussian;
  if (name == "linreg") return LeafFamily::linreg_gaussian;
  if (name == "ili" || name == "linear") return LeafFamily::linear_interp;
  if (name == "mli" || name == "multilinear") return LeafFamily::multilinear_interp;
  return std::nullopt;
}

bool LeafDistribution::models(int dim) const {
  if (std::find(continuous_dims.begin(), continuous_dims.end(), dim) != continuous_dims.end()) return true;
  return std::any_of(discrete.begin(), discrete.end(), [dim](const Multinomial& m) { return m.dim == dim; });
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMassFloor = 1e-300;

double variance_floor(const Variable& v) {
  const double s = 1e-3 * v.range();
  return s * s;
}

// ---------------------------------------------------------------------------
// Generalized integral: every modeled dim is either evaluated at the point,
// integrated over a sub-range, or integrated over its whole leaf range.

enum class Mode : std::uint8_t { point, integrate, drop };

struct DimSpec {
  Mode mode = Mode::point;
  double lo = 0.0;
  double hi = 0.0;
  const std::vector<int>* values = nullptr;
};

struct Unit {
  double t0, t1;
};

Unit unit_interval(const DimRange& r, double lo, double hi) {
  const double L = r.width();
  double t0 = (std::max(lo, r.lo) - r.lo) / L;
  double t1 = (std::min(hi, r.hi) - r.lo) / L;
  t0 = std::clamp(t0, 0.0, 1.0);
  t1 = std::clamp(t1, 0.0, 1.0);
  return {t0, std::max(t0, t1)};
}

// Returns {f0, f1}: the two hat-basis factors for one dim.
std::array<double, 2> hat_factors(const DimRange& r, const DimSpec& s, double x) {
  switch (s.mode) {
    case Mode::point: {
      const double L = r.width();
      const double t = std::clamp((x - r.lo) / L, 0.0, 1.0);
      return {2.0 * (1.0 - t) / L, 2.0 * t / L};
    }
    case Mode::integrate: {
      auto [t0, t1] = unit_interval(r, s.lo, s.hi);
      const double sq = t1 * t1 - t0 * t0;
      return {2.0 * (t1 - t0) - sq, sq};
    }
    case Mode::drop: return {1.0, 1.0};
  }
  return {1.0, 1.0};
}

double gaussian_factor(double mean, double var, const DimRange& r, const DimSpec& s, double x) {
  if (s.mode == Mode::drop) return 1.0;
  const double sd = std::sqrt(var);
  const double total = std::max(normal::interval_mass((r.lo - mean) / sd, (r.hi - mean) / sd), kMassFloor);
  if (s.mode == Mode::point) return std::exp(normal::log_pdf((x - mean) / sd)) / (sd * total);
  const double lo = std::max(s.lo, r.lo);
  const double hi = std::min(s.hi, r.hi);
  if (!(hi > lo)) return 0.0;
  return normal::interval_mass((lo - mean) / sd, (hi - mean) / sd) / total;
}

double multilinear_fold(std::vector<double> v, std::span<const std::array<double, 2>> f) {
  for (std::size_t j = f.size(); j-- > 0;) {
    const std::size_t half = std::size_t{1} << j;
    for (std::size_t c = 0; c < half; ++c) v[c] = v[c] * f[j][0] + v[c + half] * f[j][1];
  }
  return v[0];
}

double linreg_mean(const LinRegGaussian& g, std::span<const double> point) {
  double mu = g.intercept;
  for (std::size_t k = 0; k < g.regressors.size(); ++k) mu += g.coef[k] * point[g.regressors[k]];
  return mu;
}

double continuous_factor(const LeafDistribution& leaf, const Box& box, std::span<const double> point,
                         std::span<const DimSpec> spec) {
  const auto& dims = leaf.continuous_dims;
  return std::visit(
      [&](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, UniformBox>) {
          double f = 1.0;
          for (int dim : dims) {
            const DimRange& r = box[dim];
            const DimSpec& s = spec[dim];
            if (s.mode == Mode::point) {
              f /= r.width();
            } else if (s.mode == Mode::integrate) {
              auto [t0, t1] = unit_interval(r, s.lo, s.hi);
              f *= t1 - t0;
            }
          }
          return f;
        } else if constexpr (std::is_same_v<T, DiagGaussian>) {
          double f = 1.0;
          for (std::size_t j = 0; j < dims.size(); ++j)
            f *= gaussian_factor(d.mean[j], d.variance[j], box[dims[j]], spec[dims[j]], point[dims[j]]);
          return f;
        } else if constexpr (std::is_same_v<T, LinRegGaussian>) {
          return gaussian_factor(linreg_mean(d, point), d.variance, box[d.child], spec[d.child], point[d.child]);
        } else if constexpr (std::is_same_v<T, LinearInterp>) {
          double f = 1.0;
          for (std::size_t j = 0; j < dims.size(); ++j) {
            const DimSpec& s = spec[dims[j]];
            if (s.mode == Mode::drop) continue;
            auto h = hat_factors(box[dims[j]], s, point[dims[j]]);
            f *= d.weights[j][0] * h[0] + d.weights[j][1] * h[1];
          }
          return f;
        } else {
          std::array<std::array<double, 2>, 16> small;
          std::vector<std::array<double, 2>> big;
          std::span<std::array<double, 2>> f;
          if (dims.size() <= small.size()) {
            f = std::span(small.data(), dims.size());
          } else {
            big.resize(dims.size());
            f = big;
          }
          for (std::size_t j = 0; j < dims.size(); ++j) f[j] = hat_factors(box[dims[j]], spec[dims[j]], point[dims[j]]);
          return multilinear_fold(d.weights, f);
        }
      },
      leaf.density);
}

double discrete_factor(const LeafDistribution& leaf, std::span<const double> point, std::span<const DimSpec> spec) {
  double f = 1.0;
  for (const auto& m : leaf.discrete) {
    const DimSpec& s = spec[m.dim];
    if (s.mode == Mode::point) {
      const auto v = static_cast<std::size_t>(point[m.dim]);
      f *= v < m.prob.size() ? m.prob[v] : 0.0;
    } else if (s.mode == Mode::integrate) {
      double sum = 0.0;
      for (int v : *s.values) sum += m.prob[static_cast<std::size_t>(v)];
      f *= sum;
    }
  }
  return f;
}

double measure(const LeafDistribution& leaf, const Box& box, std::span<const double> point,
               std::span<const DimSpec> spec) {
  return discrete_factor(leaf, point, spec) * continuous_factor(leaf, box, point, spec);
}

struct SpecBuffer {
  std::array<DimSpec, 16> small{};
  std::vector<DimSpec> big;
  std::span<DimSpec> view;

  explicit SpecBuffer(std::size_t n, Mode mode = Mode::point) {
    if (n <= small.size()) {
      view = std::span(small.data(), n);
    } else {
      big.resize(n);
      view = big;
    }
    for (auto& s : view) s.mode = mode;
  }
};

std::vector<RowIndex> subsample(RowSpan rows, std::size_t cap, std::uint64_t seed) {
  std::vector<RowIndex> out(rows.begin(), rows.end());
  if (out.size() <= cap) return out;
  Rng rng(seed);
  for (std::size_t i = 0; i < cap; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, out.size() - 1);
    std::swap(out[i], out[pick(rng)]);
  }
  out.resize(cap);
  return out;
}

void project_to_simplex(std::span<double> w, double floor) {
  double sum = 0.0;
  for (double& x : w) {
    x = std::max(x, floor);
    sum += x;
  }
  for (double& x : w) x /= sum;
}

double sample_hat(int corner, Rng& rng) {
  const double u = uniform01(rng);
  return corner == 1 ? std::sqrt(u) : 1.0 - std::sqrt(u);
}

std::size_t sample_index(std::span<const double> w, Rng& rng) {
  double total = 0.0;
  for (double x : w) total += x;
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (u < w[i]) return i;
    u -= w[i];
  }
  for (std::size_t i = w.size(); i-- > 0;)
    if (w[i] > 0.0) return i;
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Fitting

std::vector<double> fit_multinomial(std::span<const int> values, std::span<const int> admissible, int arity,
                                    double pseudo_count) {
  if (admissible.empty()) throw DataError("multinomial requires a non-empty admissible set");
  std::vector<double> counts(static_cast<std::size_t>(arity), 0.0);
  for (int v : values) counts[static_cast<std::size_t>(v)] += 1.0;
  const double total = static_cast<double>(values.size()) + pseudo_count * static_cast<double>(admissible.size());
  std::vector<double> p(static_cast<std::size_t>(arity), 0.0);
  if (total <= 0.0) {
    for (int v : admissible) p[static_cast<std::size_t>(v)] = 1.0 / static_cast<double>(admissible.size());
    return p;
  }
  for (int v : admissible) p[static_cast<std::size_t>(v)] = (counts[static_cast<std::size_t>(v)] + pseudo_count) / total;
  return p;
}

DiagGaussian fit_diag_gaussian(const Matrix& data, RowSpan rows, std::span<const int> dims, const Space& space) {
  if (rows.size() < 2) throw DataError("diagonal Gaussian needs at least 2 points");
  DiagGaussian g;
  const double n = static_cast<double>(rows.size());
  for (int d : dims) {
    double mean = 0.0;
    for (RowIndex r : rows) mean += data(r, d);
    mean /= n;
    double var = 0.0;
    for (RowIndex r : rows) {
      const double e = data(r, d) - mean;
      var += e * e;
    }
    var /= n;
    g.mean.push_back(mean);
    g.variance.push_back(std::max(var, variance_floor(space[d])));
  }
  return g;
}

LinRegGaussian fit_linreg_gaussian(const Matrix& data, RowSpan rows, int child, std::span<const int> regressors,
                                   const Space& space) {
  const std::size_t p = regressors.size() + 1;
  if (rows.size() < regressors.size() + 2)
    throw DataError("linear-regression Gaussian needs at least (regressors + 2) points");
  Eigen::MatrixXd X(rows.size(), p);
  Eigen::VectorXd y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    X(i, 0) = 1.0;
    for (std::size_t k = 0; k < regressors.size(); ++k) X(i, k + 1) = data(rows[i], regressors[k]);
    y(i) = data(rows[i], child);
  }
  LinRegGaussian g;
  g.child = child;
  g.regressors.assign(regressors.begin(), regressors.end());
  g.coef.assign(regressors.size(), 0.0);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  Eigen::VectorXd beta;
  if (static_cast<std::size_t>(qr.rank()) < p) {
    g.fallback = true;
    beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
    beta(0) = y.mean();
  } else {
    beta = qr.solve(y);
  }
  g.intercept = beta(0);
  for (std::size_t k = 0; k < regressors.size(); ++k) g.coef[k] = beta(static_cast<Eigen::Index>(k + 1));
  const double mse = (y - X * beta).squaredNorm() / static_cast<double>(rows.size());
  g.variance = std::max(mse, variance_floor(space[child]));
  return g;
}

EmFit<MultilinearInterp> fit_multilinear_em(const Matrix& data, RowSpan rows, std::span<const int> dims,
                                            const Box& box, const EmFitConfig& config) {
  if (dims.empty()) throw ConfigError("multilinear interpolation needs at least one continuous dim");
  const std::size_t d = dims.size();
  const std::size_t K = std::size_t{1} << d;
  EmFit<MultilinearInterp> fit;
  fit.dist.weights.assign(K, 1.0 / static_cast<double>(K));
  const auto used = subsample(rows, multilinear_cap(d), config.seed);
  fit.points_used = used.size();
  if (used.empty()) return fit;

  double vol = 1.0;
  for (int dim : dims) vol *= box[dim].width();
  const double scale = static_cast<double>(K) / vol;

  // basis[i * K + c] = g_c(x_i)
  std::vector<double> basis(used.size() * K);
  for (std::size_t i = 0; i < used.size(); ++i) {
    double* g = basis.data() + i * K;
    g[0] = scale;
    for (std::size_t j = 0; j < d; ++j) {
      const DimRange& r = box[dims[j]];
      const double t = std::clamp((data(used[i], dims[j]) - r.lo) / r.width(), 0.0, 1.0);
      const std::size_t half = std::size_t{1} << j;
      for (std::size_t c = 0; c < half; ++c) {
        g[c + half] = g[c] * t;
        g[c] *= 1.0 - t;
      }
    }
  }

  auto& w = fit.dist.weights;
  std::vector<double> acc(K);
  auto log_likelihood = [&] {
    double ll = 0.0;
    for (std::size_t i = 0; i < used.size(); ++i) {
      const double* g = basis.data() + i * K;
      double p = 0.0;
      for (std::size_t c = 0; c < K; ++c) p += w[c] * g[c];
      ll += std::log(p);
    }
    return ll;
  };

  double ll = log_likelihood();
  fit.log_likelihood.push_back(ll);
  for (int it = 0; it < config.max_iters; ++it) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t i = 0; i < used.size(); ++i) {
      const double* g = basis.data() + i * K;
      double p = 0.0;
      for (std::size_t c = 0; c < K; ++c) p += w[c] * g[c];
      for (std::size_t c = 0; c < K; ++c) acc[c] += w[c] * g[c] / p;
    }
    for (std::size_t c = 0; c < K; ++c) w[c] = acc[c] / static_cast<double>(used.size());
    const double next = log_likelihood();
    fit.log_likelihood.push_back(next);
    ++fit.iterations;
    const bool converged = next - ll <= config.rel_tol * std::max(std::abs(ll), 1.0);
    ll = next;
    if (converged) break;
  }
  project_to_simplex(w, config.weight_floor);
  return fit;
}

EmFit<LinearInterp> fit_linear_interp_em(const Matrix& data, RowSpan rows, std::span<const int> dims,
                                         const Box& box, const EmFitConfig& config) {
  if (dims.empty()) throw ConfigError("linear interpolation needs at least one continuous dim");
  const std::size_t d = dims.size();
  EmFit<LinearInterp> fit;
  fit.dist.weights.assign(d, {0.5, 0.5});
  const auto used = subsample(rows, linear_interp_cap(d), config.seed);
  fit.points_used = used.size();
  if (used.empty()) return fit;

  // t[i * d + j] is the unit coordinate of point i in dim j
  std::vector<double> t(used.size() * d);
  for (std::size_t i = 0; i < used.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const DimRange& r = box[dims[j]];
      t[i * d + j] = std::clamp((data(used[i], dims[j]) - r.lo) / r.width(), 0.0, 1.0);
    }
  double log_vol = 0.0;
  for (int dim : dims) log_vol += std::log(box[dim].width());

  auto& w = fit.dist.weights;
  auto log_likelihood = [&] {
    double ll = 0.0;
    for (std::size_t i = 0; i < used.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double x = t[i * d + j];
        ll += std::log(2.0 * (w[j][0] * (1.0 - x) + w[j][1] * x));
      }
    return ll - static_cast<double>(used.size()) * log_vol;
  };

  double ll = log_likelihood();
  fit.log_likelihood.push_back(ll);
  for (int it = 0; it < config.max_iters; ++it) {
    for (std::size_t j = 0; j < d; ++j) {
      double r1 = 0.0;
      for (std::size_t i = 0; i < used.size(); ++i) {
        const double x = t[i * d + j];
        const double p1 = w[j][1] * x;
        r1 += p1 / (w[j][0] * (1.0 - x) + p1);
      }
      w[j][1] = r1 / static_cast<double>(used.size());
      w[j][0] = 1.0 - w[j][1];
    }
    const double next = log_likelihood();
    fit.log_likelihood.push_back(next);
    ++fit.iterations;
    const bool converged = next - ll <= config.rel_tol * std::max(std::abs(ll), 1.0);
    ll = next;
    if (converged) break;
  }
  for (auto& pair : w) project_to_simplex(pair, config.weight_floor);
  return fit;
}

LeafDistribution fit_leaf(const Matrix& data, RowSpan rows, const Box& box, const Space& space,
                          std::span<const int> modeled, const LeafFitOptions& options, std::uint64_t seed) {
  LeafDistribution leaf;
  std::vector<int> values;
  for (int dim : modeled) {
    if (space[dim].is_discrete()) {
      values.clear();
      for (RowIndex r : rows) values.push_back(static_cast<int>(data(r, dim)));
      leaf.discrete.push_back({dim, fit_multinomial(values, box[dim].values, space[dim].arity, options.pseudo_count)});
    } else {
      leaf.continuous_dims.push_back(dim);
    }
  }
  if (leaf.continuous_dims.empty()) return leaf;

  const auto& cont = leaf.continuous_dims;
  EmFitConfig em = options.em;
  em.seed = seed;
  switch (options.family) {
    case LeafFamily::uniform: break;
    case LeafFamily::gaussian:
      if (rows.size() >= 2) leaf.density = fit_diag_gaussian(data, rows, cont, space);
      break;
    case LeafFamily::linreg_gaussian: {
      if (cont.size() != 1) throw ConfigError("linear-regression leaves model exactly one continuous child");
      std::vector<int> regressors;
      for (std::size_t d = 0; d < space.size(); ++d)
        if (!space[d].is_discrete() && std::find(modeled.begin(), modeled.end(), static_cast<int>(d)) == modeled.end())
          regressors.push_back(static_cast<int>(d));
      if (rows.size() >= regressors.size() + 2)
        leaf.density = fit_linreg_gaussian(data, rows, cont[0], regressors, space);
      else if (rows.size() >= 2)
        leaf.density = fit_diag_gaussian(data, rows, cont, space);
      break;
    }
    case LeafFamily::linear_interp: leaf.density = fit_linear_interp_em(data, rows, cont, box, em).dist; break;
    case LeafFamily::multilinear_interp: leaf.density = fit_multilinear_em(data, rows, cont, box, em).dist; break;
  }
  return leaf;
}

// ---------------------------------------------------------------------------
// Queries

double leaf_log_density(const LeafDistribution& leaf, std::span<const double> point, const Box& box) {
  if (!box.contains(point)) return kNegInf;
  SpecBuffer spec(box.size(), Mode::point);
  const double p = measure(leaf, box, point, spec.view);
  return p > 0.0 ? std::log(p) : kNegInf;
}

double leaf_marginal_density(const LeafDistribution& leaf, std::span<const double> point, std::span<const int> keep,
                             const Box& box) {
  SpecBuffer spec(box.size(), Mode::drop);
  for (int d : keep) spec.view[d].mode = Mode::point;
  return measure(leaf, box, point, spec.view);
}

double leaf_conditional_log_density(const LeafDistribution& leaf, int child, std::span<const double> point,
                                    const Box& box) {
  SpecBuffer spec(box.size(), Mode::point);
  const double joint = measure(leaf, box, point, spec.view);
  spec.view[child].mode = Mode::drop;
  const double marginal = measure(leaf, box, point, spec.view);
  if (!(marginal > 0.0)) {
    const DimRange& r = box[child];
    return r.values.empty() ? -std::log(r.width()) : -std::log(static_cast<double>(r.values.size()));
  }
  return joint > 0.0 ? std::log(joint) - std::log(marginal) : kNegInf;
}

double leaf_mass_in_subbox(const LeafDistribution& leaf, const Box& subbox, const Box& box,
                           std::span<const double> conditioning) {
  if (std::holds_alternative<LinRegGaussian>(leaf.density) && conditioning.size() != box.size())
    throw ConfigError("linear-regression leaf mass requires regressor values");
  std::vector<double> point(conditioning.begin(), conditioning.end());
  point.resize(box.size(), 0.0);
  SpecBuffer spec(box.size(), Mode::integrate);
  for (std::size_t d = 0; d < box.size(); ++d) {
    spec.view[d].lo = subbox[d].lo;
    spec.view[d].hi = subbox[d].hi;
    spec.view[d].values = &subbox[d].values;
  }
  std::vector<std::vector<int>> common(box.size());
  for (std::size_t d = 0; d < box.size(); ++d) {
    if (box[d].values.empty()) continue;
    std::set_intersection(box[d].values.begin(), box[d].values.end(), subbox[d].values.begin(),
                          subbox[d].values.end(), std::back_inserter(common[d]));
    spec.view[d].values = &common[d];
  }
  return measure(leaf, box, point, spec.view);
}

double leaf_conditional_mass(const LeafDistribution& leaf, int child, const DimRange& range,
                             std::span<const double> point, const Box& box) {
  SpecBuffer spec(box.size(), Mode::point);
  spec.view[child].mode = Mode::drop;
  const double marginal = measure(leaf, box, point, spec.view);
  const DimRange& r = box[child];
  std::vector<int> common;
  if (!r.values.empty())
    std::set_intersection(r.values.begin(), r.values.end(), range.values.begin(), range.values.end(),
                          std::back_inserter(common));
  if (!(marginal > 0.0)) {
    if (!r.values.empty()) return static_cast<double>(common.size()) / static_cast<double>(r.values.size());
    auto [t0, t1] = unit_interval(r, range.lo, range.hi);
    return t1 - t0;
  }
  spec.view[child] = {Mode::integrate, range.lo, range.hi, &common};
  if (!leaf.models(child)) {
    // the child is not modeled here: uniform over the leaf's child range
    if (!r.values.empty()) return static_cast<double>(common.size()) / static_cast<double>(r.values.size());
    auto [t0, t1] = unit_interval(r, range.lo, range.hi);
    return t1 - t0;
  }
  return measure(leaf, box, point, spec.view) / marginal;
}

// ---------------------------------------------------------------------------
// Sampling

void sample_leaf(const LeafDistribution& leaf, const Box& box, Rng& rng, std::span<double> point) {
  for (const auto& m : leaf.discrete) point[m.dim] = static_cast<double>(sample_index(m.prob, rng));
  const auto& dims = leaf.continuous_dims;
  std::visit(
      [&](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, UniformBox>) {
          for (int dim : dims) point[dim] = box[dim].lo + uniform01(rng) * box[dim].width();
        } else if constexpr (std::is_same_v<T, DiagGaussian>) {
          for (std::size_t j = 0; j < dims.size(); ++j)
            point[dims[j]] = normal::sample_truncated(d.mean[j], std::sqrt(d.variance[j]), box[dims[j]].lo,
                                                      box[dims[j]].hi, rng);
        } else if constexpr (std::is_same_v<T, LinRegGaussian>) {
          point[d.child] =
              normal::sample_truncated(linreg_mean(d, point), std::sqrt(d.variance), box[d.child].lo, box[d.child].hi, rng);
        } else if constexpr (std::is_same_v<T, LinearInterp>) {
          for (std::size_t j = 0; j < dims.size(); ++j) {
            const int corner = uniform01(rng) < d.weights[j][1] ? 1 : 0;
            point[dims[j]] = box[dims[j]].lo + sample_hat(corner, rng) * box[dims[j]].width();
          }
        } else {
          const std::size_t corner = sample_index(d.weights, rng);
          for (std::size_t j = 0; j < dims.size(); ++j) {
            const int bit = static_cast<int>((corner >> j) & 1U);
            point[dims[j]] = box[dims[j]].lo + sample_hat(bit, rng) * box[dims[j]].width();
          }
        }
      },
      leaf.density);
  for (std::size_t d = 0; d < box.size(); ++d) {
    // keep draws on the half-open side of split boundaries
    if (box[d].values.empty() && box[d].lo_open && point[d] <= box[d].lo && leaf.models(static_cast<int>(d)))
      point[d] = std::nextafter(box[d].lo, box[d].hi);
  }
}

namespace {

double draw_child(const LeafDistribution& leaf, int child, const Box& box, std::span<const double> point, Rng& rng) {
  const DimRange& r = box[child];
  if (!r.values.empty()) {
    for (const auto& m : leaf.discrete)
      if (m.dim == child) return static_cast<double>(sample_index(m.prob, rng));
    return static_cast<double>(r.values[static_cast<std::size_t>(uniform01(rng) * r.values.size()) % r.values.size()]);
  }
  const auto& dims = leaf.continuous_dims;
  const auto pos = std::find(dims.begin(), dims.end(), child);
  if (pos == dims.end()) return r.lo + uniform01(rng) * r.width();
  const std::size_t jc = static_cast<std::size_t>(pos - dims.begin());
  return std::visit(
      [&](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, UniformBox>) {
          return r.lo + uniform01(rng) * r.width();
        } else if constexpr (std::is_same_v<T, DiagGaussian>) {
          return normal::sample_truncated(d.mean[jc], std::sqrt(d.variance[jc]), r.lo, r.hi, rng);
        } else if constexpr (std::is_same_v<T, LinRegGaussian>) {
          return normal::sample_truncated(linreg_mean(d, point), std::sqrt(d.variance), r.lo, r.hi, rng);
        } else if constexpr (std::is_same_v<T, LinearInterp>) {
          const int corner = uniform01(rng) < d.weights[jc][1] ? 1 : 0;
          return r.lo + sample_hat(corner, rng) * r.width();
        } else {
          // weight of the child's low and high bases given the other dims
          SpecBuffer spec(box.size(), Mode::point);
          std::array<double, 2> side{};
          for (int bit = 0; bit < 2; ++bit) {
            std::vector<std::array<double, 2>> f(dims.size());
            for (std::size_t j = 0; j < dims.size(); ++j) f[j] = hat_factors(box[dims[j]], spec.view[dims[j]], point[dims[j]]);
            f[jc] = bit == 0 ? std::array<double, 2>{1.0, 0.0} : std::array<double, 2>{0.0, 1.0};
            side[static_cast<std::size_t>(bit)] = multilinear_fold(d.weights, f);
          }
          const int corner = uniform01(rng) * (side[0] + side[1]) < side[1] ? 1 : 0;
          return r.lo + sample_hat(corner, rng) * r.width();
        }
      },
      leaf.density);
}

}  // namespace

double sample_leaf_conditional(const LeafDistribution& leaf, int child, const Box& box, std::span<const double> point,
                               Rng& rng, const DimRange* range) {
  if (range == nullptr) return draw_child(leaf, child, box, point, rng);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double x = draw_child(leaf, child, box, point, rng);
    if (range->admits(x)) return x;
  }
  if (!range->values.empty()) return static_cast<double>(range->values.front());
  return std::max(range->lo, box[child].lo) + 0.5 * overlap_length(*range, box[child]);
}

}  // namespace denstree
