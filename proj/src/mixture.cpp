#include "denstree/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "denstree/error.hpp"
#include "denstree/normal.hpp"
#include "denstree/random.hpp"

namespace denstree {

namespace {

constexpr std::uint64_t kInitKey = 0x6d150001;
constexpr std::uint64_t kSelectKey = 0x6d150002;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double component_log_density(const GaussianMixture& m, const MixtureComponent& c, std::span<const double> row) {
  double lp = std::log(c.weight);
  for (std::size_t j = 0; j < m.continuous.size(); ++j) {
    const double x = row[static_cast<std::size_t>(m.continuous[j])];
    const double z = x - c.mean[j];
    lp += -0.5 * (std::log(2.0 * M_PI * c.variance[j]) + z * z / c.variance[j]);
  }
  for (std::size_t j = 0; j < m.discrete.size(); ++j) {
    const auto v = static_cast<std::size_t>(row[static_cast<std::size_t>(m.discrete[j])]);
    lp += std::log(c.prob[j][v]);
  }
  return lp;
}

double log_sum_exp(std::span<const double> v) {
  double hi = kNegInf;
  for (double x : v) hi = std::max(hi, x);
  if (hi == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

}  // namespace

double mixture_log_density(const GaussianMixture& model, std::span<const double> row) {
  std::vector<double> lp;
  lp.reserve(model.components.size());
  for (const auto& c : model.components) lp.push_back(component_log_density(model, c, row));
  return log_sum_exp(lp);
}

double joint_log_likelihood(const GaussianMixture& model, const Dataset& data) {
  double ll = 0.0;
  for (std::size_t r = 0; r < data.size(); ++r) ll += mixture_log_density(model, data.row(r));
  return ll;
}

GaussianMixture fit_gaussian_mixture(const Dataset& data, int k, const MixtureConfig& config) {
  if (k < 1) throw ConfigError("mixture needs k >= 1");
  if (data.size() == 0) throw DataError("cannot fit a mixture to an empty dataset");
  const Schema& schema = data.schema();
  GaussianMixture m;
  m.schema = data.schema_ptr();
  for (std::size_t v = 0; v < schema.size(); ++v)
    (schema[v].is_discrete() ? m.discrete : m.continuous).push_back(static_cast<int>(v));

  const std::size_t n = data.size();
  const std::size_t nc = m.continuous.size();
  const std::size_t nd = m.discrete.size();
  std::vector<double> floor(nc);
  std::vector<double> gmean(nc, 0.0), gvar(nc, 0.0);
  for (std::size_t j = 0; j < nc; ++j) {
    const auto& var = schema[static_cast<std::size_t>(m.continuous[j])];
    floor[j] = std::pow(config.variance_floor * (var.hi - var.lo), 2);
    for (std::size_t r = 0; r < n; ++r) gmean[j] += data.row(r)[static_cast<std::size_t>(m.continuous[j])];
    gmean[j] /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
      const double z = data.row(r)[static_cast<std::size_t>(m.continuous[j])] - gmean[j];
      gvar[j] += z * z;
    }
    gvar[j] = std::max(gvar[j] / static_cast<double>(n), floor[j]);
  }
  std::vector<std::vector<double>> gprob(nd);
  for (std::size_t j = 0; j < nd; ++j) {
    const auto col = static_cast<std::size_t>(m.discrete[j]);
    gprob[j].assign(static_cast<std::size_t>(schema[col].arity), 0.0);
    for (std::size_t r = 0; r < n; ++r) gprob[j][static_cast<std::size_t>(data.row(r)[col])] += 1.0;
    for (double& p : gprob[j]) p /= static_cast<double>(n);
  }

  // Means start at k distinct rows drawn by a seeded shuffle.
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  Rng rng(derive_seed(config.seed, kInitKey));
  std::shuffle(order.begin(), order.end(), rng);
  for (int c = 0; c < k; ++c) {
    MixtureComponent comp;
    comp.weight = 1.0 / k;
    const auto row = data.row(order[static_cast<std::size_t>(c) % n]);
    for (std::size_t j = 0; j < nc; ++j) comp.mean.push_back(row[static_cast<std::size_t>(m.continuous[j])]);
    comp.variance = gvar;
    comp.prob = gprob;
    m.components.push_back(std::move(comp));
  }

  const auto kk = static_cast<std::size_t>(k);
  std::vector<double> resp(n * kk);
  std::vector<double> lp(kk);
  for (int it = 0; it < config.max_iters; ++it) {
    double ll = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < kk; ++c)
        lp[c] = m.components[c].weight > 0.0 ? component_log_density(m, m.components[c], data.row(r)) : kNegInf;
      const double lse = log_sum_exp(lp);
      ll += lse;
      for (std::size_t c = 0; c < kk; ++c) resp[r * kk + c] = lp[c] == kNegInf ? 0.0 : std::exp(lp[c] - lse);
    }
    const bool converged =
        !m.log_likelihood.empty() && ll - m.log_likelihood.back() < config.rel_tol * std::max(std::abs(ll), 1.0);
    m.log_likelihood.push_back(ll);
    if (converged || it + 1 == config.max_iters) break;

    for (std::size_t c = 0; c < kk; ++c) {
      auto& comp = m.components[c];
      double nk = 0.0;
      for (std::size_t r = 0; r < n; ++r) nk += resp[r * kk + c];
      comp.weight = nk / static_cast<double>(n);
      if (!(nk > 1e-12)) {
        comp.weight = 0.0;
        continue;
      }
      for (std::size_t j = 0; j < nc; ++j) {
        const auto col = static_cast<std::size_t>(m.continuous[j]);
        double mu = 0.0;
        for (std::size_t r = 0; r < n; ++r) mu += resp[r * kk + c] * data.row(r)[col];
        mu /= nk;
        double var = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          const double z = data.row(r)[col] - mu;
          var += resp[r * kk + c] * z * z;
        }
        comp.mean[j] = mu;
        comp.variance[j] = std::max(var / nk, floor[j]);
      }
      for (std::size_t j = 0; j < nd; ++j) {
        const auto col = static_cast<std::size_t>(m.discrete[j]);
        std::fill(comp.prob[j].begin(), comp.prob[j].end(), 0.0);
        for (std::size_t r = 0; r < n; ++r) comp.prob[j][static_cast<std::size_t>(data.row(r)[col])] += resp[r * kk + c];
        for (double& p : comp.prob[j]) p /= nk;
      }
    }
  }

  std::erase_if(m.components, [](const MixtureComponent& c) { return !(c.weight > 0.0); });
  double wsum = 0.0;
  for (const auto& c : m.components) wsum += c.weight;
  for (auto& c : m.components) {
    c.weight /= wsum;
    for (auto& p : c.prob) {
      double s = 0.0;
      for (double& q : p) s += (q = std::max(q, config.prob_floor));
      for (double& q : p) q /= s;
    }
  }
  return m;
}

MixtureSelection fit_gaussian_mixture_baseline(const Dataset& data, std::span<const int> k_grid,
                                               const MixtureConfig& config) {
  if (k_grid.empty()) throw ConfigError("empty k grid");
  const auto split = holdout_indices(data.size(), 0.2, derive_seed(config.seed, kSelectKey));
  const Dataset train = data.subset(split.train);
  const Dataset valid = data.subset(split.holdout);
  MixtureSelection sel;
  double best = kNegInf;
  for (int k : k_grid) {
    const double ll = joint_log_likelihood(fit_gaussian_mixture(train, k, config), valid);
    sel.validation_ll.push_back(ll);
    if (ll > best) {
      best = ll;
      sel.k = k;
    }
  }
  sel.model = fit_gaussian_mixture(data, sel.k, config);
  return sel;
}

}  // namespace denstree
