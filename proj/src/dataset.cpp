#include "denstree/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "denstree/error.hpp"
#include "denstree/random.hpp"

namespace denstree {

Variable Variable::continuous(std::string name, double lo, double hi) {
  Variable v;
  v.name = std::move(name);
  v.kind = VarKind::continuous;
  v.lo = lo;
  v.hi = hi;
  return v;
}

Variable Variable::discrete(std::string name, int arity, std::vector<std::string> labels) {
  Variable v;
  v.name = std::move(name);
  v.kind = VarKind::discrete;
  v.arity = arity;
  v.lo = 0.0;
  v.hi = 0.0;
  v.labels = std::move(labels);
  return v;
}

Schema::Schema(std::vector<Variable> variables) : vars_(std::move(variables)) {
  std::set<std::string> names;
  for (const auto& v : vars_) {
    if (!names.insert(v.name).second) throw ConfigError("duplicate variable name '" + v.name + "'");
    if (v.is_discrete()) {
      if (v.arity < 2) throw ConfigError("variable '" + v.name + "': arity must be >= 2");
      if (!v.labels.empty() && static_cast<int>(v.labels.size()) != v.arity)
        throw ConfigError("variable '" + v.name + "': label count does not match arity");
    } else if (!(v.lo < v.hi) || !std::isfinite(v.lo) || !std::isfinite(v.hi)) {
      throw ConfigError("variable '" + v.name + "': requires finite lo < hi");
    }
  }
}

std::optional<std::size_t> Schema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < vars_.size(); ++i)
    if (vars_[i].name == name) return i;
  return std::nullopt;
}

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  if (values.size() != cols_) throw DataError("row width does not match matrix width");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

Matrix Matrix::select_rows(std::span<const std::uint32_t> rows) const {
  Matrix out(rows.size(), cols_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Dataset::Dataset(SchemaPtr schema, Matrix values) : schema_(std::move(schema)), values_(std::move(values)) {
  if (!schema_) throw ConfigError("dataset requires a schema");
  if (values_.rows() > 0 && values_.cols() != schema_->size())
    throw DataError("row width does not match schema width");
  if (values_.rows() == 0) values_ = Matrix(0, schema_->size());
}

Dataset Dataset::subset(std::span<const std::uint32_t> rows) const {
  return Dataset(schema_, values_.select_rows(rows));
}

std::vector<Violation> validate_dataset(const Schema& schema, const Matrix& values) {
  std::vector<Violation> out;
  if (values.rows() > 0 && values.cols() != schema.size()) {
    out.push_back({0, 0, "row width " + std::to_string(values.cols()) + " != schema width " +
                             std::to_string(schema.size())});
    return out;
  }
  for (std::size_t r = 0; r < values.rows(); ++r) {
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const Variable& v = schema[c];
      const double x = values(r, c);
      if (v.is_discrete()) {
        if (!(x >= 0.0 && x < v.arity) || x != std::floor(x)) {
          std::ostringstream msg;
          msg << "discrete value " << x << " outside [0, " << v.arity << ")";
          out.push_back({r, c, msg.str()});
        }
      } else if (!(x >= v.lo && x <= v.hi)) {
        std::ostringstream msg;
        msg << "out-of-range value " << x << " not in [" << v.lo << ", " << v.hi << "]";
        out.push_back({r, c, msg.str()});
      }
    }
  }
  return out;
}

namespace {

std::vector<std::uint32_t> keyed_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = derive_seed(seed, i);
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return keys[a] != keys[b] ? keys[a] < keys[b] : a < b;
  });
  return order;
}

}  // namespace

IndexSplit holdout_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must lie in (0, 1)");
  const auto h = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (h == 0 || h >= n)
    throw DataError("degenerate split: " + std::to_string(n) + " rows with holdout fraction " +
                    std::to_string(fraction) + " leaves an empty side");
  auto order = keyed_order(n, seed);
  IndexSplit out;
  out.holdout.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(h));
  out.train.assign(order.begin() + static_cast<std::ptrdiff_t>(h), order.end());
  std::sort(out.holdout.begin(), out.holdout.end());
  std::sort(out.train.begin(), out.train.end());
  return out;
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& data, const SplitPlan& plan) {
  if (data.size() == 0) throw DataError("cannot split an empty dataset");
  auto idx = holdout_indices(data.size(), plan.holdout_fraction, plan.seed);
  return {data.subset(idx.train), data.subset(idx.holdout)};
}

std::vector<std::vector<std::uint32_t>> kfold_indices(std::size_t n, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("folds must be >= 2");
  if (static_cast<std::size_t>(folds) > n)
    throw DataError("folds (" + std::to_string(folds) + ") exceed row count (" + std::to_string(n) + ")");
  auto order = keyed_order(n, seed);
  std::vector<std::vector<std::uint32_t>> out(static_cast<std::size_t>(folds));
  for (std::size_t p = 0; p < n; ++p) out[p % out.size()].push_back(order[p]);
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

std::vector<std::pair<Dataset, Dataset>> kfold_partition(const Dataset& data, const SplitPlan& plan) {
  auto tests = kfold_indices(data.size(), plan.folds, plan.seed);
  std::vector<std::pair<Dataset, Dataset>> out;
  out.reserve(tests.size());
  for (const auto& test : tests) {
    std::vector<std::uint32_t> train;
    train.reserve(data.size() - test.size());
    std::size_t j = 0;
    for (std::uint32_t i = 0; i < data.size(); ++i) {
      if (j < test.size() && test[j] == i) {
        ++j;
        continue;
      }
      train.push_back(i);
    }
    out.emplace_back(data.subset(train), data.subset(test));
  }
  return out;
}

std::pair<Dataset, AffineRecord> scale_to_unit(const Dataset& data) {
  const Schema& schema = data.schema();
  AffineRecord rec;
  rec.offset.assign(schema.size(), 0.0);
  rec.scale.assign(schema.size(), 1.0);
  std::vector<Variable> vars = schema.variables();
  Matrix out = data.values();
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (schema[c].is_discrete()) continue;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t r = 0; r < data.size(); ++r) {
      lo = std::min(lo, out(r, c));
      hi = std::max(hi, out(r, c));
    }
    if (!(hi > lo)) throw DataError("constant column '" + schema[c].name + "' cannot be scaled");
    rec.offset[c] = lo;
    rec.scale[c] = hi - lo;
    for (std::size_t r = 0; r < data.size(); ++r) {
      out(r, c) = std::clamp((out(r, c) - lo) / (hi - lo), 0.0, 1.0);
    }
    vars[c].lo = 0.0;
    vars[c].hi = 1.0;
  }
  return {Dataset(std::make_shared<const Schema>(std::move(vars)), std::move(out)), std::move(rec)};
}

Dataset add_noise(const Dataset& data, NoiseKind kind, double magnitude, std::uint64_t seed) {
  if (!(magnitude > 0.0)) throw ConfigError("noise magnitude must be positive");
  const Schema& schema = data.schema();
  Matrix out = data.values();
  Rng rng(seed);
  std::uniform_real_distribution<double> uni(-0.5 * magnitude, 0.5 * magnitude);
  std::normal_distribution<double> gauss(0.0, magnitude);
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const Variable& v = schema[c];
      if (v.is_discrete()) continue;
      const double e = kind == NoiseKind::uniform ? uni(rng) : gauss(rng);
      out(r, c) = std::clamp(out(r, c) + e, v.lo, v.hi);
    }
  }
  return Dataset(data.schema_ptr(), std::move(out));
}

}  // namespace denstree
