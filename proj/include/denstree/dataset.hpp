#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace denstree {

enum class VarKind : std::uint8_t { discrete, continuous };

struct Variable {
  std::string name;
  VarKind kind = VarKind::continuous;
  int arity = 0;      // discrete only
  double lo = 0.0;    // continuous only
  double hi = 1.0;
  std::vector<std::string> labels;  // optional names for discrete values

  static Variable continuous(std::string name, double lo, double hi);
  static Variable discrete(std::string name, int arity, std::vector<std::string> labels = {});

  bool is_discrete() const { return kind == VarKind::discrete; }
  double range() const { return hi - lo; }

  friend bool operator==(const Variable&, const Variable&) = default;
};

/// An ordered list of variables. Constructing one validates the invariants
/// (arity >= 2, lo < hi, unique names) and throws ConfigError otherwise.
class Schema {
 public:
  explicit Schema(std::vector<Variable> variables);

  std::size_t size() const { return vars_.size(); }
  const Variable& operator[](std::size_t i) const { return vars_[i]; }
  const std::vector<Variable>& variables() const { return vars_; }
  std::optional<std::size_t> index_of(std::string_view name) const;

  friend bool operator==(const Schema&, const Schema&) = default;

 private:
  std::vector<Variable> vars_;
};

using SchemaPtr = std::shared_ptr<const Schema>;

/// Dense row-major table of doubles. Discrete values are stored as exact
/// small integers.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void append_row(std::span<const double> values);
  Matrix select_rows(std::span<const std::uint32_t> rows) const;

  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

class Dataset {
 public:
  Dataset(SchemaPtr schema, Matrix values);

  const Schema& schema() const { return *schema_; }
  const SchemaPtr& schema_ptr() const { return schema_; }
  const Matrix& values() const { return values_; }
  std::size_t size() const { return values_.rows(); }
  std::size_t width() const { return values_.cols(); }
  std::span<const double> row(std::size_t r) const { return values_.row(r); }

  Dataset subset(std::span<const std::uint32_t> rows) const;

 private:
  SchemaPtr schema_;
  Matrix values_;
};

struct Violation {
  std::size_t row;
  std::size_t col;
  std::string reason;
};

std::vector<Violation> validate_dataset(const Schema& schema, const Matrix& values);
inline std::vector<Violation> validate_dataset(const Dataset& data) {
  return validate_dataset(data.schema(), data.values());
}

struct SplitPlan {
  std::uint64_t seed = 0;
  double holdout_fraction = 0.3;
  int folds = 10;
};

struct IndexSplit {
  std::vector<std::uint32_t> train;
  std::vector<std::uint32_t> holdout;
};

/// Row indices for a holdout split of `n` rows. Each row's side is fixed by a
/// counter-based key of (seed, row index), so the result does not depend on
/// evaluation order. Throws DataError when either side would be empty.
IndexSplit holdout_indices(std::size_t n, double fraction, std::uint64_t seed);
std::pair<Dataset, Dataset> split_holdout(const Dataset& data, const SplitPlan& plan);

/// Test-set indices for each of `folds` folds; sizes differ by at most one.
std::vector<std::vector<std::uint32_t>> kfold_indices(std::size_t n, int folds, std::uint64_t seed);
std::vector<std::pair<Dataset, Dataset>> kfold_partition(const Dataset& data, const SplitPlan& plan);

/// y = (x - offset) / scale per continuous column; discrete columns carry
/// the identity (offset 0, scale 1).
struct AffineRecord {
  std::vector<double> offset;
  std::vector<double> scale;

  double invert(std::size_t col, double y) const { return offset[col] + scale[col] * y; }
};

std::pair<Dataset, AffineRecord> scale_to_unit(const Dataset& data);

enum class NoiseKind : std::uint8_t { uniform, gaussian };

/// Uniform: i.i.d. draws on [-m/2, m/2]. Gaussian: N(0, m^2). Results are
/// clamped to each variable's schema bounds.
Dataset add_noise(const Dataset& data, NoiseKind kind, double magnitude, std::uint64_t seed);

}  // namespace denstree
