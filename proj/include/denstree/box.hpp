#pragma once

#include <span>
#include <utility>
#include <vector>

#include "denstree/dataset.hpp"

namespace denstree {

/// The variables a tree is built over, in local dimension order.
using Space = std::vector<Variable>;

/// One dimension of a box. Continuous dims use [lo, hi] (or (lo, hi] when
/// lo_open); discrete dims use the sorted admissible value list.
struct DimRange {
  double lo = 0.0;
  double hi = 1.0;
  bool lo_open = false;
  std::vector<int> values;

  double width() const { return hi - lo; }
  bool admits(double x) const;

  friend bool operator==(const DimRange&, const DimRange&) = default;
};

struct Box {
  std::vector<DimRange> dims;

  std::size_t size() const { return dims.size(); }
  const DimRange& operator[](std::size_t d) const { return dims[d]; }
  DimRange& operator[](std::size_t d) { return dims[d]; }

  bool contains(std::span<const double> point) const;

  friend bool operator==(const Box&, const Box&) = default;
};

/// The bounding box of a space: full schema ranges and every discrete value.
Box root_box(const Space& space);

/// Low child takes (lo, at] with the parent's lo openness, high child (at, hi].
std::pair<Box, Box> split_box(const Box& box, int dim, double at);
Box restrict_value(const Box& box, int dim, int value);

/// True when the two boxes share positive continuous volume and a common
/// value in every discrete dim. Only the listed dims are compared.
bool boxes_overlap(const Box& a, const Box& b, std::span<const int> dims);
/// Fraction of [lo, hi] of `a` along `dim` covered by `b`.
double overlap_length(const DimRange& a, const DimRange& b);

double continuous_volume(const Box& box, const Space& space, std::span<const int> dims);

/// Midpoint of the continuous dims; smallest admissible value for discrete dims.
std::vector<double> box_center(const Box& box, const Space& space);

}  // namespace denstree
