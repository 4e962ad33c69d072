#include "denstree/box.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace denstree {

bool DimRange::admits(double x) const {
  if (!values.empty()) {
    const int v = static_cast<int>(x);
    return static_cast<double>(v) == x && std::binary_search(values.begin(), values.end(), v);
  }
  return (lo_open ? x > lo : x >= lo) && x <= hi;
}

bool Box::contains(std::span<const double> point) const {
  if (point.size() != dims.size()) return false;
  for (std::size_t d = 0; d < dims.size(); ++d)
    if (!dims[d].admits(point[d])) return false;
  return true;
}

Box root_box(const Space& space) {
  Box box;
  box.dims.resize(space.size());
  for (std::size_t d = 0; d < space.size(); ++d) {
    const Variable& v = space[d];
    if (v.is_discrete()) {
      box.dims[d].values.resize(static_cast<std::size_t>(v.arity));
      std::iota(box.dims[d].values.begin(), box.dims[d].values.end(), 0);
      box.dims[d].lo = 0.0;
      box.dims[d].hi = static_cast<double>(v.arity - 1);
    } else {
      box.dims[d].lo = v.lo;
      box.dims[d].hi = v.hi;
    }
  }
  return box;
}

std::pair<Box, Box> split_box(const Box& box, int dim, double at) {
  Box low = box;
  Box high = box;
  low.dims[dim].hi = at;
  high.dims[dim].lo = at;
  high.dims[dim].lo_open = true;
  return {std::move(low), std::move(high)};
}

Box restrict_value(const Box& box, int dim, int value) {
  Box out = box;
  out.dims[dim].values = {value};
  out.dims[dim].lo = out.dims[dim].hi = value;
  return out;
}

double overlap_length(const DimRange& a, const DimRange& b) {
  return std::max(0.0, std::min(a.hi, b.hi) - std::max(a.lo, b.lo));
}

bool boxes_overlap(const Box& a, const Box& b, std::span<const int> dims) {
  for (int d : dims) {
    const DimRange& x = a.dims[d];
    const DimRange& y = b.dims[d];
    if (!x.values.empty()) {
      bool common = false;
      for (int v : x.values)
        if (std::binary_search(y.values.begin(), y.values.end(), v)) {
          common = true;
          break;
        }
      if (!common) return false;
    } else if (!(overlap_length(x, y) > 0.0)) {
      return false;
    }
  }
  return true;
}

double continuous_volume(const Box& box, const Space& space, std::span<const int> dims) {
  double vol = 1.0;
  for (int d : dims)
    if (!space[d].is_discrete()) vol *= box.dims[d].width();
  return vol;
}

std::vector<double> box_center(const Box& box, const Space& space) {
  std::vector<double> c(box.size());
  for (std::size_t d = 0; d < box.size(); ++d)
    c[d] = space[d].is_discrete() ? box.dims[d].values.front() : 0.5 * (box.dims[d].lo + box.dims[d].hi);
  return c;
}

}  // namespace denstree
