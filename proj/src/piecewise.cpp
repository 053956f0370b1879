#include "phylonbe/piecewise.hpp"

#include <algorithm>
#include <cmath>

namespace phylonbe {

double PiecewiseConstant::at(double t) const {
  const auto it = std::upper_bound(change_times.begin(), change_times.end(), t);
  return values[static_cast<std::size_t>(it - change_times.begin())];
}

void PiecewiseConstant::validate() const {
  if (values.size() != change_times.size() + 1) {
    throw std::invalid_argument("piecewise: values must have one more entry than change_times");
  }
  for (std::size_t i = 0; i < change_times.size(); ++i) {
    if (!std::isfinite(change_times[i])) {
      throw std::invalid_argument("piecewise: non-finite change time");
    }
    if (i > 0 && !(change_times[i - 1] < change_times[i])) {
      throw std::invalid_argument("piecewise: change times must be strictly increasing");
    }
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("piecewise: non-finite value");
  }
}

}  // namespace phylonbe
