#pragma once

#include <stdexcept>
#include <vector>

namespace phylonbe {

// Right-continuous step function over time: the value at t is
// values[k] where k is the number of change times <= t.
struct PiecewiseConstant {
  std::vector<double> change_times;  // strictly increasing
  std::vector<double> values;        // size change_times.size() + 1

  static PiecewiseConstant constant(double v) { return {{}, {v}}; }

  double at(double t) const;

  // Throws std::invalid_argument on shape or ordering violations.
  void validate() const;
};

}  // namespace phylonbe
