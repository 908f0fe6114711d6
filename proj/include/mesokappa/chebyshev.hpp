#pragma once

#include <functional>
#include <vector>

namespace mesokappa {

// Chebyshev interpolant of degree n on [lo, hi], built from values at the
// first-kind nodes and evaluated by the Clenshaw recurrence.
class Chebyshev {
 public:
  Chebyshev() = default;
  Chebyshev(const std::function<double(double)>& f, double lo, double hi, int n);

  // Builds from values already sampled at nodes(lo, hi, n).
  static Chebyshev from_values(const std::vector<double>& values, double lo, double hi);
  static std::vector<double> nodes(double lo, double hi, int n);

  double operator()(double x) const;
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const std::vector<double>& coefficients() const { return c_; }

 private:
  double lo_ = 0.0, hi_ = 1.0;
  std::vector<double> c_;
};

}  // namespace mesokappa
