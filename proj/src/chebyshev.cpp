#include "mesokappa/chebyshev.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mesokappa {

std::vector<double> Chebyshev::nodes(double lo, double hi, int n) {
  std::vector<double> x(n + 1);
  for (int k = 0; k <= n; ++k) {
    const double u = std::cos(std::numbers::pi * (k + 0.5) / (n + 1));
    x[k] = 0.5 * (lo + hi) + 0.5 * (hi - lo) * u;
  }
  return x;
}

Chebyshev Chebyshev::from_values(const std::vector<double>& values, double lo, double hi) {
  if (values.size() < 2 || !(hi > lo)) throw std::invalid_argument("Chebyshev: bad input");
  const int m = static_cast<int>(values.size());
  Chebyshev c;
  c.lo_ = lo;
  c.hi_ = hi;
  c.c_.assign(m, 0.0);
  for (int j = 0; j < m; ++j) {
    double s = 0.0;
    for (int k = 0; k < m; ++k) s += values[k] * std::cos(std::numbers::pi * j * (k + 0.5) / m);
    c.c_[j] = 2.0 * s / m;
  }
  c.c_[0] *= 0.5;
  return c;
}

Chebyshev::Chebyshev(const std::function<double(double)>& f, double lo, double hi, int n) {
  std::vector<double> v;
  for (double x : nodes(lo, hi, n)) v.push_back(f(x));
  *this = from_values(v, lo, hi);
}

double Chebyshev::operator()(double x) const {
  const double u = (2.0 * x - lo_ - hi_) / (hi_ - lo_);
  double b1 = 0.0, b2 = 0.0;
  for (std::size_t j = c_.size(); j-- > 1;) {
    const double t = 2.0 * u * b1 - b2 + c_[j];
    b2 = b1;
    b1 = t;
  }
  return u * b1 - b2 + c_[0];
}

}  // namespace mesokappa
