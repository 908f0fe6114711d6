#include "mesokappa/special.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mesokappa {

namespace {

double agm(double a, double b) {
  for (int it = 0; it < 64; ++it) {
    const double an = 0.5 * (a + b);
    const double bn = std::sqrt(a * b);
    if (std::abs(an - bn) <= 1e-16 * an) return an;
    a = an;
    b = bn;
  }
  return a;
}

}  // namespace

double elliptic_K(double k) {
  if (!(k >= 0.0 && k < 1.0))
    throw std::domain_error("elliptic_K: modulus must lie in [0,1), got " + std::to_string(k));
  return elliptic_K_from_complement(std::sqrt((1.0 - k) * (1.0 + k)));
}

double elliptic_K_from_complement(double kc) {
  if (!(kc > 0.0 && kc <= 1.0))
    throw std::domain_error("elliptic_K: complementary modulus must lie in (0,1], got " +
                            std::to_string(kc));
  return std::numbers::pi / (2.0 * agm(1.0, kc));
}

double log_gamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("log_gamma: argument must be positive");
  return std::lgamma(x);
}

double gamma_moment(double shape, double p) {
  if (!(shape > 0.0) || !(shape + p > 0.0))
    throw std::domain_error("gamma_moment: moment does not exist");
  return std::exp(std::lgamma(shape + p) - std::lgamma(shape));
}

double gamma_cdf(double shape, double scale, double x) {
  if (!(shape > 0.0) || !(scale > 0.0)) throw std::domain_error("gamma_cdf: bad parameters");
  if (x <= 0.0) return 0.0;
  return boost::math::gamma_p(shape, x / scale);
}

}  // namespace mesokappa
