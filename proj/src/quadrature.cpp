#include "mesokappa/quadrature.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace mesokappa {

void QuadratureSpec::validate() const {
  if (!(abs_tol > 0.0)) throw std::invalid_argument("QuadratureSpec: abs_tol must be positive");
  if (!(rel_tol > 0.0)) throw std::invalid_argument("QuadratureSpec: rel_tol must be positive");
  if (max_subdivisions < 1)
    throw std::invalid_argument("QuadratureSpec: max_subdivisions must be at least 1");
  if (rule_order < 2) throw std::invalid_argument("QuadratureSpec: rule_order must be at least 2");
}

namespace {

// Newton iteration on P_n from the Chebyshev-like initial guess.
std::unique_ptr<GaussRule> build_rule(int n) {
  auto rule = std::make_unique<GaussRule>();
  rule->t.resize(n);
  rule->one_minus_t.resize(n);
  rule->w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    const double w = 1.0 / ((1.0 - z * z) * dp * dp);  // half of the [-1,1] weight
    // Node -z maps to t = (1-z)/2, node z to t = (1+z)/2.
    rule->t[i] = 0.5 * (1.0 - z);
    rule->one_minus_t[i] = 0.5 * (1.0 + z);
    rule->t[n - 1 - i] = 0.5 * (1.0 + z);
    rule->one_minus_t[n - 1 - i] = 0.5 * (1.0 - z);
    rule->w[i] = w;
    rule->w[n - 1 - i] = w;
  }
  return rule;
}

}  // namespace

const GaussRule& gauss_legendre(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<GaussRule>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = build_rule(n);
  return *slot;
}

SimplexPoint simplex_point(double alpha, double beta) {
  SimplexPoint p;
  p.a = alpha;
  p.a1 = 1.0 - alpha;
  p.b = beta;
  p.b1 = 1.0 - beta;
  p.diff = alpha - beta;
  p.anti = beta >= 0.5 ? alpha - p.b1 : beta - p.a1;
  return p;
}

}  // namespace mesokappa

namespace mesokappa {

SimplexPoint simplex_point(const SimplexPoint& ap, const AnchoredPoint& x, bool diag, bool anti) {
  SimplexPoint p = ap;
  p.b = x.anchor == 0.0 ? x.offset : x.x;
  p.b1 = x.anchor == 1.0 ? -x.offset : 1.0 - p.b;
  p.diff = diag && x.anchor == ap.a ? -x.offset : ap.a - p.b;
  if (anti && x.anchor == ap.a1) {
    // β = (1-α) + offset in exact arithmetic; add the rounding residual of a + a1.
    const double s = ap.a + ap.a1;
    const double bb = s - ap.a;
    const double e = (ap.a - (s - bb)) + (ap.a1 - bb);
    p.anti = x.offset + ((s - 1.0) + e);
    if (x.anchor != 1.0) p.b1 = ap.a - p.anti;
  } else {
    p.anti = p.b >= 0.5 ? p.a - p.b1 : p.b - p.a1;
  }
  return p;
}

}  // namespace mesokappa
