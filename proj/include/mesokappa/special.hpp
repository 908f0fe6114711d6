#pragma once

namespace mesokappa {

// Complete elliptic integral of the first kind in the modulus convention,
// K(k) = ∫_0^{π/2} dθ / sqrt(1 - k² sin²θ). In the parameter convention
// this is K(m = k²). Computed by the arithmetic-geometric mean.
double elliptic_K(double k);

// K evaluated from the complementary modulus k' = sqrt(1 - k²). Use this
// form when k' is known directly; it keeps full precision as k → 1.
double elliptic_K_from_complement(double kc);

double log_gamma(double x);

// E[X^p] for X ~ Gamma(shape, 1).
double gamma_moment(double shape, double p);

// Regularized lower incomplete gamma, the CDF of Gamma(shape, scale) at x.
double gamma_cdf(double shape, double scale, double x);

}  // namespace mesokappa
