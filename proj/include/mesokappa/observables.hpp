#pragma once

#include <optional>
#include <string>

#include "mesokappa/kernels.hpp"
#include "mesokappa/quadrature.hpp"

namespace mesokappa {

// Tolerances used for the static constants unless the caller overrides them.
QuadratureSpec static_spec();

// Pair observables at energies (ε_a, ε_b): collision frequency, mean
// current and second moment of the exchange.
QuadratureResult nu(const Kernel& k, double ea, double eb, const QuadratureSpec& spec = static_spec());
QuadratureResult j(const Kernel& k, double ea, double eb, const QuadratureSpec& spec = static_spec());
QuadratureResult h(const Kernel& k, double ea, double eb, const QuadratureSpec& spec = static_spec());

// Reduced profiles ∫ (α-β)^p W̄(α,β) dβ for p = 0, 1, 2.
QuadratureResult reduced_moment(const Kernel& k, double alpha, int p,
                                const QuadratureSpec& spec = static_spec());

QuadratureResult kappa_f(const Kernel& k, const QuadratureSpec& spec = static_spec(),
                         Execution exec = Execution::Serial);
QuadratureResult kappa_1(const Kernel& k, const QuadratureSpec& spec = static_spec(),
                         Execution exec = Execution::Serial);
QuadratureResult kappa_2(const Kernel& k, const QuadratureSpec& spec = static_spec(),
                         Execution exec = Execution::Serial);

// The static conductivity from two routes: as κ_1 (value) and as ½⟨h⟩_1
// (via_h). warning is set when they disagree beyond their combined error.
struct StaticConductivity {
  double value = 0.0;
  double error = 0.0;
  bool converged = true;
  double via_h = 0.0;
  double via_h_error = 0.0;
  double discrepancy = 0.0;
  bool warning = false;
};

StaticConductivity kappa_s(const Kernel& k, const QuadratureSpec& spec = static_spec(),
                           Execution exec = Execution::Serial);

// ∫∫ (α-β) W̃ dβ dα, zero for every kernel obeying detailed balance.
QuadratureResult check_identity(const Kernel& k, const QuadratureSpec& spec = static_spec(),
                                Execution exec = Execution::Serial);

struct Condition34 {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
  double error = 0.0;
  bool converged = true;
  bool holds(double tol) const { return std::abs(residual) <= tol; }
};

// ∫∫ W̃ against (d+3/2)(d+1/2) ∫∫ α(α-β) W̃.
Condition34 check_condition_3_4(const Kernel& k, const QuadratureSpec& spec = static_spec(),
                                Execution exec = Execution::Serial);

// One-site equilibrium average of the current out of a site at energy ε.
QuadratureResult tilde_j(const Kernel& k, double eps, const QuadratureSpec& spec = static_spec());

struct GradientDefect {
  double value = 0.0;
  double error = 0.0;
  bool converged = true;
  // Largest deviation of the tabulated j̃ from direct quadrature at probe points.
  double interpolation_error = 0.0;
  // ⟨j̃(ε_0)⟩ at unit temperature; zero in exact arithmetic.
  double tilde_j_mean = 0.0;
};

GradientDefect gradient_defect(const Kernel& k, const QuadratureSpec& spec = static_spec(),
                               Execution exec = Execution::Serial);

struct GradientVerdict {
  bool gradient = false;
  std::optional<double> C;
  double defect = 0.0;
  double fit_residual = 0.0;
};

// Thrown when the defect vanishes but j is not a multiple of ε_a^{3/2}-ε_b^{3/2}.
class GradientInconsistency : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

GradientVerdict is_gradient(const Kernel& k, double tol = 1e-8,
                            const QuadratureSpec& spec = static_spec(),
                            Execution exec = Execution::Serial);

enum class PairAverage {
  CollisionRate,  // ⟨ν⟩_T
  HalfFluxMoment, // ½⟨(ε_a-ε_b) j⟩_T
  HalfH,          // ½⟨h⟩_T
};

// Equilibrium average at temperature T by direct quadrature over the two
// gamma-weighted energy axes.
QuadratureResult pair_average(const Kernel& k, PairAverage which, double T,
                              const QuadratureSpec& spec = static_spec(),
                              Execution exec = Execution::Serial);

struct Entry {
  double value = 0.0;
  double error = 0.0;
  bool converged = true;
};

struct StaticReport {
  std::string kernel;
  int d = 0;
  Entry kappa_f, kappa_1, kappa_2;
  StaticConductivity kappa_s;
  Entry identity_residual;
  Condition34 cond34;
  GradientDefect defect;
  GradientVerdict gradient;

  bool all_converged() const;
};

StaticReport static_report(const Kernel& k, const QuadratureSpec& spec = static_spec(),
                           Execution exec = Execution::Serial);

}  // namespace mesokappa
