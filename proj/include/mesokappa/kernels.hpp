#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mesokappa/quadrature.hpp"
#include "mesokappa/rng.hpp"

namespace mesokappa {

enum class LocusKind { Divergent, Kink };

struct SingularLocus {
  Locus curve;
  LocusKind kind;
};

// A two-site exchange kernel in reduced form. W̄(α,β) is the rate of moving
// a pair of total energy 1 from fractions (α, 1-α) to (β, 1-β); the full
// kernel follows by homogeneity of degree -1/2 in the energies.
class Kernel {
 public:
  using Reduced = std::function<double(const SimplexPoint&)>;
  using Profile = std::function<double(double)>;

  Kernel(std::string name, int d, Reduced reduced, std::vector<SingularLocus> loci = {},
         Profile nu_bar = {}, Profile current_bar = {});

  const std::string& name() const { return name_; }
  int dimension() const { return d_; }
  const std::vector<SingularLocus>& loci() const { return loci_; }
  // Bit mask of all declared loci, for the quadrature splitter.
  unsigned loci_mask() const;

  double reduced(const SimplexPoint& p) const { return reduced_(p); }
  double reduced(double alpha, double beta) const { return reduced_(simplex_point(alpha, beta)); }
  // W̃ = W̄ (α(1-α))^{d/2-1}.
  double tilde(const SimplexPoint& p) const;

  bool on_divergent_locus(const SimplexPoint& p) const;

  bool has_nu_bar() const { return static_cast<bool>(nu_bar_); }
  bool has_current_bar() const { return static_cast<bool>(current_bar_); }
  // ν̄(α) = ∫ W̄(α,β) dβ; only for kernels with a closed form.
  double nu_bar(double alpha) const;
  // J̄(α) = ∫ (α-β) W̄(α,β) dβ; only for kernels with a closed form.
  double current_bar(double alpha) const;

 private:
  std::string name_;
  int d_;
  Reduced reduced_;
  std::vector<SingularLocus> loci_;
  Profile nu_bar_;
  Profile current_bar_;
};

// Built-in kernels: gg2, gg3, root-eta, uniform.
Kernel make_kernel(const std::string& name);
std::vector<std::string> kernel_names();

// W̄(α,β) = α. Violates exchange symmetry and detailed balance; used as a
// negative control.
Kernel make_broken_alpha_kernel();

// Reduced coordinates of the exchange (ε_a, ε_b) → (ε_a-η, ε_b+η). Swapping
// the sites and negating η swaps the coordinates exactly.
SimplexPoint exchange_point(double ea, double eb, double eta);

double eval_W(const Kernel& k, double ea, double eb, double eta);
double eval_tilde(const Kernel& k, double alpha, double beta);

// The two-dimensional kernel evaluated branch by branch from its defining
// piecewise formula in the energies, independent of the reduced form.
double gg2_piecewise(double ea, double eb, double eta);
double gg3_piecewise(double ea, double eb, double eta);

struct ConditionResult {
  double worst_residual = 0.0;
  bool pass = true;
};

struct ConditionReport {
  ConditionResult homogeneity;  // (i)
  ConditionResult symmetry;     // (ii)
  ConditionResult balance;      // (iii)
  long samples = 0;
  long skipped = 0;
  double tolerance = 1e-9;

  bool all_pass() const { return homogeneity.pass && symmetry.pass && balance.pass; }
};

ConditionReport check_conditions(const Kernel& k, long n, double tol, RngStream& rng);

}  // namespace mesokappa
