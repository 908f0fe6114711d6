#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mesokappa/sampler.hpp"

namespace mesokappa {

// One factor of a product basis function: (ε_site - d/2)^power, or the
// half-power feature ε_site^{3/2} - Γ(d/2+3/2)/Γ(d/2) when half is set.
struct Factor {
  int site;
  int power;
  bool half;
};

struct BasisFunction {
  std::string label;
  std::vector<Factor> factors;
  double mean;  // subtracted so that the function is centred at T = 1
};

// Cylinder functions of ε_0..ε_{w-1}. The default basis holds products of
// one factor per site with total degree ≤ D (the half-power feature counts
// as degree 1). Only functions whose support starts at site 0 are kept, since
// translates give the same Σ_f, and ε_0 - d/2 alone is dropped because its
// Σ_f is the conserved total energy.
class TrialSpace {
 public:
  TrialSpace() = default;
  TrialSpace(int window, int degree, int d, bool half_power = true);
  // Explicit basis; used by tests and custom studies.
  TrialSpace(int window, int d, std::vector<BasisFunction> basis, std::string label);

  int window() const { return window_; }
  int degree() const { return degree_; }
  int dimension() const { return d_; }
  std::size_t size() const { return basis_.size(); }
  const std::vector<BasisFunction>& basis() const { return basis_; }
  const std::string& label() const { return label_; }

  // f_m evaluated on the w energies e[0..w-1].
  double evaluate(std::size_t m, const double* e) const;

 private:
  int window_ = 1;
  int degree_ = 0;
  int d_ = 2;
  std::vector<BasisFunction> basis_;
  std::string label_;
};

// κ_var = κ_s + cᵀL + ½ cᵀSc with
//   L_m  = ⟨∫dη W η ∇Σ_{f_m}⟩_1,
//   S_mn = ⟨∫dη W ∇Σ_{f_m} ∇Σ_{f_n}⟩_1,
// where ∇ is the change under moving η from site 0 to site 1.
struct QuadraticProgram {
  Eigen::MatrixXd S;
  Eigen::VectorXd L;
  Eigen::MatrixXd S_err;
  Eigen::VectorXd L_err;
  // L estimated from the sampled η directly; L itself uses the current form.
  Eigen::VectorXd L_direct;
  Eigen::VectorXd L_direct_err;
  double kappa_s_ref = 0.0;
  // Plain Monte Carlo estimate of ½⟨h⟩_1 from the same draws.
  double kappa_s_mc = 0.0;
  double kappa_s_mc_err = 0.0;
  long long n_samples = 0;
  std::vector<std::string> labels;
  // Per-batch means, used for the jackknife error of κ_var.
  std::vector<Eigen::MatrixXd> S_batches;
  std::vector<Eigen::VectorXd> L_batches;
  bool undersampled = false;

  // A program given directly by its matrices; carries no error information.
  static QuadraticProgram exact(Eigen::MatrixXd S, Eigen::VectorXd L, double kappa_s);
  // Sub-program on the named basis functions, sharing all random numbers.
  QuadraticProgram restrict_to(const std::vector<std::string>& keep) const;
};

struct AssembleOptions {
  int batches = 64;
  std::uint64_t seed = 1;
  // Reference κ_s at T = 1; computed by quadrature when NaN.
  double kappa_s_ref = std::numeric_limits<double>::quiet_NaN();
  Execution exec = Execution::Parallel;
};

QuadraticProgram assemble(const ExchangeSampler& sampler, const TrialSpace& space,
                          long long n_samples, const AssembleOptions& opt = {});

class IndefiniteMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct VariationalResult {
  double kappa_var = 0.0;
  double std_error = 0.0;  // jackknife spread combined with the jackknife bias
  double bias = 0.0;
  double gap = 0.0;  // κ_s - κ_var = -(cᵀL + ½cᵀSc)
  Eigen::VectorXd coefficients;
  double ridge = 0.0;
  bool undersampled = false;
};

// Solves S c = -L, with a ridge 1e-10·tr(S)/M when S is near-singular.
VariationalResult minimize(const QuadraticProgram& qp);

struct CurvePoint {
  std::string label;
  std::size_t size;
  double kappa_var;
  double std_error;
};

struct UpperCurve {
  std::vector<CurvePoint> points;
  bool non_monotone = false;  // some bound rose by more than 3σ
};

// Bounds for nested trial spaces. The largest space is assembled once and
// the others are read off as sub-blocks, so the curve is monotone up to the ridge.
UpperCurve kappa_upper_curve(const ExchangeSampler& sampler, const std::vector<TrialSpace>& spaces,
                             long long n_samples, const AssembleOptions& opt = {});

}  // namespace mesokappa
