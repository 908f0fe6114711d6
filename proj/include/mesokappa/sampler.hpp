#pragma once

#include <memory>
#include <vector>

#include "mesokappa/kernels.hpp"
#include "mesokappa/rng.hpp"

namespace mesokappa {

// Draws the post-exchange fraction β given the pre-exchange fraction α.
class BetaSampler {
 public:
  virtual ~BetaSampler() = default;
  virtual double sample(double alpha, RngStream& rng) const = 0;
};

struct TableShape {
  int alpha_cells = 1024;  // uniform α spacing; extra geometric nodes are added near 0 and 1
  int beta_cells = 2048;   // must be a multiple of 8
  int gauss_points = 8;
};

// Inverse-CDF tables of the exchange density W̄(α,·)/ν̄(α) on an α grid.
//
// For every α, β ∈ (0,1) is cut at {min(α,1-α), 1/2, max(α,1-α)} into four
// segments. A warped coordinate u ∈ [0,4] runs through the segments; each
// half-segment is graded quadratically towards its breakpoint, so cells
// shrink where the kernel is singular or kinked. Quantiles are interpolated
// between neighbouring α nodes in u, which keeps the singular points aligned.
class ExchangeSampler final : public BetaSampler {
 public:
  explicit ExchangeSampler(const Kernel& k, TableShape shape = {},
                           Execution exec = Execution::Serial);

  double sample(double alpha, RngStream& rng) const override;
  // Quantile of the tabulated law at probability p.
  double quantile(double alpha, double p) const;

  // ν̄(α) and J̄(α): closed forms where the kernel provides them, otherwise
  // interpolated from the table masses.
  double nu_bar(double alpha) const;
  double current_bar(double alpha) const;

  const Kernel& kernel() const { return kernel_; }
  std::size_t alpha_nodes() const { return alpha_.size(); }
  int beta_cells() const { return cells_; }

 private:
  double quantile_u(std::size_t node, double p) const;
  std::size_t locate(double alpha, double& theta) const;

  Kernel kernel_;
  int cells_;
  std::vector<double> alpha_;
  std::vector<double> cdf_;  // alpha_.size() rows of cells_+1 entries
  std::vector<double> nu_;
  std::vector<double> current_;
};

// Maps the warped coordinate u ∈ [0,4] to β for a given α.
double warped_to_beta(double alpha, double u);

// Accept-reject sampler used to validate the tables. The proposal mixes a
// uniform law with inverse square-root laws centred on the divergent loci;
// the envelope constant is found by scanning W̄ over a graded grid, cached
// for the last α. Not safe to share between threads.
class RejectionSampler final : public BetaSampler {
 public:
  explicit RejectionSampler(const Kernel& k);
  double sample(double alpha, RngStream& rng) const override;
  long proposals() const { return proposals_; }
  long accepted() const { return accepted_; }
  // Draws where W̄/q exceeded the envelope; zero unless the scan missed a peak.
  long envelope_violations() const { return violations_; }

 private:
  struct Proposal;
  double density(const Proposal& q, double beta) const;
  void prepare(double alpha) const;

  Kernel kernel_;
  mutable double cached_alpha_ = -1.0;
  mutable std::vector<double> centres_;
  mutable double envelope_ = 0.0;
  mutable long proposals_ = 0, accepted_ = 0, violations_ = 0;
};

// Clamp applied to sampled β so that energies stay positive.
inline constexpr double kBetaClamp = 0x1p-40;

}  // namespace mesokappa
