#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mesokappa/sampler.hpp"
#include "mesokappa/stats.hpp"

namespace mesokappa {

struct SimConfig {
  int N = 256;
  double T = 1.0;
  double t_max = 200.0;
  int replicas = 64;
  std::uint64_t seed = 1;
  std::string kernel = "gg3";
  // Geometric measurement grid for the single-origin variance and the trajectory output.
  int grid_points = 32;
  // Lag window of the time-origin estimator, in collision times 1/(κ_f √T).
  double lag_lo = 2.0;
  double lag_hi = 10.0;
  // Uniform sampling of Q_tot per collision time.
  int samples_per_collision = 4;
  int bootstrap = 256;

  void validate() const;
};

// Binary sum tree over bond rates. Parents are recomputed from their
// children on every update, so the root never accumulates drift.
class SumTree {
 public:
  SumTree() = default;
  explicit SumTree(const std::vector<double>& leaves);
  void update(std::size_t i, double value);
  double total() const { return tree_.empty() ? 0.0 : tree_[1]; }
  double leaf(std::size_t i) const { return tree_[size_ + i]; }
  // Index i with prefix(i) <= x < prefix(i+1), for 0 <= x < total().
  std::size_t find(double x) const;
  std::size_t size() const { return n_; }

 private:
  std::size_t n_ = 0, size_ = 0;
  std::vector<double> tree_;
};

struct ChainState {
  std::vector<double> energies;
  std::vector<double> bond_rates;     // ν(ε_b, ε_{b+1})
  std::vector<double> bond_currents;  // j(ε_b, ε_{b+1})
  SumTree rate_index;
  double time = 0.0;
  std::vector<CompensatedSum> transferred;  // Q_b, left to right
  CompensatedSum q_total;                   // Σ_b Q_b
  CompensatedSum current_integral;          // A(t) = ∫ Σ_b j dt
  CompensatedSum current_total;             // Σ_b j(ε_b, ε_{b+1})
  long long events = 0;

  std::size_t size() const { return energies.size(); }
  double total_energy() const;
};

struct EventRecord {
  std::uint32_t bond;
  double time;
  double eta;  // energy moved from site bond to site bond+1
};

// Rates of the bond (ε_a, ε_b): ν = √s ν̄(α), j = s^{3/2} J̄(α).
double bond_rate(const ExchangeSampler& s, double ea, double eb);
double bond_current(const ExchangeSampler& s, double ea, double eb);

ChainState init_equilibrium(const SimConfig& cfg, const ExchangeSampler& rates, RngStream& rng);

// Builds rates and the sum tree for given energies.
ChainState make_state(std::vector<double> energies, const ExchangeSampler& rates);

// One event of the jump process. draw supplies β; it is normally the same
// ExchangeSampler as rates.
EventRecord step(ChainState& s, const ExchangeSampler& rates, const BetaSampler& draw,
                 RngStream& rng);

// Advances to time t without an event past t; A(t) is integrated up to t.
void advance_to(ChainState& s, double t, const ExchangeSampler& rates, const BetaSampler& draw,
                RngStream& rng, std::ostream* event_log = nullptr);

// Little-endian record: u32 bond, f64 time, f64 η.
void write_event(std::ostream& os, const EventRecord& e);

class WrapAroundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SlopeFit {
  double kappa = 0.0;
  double std_error = 0.0;
  double t_lo = 0.0, t_hi = 0.0;
  // Slope difference between the two halves of the window, in standard errors.
  double curvature_z = 0.0;
  bool nonlinear = false;
};

struct TrajectoryPoint {
  int replica;
  double t;
  double q_total;
  double energy;
};

struct GreenKuboEstimate {
  std::string estimator;  // "direct" or "decomposed"
  double kappa_hat = 0.0;
  double std_error = 0.0;
  double t_lo = 0.0, t_hi = 0.0;

  SlopeFit direct;         // time-origin mean square displacement of Q_tot
  SlopeFit decomposed;     // κ_s - slope of the mean square displacement of A
  SlopeFit single_origin;  // Var(Q_tot(t)) over replicas on the geometric grid

  double kappa_s = 0.0;  // at temperature T
  double kappa_f = 0.0;  // at temperature T, i.e. ⟨ν⟩_T
  double event_rate = 0.0;  // events per bond per unit time
  double event_rate_stderr = 0.0;
  double max_energy_drift = 0.0;  // relative, worst replica
  double drift_per_million_events = 0.0;
  long long events = 0;
  bool single_origin_wrapped = false;

  std::vector<double> lags, msd_q, msd_a;  // replica means
  std::vector<double> grid_t, var_q;
  std::vector<TrajectoryPoint> trajectory;  // replica-major, geometric grid
};

struct GreenKuboOptions {
  std::string estimator = "direct";
  Execution exec = Execution::Parallel;
  // Static references at T = 1; computed from the kernel when left NaN.
  double kappa_s_unit = std::numeric_limits<double>::quiet_NaN();
  double kappa_f_unit = std::numeric_limits<double>::quiet_NaN();
  // Binary log of every event of replica 0.
  std::ostream* event_log = nullptr;
  bool keep_trajectory = true;
};

GreenKuboEstimate run_green_kubo(const SimConfig& cfg, const ExchangeSampler& sampler,
                                 const GreenKuboOptions& opt = {});

struct ScalingRow {
  double T;
  double kappa_hat;
  double std_error;
  double ratio;  // κ̂(T)/√T
  double ratio_stderr;
  double event_rate;
  double event_rate_stderr;
  double kappa_f_sqrt_t;
};

struct ScalingTable {
  std::vector<ScalingRow> rows;
  // Largest pairwise relative deviation of κ̂/√T; absent for a single row.
  std::optional<double> max_deviation;
};

// Runs each temperature for t_max/√T, so every row sees the same number of
// collisions. Row i uses seed base.seed + i, so the rows are independent.
ScalingTable scaling_check(const SimConfig& base, const ExchangeSampler& sampler,
                           const std::vector<double>& temperatures,
                           const GreenKuboOptions& opt = {});

// Thermal diffusivity D = (T²/χ_T) κ(T) = 2κ(T)/d with χ_T = dT²/2.
double diffusivity(double kappa_T, double T, int d);

struct InvarianceReport {
  KsResult two_sample;      // site energies at t = 0 against t = t_max
  KsResult one_sample;      // t = t_max against Gamma(d/2, T)
  double neighbour_cov = 0.0;
  double neighbour_cov_z = 0.0;
  long long events = 0;
  double max_energy_drift = 0.0;
  bool pass = false;
};

// Runs cfg.replicas chains of cfg.N sites for cfg.t_max from equilibrium and
// pools the site energies.
InvarianceReport equilibrium_invariance_test(const SimConfig& cfg, const ExchangeSampler& rates,
                                             const BetaSampler& draw,
                                             Execution exec = Execution::Parallel);

}  // namespace mesokappa
