#include "mesokappa/simulator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <ostream>
#include <sstream>

#include "mesokappa/observables.hpp"
#include "mesokappa/special.hpp"

namespace mesokappa {

void SimConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("SimConfig: " + m); };
  if (N < 3) fail("N must be at least 3");
  if (!(T > 0.0) || !std::isfinite(T)) fail("T must be positive");
  if (!(t_max > 0.0) || !std::isfinite(t_max)) fail("t_max must be positive");
  if (replicas < 2) fail("at least 2 replicas are needed for a variance");
  if (grid_points < 2) fail("grid_points must be at least 2");
  if (!(lag_lo > 0.0 && lag_hi > lag_lo)) fail("need 0 < lag_lo < lag_hi");
  if (samples_per_collision < 1) fail("samples_per_collision must be positive");
  if (bootstrap < 10) fail("bootstrap must be at least 10");
}

SumTree::SumTree(const std::vector<double>& leaves) : n_(leaves.size()) {
  size_ = std::bit_ceil(std::max<std::size_t>(n_, 1));
  tree_.assign(2 * size_, 0.0);
  std::copy(leaves.begin(), leaves.end(), tree_.begin() + size_);
  for (std::size_t i = size_ - 1; i >= 1; --i) tree_[i] = tree_[2 * i] + tree_[2 * i + 1];
}

void SumTree::update(std::size_t i, double value) {
  std::size_t p = size_ + i;
  tree_[p] = value;
  for (p /= 2; p >= 1; p /= 2) tree_[p] = tree_[2 * p] + tree_[2 * p + 1];
}

std::size_t SumTree::find(double x) const {
  std::size_t p = 1;
  while (p < size_) {
    if (x < tree_[2 * p]) {
      p = 2 * p;
    } else {
      x -= tree_[2 * p];
      p = 2 * p + 1;
    }
  }
  std::size_t i = std::min(p - size_, n_ - 1);
  // Rounding can push x past the last positive leaf.
  while (i > 0 && tree_[size_ + i] <= 0.0) --i;
  return i;
}

double ChainState::total_energy() const {
  CompensatedSum e;
  for (double x : energies) e.add(x);
  return e.value();
}

double bond_rate(const ExchangeSampler& s, double ea, double eb) {
  const double sum = ea + eb;
  return std::sqrt(sum) * s.nu_bar(ea / sum);
}

double bond_current(const ExchangeSampler& s, double ea, double eb) {
  const double sum = ea + eb;
  return sum * std::sqrt(sum) * s.current_bar(ea / sum);
}

ChainState make_state(std::vector<double> energies, const ExchangeSampler& rates) {
  ChainState s;
  const std::size_t n = energies.size();
  if (n < 3) throw std::invalid_argument("make_state: ring needs at least 3 sites");
  for (double e : energies)
    if (!(e > 0.0) || !std::isfinite(e)) throw std::domain_error("make_state: energies must be positive");
  s.energies = std::move(energies);
  s.bond_rates.resize(n);
  s.bond_currents.resize(n);
  for (std::size_t b = 0; b < n; ++b) {
    const double ea = s.energies[b], eb = s.energies[(b + 1) % n];
    s.bond_rates[b] = bond_rate(rates, ea, eb);
    s.bond_currents[b] = bond_current(rates, ea, eb);
    s.current_total.add(s.bond_currents[b]);
  }
  s.rate_index = SumTree(s.bond_rates);
  s.transferred.assign(n, CompensatedSum{});
  return s;
}

ChainState init_equilibrium(const SimConfig& cfg, const ExchangeSampler& rates, RngStream& rng) {
  cfg.validate();
  const double shape = rates.kernel().dimension() / 2.0;
  std::vector<double> e(cfg.N);
  for (auto& x : e) x = sample_gamma(shape, cfg.T, rng);
  return make_state(std::move(e), rates);
}

namespace {

void refresh_bond(ChainState& s, const ExchangeSampler& rates, std::size_t b) {
  const std::size_t n = s.size();
  const double ea = s.energies[b], eb = s.energies[(b + 1) % n];
  const double r = bond_rate(rates, ea, eb);
  const double c = bond_current(rates, ea, eb);
  s.bond_rates[b] = r;
  s.rate_index.update(b, r);
  s.current_total.add(-s.bond_currents[b]);
  s.current_total.add(c);
  s.bond_currents[b] = c;
}

EventRecord exchange(ChainState& s, const ExchangeSampler& rates, const BetaSampler& draw,
                     RngStream& rng, double total_rate) {
  const std::size_t n = s.size();
  const std::size_t b = s.rate_index.find(rng.uniform() * total_rate);
  const std::size_t r = (b + 1) % n;
  const double ea = s.energies[b], eb = s.energies[r];
  const double sum = ea + eb;
  const double beta = draw.sample(ea / sum, rng);
  // Sterbenz: the larger share is recomputed as a difference, so left + right == sum.
  double left = sum * beta;
  const double right = sum - left;
  if (left <= 0.5 * sum) left = sum - right;
  if (!(left > 0.0 && right > 0.0)) throw std::logic_error("step: non-positive energy after exchange");
  const double eta = ea - left;
  s.energies[b] = left;
  s.energies[r] = right;
  s.transferred[b].add(eta);
  s.q_total.add(eta);
  ++s.events;
  refresh_bond(s, rates, (b + n - 1) % n);
  refresh_bond(s, rates, b);
  refresh_bond(s, rates, r);
  return {static_cast<std::uint32_t>(b), s.time, eta};
}

}  // namespace

EventRecord step(ChainState& s, const ExchangeSampler& rates, const BetaSampler& draw,
                 RngStream& rng) {
  const double R = s.rate_index.total();
  if (!(R > 0.0)) throw std::logic_error("step: total rate is zero");
  const double dt = rng.exponential(R);
  s.current_integral.add(s.current_total.value() * dt);
  s.time += dt;
  return exchange(s, rates, draw, rng, R);
}

void advance_to(ChainState& s, double t, const ExchangeSampler& rates, const BetaSampler& draw,
                RngStream& rng, std::ostream* event_log) {
  for (;;) {
    const double R = s.rate_index.total();
    const double dt = rng.exponential(R);
    if (s.time + dt > t) {
      // The waiting time is memoryless, so the overshooting draw is discarded.
      s.current_integral.add(s.current_total.value() * (t - s.time));
      s.time = t;
      return;
    }
    s.current_integral.add(s.current_total.value() * dt);
    s.time += dt;
    const EventRecord e = exchange(s, rates, draw, rng, R);
    if (event_log) write_event(*event_log, e);
  }
}

void write_event(std::ostream& os, const EventRecord& e) {
  static_assert(std::endian::native == std::endian::little, "event log assumes a little-endian host");
  char buf[20];
  std::memcpy(buf, &e.bond, 4);
  std::memcpy(buf + 4, &e.time, 8);
  std::memcpy(buf + 12, &e.eta, 8);
  os.write(buf, sizeof buf);
}

namespace {

struct Line {
  double slope, intercept;
};

Line ols(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  const double b = sxy / sxx;
  return {b, my - b * mx};
}

struct Replica {
  std::vector<double> msd_q, msd_a;  // per lag
  std::vector<double> grid_q, grid_e;
  long long events = 0;
  double drift = 0.0;
};

// Slope fits over curves averaged on a resampled replica set.
struct Curves {
  std::vector<double> q, a, single;
};

template <class Pick>
Curves average(const std::vector<Replica>& reps, std::size_t lags, std::size_t grid, Pick pick) {
  Curves c{std::vector<double>(lags, 0.0), std::vector<double>(lags, 0.0),
           std::vector<double>(grid, 0.0)};
  const std::size_t R = reps.size();
  for (std::size_t i = 0; i < R; ++i) {
    const Replica& r = reps[pick(i)];
    for (std::size_t l = 0; l < lags; ++l) {
      c.q[l] += r.msd_q[l] / R;
      c.a[l] += r.msd_a[l] / R;
    }
    for (std::size_t g = 0; g < grid; ++g) c.single[g] += r.grid_q[g] * r.grid_q[g] / R;
  }
  return c;
}

struct Fits {
  double direct, decomposed, single;
  double direct_bend, decomposed_bend, single_bend;
};

}  // namespace

GreenKuboEstimate run_green_kubo(const SimConfig& cfg, const ExchangeSampler& sampler,
                                 const GreenKuboOptions& opt) {
  cfg.validate();
  if (opt.estimator != "direct" && opt.estimator != "decomposed")
    throw std::invalid_argument("run_green_kubo: estimator must be 'direct' or 'decomposed'");
  const Kernel& k = sampler.kernel();
  const int d = k.dimension();
  const double sqrtT = std::sqrt(cfg.T);

  GreenKuboEstimate est;
  est.estimator = opt.estimator;
  const double kf = std::isnan(opt.kappa_f_unit) ? kappa_f(k).value : opt.kappa_f_unit;
  const double ks = std::isnan(opt.kappa_s_unit) ? kappa_s(k).value : opt.kappa_s_unit;
  est.kappa_f = kf * sqrtT;
  est.kappa_s = ks * sqrtT;

  // Uniform sampling grid and lag window.
  const double tau_c = 1.0 / est.kappa_f;
  const double dt = tau_c / cfg.samples_per_collision;
  const long M = static_cast<long>(std::floor(cfg.t_max / dt));
  const long m_lo = std::max<long>(1, std::lround(std::ceil(cfg.lag_lo * cfg.samples_per_collision)));
  const long m_hi = std::lround(std::floor(cfg.lag_hi * cfg.samples_per_collision));
  if (m_hi - m_lo < 3) throw std::invalid_argument("run_green_kubo: lag window holds fewer than 4 lags");
  if (2 * m_hi > M)
    throw std::invalid_argument("run_green_kubo: t_max must be at least twice the largest lag (" +
                                std::to_string(2 * m_hi * dt) + ")");
  est.t_lo = m_lo * dt;
  est.t_hi = m_hi * dt;

  // Wrap-around: the diffusion length over the window must stay well inside the ring.
  const double D = 2.0 * est.kappa_s / d;
  const double spread = std::sqrt(2.0 * D * est.t_hi);
  if (spread > cfg.N / 4.0) {
    const int need = static_cast<int>(std::ceil(4.0 * spread));
    throw WrapAroundError("run_green_kubo: diffusion length " + std::to_string(spread) +
                          " over the lag window exceeds N/4; increase N to at least " +
                          std::to_string(need));
  }
  est.single_origin_wrapped = std::sqrt(2.0 * D * cfg.t_max) > cfg.N / 4.0;

  // Measurement grid: t = 0, then geometric from one collision time to t_max.
  const int G = cfg.grid_points;
  est.grid_t.resize(G);
  est.grid_t[0] = 0.0;
  const double t0 = std::min(tau_c, cfg.t_max);
  for (int g = 1; g < G; ++g)
    est.grid_t[g] = G == 2 ? cfg.t_max : t0 * std::pow(cfg.t_max / t0, (g - 1.0) / (G - 2.0));
  est.grid_t[G - 1] = cfg.t_max;

  const long L = m_hi - m_lo + 1;
  std::vector<Replica> reps(cfg.replicas);
  detail::for_each_index(cfg.replicas, opt.exec, [&](long r) {
    RngStream rng(cfg.seed, static_cast<std::uint64_t>(r));
    ChainState s = init_equilibrium(cfg, sampler, rng);
    const double e0 = s.total_energy();
    std::ostream* log = r == 0 ? opt.event_log : nullptr;

    // Merge the uniform and geometric grids in time order.
    std::vector<double> q(M + 1), a(M + 1);
    Replica& out = reps[r];
    out.grid_q.assign(G, 0.0);
    out.grid_e.assign(G, 0.0);
    long m = 0;
    int g = 0;
    while (m <= M || g < G) {
      const double tm = m <= M ? m * dt : INFINITY;
      const double tg = g < G ? est.grid_t[g] : INFINITY;
      const double t = std::min(tm, tg);
      advance_to(s, t, sampler, sampler, rng, log);
      if (tm == t) {
        q[m] = s.q_total.value();
        a[m] = s.current_integral.value();
        ++m;
      }
      if (tg == t) {
        out.grid_q[g] = s.q_total.value();
        out.grid_e[g] = s.total_energy();
        ++g;
      }
    }
    advance_to(s, cfg.t_max, sampler, sampler, rng, log);

    out.msd_q.assign(L, 0.0);
    out.msd_a.assign(L, 0.0);
    for (long l = 0; l < L; ++l) {
      const long lag = m_lo + l;
      double sq = 0.0, sa = 0.0;
      for (long i = 0; i + lag <= M; ++i) {
        const double dq = q[i + lag] - q[i], da = a[i + lag] - a[i];
        sq += dq * dq;
        sa += da * da;
      }
      out.msd_q[l] = sq / (M - lag + 1);
      out.msd_a[l] = sa / (M - lag + 1);
    }
    out.events = s.events;
    out.drift = std::abs(s.total_energy() - e0) / e0;
  });

  std::vector<double> lag_t(L);
  for (long l = 0; l < L; ++l) lag_t[l] = (m_lo + l) * dt;
  std::vector<double> fit_t;
  std::vector<std::size_t> fit_g;
  for (int g = 0; g < G; ++g)
    if (est.grid_t[g] >= 0.2 * cfg.t_max) {
      fit_t.push_back(est.grid_t[g]);
      fit_g.push_back(g);
    }
  const double norm = 2.0 * cfg.T * cfg.T * cfg.N;

  auto fit = [&](const Curves& c) {
    Fits f{};
    const std::size_t h = L / 2;
    auto slope = [](std::span<const double> x, std::span<const double> y) { return ols(x, y).slope; };
    const std::span<const double> t(lag_t);
    f.direct = slope(t, c.q) / norm;
    f.decomposed = est.kappa_s - slope(t, c.a) / norm;
    f.direct_bend = (slope(t.subspan(h), std::span(c.q).subspan(h)) -
                     slope(t.first(h + 1), std::span(c.q).first(h + 1))) / norm;
    f.decomposed_bend = (slope(t.first(h + 1), std::span(c.a).first(h + 1)) -
                         slope(t.subspan(h), std::span(c.a).subspan(h))) / norm;
    if (fit_t.size() >= 2) {
      std::vector<double> y;
      for (auto g : fit_g) y.push_back(c.single[g]);
      f.single = slope(fit_t, y) / norm;
      if (fit_t.size() >= 4) {
        const std::size_t hh = fit_t.size() / 2;
        f.single_bend = (slope(std::span(fit_t).subspan(hh), std::span(y).subspan(hh)) -
                         slope(std::span(fit_t).first(hh + 1), std::span(y).first(hh + 1))) / norm;
      }
    }
    return f;
  };

  const std::size_t R = reps.size();
  const Curves full = average(reps, L, G, [](std::size_t i) { return i; });
  const Fits central = fit(full);

  // Replica bootstrap; resampling indices come from a stream reserved for it.
  RngStream boot(cfg.seed, std::uint64_t{1} << 62);
  std::vector<Fits> draws(cfg.bootstrap);
  for (auto& f : draws) {
    std::vector<std::size_t> pick(R);
    for (auto& p : pick) p = std::min(R - 1, static_cast<std::size_t>(boot.uniform() * R));
    f = fit(average(reps, L, G, [&](std::size_t i) { return pick[i]; }));
  }
  auto spread_of = [&](double Fits::*field) {
    std::vector<double> v;
    for (const auto& f : draws) v.push_back(f.*field);
    return std::sqrt(sample_variance(v));
  };
  auto make = [&](double Fits::*value, double Fits::*bend, double lo, double hi) {
    SlopeFit s;
    s.kappa = central.*value;
    s.std_error = spread_of(value);
    s.t_lo = lo;
    s.t_hi = hi;
    const double bs = spread_of(bend);
    s.curvature_z = bs > 0.0 ? std::abs(central.*bend) / bs : 0.0;
    s.nonlinear = s.curvature_z > 3.0;
    return s;
  };
  est.direct = make(&Fits::direct, &Fits::direct_bend, est.t_lo, est.t_hi);
  est.decomposed = make(&Fits::decomposed, &Fits::decomposed_bend, est.t_lo, est.t_hi);
  if (fit_t.size() >= 2)
    est.single_origin = make(&Fits::single, &Fits::single_bend, fit_t.front(), fit_t.back());

  const SlopeFit& chosen = opt.estimator == "direct" ? est.direct : est.decomposed;
  est.kappa_hat = chosen.kappa;
  est.std_error = chosen.std_error;
  if (!(est.std_error > 0.0) || !std::isfinite(est.kappa_hat))
    throw std::runtime_error("run_green_kubo: degenerate estimate; increase replicas or t_max");

  est.lags = lag_t;
  est.msd_q = full.q;
  est.msd_a = full.a;
  est.var_q = full.single;

  std::vector<double> rate(R);
  for (std::size_t r = 0; r < R; ++r) {
    rate[r] = reps[r].events / (cfg.N * cfg.t_max);
    est.events += reps[r].events;
    est.max_energy_drift = std::max(est.max_energy_drift, reps[r].drift);
    if (reps[r].events > 0)
      est.drift_per_million_events =
          std::max(est.drift_per_million_events, reps[r].drift * 1e6 / std::max(1e6, double(reps[r].events)));
  }
  est.event_rate = mean(rate);
  est.event_rate_stderr = std::sqrt(sample_variance(rate) / R);

  if (opt.keep_trajectory) {
    est.trajectory.reserve(R * G);
    for (std::size_t r = 0; r < R; ++r)
      for (int g = 0; g < G; ++g)
        est.trajectory.push_back({static_cast<int>(r), est.grid_t[g], reps[r].grid_q[g], reps[r].grid_e[g]});
  }
  return est;
}

ScalingTable scaling_check(const SimConfig& base, const ExchangeSampler& sampler,
                           const std::vector<double>& temperatures, const GreenKuboOptions& opt) {
  if (temperatures.empty()) throw std::invalid_argument("scaling_check: no temperatures");
  GreenKuboOptions o = opt;
  const Kernel& k = sampler.kernel();
  if (std::isnan(o.kappa_f_unit)) o.kappa_f_unit = kappa_f(k).value;
  if (std::isnan(o.kappa_s_unit)) o.kappa_s_unit = kappa_s(k).value;
  o.keep_trajectory = false;
  ScalingTable table;
  for (std::size_t i = 0; i < temperatures.size(); ++i) {
    const double T = temperatures[i];
    SimConfig cfg = base;
    cfg.T = T;
    cfg.seed = base.seed + i;
    // Same number of collisions per replica at every temperature.
    cfg.t_max = base.t_max / std::sqrt(T);
    const auto e = run_green_kubo(cfg, sampler, o);
    const double rt = std::sqrt(T);
    table.rows.push_back({T, e.kappa_hat, e.std_error, e.kappa_hat / rt, e.std_error / rt, e.event_rate,
                          e.event_rate_stderr, e.kappa_f});
  }
  if (table.rows.size() >= 2) {
    double worst = 0.0;
    for (const auto& a : table.rows)
      for (const auto& b : table.rows)
        worst = std::max(worst, std::abs(a.ratio - b.ratio) / std::min(a.ratio, b.ratio));
    table.max_deviation = worst;
  }
  return table;
}

double diffusivity(double kappa_T, double T, int d) {
  if (!(T > 0.0)) throw std::domain_error("diffusivity: T must be positive");
  if (d < 1) throw std::domain_error("diffusivity: d must be positive");
  return 2.0 * kappa_T / d;
}

InvarianceReport equilibrium_invariance_test(const SimConfig& cfg, const ExchangeSampler& rates,
                                             const BetaSampler& draw, Execution exec) {
  cfg.validate();
  const int R = cfg.replicas, N = cfg.N;
  std::vector<double> before(static_cast<std::size_t>(R) * N), after(before.size());
  std::vector<long long> events(R);
  std::vector<double> drift(R);
  detail::for_each_index(R, exec, [&](long r) {
    RngStream rng(cfg.seed, static_cast<std::uint64_t>(r));
    ChainState s = init_equilibrium(cfg, rates, rng);
    const double e0 = s.total_energy();
    std::copy(s.energies.begin(), s.energies.end(), before.begin() + r * N);
    advance_to(s, cfg.t_max, rates, draw, rng);
    std::copy(s.energies.begin(), s.energies.end(), after.begin() + r * N);
    events[r] = s.events;
    drift[r] = std::abs(s.total_energy() - e0) / e0;
  });

  InvarianceReport rep;
  for (int r = 0; r < R; ++r) {
    rep.events += events[r];
    rep.max_energy_drift = std::max(rep.max_energy_drift, drift[r]);
  }
  // One site pair per replica keeps the correlation samples independent.
  std::vector<double> prod;
  std::vector<double> first, second;
  for (int r = 0; r < R; ++r)
    for (int i = 0; i + 1 < N; i += 2) {
      first.push_back(after[r * N + i]);
      second.push_back(after[r * N + i + 1]);
    }
  const double m1 = mean(first), m2 = mean(second);
  for (std::size_t i = 0; i < first.size(); ++i) prod.push_back((first[i] - m1) * (second[i] - m2));
  rep.neighbour_cov = mean(prod);
  rep.neighbour_cov_z = rep.neighbour_cov / std::sqrt(sample_variance(prod) / prod.size());

  const double shape = rates.kernel().dimension() / 2.0;
  rep.one_sample = ks_one_sample(after, [&](double x) { return gamma_cdf(shape, cfg.T, x); });
  rep.two_sample = ks_two_sample(std::move(before), std::move(after));
  rep.pass = rep.two_sample.p_value > 0.01 && rep.one_sample.p_value > 0.01 &&
             std::abs(rep.neighbour_cov_z) < 5.0;
  return rep;
}

}  // namespace mesokappa
