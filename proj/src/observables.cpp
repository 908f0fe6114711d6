#include "mesokappa/observables.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "mesokappa/chebyshev.hpp"
#include "mesokappa/special.hpp"

namespace mesokappa {

QuadratureSpec static_spec() {
  QuadratureSpec s;
  s.abs_tol = 1e-11;
  s.rel_tol = 1e-11;
  return s;
}

namespace {

QuadratureSpec tighter(const QuadratureSpec& s, double factor) {
  QuadratureSpec t = s;
  t.abs_tol *= factor;
  t.rel_tol *= factor;
  return t;
}

// ∫_0^1 weight(p) W̄(p) dβ at the fractions held in ap.
template <class G>
QuadratureResult beta_integral(const Kernel& k, const SimplexPoint& ap, G weight,
                               const QuadratureSpec& spec) {
  const unsigned loci = k.loci_mask();
  const bool diag = loci & kLocusDiagonal, anti = loci & kLocusAntiDiagonal;
  double bps[3];
  std::size_t nb = 0;
  if (diag) bps[nb++] = ap.a;
  if (anti) bps[nb++] = ap.a1;
  if (loci & kLocusMidBeta) bps[nb++] = 0.5;
  auto f = [&](const AnchoredPoint& b) {
    const SimplexPoint p = simplex_point(ap, b, diag, anti);
    const double w = weight(p);
    return w == 0.0 ? 0.0 : w * k.reduced(p);
  };
  return integrate_1d(f, 0.0, 1.0, spec, std::span<const double>(bps, nb));
}

SimplexPoint fractions(double ea, double eb) {
  if (!(ea > 0.0) || !(eb > 0.0)) throw std::domain_error("pair observables need positive energies");
  const double s = ea + eb;
  SimplexPoint p{};
  p.a = ea / s;
  p.a1 = eb / s;
  return p;
}

double diff_power(const SimplexPoint& p, int n) {
  switch (n) {
    case 0: return 1.0;
    case 1: return p.diff;
    default: return p.diff * p.diff;
  }
}

QuadratureResult pair_moment(const Kernel& k, double ea, double eb, int n,
                             const QuadratureSpec& spec) {
  const SimplexPoint ap = fractions(ea, eb);
  auto r = beta_integral(k, ap, [n](const SimplexPoint& p) { return diff_power(p, n); }, spec);
  const double scale = std::pow(ea + eb, 0.5 + n);
  r.value *= scale;
  r.error *= scale;
  return r;
}

double gamma_ratio(int d, double m) {
  return std::exp(log_gamma(d + m) - 2.0 * log_gamma(0.5 * d));
}

template <class G>
QuadratureResult square_integral(const Kernel& k, G weight, const QuadratureSpec& spec,
                                 Execution exec) {
  return integrate_2d_unit_square(
      [&](const SimplexPoint& p) {
        const double w = weight(p);
        return w == 0.0 ? 0.0 : w * k.tilde(p);
      },
      spec, k.loci_mask(), exec);
}

QuadratureResult scaled(QuadratureResult r, double c) {
  r.value *= c;
  r.error *= std::abs(c);
  return r;
}

// x = -T log u, so that a Gamma(shape, T) weight becomes (-log u)^{shape-1}/Γ(shape) on (0,1).
double energy_from_u(const AnchoredPoint& u, double T) {
  if (u.anchor == 1.0) return -T * std::log1p(u.offset);
  return -T * std::log(u.x);
}

double gamma_weight_u(double x_over_T, double shape) {
  if (shape == 1.0) return 1.0;
  return std::exp((shape - 1.0) * std::log(x_over_T) - log_gamma(shape));
}

}  // namespace

QuadratureResult nu(const Kernel& k, double ea, double eb, const QuadratureSpec& spec) {
  return pair_moment(k, ea, eb, 0, spec);
}

QuadratureResult j(const Kernel& k, double ea, double eb, const QuadratureSpec& spec) {
  return pair_moment(k, ea, eb, 1, spec);
}

QuadratureResult h(const Kernel& k, double ea, double eb, const QuadratureSpec& spec) {
  return pair_moment(k, ea, eb, 2, spec);
}

QuadratureResult reduced_moment(const Kernel& k, double alpha, int p, const QuadratureSpec& spec) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("reduced_moment: alpha outside (0,1)");
  if (p < 0 || p > 2) throw std::invalid_argument("reduced_moment: p must be 0, 1 or 2");
  return beta_integral(k, simplex_point(alpha, alpha), [p](const SimplexPoint& q) { return diff_power(q, p); },
                       spec);
}

QuadratureResult kappa_f(const Kernel& k, const QuadratureSpec& spec, Execution exec) {
  return scaled(square_integral(k, [](const SimplexPoint&) { return 1.0; }, spec, exec),
                gamma_ratio(k.dimension(), 0.5));
}

QuadratureResult kappa_1(const Kernel& k, const QuadratureSpec& spec, Execution exec) {
  return scaled(
      square_integral(k, [](const SimplexPoint& p) { return (p.a - 0.5) * p.diff; }, spec, exec),
      gamma_ratio(k.dimension(), 2.5));
}

QuadratureResult kappa_2(const Kernel& k, const QuadratureSpec& spec, Execution exec) {
  return scaled(
      square_integral(k, [](const SimplexPoint& p) { return 0.5 * p.diff * p.diff; }, spec, exec),
      gamma_ratio(k.dimension(), 2.5));
}

StaticConductivity kappa_s(const Kernel& k, const QuadratureSpec& spec, Execution exec) {
  const auto a = kappa_1(k, spec, exec);
  const auto b = kappa_2(k, spec, exec);
  StaticConductivity r;
  r.value = a.value;
  r.error = a.error;
  r.via_h = b.value;
  r.via_h_error = b.error;
  r.converged = a.converged && b.converged;
  r.discrepancy = std::abs(a.value - b.value);
  const double floor = std::max(spec.abs_tol, spec.rel_tol * std::abs(a.value));
  r.warning = r.discrepancy > 2.0 * (a.error + b.error) + 10.0 * floor;
  return r;
}

QuadratureResult check_identity(const Kernel& k, const QuadratureSpec& spec, Execution exec) {
  return square_integral(k, [](const SimplexPoint& p) { return p.diff; }, spec, exec);
}

Condition34 check_condition_3_4(const Kernel& k, const QuadratureSpec& spec, Execution exec) {
  const double d = k.dimension();
  const auto lhs = square_integral(k, [](const SimplexPoint&) { return 1.0; }, spec, exec);
  const auto rhs = scaled(
      square_integral(k, [](const SimplexPoint& p) { return p.a * p.diff; }, spec, exec),
      (d + 1.5) * (d + 0.5));
  Condition34 c;
  c.lhs = lhs.value;
  c.rhs = rhs.value;
  c.residual = lhs.value - rhs.value;
  c.error = lhs.error + rhs.error;
  c.converged = lhs.converged && rhs.converged;
  return c;
}

QuadratureResult tilde_j(const Kernel& k, double eps, const QuadratureSpec& spec) {
  if (!(eps > 0.0)) throw std::domain_error("tilde_j: energy must be positive");
  const double shape = 0.5 * k.dimension();
  const QuadratureSpec inner = tighter(spec, 0.1);
  bool inner_ok = true;
  double inner_err = 0.0;
  auto f = [&](const AnchoredPoint& u) {
    const double x = energy_from_u(u, 1.0);
    if (!(x > 0.0)) return 0.0;
    const auto r = j(k, eps, x, inner);
    inner_ok = inner_ok && r.converged;
    inner_err = std::max(inner_err, r.error);
    return r.value * gamma_weight_u(x, shape);
  };
  const double kink[1] = {std::exp(-eps)};
  auto r = integrate_1d(f, 0.0, 1.0, spec, kink);
  r.converged = r.converged && inner_ok;
  r.error += inner_err;
  return r;
}

namespace {

// Energies beyond this carry Gamma(d) weight far below round-off.
constexpr double kEnergyCutoff = 60.0;

struct TildeTable {
  Chebyshev cheb;  // in t = √ε on [0, √cutoff]
  double max_error = 0.0;
  bool converged = true;
};

TildeTable tabulate_tilde_j(const Kernel& k, const QuadratureSpec& spec, Execution exec) {
  const double hi = std::sqrt(kEnergyCutoff);
  auto direct = [&](double t, bool& ok) {
    const auto r = tilde_j(k, t * t, spec);
    ok = ok && r.converged;
    return r.value;
  };
  TildeTable tab;
  for (int n = 32;; n *= 2) {
    const auto nodes = Chebyshev::nodes(0.0, hi, n);
    std::vector<double> vals(nodes.size());
    std::vector<char> ok(nodes.size(), 1);
    detail::for_each_index(static_cast<long>(nodes.size()), exec, [&](long i) {
      bool good = true;
      vals[i] = direct(nodes[i], good);
      ok[i] = good;
    });
    tab.cheb = Chebyshev::from_values(vals, 0.0, hi);
    // Probe halfway between neighbouring nodes, where interpolation error peaks.
    const int probes = 24;
    std::vector<double> errs(probes), scale(probes);
    std::vector<char> probe_ok(probes, 1);
    detail::for_each_index(probes, exec, [&](long i) {
      const long m = 1 + (i * (n - 1)) / (probes - 1);
      const double t = 0.5 * (nodes[m - 1] + nodes[m]);
      bool good = true;
      const double v = direct(t, good);
      errs[i] = std::abs(tab.cheb(t) - v);
      scale[i] = std::max(spec.abs_tol, spec.rel_tol * std::abs(v));
      probe_ok[i] = good;
    });
    ok.insert(ok.end(), probe_ok.begin(), probe_ok.end());
    tab.max_error = 0.0;
    bool resolved = true;
    for (int i = 0; i < probes; ++i) {
      tab.max_error = std::max(tab.max_error, errs[i]);
      resolved = resolved && errs[i] <= 10.0 * scale[i];
    }
    tab.converged = std::all_of(ok.begin(), ok.end(), [](char c) { return c != 0; });
    if (resolved || n >= 256) {
      tab.converged = tab.converged && resolved;
      break;
    }
  }
  return tab;
}

}  // namespace

GradientDefect gradient_defect(const Kernel& k, const QuadratureSpec& spec, Execution exec) {
  const int d = k.dimension();
  const double half = 0.5 * d;
  const TildeTable tab = tabulate_tilde_j(k, spec, exec);
  auto jt = [&](double e) { return tab.cheb(std::sqrt(e)); };

  // Outer α with Beta(d/2, d/2) weight; inner s = ε_0 + ε_1 with Gamma(d) weight.
  const double log_beta = 2.0 * log_gamma(half) - log_gamma(d);
  const QuadratureSpec inner = tighter(spec, 0.1);
  const double u_min = std::exp(-kEnergyCutoff);
  const double s3_moment = gamma_moment(d, 3.0);
  std::vector<QuadratureResult> info;
  auto outer = [&](std::span<const AnchoredPoint> xs, std::span<double> out) {
    std::vector<QuadratureResult> local(xs.size());
    detail::for_each_index(static_cast<long>(xs.size()), exec, [&](long i) {
      const double a = xs[i].anchor == 0.0 ? xs[i].offset : xs[i].x;
      const double a1 = xs[i].anchor == 1.0 ? -xs[i].offset : 1.0 - a;
      const SimplexPoint fr{a, a1, 0.0, 0.0, 0.0, 0.0};
      const auto cur = beta_integral(k, fr, [](const SimplexPoint& p) { return p.diff; }, tighter(inner, 0.1));
      const double jbar = cur.value;
      auto g = [&](const AnchoredPoint& u) {
        const double s = energy_from_u(u, 1.0);
        const double defect = std::pow(s, 1.5) * jbar + jt(s * a1) - jt(s * a);
        return defect * defect * std::exp((d - 1) * std::log(s) - log_gamma(d));
      };
      auto r = integrate_1d(g, u_min, 1.0, inner);
      r.converged = r.converged && cur.converged;
      // Cauchy-Schwarz bound on the effect of the error in J̄.
      r.error += 2.0 * std::sqrt(std::abs(r.value) * s3_moment) * cur.error;
      const double w = std::exp((half - 1.0) * std::log(a * a1) - log_beta);
      r.value *= w;
      r.error *= w;
      local[i] = r;
      out[i] = r.value;
    });
    info.insert(info.end(), local.begin(), local.end());
  };
  detail::Adaptive<decltype(outer)> engine(outer, spec);
  const double mid[1] = {0.5};
  const auto res = engine.run(0.0, 1.0, mid);

  GradientDefect g;
  g.value = std::max(0.0, res.value);
  double inner_err = 0.0;
  bool ok = res.converged && tab.converged;
  for (const auto& r : info) {
    inner_err = std::max(inner_err, r.error);
    ok = ok && r.converged;
  }
  g.interpolation_error = tab.max_error;
  // A perturbation δ of j̃ moves the defect by at most 4√defect·δ + 4δ².
  const double dj = tab.max_error;
  g.error = res.error + inner_err + 4.0 * std::sqrt(g.value) * dj + 4.0 * dj * dj;
  g.converged = ok;

  auto mean_integrand = [&](const AnchoredPoint& u) {
    const double e = energy_from_u(u, 1.0);
    return jt(e) * gamma_weight_u(e, half);
  };
  g.tilde_j_mean = integrate_1d(mean_integrand, u_min, 1.0, spec).value;
  return g;
}

namespace {

GradientVerdict gradient_verdict(const Kernel& k, double defect, double tol,
                                 const QuadratureSpec& spec) {
  GradientVerdict v;
  v.defect = defect;
  if (v.defect > tol) return v;
  const double grid[] = {0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
  const QuadratureSpec tight = tighter(spec, 0.01);
  std::vector<double> js, gs;
  for (double ea : grid)
    for (double eb : grid) {
      if (ea == eb) continue;
      js.push_back(j(k, ea, eb, tight).value);
      gs.push_back(std::pow(ea, 1.5) - std::pow(eb, 1.5));
    }
  double jg = 0.0, gg = 0.0, jj = 0.0;
  for (std::size_t i = 0; i < js.size(); ++i) {
    jg += js[i] * gs[i];
    gg += gs[i] * gs[i];
    jj += js[i] * js[i];
  }
  const double C = jg / gg;
  double rr = 0.0;
  for (std::size_t i = 0; i < js.size(); ++i) rr += (js[i] - C * gs[i]) * (js[i] - C * gs[i]);
  v.fit_residual = jj > 0.0 ? std::sqrt(rr / jj) : 0.0;
  if (v.fit_residual > tol)
    throw GradientInconsistency("kernel " + k.name() +
                                ": gradient defect vanishes but j is not C(ea^1.5 - eb^1.5); "
                                "relative fit residual " +
                                std::to_string(v.fit_residual));
  v.gradient = true;
  v.C = C;
  return v;
}

}  // namespace

GradientVerdict is_gradient(const Kernel& k, double tol, const QuadratureSpec& spec,
                            Execution exec) {
  return gradient_verdict(k, gradient_defect(k, spec, exec).value, tol, spec);
}

QuadratureResult pair_average(const Kernel& k, PairAverage which, double T,
                              const QuadratureSpec& spec, Execution exec) {
  if (!(T > 0.0)) throw std::domain_error("pair_average: temperature must be positive");
  const double shape = 0.5 * k.dimension();
  const QuadratureSpec mid_spec = tighter(spec, 0.1);
  const QuadratureSpec pair_spec = tighter(spec, 0.01);
  auto pair_value = [&](double e0, double e1, QuadratureResult& r) {
    switch (which) {
      case PairAverage::CollisionRate:
        r = nu(k, e0, e1, pair_spec);
        return r.value;
      case PairAverage::HalfFluxMoment:
        r = j(k, e0, e1, pair_spec);
        return 0.5 * (e0 - e1) * r.value;
      default:
        r = h(k, e0, e1, pair_spec);
        return 0.5 * r.value;
    }
  };

  std::vector<QuadratureResult> info;
  auto outer = [&](std::span<const AnchoredPoint> xs, std::span<double> out) {
    std::vector<QuadratureResult> local(xs.size());
    detail::for_each_index(static_cast<long>(xs.size()), exec, [&](long i) {
      const double e0 = energy_from_u(xs[i], T);
      if (!(e0 > 0.0)) {
        out[i] = 0.0;
        return;
      }
      double worst = 0.0;
      bool ok = true;
      auto g = [&](const AnchoredPoint& u) {
        const double e1 = energy_from_u(u, T);
        if (!(e1 > 0.0)) return 0.0;
        QuadratureResult r;
        const double v = pair_value(e0, e1, r);
        worst = std::max(worst, r.error);
        ok = ok && r.converged;
        return v * gamma_weight_u(e1 / T, shape);
      };
      // Every average is of a function symmetric in the two energies, so
      // the region ε_1 < ε_0 counts twice.
      auto r = integrate_1d(g, xs[i].x, 1.0, mid_spec);
      r.value *= 2.0;
      r.error *= 2.0;
      r.error += worst;
      r.converged = r.converged && ok;
      const double w = gamma_weight_u(e0 / T, shape);
      r.value *= w;
      r.error *= w;
      local[i] = r;
      out[i] = r.value;
    });
    info.insert(info.end(), local.begin(), local.end());
  };
  detail::Adaptive<decltype(outer)> engine(outer, spec);
  auto res = engine.run(0.0, 1.0, {});
  double worst = 0.0;
  for (const auto& r : info) {
    worst = std::max(worst, r.error);
    res.converged = res.converged && r.converged;
  }
  res.error += worst;
  return res;
}

bool StaticReport::all_converged() const {
  return kappa_f.converged && kappa_1.converged && kappa_2.converged && kappa_s.converged &&
         identity_residual.converged && cond34.converged && defect.converged;
}

StaticReport static_report(const Kernel& k, const QuadratureSpec& spec, Execution exec) {
  auto entry = [](const QuadratureResult& r) { return Entry{r.value, r.error, r.converged}; };
  StaticReport rep;
  rep.kernel = k.name();
  rep.d = k.dimension();
  rep.kappa_f = entry(kappa_f(k, spec, exec));
  rep.kappa_s = kappa_s(k, spec, exec);
  rep.kappa_1 = Entry{rep.kappa_s.value, rep.kappa_s.error, rep.kappa_s.converged};
  rep.kappa_2 = Entry{rep.kappa_s.via_h, rep.kappa_s.via_h_error, rep.kappa_s.converged};
  rep.identity_residual = entry(check_identity(k, spec, exec));
  rep.cond34 = check_condition_3_4(k, spec, exec);
  rep.defect = gradient_defect(k, spec, exec);
  rep.gradient = gradient_verdict(k, rep.defect.value, 1e-8, spec);
  return rep;
}

}  // namespace mesokappa
