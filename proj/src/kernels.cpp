#include "mesokappa/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "mesokappa/special.hpp"

namespace mesokappa {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double gg2_reduced(const SimplexPoint& p) {
  // Values and their identities: 0 = α, 1 = 1-α, 2 = β, 3 = 1-β.
  const double v[4] = {p.a, p.a1, p.b, p.b1};
  int lo = 0;
  for (int i = 1; i < 4; ++i)
    if (v[i] < v[lo]) lo = i;
  const int ab = v[0] <= v[2] ? 0 : 2;
  const int cd = v[1] <= v[3] ? 1 : 3;
  const int hi = v[ab] >= v[cd] ? ab : cd;
  const double big = v[hi];
  double gap;
  if (lo == hi) {
    gap = 0.0;
  } else {
    const int pair = (1 << lo) | (1 << hi);
    switch (pair) {
      case 0b0101:  // α, β
      case 0b1010:  // 1-α, 1-β
        gap = std::abs(p.diff);
        break;
      case 0b1001:  // α, 1-β
      case 0b0110:  // 1-α, β
        gap = std::abs(p.anti);
        break;
      case 0b0011:
        gap = std::abs(p.a1 - p.a);
        break;
      default:
        gap = std::abs(p.b1 - p.b);
        break;
    }
  }
  if (!(gap > 0.0)) return kInf;
  const double kc = std::sqrt(std::min(1.0, gap / big));
  return std::sqrt(2.0 / (std::numbers::pi * std::numbers::pi * std::numbers::pi)) /
         std::sqrt(big) * elliptic_K_from_complement(kc);
}

const double kGg3 = std::sqrt(std::numbers::pi / 8.0);

double gg3_reduced(const SimplexPoint& p) {
  const double m = std::min({p.a, p.a1, p.b, p.b1});
  return kGg3 * std::sqrt(m / (p.a * p.a1));
}

double gg3_nu_bar(double alpha) {
  const double a = std::min(alpha, 1.0 - alpha);
  return kGg3 * (1.0 - 2.0 * a / 3.0) / std::sqrt(1.0 - a);
}

double gg3_current_bar(double alpha) {
  const double a = std::min(alpha, 1.0 - alpha);
  const double u = 1.0 - 2.0 * a;
  const double v = kGg3 * (4.0 / 3.0 * a * a - 2.0 / 3.0 * a - 0.5 * u * u) / std::sqrt(1.0 - a);
  return alpha <= 0.5 ? v : -v;
}

}  // namespace

Kernel::Kernel(std::string name, int d, Reduced reduced, std::vector<SingularLocus> loci,
               Profile nu_bar, Profile current_bar)
    : name_(std::move(name)),
      d_(d),
      reduced_(std::move(reduced)),
      loci_(std::move(loci)),
      nu_bar_(std::move(nu_bar)),
      current_bar_(std::move(current_bar)) {
  if (d_ < 1) throw std::invalid_argument("Kernel: dimension must be positive");
  if (!reduced_) throw std::invalid_argument("Kernel: missing reduced evaluator");
}

unsigned Kernel::loci_mask() const {
  unsigned m = 0;
  for (const auto& l : loci_) m |= l.curve;
  return m;
}

double Kernel::tilde(const SimplexPoint& p) const {
  const double w = reduced_(p);
  if (d_ == 2) return w;
  return w * std::pow(p.a * p.a1, 0.5 * d_ - 1.0);
}

bool Kernel::on_divergent_locus(const SimplexPoint& p) const {
  for (const auto& l : loci_) {
    if (l.kind != LocusKind::Divergent) continue;
    if ((l.curve == kLocusDiagonal && p.diff == 0.0) ||
        (l.curve == kLocusAntiDiagonal && p.anti == 0.0) ||
        (l.curve == kLocusMidAlpha && p.a == 0.5) || (l.curve == kLocusMidBeta && p.b == 0.5))
      return true;
  }
  return false;
}

double Kernel::nu_bar(double alpha) const {
  if (!nu_bar_) throw std::logic_error("kernel " + name_ + " has no closed-form collision profile");
  return nu_bar_(alpha);
}

double Kernel::current_bar(double alpha) const {
  if (!current_bar_) throw std::logic_error("kernel " + name_ + " has no closed-form current profile");
  return current_bar_(alpha);
}

std::vector<std::string> kernel_names() { return {"gg2", "gg3", "root-eta", "uniform"}; }

Kernel make_kernel(const std::string& name) {
  if (name == "gg2") {
    return Kernel("gg2", 2, gg2_reduced,
                  {{kLocusAntiDiagonal, LocusKind::Divergent},
                   {kLocusDiagonal, LocusKind::Kink},
                   {kLocusMidAlpha, LocusKind::Kink},
                   {kLocusMidBeta, LocusKind::Kink}});
  }
  if (name == "gg3") {
    return Kernel("gg3", 3, gg3_reduced,
                  {{kLocusDiagonal, LocusKind::Kink},
                   {kLocusAntiDiagonal, LocusKind::Kink},
                   {kLocusMidAlpha, LocusKind::Kink},
                   {kLocusMidBeta, LocusKind::Kink}},
                  gg3_nu_bar, gg3_current_bar);
  }
  if (name == "root-eta") {
    return Kernel(
        "root-eta", 2, [](const SimplexPoint& p) { return 1.0 / std::sqrt(std::abs(p.diff)); },
        {{kLocusDiagonal, LocusKind::Divergent}},
        [](double a) { return 2.0 * (std::sqrt(a) + std::sqrt(1.0 - a)); },
        [](double a) { return 2.0 / 3.0 * (a * std::sqrt(a) - (1.0 - a) * std::sqrt(1.0 - a)); });
  }
  if (name == "uniform") {
    return Kernel(
        "uniform", 2, [](const SimplexPoint&) { return 1.0; }, {}, [](double) { return 1.0; },
        [](double a) { return a - 0.5; });
  }
  std::string known;
  for (const auto& n : kernel_names()) known += (known.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown kernel '" + name + "'; known kernels: " + known);
}

Kernel make_broken_alpha_kernel() {
  return Kernel("broken-alpha", 2, [](const SimplexPoint& p) { return p.a; });
}

SimplexPoint exchange_point(double ea, double eb, double eta) {
  const double s = ea + eb;
  SimplexPoint p;
  p.a = ea / s;
  p.a1 = eb / s;
  p.b = (ea - eta) / s;
  p.b1 = (eb + eta) / s;
  p.diff = eta / s;
  p.anti = ((ea - eb) - eta) / s;
  return p;
}

double eval_W(const Kernel& k, double ea, double eb, double eta) {
  if (!(ea > 0.0) || !(eb > 0.0)) throw std::domain_error("eval_W: energies must be positive");
  if (!(eta > -eb && eta < ea))
    throw std::domain_error("eval_W: exchange would make an energy negative");
  return k.reduced(exchange_point(ea, eb, eta)) / std::sqrt(ea + eb);
}

double eval_tilde(const Kernel& k, double alpha, double beta) {
  if (!(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0))
    throw std::domain_error("eval_tilde: (alpha, beta) must lie in the open unit square");
  const SimplexPoint p = simplex_point(alpha, beta);
  if (k.on_divergent_locus(p))
    throw std::domain_error("eval_tilde: point lies on a singular locus of kernel " + k.name());
  return k.tilde(p);
}

double gg2_piecewise(double ea, double eb, double eta) {
  if (ea > eb) return gg2_piecewise(eb, ea, -eta);
  const double c = std::sqrt(2.0 / (std::numbers::pi * std::numbers::pi * std::numbers::pi));
  if (eta > -eb && eta < ea - eb) return c / std::sqrt(ea) * elliptic_K(std::sqrt((eb + eta) / ea));
  if (eta > ea - eb && eta < 0.0)
    return c / std::sqrt(eb + eta) * elliptic_K(std::sqrt(ea / (eb + eta)));
  if (eta > 0.0 && eta < ea) return c / std::sqrt(eb) * elliptic_K(std::sqrt((ea - eta) / eb));
  throw std::domain_error("gg2_piecewise: exchange outside the branch ranges");
}

double gg3_piecewise(double ea, double eb, double eta) {
  const double lo = std::min(0.0, ea - eb), hi = std::max(0.0, ea - eb);
  if (eta > -eb && eta < lo) return kGg3 * std::sqrt((eb + eta) / (ea * eb));
  if (eta > lo && eta < hi) return kGg3 * std::sqrt(1.0 / std::max(ea, eb));
  if (eta > hi && eta < ea) return kGg3 * std::sqrt((ea - eta) / (ea * eb));
  throw std::domain_error("gg3_piecewise: exchange outside the branch ranges");
}

namespace {

double relative_gap(double x, double y) {
  const double scale = std::max(std::abs(x), std::abs(y));
  return scale > 0.0 ? std::abs(x - y) / scale : 0.0;
}

SimplexPoint mirrored(const SimplexPoint& p) {
  return {p.a1, p.a, p.b1, p.b, -p.diff, -p.anti};
}

SimplexPoint swapped(const SimplexPoint& p) {
  return {p.b, p.b1, p.a, p.a1, -p.diff, p.anti};
}

}  // namespace

ConditionReport check_conditions(const Kernel& k, long n, double tol, RngStream& rng) {
  if (n < 1) throw std::invalid_argument("check_conditions: need at least one sample");
  ConditionReport rep;
  rep.tolerance = tol;
  const double powers[3] = {1e-3, 1.0, 1e3};
  for (long i = 0; i < n; ++i) {
    try {
      const double ea = rng.exponential(1.0), eb = rng.exponential(1.0);
      const double eta = -eb + (ea + eb) * rng.uniform();
      const double c = std::exp(std::log(1e-3) + 2.0 * std::log(1e3) * rng.uniform());
      const double alpha = rng.uniform(), beta = rng.uniform();
      const double w = eval_W(k, ea, eb, eta);
      double r1 = relative_gap(eval_W(k, c * ea, c * eb, c * eta), w / std::sqrt(c));
      for (double cc : powers)
        r1 = std::max(r1, relative_gap(eval_W(k, cc * ea, cc * eb, cc * eta), w / std::sqrt(cc)));
      const SimplexPoint p = simplex_point(alpha, beta);
      const double wb = k.reduced(p);
      const double r2 = relative_gap(wb, k.reduced(mirrored(p)));
      const double r3 = relative_gap(k.tilde(p), k.tilde(swapped(p)));
      if (!std::isfinite(w) || !std::isfinite(wb) || !std::isfinite(r1) || !std::isfinite(r2) ||
          !std::isfinite(r3)) {
        ++rep.skipped;
        continue;
      }
      rep.homogeneity.worst_residual = std::max(rep.homogeneity.worst_residual, r1);
      rep.symmetry.worst_residual = std::max(rep.symmetry.worst_residual, r2);
      rep.balance.worst_residual = std::max(rep.balance.worst_residual, r3);
      ++rep.samples;
    } catch (const std::exception&) {
      ++rep.skipped;
    }
  }
  rep.homogeneity.pass = rep.homogeneity.worst_residual <= tol;
  rep.symmetry.pass = rep.symmetry.worst_residual <= tol;
  rep.balance.pass = rep.balance.worst_residual <= tol;
  return rep;
}

}  // namespace mesokappa
