#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <limits>
#include <queue>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "mesokappa/parallel.hpp"

namespace mesokappa {

struct QuadratureSpec {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  int max_subdivisions = 1 << 16;
  int rule_order = 15;

  void validate() const;
};

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  bool converged = true;
  int subdivisions = 0;
  long long evaluations = 0;
};

// Raised when the integrand returns a non-finite value.
class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Gauss-Legendre rule mapped to [0,1]. Both t and 1-t are stored so that
// nodes can be placed accurately relative to either panel end.
struct GaussRule {
  std::vector<double> t;
  std::vector<double> one_minus_t;
  std::vector<double> w;
};

const GaussRule& gauss_legendre(int n);

// A point of the unit square with the derived coordinates the kernels need.
// diff = α-β and anti = α+β-1 are exact whenever the point is close to the
// corresponding diagonal.
struct SimplexPoint {
  double a;     // α
  double a1;    // 1-α
  double b;     // β
  double b1;    // 1-β
  double diff;  // α-β
  double anti;  // α+β-1
};

SimplexPoint simplex_point(double alpha, double beta);

// Curves across which an integrand on the unit square may be singular or
// only piecewise smooth. The integrator splits along them.
enum Locus : unsigned {
  kLocusNone = 0,
  kLocusDiagonal = 1u << 0,      // β = α
  kLocusAntiDiagonal = 1u << 1,  // β = 1-α
  kLocusMidAlpha = 1u << 2,      // α = 1/2
  kLocusMidBeta = 1u << 3,       // β = 1/2
};

// A quadrature node. offset = x - anchor holds exactly even when x rounds
// to the anchor, so integrands singular at a breakpoint can use it.
struct AnchoredPoint {
  double x;
  double anchor;
  double offset;
};

namespace detail {

struct Half {
  double anchor;
  double dir;
  double length;
};

struct Panel {
  int half;
  double r0, r1;
  double whole, left, right;
  double err;
  double roundoff;
};

// Panel errors are the difference between the rule on a panel and on its
// halves, scaled so that the estimate also bounds the error next to an
// inverse square-root endpoint singularity.
inline constexpr double kErrorSafety = 3.0;

template <class Batch>
class Adaptive {
 public:
  Adaptive(Batch& batch, const QuadratureSpec& spec)
      : batch_(batch), spec_(spec), rule_(gauss_legendre(spec.rule_order)) {}

  QuadratureResult run(double lo, double hi, std::span<const double> breakpoints) {
    QuadratureResult res;
    if (lo == hi) return res;
    double sign = 1.0;
    if (lo > hi) {
      std::swap(lo, hi);
      sign = -1.0;
    }
    std::vector<double> edges{lo};
    std::vector<double> bps(breakpoints.begin(), breakpoints.end());
    std::sort(bps.begin(), bps.end());
    for (double p : bps)
      if (p > edges.back() && p < hi) edges.push_back(p);
    edges.push_back(hi);
    // Each segment is split at its midpoint into two halves, each measured
    // by distance from its own breakpoint.
    for (std::size_t s = 0; s + 1 < edges.size(); ++s) {
      const double len = 0.5 * (edges[s + 1] - edges[s]);
      halves_.push_back({edges[s], 1.0, len});
      halves_.push_back({edges[s + 1], -1.0, len});
    }

    const std::size_t n = rule_.t.size();
    std::vector<AnchoredPoint> xs;
    std::vector<double> jac;
    xs.reserve(halves_.size() * 3 * n);
    for (std::size_t h = 0; h < halves_.size(); ++h) {
      const double len = halves_[h].length, m = 0.5 * len;
      for (auto [r0, r1] : {std::pair{0.0, len}, std::pair{0.0, m}, std::pair{m, len}})
        add_nodes(xs, jac, static_cast<int>(h), r0, r1);
    }
    std::vector<double> fx(xs.size());
    evaluate(xs, jac, fx, res);
    for (std::size_t h = 0; h < halves_.size(); ++h) {
      const double len = halves_[h].length, m = 0.5 * len;
      Panel p{static_cast<int>(h), 0.0, len, 0, 0, 0, 0, 0};
      double abs_sum = 0.0;
      p.whole = apply(len, fx, 3 * h * n, nullptr);
      p.left = apply(m, fx, (3 * h + 1) * n, &abs_sum);
      p.right = apply(len - m, fx, (3 * h + 2) * n, &abs_sum);
      finish(p, abs_sum);
      push(p);
    }

    std::vector<AnchoredPoint> cx;
    std::vector<double> cj;
    std::vector<double> cf(4 * n);
    int since_resum = 0;
    while (!heap_.empty() && total_err_ > tolerance(total_) &&
           res.subdivisions < spec_.max_subdivisions) {
      const std::size_t idx = heap_.top().second;
      heap_.pop();
      const Panel p = panels_[idx];
      const double m = p.r0 + 0.5 * (p.r1 - p.r0);
      const double m1 = p.r0 + 0.5 * (m - p.r0);
      const double m2 = m + 0.5 * (p.r1 - m);
      if (!(m1 > p.r0 && m1 < m && m2 > m && m2 < p.r1)) continue;  // unsplittable
      cx.clear();
      cj.clear();
      add_nodes(cx, cj, p.half, p.r0, m1);
      add_nodes(cx, cj, p.half, m1, m);
      add_nodes(cx, cj, p.half, m, m2);
      add_nodes(cx, cj, p.half, m2, p.r1);
      evaluate(cx, cj, cf, res);
      double abs_l = 0.0, abs_r = 0.0;
      Panel l{p.half, p.r0, m, p.left, 0, 0, 0, 0};
      l.left = apply(m1 - p.r0, cf, 0, &abs_l);
      l.right = apply(m - m1, cf, n, &abs_l);
      Panel r{p.half, m, p.r1, p.right, 0, 0, 0, 0};
      r.left = apply(m2 - m, cf, 2 * n, &abs_r);
      r.right = apply(p.r1 - m2, cf, 3 * n, &abs_r);
      finish(l, abs_l);
      finish(r, abs_r);
      total_ -= p.left + p.right;
      total_err_ -= p.err;
      panels_[idx] = l;
      add_to_heap(idx);
      total_ += l.left + l.right;
      total_err_ += l.err;
      push(r);
      ++res.subdivisions;
      if (++since_resum == 512) {
        resum();
        since_resum = 0;
      }
    }
    std::sort(panels_.begin(), panels_.end(), [](const Panel& x, const Panel& y) {
      return x.half != y.half ? x.half < y.half : x.r0 < y.r0;
    });
    resum();
    res.value = sign * total_;
    res.error = total_err_;
    res.converged = total_err_ <= tolerance(total_);
    return res;
  }

 private:
  double tolerance(double value) const {
    return std::max(spec_.abs_tol, spec_.rel_tol * std::abs(value));
  }

  // Panel coordinate ρ ∈ [0, len] maps to the distance r = ρ²/len from the
  // anchor. The grading absorbs inverse square-root and logarithmic
  // behaviour at breakpoints.
  void add_nodes(std::vector<AnchoredPoint>& out, std::vector<double>& jac, int h, double r0,
                 double r1) const {
    const Half& half = halves_[h];
    for (std::size_t k = 0; k < rule_.t.size(); ++k) {
      const double rho = rule_.t[k] < 0.5 ? r0 + (r1 - r0) * rule_.t[k]
                                           : r1 - (r1 - r0) * rule_.one_minus_t[k];
      const double r = rho * (rho / half.length);
      const double off = half.dir * r;
      out.push_back({half.anchor + off, half.anchor, off});
      jac.push_back(2.0 * rho / half.length);
    }
  }

  void evaluate(std::span<const AnchoredPoint> xs, std::span<const double> jac,
                std::span<double> out, QuadratureResult& res) {
    batch_(xs, out);
    res.evaluations += static_cast<long long>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!std::isfinite(out[i])) {
        std::ostringstream os;
        os.precision(17);
        os << "non-finite integrand value " << out[i] << " at x=" << xs[i].x;
        throw QuadratureError(os.str());
      }
      out[i] *= jac[i];
    }
  }

  double apply(double h, std::span<const double> fx, std::size_t off, double* abs_sum) const {
    double s = 0.0, sa = 0.0;
    for (std::size_t k = 0; k < rule_.w.size(); ++k) {
      s += rule_.w[k] * fx[off + k];
      sa += rule_.w[k] * std::abs(fx[off + k]);
    }
    if (abs_sum) *abs_sum += h * sa;
    return h * s;
  }

  static void finish(Panel& p, double abs_sum) {
    p.err = kErrorSafety * std::abs(p.whole - (p.left + p.right));
    p.roundoff = 64.0 * std::numeric_limits<double>::epsilon() * abs_sum;
  }

  void push(const Panel& p) {
    panels_.push_back(p);
    total_ += p.left + p.right;
    total_err_ += p.err;
    add_to_heap(panels_.size() - 1);
  }

  // Panels whose error is at the round-off level are settled and never split.
  void add_to_heap(std::size_t idx) {
    if (panels_[idx].err > panels_[idx].roundoff) heap_.emplace(panels_[idx].err, idx);
  }

  void resum() {
    double s = 0.0, c = 0.0, e = 0.0;
    for (const Panel& p : panels_) {
      const double v = p.left + p.right;
      const double t = s + v;
      c += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
      s = t;
      e += p.err;
    }
    total_ = s + c;
    total_err_ = e;
  }

  Batch& batch_;
  const QuadratureSpec& spec_;
  const GaussRule& rule_;
  std::vector<Half> halves_;
  std::vector<Panel> panels_;
  std::priority_queue<std::pair<double, std::size_t>> heap_;
  double total_ = 0.0;
  double total_err_ = 0.0;
};

template <class F>
double call(F& f, const AnchoredPoint& p) {
  if constexpr (std::is_invocable_v<F&, const AnchoredPoint&>)
    return f(p);
  else
    return f(p.x);
}

// Runs one(i) for every index, optionally across threads. Exceptions are
// rethrown on the calling thread, the one at the lowest index first.
template <class G>
void for_each_index(long n, Execution exec, G&& one) {
  if (exec == Execution::Serial || n < 2) {
    for (long i = 0; i < n; ++i) one(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  bool failed = false;
#pragma omp parallel for schedule(dynamic) reduction(|| : failed)
  for (long i = 0; i < n; ++i) {
    try {
      one(i);
    } catch (...) {
      errors[i] = std::current_exception();
      failed = true;
    }
  }
  if (failed)
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
}

}  // namespace detail

// Globally adaptive Gauss-Legendre quadrature of f over [a,b]. The interval
// is split at the breakpoints and every piece is bisected from its ends.
// f may take either a double or an AnchoredPoint.
template <class F>
QuadratureResult integrate_1d(F&& f, double a, double b, const QuadratureSpec& spec,
                              std::span<const double> breakpoints = {},
                              Execution exec = Execution::Serial) {
  spec.validate();
  auto batch = [&](std::span<const AnchoredPoint> xs, std::span<double> out) {
    detail::for_each_index(static_cast<long>(xs.size()), exec,
                           [&](long i) { out[i] = detail::call(f, xs[i]); });
  };
  detail::Adaptive<decltype(batch)> engine(batch, spec);
  return engine.run(a, b, breakpoints);
}

// Builds the simplex point for a β node of the inner integral at fixed α,
// using the node anchor to recover α-β and α+β-1 exactly.
SimplexPoint simplex_point(const SimplexPoint& alpha_part, const AnchoredPoint& beta, bool diag,
                           bool anti);

// Iterated adaptive quadrature over (0,1)². The inner β-integral splits at
// the declared loci; the outer α-integral splits at α = 1/2 whenever any
// locus is declared. Outer nodes may run in parallel; the reduction order
// does not depend on the thread count.
template <class F>
QuadratureResult integrate_2d_unit_square(F&& f, const QuadratureSpec& spec,
                                          unsigned loci = kLocusNone,
                                          Execution exec = Execution::Serial) {
  spec.validate();
  QuadratureSpec inner = spec;
  inner.abs_tol = 0.1 * spec.abs_tol;
  inner.rel_tol = 0.1 * spec.rel_tol;

  double worst_inner = 0.0;
  bool inner_ok = true;
  long long inner_evals = 0;

  auto batch = [&](std::span<const AnchoredPoint> xs, std::span<double> out) {
    std::vector<QuadratureResult> info(xs.size());
    detail::for_each_index(static_cast<long>(xs.size()), exec, [&](long i) {
      SimplexPoint ap{};
      const AnchoredPoint& x = xs[i];
      ap.a = x.anchor == 0.0 ? x.offset : x.x;
      ap.a1 = x.anchor == 1.0 ? -x.offset : 1.0 - ap.a;
      double bps[3];
      std::size_t nb = 0;
      if (loci & kLocusDiagonal) bps[nb++] = ap.a;
      if (loci & kLocusAntiDiagonal) bps[nb++] = ap.a1;
      if (loci & kLocusMidBeta) bps[nb++] = 0.5;
      const bool diag = loci & kLocusDiagonal, anti = loci & kLocusAntiDiagonal;
      auto g = [&](const AnchoredPoint& beta) {
        const SimplexPoint p = simplex_point(ap, beta, diag, anti);
        const double v = f(p);
        if (!std::isfinite(v)) {
          std::ostringstream os;
          os.precision(17);
          os << "non-finite integrand value " << v << " at (alpha, beta)=(" << p.a << ", " << p.b
             << ")";
          throw QuadratureError(os.str());
        }
        return v;
      };
      info[i] = integrate_1d(g, 0.0, 1.0, inner, std::span<const double>(bps, nb));
      out[i] = info[i].value;
    });
    for (const auto& r : info) {
      worst_inner = std::max(worst_inner, r.error);
      inner_ok = inner_ok && r.converged;
      inner_evals += r.evaluations;
    }
  };

  const double mid[1] = {0.5};
  const std::span<const double> outer_bps =
      loci != kLocusNone ? std::span<const double>(mid, 1) : std::span<const double>();
  detail::Adaptive<decltype(batch)> engine(batch, spec);
  QuadratureResult res = engine.run(0.0, 1.0, outer_bps);
  res.error += worst_inner;
  res.converged = res.converged && inner_ok;
  res.evaluations = inner_evals;
  return res;
}

}  // namespace mesokappa
