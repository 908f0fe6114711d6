#include "mesokappa/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mesokappa {

namespace {

struct Segments {
  double b[5];
};

Segments segments(double alpha) {
  const double a1 = 1.0 - alpha;
  return {{0.0, std::min(alpha, a1), 0.5, std::max(alpha, a1), 1.0}};
}

// Position of warped coordinate u as an anchored point.
AnchoredPoint warped_point(const Segments& s, double u) {
  const int k = std::clamp(static_cast<int>(u), 0, 3);
  const double w = u - k;
  const double half = 0.5 * (s.b[k + 1] - s.b[k]);
  if (w < 0.5) {
    const double v = 2.0 * w;
    const double off = half * v * v;
    return {s.b[k] + off, s.b[k], off};
  }
  const double v = 2.0 * (1.0 - w);
  const double off = -half * v * v;
  return {s.b[k + 1] + off, s.b[k + 1], off};
}

}  // namespace

double warped_to_beta(double alpha, double u) {
  if (!(u >= 0.0 && u <= 4.0)) throw std::domain_error("warped_to_beta: u outside [0,4]");
  return warped_point(segments(alpha), u).x;
}

ExchangeSampler::ExchangeSampler(const Kernel& k, TableShape shape, Execution exec)
    : kernel_(k), cells_(shape.beta_cells) {
  if (shape.alpha_cells < 2 || shape.beta_cells < 8 || shape.beta_cells % 8 != 0 ||
      shape.gauss_points < 2)
    throw std::invalid_argument("ExchangeSampler: bad table shape");

  // Uniform nodes i/n plus geometric refinement towards both edges.
  const int n = shape.alpha_cells;
  std::vector<double> lower;
  for (double a = 0.5 / n; a > 0x1p-40; a *= 0.5) lower.push_back(a);
  std::reverse(lower.begin(), lower.end());
  alpha_ = lower;
  for (int i = 1; i < n; ++i) alpha_.push_back(static_cast<double>(i) / n);
  for (auto it = lower.rbegin(); it != lower.rend(); ++it) alpha_.push_back(1.0 - *it);

  const std::size_t rows = alpha_.size();
  const int per_half = cells_ / 8;
  const GaussRule& rule = gauss_legendre(shape.gauss_points);
  cdf_.assign(rows * (cells_ + 1), 0.0);
  nu_.assign(rows, 0.0);
  current_.assign(rows, 0.0);
  const unsigned loci = kernel_.loci_mask();
  const bool diag = loci & kLocusDiagonal, anti = loci & kLocusAntiDiagonal;

  detail::for_each_index(static_cast<long>(rows), exec, [&](long row) {
    const double a = alpha_[row];
    const Segments s = segments(a);
    const SimplexPoint ap = simplex_point(a, a);
    double* F = &cdf_[row * (cells_ + 1)];
    double mass = 0.0, first = 0.0;
    int cell = 0;
    for (int seg = 0; seg < 4; ++seg) {
      const double half = 0.5 * (s.b[seg + 1] - s.b[seg]);
      for (int side = 0; side < 2; ++side) {
        const double anchor = side == 0 ? s.b[seg] : s.b[seg + 1];
        const double dir = side == 0 ? 1.0 : -1.0;
        for (int c = 0; c < per_half; ++c) {
          // Left halves run away from their anchor as u grows, right halves towards it.
          const int vc = side == 0 ? c : per_half - 1 - c;
          const double v0 = static_cast<double>(vc) / per_half;
          const double v1 = static_cast<double>(vc + 1) / per_half;
          double m = 0.0, f = 0.0;
          if (half > 0.0) {
            for (std::size_t g = 0; g < rule.t.size(); ++g) {
              const double v = v0 + (v1 - v0) * rule.t[g];
              const double off = dir * half * v * v;
              const AnchoredPoint x{anchor + off, anchor, off};
              if (!(x.x > 0.0 && x.x < 1.0)) continue;
              const SimplexPoint p = simplex_point(ap, x, diag, anti);
              const double w = rule.w[g] * (v1 - v0) * 2.0 * half * v;
              const double wb = kernel_.reduced(p);
              if (!std::isfinite(wb) || wb < 0.0)
                throw std::domain_error("ExchangeSampler: kernel " + kernel_.name() +
                                        " is negative or non-finite inside the square");
              m += w * wb;
              f += w * wb * p.diff;
            }
          }
          mass += m;
          first += f;
          F[++cell] = mass;
        }
      }
    }
    if (!(mass > 0.0)) throw std::domain_error("ExchangeSampler: zero collision rate");
    for (int i = 1; i <= cells_; ++i) F[i] /= mass;
    F[cells_] = 1.0;
    nu_[row] = mass;
    current_[row] = first;
  });
}

std::size_t ExchangeSampler::locate(double alpha, double& theta) const {
  if (alpha <= alpha_.front()) {
    theta = 0.0;
    return 0;
  }
  if (alpha >= alpha_.back()) {
    theta = 1.0;
    return alpha_.size() - 2;
  }
  const auto it = std::upper_bound(alpha_.begin(), alpha_.end(), alpha);
  const std::size_t i = static_cast<std::size_t>(it - alpha_.begin()) - 1;
  theta = (alpha - alpha_[i]) / (alpha_[i + 1] - alpha_[i]);
  return i;
}

double ExchangeSampler::quantile_u(std::size_t node, double p) const {
  const double* F = &cdf_[node * (cells_ + 1)];
  const double* it = std::upper_bound(F, F + cells_ + 1, p);
  std::size_t j = static_cast<std::size_t>(it - F);
  j = std::clamp<std::size_t>(j, 1, cells_) - 1;
  const double width = F[j + 1] - F[j];
  const double frac = width > 0.0 ? (p - F[j]) / width : 0.5;
  return 4.0 * (j + std::clamp(frac, 0.0, 1.0)) / cells_;
}

double ExchangeSampler::quantile(double alpha, double p) const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("sample_exchange: alpha outside (0,1)");
  double theta;
  const std::size_t i = locate(alpha, theta);
  const double u = (1.0 - theta) * quantile_u(i, p) + theta * quantile_u(i + 1, p);
  const double beta = warped_point(segments(alpha), std::clamp(u, 0.0, 4.0)).x;
  return std::clamp(beta, kBetaClamp, 1.0 - kBetaClamp);
}

double ExchangeSampler::sample(double alpha, RngStream& rng) const {
  return quantile(alpha, rng.uniform());
}

double ExchangeSampler::nu_bar(double alpha) const {
  if (kernel_.has_nu_bar()) return kernel_.nu_bar(alpha);
  double theta;
  const std::size_t i = locate(alpha, theta);
  return (1.0 - theta) * nu_[i] + theta * nu_[i + 1];
}

double ExchangeSampler::current_bar(double alpha) const {
  if (kernel_.has_current_bar()) return kernel_.current_bar(alpha);
  double theta;
  const std::size_t i = locate(alpha, theta);
  return (1.0 - theta) * current_[i] + theta * current_[i + 1];
}

RejectionSampler::RejectionSampler(const Kernel& k) : kernel_(k) {}

struct RejectionSampler::Proposal {
  const std::vector<double>& centres;
};

// ½ uniform + ½ mean over centres c of 1/(2(√c+√(1-c))√|β-c|).
double RejectionSampler::density(const Proposal& q, double beta) const {
  double d = 0.5;
  if (q.centres.empty()) return 1.0;
  for (double c : q.centres) {
    const double r = std::abs(beta - c);
    d += 0.5 / q.centres.size() / (2.0 * (std::sqrt(c) + std::sqrt(1.0 - c)) * std::sqrt(r));
  }
  return d;
}

void RejectionSampler::prepare(double alpha) const {
  if (alpha == cached_alpha_) return;
  centres_.clear();
  for (const auto& l : kernel_.loci()) {
    if (l.kind != LocusKind::Divergent) continue;
    if (l.curve == kLocusDiagonal) centres_.push_back(alpha);
    if (l.curve == kLocusAntiDiagonal) centres_.push_back(1.0 - alpha);
    if (l.curve == kLocusMidBeta) centres_.push_back(0.5);
  }
  const Proposal q{centres_};
  const Segments s = segments(alpha);
  double worst = 0.0;
  auto probe = [&](double beta) {
    if (!(beta > 0.0 && beta < 1.0)) return;
    const SimplexPoint p = simplex_point(alpha, beta);
    if (kernel_.on_divergent_locus(p)) return;
    worst = std::max(worst, kernel_.reduced(p) / density(q, beta));
  };
  for (int i = 0; i <= 8192; ++i) probe(warped_point(s, 4.0 * i / 8192.0).x);
  for (double b : s.b)
    for (double r = 1e-3; r > 1e-15; r *= 0.1) {
      probe(b - r);
      probe(b + r);
    }
  envelope_ = 1.25 * worst;
  cached_alpha_ = alpha;
}

double RejectionSampler::sample(double alpha, RngStream& rng) const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("sample_exchange: alpha outside (0,1)");
  prepare(alpha);
  const Proposal q{centres_};
  for (;;) {
    double beta;
    if (centres_.empty() || rng.uniform() < 0.5) {
      beta = rng.uniform();
    } else {
      const double c = centres_[std::min<std::size_t>(
          static_cast<std::size_t>(rng.uniform() * centres_.size()), centres_.size() - 1)];
      const double left = std::sqrt(c) / (std::sqrt(c) + std::sqrt(1.0 - c));
      const double v = rng.uniform();
      beta = rng.uniform() < left ? c - c * v * v : c + (1.0 - c) * v * v;
    }
    ++proposals_;
    if (!(beta > 0.0 && beta < 1.0)) continue;
    const SimplexPoint p = simplex_point(alpha, beta);
    if (kernel_.on_divergent_locus(p)) continue;
    const double ratio = kernel_.reduced(p) / density(q, beta);
    if (ratio > envelope_) ++violations_;
    if (rng.uniform() * envelope_ <= ratio) {
      ++accepted_;
      return std::clamp(beta, kBetaClamp, 1.0 - kBetaClamp);
    }
  }
}

}  // namespace mesokappa
