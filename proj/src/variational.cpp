#include "mesokappa/variational.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

#include "mesokappa/observables.hpp"
#include "mesokappa/special.hpp"
#include "mesokappa/stats.hpp"

namespace mesokappa {

namespace {

struct Letter {
  int power;
  bool half;
  int degree() const { return half ? 1 : power; }
  bool operator<(const Letter& o) const { return std::tie(half, power) < std::tie(o.half, o.power); }
};

double central_moment(double mu, int p) {
  double m = 0.0, binom = 1.0;
  for (int k = 0; k <= p; ++k) {
    m += binom * gamma_moment(mu, k) * std::pow(-mu, p - k);
    binom = binom * (p - k) / (k + 1);
  }
  return m;
}

double letter_mean(const Letter& l, double mu) { return l.half ? 0.0 : central_moment(mu, l.power); }

double letter_value(const Letter& l, double mu, double h_mean, double e) {
  if (l.half) return e * std::sqrt(e) - h_mean;
  const double x = e - mu;
  double v = 1.0;
  for (int i = 0; i < l.power; ++i) v *= x;
  return v;
}

std::string letter_label(const Letter& l, int site) {
  const std::string s = std::to_string(site);
  if (l.half) return "h" + s;
  return l.power == 1 ? "x" + s : "x" + s + "^" + std::to_string(l.power);
}

}  // namespace

TrialSpace::TrialSpace(int window, int degree, int d, bool half_power)
    : window_(window), degree_(degree), d_(d) {
  if (window < 1) throw std::invalid_argument("TrialSpace: window must be at least 1");
  if (degree < 0) throw std::invalid_argument("TrialSpace: degree must be nonnegative");
  if (d < 1) throw std::invalid_argument("TrialSpace: d must be positive");
  const double mu = d / 2.0;
  std::vector<Letter> alphabet;
  if (half_power && degree >= 1) alphabet.push_back({1, true});
  for (int p = 1; p <= degree; ++p) alphabet.push_back({p, false});

  // Every word assigns one letter or nothing to each site; site 0 is occupied.
  std::vector<std::pair<int, BasisFunction>> found;
  std::vector<int> pick(window, -1);
  auto emit = [&] {
    int deg = 0;
    BasisFunction f;
    f.mean = 1.0;
    for (int s = 0; s < window; ++s) {
      if (pick[s] < 0) continue;
      const Letter& l = alphabet[pick[s]];
      deg += l.degree();
      f.factors.push_back({s, l.power, l.half});
      f.label += (f.label.empty() ? "" : "*") + letter_label(l, s);
      f.mean *= letter_mean(l, mu);
    }
    if (deg > degree) return;
    if (f.factors.size() == 1 && !f.factors[0].half && f.factors[0].power == 1) return;
    found.emplace_back(deg, std::move(f));
  };
  auto rec = [&](auto&& self, int s) -> void {
    if (s == window) {
      emit();
      return;
    }
    for (int a = s == 0 ? 0 : -1; a < static_cast<int>(alphabet.size()); ++a) {
      pick[s] = a;
      self(self, s + 1);
    }
  };
  if (!alphabet.empty()) rec(rec, 0);
  std::stable_sort(found.begin(), found.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [deg, f] : found) basis_.push_back(std::move(f));
  label_ = "w=" + std::to_string(window) + " D=" + std::to_string(degree) + (half_power ? "" : " nohalf");
}

TrialSpace::TrialSpace(int window, int d, std::vector<BasisFunction> basis, std::string label)
    : window_(window), d_(d), basis_(std::move(basis)), label_(std::move(label)) {
  if (window < 1) throw std::invalid_argument("TrialSpace: window must be at least 1");
  for (const auto& f : basis_)
    for (const auto& x : f.factors)
      if (x.site < 0 || x.site >= window)
        throw std::invalid_argument("TrialSpace: factor site outside the window in " + f.label);
}

double TrialSpace::evaluate(std::size_t m, const double* e) const {
  const double mu = d_ / 2.0;
  const double h_mean = gamma_moment(mu, 1.5);
  const BasisFunction& f = basis_.at(m);
  double v = 1.0;
  for (const auto& x : f.factors) v *= letter_value({x.power, x.half}, mu, h_mean, e[x.site]);
  return v - f.mean;
}

QuadraticProgram QuadraticProgram::exact(Eigen::MatrixXd S, Eigen::VectorXd L, double kappa_s) {
  if (S.rows() != S.cols() || S.rows() != L.size())
    throw std::invalid_argument("QuadraticProgram: S must be square and match L");
  QuadraticProgram qp;
  qp.S_err = Eigen::MatrixXd::Zero(S.rows(), S.cols());
  qp.L_err = Eigen::VectorXd::Zero(L.size());
  qp.L_direct = L;
  qp.L_direct_err = qp.L_err;
  qp.S = std::move(S);
  qp.L = std::move(L);
  qp.kappa_s_ref = qp.kappa_s_mc = kappa_s;
  for (Eigen::Index i = 0; i < qp.L.size(); ++i) qp.labels.push_back("f" + std::to_string(i));
  return qp;
}

QuadraticProgram QuadraticProgram::restrict_to(const std::vector<std::string>& keep) const {
  std::vector<Eigen::Index> idx;
  for (const auto& name : keep) {
    const auto it = std::find(labels.begin(), labels.end(), name);
    if (it == labels.end()) throw std::invalid_argument("restrict_to: unknown basis function " + name);
    idx.push_back(it - labels.begin());
  }
  const auto n = static_cast<Eigen::Index>(idx.size());
  auto sub_m = [&](const Eigen::MatrixXd& A) {
    Eigen::MatrixXd B(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) B(i, j) = A(idx[i], idx[j]);
    return B;
  };
  auto sub_v = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w(i) = v(idx[i]);
    return w;
  };
  QuadraticProgram r = *this;
  r.S = sub_m(S);
  r.S_err = sub_m(S_err);
  r.L = sub_v(L);
  r.L_err = sub_v(L_err);
  if (L_direct.size() == L.size()) {
    r.L_direct = sub_v(L_direct);
    r.L_direct_err = sub_v(L_direct_err);
  }
  r.labels = keep;
  for (std::size_t b = 0; b < S_batches.size(); ++b) {
    r.S_batches[b] = sub_m(S_batches[b]);
    r.L_batches[b] = sub_v(L_batches[b]);
  }
  return r;
}

QuadraticProgram assemble(const ExchangeSampler& sampler, const TrialSpace& space,
                          long long n_samples, const AssembleOptions& opt) {
  const Kernel& k = sampler.kernel();
  if (k.dimension() != space.dimension())
    throw std::invalid_argument("assemble: trial space built for d=" + std::to_string(space.dimension()) +
                                " but kernel " + k.name() + " has d=" + std::to_string(k.dimension()));
  if (opt.batches < 2) throw std::invalid_argument("assemble: need at least 2 batches");
  if (n_samples < opt.batches) throw std::invalid_argument("assemble: fewer samples than batches");

  const int w = space.window();
  const int sites = 2 * w;
  const auto M = static_cast<Eigen::Index>(space.size());
  const double mu = k.dimension() / 2.0;
  const double h_mean = gamma_moment(mu, 1.5);

  // Distinct letters of the basis, so each site's factors are computed once.
  std::map<Letter, int> index;
  for (const auto& f : space.basis())
    for (const auto& x : f.factors) index.emplace(Letter{x.power, x.half}, 0);
  std::vector<Letter> letters;
  for (auto& [l, i] : index) {
    i = static_cast<int>(letters.size());
    letters.push_back(l);
  }
  const int A = static_cast<int>(letters.size());
  // Site 0 sits at index w-1 and site 1 at index w.
  const int i0 = w - 1, i1 = w;
  // Placements of a term start at index first..last: those whose support
  // meets site 0 or site 1. Other placements have zero gradient.
  struct Term {
    std::vector<std::pair<int, int>> parts;  // (site, letter)
    int first, last;
  };
  std::vector<Term> terms;
  for (const auto& f : space.basis()) {
    Term t{{}, 0, -1};
    std::vector<int> starts;
    for (const auto& x : f.factors) {
      t.parts.emplace_back(x.site, index.at({x.power, x.half}));
      for (int c : {i0, i1})
        if (c - x.site >= 0 && c - x.site <= w) starts.push_back(c - x.site);
    }
    if (!starts.empty()) {
      t.first = *std::min_element(starts.begin(), starts.end());
      t.last = *std::max_element(starts.begin(), starts.end());
    }
    terms.push_back(std::move(t));
  }
  std::vector<double> outer_means(sites * A);
  for (int i = 0; i < sites; ++i)
    for (int a = 0; a < A; ++a) outer_means[i * A + a] = letter_mean(letters[a], mu);

  QuadraticProgram qp;
  qp.kappa_s_ref = std::isnan(opt.kappa_s_ref) ? kappa_s(k).value : opt.kappa_s_ref;
  qp.n_samples = n_samples;
  for (const auto& f : space.basis()) qp.labels.push_back(f.label);
  const int B = opt.batches;
  qp.S_batches.assign(B, Eigen::MatrixXd::Zero(M, M));
  qp.L_batches.assign(B, Eigen::VectorXd::Zero(M));
  std::vector<double> ks_batch(B, 0.0);
  std::vector<Eigen::VectorXd> direct(B);

  detail::for_each_index(B, opt.exec, [&](long b) {
    RngStream rng(opt.seed, static_cast<std::uint64_t>(b));
    const long long count = n_samples / B + (b < n_samples % B ? 1 : 0);
    std::vector<double> e(sites), before(sites * A), after(sites * A);
    std::vector<double> mirror(sites * A), averaged(sites * A);
    Eigen::VectorXd g(M), odd(M);
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(M, M);
    Eigen::VectorXd L = Eigen::VectorXd::Zero(M), Ld = Eigen::VectorXd::Zero(M);
    double ks = 0.0;
    for (long long n = 0; n < count; ++n) {
      for (auto& x : e) x = sample_gamma(mu, 1.0, rng);
      const double s = e[i0] + e[i1];
      const double nu = std::sqrt(s) * sampler.nu_bar(e[i0] / s);
      const double beta = sampler.sample(e[i0] / s, rng);
      double left = s * beta;
      const double right = s - left;
      if (left <= 0.5 * s) left = s - right;
      const double eta = e[i0] - left;
      for (int i = 0; i < sites; ++i)
        for (int a = 0; a < A; ++a) before[i * A + a] = letter_value(letters[a], mu, h_mean, e[i]);
      after = before;
      // Outer sites enter L only through their letter means.
      std::copy_n(outer_means.begin(), sites * A, averaged.begin());
      std::copy_n(&before[i0 * A], 2 * A, &averaged[i0 * A]);
      for (int i = 0; i < sites; ++i)
        std::copy_n(&averaged[(sites - 1 - i) * A], A, &mirror[i * A]);
      for (int a = 0; a < A; ++a) {
        after[i0 * A + a] = letter_value(letters[a], mu, h_mean, left);
        after[i1 * A + a] = letter_value(letters[a], mu, h_mean, right);
      }
      // Shifts whose window covers site 0 or site 1 start at indices 0..w.
      for (Eigen::Index m = 0; m < M; ++m) {
        double grad = 0.0, sym = 0.0;
        for (int start = terms[m].first; start <= terms[m].last; ++start) {
          double fb = 1.0, fa = 1.0, fr = 1.0, fm = 1.0;
          for (const auto& [site, a] : terms[m].parts) {
            fb *= before[(start + site) * A + a];
            fa *= after[(start + site) * A + a];
            fr *= averaged[(start + site) * A + a];
            fm *= mirror[(start + site) * A + a];
          }
          grad += fa - fb;
          sym += fr - fm;
        }
        g(m) = grad;
        odd(m) = sym;
      }
      // Reversibility gives L = -2⟨Σ_f j(ε_0,ε_1)⟩; j is odd under the mirror
      // ε_i -> ε_{1-i}, so only the odd part of Σ_f contributes.
      const double cur = s * std::sqrt(s) * sampler.current_bar(e[i0] / s);
      L.noalias() -= cur * odd;
      Ld.noalias() += (nu * eta) * g;
      S.selfadjointView<Eigen::Lower>().rankUpdate(g, nu);
      ks += 0.5 * nu * eta * eta;
    }
    S.triangularView<Eigen::StrictlyUpper>() = S.transpose();
    qp.S_batches[b] = S / static_cast<double>(count);
    qp.L_batches[b] = L / static_cast<double>(count);
    direct[b] = Ld / static_cast<double>(count);
    ks_batch[b] = ks / static_cast<double>(count);
  });

  qp.S = Eigen::MatrixXd::Zero(M, M);
  qp.L = Eigen::VectorXd::Zero(M);
  for (int b = 0; b < B; ++b) {
    qp.S += qp.S_batches[b] / B;
    qp.L += qp.L_batches[b] / B;
  }
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(M, M);
  Eigen::VectorXd l2 = Eigen::VectorXd::Zero(M);
  for (int b = 0; b < B; ++b) {
    s2.array() += (qp.S_batches[b] - qp.S).array().square();
    l2.array() += (qp.L_batches[b] - qp.L).array().square();
  }
  qp.S_err = (s2 / (B - 1.0) / B).array().sqrt();
  qp.L_err = (l2 / (B - 1.0) / B).array().sqrt();
  qp.L_direct = Eigen::VectorXd::Zero(M);
  for (int b = 0; b < B; ++b) qp.L_direct += direct[b] / B;
  l2.setZero();
  for (int b = 0; b < B; ++b) l2.array() += (direct[b] - qp.L_direct).array().square();
  qp.L_direct_err = (l2 / (B - 1.0) / B).array().sqrt();
  qp.kappa_s_mc = mean(ks_batch);
  qp.kappa_s_mc_err = std::sqrt(sample_variance(ks_batch) / B);
  qp.undersampled = n_samples / B < 1000;
  return qp;
}

namespace {

struct Solved {
  double value;
  Eigen::VectorXd c;
  double ridge;
};

Solved solve(const Eigen::MatrixXd& S, const Eigen::VectorXd& L, double kappa_s) {
  const auto M = S.rows();
  if (M == 0) return {kappa_s, Eigen::VectorXd(), 0.0};
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
  if (hi <= 0.0 && lo >= 0.0) return {kappa_s, Eigen::VectorXd::Zero(M), 0.0};
  if (lo < -1e-8 * std::abs(hi))
    throw IndefiniteMatrixError("minimize: S has eigenvalue " + std::to_string(lo) +
                                "; Monte Carlo noise dominates, increase n_samples");
  const double ridge = lo < 1e-12 * hi ? 1e-10 * S.trace() / M : 0.0;
  const Eigen::MatrixXd A = S + ridge * Eigen::MatrixXd::Identity(M, M);
  const Eigen::VectorXd c = -A.ldlt().solve(L);
  return {kappa_s + c.dot(L) + 0.5 * c.dot(S * c), c, ridge};
}

}  // namespace

VariationalResult minimize(const QuadraticProgram& qp) {
  const Solved full = solve(qp.S, qp.L, qp.kappa_s_ref);
  VariationalResult r;
  r.kappa_var = full.value;
  r.coefficients = full.c;
  r.ridge = full.ridge;
  r.gap = qp.kappa_s_ref - full.value;
  const std::size_t B = qp.S_batches.size();
  if (B >= 2 && qp.S.rows() > 0) {
    Eigen::MatrixXd S_sum = Eigen::MatrixXd::Zero(qp.S.rows(), qp.S.cols());
    Eigen::VectorXd L_sum = Eigen::VectorXd::Zero(qp.L.size());
    for (std::size_t b = 0; b < B; ++b) {
      S_sum += qp.S_batches[b];
      L_sum += qp.L_batches[b];
    }
    std::vector<double> jack(B);
    for (std::size_t b = 0; b < B; ++b)
      jack[b] = solve((S_sum - qp.S_batches[b]) / (B - 1.0), (L_sum - qp.L_batches[b]) / (B - 1.0),
                      qp.kappa_s_ref).value;
    const double m = mean(jack);
    double v = 0.0;
    for (double x : jack) v += (x - m) * (x - m);
    v *= (B - 1.0) / B;
    r.bias = (B - 1.0) * (m - full.value);
    r.std_error = std::sqrt(v + r.bias * r.bias);
  }
  r.undersampled = qp.undersampled || r.std_error > 2e-3;
  return r;
}

UpperCurve kappa_upper_curve(const ExchangeSampler& sampler, const std::vector<TrialSpace>& spaces,
                             long long n_samples, const AssembleOptions& opt) {
  UpperCurve curve;
  if (spaces.empty()) return curve;
  const auto largest = std::max_element(spaces.begin(), spaces.end(), [](const auto& a, const auto& b) {
    return a.size() < b.size() || (a.size() == b.size() && a.window() < b.window());
  });
  std::vector<std::string> all;
  for (const auto& f : largest->basis()) all.push_back(f.label);
  for (const auto& s : spaces)
    for (const auto& f : s.basis())
      if (std::find(all.begin(), all.end(), f.label) == all.end())
        throw std::invalid_argument("kappa_upper_curve: spaces are not nested (" + f.label + " not in " +
                                    largest->label() + ")");
  const QuadraticProgram qp = assemble(sampler, *largest, n_samples, opt);
  for (const auto& s : spaces) {
    std::vector<std::string> keep;
    for (const auto& f : s.basis()) keep.push_back(f.label);
    const auto r = minimize(qp.restrict_to(keep));
    curve.points.push_back({s.label(), s.size(), r.kappa_var, r.std_error});
  }
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    if (b.kappa_var - a.kappa_var > 3.0 * std::hypot(a.std_error, b.std_error)) curve.non_monotone = true;
  }
  return curve;
}

}  // namespace mesokappa
