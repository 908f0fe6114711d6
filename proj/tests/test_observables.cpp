#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mesokappa/observables.hpp"
#include "mesokappa/special.hpp"

using namespace mesokappa;

namespace {

const double kSqrtPi = std::sqrt(std::numbers::pi);

}  // namespace

TEST_CASE("pair observables of the root-eta kernel") {
  const auto k = make_kernel("root-eta");
  CHECK(std::abs(nu(k, 1.0, 1.0).value - 4.0) < 1e-10);
  CHECK(std::abs(j(k, 4.0, 1.0).value - 14.0 / 3.0) < 1e-10);
  CHECK(std::abs(h(k, 1.0, 1.0).value - 0.8) < 1e-10);
  CHECK(j(k, 4.0, 1.0).converged);
}

TEST_CASE("pair observables are symmetric and homogeneous") {
  for (const auto& name : kernel_names()) {
    const auto k = make_kernel(name);
    const auto same = j(k, 1.7, 1.7);
    CHECK(std::abs(same.value) <= std::max(same.error, 1e-12));
    for (auto [a, b] : {std::pair{0.3, 2.1}, std::pair{1.0, 0.5}, std::pair{5.0, 0.01}}) {
      const double n = nu(k, a, b).value, cur = j(k, a, b).value, sec = h(k, a, b).value;
      CHECK(std::abs(n - nu(k, b, a).value) < 1e-10 * n);
      CHECK(std::abs(cur + j(k, b, a).value) < 1e-10 * std::abs(cur) + 1e-12);
      CHECK(std::abs(sec - h(k, b, a).value) < 1e-10 * sec);
      CHECK(std::abs(nu(k, 4 * a, 4 * b).value - 2.0 * n) < 1e-10 * n);
      CHECK(std::abs(j(k, 4 * a, 4 * b).value - 8.0 * cur) < 1e-10 * std::abs(cur) + 1e-12);
      CHECK(std::abs(h(k, 4 * a, 4 * b).value - 32.0 * sec) < 1e-10 * sec);
    }
  }
  CHECK_THROWS_AS(nu(make_kernel("gg3"), 0.0, 1.0), std::domain_error);
}

TEST_CASE("gg3 static constants are all one") {
  const auto k = make_kernel("gg3");
  const auto f = kappa_f(k);
  const auto s = kappa_s(k);
  CHECK(f.converged);
  CHECK(s.converged);
  CHECK_FALSE(s.warning);
  CHECK(std::abs(f.value - 1.0) < 1e-9);
  CHECK(std::abs(s.value - 1.0) < 1e-9);
  CHECK(std::abs(s.via_h - 1.0) < 1e-9);
  CHECK(std::abs(kappa_1(k).value - kappa_2(k).value) < 1e-9);
}

TEST_CASE("gg2 static constants coincide") {
  const auto k = make_kernel("gg2");
  const double f = kappa_f(k).value;
  const auto s = kappa_s(k);
  CHECK_FALSE(s.warning);
  CHECK(std::abs(f - s.value) < 1e-8);
  CHECK(std::abs(s.value - s.via_h) < 1e-9);
  const auto c = check_condition_3_4(k);
  CHECK(c.holds(1e-8));
}

TEST_CASE("uniform kernel constants and the failure of condition 3=4") {
  const auto k = make_kernel("uniform");
  CHECK(std::abs(kappa_f(k).value - 3.0 * kSqrtPi / 4.0) < 1e-12);
  // Γ(9/2)/12.
  CHECK(std::abs(kappa_1(k).value - 105.0 * kSqrtPi / 16.0 / 12.0) < 1e-12);
  CHECK(std::abs(kappa_2(k).value - 105.0 * kSqrtPi / 16.0 / 12.0) < 1e-12);
  const auto c = check_condition_3_4(k);
  CHECK(std::abs(c.lhs - 1.0) < 1e-12);
  // (7/2)(5/2) ∫∫ α(α-β) = (35/4)/12.
  CHECK(std::abs(c.rhs - 35.0 / 48.0) < 1e-12);
  CHECK(std::abs(c.residual - 13.0 / 48.0) < 1e-12);
  CHECK_FALSE(c.holds(1e-3));
}

TEST_CASE("root-eta static conductivity") {
  const auto s = kappa_s(make_kernel("root-eta"));
  CHECK(std::abs(s.value - 3.0 * kSqrtPi / 4.0) < 1e-9);
  CHECK(std::abs(s.via_h - 3.0 * kSqrtPi / 4.0) < 1e-9);
}

TEST_CASE("condition 3=4 holds for gg3 on both sides") {
  const auto c = check_condition_3_4(make_kernel("gg3"));
  CHECK(std::abs(c.lhs - 2.0 * kSqrtPi / 15.0) < 1e-9);
  CHECK(std::abs(c.rhs - 2.0 * kSqrtPi / 15.0) < 1e-9);
}

TEST_CASE("identity residual vanishes for valid kernels only") {
  CHECK(std::abs(check_identity(make_kernel("gg3")).value) < 1e-9);
  CHECK(std::abs(check_identity(make_kernel("gg2")).value) < 1e-9);
  CHECK(std::abs(check_identity(make_kernel("root-eta")).value) < 1e-9);
  CHECK(std::abs(check_identity(make_kernel("uniform")).value) < 1e-12);
  CHECK(std::abs(check_identity(make_broken_alpha_kernel()).value - 1.0 / 12.0) < 1e-10);
}

TEST_CASE("tilde_j for the root-eta kernel") {
  const auto k = make_kernel("root-eta");
  for (double e : {0.1, 1.0, 3.0, 10.0}) {
    const auto r = tilde_j(k, e);
    CHECK(r.converged);
    CHECK(std::abs(r.value - (2.0 / 3.0 * std::pow(e, 1.5) - kSqrtPi / 2.0)) < 1e-9);
  }
  // Differences of j̃ recover j.
  CHECK(std::abs(tilde_j(k, 4.0).value - tilde_j(k, 1.0).value - j(k, 4.0, 1.0).value) < 1e-9);
  CHECK_THROWS_AS(tilde_j(k, 0.0), std::domain_error);
}

TEST_CASE("tilde_j for the uniform kernel") {
  // j̃(ε) = ½ e^ε [2ε Γ(3/2, ε) - Γ(5/2, ε)], evaluated at ε = 1 in high precision.
  const auto r = tilde_j(make_kernel("uniform"), 1.0);
  CHECK(r.converged);
  CHECK(std::abs(r.value - -0.15526598048233598674) < 1e-10);
}

TEST_CASE("gradient defect separates gradient from non-gradient kernels") {
  const auto root = gradient_defect(make_kernel("root-eta"));
  CHECK(root.value < 1e-10);
  CHECK(std::abs(root.tilde_j_mean) < 1e-9);

  const auto gg3 = gradient_defect(make_kernel("gg3"));
  CHECK(gg3.converged);
  CHECK(gg3.value > 1e-4);
  CHECK(gg3.value > 10.0 * gg3.error);
  CHECK(std::abs(gg3.tilde_j_mean) < 1e-9);

  // High-precision nested quadrature with the closed-form j̃.
  const auto uni = gradient_defect(make_kernel("uniform"));
  CHECK(std::abs(uni.value - 4.0769665188656324629e-4) < 1e-11);
  CHECK(uni.value > 1e-4);
}

TEST_CASE("is_gradient verdicts") {
  const auto root = is_gradient(make_kernel("root-eta"));
  CHECK(root.gradient);
  REQUIRE(root.C.has_value());
  CHECK(std::abs(*root.C - 2.0 / 3.0) < 1e-9);
  CHECK(root.fit_residual < 1e-9);

  const auto gg3 = is_gradient(make_kernel("gg3"));
  CHECK_FALSE(gg3.gradient);
  CHECK_FALSE(gg3.C.has_value());
}

TEST_CASE("equilibrium averages scale with temperature") {
  QuadratureSpec spec;
  spec.abs_tol = spec.rel_tol = 3e-9;
  auto check = [&](const Kernel& k, double T) {
    const double kf = kappa_f(k).value, ks = kappa_s(k).value;
    const auto n = pair_average(k, PairAverage::CollisionRate, T, spec, Execution::Parallel);
    const auto f = pair_average(k, PairAverage::HalfFluxMoment, T, spec, Execution::Parallel);
    const auto q = pair_average(k, PairAverage::HalfH, T, spec, Execution::Parallel);
    CHECK(n.converged);
    CHECK(std::abs(n.value / std::sqrt(T) - kf) < 1e-8);
    CHECK(std::abs(f.value / std::pow(T, 2.5) - ks) < 1e-8);
    CHECK(std::abs(q.value / std::pow(T, 2.5) - ks) < 1e-8);
  };
  const auto root = make_kernel("root-eta");
  for (double T : {0.25, 1.0, 4.0}) check(root, T);
  check(make_kernel("gg3"), 4.0);
}

TEST_CASE("static report is consistent and policy independent") {
  const auto k = make_kernel("uniform");
  const auto a = static_report(k, static_spec(), Execution::Serial);
  const auto b = static_report(k, static_spec(), Execution::Parallel);
  CHECK(a.all_converged());
  CHECK(a.kappa_f.value == b.kappa_f.value);
  CHECK(a.defect.value == b.defect.value);
  CHECK_FALSE(a.gradient.gradient);
}
