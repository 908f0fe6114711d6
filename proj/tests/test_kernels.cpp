#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mesokappa/kernels.hpp"

using namespace mesokappa;

namespace {

struct Triple {
  double ea, eb, eta;
};

Triple random_triple(RngStream& rng) {
  const double ea = rng.exponential(1.0), eb = rng.exponential(1.0);
  return {ea, eb, -eb + (ea + eb) * rng.uniform()};
}

}  // namespace

TEST_CASE("built-in kernels carry their cell dimension") {
  CHECK(make_kernel("gg2").dimension() == 2);
  CHECK(make_kernel("gg3").dimension() == 3);
  CHECK(make_kernel("root-eta").dimension() == 2);
  CHECK(make_kernel("uniform").dimension() == 2);
  try {
    make_kernel("gg4");
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    for (const auto& n : kernel_names()) CHECK(msg.find(n) != std::string::npos);
  }
}

TEST_CASE("eval_W reference values") {
  const auto gg3 = make_kernel("gg3");
  CHECK(eval_W(gg3, 1.0, 1.0, 0.5) == doctest::Approx(std::sqrt(std::numbers::pi / 16.0)).epsilon(1e-15));
  CHECK(eval_W(gg3, 1.0, 1.0, 0.5) == doctest::Approx(0.44311).epsilon(1e-5));
  const auto root = make_kernel("root-eta");
  CHECK(eval_W(root, 1.0, 1.0, 0.25) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(eval_W(root, 3.0, 0.5, 0.25) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(eval_W(root, 1.0, 1.0, 1.5), std::domain_error);
  CHECK_THROWS_AS(eval_W(root, 1.0, 1.0, -1.0), std::domain_error);
}

TEST_CASE("eval_W is homogeneous of degree -1/2") {
  RngStream rng(1, 0);
  for (const auto& name : kernel_names()) {
    const auto k = make_kernel(name);
    for (int i = 0; i < 2000; ++i) {
      const auto t = random_triple(rng);
      const double w = eval_W(k, t.ea, t.eb, t.eta);
      for (double c : {0.1, 10.0, 1e-3, 1.0, 1e3}) {
        const double wc = eval_W(k, c * t.ea, c * t.eb, c * t.eta);
        CHECK(std::abs(wc - w / std::sqrt(c)) <= 1e-12 * w / std::sqrt(c));
      }
    }
  }
}

TEST_CASE("eval_tilde reference values") {
  CHECK(eval_tilde(make_kernel("gg3"), 0.5, 0.5) == doctest::Approx(std::sqrt(std::numbers::pi / 16.0)).epsilon(1e-15));
  // √(2/π³)/√0.3 · K(√(2/3)), high-precision reference.
  CHECK(eval_tilde(make_kernel("gg2"), 0.2, 0.7) == doctest::Approx(0.94081201389396774).epsilon(1e-14));
  CHECK(eval_tilde(make_kernel("uniform"), 0.3, 0.9) == 1.0);
  CHECK_THROWS_AS(eval_tilde(make_kernel("gg2"), 0.25, 0.75), std::domain_error);
  CHECK_THROWS_AS(eval_tilde(make_kernel("root-eta"), 0.4, 0.4), std::domain_error);
  CHECK_THROWS_AS(eval_tilde(make_kernel("uniform"), 0.0, 0.4), std::domain_error);
}

TEST_CASE("gg2 reduced form reproduces the piecewise energy formula") {
  const auto k = make_kernel("gg2");
  RngStream rng(2, 0);
  int checked = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto t = random_triple(rng);
    if (t.eta == 0.0 || t.eta == t.ea - t.eb) continue;
    const double w = eval_W(k, t.ea, t.eb, t.eta);
    const double ref = gg2_piecewise(t.ea, t.eb, t.eta);
    // The piecewise path loses digits in K next to the log singularity.
    CHECK(std::abs(w - ref) <= 1e-10 * ref);
    ++checked;
  }
  CHECK(checked > 9990);
}

TEST_CASE("gg3 reduced form reproduces the piecewise energy formula") {
  const auto k = make_kernel("gg3");
  RngStream rng(3, 0);
  for (int i = 0; i < 10000; ++i) {
    const auto t = random_triple(rng);
    const double w = eval_W(k, t.ea, t.eb, t.eta);
    CHECK(std::abs(w - gg3_piecewise(t.ea, t.eb, t.eta)) <= 1e-12 * w);
  }
}

TEST_CASE("gg2 symmetric extension holds exactly") {
  const auto k = make_kernel("gg2");
  RngStream rng(4, 0);
  for (int i = 0; i < 10000; ++i) {
    const auto t = random_triple(rng);
    CHECK(eval_W(k, t.ea, t.eb, t.eta) == eval_W(k, t.eb, t.ea, -t.eta));
  }
}

TEST_CASE("W-tilde swap and reflection symmetry for every built-in kernel") {
  RngStream rng(5, 0);
  for (const auto& name : kernel_names()) {
    const auto k = make_kernel(name);
    for (int i = 0; i < 10000; ++i) {
      // Dyadic points, so that 1-a and 1-b are exact.
      const double a = (std::floor(rng.uniform() * 1048576.0) + 0.5) / 1048576.0;
      const double b = (std::floor(rng.uniform() * 1048576.0) + 0.25) / 1048576.0;
      const double w = eval_tilde(k, a, b);
      CHECK(std::abs(w - eval_tilde(k, b, a)) <= 1e-12 * w);
      CHECK(std::abs(w - eval_tilde(k, 1.0 - a, 1.0 - b)) <= 1e-12 * w);
      CHECK(std::abs(w - eval_tilde(k, 1.0 - b, 1.0 - a)) <= 1e-12 * w);
    }
  }
}

TEST_CASE("check_conditions on valid and broken kernels") {
  RngStream rng(6, 0);
  const auto rep = check_conditions(make_kernel("gg3"), 10000, 1e-9, rng);
  CHECK(rep.all_pass());
  CHECK(rep.samples == 10000);
  CHECK(rep.homogeneity.worst_residual < 1e-12);
  CHECK(rep.symmetry.worst_residual < 1e-12);
  CHECK(rep.balance.worst_residual < 1e-12);

  CHECK(check_conditions(make_kernel("uniform"), 10000, 1e-9, rng).all_pass());
  CHECK(check_conditions(make_kernel("gg2"), 10000, 1e-9, rng).all_pass());
  CHECK(check_conditions(make_kernel("root-eta"), 10000, 1e-9, rng).all_pass());

  const auto bad = check_conditions(make_broken_alpha_kernel(), 10000, 1e-9, rng);
  CHECK_FALSE(bad.symmetry.pass);
  CHECK(bad.symmetry.worst_residual >= 0.5);
  CHECK_FALSE(bad.all_pass());
  CHECK_THROWS(check_conditions(make_kernel("gg3"), 0, 1e-9, rng));
}

TEST_CASE("closed-form profiles match quadrature of the reduced kernel") {
  RngStream rng(7, 0);
  QuadratureSpec spec;
  spec.abs_tol = spec.rel_tol = 1e-12;
  for (const auto& name : {"gg3", "root-eta", "uniform"}) {
    const auto k = make_kernel(name);
    for (int i = 0; i < 100; ++i) {
      const double a = rng.uniform();
      const double bps[3] = {a, 1.0 - a, 0.5};
      const SimplexPoint ap = simplex_point(a, a);
      auto at = [&](const AnchoredPoint& b) { return simplex_point(ap, b, true, true); };
      const auto nu = integrate_1d([&](const AnchoredPoint& b) { return k.reduced(at(b)); }, 0.0,
                                   1.0, spec, bps);
      const auto cur = integrate_1d(
          [&](const AnchoredPoint& b) {
            const auto p = at(b);
            return p.diff * k.reduced(p);
          },
          0.0, 1.0, spec, bps);
      CHECK(std::abs(nu.value - k.nu_bar(a)) < 1e-9);
      CHECK(std::abs(cur.value - k.current_bar(a)) < 1e-9);
    }
  }
  CHECK_FALSE(make_kernel("gg2").has_nu_bar());
  CHECK_THROWS_AS(make_kernel("gg2").nu_bar(0.3), std::logic_error);
}
