#include "oracles.hpp"

#include "physbp/error.hpp"
#include "physbp/noise.hpp"
#include "physbp/system.hpp"

#include <doctest.h>

#include <limits>

using namespace physbp;

namespace {

struct Toy {
  std::vector<Matrix> sa, aa, so, ao;
  PhysicalSystem sys;
};

Toy random_toy(RandomStream& rng, Eigen::Index n, Eigen::Index na, Eigen::Index m, std::size_t len,
               double dt, Nonlinearity f) {
  Toy t{oracle::random_taps(na, n, len, rng, 0.6), oracle::random_taps(na, na, len, rng, 0.3),
        oracle::random_taps(m, n, len, rng, 0.6), oracle::random_taps(m, na, len, rng, 0.6),
        PhysicalSystem{Kernel::zeros(na, n, 1, dt), Kernel::zeros(na, na, 1, dt),
                       Kernel::zeros(m, n, 1, dt), Kernel::zeros(m, na, 1, dt), f, std::nullopt, {}}};
  t.aa[0].setZero();
  t.sys.w_sa = Kernel(t.sa, dt);
  t.sys.w_aa = Kernel(t.aa, dt);
  t.sys.w_so = Kernel(t.so, dt);
  t.sys.w_ao = Kernel(t.ao, dt);
  return t;
}

double min_kink_distance(const PhysicalSystem& sys, const ForwardTrace& tr) {
  double d = std::numeric_limits<double>::infinity();
  const Matrix& pre = tr.pre.samples();
  for (Eigen::Index j = 0; j < pre.cols(); ++j)
    for (Eigen::Index i = 0; i < pre.rows(); ++i) d = std::min(d, sys.f.kink_distance(pre(i, j)));
  return d;
}

}  // namespace

TEST_CASE("nonlinearity values and Jacobians") {
  Vector x(3);
  x << 2, -1, 0;
  auto r = Nonlinearity::rectifier().apply(x);
  CHECK(r.value == Vector((Vector(3) << 2, 0, 0).finished()));
  CHECK(r.jac == Vector((Vector(3) << 1, 0, 0).finished()));

  x << 0.5, 1.5, -3;
  r = Nonlinearity::clip(-1, 1).apply(x);
  CHECK(r.value == Vector((Vector(3) << 0.5, 1, -1).finished()));
  CHECK(r.jac == Vector((Vector(3) << 1, 0, 0).finished()));
  CHECK(Nonlinearity::clip(-1, 1).derivative(1.0) == 0.0);

  r = Nonlinearity::identity().apply(x);
  CHECK(r.value == x);
  CHECK(r.jac == Vector::Ones(3));
  CHECK_THROWS_AS(Nonlinearity::clip(1, 1), ConfigError);
}

TEST_CASE("forward matches the naive recursion") {
  RandomStream rng(11);
  const double dt = 0.3;
  const Toy t = random_toy(rng, 2, 3, 2, 4, dt, Nonlinearity::rectifier());
  const Matrix s = oracle::random_matrix(2, 30, rng);
  const ForwardTrace tr = forward(t.sys, Signal(s, dt));
  const auto want = oracle::naive_system(t.sa, t.aa, t.so, t.ao, s, dt, oracle::relu);
  CHECK(oracle::rel(tr.a.samples(), want.a) < 1e-13);
  CHECK(oracle::rel(tr.o.samples(), want.o) < 1e-13);
  for (Eigen::Index j = 0; j < tr.jac.cols(); ++j)
    for (Eigen::Index i = 0; i < tr.jac.rows(); ++i)
      CHECK(tr.jac(i, j) == (tr.pre.samples()(i, j) > 0.0 ? 1.0 : 0.0));
}

TEST_CASE("one hidden layer network") {
  RandomStream rng(12);
  const double dt = 0.25;
  const Matrix ws = oracle::random_matrix(4, 3, rng);
  const Matrix wa = oracle::random_matrix(2, 4, rng);
  const PhysicalSystem sys{Kernel::delta(ws, 0, dt), Kernel::zeros(4, 4, 1, dt),
                           Kernel::zeros(2, 3, 1, dt), Kernel::delta(wa, 0, dt),
                           Nonlinearity::identity(), std::nullopt, {}};
  const Matrix s = oracle::random_matrix(3, 5, rng);
  const ForwardTrace tr = forward(sys, Signal(s, dt));
  CHECK(oracle::rel(tr.o.samples(), wa * ws * s) < 1e-13);
}

TEST_CASE("zero input gives zero trace") {
  RandomStream rng(13);
  const Toy t = random_toy(rng, 2, 3, 2, 4, 0.5, Nonlinearity::rectifier());
  const ForwardTrace tr = forward(t.sys, Signal(2, 20, 0.5));
  CHECK(tr.a.samples().isZero(0.0));
  CHECK(tr.o.samples().isZero(0.0));
}

TEST_CASE("instantaneous feedback is rejected") {
  RandomStream rng(14);
  Toy t = random_toy(rng, 2, 2, 2, 3, 1.0, Nonlinearity::rectifier());
  t.aa[0](0, 1) = 0.1;
  t.sys.w_aa = Kernel(t.aa, 1.0);
  CHECK_THROWS_AS(forward(t.sys, Signal(2, 5, 1.0)), ConfigError);
}

TEST_CASE("strict causality of the full system") {
  RandomStream rng(15);
  const double dt = 0.4;
  const Toy t = random_toy(rng, 2, 3, 2, 5, dt, Nonlinearity::rectifier());
  Matrix s = oracle::random_matrix(2, 25, rng);
  const ForwardTrace a = forward(t.sys, Signal(s, dt));
  s(0, 12) += 0.7;
  const ForwardTrace b = forward(t.sys, Signal(s, dt));
  CHECK(a.a.samples().leftCols(12) == b.a.samples().leftCols(12));
  CHECK(a.o.samples().leftCols(12) == b.o.samples().leftCols(12));
}

TEST_CASE("zero error gives zero backward trace") {
  RandomStream rng(16);
  const Toy t = random_toy(rng, 2, 3, 2, 4, 0.5, Nonlinearity::rectifier());
  const Signal s(oracle::random_matrix(2, 20, rng), 0.5);
  const ForwardTrace tr = forward(t.sys, s);
  const BackwardTrace bt = backward(t.sys, tr, Signal(2, 20, 0.5));
  CHECK(bt.e_a.samples().isZero(0.0));
  CHECK(bt.e_s.samples().isZero(0.0));
}

TEST_CASE("linear case factorizes into kernel adjoints") {
  RandomStream rng(17);
  const double dt = 0.2;
  Toy t = random_toy(rng, 2, 3, 2, 4, dt, Nonlinearity::identity());
  t.sys.w_aa = Kernel::zeros(3, 3, 1, dt);
  const Signal s(oracle::random_matrix(2, 20, rng), dt);
  const Signal e(oracle::random_matrix(2, 20, rng), dt);
  const BackwardTrace bt = backward(t.sys, forward(t.sys, s), e);
  const Matrix e_a = oracle::adjoint_conv(t.ao, e.samples(), dt);
  const Matrix want = oracle::adjoint_conv(t.sa, e_a, dt) + oracle::adjoint_conv(t.so, e.samples(), dt);
  CHECK(oracle::rel(bt.e_a.samples(), e_a) < 1e-13);
  CHECK(oracle::rel(bt.e_s.samples(), want) < 1e-13);
}

TEST_CASE("adjoint consistency of the linear system") {
  RandomStream rng(18);
  for (int trial = 0; trial < 20; ++trial) {
    const double dt = 0.1 + rng.uniform();
    const Toy t = random_toy(rng, 1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(4),
                             2 + rng.below(6), dt, Nonlinearity::identity());
    const auto n = 5 + static_cast<Eigen::Index>(rng.below(40));
    const Signal x(oracle::random_matrix(t.sys.n_inputs(), n, rng), dt);
    const Signal y(oracle::random_matrix(t.sys.n_outputs(), n, rng), dt);
    const ForwardTrace tr = forward(t.sys, x);
    const double lhs = inner(tr.o, y);
    const double rhs = inner(x, backward(t.sys, tr, y).e_s);
    CHECK(std::abs(lhs - rhs) <= 1e-9 * std::max(std::abs(lhs), 1.0));
  }
}

TEST_CASE("input gradient matches finite differences") {
  RandomStream rng(19);
  const double dt = 0.3;
  const double eps = 1e-5;
  int checked = 0;
  for (int attempt = 0; attempt < 200 && checked < 5; ++attempt) {
    const Toy t = random_toy(rng, 2, 3, 2, 4, dt, Nonlinearity::rectifier());
    const Matrix s = oracle::random_matrix(2, 30, rng);
    const Matrix target = oracle::random_matrix(2, 30, rng);
    const ForwardTrace tr = forward(t.sys, Signal(s, dt));
    if (min_kink_distance(t.sys, tr) < 1e-3) continue;
    const auto cost = [&](const Matrix& sp) {
      return 0.5 * (forward(t.sys, Signal(sp, dt)).o.samples() - target).squaredNorm();
    };
    const Signal e_o(tr.o.samples() - target, dt);
    const Matrix g = backward(t.sys, tr, e_o).e_s.samples();
    Matrix fd(s.rows(), s.cols());
    for (Eigen::Index j = 0; j < s.cols(); ++j)
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        Matrix sp = s, sm = s;
        sp(i, j) += eps;
        sm(i, j) -= eps;
        fd(i, j) = (cost(sp) - cost(sm)) / (2 * eps);
      }
    CHECK(oracle::rel(g, fd) < 1e-6);
    ++checked;
  }
  CHECK(checked == 5);
}

TEST_CASE("backward path gain is compensated exactly") {
  RandomStream rng(20);
  const double dt = 0.3;
  Toy t = random_toy(rng, 2, 3, 2, 4, dt, Nonlinearity::rectifier());
  const Signal s(oracle::random_matrix(2, 30, rng), dt);
  const Signal e(oracle::random_matrix(2, 30, rng), dt);
  const ForwardTrace tr = forward(t.sys, s);
  const BackwardTrace plain = backward(t.sys, tr, e);
  t.sys.backward_path = BackwardPath{true, 0.5, 0.3, false};
  const BackwardTrace scaled = backward(t.sys, tr, e);
  CHECK(scaled.injection_gain != doctest::Approx(1.0));
  CHECK(oracle::rel(plain.e_s.samples(), scaled.e_s.samples()) < 1e-13);
  CHECK(oracle::rel(plain.e_a.samples(), scaled.e_a.samples()) < 1e-13);
}

TEST_CASE("omitting the transpose breaks the adjoint") {
  RandomStream rng(21);
  const double dt = 0.3;
  const Toy t = random_toy(rng, 3, 3, 3, 4, dt, Nonlinearity::identity());
  const Signal s(oracle::random_matrix(3, 20, rng), dt);
  const Signal e(oracle::random_matrix(3, 20, rng), dt);
  const ForwardTrace tr = forward(t.sys, s);
  const BackwardTrace good = backward(t.sys, tr, e);
  const BackwardTrace bad = backward(t.sys, tr, e, nullptr, BackwardOptions{true});
  CHECK(oracle::rel(good.e_s.samples(), bad.e_s.samples()) > 1e-3);
}

TEST_CASE("measurement noise has the configured SNR") {
  RandomStream rng(22);
  const Signal x(oracle::random_matrix(2, 50000, rng), 1.0);
  const Signal y = add_measurement_noise(x, 18.0, rng);
  const double noise_power = (y.samples() - x.samples()).squaredNorm() / 100000.0;
  const double signal_power = x.samples().squaredNorm() / 100000.0;
  CHECK(10.0 * std::log10(signal_power / noise_power) == doctest::Approx(18.0).epsilon(0.01));
  CHECK(add_measurement_noise(Signal(1, 10, 1.0), 18.0, rng).samples().isZero(0.0));
  CHECK(add_measurement_noise(x, std::numeric_limits<double>::infinity(), rng).samples() ==
        x.samples());
}

TEST_CASE("noisy forward is deterministic per seed and requires a stream") {
  RandomStream rng(23);
  Toy t = random_toy(rng, 2, 3, 2, 4, 0.5, Nonlinearity::rectifier());
  t.sys.noise = NoiseModel{10.0, true, true};
  const Signal s(oracle::random_matrix(2, 40, rng), 0.5);
  RandomStream r1(99), r2(99), r3(100);
  const ForwardTrace a = forward(t.sys, s, &r1);
  const ForwardTrace b = forward(t.sys, s, &r2);
  const ForwardTrace c = forward(t.sys, s, &r3);
  CHECK(a.o.samples() == b.o.samples());
  CHECK(a.o.samples() != c.o.samples());
  CHECK_THROWS_AS(forward(t.sys, s), ConfigError);
}
