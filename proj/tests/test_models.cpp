#include "oracles.hpp"

#include "physbp/error.hpp"
#include "physbp/gradients.hpp"
#include "physbp/models.hpp"

#include <doctest.h>

#include <complex>
#include <sstream>

using namespace physbp;

namespace {

std::vector<double> scalar_taps(const Kernel& k) {
  std::vector<double> v;
  for (const auto& t : k.taps()) v.push_back(t(0, 0));
  return v;
}

double magnitude(const std::vector<double>& h, double f, double dt) {
  std::complex<double> acc = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i)
    acc += h[i] * std::polar(1.0, -2.0 * M_PI * f * static_cast<double>(i) * dt);
  return std::abs(acc) * dt;
}

}  // namespace

TEST_CASE("tube kernel: single impulse at the direct delay") {
  TubeParams p;
  p.reflection_coeff = 0.0;
  p.bandpass = false;
  CHECK(p.direct_delay() == 700);
  RandomStream rng(51);
  const Kernel k = make_tube_kernel(p, rng);
  const auto h = scalar_taps(k);
  CHECK(k.active_taps() == std::vector<std::size_t>{700});
  CHECK(h[700] * k.dt() == doctest::Approx(p.gain));
  CHECK(h[0] == 0.0);
}

TEST_CASE("tube kernel: echo train amplitudes and positions") {
  TubeParams p;
  p.bandpass = false;
  p.sample_rate = 8000;
  RandomStream rng(52);
  const Kernel k = make_tube_kernel(p, rng);
  const std::size_t d0 = p.direct_delay();
  CHECK(k.active_taps() == std::vector<std::size_t>{d0, 3 * d0, 5 * d0});
  CHECK(k.tap(3 * d0)(0, 0) * k.dt() == doctest::Approx(p.gain * p.reflection_coeff));
  CHECK(k.tap(5 * d0)(0, 0) * k.dt() == doctest::Approx(p.gain * 0.25));
}

TEST_CASE("tube kernel: resonances at c / 2L spacing") {
  TubeParams p;
  p.bandpass = false;
  p.reflection_coeff = 0.8;
  p.n_echoes = 12;
  RandomStream rng(53);
  const Kernel k = make_tube_kernel(p, rng);
  const auto h = scalar_taps(k);
  const double spacing = 1.0 / (2.0 * static_cast<double>(p.direct_delay()) * k.dt());
  CHECK(spacing == doctest::Approx(p.speed_of_sound / (2.0 * p.length_m)).epsilon(0.01));
  for (int j = 1; j < 10; ++j) {
    const double peak = magnitude(h, j * spacing, k.dt());
    const double trough = magnitude(h, (j + 0.5) * spacing, k.dt());
    CHECK(peak > 5.0 * trough);
  }
}

TEST_CASE("tube kernel: band-pass shapes the spectrum and tap 0 stays zero") {
  TubeParams p;
  p.sample_rate = 8000;
  p.reflection_coeff = 0.0;
  RandomStream rng(54);
  const Kernel k = make_tube_kernel(p, rng);
  const auto h = scalar_taps(k);
  CHECK(h[0] == 0.0);
  const double centre = magnitude(h, 0.5 * (p.low_hz + p.high_hz), k.dt());
  CHECK(centre == doctest::Approx(p.gain).epsilon(1e-9));
  CHECK(magnitude(h, 3900.0, k.dt()) < 0.05 * p.gain);
  CHECK(magnitude(h, 0.0, k.dt()) < 0.3 * p.gain);
}

TEST_CASE("tube parameter validation") {
  TubeParams p;
  p.kernel_len = 100;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = TubeParams{};
  p.reflection_coeff = 1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = TubeParams{};
  p.filter_taps = 64;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("acoustic plant equals the direct scalar recursion") {
  TubeParams p;
  p.sample_rate = 4000;
  p.high_hz = 1500;
  RandomStream rng(55);
  const Kernel k = make_tube_kernel(p, rng);
  const PlantTemplate plant = make_acoustic_system(k);
  CHECK(plant.masks.period() == 1000);
  CHECK(plant.system.f.kind == Nonlinearity::Kind::rectifier);

  const Eigen::Index n = 1500;
  Matrix s = oracle::random_matrix(1, n, rng);
  const ForwardTrace tr = forward(plant.system, Signal(s, k.dt()));
  const auto h = scalar_taps(k);
  Matrix a = Matrix::Zero(1, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double x = 0.0;
    for (std::size_t j = 0; j < h.size() && static_cast<Eigen::Index>(j) <= i; ++j)
      x += k.dt() * h[j] * (s(0, i - j) + a(0, i - j));
    a(0, i) = std::max(0.0, x);
  }
  CHECK(oracle::rel(tr.a.samples(), a) < 1e-10);
  CHECK(oracle::rel(tr.o.samples(), a) < 1e-10);

  // Impulse input.
  Matrix imp = Matrix::Zero(1, n);
  imp(0, 0) = 1.0 / k.dt();
  const ForwardTrace ti = forward(plant.system, Signal(imp, k.dt()));
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(p.direct_delay()); ++i)
    CHECK(ti.o.samples()(0, i) == 0.0);
}

TEST_CASE("acoustic plant: zero kernel gives zero output; rate of 40 instances per second") {
  const PlantTemplate plant = make_acoustic_system(Kernel::zeros(1, 1, 10, 1.0 / 40000));
  RandomStream rng(56);
  const ForwardTrace tr = forward(plant.system, Signal(oracle::random_matrix(1, 50, rng), 1.0 / 40000));
  CHECK(tr.o.samples().isZero(0.0));
  CHECK(40000.0 / static_cast<double>(plant.masks.period()) == 40.0);
  CHECK_THROWS_AS(make_acoustic_system(Kernel::zeros(2, 1, 3, 1.0)), DimensionError);
}

TEST_CASE("optical plant with W = 0 passes the input through the clip") {
  OpticalParams p;
  p.noise = false;
  const PlantTemplate plant = make_optical_system(p, Matrix::Zero(20, 20));
  RandomStream rng(57);
  const Matrix s = oracle::random_matrix(20, 60, rng, 0.3).cwiseMax(-1.0).cwiseMin(1.0);
  const ForwardTrace tr = forward(plant.system, Signal(s, 1.0));
  CHECK(oracle::rel(tr.a.samples(), s) < 1e-14);
  CHECK(oracle::rel(tr.o.samples(), s) < 1e-14);
}

TEST_CASE("optical plant is the discrete delay recurrence") {
  OpticalParams p;
  p.noise = false;
  RandomStream rng(58);
  const Matrix w = random_optical_weights(p, 0.5, rng);
  const PlantTemplate plant = make_optical_system(p, w);
  const Eigen::Index n = 400;
  const Matrix s = oracle::random_matrix(20, n, rng, 0.7);
  const ForwardTrace tr = forward(plant.system, Signal(s, 1.0));
  Matrix a = Matrix::Zero(20, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector x = s.col(i);
    if (i >= 109) x += w * a.col(i - 109);
    a.col(i) = x.cwiseMax(-1.0).cwiseMin(1.0);
  }
  CHECK(oracle::rel(tr.a.samples(), a) < 1e-13);
  CHECK(plant.kernel_trainables.size() == 1);
  CHECK(plant.kernel_trainables[0].taps == std::vector<std::size_t>{109});
}

TEST_CASE("optical state update straddles instance boundaries by D - P samples") {
  OpticalParams p;
  p.noise = false;
  p.n_nodes = 2;
  Matrix w(2, 2);
  w << 0.0, 0.5, 0.5, 0.0;
  const PlantTemplate plant = make_optical_system(p, w);
  Matrix s = Matrix::Constant(2, 400, 0.1);
  const ForwardTrace base = forward(plant.system, Signal(s, 1.0));
  s(0, 0) += 0.2;  // perturb first sample of instance 0
  const ForwardTrace bumped = forward(plant.system, Signal(s, 1.0));
  const Matrix diff = (bumped.a.samples() - base.a.samples()).cwiseAbs();
  // The first downstream effect appears at sample 109, i.e. 9 samples into instance 1.
  Eigen::Index first = -1;
  for (Eigen::Index i = 1; i < 400 && first < 0; ++i)
    if (diff.col(i).maxCoeff() > 0.0) first = i;
  CHECK(first == 109);
  CHECK(first - p.period == 9);
}

TEST_CASE("optical gradients match finite differences without noise or clipping") {
  OpticalParams p;
  p.noise = false;
  p.n_nodes = 3;
  p.delay_samples = 4;
  p.period = 3;
  p.backward_error_scale = 1.0;
  p.backward_clip = false;
  RandomStream rng(59);
  const PlantTemplate plant = make_optical_system(p, random_optical_weights(p, 0.2, rng));
  Parameters params{plant.system, plant.masks};
  for (auto& m : params.masks.m) m = oracle::random_matrix(3, 1, rng, 0.15);
  for (auto& u : params.masks.u) u = oracle::random_matrix(1, 3, rng);
  SequenceDataset data;
  for (int i = 0; i < 8; ++i) {
    data.inputs.push_back(oracle::random_matrix(1, 1, rng));
    data.targets.push_back(oracle::random_matrix(1, 1, rng));
    data.cost_mask.push_back(true);
  }
  const RandomStream noise(1);
  GradientRequest req = GradientRequest::all();
  const BatchEvaluation ev = evaluate_batch(params, {data}, CostKind::mse, req, noise);
  const Matrix& pre = ev.traces[0].pre.samples();
  REQUIRE(pre.cwiseAbs().maxCoeff() < 0.99);
  for (Block b : {Block::w_aa, Block::m, Block::u}) {
    const auto loss = [&](const Vector& v) {
      Parameters q = params;
      assign(q, b, v);
      return evaluate_batch(q, {data}, CostKind::mse, GradientRequest::none(), noise).cost;
    };
    const Vector fd = finite_difference_gradient(loss, flatten(params, b), 1e-5);
    INFO(block_name(b));
    CHECK(relative_error(flatten(ev.grads, b), fd) < 1e-5);
  }
}

TEST_CASE("optical weight bound") {
  OpticalParams p;
  Matrix w = Matrix::Zero(20, 20);
  w(3, 4) = 2.5;
  CHECK_THROWS_AS(make_optical_system(p, w), ConstraintError);
  RandomStream rng(60);
  CHECK(random_optical_weights(p, 10.0, rng).cwiseAbs().maxCoeff() <= 2.0);
}

TEST_CASE("intensity split") {
  const IntensitySplit zero = intensity_split(Matrix::Zero(3, 3));
  CHECK(zero.w1 == Matrix::Ones(3, 3));
  CHECK(zero.w2 == Matrix::Ones(3, 3));

  Matrix edge = Matrix::Zero(2, 2);
  edge(0, 1) = 2.0;
  const IntensitySplit e = intensity_split(edge);
  CHECK(e.w1(0, 1) == 2.0);
  CHECK(e.w2(0, 1) == 0.0);

  RandomStream rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix w = oracle::random_matrix(5, 5, rng).cwiseMax(-2.0).cwiseMin(2.0);
    const IntensitySplit s = intensity_split(w);
    CHECK(s.w1.minCoeff() >= 0.0);
    CHECK(s.w2.minCoeff() >= 0.0);
    const Vector a = oracle::random_matrix(5, 1, rng);
    const Vector k = Vector::Ones(5);
    // Intensities k + a and k - a through the two modulator arrays.
    const Vector recombined = s.w1 * (k + a) + s.w2 * (k - a);
    const Vector bias = (s.w1 + s.w2) * k;
    CHECK((bias - 2.0 * Matrix::Ones(5, 5) * k).norm() < 1e-12);
    CHECK(((recombined - bias) - w * a).norm() < 1e-12);
  }
  CHECK_THROWS_AS(intensity_split(Matrix::Constant(1, 1, -2.1)), ConstraintError);
}

TEST_CASE("kernel CSV export") {
  const Kernel k = Kernel::delta(Matrix::Identity(2, 2), 2, 0.5);
  std::stringstream ss;
  write_kernel_csv(ss, k);
  std::string header;
  std::getline(ss, header);
  CHECK(header == "t,w_0_0,w_0_1,w_1_0,w_1_1");
  int rows = 0;
  for (std::string line; std::getline(ss, line);) ++rows;
  CHECK(rows == 3);
}
