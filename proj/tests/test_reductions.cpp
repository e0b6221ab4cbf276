#include "oracles.hpp"

#include "physbp/gradients.hpp"
#include "physbp/reductions.hpp"

#include <doctest.h>

using namespace physbp;

namespace {

// Independent dense recursions written against the definitions.
Vector mlp_oracle(const std::vector<Matrix>& w, const Vector& s, bool rectify = true) {
  Vector h = s;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    Vector x = w[l] * h;
    if (rectify)
      for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = oracle::relu(x(i));
    h = x;
  }
  return w.back() * h;
}

double rnn_loss(const DenseRNN& r, const std::vector<Vector>& xs, const std::vector<Vector>& ys) {
  Vector h = Vector::Zero(r.w_a.rows());
  double c = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    Vector x = r.w_s * xs[k] + r.w_a * h;
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = oracle::relu(x(i));
    h = x;
    c += 0.5 * (r.w_o * h - ys[k]).squaredNorm();
  }
  return c;
}

DenseRNN random_rnn(RandomStream& rng, std::size_t period) {
  DenseRNN r{oracle::random_matrix(4, 3, rng), oracle::random_matrix(4, 4, rng, 0.4),
             oracle::random_matrix(2, 4, rng), Nonlinearity::rectifier(), period};
  return r;
}

std::vector<Vector> random_vectors(std::size_t n, Eigen::Index d, RandomStream& rng) {
  std::vector<Vector> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(oracle::random_matrix(d, 1, rng));
  return v;
}

}  // namespace

TEST_CASE("one hidden identity layer settles to the matrix product") {
  RandomStream rng(91);
  const DenseNet net{{oracle::random_matrix(4, 3, rng), oracle::random_matrix(2, 4, rng)},
                     Nonlinearity::identity()};
  const Vector s = oracle::random_matrix(3, 1, rng);
  const PhysicalSystem sys = build_mlp_system(net, 0.3);
  const ForwardTrace t = forward(sys, hold_inputs({s}, 3, 0.3));
  const Vector expect = net.weights[1] * net.weights[0] * s;
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(oracle::rel(t.o.samples().col(i), expect) < 1e-12);
}

TEST_CASE("three-layer rectifier net matches the dense oracle after settling") {
  RandomStream rng(92);
  const DenseNet net{{oracle::random_matrix(5, 3, rng), oracle::random_matrix(4, 5, rng),
                      oracle::random_matrix(6, 4, rng), oracle::random_matrix(2, 6, rng)},
                     Nonlinearity::rectifier()};
  const Vector s = oracle::random_matrix(3, 1, rng);
  const ForwardTrace t = forward(build_mlp_system(net, 0.7, 2), hold_inputs({s}, 8, 0.7));
  const Vector expect = mlp_oracle(net.weights, s);
  CHECK(oracle::rel(dense_mlp_forward(net, s), expect) < 1e-12);
  for (Eigen::Index i = 2; i < 8; ++i) CHECK(oracle::rel(t.o.samples().col(i), expect) < 1e-10);
}

TEST_CASE("a held input change reaches the output exactly L-1 samples later") {
  RandomStream rng(93);
  const DenseNet net{{oracle::random_matrix(4, 2, rng), oracle::random_matrix(4, 4, rng),
                      oracle::random_matrix(4, 4, rng), oracle::random_matrix(1, 4, rng)},
                     Nonlinearity::identity()};
  const double dt = 1.0;
  const Vector s0 = oracle::random_matrix(2, 1, rng);
  const Vector s1 = oracle::random_matrix(2, 1, rng);
  const std::size_t hold = 6;
  const ForwardTrace t = forward(build_mlp_system(net, dt), hold_inputs({s0, s1}, hold, dt));
  const Vector before = mlp_oracle(net.weights, s0, false);
  const Vector after = mlp_oracle(net.weights, s1, false);
  const Eigen::Index change = static_cast<Eigen::Index>(hold);
  const Eigen::Index settle = static_cast<Eigen::Index>(net.hidden_layers()) - 1;
  for (Eigen::Index i = settle; i < change + settle; ++i)
    CHECK(oracle::rel(t.o.samples().col(i), before) < 1e-12);
  CHECK(oracle::rel(t.o.samples().col(change + settle - 1), after) > 1e-6);
  for (Eigen::Index i = change + settle; i < 2 * change; ++i)
    CHECK(oracle::rel(t.o.samples().col(i), after) < 1e-12);
}

TEST_CASE("feedforward RNN reduces to a per-step map") {
  RandomStream rng(94);
  DenseRNN r = random_rnn(rng, 2);
  r.w_a.setZero();
  const auto xs = random_vectors(10, 3, rng);
  const DenseRNNTrace tr = dense_rnn_forward(r, xs);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    Vector h = r.w_s * xs[k];
    for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = oracle::relu(h(i));
    CHECK(oracle::rel(tr.o[k], r.w_o * h) < 1e-14);
  }
}

TEST_CASE("RNN state trajectory matches the dense recursion") {
  RandomStream rng(95);
  const DenseRNN r = random_rnn(rng, 3);
  const auto xs = random_vectors(30, 3, rng);
  const double dt = 0.4;
  const ForwardTrace t = forward(build_rnn_system(r, dt, 1), hold_inputs(xs, r.period, dt));
  const DenseRNNTrace tr = dense_rnn_forward(r, xs);
  for (std::size_t k = 0; k < xs.size(); ++k)
    CHECK(oracle::rel(t.a.samples().col(static_cast<Eigen::Index>(k * r.period)), tr.h[k]) < 1e-10);
}

TEST_CASE("dense BPTT matches finite differences of the dense loss") {
  RandomStream rng(96);
  const DenseRNN r = random_rnn(rng, 1);
  const auto xs = random_vectors(12, 3, rng);
  const auto ys = random_vectors(12, 2, rng);
  const DenseRNNGradients g = dense_rnn_bptt(r, xs, ys);
  const auto fd = [&](Matrix DenseRNN::*member) {
    DenseRNN p = r;
    Matrix out((p.*member).rows(), (p.*member).cols());
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      const double v = (p.*member).reshaped()(i);
      (p.*member).reshaped()(i) = v + 1e-6;
      const double up = rnn_loss(p, xs, ys);
      (p.*member).reshaped()(i) = v - 1e-6;
      const double down = rnn_loss(p, xs, ys);
      (p.*member).reshaped()(i) = v;
      out.reshaped()(i) = (up - down) / 2e-6;
    }
    return out;
  };
  CHECK(oracle::rel(g.d_w_s, fd(&DenseRNN::w_s)) < 1e-6);
  CHECK(oracle::rel(g.d_w_a, fd(&DenseRNN::w_a)) < 1e-6);
  CHECK(oracle::rel(g.d_w_o, fd(&DenseRNN::w_o)) < 1e-6);
}

TEST_CASE("physical backpropagation on the RNN system equals BPTT") {
  RandomStream rng(97);
  const DenseRNN r = random_rnn(rng, 2);
  const auto xs = random_vectors(15, 3, rng);
  const auto ys = random_vectors(15, 2, rng);
  const double dt = 0.6;
  const PhysicalSystem sys = build_rnn_system(r, dt);
  const Signal s = hold_inputs(xs, r.period, dt);
  const ForwardTrace t = forward(sys, s);
  Matrix e = Matrix::Zero(2, s.n_samples());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Eigen::Index at = static_cast<Eigen::Index>(k * r.period);
    e.col(at) = t.o.samples().col(at) - ys[k];
  }
  const Signal e_o(e, dt);
  const BackwardTrace b = backward(sys, t, e_o);
  GradientBundle g;
  kernel_gradients(sys, s, t, e_o, b, g);
  const DenseRNNGradients d = dense_rnn_bptt(r, xs, ys);
  CHECK(oracle::rel(g.d_w_sa[0] / dt, d.d_w_s) < 1e-8);
  CHECK(oracle::rel(g.d_w_aa[r.period] / dt, d.d_w_a) < 1e-8);
  CHECK(oracle::rel(g.d_w_ao[0] / dt, d.d_w_o) < 1e-8);
}

TEST_CASE("randomized reduction sweep") {
  const ReductionReport a = check_reductions(50, 1);
  CHECK(a.instances == 50);
  CHECK(a.pass());
  CHECK(a.mlp_max_err < 1e-10);
  CHECK(a.rnn_forward_max_err < 1e-10);
  CHECK(a.rnn_grad_max_err < 1e-8);
  const ReductionReport b = check_reductions(50, 1);
  CHECK(a.mlp_max_err == b.mlp_max_err);
  CHECK(a.rnn_grad_max_err == b.rnn_grad_max_err);
}

TEST_CASE("reduction inputs are validated") {
  DenseNet one{{Matrix::Identity(2, 2)}, Nonlinearity::rectifier()};
  CHECK_THROWS(one.validate());
  RandomStream rng(98);
  DenseRNN r = random_rnn(rng, 0);
  CHECK_THROWS(r.validate());
}
