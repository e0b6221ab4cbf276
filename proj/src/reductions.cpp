#include "physbp/reductions.hpp"

#include "physbp/error.hpp"
#include "physbp/gradients.hpp"

#include <algorithm>
#include <cmath>

namespace physbp {

void DenseNet::validate() const {
  if (weights.size() < 2) throw ConfigError("DenseNet: need W_0 and at least one more layer");
  for (std::size_t l = 1; l < weights.size(); ++l)
    if (weights[l].cols() != weights[l - 1].rows())
      throw DimensionError("DenseNet: layer shapes do not chain");
  f.validate();
}

void DenseRNN::validate() const {
  if (w_a.rows() != w_a.cols()) throw DimensionError("DenseRNN: W_a must be square");
  if (w_s.rows() != w_a.rows() || w_o.cols() != w_a.rows())
    throw DimensionError("DenseRNN: W_s rows and W_o cols must equal the state size");
  if (period < 1) throw ConfigError("DenseRNN: period must be >= 1 sample");
  f.validate();
}

Vector dense_mlp_forward(const DenseNet& net, const Vector& s) {
  net.validate();
  Vector h = s;
  for (std::size_t l = 0; l + 1 < net.weights.size(); ++l) h = net.f.apply(net.weights[l] * h).value;
  return net.weights.back() * h;
}

DenseRNNTrace dense_rnn_forward(const DenseRNN& rnn, const std::vector<Vector>& inputs) {
  rnn.validate();
  DenseRNNTrace tr;
  Vector h = Vector::Zero(rnn.w_a.rows());
  for (const auto& s : inputs) {
    Vector pre = rnn.w_s * s + rnn.w_a * h;
    h = rnn.f.apply(pre).value;
    tr.pre.push_back(std::move(pre));
    tr.h.push_back(h);
    tr.o.push_back(rnn.w_o * h);
  }
  return tr;
}

DenseRNNGradients dense_rnn_bptt(const DenseRNN& rnn, const std::vector<Vector>& inputs,
                                 const std::vector<Vector>& targets) {
  const DenseRNNTrace tr = dense_rnn_forward(rnn, inputs);
  const std::size_t n = inputs.size();
  DenseRNNGradients g{Matrix::Zero(rnn.w_s.rows(), rnn.w_s.cols()),
                      Matrix::Zero(rnn.w_a.rows(), rnn.w_a.cols()),
                      Matrix::Zero(rnn.w_o.rows(), rnn.w_o.cols())};
  Vector delta_next = Vector::Zero(rnn.w_a.rows());
  for (std::size_t k = n; k-- > 0;) {
    const Vector e = tr.o[k] - targets[k];
    g.d_w_o += e * tr.h[k].transpose();
    Vector delta = rnn.w_o.transpose() * e + rnn.w_a.transpose() * delta_next;
    for (Eigen::Index i = 0; i < delta.size(); ++i) delta[i] *= rnn.f.derivative(tr.pre[k][i]);
    g.d_w_s += delta * inputs[k].transpose();
    if (k > 0) g.d_w_a += delta * tr.h[k - 1].transpose();
    delta_next = std::move(delta);
  }
  return g;
}

namespace {

Kernel padded_delta(const Matrix& value, std::size_t lag, double dt, std::size_t extra) {
  std::vector<Matrix> taps(lag + 1 + extra, Matrix::Zero(value.rows(), value.cols()));
  taps[lag] = value / dt;
  return Kernel(std::move(taps), dt);
}

}  // namespace

PhysicalSystem build_mlp_system(const DenseNet& net, double dt, std::size_t extra_taps) {
  net.validate();
  const std::size_t hidden = net.hidden_layers();
  std::vector<Eigen::Index> offset(hidden + 1, 0);
  for (std::size_t l = 0; l < hidden; ++l) offset[l + 1] = offset[l] + net.weights[l].rows();
  const Eigen::Index na = offset[hidden];
  const Eigen::Index n = net.weights.front().cols();
  const Eigen::Index m = net.weights.back().rows();

  Matrix w_s = Matrix::Zero(na, n);
  w_s.topRows(net.weights[0].rows()) = net.weights[0];
  Matrix w_chain = Matrix::Zero(na, na);
  for (std::size_t l = 1; l < hidden; ++l)
    w_chain.block(offset[l], offset[l - 1], net.weights[l].rows(), net.weights[l].cols()) =
        net.weights[l];
  Matrix w_out = Matrix::Zero(m, na);
  w_out.rightCols(net.weights[hidden - 1].rows()) = net.weights.back();

  PhysicalSystem sys{padded_delta(w_s, 0, dt, extra_taps),
                     padded_delta(w_chain, 1, dt, extra_taps),
                     Kernel::zeros(m, n, 1 + extra_taps, dt),
                     padded_delta(w_out, 0, dt, extra_taps),
                     net.f,
                     std::nullopt,
                     {}};
  sys.validate();
  return sys;
}

PhysicalSystem build_rnn_system(const DenseRNN& rnn, double dt, std::size_t extra_taps) {
  rnn.validate();
  PhysicalSystem sys{padded_delta(rnn.w_s, 0, dt, extra_taps),
                     padded_delta(rnn.w_a, rnn.period, dt, extra_taps),
                     Kernel::zeros(rnn.w_o.rows(), rnn.w_s.cols(), 1 + extra_taps, dt),
                     padded_delta(rnn.w_o, 0, dt, extra_taps),
                     rnn.f,
                     std::nullopt,
                     {}};
  sys.validate();
  return sys;
}

Signal hold_inputs(const std::vector<Vector>& inputs, std::size_t period, double dt) {
  if (inputs.empty()) throw LengthError("hold_inputs: empty sequence");
  const auto p = static_cast<Eigen::Index>(period);
  Matrix s(inputs.front().size(), static_cast<Eigen::Index>(inputs.size()) * p);
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (Eigen::Index r = 0; r < p; ++r) s.col(static_cast<Eigen::Index>(k) * p + r) = inputs[k];
  return Signal(std::move(s), dt);
}

bool ReductionReport::pass() const {
  return mlp_max_err < tolerance && rnn_forward_max_err < tolerance &&
         rnn_grad_max_err < tolerance;
}

namespace {

Matrix gaussian(Eigen::Index r, Eigen::Index c, double stddev, RandomStream& rng) {
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = stddev * rng.normal();
  return m;
}

Eigen::Index dim(RandomStream& rng) { return 1 + static_cast<Eigen::Index>(rng.below(6)); }

double rel(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

}  // namespace

ReductionReport check_reductions(std::size_t instances, std::uint64_t seed) {
  const RandomStream root(seed);
  ReductionReport report;
  report.instances = instances;
  for (std::size_t t = 0; t < instances; ++t) {
    RandomStream rng = root.split(t);
    const double dt = 0.5 + rng.uniform();
    const std::size_t extra = rng.below(3);

    // MLP with 1..4 hidden layers, input held for long enough to settle.
    DenseNet net;
    const std::size_t hidden = 1 + rng.below(4);
    Eigen::Index prev = dim(rng);
    for (std::size_t l = 0; l <= hidden; ++l) {
      const Eigen::Index next = dim(rng);
      net.weights.push_back(gaussian(next, prev, 1.0 / std::sqrt(static_cast<double>(prev)), rng));
      prev = next;
    }
    const Vector s = gaussian(net.weights.front().cols(), 1, 1.0, rng);
    const PhysicalSystem mlp = build_mlp_system(net, dt, extra);
    const std::size_t hold = hidden + 2;
    const ForwardTrace ft = forward(mlp, hold_inputs({s}, hold, dt));
    const Vector dense = dense_mlp_forward(net, s);
    for (std::size_t i = hidden - 1; i < hold; ++i)
      report.mlp_max_err =
          std::max(report.mlp_max_err, rel(ft.o.samples().col(static_cast<Eigen::Index>(i)), dense));

    // RNN over up to 40 steps.
    DenseRNN rnn;
    const Eigen::Index n_in = dim(rng);
    const Eigen::Index n_state = dim(rng);
    const Eigen::Index n_out = dim(rng);
    rnn.w_s = gaussian(n_state, n_in, 1.0 / std::sqrt(static_cast<double>(n_in)), rng);
    rnn.w_a = gaussian(n_state, n_state, 0.9 / std::sqrt(static_cast<double>(n_state)), rng);
    rnn.w_o = gaussian(n_out, n_state, 1.0, rng);
    rnn.period = 1 + rng.below(4);
    const std::size_t steps = 2 + rng.below(39);
    std::vector<Vector> xs, ys;
    for (std::size_t k = 0; k < steps; ++k) {
      xs.push_back(gaussian(n_in, 1, 1.0, rng));
      ys.push_back(gaussian(n_out, 1, 1.0, rng));
    }
    const PhysicalSystem rsys = build_rnn_system(rnn, dt, extra);
    const Signal held = hold_inputs(xs, rnn.period, dt);
    const ForwardTrace rt = forward(rsys, held);
    const DenseRNNTrace dt_trace = dense_rnn_forward(rnn, xs);
    Matrix e_o = Matrix::Zero(n_out, held.n_samples());
    for (std::size_t k = 0; k < steps; ++k) {
      const auto at = static_cast<Eigen::Index>(k * rnn.period);
      report.rnn_forward_max_err =
          std::max({report.rnn_forward_max_err, rel(rt.a.samples().col(at), dt_trace.h[k]),
                    rel(rt.o.samples().col(at), dt_trace.o[k])});
      e_o.col(at) = rt.o.samples().col(at) - ys[k];
    }

    const Signal err(std::move(e_o), dt);
    const BackwardTrace bt = backward(rsys, rt, err);
    GradientBundle g;
    KernelGradientRequest want;
    want.w_so = false;
    kernel_gradients(rsys, held, rt, err, bt, g, want);
    const DenseRNNGradients dg = dense_rnn_bptt(rnn, xs, ys);
    report.rnn_grad_max_err = std::max(
        {report.rnn_grad_max_err,
         rel((g.d_w_sa[0] / dt).reshaped(), dg.d_w_s.reshaped()),
         rel((g.d_w_aa[rnn.period] / dt).reshaped(), dg.d_w_a.reshaped()),
         rel((g.d_w_ao[0] / dt).reshaped(), dg.d_w_o.reshaped())});
  }
  return report;
}

}  // namespace physbp
