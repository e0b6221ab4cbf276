#pragma once

#include "physbp/random.hpp"
#include "physbp/system.hpp"

#include <vector>

namespace physbp {

/// Dense multilayer perceptron o = W_L f(W_{L-1} f(... f(W_0 s))).
struct DenseNet {
  std::vector<Matrix> weights;  // W_0 .. W_L, at least two
  Nonlinearity f = Nonlinearity::rectifier();

  std::size_t hidden_layers() const { return weights.size() - 1; }
  void validate() const;
};

/// Dense recurrent net h_k = f(W_s s_k + W_a h_{k-1}), o_k = W_o h_k.
struct DenseRNN {
  Matrix w_s;
  Matrix w_a;
  Matrix w_o;
  Nonlinearity f = Nonlinearity::rectifier();
  std::size_t period = 1;  // samples per state update

  void validate() const;
};

Vector dense_mlp_forward(const DenseNet& net, const Vector& s);

struct DenseRNNTrace {
  std::vector<Vector> pre;
  std::vector<Vector> h;
  std::vector<Vector> o;
};
DenseRNNTrace dense_rnn_forward(const DenseRNN& rnn, const std::vector<Vector>& inputs);

struct DenseRNNGradients {
  Matrix d_w_s;
  Matrix d_w_a;
  Matrix d_w_o;
};
/// Backpropagation through time for C = sum_k 1/2 ||o_k - y_k||^2.
DenseRNNGradients dense_rnn_bptt(const DenseRNN& rnn, const std::vector<Vector>& inputs,
                                 const std::vector<Vector>& targets);

/// Delta-kernel system whose hidden layers are stacked into one state
/// vector and chained through a one-sample feedback delay. With the input
/// held, the output equals the dense MLP from sample L-1 on (L hidden
/// layers). `extra_taps` appends inert zero taps to every kernel.
PhysicalSystem build_mlp_system(const DenseNet& net, double dt, std::size_t extra_taps = 0);

/// Delta-kernel system with W_aa = delta(t - period) W_a. With inputs held
/// for `period` samples, the state at sample k * period equals h_k.
PhysicalSystem build_rnn_system(const DenseRNN& rnn, double dt, std::size_t extra_taps = 0);

/// Piecewise-constant signal holding each instance for `period` samples.
Signal hold_inputs(const std::vector<Vector>& inputs, std::size_t period, double dt);

struct ReductionReport {
  std::size_t instances = 0;
  double mlp_max_err = 0.0;       // relative, settled outputs
  double rnn_forward_max_err = 0.0;
  double rnn_grad_max_err = 0.0;  // relative, over W_s, W_a, W_o
  double tolerance = 1e-8;
  bool pass() const;
};

/// Random MLPs and RNNs (dims <= 6, lengths <= 40) checked against their
/// dense counterparts.
ReductionReport check_reductions(std::size_t instances, std::uint64_t seed);

}  // namespace physbp
