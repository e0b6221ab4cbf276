#pragma once

#include "physbp/noise.hpp"
#include "physbp/random.hpp"
#include "physbp/signal.hpp"

#include <optional>

namespace physbp {

/// Pointwise feedback nonlinearity. Its Jacobian is diagonal and binary,
/// which is what lets the backward pass apply it with a switch.
struct Nonlinearity {
  enum class Kind { rectifier, clip, identity };

  Kind kind = Kind::rectifier;
  double lo = -1.0;  // clip only
  double hi = 1.0;   // clip only

  static Nonlinearity rectifier() { return {Kind::rectifier, 0.0, 0.0}; }
  static Nonlinearity clip(double lo, double hi);
  static Nonlinearity identity() { return {Kind::identity, 0.0, 0.0}; }

  struct Result {
    Vector value;
    Vector jac;  // entries in {0, 1}
  };

  /// Jacobian is 0 exactly at the kinks (rectifier at 0, clip at lo/hi).
  Result apply(const Vector& x) const;
  double value(double x) const;
  double derivative(double x) const;
  /// Distance from x to the nearest kink; +inf for identity.
  double kink_distance(double x) const;

  void validate() const;
};

/// How the backward injection is conditioned before it enters the plant.
///
/// Physical plants cannot take an arbitrary error amplitude: too small and
/// it drowns in noise, too large and the intensity limits truncate it. The
/// injected e_o is optionally rescaled to a fixed peak, multiplied by
/// `gamma`, and (with `clip`) the propagating signal is truncated to the
/// nonlinearity's range. Recorded e_a / e_s are divided by the total
/// injection gain, so with clip off and noise off they are exact gradients.
struct BackwardPath {
  bool normalize_peak = false;
  double peak = 0.5;
  double gamma = 1.0;
  bool clip = false;

  void validate() const;
};

/// Linear dynamic system with nonlinear feedback:
///   a = f(W_sa * s + W_aa * a),  o = W_so * s + W_ao * a.
/// N inputs, N_a states, M outputs. W_aa must be strictly causal.
struct PhysicalSystem {
  Kernel w_sa;  // N_a x N
  Kernel w_aa;  // N_a x N_a, tap 0 zero
  Kernel w_so;  // M x N
  Kernel w_ao;  // M x N_a
  Nonlinearity f = Nonlinearity::rectifier();
  std::optional<NoiseModel> noise;
  BackwardPath backward_path;

  Eigen::Index n_inputs() const { return w_sa.cols(); }
  Eigen::Index n_states() const { return w_sa.rows(); }
  Eigen::Index n_outputs() const { return w_so.rows(); }
  double dt() const { return w_sa.dt(); }

  void validate() const;
};

struct ForwardTrace {
  Signal pre;  // pre-activation x[i]
  Signal a;    // measured state (noise added if configured)
  Signal o;    // measured output
  Matrix jac;  // N_a x n_samples, binary
};

struct BackwardTrace {
  Signal e_a;  // gradient w.r.t. pre-activation
  Signal e_s;  // gradient w.r.t. input samples
  double injection_gain = 1.0;
};

/// Debug switches for negative controls.
struct BackwardOptions {
  bool omit_transpose = false;
};

/// Causal sample-by-sample simulation. `rng` is required when the system
/// carries a noise model that applies to forward measurements.
ForwardTrace forward(const PhysicalSystem& sys, const Signal& s, RandomStream* rng = nullptr);

/// Anti-causal adjoint pass driven by the output error e_o (discrete
/// gradient dC/do[i]). Uses the recorded Jacobian trace, never f itself.
BackwardTrace backward(const PhysicalSystem& sys, const ForwardTrace& trace, const Signal& e_o,
                       RandomStream* rng = nullptr, const BackwardOptions& options = {});

}  // namespace physbp
