#include "physbp/system.hpp"

#include "physbp/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace physbp {

Nonlinearity Nonlinearity::clip(double lo, double hi) {
  Nonlinearity f{Kind::clip, lo, hi};
  f.validate();
  return f;
}

void Nonlinearity::validate() const {
  if (kind == Kind::clip && !(lo < hi)) throw ConfigError("clip nonlinearity requires lo < hi");
}

double Nonlinearity::value(double x) const {
  switch (kind) {
    case Kind::rectifier:
      return x > 0.0 ? x : 0.0;
    case Kind::clip:
      return std::clamp(x, lo, hi);
    case Kind::identity:
      return x;
  }
  return x;
}

double Nonlinearity::derivative(double x) const {
  switch (kind) {
    case Kind::rectifier:
      return x > 0.0 ? 1.0 : 0.0;
    case Kind::clip:
      return (x > lo && x < hi) ? 1.0 : 0.0;
    case Kind::identity:
      return 1.0;
  }
  return 1.0;
}

double Nonlinearity::kink_distance(double x) const {
  switch (kind) {
    case Kind::rectifier:
      return std::abs(x);
    case Kind::clip:
      return std::min(std::abs(x - lo), std::abs(x - hi));
    case Kind::identity:
      break;
  }
  return std::numeric_limits<double>::infinity();
}

Nonlinearity::Result Nonlinearity::apply(const Vector& x) const {
  Result r{Vector(x.size()), Vector(x.size())};
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    r.value[i] = value(x[i]);
    r.jac[i] = derivative(x[i]);
  }
  return r;
}

void BackwardPath::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("backward gamma must lie in (0, 1]");
  if (normalize_peak && !(peak > 0.0)) throw ConfigError("backward peak must be positive");
}

void PhysicalSystem::validate() const {
  const double d = w_sa.dt();
  require_same_dt(w_aa.dt(), d, "PhysicalSystem w_aa");
  require_same_dt(w_so.dt(), d, "PhysicalSystem w_so");
  require_same_dt(w_ao.dt(), d, "PhysicalSystem w_ao");
  const auto n = w_sa.cols();
  const auto na = w_sa.rows();
  const auto m = w_so.rows();
  if (w_aa.rows() != na || w_aa.cols() != na) throw DimensionError("w_aa must be N_a x N_a");
  if (w_so.cols() != n) throw DimensionError("w_so must be M x N");
  if (w_ao.rows() != m || w_ao.cols() != na) throw DimensionError("w_ao must be M x N_a");
  if (!w_aa.tap(0).isZero(0.0))
    throw ConfigError("w_aa tap 0 must be exactly zero (feedback must be strictly causal)");
  f.validate();
  if (noise) noise->validate();
  backward_path.validate();
}

namespace {

Matrix clamp_entries(Matrix m, double lo, double hi) {
  return m.cwiseMax(lo).cwiseMin(hi);
}

std::pair<double, double> intensity_range(const Nonlinearity& f) {
  if (f.kind == Nonlinearity::Kind::clip) return {f.lo, f.hi};
  return {-1.0, 1.0};
}

// r[i] = dt * sum_k W[k] e[i+k] -- the anti-causal pass with the transpose
// deliberately left out. Only meaningful for square kernels.
Signal advance_without_transpose(const Kernel& kernel, const Signal& e) {
  if (kernel.rows() != kernel.cols())
    throw DimensionError("omit_transpose requires square kernels");
  const Eigen::Index n = e.n_samples();
  Matrix r = Matrix::Zero(kernel.cols(), n);
  for (std::size_t k : kernel.active_taps()) {
    const auto lag = static_cast<Eigen::Index>(k);
    if (lag >= n) break;
    r.leftCols(n - lag).noalias() += kernel.dt() * kernel.tap(k) * e.samples().rightCols(n - lag);
  }
  return Signal(std::move(r), e.dt());
}

}  // namespace

ForwardTrace forward(const PhysicalSystem& sys, const Signal& s, RandomStream* rng) {
  sys.validate();
  if (s.channels() != sys.n_inputs()) throw DimensionError("forward: input channels != N");
  require_same_dt(s.dt(), sys.dt(), "forward");

  const Eigen::Index n = s.n_samples();
  const Eigen::Index na = sys.n_states();
  const double dt = sys.dt();

  Matrix pre = convolve(sys.w_sa, s).samples();
  Matrix a = Matrix::Zero(na, n);
  Matrix jac = Matrix::Zero(na, n);

  std::vector<std::pair<Eigen::Index, Matrix>> feedback;
  for (std::size_t k : sys.w_aa.active_taps())
    feedback.emplace_back(static_cast<Eigen::Index>(k), dt * sys.w_aa.tap(k));

  for (Eigen::Index i = 0; i < n; ++i) {
    for (const auto& [lag, w] : feedback) {
      if (lag > i) break;
      pre.col(i).noalias() += w * a.col(i - lag);
    }
    for (Eigen::Index c = 0; c < na; ++c) {
      const double x = pre(c, i);
      a(c, i) = sys.f.value(x);
      jac(c, i) = sys.f.derivative(x);
    }
  }

  Signal state(std::move(a), dt);
  Matrix o = convolve(sys.w_so, s).samples() + convolve(sys.w_ao, state).samples();
  Signal output(std::move(o), dt);

  if (sys.noise && sys.noise->on_forward) {
    if (rng == nullptr) throw ConfigError("forward: noise model configured but no random stream");
    state = add_measurement_noise(state, sys.noise->snr_db, *rng);
    output = add_measurement_noise(output, sys.noise->snr_db, *rng);
  }
  return ForwardTrace{Signal(std::move(pre), dt), std::move(state), std::move(output),
                      std::move(jac)};
}

BackwardTrace backward(const PhysicalSystem& sys, const ForwardTrace& trace, const Signal& e_o,
                       RandomStream* rng, const BackwardOptions& options) {
  sys.validate();
  const Eigen::Index n = trace.o.n_samples();
  if (e_o.channels() != sys.n_outputs()) throw DimensionError("backward: e_o channels != M");
  if (e_o.n_samples() != n) throw DimensionError("backward: e_o length != forward length");
  if (trace.jac.rows() != sys.n_states() || trace.jac.cols() != n)
    throw DimensionError("backward: Jacobian trace does not match system");
  require_same_dt(e_o.dt(), sys.dt(), "backward");

  const double dt = sys.dt();
  const BackwardPath& path = sys.backward_path;
  const auto [lo, hi] = intensity_range(sys.f);

  double gain = path.gamma;
  if (path.normalize_peak) {
    const double peak = e_o.samples().size() ? e_o.samples().cwiseAbs().maxCoeff() : 0.0;
    if (peak > 0.0) gain *= path.peak / peak;
  }
  Matrix injected = gain * e_o.samples();
  if (path.clip) injected = clamp_entries(std::move(injected), lo, hi);
  const Signal inj(std::move(injected), dt);

  auto adjoint = [&](const Kernel& k, const Signal& e) {
    return options.omit_transpose ? advance_without_transpose(k, e) : adjoint_convolve(k, e);
  };

  Matrix e_a = adjoint(sys.w_ao, inj).samples();
  std::vector<std::pair<Eigen::Index, Matrix>> feedback;
  for (std::size_t k : sys.w_aa.active_taps()) {
    Matrix w = dt * sys.w_aa.tap(k);
    if (!options.omit_transpose) w.transposeInPlace();
    feedback.emplace_back(static_cast<Eigen::Index>(k), std::move(w));
  }

  for (Eigen::Index i = n - 1; i >= 0; --i) {
    for (const auto& [lag, w] : feedback) {
      if (i + lag >= n) break;
      e_a.col(i).noalias() += w * e_a.col(i + lag);
    }
    e_a.col(i) = e_a.col(i).cwiseProduct(trace.jac.col(i));
    if (path.clip) e_a.col(i) = e_a.col(i).cwiseMax(lo).cwiseMin(hi);
  }

  Signal err_state(std::move(e_a), dt);
  Matrix e_s = adjoint(sys.w_sa, err_state).samples() + adjoint(sys.w_so, inj).samples();
  Signal err_input(std::move(e_s), dt);

  if (sys.noise && sys.noise->on_backward) {
    if (rng == nullptr) throw ConfigError("backward: noise model configured but no random stream");
    err_state = add_measurement_noise(err_state, sys.noise->snr_db, *rng);
    err_input = add_measurement_noise(err_input, sys.noise->snr_db, *rng);
  }

  return BackwardTrace{Signal(err_state.samples() / gain, dt), Signal(err_input.samples() / gain, dt),
                       gain};
}

}  // namespace physbp
