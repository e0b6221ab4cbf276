#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace physbp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Multichannel discrete-time trace, stored channels x samples.
///
/// Carries forward signals (inputs, states, outputs) as well as the error
/// signals of the adjoint pass. Values outside the recorded range are
/// treated as zero by every operation that looks past either end.
class Signal {
 public:
  Signal(Matrix samples, double dt);
  /// Zero signal with the given shape.
  Signal(Eigen::Index channels, Eigen::Index n_samples, double dt);

  const Matrix& samples() const { return samples_; }
  double dt() const { return dt_; }
  Eigen::Index channels() const { return samples_.rows(); }
  Eigen::Index n_samples() const { return samples_.cols(); }

  auto sample(Eigen::Index i) const { return samples_.col(i); }

  /// Mutable access for builders; callers must keep values finite.
  Matrix& mutable_samples() { return samples_; }

 private:
  Matrix samples_;
  double dt_;
};

/// Finite impulse response W(k dt), k = 0..L-1, with identically shaped taps.
///
/// Indices of taps that are not identically zero are cached so sparse
/// kernels (echo trains, pure delays) convolve in time proportional to the
/// number of active taps.
class Kernel {
 public:
  Kernel(std::vector<Matrix> taps, double dt);
  /// All-zero kernel of the given shape.
  static Kernel zeros(Eigen::Index rows, Eigen::Index cols, std::size_t length, double dt);
  /// Single tap `value / dt` at `lag`; with value = I this is the discrete delta.
  static Kernel delta(const Matrix& value, std::size_t lag, double dt);

  const std::vector<Matrix>& taps() const { return taps_; }
  const Matrix& tap(std::size_t k) const { return taps_[k]; }
  std::size_t length() const { return taps_.size(); }
  Eigen::Index rows() const { return taps_.front().rows(); }
  Eigen::Index cols() const { return taps_.front().cols(); }
  double dt() const { return dt_; }
  const std::vector<std::size_t>& active_taps() const { return active_; }

  /// Kernel with every tap transposed.
  Kernel transposed() const;

 private:
  std::vector<Matrix> taps_;
  double dt_;
  std::vector<std::size_t> active_;
};

/// y[i] = dt * sum_k W[k] x[i-k], causal with zero past.
Signal convolve(const Kernel& kernel, const Signal& x);

/// r[i] = dt * sum_k W[k]^T e[i+k], anti-causal with zero future.
Signal adjoint_convolve(const Kernel& kernel, const Signal& e);

Signal time_reverse(const Signal& x);

/// Splits into consecutive non-overlapping segments of `period_samples`.
std::vector<Signal> split_segments(const Signal& x, Eigen::Index period_samples);

/// Inverse of split_segments.
Signal concat_segments(std::span<const Signal> segments);

/// Plain Euclidean inner product over all channels and samples (no dt weight).
double inner(const Signal& a, const Signal& b);

/// CSV with header `t,ch0,ch1,...`, one row per sample.
void write_signal_csv(std::ostream& out, const Signal& x);
Signal read_signal_csv(std::istream& in);

// Shared validation helpers.
void require_same_dt(double a, double b, const char* what);
void require_finite(const Matrix& m, const char* what);

}  // namespace physbp
