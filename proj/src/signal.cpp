#include "physbp/signal.hpp"

#include "physbp/error.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace physbp {

void require_same_dt(double a, double b, const char* what) {
  // Sample periods are compared with a relative tolerance; they come from
  // the same configuration value but may pass through text round trips.
  if (std::abs(a - b) > 1e-12 * std::max(std::abs(a), std::abs(b))) {
    std::ostringstream msg;
    msg << what << ": sample period mismatch (" << a << " vs " << b << ")";
    throw ConfigError(msg.str());
  }
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string(what) + ": non-finite value");
}

Signal::Signal(Matrix samples, double dt) : samples_(std::move(samples)), dt_(dt) {
  if (!(dt_ > 0.0) || !std::isfinite(dt_)) throw ConfigError("Signal: dt must be positive");
  if (samples_.rows() < 1) throw DimensionError("Signal: at least one channel required");
  require_finite(samples_, "Signal");
}

Signal::Signal(Eigen::Index channels, Eigen::Index n_samples, double dt)
    : Signal(Matrix::Zero(channels, n_samples), dt) {}

Kernel::Kernel(std::vector<Matrix> taps, double dt) : taps_(std::move(taps)), dt_(dt) {
  if (taps_.empty()) throw DimensionError("Kernel: at least one tap required");
  if (!(dt_ > 0.0) || !std::isfinite(dt_)) throw ConfigError("Kernel: dt must be positive");
  const auto r = taps_.front().rows();
  const auto c = taps_.front().cols();
  for (std::size_t k = 0; k < taps_.size(); ++k) {
    if (taps_[k].rows() != r || taps_[k].cols() != c)
      throw DimensionError("Kernel: taps must share one shape");
    require_finite(taps_[k], "Kernel");
    if (!taps_[k].isZero(0.0)) active_.push_back(k);
  }
}

Kernel Kernel::zeros(Eigen::Index rows, Eigen::Index cols, std::size_t length, double dt) {
  return Kernel(std::vector<Matrix>(length, Matrix::Zero(rows, cols)), dt);
}

Kernel Kernel::delta(const Matrix& value, std::size_t lag, double dt) {
  std::vector<Matrix> taps(lag + 1, Matrix::Zero(value.rows(), value.cols()));
  taps[lag] = value / dt;
  return Kernel(std::move(taps), dt);
}

Kernel Kernel::transposed() const {
  std::vector<Matrix> t;
  t.reserve(taps_.size());
  for (const auto& w : taps_) t.push_back(w.transpose());
  return Kernel(std::move(t), dt_);
}

Signal convolve(const Kernel& kernel, const Signal& x) {
  if (kernel.cols() != x.channels())
    throw DimensionError("convolve: kernel cols != signal channels");
  require_same_dt(kernel.dt(), x.dt(), "convolve");
  const Eigen::Index n = x.n_samples();
  Matrix y = Matrix::Zero(kernel.rows(), n);
  const Matrix& xs = x.samples();
  for (std::size_t k : kernel.active_taps()) {
    const Eigen::Index lag = static_cast<Eigen::Index>(k);
    if (lag >= n) break;
    const Matrix w = kernel.dt() * kernel.tap(k);
    y.rightCols(n - lag).noalias() += w * xs.leftCols(n - lag);
  }
  return Signal(std::move(y), x.dt());
}

Signal adjoint_convolve(const Kernel& kernel, const Signal& e) {
  if (kernel.rows() != e.channels())
    throw DimensionError("adjoint_convolve: kernel rows != signal channels");
  require_same_dt(kernel.dt(), e.dt(), "adjoint_convolve");
  const Eigen::Index n = e.n_samples();
  Matrix r = Matrix::Zero(kernel.cols(), n);
  const Matrix& es = e.samples();
  for (std::size_t k : kernel.active_taps()) {
    const Eigen::Index lag = static_cast<Eigen::Index>(k);
    if (lag >= n) break;
    const Matrix wt = kernel.dt() * kernel.tap(k).transpose();
    r.leftCols(n - lag).noalias() += wt * es.rightCols(n - lag);
  }
  return Signal(std::move(r), e.dt());
}

Signal time_reverse(const Signal& x) {
  return Signal(x.samples().rowwise().reverse(), x.dt());
}

std::vector<Signal> split_segments(const Signal& x, Eigen::Index period_samples) {
  if (period_samples < 1) throw LengthError("split_segments: period must be positive");
  if (x.n_samples() % period_samples != 0) {
    std::ostringstream msg;
    msg << "split_segments: " << x.n_samples() << " samples not divisible by period "
        << period_samples;
    throw LengthError(msg.str());
  }
  std::vector<Signal> out;
  const Eigen::Index count = x.n_samples() / period_samples;
  out.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i)
    out.emplace_back(x.samples().middleCols(i * period_samples, period_samples), x.dt());
  return out;
}

Signal concat_segments(std::span<const Signal> segments) {
  if (segments.empty()) throw LengthError("concat_segments: no segments");
  const Eigen::Index channels = segments.front().channels();
  const double dt = segments.front().dt();
  Eigen::Index total = 0;
  for (const auto& s : segments) {
    if (s.channels() != channels) throw DimensionError("concat_segments: channel mismatch");
    require_same_dt(s.dt(), dt, "concat_segments");
    total += s.n_samples();
  }
  Matrix out(channels, total);
  Eigen::Index at = 0;
  for (const auto& s : segments) {
    out.middleCols(at, s.n_samples()) = s.samples();
    at += s.n_samples();
  }
  return Signal(std::move(out), dt);
}

double inner(const Signal& a, const Signal& b) {
  if (a.channels() != b.channels() || a.n_samples() != b.n_samples())
    throw DimensionError("inner: shape mismatch");
  return a.samples().cwiseProduct(b.samples()).sum();
}

void write_signal_csv(std::ostream& out, const Signal& x) {
  out << "t";
  for (Eigen::Index c = 0; c < x.channels(); ++c) out << ",ch" << c;
  out << '\n';
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < x.n_samples(); ++i) {
    out << static_cast<double>(i) * x.dt();
    for (Eigen::Index c = 0; c < x.channels(); ++c) out << ',' << x.samples()(c, i);
    out << '\n';
  }
}

Signal read_signal_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw LengthError("signal csv: missing header");
  Eigen::Index channels = 0;
  for (char ch : line)
    if (ch == ',') ++channels;
  if (channels < 1) throw DimensionError("signal csv: no channel columns");
  std::vector<double> times;
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    times.push_back(std::stod(cell));
    Eigen::Index seen = 0;
    while (std::getline(row, cell, ',')) {
      values.push_back(std::stod(cell));
      ++seen;
    }
    if (seen != channels) throw DimensionError("signal csv: ragged row");
  }
  const auto n = static_cast<Eigen::Index>(times.size());
  if (n < 2) throw LengthError("signal csv: need two rows to infer dt");
  Matrix samples(channels, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < channels; ++c)
      samples(c, i) = values[static_cast<std::size_t>(i * channels + c)];
  return Signal(std::move(samples), times[1] - times[0]);
}

}  // namespace physbp
