#include "physbp/models.hpp"

#include "physbp/error.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

namespace physbp {

std::size_t TubeParams::direct_delay() const {
  return static_cast<std::size_t>(std::lround(length_m / speed_of_sound * sample_rate));
}

std::size_t TubeParams::min_kernel_len() const {
  const std::size_t last_echo = direct_delay() * (2 * n_echoes - 1);
  return last_echo + (bandpass ? filter_taps : 1);
}

void TubeParams::validate() const {
  if (!(length_m > 0 && speed_of_sound > 0 && sample_rate > 0))
    throw ConfigError("TubeParams: length, speed of sound and sample rate must be positive");
  if (!(reflection_coeff >= 0.0 && reflection_coeff < 1.0))
    throw ConfigError("TubeParams: reflection_coeff must lie in [0, 1)");
  if (n_echoes < 1) throw ConfigError("TubeParams: n_echoes must be >= 1");
  if (direct_delay() < 1) throw ConfigError("TubeParams: tube shorter than one sample");
  if (bandpass) {
    if (!(low_hz >= 0.0 && low_hz < high_hz && high_hz < 0.5 * sample_rate))
      throw ConfigError("TubeParams: passband must satisfy 0 <= low < high < Nyquist");
    if (filter_taps % 2 == 0 || filter_taps < 3)
      throw ConfigError("TubeParams: filter_taps must be odd and >= 3");
  }
  if (kernel_len != 0 && kernel_len < min_kernel_len())
    throw ConfigError("TubeParams: kernel_len too short to hold the echo train");
  if (!(echo_jitter >= 0.0)) throw ConfigError("TubeParams: echo_jitter must be >= 0");
}

namespace {

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(M_PI * x) / (M_PI * x); }

std::vector<double> bandpass_fir(const TubeParams& p) {
  const std::size_t n = p.filter_taps;
  const double fl = p.low_hz / p.sample_rate;
  const double fh = p.high_hz / p.sample_rate;
  const double mid = 0.5 * static_cast<double>(n - 1);
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) - mid;
    const double window = 0.54 - 0.46 * std::cos(2.0 * M_PI * static_cast<double>(i) /
                                                 static_cast<double>(n - 1));
    h[i] = (2.0 * fh * sinc(2.0 * fh * t) - 2.0 * fl * sinc(2.0 * fl * t)) * window;
  }
  // Unit magnitude at the passband centre.
  const double fc = 0.5 * (fl + fh);
  double re = 0.0;
  double im = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    re += h[i] * std::cos(2.0 * M_PI * fc * static_cast<double>(i));
    im -= h[i] * std::sin(2.0 * M_PI * fc * static_cast<double>(i));
  }
  const double mag = std::hypot(re, im);
  for (auto& v : h) v /= mag;
  return h;
}

}  // namespace

Kernel make_tube_kernel(const TubeParams& p, RandomStream& rng) {
  p.validate();
  const double dt = 1.0 / p.sample_rate;
  const std::size_t len = p.kernel_len ? p.kernel_len : p.min_kernel_len();
  const std::size_t d0 = p.direct_delay();

  std::vector<double> echoes(len, 0.0);
  double amplitude = p.gain;
  for (std::size_t j = 0; j < p.n_echoes; ++j) {
    const double jitter = p.echo_jitter > 0.0 ? 1.0 + p.echo_jitter * rng.normal() : 1.0;
    echoes[d0 * (2 * j + 1)] += amplitude * jitter / dt;
    amplitude *= p.reflection_coeff;
  }

  std::vector<double> taps = echoes;
  if (p.bandpass) {
    const auto h = bandpass_fir(p);
    std::fill(taps.begin(), taps.end(), 0.0);
    for (std::size_t i = 0; i < len; ++i) {
      if (echoes[i] == 0.0) continue;
      for (std::size_t k = 0; k < h.size() && i + k < len; ++k) taps[i + k] += echoes[i] * h[k];
    }
  }
  taps[0] = 0.0;

  std::vector<Matrix> out;
  out.reserve(len);
  for (double v : taps) out.push_back(Matrix::Constant(1, 1, v));
  return Kernel(std::move(out), dt);
}

PlantTemplate make_acoustic_system(const Kernel& tube, const AcousticOptions& options) {
  if (tube.rows() != 1 || tube.cols() != 1) throw DimensionError("acoustic plant needs a scalar kernel");
  if (!tube.tap(0).isZero(0.0)) throw ConfigError("acoustic kernel must be strictly causal");
  const double dt = tube.dt();
  PhysicalSystem sys{tube,
                     tube,
                     Kernel::zeros(1, 1, 1, dt),
                     Kernel::delta(Matrix::Constant(1, 1, options.output_gain), 0, dt),
                     Nonlinearity::rectifier(),
                     options.noise,
                     options.backward};
  sys.validate();
  return PlantTemplate{std::move(sys), MaskSet::zeros(1, 1, 1, 1, options.period), {}};
}

void OpticalParams::validate() const {
  if (n_nodes < 1) throw ConfigError("OpticalParams: n_nodes must be >= 1");
  if (delay_samples < 1) throw ConfigError("OpticalParams: delay must be >= 1 sample");
  if (std::isnan(snr_db)) throw ConfigError("OpticalParams: snr_db must be a number");
  if (!(weight_bound > 0.0)) throw ConfigError("OpticalParams: weight_bound must be positive");
  if (!(backward_error_scale > 0.0 && backward_error_scale <= 1.0))
    throw ConfigError("OpticalParams: backward_error_scale must lie in (0, 1]");
  if (period < 1) throw ConfigError("OpticalParams: period must be positive");
  if (!(sample_period > 0.0)) throw ConfigError("OpticalParams: sample_period must be positive");
}

PlantTemplate make_optical_system(const OpticalParams& p, const Matrix& w) {
  p.validate();
  const auto n = static_cast<Eigen::Index>(p.n_nodes);
  if (w.rows() != n || w.cols() != n) throw DimensionError("optical W must be n_nodes x n_nodes");
  if (w.cwiseAbs().maxCoeff() > p.weight_bound)
    throw ConstraintError("optical W entry outside the modulator range");
  const double dt = p.sample_period;
  const Matrix eye = Matrix::Identity(n, n);
  std::optional<NoiseModel> noise;
  if (p.noise) noise = NoiseModel{p.snr_db, true, true};
  PhysicalSystem sys{Kernel::delta(eye, 0, dt),
                     Kernel::delta(w, p.delay_samples, dt),
                     Kernel::zeros(n, n, 1, dt),
                     Kernel::delta(eye, 0, dt),
                     Nonlinearity::clip(-1.0, 1.0),
                     noise,
                     BackwardPath{true, p.backward_peak, p.backward_error_scale, p.backward_clip}};
  sys.validate();
  return PlantTemplate{std::move(sys), MaskSet::zeros(n, p.dim_x, n, p.dim_y, p.period),
                       {KernelTrainable{Block::w_aa, {p.delay_samples}, p.weight_bound}}};
}

Matrix random_optical_weights(const OpticalParams& p, double stddev, RandomStream& rng) {
  const auto n = static_cast<Eigen::Index>(p.n_nodes);
  Matrix w(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      w(i, j) = std::clamp(stddev * rng.normal(), -p.weight_bound, p.weight_bound);
  return w;
}

IntensitySplit intensity_split(const Matrix& w) {
  if (w.size() > 0 && w.cwiseAbs().maxCoeff() > 2.0)
    throw ConstraintError("intensity_split: entries must lie in [-2, 2]");
  const Matrix k = Matrix::Ones(w.rows(), w.cols());
  return IntensitySplit{k + 0.5 * w, k - 0.5 * w};
}

void write_kernel_csv(std::ostream& out, const Kernel& k) {
  out << "t";
  for (Eigen::Index r = 0; r < k.rows(); ++r)
    for (Eigen::Index c = 0; c < k.cols(); ++c) out << ",w_" << r << '_' << c;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < k.length(); ++i) {
    out << static_cast<double>(i) * k.dt();
    for (Eigen::Index r = 0; r < k.rows(); ++r)
      for (Eigen::Index c = 0; c < k.cols(); ++c) out << ',' << k.tap(i)(r, c);
    out << '\n';
  }
}

}  // namespace physbp
