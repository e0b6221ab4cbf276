#pragma once

#include "physbp/gradients.hpp"
#include "physbp/masking.hpp"
#include "physbp/noise.hpp"
#include "physbp/random.hpp"
#include "physbp/system.hpp"

#include <iosfwd>
#include <limits>
#include <optional>
#include <vector>

namespace physbp {

/// Synthetic speaker-tube-microphone transmission.
struct TubeParams {
  double length_m = 6.0;
  double speed_of_sound = 343.0;
  double reflection_coeff = 0.5;  // amplitude ratio between successive echoes, (0, 1)
  std::size_t n_echoes = 3;
  bool bandpass = true;
  double low_hz = 100.0;
  double high_hz = 3000.0;
  std::size_t filter_taps = 63;   // odd
  std::size_t kernel_len = 0;     // 0 selects the shortest length that fits
  double sample_rate = 40000.0;
  double gain = 0.5;              // passband amplitude of the first arrival
  double echo_jitter = 0.0;       // relative random spread of echo amplitudes

  /// Direct-path delay in samples, length / c * sample_rate rounded.
  std::size_t direct_delay() const;
  std::size_t min_kernel_len() const;
  void validate() const;
};

/// Echo train (delays d0 (2j+1), amplitudes gain rho^j) convolved with a
/// Hamming-windowed sinc band-pass; returned as a 1x1 kernel with tap 0 zero.
Kernel make_tube_kernel(const TubeParams& p, RandomStream& rng);

/// Trainable sub-block of a kernel, with the projection applied after each
/// update. Values are in integrated units, tap * dt.
struct KernelTrainable {
  Block block = Block::w_aa;
  std::vector<std::size_t> taps;
  double bound = std::numeric_limits<double>::infinity();
};

/// A plant plus the mask layout it is driven with.
struct PlantTemplate {
  PhysicalSystem system;
  MaskSet masks;  // zero-initialized, correct shapes
  std::vector<KernelTrainable> kernel_trainables;
};

struct AcousticOptions {
  Eigen::Index period = 1000;
  double output_gain = 1.0;  // microphone amplification on the recorded state
  std::optional<NoiseModel> noise;
  BackwardPath backward{true, 0.5, 1.0, false};
};

/// a = f([W * (s + a)]), o = output_gain * a: W_sa = W_aa = W, W_ao = delta,
/// W_so = 0, rectifier feedback, scalar input and output.
PlantTemplate make_acoustic_system(const Kernel& tube, const AcousticOptions& options = {});

struct OpticalParams {
  std::size_t n_nodes = 20;
  std::size_t delay_samples = 109;
  double snr_db = 18.0;
  bool noise = true;
  double weight_bound = 2.0;
  bool backward_clip = true;
  double backward_error_scale = 0.5;  // gamma
  double backward_peak = 0.5;
  Eigen::Index period = 100;
  double sample_period = 1.0;
  Eigen::Index dim_x = 1;
  Eigen::Index dim_y = 1;

  void validate() const;
};

/// a[i] = clip(W a[i - D] + s[i]) per node, outputs are the node states.
PlantTemplate make_optical_system(const OpticalParams& p, const Matrix& w);

/// Gaussian initial mixing matrix, clipped into the modulator range.
Matrix random_optical_weights(const OpticalParams& p, double stddev, RandomStream& rng);

struct IntensitySplit {
  Matrix w1;  // K + W / 2
  Matrix w2;  // K - W / 2
};

/// Non-negative modulator arrays realizing a signed W in [-2, 2].
IntensitySplit intensity_split(const Matrix& w);

/// Kernel CSV: `t` then one column per tap entry (row-major).
void write_kernel_csv(std::ostream& out, const Kernel& k);

}  // namespace physbp
