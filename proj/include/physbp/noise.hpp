#pragma once

#include "physbp/random.hpp"
#include "physbp/signal.hpp"

namespace physbp {

/// Additive Gaussian measurement noise at a fixed signal-to-noise ratio.
struct NoiseModel {
  double snr_db = 18.0;
  bool on_forward = true;   // measured outputs and states
  bool on_backward = true;  // measured error signals

  void validate() const;
};

/// Adds zero-mean Gaussian noise with variance power(x) / 10^(snr_db/10),
/// where power(x) is the mean square over all channels and samples.
/// A zero-power signal receives no noise; snr_db = +inf is the identity.
Signal add_measurement_noise(const Signal& x, double snr_db, RandomStream& rng);

}  // namespace physbp
