#include "physbp/noise.hpp"

#include "physbp/error.hpp"

#include <cmath>

namespace physbp {

void NoiseModel::validate() const {
  if (std::isnan(snr_db) || snr_db == -INFINITY)
    throw ConfigError("NoiseModel: snr_db must be finite or +inf");
}

Signal add_measurement_noise(const Signal& x, double snr_db, RandomStream& rng) {
  if (std::isnan(snr_db) || snr_db == -INFINITY)
    throw ConfigError("add_measurement_noise: invalid snr_db");
  if (std::isinf(snr_db) || x.samples().size() == 0) return x;
  const double power = x.samples().squaredNorm() / static_cast<double>(x.samples().size());
  if (power == 0.0) return x;
  const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  Matrix noisy = x.samples();
  for (Eigen::Index i = 0; i < noisy.cols(); ++i)
    for (Eigen::Index c = 0; c < noisy.rows(); ++c) noisy(c, i) += sigma * rng.normal();
  return Signal(std::move(noisy), x.dt());
}

}  // namespace physbp
