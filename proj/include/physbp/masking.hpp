#pragma once

#include "physbp/signal.hpp"

#include <iosfwd>
#include <vector>

namespace physbp {

using Sequence = std::vector<Vector>;

/// Time-multiplexing masks, all sampled on the same P-sample segment clock.
struct MaskSet {
  std::vector<Matrix> m;  // P entries, N x dim_x
  std::vector<Matrix> u;  // P entries, dim_y x M
  Matrix s_b;             // N x P
  Vector y_b;             // dim_y

  /// Zero masks of the given dimensions.
  static MaskSet zeros(Eigen::Index n_inputs, Eigen::Index dim_x, Eigen::Index n_outputs,
                       Eigen::Index dim_y, Eigen::Index period);

  Eigen::Index period() const { return static_cast<Eigen::Index>(m.size()); }
  Eigen::Index n_inputs() const { return m.front().rows(); }
  Eigen::Index dim_x() const { return m.front().cols(); }
  Eigen::Index dim_y() const { return u.front().rows(); }
  Eigen::Index n_outputs() const { return u.front().cols(); }

  void validate() const;
};

/// Segment i of the result is s_b(t) + M(t) x_i.
Signal encode_inputs(const Sequence& xs, const MaskSet& masks, double dt);

/// y_i = y_b + dt * sum_t U(t) o_i(t).
Sequence decode_outputs(const Signal& o, const MaskSet& masks);

/// Segment i of the result is U(t)^T e_i; the error-side mirror of encode_inputs.
Signal encode_output_errors(const Sequence& errs, const MaskSet& masks, double dt);

struct InputMaskGradient {
  std::vector<Matrix> d_m;  // P entries, N x dim_x
  Matrix d_s_b;             // N x P
};

/// dM(t) = sum_i e_s^i(t) x_i^T and ds_b(t) = sum_i e_s^i(t).
InputMaskGradient input_mask_gradient(const Signal& e_s, const Sequence& xs,
                                      Eigen::Index period);

struct OutputMaskGradient {
  std::vector<Matrix> d_u;  // P entries, dim_y x M
  Vector d_y_b;
};

/// dU(t) = dt * sum_i e_i o_i(t)^T and dy_b = sum_i e_i.
OutputMaskGradient output_mask_gradient(const Sequence& errs, const Signal& o,
                                        Eigen::Index period);

/// One row per segment sample: t, then M, U, s_b entries in row-major order.
void write_masks_csv(std::ostream& out, const MaskSet& masks, double dt);

}  // namespace physbp
