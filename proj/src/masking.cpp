#include "physbp/masking.hpp"

#include "physbp/error.hpp"

#include <iomanip>
#include <ostream>
#include <sstream>

namespace physbp {

MaskSet MaskSet::zeros(Eigen::Index n_inputs, Eigen::Index dim_x, Eigen::Index n_outputs,
                       Eigen::Index dim_y, Eigen::Index period) {
  if (period < 1) throw ConfigError("MaskSet: period must be positive");
  const auto p = static_cast<std::size_t>(period);
  return MaskSet{std::vector<Matrix>(p, Matrix::Zero(n_inputs, dim_x)),
                 std::vector<Matrix>(p, Matrix::Zero(dim_y, n_outputs)),
                 Matrix::Zero(n_inputs, period), Vector::Zero(dim_y)};
}

void MaskSet::validate() const {
  if (m.empty() || u.size() != m.size()) throw ConfigError("MaskSet: M and U periods differ");
  if (s_b.cols() != period() || s_b.rows() != n_inputs())
    throw ConfigError("MaskSet: bias trace must be N x P");
  if (y_b.size() != dim_y()) throw DimensionError("MaskSet: y_b must have dim_y entries");
  for (const auto& mt : m) {
    if (mt.rows() != n_inputs() || mt.cols() != dim_x())
      throw DimensionError("MaskSet: input mask shape varies over time");
    require_finite(mt, "MaskSet M");
  }
  for (const auto& ut : u) {
    if (ut.rows() != dim_y() || ut.cols() != n_outputs())
      throw DimensionError("MaskSet: output mask shape varies over time");
    require_finite(ut, "MaskSet U");
  }
  require_finite(s_b, "MaskSet s_b");
  require_finite(y_b, "MaskSet y_b");
}

Signal encode_inputs(const Sequence& xs, const MaskSet& masks, double dt) {
  masks.validate();
  const Eigen::Index p = masks.period();
  Matrix s(masks.n_inputs(), static_cast<Eigen::Index>(xs.size()) * p);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Vector& x = xs[i];
    if (x.size() != masks.dim_x()) throw DimensionError("encode_inputs: x has wrong dimension");
    if (!x.allFinite()) throw NumericError("encode_inputs: non-finite input");
    const Eigen::Index base = static_cast<Eigen::Index>(i) * p;
    for (Eigen::Index t = 0; t < p; ++t)
      s.col(base + t).noalias() = masks.s_b.col(t) + masks.m[static_cast<std::size_t>(t)] * x;
  }
  return Signal(std::move(s), dt);
}

Sequence decode_outputs(const Signal& o, const MaskSet& masks) {
  masks.validate();
  const Eigen::Index p = masks.period();
  if (o.channels() != masks.n_outputs()) throw DimensionError("decode_outputs: channel mismatch");
  if (o.n_samples() % p != 0) throw LengthError("decode_outputs: length not divisible by period");
  const Eigen::Index count = o.n_samples() / p;
  Sequence ys;
  ys.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i) {
    Vector acc = Vector::Zero(masks.dim_y());
    for (Eigen::Index t = 0; t < p; ++t)
      acc.noalias() += masks.u[static_cast<std::size_t>(t)] * o.samples().col(i * p + t);
    ys.push_back(masks.y_b + o.dt() * acc);
  }
  return ys;
}

Signal encode_output_errors(const Sequence& errs, const MaskSet& masks, double dt) {
  masks.validate();
  const Eigen::Index p = masks.period();
  Matrix e(masks.n_outputs(), static_cast<Eigen::Index>(errs.size()) * p);
  for (std::size_t i = 0; i < errs.size(); ++i) {
    if (errs[i].size() != masks.dim_y())
      throw DimensionError("encode_output_errors: error has wrong dimension");
    const Eigen::Index base = static_cast<Eigen::Index>(i) * p;
    for (Eigen::Index t = 0; t < p; ++t)
      e.col(base + t).noalias() = masks.u[static_cast<std::size_t>(t)].transpose() * errs[i];
  }
  return Signal(std::move(e), dt);
}

InputMaskGradient input_mask_gradient(const Signal& e_s, const Sequence& xs,
                                      Eigen::Index period) {
  if (xs.empty()) throw LengthError("input_mask_gradient: empty sequence");
  if (e_s.n_samples() != static_cast<Eigen::Index>(xs.size()) * period)
    throw LengthError("input_mask_gradient: e_s length != |xs| * P");
  const Eigen::Index n = e_s.channels();
  const Eigen::Index dx = xs.front().size();
  InputMaskGradient g{std::vector<Matrix>(static_cast<std::size_t>(period), Matrix::Zero(n, dx)),
                      Matrix::Zero(n, period)};
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Eigen::Index base = static_cast<Eigen::Index>(i) * period;
    for (Eigen::Index t = 0; t < period; ++t) {
      const auto e = e_s.samples().col(base + t);
      g.d_m[static_cast<std::size_t>(t)].noalias() += e * xs[i].transpose();
      g.d_s_b.col(t) += e;
    }
  }
  return g;
}

OutputMaskGradient output_mask_gradient(const Sequence& errs, const Signal& o,
                                        Eigen::Index period) {
  if (errs.empty()) throw LengthError("output_mask_gradient: empty sequence");
  if (o.n_samples() != static_cast<Eigen::Index>(errs.size()) * period)
    throw LengthError("output_mask_gradient: o length != |errs| * P");
  const Eigen::Index dy = errs.front().size();
  OutputMaskGradient g{
      std::vector<Matrix>(static_cast<std::size_t>(period), Matrix::Zero(dy, o.channels())),
      Vector::Zero(dy)};
  for (std::size_t i = 0; i < errs.size(); ++i) {
    const Eigen::Index base = static_cast<Eigen::Index>(i) * period;
    for (Eigen::Index t = 0; t < period; ++t)
      g.d_u[static_cast<std::size_t>(t)].noalias() +=
          o.dt() * errs[i] * o.samples().col(base + t).transpose();
    g.d_y_b += errs[i];
  }
  return g;
}

void write_masks_csv(std::ostream& out, const MaskSet& masks, double dt) {
  masks.validate();
  out << "t";
  for (Eigen::Index r = 0; r < masks.n_inputs(); ++r)
    for (Eigen::Index c = 0; c < masks.dim_x(); ++c) out << ",m_" << r << '_' << c;
  for (Eigen::Index r = 0; r < masks.dim_y(); ++r)
    for (Eigen::Index c = 0; c < masks.n_outputs(); ++c) out << ",u_" << r << '_' << c;
  for (Eigen::Index r = 0; r < masks.n_inputs(); ++r) out << ",sb_" << r;
  out << '\n' << std::setprecision(17);
  for (Eigen::Index t = 0; t < masks.period(); ++t) {
    const auto k = static_cast<std::size_t>(t);
    out << static_cast<double>(t) * dt;
    for (Eigen::Index r = 0; r < masks.n_inputs(); ++r)
      for (Eigen::Index c = 0; c < masks.dim_x(); ++c) out << ',' << masks.m[k](r, c);
    for (Eigen::Index r = 0; r < masks.dim_y(); ++r)
      for (Eigen::Index c = 0; c < masks.n_outputs(); ++c) out << ',' << masks.u[k](r, c);
    for (Eigen::Index r = 0; r < masks.n_inputs(); ++r) out << ',' << masks.s_b(r, t);
    out << '\n';
  }
}

}  // namespace physbp
