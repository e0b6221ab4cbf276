#include "physbp/cost.hpp"

#include "physbp/error.hpp"

#include <cmath>

namespace physbp {

namespace {

std::size_t check_inputs(const Sequence& pred, const Sequence& target, const CostMask& mask,
                         const char* what) {
  if (pred.size() != target.size() || pred.size() != mask.size())
    throw LengthError(std::string(what) + ": length mismatch");
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != target[i].size())
      throw DimensionError(std::string(what) + ": dimension mismatch");
    if (mask[i]) ++count;
  }
  if (count == 0) throw NumericError(std::string(what) + ": empty mask");
  return count;
}

}  // namespace

CostResult mse_cost(const Sequence& pred, const Sequence& target, const CostMask& mask) {
  const double count = static_cast<double>(check_inputs(pred, target, mask, "mse_cost"));
  CostResult r;
  r.errs.reserve(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) {
      r.errs.push_back(Vector::Zero(pred[i].size()));
      continue;
    }
    const Vector diff = pred[i] - target[i];
    r.cost += 0.5 * diff.squaredNorm();
    r.errs.push_back(diff / count);
  }
  r.cost /= count;
  return r;
}

Vector softmax(const Vector& logits) {
  const Vector e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

CostResult softmax_ce_cost(const Sequence& logits, const Sequence& onehot, const CostMask& mask) {
  const double count = static_cast<double>(check_inputs(logits, onehot, mask, "softmax_ce_cost"));
  CostResult r;
  r.errs.reserve(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) {
      r.errs.push_back(Vector::Zero(logits[i].size()));
      continue;
    }
    const Vector& z = logits[i];
    const double zmax = z.maxCoeff();
    const double log_norm = zmax + std::log((z.array() - zmax).exp().sum());
    r.cost += -(onehot[i].array() * (z.array() - log_norm)).sum();
    r.errs.push_back((softmax(z) - onehot[i]) / count);
  }
  r.cost /= count;
  return r;
}

CostResult evaluate_cost(CostKind kind, const Sequence& pred, const Sequence& target,
                         const CostMask& mask) {
  return kind == CostKind::mse ? mse_cost(pred, target, mask)
                               : softmax_ce_cost(pred, target, mask);
}

}  // namespace physbp
