#pragma once

#include "physbp/masking.hpp"

#include <vector>

namespace physbp {

/// Per-instance validity flags; instances with `false` contribute no cost.
using CostMask = std::vector<bool>;

struct CostResult {
  double cost = 0.0;
  Sequence errs;  // dC/dy_i, zero on masked-out instances
};

enum class CostKind { mse, softmax_ce };

/// cost = 1/2 sum ||pred - target||^2 / count over valid instances.
CostResult mse_cost(const Sequence& pred, const Sequence& target, const CostMask& mask);

/// Mean softmax cross-entropy per valid frame against one-hot targets.
CostResult softmax_ce_cost(const Sequence& logits, const Sequence& onehot, const CostMask& mask);

CostResult evaluate_cost(CostKind kind, const Sequence& pred, const Sequence& target,
                         const CostMask& mask);

Vector softmax(const Vector& logits);

}  // namespace physbp
