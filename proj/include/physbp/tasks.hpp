#pragma once

#include "physbp/cost.hpp"
#include "physbp/masking.hpp"
#include "physbp/random.hpp"

#include <iosfwd>

namespace physbp {

/// Paired input/target sequences with a per-instance cost mask.
struct SequenceDataset {
  Sequence inputs;
  Sequence targets;
  CostMask cost_mask;

  std::size_t size() const { return inputs.size(); }
  void validate() const;
};

struct VariableDelayOptions {
  bool one_hot_input = false;
};

/// q_i i.i.d. uniform on {0, 1, 2}; target y_i = q_{i - q_i}.
/// Instances 0 and 1 are masked out because the lookback may leave the sequence.
SequenceDataset gen_variable_delay(std::size_t n, RandomStream& rng,
                                   const VariableDelayOptions& options = {});

struct SyntheticLabelOptions {
  std::size_t window = 3;     // frames the label depends on (>= 1)
  double smoothness = 0.8;    // AR(1) coefficient of the input process, in [0, 1)
};

/// Frame labeling stand-in for phoneme recognition.
///
/// Inputs follow independent unit-variance AR(1) processes per dimension.
/// The label of frame t quantizes z_t = mean over the last `window` frames
/// of the mean input value into `n_classes` equiprobable bins of the
/// stationary distribution of z. Targets are one-hot; the first
/// `window - 1` frames are masked out.
SequenceDataset gen_synthetic_labels(std::size_t n, std::size_t n_classes, std::size_t input_dim,
                                     RandomStream& rng, const SyntheticLabelOptions& options = {});

/// sqrt(mean((pred - target)^2)) / std(target) over valid instances.
/// Vectors are pooled over all components.
double nrmse(const Sequence& pred, const Sequence& target, const CostMask& mask);

/// Fraction of valid frames whose labels disagree.
double frame_error_rate(const std::vector<std::size_t>& pred_labels,
                        const std::vector<std::size_t>& true_labels, const CostMask& mask);

/// Index of the largest component of each vector.
std::vector<std::size_t> argmax_labels(const Sequence& scores);

/// CSV with columns valid,x0..,y0..; one row per instance.
void write_dataset_csv(std::ostream& out, const SequenceDataset& data);
SequenceDataset read_dataset_csv(std::istream& in);

}  // namespace physbp
