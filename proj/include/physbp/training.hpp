#pragma once

#include "physbp/cost.hpp"
#include "physbp/error.hpp"
#include "physbp/gradients.hpp"
#include "physbp/models.hpp"
#include "physbp/tasks.hpp"

#include <cmath>
#include <functional>
#include <iosfwd>
#include <optional>

namespace physbp {

/// Benchmark the plant is trained on.
struct TaskSpec {
  enum class Kind { variable_delay, synthetic_labels };

  Kind kind = Kind::variable_delay;
  VariableDelayOptions delay;
  std::size_t n_classes = 4;
  std::size_t input_dim = 3;
  SyntheticLabelOptions labels;

  Eigen::Index dim_x() const;
  Eigen::Index dim_y() const;
  CostKind cost() const;
  SequenceDataset generate(std::size_t n, RandomStream& rng) const;
  /// NRMSE for the delay task, frame error rate for labeling; pooled over
  /// all sequences.
  double metric(const std::vector<Sequence>& preds,
                const std::vector<SequenceDataset>& data) const;
};

struct TrainConfig {
  std::size_t iterations = 1500;
  std::size_t batch_len = 100;       // instances per sequence
  std::size_t batch_sequences = 1;   // sequences per iteration
  double lr0 = 0.25;
  double init_std_input_mask = std::sqrt(0.2);
  double init_std_output_mask = std::sqrt(0.1);
  bool train_input_mask = true;
  bool train_input_bias = false;
  bool train_output_mask = true;
  bool train_output_bias = false;
  bool train_kernels = false;
  std::uint64_t seed = 7;
  std::size_t noise_repeats = 1;
  std::size_t threads = 1;

  void validate() const;
};

struct LogRecord {
  std::size_t iteration = 0;
  double cost = 0.0;
  double metric = 0.0;
  double lr = 0.0;
  /// Cumulative plant signal time consumed by forward and backward passes.
  double seconds = 0.0;
};

struct TrainingLog {
  std::vector<LogRecord> records;
};

void write_log_csv_header(std::ostream& out);
void write_log_csv_row(std::ostream& out, const LogRecord& r);
void write_log_csv(std::ostream& out, const TrainingLog& log);

/// Non-finite cost during training. Carries the log up to the failure.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, TrainingLog log)
      : NumericError(what), log_(std::move(log)) {}
  const TrainingLog& log() const { return log_; }

 private:
  TrainingLog log_;
};

/// g / ||g||_2; the zero vector is returned unchanged.
Vector normalize_gradient(const Vector& g);

/// lr0 * (1 - iteration / iterations).
double learning_rate(double lr0, std::size_t iteration, std::size_t iterations);

/// i.i.d. Gaussian masks with the configured standard deviations; biases zero.
MaskSet init_masks(const MaskSet& layout, const TrainConfig& cfg, RandomStream& rng);

/// Applies one normalized gradient step of size lr to every trainable block
/// and projects constrained kernel entries back into range.
void apply_update(Parameters& params, const GradientBundle& grads, const PlantTemplate& plant,
                  const TrainConfig& cfg, double lr);

/// Gradient request matching the trainable blocks of cfg and plant.
GradientRequest training_request(const PlantTemplate& plant, const TrainConfig& cfg);

struct TrainResult {
  TrainingLog log;
  Parameters params;
};

using RecordSink = std::function<void(const LogRecord&)>;

/// Gradient-descent loop: fresh batch, forward, decode, cost, physical
/// backward pass, per-block normalized update with linearly decaying rate.
/// `initial` overrides the random mask initialization (checkpoints).
TrainResult train(const PlantTemplate& plant, const TaskSpec& task, const TrainConfig& cfg,
                  const std::optional<Parameters>& initial = std::nullopt,
                  const RecordSink& sink = {});

/// Metric of `params` on `n_sequences` fresh sequences drawn from `seed`.
double evaluate_metric(const Parameters& params, const TaskSpec& task, std::size_t n_sequences,
                       std::size_t length, std::uint64_t seed, std::size_t threads = 1);

}  // namespace physbp
