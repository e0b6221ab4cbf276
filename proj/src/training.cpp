#include "physbp/training.hpp"

#include <cstdio>
#include <ostream>

namespace physbp {

Eigen::Index TaskSpec::dim_x() const {
  if (kind == Kind::variable_delay) return delay.one_hot_input ? 3 : 1;
  return static_cast<Eigen::Index>(input_dim);
}

Eigen::Index TaskSpec::dim_y() const {
  return kind == Kind::variable_delay ? 1 : static_cast<Eigen::Index>(n_classes);
}

CostKind TaskSpec::cost() const {
  return kind == Kind::variable_delay ? CostKind::mse : CostKind::softmax_ce;
}

SequenceDataset TaskSpec::generate(std::size_t n, RandomStream& rng) const {
  if (kind == Kind::variable_delay) return gen_variable_delay(n, rng, delay);
  return gen_synthetic_labels(n, n_classes, input_dim, rng, labels);
}

double TaskSpec::metric(const std::vector<Sequence>& preds,
                        const std::vector<SequenceDataset>& data) const {
  Sequence all_pred, all_target;
  CostMask mask;
  for (std::size_t j = 0; j < data.size(); ++j) {
    all_pred.insert(all_pred.end(), preds[j].begin(), preds[j].end());
    all_target.insert(all_target.end(), data[j].targets.begin(), data[j].targets.end());
    mask.insert(mask.end(), data[j].cost_mask.begin(), data[j].cost_mask.end());
  }
  if (kind == Kind::variable_delay) return nrmse(all_pred, all_target, mask);
  return frame_error_rate(argmax_labels(all_pred), argmax_labels(all_target), mask);
}

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("train.iterations must be >= 1");
  if (batch_len < 3) throw ConfigError("train.batch_len must be >= 3");
  if (batch_sequences < 1) throw ConfigError("train.batch_sequences must be >= 1");
  if (!(lr0 >= 0.0) || !std::isfinite(lr0)) throw ConfigError("train.lr0 must be >= 0");
  if (!(init_std_input_mask >= 0.0) || !(init_std_output_mask >= 0.0))
    throw ConfigError("mask init standard deviations must be >= 0");
  if (noise_repeats < 1) throw ConfigError("train.noise_repeats must be >= 1");
}

void write_log_csv_header(std::ostream& out) { out << "iter,cost,metric,lr,seconds\n"; }

void write_log_csv_row(std::ostream& out, const LogRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", r.iteration, r.cost, r.metric,
                r.lr, r.seconds);
  out << buf;
}

void write_log_csv(std::ostream& out, const TrainingLog& log) {
  write_log_csv_header(out);
  for (const auto& r : log.records) write_log_csv_row(out, r);
}

Vector normalize_gradient(const Vector& g) {
  const double n = g.norm();
  if (n == 0.0) return g;
  return g / n;
}

double learning_rate(double lr0, std::size_t iteration, std::size_t iterations) {
  return lr0 * (1.0 - static_cast<double>(iteration) / static_cast<double>(iterations));
}

MaskSet init_masks(const MaskSet& layout, const TrainConfig& cfg, RandomStream& rng) {
  MaskSet m = layout;
  for (auto& mt : m.m)
    for (Eigen::Index j = 0; j < mt.cols(); ++j)
      for (Eigen::Index i = 0; i < mt.rows(); ++i) mt(i, j) = cfg.init_std_input_mask * rng.normal();
  for (auto& ut : m.u)
    for (Eigen::Index j = 0; j < ut.cols(); ++j)
      for (Eigen::Index i = 0; i < ut.rows(); ++i)
        ut(i, j) = cfg.init_std_output_mask * rng.normal();
  m.s_b.setZero();
  m.y_b.setZero();
  return m;
}

namespace {

std::size_t kernel_index(Block b) {
  switch (b) {
    case Block::w_sa: return 0;
    case Block::w_aa: return 1;
    case Block::w_so: return 2;
    default: return 3;
  }
}

Kernel& kernel_ref(PhysicalSystem& s, Block b) {
  switch (b) {
    case Block::w_sa: return s.w_sa;
    case Block::w_aa: return s.w_aa;
    case Block::w_so: return s.w_so;
    default: return s.w_ao;
  }
}

const std::vector<Matrix>& grad_taps(const GradientBundle& g, Block b) {
  switch (b) {
    case Block::w_sa: return g.d_w_sa;
    case Block::w_aa: return g.d_w_aa;
    case Block::w_so: return g.d_w_so;
    default: return g.d_w_ao;
  }
}

void step_block(Parameters& p, const GradientBundle& g, Block b, double lr) {
  const Vector dir = normalize_gradient(flatten(g, b));
  assign(p, b, flatten(p, b) - lr * dir);
}

// Kernel taps are stepped in integrated units (tap * dt), the physical
// weight the modulators realize.
void step_kernel(Parameters& p, const GradientBundle& g, const KernelTrainable& kt, double lr) {
  Kernel& k = kernel_ref(p.system, kt.block);
  const double dt = k.dt();
  const auto& gt = grad_taps(g, kt.block);
  Eigen::Index total = 0;
  for (std::size_t t : kt.taps) total += gt[t].size();
  Vector grad(total);
  Eigen::Index at = 0;
  for (std::size_t t : kt.taps) {
    grad.segment(at, gt[t].size()) = gt[t].reshaped() / dt;
    at += gt[t].size();
  }
  const Vector dir = normalize_gradient(grad);
  std::vector<Matrix> taps = k.taps();
  at = 0;
  for (std::size_t t : kt.taps) {
    Matrix w = taps[t] * dt;
    w.reshaped() -= lr * dir.segment(at, w.size());
    at += w.size();
    w = w.cwiseMax(-kt.bound).cwiseMin(kt.bound);
    taps[t] = w / dt;
  }
  k = Kernel(std::move(taps), dt);
}

}  // namespace

GradientRequest training_request(const PlantTemplate& plant, const TrainConfig& cfg) {
  GradientRequest req = GradientRequest::none();
  req.m = cfg.train_input_mask;
  req.s_b = cfg.train_input_bias;
  req.u = cfg.train_output_mask;
  req.y_b = cfg.train_output_bias;
  if (cfg.train_kernels) {
    for (const auto& kt : plant.kernel_trainables) {
      const std::size_t idx = kernel_index(kt.block);
      bool* flags[4] = {&req.kernels.w_sa, &req.kernels.w_aa, &req.kernels.w_so,
                        &req.kernels.w_ao};
      *flags[idx] = true;
      auto& taps = req.kernels.taps[idx];
      taps.insert(taps.end(), kt.taps.begin(), kt.taps.end());
    }
  }
  return req;
}

void apply_update(Parameters& params, const GradientBundle& grads, const PlantTemplate& plant,
                  const TrainConfig& cfg, double lr) {
  if (cfg.train_input_mask) step_block(params, grads, Block::m, lr);
  if (cfg.train_input_bias) step_block(params, grads, Block::s_b, lr);
  if (cfg.train_output_mask) step_block(params, grads, Block::u, lr);
  if (cfg.train_output_bias) step_block(params, grads, Block::y_b, lr);
  if (cfg.train_kernels)
    for (const auto& kt : plant.kernel_trainables) step_kernel(params, grads, kt, lr);
}

TrainResult train(const PlantTemplate& plant, const TaskSpec& task, const TrainConfig& cfg,
                  const std::optional<Parameters>& initial, const RecordSink& sink) {
  cfg.validate();
  const RandomStream root(cfg.seed);
  Parameters params = [&] {
    if (initial) return *initial;
    RandomStream init_rng = root.split(0);
    return Parameters{plant.system, init_masks(plant.masks, cfg, init_rng)};
  }();
  if (params.masks.dim_x() != task.dim_x() || params.masks.dim_y() != task.dim_y())
    throw DimensionError("train: mask dimensions do not match the task");

  const GradientRequest request = training_request(plant, cfg);
  EvaluateOptions options;
  options.repeats = cfg.noise_repeats;
  options.threads = cfg.threads;

  const double dt = params.system.dt();
  const double passes = request.needs_backward() ? 2.0 : 1.0;
  const double seconds_per_iter = passes * static_cast<double>(cfg.noise_repeats) *
                                  static_cast<double>(cfg.batch_sequences * cfg.batch_len) *
                                  static_cast<double>(params.masks.period()) * dt;

  TrainingLog log;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    RandomStream data_rng = root.split(2 * it + 1);
    std::vector<SequenceDataset> batch;
    for (std::size_t j = 0; j < cfg.batch_sequences; ++j)
      batch.push_back(task.generate(cfg.batch_len, data_rng));

    const std::string where = "training diverged at iteration " + std::to_string(it);
    std::optional<BatchEvaluation> evaluated;
    try {
      evaluated = evaluate_batch(params, batch, task.cost(), request, root.split(2 * it + 2),
                                 options);
    } catch (const NumericError& e) {
      throw DivergenceError(where + ": " + e.what(), log);
    }
    const BatchEvaluation& eval = *evaluated;
    if (!std::isfinite(eval.cost))
      throw DivergenceError(where, log);

    const double lr = learning_rate(cfg.lr0, it, cfg.iterations);
    LogRecord rec{it, eval.cost, task.metric(eval.preds, batch), lr,
                  seconds_per_iter * static_cast<double>(it + 1)};
    log.records.push_back(rec);
    if (sink) sink(rec);

    if (lr > 0.0) apply_update(params, eval.grads, plant, cfg, lr);
  }
  return TrainResult{std::move(log), std::move(params)};
}

double evaluate_metric(const Parameters& params, const TaskSpec& task, std::size_t n_sequences,
                       std::size_t length, std::uint64_t seed, std::size_t threads) {
  const RandomStream root(seed);
  RandomStream data_rng = root.split(1);
  std::vector<SequenceDataset> data;
  for (std::size_t j = 0; j < n_sequences; ++j) data.push_back(task.generate(length, data_rng));
  EvaluateOptions options;
  options.threads = threads;
  const BatchEvaluation eval =
      evaluate_batch(params, data, task.cost(), GradientRequest::none(), root.split(2), options);
  return task.metric(eval.preds, data);
}

}  // namespace physbp
