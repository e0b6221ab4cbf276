#include "physbp/tasks.hpp"

#include "physbp/error.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace physbp {

void SequenceDataset::validate() const {
  if (inputs.size() != targets.size() || inputs.size() != cost_mask.size())
    throw LengthError("SequenceDataset: inputs, targets and mask differ in length");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    require_finite(inputs[i], "SequenceDataset input");
    require_finite(targets[i], "SequenceDataset target");
  }
}

SequenceDataset gen_variable_delay(std::size_t n, RandomStream& rng,
                                   const VariableDelayOptions& options) {
  if (n < 3) throw LengthError("gen_variable_delay: need at least 3 instances");
  std::vector<int> q(n);
  for (auto& v : q) v = static_cast<int>(rng.below(3));
  SequenceDataset d;
  d.inputs.reserve(n);
  d.targets.reserve(n);
  d.cost_mask.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (options.one_hot_input) {
      Vector x = Vector::Zero(3);
      x[q[i]] = 1.0;
      d.inputs.push_back(x);
    } else {
      d.inputs.push_back(Vector::Constant(1, q[i]));
    }
    const auto back = static_cast<std::ptrdiff_t>(i) - q[i];
    const bool valid = i >= 2;
    d.targets.push_back(Vector::Constant(1, back >= 0 ? q[static_cast<std::size_t>(back)] : 0));
    d.cost_mask.push_back(valid);
  }
  return d;
}

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  double lo = -40.0;
  double hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

SequenceDataset gen_synthetic_labels(std::size_t n, std::size_t n_classes, std::size_t input_dim,
                                     RandomStream& rng, const SyntheticLabelOptions& options) {
  if (n_classes < 2) throw ConfigError("gen_synthetic_labels: need at least 2 classes");
  if (input_dim < 1) throw ConfigError("gen_synthetic_labels: input_dim must be positive");
  if (options.window < 1) throw ConfigError("gen_synthetic_labels: window must be positive");
  const double alpha = options.smoothness;
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("gen_synthetic_labels: smoothness in [0,1)");

  const auto dim = static_cast<Eigen::Index>(input_dim);
  const double innovation = std::sqrt(1.0 - alpha * alpha);
  SequenceDataset d;
  Vector x(dim);
  for (Eigen::Index c = 0; c < dim; ++c) x[c] = rng.normal();
  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0)
      for (Eigen::Index c = 0; c < dim; ++c) x[c] = alpha * x[c] + innovation * rng.normal();
    d.inputs.push_back(x);
  }

  // Stationary variance of z: each dimension has unit variance and lag
  // correlation alpha^|j - j'|.
  const std::size_t w = options.window;
  double corr_sum = 0.0;
  for (std::size_t j = 0; j < w; ++j)
    for (std::size_t k = 0; k < w; ++k)
      corr_sum += std::pow(alpha, std::abs(static_cast<double>(j) - static_cast<double>(k)));
  const double z_std =
      std::sqrt(corr_sum / (static_cast<double>(w * w) * static_cast<double>(input_dim)));
  std::vector<double> thresholds;
  for (std::size_t k = 1; k < n_classes; ++k)
    thresholds.push_back(z_std *
                         normal_quantile(static_cast<double>(k) / static_cast<double>(n_classes)));

  for (std::size_t t = 0; t < n; ++t) {
    const bool valid = t + 1 >= w;
    std::size_t label = 0;
    if (valid) {
      double z = 0.0;
      for (std::size_t j = 0; j < w; ++j) z += d.inputs[t - j].mean();
      z /= static_cast<double>(w);
      while (label < thresholds.size() && z > thresholds[label]) ++label;
    }
    Vector onehot = Vector::Zero(static_cast<Eigen::Index>(n_classes));
    onehot[static_cast<Eigen::Index>(label)] = 1.0;
    d.targets.push_back(onehot);
    d.cost_mask.push_back(valid);
  }
  return d;
}

double nrmse(const Sequence& pred, const Sequence& target, const CostMask& mask) {
  if (pred.size() != target.size() || pred.size() != mask.size())
    throw LengthError("nrmse: length mismatch");
  double sum = 0.0;
  double sum_sq_err = 0.0;
  double count = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask[i]) continue;
    if (pred[i].size() != target[i].size()) throw DimensionError("nrmse: dimension mismatch");
    sum += target[i].sum();
    sum_sq_err += (pred[i] - target[i]).squaredNorm();
    count += static_cast<double>(target[i].size());
  }
  if (count < 2) throw NumericError("nrmse: need at least two valid values");
  const double mean = sum / count;
  double var = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (mask[i]) var += (target[i].array() - mean).square().sum();
  var /= count;
  if (var == 0.0) throw NumericError("nrmse: target has zero variance");
  return std::sqrt(sum_sq_err / count) / std::sqrt(var);
}

double frame_error_rate(const std::vector<std::size_t>& pred_labels,
                        const std::vector<std::size_t>& true_labels, const CostMask& mask) {
  if (pred_labels.size() != true_labels.size() || pred_labels.size() != mask.size())
    throw LengthError("frame_error_rate: length mismatch");
  std::size_t wrong = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    ++count;
    if (pred_labels[i] != true_labels[i]) ++wrong;
  }
  if (count == 0) throw NumericError("frame_error_rate: empty mask");
  return static_cast<double>(wrong) / static_cast<double>(count);
}

std::vector<std::size_t> argmax_labels(const Sequence& scores) {
  std::vector<std::size_t> out;
  out.reserve(scores.size());
  for (const auto& s : scores) {
    Eigen::Index idx = 0;
    s.maxCoeff(&idx);
    out.push_back(static_cast<std::size_t>(idx));
  }
  return out;
}

void write_dataset_csv(std::ostream& out, const SequenceDataset& data) {
  data.validate();
  if (data.size() == 0) throw LengthError("write_dataset_csv: empty dataset");
  out << "valid";
  for (Eigen::Index c = 0; c < data.inputs.front().size(); ++c) out << ",x" << c;
  for (Eigen::Index c = 0; c < data.targets.front().size(); ++c) out << ",y" << c;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << (data.cost_mask[i] ? 1 : 0);
    for (Eigen::Index c = 0; c < data.inputs[i].size(); ++c) out << ',' << data.inputs[i][c];
    for (Eigen::Index c = 0; c < data.targets[i].size(); ++c) out << ',' << data.targets[i][c];
    out << '\n';
  }
}

SequenceDataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw LengthError("dataset csv: missing header");
  std::istringstream header(line);
  std::string cell;
  std::getline(header, cell, ',');
  if (cell != "valid") throw ConfigError("dataset csv: first column must be 'valid'");
  Eigen::Index dx = 0;
  Eigen::Index dy = 0;
  while (std::getline(header, cell, ',')) {
    if (!cell.empty() && cell[0] == 'x') ++dx;
    else if (!cell.empty() && cell[0] == 'y') ++dy;
    else throw ConfigError("dataset csv: unexpected column '" + cell + "'");
  }
  SequenceDataset d;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::getline(row, cell, ',');
    d.cost_mask.push_back(std::stoi(cell) != 0);
    Vector x(dx);
    Vector y(dy);
    for (Eigen::Index c = 0; c < dx + dy; ++c) {
      if (!std::getline(row, cell, ',')) throw DimensionError("dataset csv: short row");
      (c < dx ? x[c] : y[c - dx]) = std::stod(cell);
    }
    d.inputs.push_back(std::move(x));
    d.targets.push_back(std::move(y));
  }
  d.validate();
  return d;
}

}  // namespace physbp
