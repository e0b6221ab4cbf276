#pragma once

#include "physbp/cost.hpp"
#include "physbp/masking.hpp"
#include "physbp/system.hpp"
#include "physbp/tasks.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>

namespace physbp {

/// Everything that can be trained: the plant's kernels and the masks.
struct Parameters {
  PhysicalSystem system;
  MaskSet masks;
};

enum class Block { w_sa, w_aa, w_so, w_ao, m, s_b, u, y_b };
inline constexpr std::array<Block, 8> kAllBlocks = {Block::w_sa, Block::w_aa, Block::w_so,
                                                    Block::w_ao, Block::m,    Block::s_b,
                                                    Block::u,    Block::y_b};
std::string_view block_name(Block b);
bool is_kernel_block(Block b);

/// Gradients with the same shapes as the parameters they belong to.
struct GradientBundle {
  std::vector<Matrix> d_w_sa, d_w_aa, d_w_so, d_w_ao;  // per tap
  std::vector<Matrix> d_m;                             // per segment sample
  Matrix d_s_b;
  std::vector<Matrix> d_u;
  Vector d_y_b;

  static GradientBundle zeros_like(const Parameters& p);
  GradientBundle& operator+=(const GradientBundle& other);
  GradientBundle& operator*=(double c);
};

/// d_w_xy[k] = dt * sum_i dst[i+k] src[i]^T over the valid range, for
/// (dst, src) in {(e_a, s), (e_a, a), (e_o, s), (e_o, a)}. Tap 0 of w_aa is
/// not a free parameter and always gets a zero gradient. Blocks with
/// `want[b] == false` are returned as zeros.
struct KernelGradientRequest {
  bool w_sa = true, w_aa = true, w_so = true, w_ao = true;
  /// Per-block tap subsets (w_sa, w_aa, w_so, w_ao); empty means every tap.
  std::array<std::vector<std::size_t>, 4> taps;
};
void kernel_gradients(const PhysicalSystem& sys, const Signal& s, const ForwardTrace& fwd,
                      const Signal& e_o, const BackwardTrace& bwd, GradientBundle& out,
                      const KernelGradientRequest& want = {});

/// Which gradient blocks an evaluation should assemble.
struct GradientRequest {
  KernelGradientRequest kernels{false, false, false, false, {}};
  bool m = true, s_b = true, u = true, y_b = true;

  bool needs_backward() const {
    return m || s_b || kernels.w_sa || kernels.w_aa || kernels.w_so || kernels.w_ao;
  }
  static GradientRequest all() { return {{true, true, true, true, {}}, true, true, true, true}; }
  static GradientRequest none() {
    return {{false, false, false, false, {}}, false, false, false, false};
  }
};

struct EvaluateOptions {
  /// Independent noisy repeats per sequence; gradients and cost are averaged.
  std::size_t repeats = 1;
  /// Multiplies the output errors before they enter the pipeline.
  double error_scale = 1.0;
  BackwardOptions backward;
  std::size_t threads = 1;
};

struct BatchEvaluation {
  double cost = 0.0;
  std::vector<Sequence> preds;
  std::vector<ForwardTrace> traces;  // first repeat of each sequence
  GradientBundle grads;
};

/// Full pipeline on a batch of sequences: encode, forward, decode, cost,
/// error encoding, physical backward pass, mask and kernel gradients.
///
/// The cost pools every valid instance of the batch. The error signal fed
/// to the plant is dt * U^T e_i, the discrete gradient dC/do. Sequence j,
/// repeat r draws its noise from rng.split(j * repeats + r), so results do
/// not depend on `threads`.
BatchEvaluation evaluate_batch(const Parameters& params, const std::vector<SequenceDataset>& batch,
                               CostKind cost, const GradientRequest& request,
                               const RandomStream& rng, const EvaluateOptions& options = {});

/// Flattened view of one parameter block. w_aa skips its fixed tap 0.
Vector flatten(const Parameters& p, Block b);
void assign(Parameters& p, Block b, const Vector& values);
Vector flatten(const GradientBundle& g, Block b);
void assign(GradientBundle& g, Block b, const Vector& values);

/// Central differences (loss(theta + eps e_j) - loss(theta - eps e_j)) / 2 eps.
Vector finite_difference_gradient(const std::function<double(const Vector&)>& loss,
                                  const Vector& theta, double eps);

/// ||g1 - g2|| / max(||g1||, ||g2||, 1e-12).
double relative_error(const Vector& g1, const Vector& g2);

/// Random toy problem for gradient checking.
struct ToySystemConfig {
  Eigen::Index n_inputs = 3;
  Eigen::Index n_states = 3;
  Eigen::Index n_outputs = 3;
  Eigen::Index dim_x = 2;
  Eigen::Index dim_y = 2;
  std::size_t kernel_len = 4;
  Eigen::Index period = 10;
  std::size_t instances = 6;
  Nonlinearity f = Nonlinearity::rectifier();
  double dt = 0.25;
  double eps = 1e-5;
  double threshold = 1e-4;
  /// Minimum distance of every pre-activation from a kink; systems that
  /// violate it are redrawn.
  double kink_margin = 1e-3;
  bool break_adjoint = false;
};

struct BlockReport {
  std::string block;
  double max_rel_err = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<BlockReport> blocks;
  double threshold = 1e-4;
  bool pass() const;
};

/// Builds a random kink-free toy problem and compares every block's
/// physically backpropagated gradient against finite differences.
GradCheckReport grad_check(const ToySystemConfig& config, std::uint64_t seed);

/// The toy problem grad_check uses, exposed for tests.
struct ToyProblem {
  Parameters params;
  SequenceDataset data;
};
ToyProblem make_toy_problem(const ToySystemConfig& config, RandomStream& rng);

void write_report_text(std::ostream& out, const GradCheckReport& report);
void write_report_csv(std::ostream& out, const GradCheckReport& report);
GradCheckReport read_report_csv(std::istream& in);

}  // namespace physbp
