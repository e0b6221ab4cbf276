#include "physbp/gradients.hpp"

#include "physbp/error.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

namespace physbp {

std::string_view block_name(Block b) {
  switch (b) {
    case Block::w_sa: return "w_sa";
    case Block::w_aa: return "w_aa";
    case Block::w_so: return "w_so";
    case Block::w_ao: return "w_ao";
    case Block::m: return "m";
    case Block::s_b: return "s_b";
    case Block::u: return "u";
    case Block::y_b: return "y_b";
  }
  return "?";
}

bool is_kernel_block(Block b) {
  return b == Block::w_sa || b == Block::w_aa || b == Block::w_so || b == Block::w_ao;
}

namespace {

std::vector<Matrix> zero_taps(const Kernel& k) {
  return std::vector<Matrix>(k.length(), Matrix::Zero(k.rows(), k.cols()));
}

void add_stack(std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

void scale_stack(std::vector<Matrix>& a, double c) {
  for (auto& m : a) m *= c;
}

void correlate_into(std::vector<Matrix>& out, const Signal& dst, const Signal& src,
                    const std::vector<std::size_t>* taps, std::size_t first_tap) {
  const Eigen::Index n = dst.n_samples();
  auto one = [&](std::size_t k) {
    const auto lag = static_cast<Eigen::Index>(k);
    if (k >= out.size()) throw DimensionError("kernel_gradients: tap index out of range");
    if (k < first_tap || lag >= n) return;
    out[k].noalias() = dst.dt() * dst.samples().rightCols(n - lag) *
                       src.samples().leftCols(n - lag).transpose();
  };
  if (taps != nullptr) {
    for (std::size_t k : *taps) one(k);
  } else {
    for (std::size_t k = 0; k < out.size(); ++k) one(k);
  }
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

GradientBundle GradientBundle::zeros_like(const Parameters& p) {
  const MaskSet& mk = p.masks;
  return GradientBundle{zero_taps(p.system.w_sa),
                        zero_taps(p.system.w_aa),
                        zero_taps(p.system.w_so),
                        zero_taps(p.system.w_ao),
                        std::vector<Matrix>(mk.m.size(), Matrix::Zero(mk.n_inputs(), mk.dim_x())),
                        Matrix::Zero(mk.s_b.rows(), mk.s_b.cols()),
                        std::vector<Matrix>(mk.u.size(), Matrix::Zero(mk.dim_y(), mk.n_outputs())),
                        Vector::Zero(mk.y_b.size())};
}

GradientBundle& GradientBundle::operator+=(const GradientBundle& o) {
  add_stack(d_w_sa, o.d_w_sa);
  add_stack(d_w_aa, o.d_w_aa);
  add_stack(d_w_so, o.d_w_so);
  add_stack(d_w_ao, o.d_w_ao);
  add_stack(d_m, o.d_m);
  d_s_b += o.d_s_b;
  add_stack(d_u, o.d_u);
  d_y_b += o.d_y_b;
  return *this;
}

GradientBundle& GradientBundle::operator*=(double c) {
  scale_stack(d_w_sa, c);
  scale_stack(d_w_aa, c);
  scale_stack(d_w_so, c);
  scale_stack(d_w_ao, c);
  scale_stack(d_m, c);
  d_s_b *= c;
  scale_stack(d_u, c);
  d_y_b *= c;
  return *this;
}

void kernel_gradients(const PhysicalSystem& sys, const Signal& s, const ForwardTrace& fwd,
                      const Signal& e_o, const BackwardTrace& bwd, GradientBundle& out,
                      const KernelGradientRequest& want) {
  const Eigen::Index n = s.n_samples();
  if (fwd.a.n_samples() != n || e_o.n_samples() != n || bwd.e_a.n_samples() != n)
    throw LengthError("kernel_gradients: traces come from runs of different length");
  auto subset = [&](std::size_t i) { return want.taps[i].empty() ? nullptr : &want.taps[i]; };
  const auto* sa = subset(0);
  const auto* aa = subset(1);
  const auto* so = subset(2);
  const auto* ao = subset(3);
  out.d_w_sa = zero_taps(sys.w_sa);
  out.d_w_aa = zero_taps(sys.w_aa);
  out.d_w_so = zero_taps(sys.w_so);
  out.d_w_ao = zero_taps(sys.w_ao);
  if (want.w_sa) correlate_into(out.d_w_sa, bwd.e_a, s, sa, 0);
  if (want.w_aa) correlate_into(out.d_w_aa, bwd.e_a, fwd.a, aa, 1);
  if (want.w_so) correlate_into(out.d_w_so, e_o, s, so, 0);
  if (want.w_ao) correlate_into(out.d_w_ao, e_o, fwd.a, ao, 0);
}

BatchEvaluation evaluate_batch(const Parameters& params, const std::vector<SequenceDataset>& batch,
                               CostKind cost_kind, const GradientRequest& request,
                               const RandomStream& rng, const EvaluateOptions& options) {
  if (batch.empty()) throw LengthError("evaluate_batch: empty batch");
  if (options.repeats < 1) throw ConfigError("evaluate_batch: repeats must be >= 1");
  const PhysicalSystem& sys = params.system;
  const MaskSet& masks = params.masks;
  sys.validate();
  masks.validate();
  if (masks.n_inputs() != sys.n_inputs() || masks.n_outputs() != sys.n_outputs())
    throw DimensionError("evaluate_batch: masks do not match the plant's channels");

  const double dt = sys.dt();
  const std::size_t n_seq = batch.size();
  const Eigen::Index period = masks.period();

  std::vector<Signal> inputs;
  inputs.reserve(n_seq);
  for (const auto& d : batch) {
    d.validate();
    inputs.push_back(encode_inputs(d.inputs, masks, dt));
  }

  BatchEvaluation result;
  result.grads = GradientBundle::zeros_like(params);
  const bool want_grads = request.needs_backward() || request.u || request.y_b;

  for (std::size_t r = 0; r < options.repeats; ++r) {
    std::vector<RandomStream> streams;
    streams.reserve(n_seq);
    for (std::size_t j = 0; j < n_seq; ++j)
      streams.push_back(rng.split(static_cast<std::uint64_t>(j * options.repeats + r)));

    std::vector<ForwardTrace> traces(n_seq, ForwardTrace{Signal(1, 0, dt), Signal(1, 0, dt),
                                                         Signal(1, 0, dt), Matrix()});
    std::vector<Sequence> preds(n_seq);
    parallel_for(n_seq, options.threads, [&](std::size_t j) {
      traces[j] = forward(sys, inputs[j], &streams[j]);
      preds[j] = decode_outputs(traces[j].o, masks);
    });

    // Pool every instance of the batch into one cost.
    Sequence all_pred, all_target;
    CostMask all_mask;
    for (std::size_t j = 0; j < n_seq; ++j) {
      all_pred.insert(all_pred.end(), preds[j].begin(), preds[j].end());
      all_target.insert(all_target.end(), batch[j].targets.begin(), batch[j].targets.end());
      all_mask.insert(all_mask.end(), batch[j].cost_mask.begin(), batch[j].cost_mask.end());
    }
    const CostResult cost = evaluate_cost(cost_kind, all_pred, all_target, all_mask);
    result.cost += cost.cost;

    if (want_grads) {
      std::vector<GradientBundle> partial(n_seq, GradientBundle::zeros_like(params));
      std::vector<std::size_t> offsets(n_seq, 0);
      for (std::size_t j = 1; j < n_seq; ++j) offsets[j] = offsets[j - 1] + batch[j - 1].size();

      parallel_for(n_seq, options.threads, [&](std::size_t j) {
        Sequence errs(cost.errs.begin() + static_cast<std::ptrdiff_t>(offsets[j]),
                      cost.errs.begin() + static_cast<std::ptrdiff_t>(offsets[j] + batch[j].size()));
        for (auto& e : errs) e *= options.error_scale;
        GradientBundle& g = partial[j];
        if (request.u || request.y_b) {
          auto og = output_mask_gradient(errs, traces[j].o, period);
          if (request.u) g.d_u = std::move(og.d_u);
          if (request.y_b) g.d_y_b = std::move(og.d_y_b);
        }
        if (!request.needs_backward()) return;
        const Signal e_o(dt * encode_output_errors(errs, masks, dt).samples(), dt);
        const BackwardTrace bwd = backward(sys, traces[j], e_o, &streams[j], options.backward);
        if (request.m || request.s_b) {
          auto ig = input_mask_gradient(bwd.e_s, batch[j].inputs, period);
          if (request.m) g.d_m = std::move(ig.d_m);
          if (request.s_b) g.d_s_b = std::move(ig.d_s_b);
        }
        const auto& kr = request.kernels;
        if (kr.w_sa || kr.w_aa || kr.w_so || kr.w_ao)
          kernel_gradients(sys, inputs[j], traces[j], e_o, bwd, g, kr);
      });
      for (const auto& g : partial) result.grads += g;
    }

    if (r == 0) {
      result.preds = std::move(preds);
      result.traces = std::move(traces);
    }
  }

  const double inv = 1.0 / static_cast<double>(options.repeats);
  result.cost *= inv;
  result.grads *= inv;
  return result;
}

namespace {

std::size_t first_free_tap(Block b) { return b == Block::w_aa ? 1 : 0; }

Vector flatten_stack(const std::vector<Matrix>& stack, std::size_t first) {
  Eigen::Index total = 0;
  for (std::size_t k = first; k < stack.size(); ++k) total += stack[k].size();
  Vector v(total);
  Eigen::Index at = 0;
  for (std::size_t k = first; k < stack.size(); ++k) {
    v.segment(at, stack[k].size()) = stack[k].reshaped();
    at += stack[k].size();
  }
  return v;
}

void assign_stack(std::vector<Matrix>& stack, std::size_t first, const Vector& v) {
  Eigen::Index at = 0;
  for (std::size_t k = first; k < stack.size(); ++k) {
    const auto sz = stack[k].size();
    if (at + sz > v.size()) throw DimensionError("assign: vector too short for block");
    stack[k].reshaped() = v.segment(at, sz);
    at += sz;
  }
  if (at != v.size()) throw DimensionError("assign: vector length does not match block");
}

const Kernel& kernel_of(const PhysicalSystem& s, Block b) {
  switch (b) {
    case Block::w_sa: return s.w_sa;
    case Block::w_aa: return s.w_aa;
    case Block::w_so: return s.w_so;
    default: return s.w_ao;
  }
}

Kernel& kernel_of(PhysicalSystem& s, Block b) {
  switch (b) {
    case Block::w_sa: return s.w_sa;
    case Block::w_aa: return s.w_aa;
    case Block::w_so: return s.w_so;
    default: return s.w_ao;
  }
}

template <typename Bundle>
auto& grad_stack(Bundle& g, Block b) {
  switch (b) {
    case Block::w_sa: return g.d_w_sa;
    case Block::w_aa: return g.d_w_aa;
    case Block::w_so: return g.d_w_so;
    case Block::w_ao: return g.d_w_ao;
    case Block::m: return g.d_m;
    default: return g.d_u;
  }
}

}  // namespace

Vector flatten(const Parameters& p, Block b) {
  switch (b) {
    case Block::m: return flatten_stack(p.masks.m, 0);
    case Block::u: return flatten_stack(p.masks.u, 0);
    case Block::s_b: return p.masks.s_b.reshaped();
    case Block::y_b: return p.masks.y_b;
    default: return flatten_stack(kernel_of(p.system, b).taps(), first_free_tap(b));
  }
}

void assign(Parameters& p, Block b, const Vector& values) {
  switch (b) {
    case Block::m: assign_stack(p.masks.m, 0, values); return;
    case Block::u: assign_stack(p.masks.u, 0, values); return;
    case Block::s_b:
      if (values.size() != p.masks.s_b.size()) throw DimensionError("assign: s_b size");
      p.masks.s_b.reshaped() = values;
      return;
    case Block::y_b:
      if (values.size() != p.masks.y_b.size()) throw DimensionError("assign: y_b size");
      p.masks.y_b = values;
      return;
    default: {
      Kernel& k = kernel_of(p.system, b);
      std::vector<Matrix> taps = k.taps();
      assign_stack(taps, first_free_tap(b), values);
      k = Kernel(std::move(taps), k.dt());
    }
  }
}

Vector flatten(const GradientBundle& g, Block b) {
  switch (b) {
    case Block::s_b: return g.d_s_b.reshaped();
    case Block::y_b: return g.d_y_b;
    default: return flatten_stack(grad_stack(g, b), first_free_tap(b));
  }
}

void assign(GradientBundle& g, Block b, const Vector& values) {
  switch (b) {
    case Block::s_b: g.d_s_b.reshaped() = values; return;
    case Block::y_b: g.d_y_b = values; return;
    default: assign_stack(grad_stack(g, b), first_free_tap(b), values);
  }
}

Vector finite_difference_gradient(const std::function<double(const Vector&)>& loss,
                                  const Vector& theta, double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite_difference_gradient: eps must be positive");
  Vector g(theta.size());
  Vector probe = theta;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    probe[j] = theta[j] + eps;
    const double up = loss(probe);
    probe[j] = theta[j] - eps;
    const double down = loss(probe);
    probe[j] = theta[j];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("finite_difference_gradient: non-finite loss");
    g[j] = (up - down) / (2.0 * eps);
  }
  return g;
}

double relative_error(const Vector& g1, const Vector& g2) {
  const double denom = std::max({g1.norm(), g2.norm(), 1e-12});
  return (g1 - g2).norm() / denom;
}

namespace {

Matrix gaussian(Eigen::Index r, Eigen::Index c, double stddev, RandomStream& rng) {
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = stddev * rng.normal();
  return m;
}

Kernel random_kernel(Eigen::Index r, Eigen::Index c, std::size_t len, double gain, double dt,
                     bool strictly_causal, RandomStream& rng) {
  const double stddev = gain / (dt * std::sqrt(static_cast<double>(len * c)));
  std::vector<Matrix> taps;
  for (std::size_t k = 0; k < len; ++k)
    taps.push_back(k == 0 && strictly_causal ? Matrix::Zero(r, c) : gaussian(r, c, stddev, rng));
  return Kernel(std::move(taps), dt);
}

}  // namespace

ToyProblem make_toy_problem(const ToySystemConfig& cfg, RandomStream& rng) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    PhysicalSystem sys{
        random_kernel(cfg.n_states, cfg.n_inputs, cfg.kernel_len, 1.0, cfg.dt, false, rng),
        random_kernel(cfg.n_states, cfg.n_states, cfg.kernel_len, 0.6, cfg.dt, true, rng),
        random_kernel(cfg.n_outputs, cfg.n_inputs, cfg.kernel_len, 0.5, cfg.dt, false, rng),
        random_kernel(cfg.n_outputs, cfg.n_states, cfg.kernel_len, 1.0, cfg.dt, false, rng),
        cfg.f,
        std::nullopt,
        {}};
    MaskSet masks = MaskSet::zeros(cfg.n_inputs, cfg.dim_x, cfg.n_outputs, cfg.dim_y, cfg.period);
    for (auto& m : masks.m) m = gaussian(cfg.n_inputs, cfg.dim_x, 0.6, rng);
    for (auto& u : masks.u) u = gaussian(cfg.dim_y, cfg.n_outputs, 1.0, rng);
    masks.s_b = gaussian(cfg.n_inputs, cfg.period, 0.2, rng);
    masks.y_b = gaussian(cfg.dim_y, 1, 0.3, rng);

    SequenceDataset data;
    for (std::size_t i = 0; i < cfg.instances; ++i) {
      data.inputs.push_back(gaussian(cfg.dim_x, 1, 1.0, rng));
      data.targets.push_back(gaussian(cfg.dim_y, 1, 1.0, rng));
      data.cost_mask.push_back(true);
    }

    const ForwardTrace trace = forward(sys, encode_inputs(data.inputs, masks, cfg.dt));
    double closest = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < trace.pre.samples().size(); ++i)
      closest = std::min(closest, cfg.f.kink_distance(trace.pre.samples().data()[i]));
    if (closest >= cfg.kink_margin) return ToyProblem{Parameters{std::move(sys), std::move(masks)},
                                                      std::move(data)};
  }
  throw NumericError("make_toy_problem: could not draw a kink-free system");
}

bool GradCheckReport::pass() const {
  for (const auto& b : blocks)
    if (!b.pass) return false;
  return !blocks.empty();
}

GradCheckReport grad_check(const ToySystemConfig& config, std::uint64_t seed) {
  RandomStream rng(seed);
  const ToyProblem toy = make_toy_problem(config, rng);
  const std::vector<SequenceDataset> batch{toy.data};
  const RandomStream noise_rng(seed);

  EvaluateOptions options;
  options.backward.omit_transpose = config.break_adjoint;
  const BatchEvaluation analytic =
      evaluate_batch(toy.params, batch, CostKind::mse, GradientRequest::all(), noise_rng, options);

  GradCheckReport report;
  report.threshold = config.threshold;
  for (Block b : kAllBlocks) {
    const Vector theta = flatten(toy.params, b);
    auto loss = [&](const Vector& v) {
      Parameters p = toy.params;
      assign(p, b, v);
      return evaluate_batch(p, batch, CostKind::mse, GradientRequest::none(), noise_rng).cost;
    };
    const Vector fd = finite_difference_gradient(loss, theta, config.eps);
    const double err = relative_error(flatten(analytic.grads, b), fd);
    report.blocks.push_back({std::string(block_name(b)), err, err < config.threshold});
  }
  return report;
}

void write_report_text(std::ostream& out, const GradCheckReport& report) {
  out << "gradient check (threshold " << report.threshold << ")\n";
  for (const auto& b : report.blocks)
    out << "  " << std::left << std::setw(6) << b.block << " max_rel_err=" << std::scientific
        << std::setprecision(3) << b.max_rel_err << std::defaultfloat << "  "
        << (b.pass ? "PASS" : "FAIL") << '\n';
  out << (report.pass() ? "all blocks pass" : "gradient check FAILED") << '\n';
}

void write_report_csv(std::ostream& out, const GradCheckReport& report) {
  out << "block,max_rel_err,pass\n";
  for (const auto& b : report.blocks)
    out << b.block << ',' << std::hexfloat << b.max_rel_err << std::defaultfloat << ','
        << (b.pass ? 1 : 0) << '\n';
}

GradCheckReport read_report_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "block,max_rel_err,pass")
    throw ConfigError("report csv: bad header");
  GradCheckReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    BlockReport b;
    std::string err, pass;
    std::getline(row, b.block, ',');
    std::getline(row, err, ',');
    std::getline(row, pass, ',');
    b.max_rel_err = std::strtod(err.c_str(), nullptr);
    b.pass = pass == "1";
    report.blocks.push_back(std::move(b));
  }
  return report;
}

}  // namespace physbp
