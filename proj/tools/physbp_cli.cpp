#include "physbp/config.hpp"
#include "physbp/error.hpp"
#include "physbp/experiment.hpp"
#include "physbp/gradients.hpp"
#include "physbp/reductions.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> threads;
  bool break_adjoint = false;
  std::size_t instances = 50;
};

int cmd_run(const Flags& f) {
  physbp::ExperimentConfig cfg = physbp::load_experiment_config(f.config);
  if (f.seed) cfg.seed = cfg.train.seed = *f.seed;
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (f.threads) cfg.train.threads = *f.threads;
  const physbp::RunResult r = physbp::run_experiment(cfg, &std::cerr);
  if (!r.ok) {
    std::cerr << "run failed: " << r.message << " (partial log in " << cfg.out_dir.string() << ")\n";
    return kFailure;
  }
  std::cout << "final_metric=" << r.final_metric << '\n';
  return kOk;
}

int cmd_gradcheck(const Flags& f) {
  physbp::GradCheckConfig cfg;
  if (!f.config.empty()) cfg = physbp::load_gradcheck_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.break_adjoint) cfg.toy.break_adjoint = true;
  const physbp::GradCheckReport report = physbp::grad_check(cfg.toy, cfg.seed);
  physbp::write_report_text(std::cout, report);
  if (!f.out.empty()) {
    std::filesystem::create_directories(f.out);
    std::ofstream csv(std::filesystem::path(f.out) / "gradcheck.csv");
    physbp::write_report_csv(csv, report);
  }
  return report.pass() ? kOk : kFailure;
}

int cmd_reduce_check(const Flags& f) {
  const physbp::ReductionReport r = physbp::check_reductions(f.instances, f.seed.value_or(1));
  std::cout << "instances=" << r.instances << '\n'
            << "mlp_forward_max_rel_err=" << r.mlp_max_err << '\n'
            << "rnn_forward_max_rel_err=" << r.rnn_forward_max_err << '\n'
            << "rnn_gradient_max_rel_err=" << r.rnn_grad_max_err << '\n'
            << "tolerance=" << r.tolerance << '\n'
            << (r.pass() ? "PASS" : "FAIL") << '\n';
  return r.pass() ? kOk : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physical backpropagation through simulated dynamical systems"};
  app.require_subcommand(1);
  Flags flags;

  auto* run = app.add_subcommand("run", "Train masks on a plant and write CSV artifacts");
  run->add_option("--config", flags.config, "Experiment config file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", flags.seed, "Override the config seed");
  run->add_option("--out", flags.out, "Output directory (overrides the config)");
  run->add_option("--threads", flags.threads, "Worker threads")->check(CLI::Range(1, 1024));

  auto* grad = app.add_subcommand("gradcheck", "Compare physical gradients with finite differences");
  grad->add_option("--config", flags.config, "Toy system config file")->check(CLI::ExistingFile);
  grad->add_option("--seed", flags.seed, "Override the config seed");
  grad->add_option("--out", flags.out, "Directory for gradcheck.csv");
  grad->add_option("--threads", flags.threads, "Accepted for symmetry; the check is serial");
  grad->add_flag("--break-adjoint", flags.break_adjoint, "Omit the kernel transpose (negative control)");

  auto* red = app.add_subcommand("reduce-check", "Check MLP and RNN reductions against dense nets");
  red->add_option("--instances", flags.instances, "Random instances per suite")->check(CLI::Range(1, 1000000));
  red->add_option("--seed", flags.seed, "Seed (default 1)");
  red->add_option("--threads", flags.threads, "Accepted for symmetry; the check is serial");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*run) return cmd_run(flags);
    if (*grad) return cmd_gradcheck(flags);
    return cmd_reduce_check(flags);
  } catch (const physbp::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
