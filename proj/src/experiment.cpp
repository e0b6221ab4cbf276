#include "physbp/experiment.hpp"

#include "physbp/error.hpp"
#include "physbp/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

namespace physbp {

namespace {

constexpr std::uint64_t kPlantStream = 0x706c616e74ULL;
constexpr std::uint64_t kEvalStream = 0x6576616cULL;

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* plant_name(PlantKind k) {
  switch (k) {
    case PlantKind::acoustic: return "acoustic";
    case PlantKind::optical: return "optical";
    default: return "file";
  }
}

}  // namespace

double chance_error(std::size_t n_classes) {
  return 1.0 - 1.0 / static_cast<double>(n_classes);
}

BuiltPlant build_plant(const ExperimentConfig& cfg) {
  RandomStream rng = RandomStream(cfg.seed).split(kPlantStream);
  const Eigen::Index dx = cfg.task.dim_x();
  const Eigen::Index dy = cfg.task.dim_y();
  switch (cfg.plant) {
    case PlantKind::acoustic: {
      PlantTemplate plant = make_acoustic_system(make_tube_kernel(cfg.tube, rng), cfg.acoustic);
      plant.masks = MaskSet::zeros(1, dx, 1, dy, cfg.acoustic.period);
      return BuiltPlant{std::move(plant), std::nullopt};
    }
    case PlantKind::optical: {
      OpticalParams p = cfg.optical;
      p.dim_x = dx;
      p.dim_y = dy;
      return BuiltPlant{make_optical_system(p, random_optical_weights(p, cfg.optical_init_std, rng)),
                        std::nullopt};
    }
    default: break;
  }
  std::ifstream in(cfg.plant_file);
  if (!in) throw ConfigError("cannot open plant file " + cfg.plant_file.string());
  LoadedParameters loaded = read_system(in);
  const PhysicalSystem& s = loaded.system;
  if (!loaded.masks)
    return BuiltPlant{
        PlantTemplate{s, MaskSet::zeros(s.n_inputs(), dx, s.n_outputs(), dy, cfg.file_period), {}},
        std::nullopt};
  if (loaded.masks->dim_x() != dx || loaded.masks->dim_y() != dy)
    throw ConfigError("plant file masks do not match the task dimensions");
  return BuiltPlant{PlantTemplate{s, *loaded.masks, {}}, Parameters{s, *loaded.masks}};
}

RunResult run_experiment(const ExperimentConfig& cfg, std::ostream* progress) {
  std::filesystem::create_directories(cfg.out_dir);
  const BuiltPlant built = build_plant(cfg);

  std::ofstream log = open_out(cfg.out_dir / "log.csv");
  write_log_csv_header(log);
  const std::size_t every = std::max<std::size_t>(1, cfg.train.iterations / 20);
  const auto sink = [&](const LogRecord& r) {
    write_log_csv_row(log, r);
    if (progress && (r.iteration % every == 0 || r.iteration + 1 == cfg.train.iterations)) {
      *progress << "iter " << r.iteration << " cost " << r.cost << " metric " << r.metric << '\n';
      log.flush();
    }
  };

  std::ofstream summary = open_out(cfg.out_dir / "summary.txt");
  summary << "plant=" << plant_name(cfg.plant) << '\n'
          << "task=" << (cfg.task.kind == TaskSpec::Kind::variable_delay ? "variable_delay" : "synthetic_labels")
          << '\n'
          << "metric=" << (cfg.task.kind == TaskSpec::Kind::variable_delay ? "nrmse" : "frame_error_rate")
          << '\n'
          << "seed=" << cfg.seed << '\n'
          << "iterations=" << cfg.train.iterations << '\n';

  std::optional<TrainResult> trained;
  try {
    trained = train(built.plant, cfg.task, cfg.train, built.initial, sink);
  } catch (const DivergenceError& e) {
    log.flush();
    summary << "status=diverged\n"
            << "diverged_at=" << e.log().records.size() << '\n';
    return RunResult{false, 0.0, e.what()};
  }
  log.flush();
  const TrainResult& result = *trained;

  const double final_metric =
      evaluate_metric(result.params, cfg.task, cfg.eval_sequences, cfg.eval_length,
                      mix_seed(cfg.seed ^ kEvalStream), cfg.train.threads);
  const double dt = result.params.system.dt();
  {
    std::ofstream masks = open_out(cfg.out_dir / "masks.csv");
    write_masks_csv(masks, result.params.masks, dt);
  }
  {
    std::ofstream sys = open_out(cfg.out_dir / "system.txt");
    write_system(sys, result.params.system, &result.params.masks);
  }
  {
    std::ofstream kernel = open_out(cfg.out_dir / "kernel.csv");
    write_kernel_csv(kernel, result.params.system.w_aa);
  }
  if (!result.log.records.empty())
    summary << "last_train_cost=" << num(result.log.records.back().cost) << '\n'
            << "last_train_metric=" << num(result.log.records.back().metric) << '\n';
  if (cfg.task.kind == TaskSpec::Kind::synthetic_labels)
    summary << "chance_error=" << num(chance_error(cfg.task.n_classes)) << '\n';
  summary << "status=ok\n"
          << "final_metric=" << num(final_metric) << '\n';
  return RunResult{true, final_metric, "ok"};
}

}  // namespace physbp
