#pragma once

#include "physbp/config.hpp"
#include "physbp/models.hpp"
#include "physbp/training.hpp"

#include <iosfwd>
#include <optional>
#include <string>

namespace physbp {

struct BuiltPlant {
  PlantTemplate plant;
  /// Set when the plant file carries trained masks to continue from.
  std::optional<Parameters> initial;
};

/// Plant and mask layout for the configured plant and task.
BuiltPlant build_plant(const ExperimentConfig& cfg);

struct RunResult {
  bool ok = false;
  double final_metric = 0.0;
  std::string message;
};

/// Trains and writes log.csv, masks.csv, system.txt, kernel.csv and
/// summary.txt into cfg.out_dir. Progress lines go to `progress` if given.
/// On divergence the partial log is kept and ok is false.
RunResult run_experiment(const ExperimentConfig& cfg, std::ostream* progress = nullptr);

/// Chance-level frame error for a labeling task with n classes.
double chance_error(std::size_t n_classes);

}  // namespace physbp
