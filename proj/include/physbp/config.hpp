#pragma once

#include "physbp/gradients.hpp"
#include "physbp/models.hpp"
#include "physbp/training.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>

namespace physbp {

/// Flat `key = value` text. Keys are dotted (`train.lr0`), `#` starts a
/// comment, blank lines are ignored. Duplicate keys are an error.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& in, const std::string& source = "<input>");
  static KeyValueFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& source() const { return source_; }

  std::string get_string(const std::string& key, const std::string& fallback);
  std::string require_string(const std::string& key);
  double get_double(const std::string& key, double fallback, double lo, double hi);
  std::size_t get_size(const std::string& key, std::size_t fallback, std::size_t lo,
                       std::size_t hi);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  bool get_bool(const std::string& key, bool fallback);

  /// Throws ConfigError naming the first key that no getter consumed.
  void reject_unknown() const;

 private:
  struct Entry {
    std::string value;
    std::size_t line;
  };
  [[noreturn]] void fail(const std::string& key, const std::string& msg) const;
  const Entry* find(const std::string& key);

  std::string source_;
  std::map<std::string, Entry> entries_;
  std::set<std::string> used_;
};

enum class PlantKind { acoustic, optical, file };

/// Everything `physbp run` needs. Key reference: README.md.
struct ExperimentConfig {
  PlantKind plant = PlantKind::acoustic;
  std::filesystem::path plant_file;   // plant.file, for plant.kind = file
  Eigen::Index file_period = 100;     // plant.period when the file carries no masks

  TubeParams tube;
  AcousticOptions acoustic;
  OpticalParams optical;
  double optical_init_std = 0.5;      // optical.init_weight_std

  TaskSpec task;
  TrainConfig train;
  std::size_t eval_sequences = 10;
  std::size_t eval_length = 100;
  std::uint64_t seed = 7;
  std::filesystem::path out_dir = "out";
};

/// Required keys: plant.kind, task.kind, train.iterations, train.lr0.
/// Relative plant.file paths resolve against `base_dir`.
ExperimentConfig parse_experiment_config(KeyValueFile& kv,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Toy gradient-check problem; every key is optional (toy.*, seed).
struct GradCheckConfig {
  ToySystemConfig toy;
  std::uint64_t seed = 1;
};
GradCheckConfig parse_gradcheck_config(KeyValueFile& kv);
GradCheckConfig load_gradcheck_config(const std::filesystem::path& path);

}  // namespace physbp
