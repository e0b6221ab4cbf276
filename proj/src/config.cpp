#include "physbp/config.hpp"

#include "physbp/error.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>

namespace physbp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::istream& in, const std::string& source) {
  KeyValueFile kv;
  kv.source_ = source;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(no) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(no) + ": empty key");
    if (value.empty())
      throw ConfigError(source + ":" + std::to_string(no) + ": " + key + ": empty value");
    if (kv.entries_.count(key))
      throw ConfigError(source + ":" + std::to_string(no) + ": " + key + ": duplicate key (first on line " +
                        std::to_string(kv.entries_[key].line) + ")");
    kv.entries_[key] = Entry{value, no};
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse(in, path.string());
}

void KeyValueFile::fail(const std::string& key, const std::string& msg) const {
  const auto it = entries_.find(key);
  const std::string where =
      it == entries_.end() ? source_ : source_ + ":" + std::to_string(it->second.line);
  throw ConfigError(where + ": " + key + ": " + msg);
}

const KeyValueFile::Entry* KeyValueFile::find(const std::string& key) {
  used_.insert(key);
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) {
  const Entry* e = find(key);
  return e ? e->value : fallback;
}

std::string KeyValueFile::require_string(const std::string& key) {
  const Entry* e = find(key);
  if (!e) fail(key, "missing required field");
  return e->value;
}

double KeyValueFile::get_double(const std::string& key, double fallback, double lo, double hi) {
  const Entry* e = find(key);
  if (!e) return fallback;
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(e->value.c_str(), &end);
  if (end == e->value.c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(v))
    fail(key, "expected a number, got '" + e->value + "'");
  if (v < lo || v > hi) fail(key, "value " + e->value + " outside [" + fmt(lo) + ", " + fmt(hi) + "]");
  return v;
}

std::size_t KeyValueFile::get_size(const std::string& key, std::size_t fallback, std::size_t lo,
                                   std::size_t hi) {
  const Entry* e = find(key);
  if (!e) return fallback;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(e->value.c_str(), &end, 10);
  if (end == e->value.c_str() || *end != '\0' || errno == ERANGE || e->value[0] == '-')
    fail(key, "expected a non-negative integer, got '" + e->value + "'");
  if (v < lo || v > hi)
    fail(key, "value " + e->value + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return static_cast<std::size_t>(v);
}

std::uint64_t KeyValueFile::get_u64(const std::string& key, std::uint64_t fallback) {
  const Entry* e = find(key);
  if (!e) return fallback;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(e->value.c_str(), &end, 10);
  if (end == e->value.c_str() || *end != '\0' || errno == ERANGE || e->value[0] == '-')
    fail(key, "expected an unsigned 64-bit integer, got '" + e->value + "'");
  return v;
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) {
  const Entry* e = find(key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "1") return true;
  if (e->value == "false" || e->value == "0") return false;
  fail(key, "expected true or false, got '" + e->value + "'");
}

void KeyValueFile::reject_unknown() const {
  for (const auto& [key, entry] : entries_)
    if (!used_.count(key)) fail(key, "unknown key");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kMaxSize = std::numeric_limits<std::size_t>::max();

// Re-throws domain validation errors with the config file as context.
template <class F>
void checked(const KeyValueFile& kv, const char* section, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    throw ConfigError(kv.source() + ": " + section + ": " + e.what());
  } catch (const ConstraintError& e) {
    throw ConfigError(kv.source() + ": " + section + ": " + e.what());
  }
}

std::optional<NoiseModel> parse_noise(KeyValueFile& kv, const std::string& prefix,
                                      bool enabled_default) {
  const bool on = kv.get_bool(prefix + ".enabled", enabled_default);
  NoiseModel nm;
  nm.snr_db = kv.get_double(prefix + ".snr_db", nm.snr_db, -100.0, 300.0);
  nm.on_forward = kv.get_bool(prefix + ".forward", nm.on_forward);
  nm.on_backward = kv.get_bool(prefix + ".backward", nm.on_backward);
  if (!on) return std::nullopt;
  return nm;
}

}  // namespace

ExperimentConfig parse_experiment_config(KeyValueFile& kv, const std::filesystem::path& base_dir) {
  ExperimentConfig c;

  const std::string plant = kv.require_string("plant.kind");
  if (plant == "acoustic") {
    c.plant = PlantKind::acoustic;
  } else if (plant == "optical") {
    c.plant = PlantKind::optical;
  } else if (plant == "file") {
    c.plant = PlantKind::file;
  } else {
    throw ConfigError(kv.source() + ": plant.kind: expected acoustic, optical or file, got '" +
                      plant + "'");
  }

  TubeParams& t = c.tube;
  t.length_m = kv.get_double("tube.length_m", t.length_m, 0.0, kInf);
  t.speed_of_sound = kv.get_double("tube.speed_of_sound", t.speed_of_sound, 0.0, kInf);
  t.sample_rate = kv.get_double("tube.sample_rate", t.sample_rate, 0.0, kInf);
  t.reflection_coeff = kv.get_double("tube.reflection_coeff", t.reflection_coeff, 0.0, 1.0);
  t.n_echoes = kv.get_size("tube.n_echoes", t.n_echoes, 1, 64);
  t.bandpass = kv.get_bool("tube.bandpass", t.bandpass);
  t.low_hz = kv.get_double("tube.low_hz", t.low_hz, 0.0, kInf);
  t.high_hz = kv.get_double("tube.high_hz", t.high_hz, 0.0, kInf);
  t.filter_taps = kv.get_size("tube.filter_taps", t.filter_taps, 3, 4095);
  t.kernel_len = kv.get_size("tube.kernel_len", t.kernel_len, 0, 1 << 22);
  t.gain = kv.get_double("tube.gain", t.gain, -kInf, kInf);
  t.echo_jitter = kv.get_double("tube.echo_jitter", t.echo_jitter, 0.0, kInf);

  AcousticOptions& a = c.acoustic;
  a.period = static_cast<Eigen::Index>(kv.get_size("acoustic.period", 1000, 1, 1 << 22));
  a.output_gain = kv.get_double("acoustic.output_gain", a.output_gain, -kInf, kInf);
  a.backward.normalize_peak = kv.get_bool("acoustic.backward_normalize", a.backward.normalize_peak);
  a.backward.peak = kv.get_double("acoustic.backward_peak", a.backward.peak, 0.0, kInf);
  a.backward.gamma = kv.get_double("acoustic.backward_gamma", a.backward.gamma, 0.0, 1.0);
  a.backward.clip = kv.get_bool("acoustic.backward_clip", a.backward.clip);
  a.noise = parse_noise(kv, "noise", false);

  OpticalParams& o = c.optical;
  o.n_nodes = kv.get_size("optical.n_nodes", o.n_nodes, 1, 4096);
  o.delay_samples = kv.get_size("optical.delay_samples", o.delay_samples, 1, 1 << 22);
  o.snr_db = kv.get_double("optical.snr_db", o.snr_db, -100.0, 300.0);
  o.noise = kv.get_bool("optical.noise", o.noise);
  o.weight_bound = kv.get_double("optical.weight_bound", o.weight_bound, 0.0, 2.0);
  o.backward_clip = kv.get_bool("optical.backward_clip", o.backward_clip);
  o.backward_error_scale =
      kv.get_double("optical.backward_error_scale", o.backward_error_scale, 0.0, 1.0);
  o.backward_peak = kv.get_double("optical.backward_peak", o.backward_peak, 0.0, kInf);
  o.period = static_cast<Eigen::Index>(kv.get_size("optical.period", 100, 1, 1 << 22));
  o.sample_period = kv.get_double("optical.sample_period", o.sample_period, 0.0, kInf);
  c.optical_init_std = kv.get_double("optical.init_weight_std", c.optical_init_std, 0.0, kInf);

  if (c.plant == PlantKind::file) {
    c.plant_file = kv.require_string("plant.file");
    if (c.plant_file.is_relative() && !base_dir.empty()) c.plant_file = base_dir / c.plant_file;
    if (!std::filesystem::exists(c.plant_file))
      throw ConfigError(kv.source() + ": plant.file: no such file " + c.plant_file.string());
  }
  c.file_period = static_cast<Eigen::Index>(kv.get_size("plant.period", 100, 1, 1 << 22));

  const std::string task = kv.require_string("task.kind");
  if (task == "variable_delay") {
    c.task.kind = TaskSpec::Kind::variable_delay;
  } else if (task == "synthetic_labels") {
    c.task.kind = TaskSpec::Kind::synthetic_labels;
  } else {
    throw ConfigError(kv.source() + ": task.kind: expected variable_delay or synthetic_labels, got '" +
                      task + "'");
  }
  c.task.delay.one_hot_input = kv.get_bool("task.one_hot_input", c.task.delay.one_hot_input);
  c.task.n_classes = kv.get_size("task.n_classes", c.task.n_classes, 2, 1024);
  c.task.input_dim = kv.get_size("task.input_dim", c.task.input_dim, 1, 1024);
  c.task.labels.window = kv.get_size("task.window", c.task.labels.window, 1, 1024);
  c.task.labels.smoothness = kv.get_double("task.smoothness", c.task.labels.smoothness, 0.0, 0.999);

  TrainConfig& tr = c.train;
  tr.iterations = kv.get_size("train.iterations", tr.iterations, 1, kMaxSize);
  if (!kv.has("train.iterations")) kv.require_string("train.iterations");
  tr.lr0 = kv.get_double("train.lr0", tr.lr0, 0.0, kInf);
  if (!kv.has("train.lr0")) kv.require_string("train.lr0");
  tr.batch_len = kv.get_size("train.batch_len", tr.batch_len, 3, kMaxSize);
  tr.batch_sequences = kv.get_size("train.batch_sequences", tr.batch_sequences, 1, 4096);
  tr.init_std_input_mask = kv.get_double("train.init_std_input_mask", tr.init_std_input_mask, 0.0, kInf);
  tr.init_std_output_mask =
      kv.get_double("train.init_std_output_mask", tr.init_std_output_mask, 0.0, kInf);
  tr.train_input_mask = kv.get_bool("train.input_mask", tr.train_input_mask);
  tr.train_input_bias = kv.get_bool("train.input_bias", tr.train_input_bias);
  tr.train_output_mask = kv.get_bool("train.output_mask", tr.train_output_mask);
  tr.train_output_bias = kv.get_bool("train.output_bias", tr.train_output_bias);
  tr.train_kernels = kv.get_bool("train.kernels", tr.train_kernels);
  tr.noise_repeats = kv.get_size("train.noise_repeats", tr.noise_repeats, 1, 4096);
  tr.threads = kv.get_size("train.threads", tr.threads, 1, 1024);

  c.eval_sequences = kv.get_size("eval.sequences", c.eval_sequences, 1, 1 << 20);
  c.eval_length = kv.get_size("eval.length", c.eval_length, 3, 1 << 24);
  c.seed = kv.get_u64("seed", c.seed);
  tr.seed = c.seed;
  c.out_dir = kv.get_string("out", c.out_dir.string());

  kv.reject_unknown();

  if (c.plant == PlantKind::acoustic) checked(kv, "tube", [&] { t.validate(); });
  if (c.plant == PlantKind::optical) checked(kv, "optical", [&] { o.validate(); });
  checked(kv, "train", [&] { tr.validate(); });
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  KeyValueFile kv = KeyValueFile::load(path);
  return parse_experiment_config(kv, path.parent_path());
}

GradCheckConfig parse_gradcheck_config(KeyValueFile& kv) {
  GradCheckConfig c;
  ToySystemConfig& t = c.toy;
  t.n_inputs = static_cast<Eigen::Index>(kv.get_size("toy.n_inputs", 3, 1, 64));
  t.n_states = static_cast<Eigen::Index>(kv.get_size("toy.n_states", 3, 1, 64));
  t.n_outputs = static_cast<Eigen::Index>(kv.get_size("toy.n_outputs", 3, 1, 64));
  t.dim_x = static_cast<Eigen::Index>(kv.get_size("toy.dim_x", 2, 1, 64));
  t.dim_y = static_cast<Eigen::Index>(kv.get_size("toy.dim_y", 2, 1, 64));
  t.kernel_len = kv.get_size("toy.kernel_len", t.kernel_len, 2, 4096);
  t.period = static_cast<Eigen::Index>(kv.get_size("toy.period", 10, 1, 1 << 20));
  t.instances = kv.get_size("toy.instances", t.instances, 1, 1 << 20);
  const std::string f = kv.get_string("toy.nonlinearity", "rectifier");
  if (f == "rectifier") {
    t.f = Nonlinearity::rectifier();
  } else if (f == "identity") {
    t.f = Nonlinearity::identity();
  } else if (f == "clip") {
    t.f = Nonlinearity::clip(-1.0, 1.0);
  } else {
    throw ConfigError(kv.source() + ": toy.nonlinearity: expected rectifier, identity or clip, got '" +
                      f + "'");
  }
  t.dt = kv.get_double("toy.dt", t.dt, 0.0, kInf);
  t.eps = kv.get_double("toy.eps", t.eps, 0.0, 1.0);
  t.threshold = kv.get_double("toy.threshold", t.threshold, 0.0, kInf);
  t.kink_margin = kv.get_double("toy.kink_margin", t.kink_margin, 0.0, kInf);
  t.break_adjoint = kv.get_bool("toy.break_adjoint", t.break_adjoint);
  c.seed = kv.get_u64("seed", c.seed);
  kv.reject_unknown();
  return c;
}

GradCheckConfig load_gradcheck_config(const std::filesystem::path& path) {
  KeyValueFile kv = KeyValueFile::load(path);
  return parse_gradcheck_config(kv);
}

}  // namespace physbp
