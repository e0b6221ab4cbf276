#include "physbp/serialize.hpp"

#include "physbp/error.hpp"

#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace physbp {

namespace {

void put(std::ostream& out, double v) { out << std::hexfloat << v << std::defaultfloat; }

void put_row_major(std::ostream& out, const Matrix& m) {
  bool first = true;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!first) out << ' ';
      put(out, m(r, c));
      first = false;
    }
  out << '\n';
}

void write_kernel(std::ostream& out, const char* name, const Kernel& k) {
  out << "kernel " << name << ' ' << k.rows() << ' ' << k.cols() << ' ' << k.length() << '\n';
  for (const auto& tap : k.taps()) put_row_major(out, tap);
}

// Whitespace tokenizer that skips '#' comment lines and tracks line numbers.
class Tokens {
 public:
  explicit Tokens(std::istream& in) : in_(in) {}

  std::string next(const char* what) {
    while (pos_ >= words_.size()) {
      std::string line;
      if (!std::getline(in_, line)) fail(std::string("unexpected end of file, expected ") + what);
      ++line_no_;
      if (!line.empty() && line[0] == '#') continue;
      std::istringstream ss(line);
      words_.clear();
      pos_ = 0;
      for (std::string w; ss >> w;) words_.push_back(w);
    }
    return words_[pos_++];
  }

  double real(const char* what) {
    const std::string w = next(what);
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end == w.c_str() || *end != '\0') fail(std::string("expected a number for ") + what);
    return v;
  }

  long integer(const char* what) {
    const std::string w = next(what);
    char* end = nullptr;
    const long v = std::strtol(w.c_str(), &end, 10);
    if (end == w.c_str() || *end != '\0' || v < 0)
      fail(std::string("expected a non-negative integer for ") + what);
    return v;
  }

  void expect(const std::string& word) {
    const std::string w = next(word.c_str());
    if (w != word) fail("expected '" + word + "', found '" + w + "'");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("parameter file line " + std::to_string(line_no_) + ": " + msg);
  }

 private:
  std::istream& in_;
  std::vector<std::string> words_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

Matrix read_row_major(Tokens& t, Eigen::Index rows, Eigen::Index cols, const char* what) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = t.real(what);
  return m;
}

Kernel read_kernel(Tokens& t, const char* name, double dt) {
  t.expect("kernel");
  t.expect(name);
  const auto rows = t.integer("kernel rows");
  const auto cols = t.integer("kernel cols");
  const auto len = t.integer("kernel length");
  std::vector<Matrix> taps;
  for (long k = 0; k < len; ++k) taps.push_back(read_row_major(t, rows, cols, name));
  return Kernel(std::move(taps), dt);
}

}  // namespace

void write_system(std::ostream& out, const PhysicalSystem& sys, const MaskSet* masks) {
  sys.validate();
  out << "physbp-parameters 1\n";
  out << "dt ";
  put(out, sys.dt());
  out << '\n';
  switch (sys.f.kind) {
    case Nonlinearity::Kind::rectifier: out << "nonlinearity rectifier\n"; break;
    case Nonlinearity::Kind::identity: out << "nonlinearity identity\n"; break;
    case Nonlinearity::Kind::clip:
      out << "nonlinearity clip ";
      put(out, sys.f.lo);
      out << ' ';
      put(out, sys.f.hi);
      out << '\n';
      break;
  }
  if (sys.noise) {
    out << "noise ";
    put(out, sys.noise->snr_db);
    out << ' ' << sys.noise->on_forward << ' ' << sys.noise->on_backward << '\n';
  } else {
    out << "noise none\n";
  }
  const BackwardPath& bp = sys.backward_path;
  out << "backward_path " << bp.normalize_peak << ' ';
  put(out, bp.peak);
  out << ' ';
  put(out, bp.gamma);
  out << ' ' << bp.clip << '\n';
  write_kernel(out, "w_sa", sys.w_sa);
  write_kernel(out, "w_aa", sys.w_aa);
  write_kernel(out, "w_so", sys.w_so);
  write_kernel(out, "w_ao", sys.w_ao);
  if (masks != nullptr) {
    masks->validate();
    out << "masks " << masks->period() << ' ' << masks->n_inputs() << ' ' << masks->dim_x() << ' '
        << masks->dim_y() << ' ' << masks->n_outputs() << '\n';
    out << "m\n";
    for (const auto& m : masks->m) put_row_major(out, m);
    out << "u\n";
    for (const auto& u : masks->u) put_row_major(out, u);
    out << "s_b\n";
    for (Eigen::Index t = 0; t < masks->period(); ++t) put_row_major(out, masks->s_b.col(t).transpose());
    out << "y_b\n";
    put_row_major(out, masks->y_b.transpose());
  }
  out << "end\n";
}

LoadedParameters read_system(std::istream& in) {
  Tokens t(in);
  t.expect("physbp-parameters");
  if (t.integer("format version") != 1) t.fail("unsupported format version");
  t.expect("dt");
  const double dt = t.real("dt");

  t.expect("nonlinearity");
  Nonlinearity f;
  const std::string kind = t.next("nonlinearity kind");
  if (kind == "rectifier") {
    f = Nonlinearity::rectifier();
  } else if (kind == "identity") {
    f = Nonlinearity::identity();
  } else if (kind == "clip") {
    const double lo = t.real("clip lo");
    const double hi = t.real("clip hi");
    f = Nonlinearity::clip(lo, hi);
  } else {
    t.fail("unknown nonlinearity '" + kind + "'");
  }

  t.expect("noise");
  std::optional<NoiseModel> noise;
  const std::string first = t.next("noise");
  if (first != "none") {
    std::istringstream ss(first);
    NoiseModel nm;
    nm.snr_db = std::strtod(first.c_str(), nullptr);
    nm.on_forward = t.integer("noise on_forward") != 0;
    nm.on_backward = t.integer("noise on_backward") != 0;
    noise = nm;
  }

  t.expect("backward_path");
  BackwardPath bp;
  bp.normalize_peak = t.integer("normalize_peak") != 0;
  bp.peak = t.real("peak");
  bp.gamma = t.real("gamma");
  bp.clip = t.integer("clip") != 0;

  Kernel w_sa = read_kernel(t, "w_sa", dt);
  Kernel w_aa = read_kernel(t, "w_aa", dt);
  Kernel w_so = read_kernel(t, "w_so", dt);
  Kernel w_ao = read_kernel(t, "w_ao", dt);
  LoadedParameters out{PhysicalSystem{std::move(w_sa), std::move(w_aa), std::move(w_so),
                                      std::move(w_ao), f, noise, bp},
                       std::nullopt};
  out.system.validate();

  const std::string next = t.next("'masks' or 'end'");
  if (next == "masks") {
    const auto p = t.integer("period");
    const auto n = t.integer("n_inputs");
    const auto dx = t.integer("dim_x");
    const auto dy = t.integer("dim_y");
    const auto m = t.integer("n_outputs");
    MaskSet masks = MaskSet::zeros(n, dx, m, dy, p);
    t.expect("m");
    for (auto& mt : masks.m) mt = read_row_major(t, n, dx, "m");
    t.expect("u");
    for (auto& ut : masks.u) ut = read_row_major(t, dy, m, "u");
    t.expect("s_b");
    for (Eigen::Index k = 0; k < p; ++k) masks.s_b.col(k) = read_row_major(t, 1, n, "s_b").transpose();
    t.expect("y_b");
    masks.y_b = read_row_major(t, 1, dy, "y_b").transpose();
    masks.validate();
    out.masks = std::move(masks);
    t.expect("end");
  } else if (next != "end") {
    t.fail("expected 'masks' or 'end', found '" + next + "'");
  }
  return out;
}

}  // namespace physbp
