#pragma once

#include "physbp/gradients.hpp"
#include "physbp/masking.hpp"
#include "physbp/system.hpp"

#include <iosfwd>
#include <optional>

namespace physbp {

// Plain-text parameter file. Every real number is written as a C99 hex
// float, so a write/read round trip is bit-exact.
//
//   physbp-parameters 1
//   dt <x>
//   nonlinearity rectifier | identity | clip <lo> <hi>
//   noise none | noise <snr_db> <on_forward 0|1> <on_backward 0|1>
//   backward_path <normalize_peak 0|1> <peak> <gamma> <clip 0|1>
//   kernel <w_sa|w_aa|w_so|w_ao> <rows> <cols> <taps>
//     one line per tap, entries row-major
//   masks <period> <n_inputs> <dim_x> <dim_y> <n_outputs>      (optional)
//     m    then one line per segment sample, N x dim_x row-major
//     u    then one line per segment sample, dim_y x M row-major
//     s_b  then one line per segment sample, N values
//     y_b  then one line, dim_y values
//   end
//
// Lines starting with '#' are ignored.

void write_system(std::ostream& out, const PhysicalSystem& sys,
                  const MaskSet* masks = nullptr);

struct LoadedParameters {
  PhysicalSystem system;
  std::optional<MaskSet> masks;
};

LoadedParameters read_system(std::istream& in);

}  // namespace physbp
