#pragma once

namespace corespec {

// CODATA 2018 conversion; all internal energies are Hartree, reports are eV.
inline constexpr double hartree_to_ev = 27.211386245988;

}  // namespace corespec
