#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace corespec {

/// Spatial-orbital integrals as stored in an FCIDUMP file.
///
/// h is the one-electron matrix, g the two-electron tensor in chemists'
/// notation (ij|kl) with the full 8-fold permutational symmetry expanded
/// on read. All energies in Hartree. Orbital indices are 0-based in code,
/// 1-based in the file format.
struct IntegralStore {
  int n_orb = 0;
  int n_elec = 0;
  int ms2 = 0;
  double e_nuc = 0.0;
  std::vector<int> orbsym;  // informational only, never enforced
  Eigen::MatrixXd h;        // n_orb x n_orb, symmetric
  std::vector<double> g;    // flat n_orb^4, chemists' (ij|kl)

  double g_chem(int i, int j, int k, int l) const {
    return g[((static_cast<std::size_t>(i) * n_orb + j) * n_orb + k) * n_orb + l];
  }
};

/// Spin-orbital integrals. Spin-orbital 2k (0-based) is the alpha partner of
/// spatial orbital k, 2k+1 the beta partner; this matches bit k of the
/// occupation strings used throughout.
struct SpinIntegrals {
  int m = 0;                          // spin-orbital count, 2 * n_orb
  int n_elec = 0;
  double e_nuc = 0.0;
  Eigen::MatrixXd h;                  // m x m, block-diagonal in spin
  std::vector<double> v;              // flat m^4, antisymmetrized <pq||rs>
  Eigen::VectorXd eps;                // reference-derived orbital energies
  std::uint64_t reference_occupation = 0;  // aufbau N-electron determinant

  double v_as(int p, int q, int r, int s) const {
    return v[((static_cast<std::size_t>(p) * m + q) * m + r) * m + s];
  }
  static int spatial(int p) { return p / 2; }
  static int spin(int p) { return p % 2; }  // 0 = alpha, 1 = beta
};

/// Fock operator of the (N-1)-electron reference with a hole in spin-orbital
/// core_index: f_pq = eps_p delta_pq - v_{pc}^{qc}.
struct FockNMinus1 {
  Eigen::MatrixXd f;
  int core_index = -1;
};

/// Parse an FCIDUMP stream: namelist header (NORB, NELEC, MS2, ORBSYM), then
/// "value i j k l" records. Fortran-style exponents (1.0D-3) are accepted.
/// The i=j=k=l=0 record carries the core/nuclear energy; one-index records
/// (orbital energies) are read and discarded.
IntegralStore parse_fcidump(std::istream& in);
IntegralStore parse_fcidump_file(const std::string& path);

/// Write a store back out; parse(write(s)) reproduces s exactly.
void write_fcidump(const IntegralStore& store, std::ostream& out);

/// Hex digest of a file's bytes (FNV-1a 64), used to key run manifests.
std::string file_hash_hex(const std::string& path);

SpinIntegrals to_spin_integrals(const IntegralStore& store);

FockNMinus1 fock_n_minus_1(const SpinIntegrals& ints, int c);

}  // namespace corespec
