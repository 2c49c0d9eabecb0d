#pragma once

#include <Eigen/Dense>
#include <complex>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "corespec/greens.hpp"
#include "corespec/integrals.hpp"

namespace corespec {

/// Occupied/virtual partition of a single-determinant reference plus the
/// integral blocks the CCSD residuals contract. Blocks are stored complex
/// with compound row/column indices (oo, ov, vv pairs).
struct CCSystem {
  std::vector<int> occ, virt;  // spin-orbital indices
  int no = 0, nv = 0;
  Eigen::MatrixXd f;  // reference Fock matrix, full M x M
  Eigen::MatrixXcd f_oo, f_ov, f_vv;
  Eigen::MatrixXcd v_oooo;     // [mn, ij]  <mn||ij>
  Eigen::MatrixXcd v_ooov;     // [mn, ie]  <mn||ie>
  Eigen::MatrixXcd v_oovv;     // [mn, ef]  <mn||ef>
  Eigen::MatrixXcd v_oovv_me_nf;  // permuted copy [(me), (nf)]
  Eigen::MatrixXcd v_ovvo;     // [mb, ej]  <mb||ej>
  Eigen::MatrixXcd v_ovvv;     // [ma, ef]  <ma||ef>
  Eigen::MatrixXcd v_vvvv;     // [ab, ef]  <ab||ef>
  Eigen::MatrixXcd v_ovoo;     // [mb, ij]  <mb||ij>
  Eigen::MatrixXcd v_vvvo;     // [ab, ej]  <ab||ej>

  int oo(int m, int n) const { return m * no + n; }
  int ov(int m, int e) const { return m * nv + e; }
  int vv(int a, int b) const { return a * nv + b; }
};

/// Fock matrix of an arbitrary determinant: f_pq = h_pq + sum_{i occ} <pi||qi>.
Eigen::MatrixXd fock_of_occupation(const SpinIntegrals& ints, std::uint64_t occ_bits);

CCSystem make_cc_system(const SpinIntegrals& ints, std::uint64_t occ_bits);

/// Complex singles/doubles amplitudes; t1 is no x nv, t2 is (no*no) x (nv*nv)
/// with antisymmetry in both index pairs maintained across steps.
struct CCState {
  double tau = 0.0;
  Eigen::MatrixXcd t1;
  Eigen::MatrixXcd t2;
  std::complex<double> cumulant{0.0, 0.0};
};

CCState zero_state(const CCSystem& sys);

enum class ECorrSource { fci, ccsd };

struct CCReference {
  int core = -1;
  Determinant phi;       // a_c |Phi_0^(N)>
  double eps_c = 0.0;    // bare energy of the core spin-orbital
  double e_corr = 0.0;   // N-electron ground-state correlation energy
  CCSystem sys;
  std::shared_ptr<const SpinIntegrals> ints;
};

CCReference init_reference(std::shared_ptr<const SpinIntegrals> ints, int c,
                           ECorrSource source = ECorrSource::fci);
CCReference init_reference(std::shared_ptr<const SpinIntegrals> ints, int c, double e_corr_value);

/// Spin-orbital CCSD residuals <mu|e^{-T} H_N e^{T}|phi> for a possibly
/// non-diagonal Fock operator; at T = 0 they reduce to f_ia and <ij||ab>.
void ccsd_residuals(const CCState& state, const CCSystem& sys, Eigen::MatrixXcd& r1,
                    Eigen::MatrixXcd& r2);

/// dC/dtau = i [ sum f_ia t_i^a + 1/2 sum v_ij^ab t_j^b t_i^a
///             + 1/4 sum v_ij^ab t_ij^ab ].
std::complex<double> cumulant_rhs(const CCState& state, const CCSystem& sys);

enum class Integrator { backward_euler, trapezoid };

struct PropagateOptions {
  double dt = 0.05;     // au
  double t_max = 900.0; // au
  Integrator integrator = Integrator::trapezoid;
  double fp_tol = 1e-10;
  int fp_max = 50;
  std::string checkpoint_path;  // save here when non-empty; resume if present
  int checkpoint_every = 0;     // steps; 0 = only at the end
};

struct CCTrajectory {
  std::vector<double> times;
  std::vector<std::complex<double>> cumulant;
  std::vector<double> t1_norm, t2_norm;
  double dt = 0.0, t_max = 0.0;
};

CCTrajectory propagate(const CCReference& ref, const PropagateOptions& opts);

/// Propagation from an explicit initial state (analytic seeds, restarts).
CCTrajectory propagate_from(const CCReference& ref, const PropagateOptions& opts, CCState state,
                            CCTrajectory history = {});

/// G_c^R(tau) = -i e^{-i(eps_c + E_corr) tau} e^{C(tau)}, Fourier-transformed
/// with explicit damping onto a binding-energy grid in eV.
SpectralFunction gf_and_spectrum(const CCTrajectory& traj, const CCReference& ref,
                                 double theta_damp_ev, const GridSpec& grid);

struct StaticCCSD {
  double e_corr = 0.0;
  Eigen::MatrixXcd t1, t2;
  bool converged = false;
  int iterations = 0;
};

StaticCCSD solve_static_ccsd(const SpinIntegrals& ints, std::uint64_t occ_bits,
                             double tol = 1e-10, int max_iter = 300);

void save_checkpoint(const std::string& path, const CCState& state, const CCTrajectory& traj);
std::pair<CCState, CCTrajectory> load_checkpoint(const std::string& path);

}  // namespace corespec
