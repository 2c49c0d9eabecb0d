#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "corespec/fock_space.hpp"
#include "corespec/integrals.hpp"

namespace corespec {

struct SectorHamiltonian {
  std::shared_ptr<const CISpace> space;
  Eigen::SparseMatrix<double> matrix;  // symmetric, Hartree
  bool e_nuc_included = true;
};

/// Eigenpairs of a sector, energies ascending. `weights` are squared overlaps
/// |<psi_i|theta>|^2 against the trial named in weight_label, when attached.
struct EigenSolution {
  Eigen::VectorXd energies;
  std::optional<Eigen::MatrixXd> vectors;  // column i <-> energies[i]
  std::optional<Eigen::VectorXd> weights;
  std::string weight_label;
};

struct LanczosTridiagonal {
  std::vector<double> alphas;  // diagonal, one per iteration
  std::vector<double> betas;   // off-diagonal, betas[k] couples step k-1 to k
  double start_norm = 0.0;
  int iterations = 0;
};

struct RitzSpectrum {
  Eigen::VectorXd values;
  Eigen::VectorXd weights;  // |<ritz_i|start>|^2, sums to start_norm^2 at full rank
};

struct ConvergenceError : std::runtime_error {
  ConvergenceError(const std::string& msg, double estimate)
      : std::runtime_error(msg), best_estimate(estimate) {}
  double best_estimate;
};

/// Slater-Condon assembly over the given determinant basis; includes e_nuc on
/// the diagonal. Entrywise identical to the operator-string construction.
SectorHamiltonian build_hamiltonian(const SpinIntegrals& ints,
                                    std::shared_ptr<const CISpace> space,
                                    std::size_t dim_cap = 200000);

/// Full spectrum with eigenvectors (LAPACK dsyevr).
EigenSolution solve_dense(const SectorHamiltonian& h, bool with_vectors = true,
                          std::size_t dense_cap = 20000);

/// Lowest eigenpair via Lanczos with full reorthogonalization and a seeded
/// random start vector.
EigenSolution solve_ground_lanczos(const SectorHamiltonian& h, double tol = 1e-10,
                                   int max_iter = 400, std::uint64_t seed = 12345);

/// Three-term recurrence from an explicit start vector, fully
/// reorthogonalized; terminates early on breakdown (invariant subspace).
LanczosTridiagonal lanczos_from_vector(const SectorHamiltonian& h, const Eigen::VectorXd& start,
                                       int iterations);

RitzSpectrum ritz_spectrum(const LanczosTridiagonal& tri);

double diagonal_element(const SectorHamiltonian& h, const Determinant& d);

/// E_0^(N) - <ref|H|ref> for the N-electron sector Hamiltonian.
double correlation_energy(const SectorHamiltonian& h, const Determinant& reference);

}  // namespace corespec
