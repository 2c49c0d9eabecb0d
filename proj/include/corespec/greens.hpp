#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "corespec/ci_solver.hpp"
#include "corespec/fock_space.hpp"

namespace corespec {

/// a_p applied to a source state (optionally followed by one extra single
/// excitation), expressed over an ionized-sector determinant basis. Not
/// renormalized: the squared norm carries the physical occupation.
struct TrialState {
  std::shared_ptr<const CISpace> space;
  Eigen::VectorXd vector;
  std::string label;
  int source_spin_orbital = -1;
};

/// Extra single excitation a^dagger_{to,spin} a_{from,spin} applied after the
/// annihilation; orbitals are 0-based spatial indices, spin 0 = alpha.
struct Excitation {
  int from_orbital = 0;
  int to_orbital = 0;
  int spin = 0;
};

struct Pole {
  double omega_ev = 0.0;  // binding energy, (E0^N - E_i^{N-1}) in eV
  double weight = 0.0;
};

struct PoleSet {
  std::vector<Pole> poles;
  double reference_energy = 0.0;  // E0^N, Hartree
};

struct GridSpec {
  double lo_ev = 0.0;
  double hi_ev = 0.0;
  double step_ev = 0.01;
  int points() const { return static_cast<int>((hi_ev - lo_ev) / step_ev + 1.5); }
};

enum class BroadeningKernel { lorentzian, gaussian };

struct SpectralFunction {
  Eigen::VectorXd grid;    // ascending omega, eV
  Eigen::VectorXd values;  // A(omega) >= 0, 1/eV
  double theta_ev = 0.0;
  double shift_ev = 0.0;
  BroadeningKernel kernel = BroadeningKernel::lorentzian;
  std::optional<PoleSet> poles;  // provenance, when derived from poles
};

TrialState make_trial(std::shared_ptr<const CISpace> source_space, const Eigen::VectorXd& ground,
                      std::shared_ptr<const CISpace> target_space, int p,
                      std::optional<Excitation> extra = std::nullopt);

/// Convenience overload for a bare reference determinant source.
TrialState make_trial(const Determinant& reference, std::shared_ptr<const CISpace> target_space,
                      int p, std::optional<Excitation> extra = std::nullopt);

/// Lehmann poles of the trial against a solved ionized sector:
/// w_i = |<psi_i|theta>|^2, binding energy (e0_n - E_i) in eV. Poles below
/// weight_floor are dropped (pass 0 to keep everything).
PoleSet lehmann_poles(const EigenSolution& ionized, const TrialState& trial, double e0_n,
                      double weight_floor = 1e-8);

/// Squared overlaps of a trial with every eigenvector, attached to a copy of
/// the solution (the spec's "weights" channel).
EigenSolution attach_weights(const EigenSolution& sol, const TrialState& trial);

SpectralFunction spectral_function(const PoleSet& poles, const GridSpec& grid, double theta_ev,
                                   BroadeningKernel kernel = BroadeningKernel::lorentzian);

/// Resolvent of the Lanczos tridiagonal via a bottom-up continued fraction,
/// on the binding-energy axis defined by e0_n.
SpectralFunction continued_fraction(const LanczosTridiagonal& tri, const GridSpec& grid,
                                    double theta_ev, double e0_n);

/// Rigid scissors shift plus re-broadening. Re-broadening requires the stored
/// PoleSet unless theta is unchanged.
SpectralFunction postprocess(const SpectralFunction& sf, double shift_ev, double new_theta_ev);

double trapezoid_integral(const SpectralFunction& sf);

/// Mass of the stored poles' broadening kernel outside [grid.lo, grid.hi];
/// together with the trapezoid this evaluates the full-line integral.
double tail_weight_outside(const SpectralFunction& sf);

struct PeakEstimate {
  double omega_ev = 0.0;
  double height = 0.0;
};

/// Local maxima with 3-point parabolic interpolation, tallest first.
std::vector<PeakEstimate> find_peaks(const SpectralFunction& sf, double min_height_fraction = 1e-3);

void write_tsv(const SpectralFunction& sf, std::ostream& out);

}  // namespace corespec
