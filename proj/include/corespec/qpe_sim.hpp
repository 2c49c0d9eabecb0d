#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corespec/greens.hpp"

namespace corespec {

/// Energy-to-phase map for an m-bit register: phi(E) = (E - offset) * tau /
/// (2 pi). Every targeted eigenvalue lands in [0, 1).
struct PhaseWindow {
  double tau = 0.0;     // evolution time scale, 1/Hartree
  double offset = 0.0;  // energy origin, Hartree
  int bits = 0;

  double phase(double energy_ha) const;
  double energy(double phase) const;            // inverse map
  double energy_of_outcome(std::uint32_t k) const;
  double bin_width_energy() const;              // Hartree per phase bin
  std::uint32_t n_outcomes() const { return 1u << bits; }
  /// Largest energy still mapping inside [0, 1).
  double max_energy() const;
};

PhaseWindow phase_window(double e_min, double e_max, int bits, double margin_fraction = 0.05);

/// Window covering every pole whose weight exceeds include_floor.
PhaseWindow phase_window_for_poles(const std::vector<double>& energies,
                                   const std::vector<double>& weights, int bits,
                                   double margin_fraction = 0.05, double include_floor = 1e-3);

/// Exact m-bit readout distribution Pr(k|phi) at delta = phi - k/2^m
/// (Fejer kernel), normalized over the 2^m outcomes.
double qpe_kernel(double delta, int bits);

struct QPEShot {
  std::uint32_t outcome = 0;
  double energy_estimate = 0.0;  // Hartree
};

/// Eigenvalue distribution a trial exposes to the phase register.
struct QpeTarget {
  std::vector<double> energies;  // Hartree
  std::vector<double> weights;   // |<i|theta>|^2, sum <= 1
};

QpeTarget make_qpe_target(const EigenSolution& sol, const TrialState& trial);

/// Counter-based per-shot RNG stream: (seed, stream, shot, draw) -> uniform.
/// Shots are reproducible independently of evaluation order.
double shot_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t shot, int draw);

/// One two-stage draw: eigenstate by normalized weight, then readout from the
/// kernel. Residual probability (sum w < 1) falls through to a uniform miss.
QPEShot sample_shot(const QpeTarget& target, const PhaseWindow& window, std::uint64_t seed,
                    std::uint64_t stream, std::uint64_t shot_index);

struct QPEPeak {
  double energy_ev = 0.0;      // averaged binding energy
  double energy_ha = 0.0;      // averaged sector energy
  double probability = 0.0;    // cluster shots / total shots
  int shot_count = 0;
};

struct QPECampaign {
  std::vector<QPEShot> shots;
  std::uint64_t seed = 0;
  std::string trial_label;
  PhaseWindow window;
  int gap_bins = 2;
  double reference_energy = 0.0;  // E0^N used for binding energies, Hartree
  bool reference_exact = false;
  std::vector<QPEPeak> reference_peaks;  // from the E0 mini-campaign
  std::vector<QPEPeak> peaks;
};

struct CampaignParams {
  int n_shots = 500;
  std::uint64_t seed = 1;
  int gap_bins = 2;
  bool exact_reference = false;
  int reference_shots = 0;  // 0 means n_shots
};

/// Full campaign: validates the window against the target's poles, draws the
/// shot series, runs the E0^(N) mini-campaign (unless exact_reference), and
/// clusters the outcomes into averaged peaks.
QPECampaign run_campaign(const QpeTarget& trial_target, const std::string& trial_label,
                         const PhaseWindow& window, const QpeTarget& reference_target,
                         const PhaseWindow& reference_window, double exact_e0,
                         const CampaignParams& params);

/// Re-cluster a campaign's shots with a different bin-gap threshold.
std::vector<QPEPeak> aggregate(const QPECampaign& campaign, int gap_bins);

/// Lorentzian spectrum with P^QPE weights at the averaged binding energies.
SpectralFunction qpe_spectrum(const std::vector<QPEPeak>& peaks, const GridSpec& grid,
                              double theta_ev);

}  // namespace corespec
