#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace corespec {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One job = one method on one integrals file. Defaults are echoed into the
/// manifest so every parameter of a run is auditable.
struct RunConfig {
  std::string integrals;
  std::string method = "fci";  // fci | ci | qpe | rtcc
  int ci_rank = 2;

  // trial specification
  int annihilate = 1;              // 1-based spin-orbital (the paper's core: 1)
  std::optional<int> excite_from;  // 1-based spatial orbital
  std::optional<int> excite_to;
  std::string excite_spin = "beta";
  std::string trial_source = "hf";  // hf | ground

  // spectrum grid / broadening
  std::optional<double> omega_min_ev, omega_max_ev;
  double omega_step_ev = 0.01;
  double theta_ev = 0.1;
  std::string kernel = "lorentzian";

  // qpe
  int qpe_bits = 12;
  int qpe_shots = 500;
  std::uint64_t qpe_seed = 1;
  int qpe_gap = 2;
  double qpe_margin = 0.05;
  bool qpe_exact_reference = false;
  int qpe_reference_shots = 0;  // 0 = shots
  bool qpe_record_shots = true;

  // rtcc
  double rtcc_dt = 0.05;
  double rtcc_t_max = 900.0;
  double rtcc_damping_ev = 0.1;
  std::string rtcc_e_corr = "fci";      // fci | ccsd
  std::string rtcc_integrator = "trapezoid";  // trapezoid | backward_euler
  std::string rtcc_checkpoint;

  // solver knobs
  std::size_t dense_cap = 20000;
  int lanczos_iters = 500;

  std::string out_dir = "run_out";
};

/// Flat key = value text with [section] headers; '#' starts a comment.
RunConfig parse_config(std::istream& in);
RunConfig parse_config_file(const std::string& path);

/// Execute a job and write spectrum.tsv, spectrum.json, peaks.json and
/// manifest.json into the configured output directory.
void run_job(const RunConfig& config, std::ostream& log);

struct CompareOptions {
  double match_tol_ev = 1.0;
  double shift_ev = 0.0;
  double rebroaden_ev = 0.0;  // 0 = keep each run's broadening
  std::string experiment_tsv;
  bool force = false;
  std::string out_dir = "comparison";
};

/// Align the peak tables of completed runs and emit a comparison report plus
/// overlay-ready spectra.
void compare_runs(const std::vector<std::string>& run_dirs, const CompareOptions& options,
                  std::ostream& log);

}  // namespace corespec
