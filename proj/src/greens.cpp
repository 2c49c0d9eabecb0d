#include "corespec/greens.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <ostream>

#include "corespec/constants.hpp"

namespace corespec {

namespace {

constexpr double pi = std::numbers::pi;

TrialState build_trial(const std::vector<std::pair<Determinant, double>>& source,
                       std::shared_ptr<const CISpace> target_space, int p,
                       const std::optional<Excitation>& extra, const std::string& label) {
  TrialState trial;
  trial.space = target_space;
  trial.label = label;
  trial.source_spin_orbital = p;
  trial.vector = Eigen::VectorXd::Zero(static_cast<int>(target_space->size()));

  for (const auto& [det, coeff] : source) {
    if (coeff == 0.0) continue;
    auto hole = apply_annihilate(det, p);
    if (!hole) continue;
    double amp = coeff * hole->sign;
    Determinant d = hole->det;
    if (extra) {
      const int from = 2 * extra->from_orbital + extra->spin;
      const int to = 2 * extra->to_orbital + extra->spin;
      auto rm = apply_annihilate(d, from);
      if (!rm) continue;
      auto add = apply_create(rm->det, to);
      if (!add) continue;
      amp *= rm->sign * add->sign;
      d = add->det;
    }
    auto idx = target_space->find(d);
    if (!idx) continue;  // outside a truncated target space
    trial.vector(static_cast<int>(*idx)) += amp;
  }
  if (trial.vector.norm() == 0.0)
    throw std::domain_error("make_trial: trial annihilates state (zero vector)");
  return trial;
}

double kernel_value(BroadeningKernel kernel, double x, double theta) {
  if (kernel == BroadeningKernel::lorentzian) return theta / (pi * (x * x + theta * theta));
  const double s = theta;
  return std::exp(-0.5 * x * x / (s * s)) / (s * std::sqrt(2.0 * pi));
}

}  // namespace

TrialState make_trial(std::shared_ptr<const CISpace> source_space, const Eigen::VectorXd& ground,
                      std::shared_ptr<const CISpace> target_space, int p,
                      std::optional<Excitation> extra) {
  if (ground.size() != static_cast<Eigen::Index>(source_space->size()))
    throw std::invalid_argument("make_trial: ground vector does not match source space");
  std::vector<std::pair<Determinant, double>> source;
  source.reserve(source_space->size());
  for (std::size_t k = 0; k < source_space->size(); ++k)
    source.emplace_back(source_space->det(k), ground(static_cast<int>(k)));
  std::string label = "a_" + std::to_string(p + 1) + " on ground state";
  if (extra)
    label += " + " + std::to_string(extra->from_orbital + 1) + "->" +
             std::to_string(extra->to_orbital + 1) + (extra->spin == 0 ? " alpha" : " beta");
  return build_trial(source, std::move(target_space), p, extra, label);
}

TrialState make_trial(const Determinant& reference, std::shared_ptr<const CISpace> target_space,
                      int p, std::optional<Excitation> extra) {
  std::string label = "a_" + std::to_string(p + 1) + " on HF";
  if (extra)
    label += " + " + std::to_string(extra->from_orbital + 1) + "->" +
             std::to_string(extra->to_orbital + 1) + (extra->spin == 0 ? " alpha" : " beta");
  return build_trial({{reference, 1.0}}, std::move(target_space), p, extra, label);
}

PoleSet lehmann_poles(const EigenSolution& ionized, const TrialState& trial, double e0_n,
                      double weight_floor) {
  if (!ionized.vectors)
    throw std::invalid_argument("lehmann_poles: eigenvectors are required");
  if (ionized.vectors->rows() != trial.vector.size())
    throw std::invalid_argument("lehmann_poles: trial and eigenvectors live in different spaces");

  const Eigen::VectorXd overlaps = ionized.vectors->transpose() * trial.vector;
  PoleSet out;
  out.reference_energy = e0_n;
  for (int i = 0; i < overlaps.size(); ++i) {
    const double w = overlaps(i) * overlaps(i);
    if (w < weight_floor) continue;
    out.poles.push_back({(e0_n - ionized.energies(i)) * hartree_to_ev, w});
  }
  std::sort(out.poles.begin(), out.poles.end(),
            [](const Pole& a, const Pole& b) { return a.omega_ev < b.omega_ev; });
  return out;
}

EigenSolution attach_weights(const EigenSolution& sol, const TrialState& trial) {
  if (!sol.vectors) throw std::invalid_argument("attach_weights: eigenvectors are required");
  EigenSolution out = sol;
  out.weights = (sol.vectors->transpose() * trial.vector).cwiseAbs2();
  out.weight_label = trial.label;
  return out;
}

SpectralFunction spectral_function(const PoleSet& poles, const GridSpec& grid, double theta_ev,
                                   BroadeningKernel kernel) {
  if (theta_ev <= 0.0) throw std::domain_error("spectral_function: broadening must be positive");
  if (grid.hi_ev <= grid.lo_ev || grid.step_ev <= 0.0)
    throw std::invalid_argument("spectral_function: bad grid");

  SpectralFunction sf;
  sf.theta_ev = theta_ev;
  sf.kernel = kernel;
  sf.poles = poles;
  const int n = grid.points();
  sf.grid.resize(n);
  sf.values = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < n; ++k) sf.grid(k) = grid.lo_ev + k * grid.step_ev;
  for (const auto& pole : poles.poles)
    for (int k = 0; k < n; ++k)
      sf.values(k) += pole.weight * kernel_value(kernel, sf.grid(k) - pole.omega_ev, theta_ev);
  return sf;
}

SpectralFunction continued_fraction(const LanczosTridiagonal& tri, const GridSpec& grid,
                                    double theta_ev, double e0_n) {
  if (theta_ev <= 0.0) throw std::domain_error("continued_fraction: broadening must be positive");
  SpectralFunction sf;
  sf.theta_ev = theta_ev;
  const int n = grid.points();
  sf.grid.resize(n);
  sf.values.resize(n);
  const double theta_ha = theta_ev / hartree_to_ev;
  const int k = tri.iterations;
  for (int g = 0; g < n; ++g) {
    sf.grid(g) = grid.lo_ev + g * grid.step_ev;
    // binding-energy axis: A(w) = -(1/pi) Im <v|(x + H)^{-1}|v>,
    // x = w - E0 + i*theta (Hartree)
    const std::complex<double> x(sf.grid(g) / hartree_to_ev - e0_n, theta_ha);
    std::complex<double> cf = x + tri.alphas[k - 1];
    for (int j = k - 2; j >= 0; --j)
      cf = x + tri.alphas[j] - tri.betas[j] * tri.betas[j] / cf;
    const std::complex<double> resolvent = tri.start_norm * tri.start_norm / cf;
    sf.values(g) = -resolvent.imag() / pi / hartree_to_ev;
  }
  return sf;
}

SpectralFunction postprocess(const SpectralFunction& sf, double shift_ev, double new_theta_ev) {
  if (new_theta_ev <= 0.0) throw std::domain_error("postprocess: broadening must be positive");
  if (sf.poles) {
    PoleSet shifted = *sf.poles;
    for (auto& p : shifted.poles) p.omega_ev += shift_ev;
    GridSpec grid{sf.grid(0) + shift_ev, sf.grid(sf.grid.size() - 1) + shift_ev,
                  sf.grid.size() > 1 ? sf.grid(1) - sf.grid(0) : 0.01};
    SpectralFunction out = spectral_function(shifted, grid, new_theta_ev, sf.kernel);
    out.shift_ev = sf.shift_ev + shift_ev;
    return out;
  }
  if (new_theta_ev < sf.theta_ev)
    throw std::invalid_argument("postprocess: re-broadening below theta requires stored poles");
  if (new_theta_ev != sf.theta_ev)
    throw std::invalid_argument("postprocess: re-broadening requires stored poles");
  SpectralFunction out = sf;
  out.grid.array() += shift_ev;
  out.shift_ev += shift_ev;
  return out;
}

double trapezoid_integral(const SpectralFunction& sf) {
  double acc = 0.0;
  for (int k = 1; k < sf.grid.size(); ++k)
    acc += 0.5 * (sf.values(k) + sf.values(k - 1)) * (sf.grid(k) - sf.grid(k - 1));
  return acc;
}

double tail_weight_outside(const SpectralFunction& sf) {
  if (!sf.poles) return 0.0;
  const double lo = sf.grid(0), hi = sf.grid(sf.grid.size() - 1);
  double acc = 0.0;
  for (const auto& p : sf.poles->poles) {
    if (sf.kernel == BroadeningKernel::lorentzian) {
      const double in_window = (std::atan((hi - p.omega_ev) / sf.theta_ev) -
                                std::atan((lo - p.omega_ev) / sf.theta_ev)) /
                               pi;
      acc += p.weight * (1.0 - in_window);
    } else {
      const double s = sf.theta_ev * std::sqrt(2.0);
      const double in_window = 0.5 * (std::erf((hi - p.omega_ev) / s) - std::erf((lo - p.omega_ev) / s));
      acc += p.weight * (1.0 - in_window);
    }
  }
  return acc;
}

std::vector<PeakEstimate> find_peaks(const SpectralFunction& sf, double min_height_fraction) {
  std::vector<PeakEstimate> peaks;
  const double floor = sf.values.maxCoeff() * min_height_fraction;
  for (int k = 1; k + 1 < sf.grid.size(); ++k) {
    if (sf.values(k) < floor) continue;
    if (!(sf.values(k) >= sf.values(k - 1) && sf.values(k) > sf.values(k + 1))) continue;
    const double ym = sf.values(k - 1), y0 = sf.values(k), yp = sf.values(k + 1);
    const double denom = ym - 2.0 * y0 + yp;
    double frac = 0.0;
    if (denom != 0.0) frac = 0.5 * (ym - yp) / denom;
    const double h = sf.grid(k) - sf.grid(k - 1);
    peaks.push_back({sf.grid(k) + frac * h, y0 - 0.25 * (ym - yp) * frac});
  }
  std::sort(peaks.begin(), peaks.end(),
            [](const PeakEstimate& a, const PeakEstimate& b) { return a.height > b.height; });
  return peaks;
}

void write_tsv(const SpectralFunction& sf, std::ostream& out) {
  out << "# omega_eV\tA_per_eV\n";
  out.precision(12);
  for (int k = 0; k < sf.grid.size(); ++k) out << sf.grid(k) << '\t' << sf.values(k) << '\n';
}

}  // namespace corespec
