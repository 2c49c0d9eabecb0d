#include "corespec/qpe_sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

#include "corespec/constants.hpp"

namespace corespec {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double wrap_phase(double phi) { return phi - std::floor(phi); }

// Outcome CDF of the m-bit readout for a fixed eigenphase.
std::vector<double> outcome_cdf(double phi, int bits) {
  const std::uint32_t n = 1u << bits;
  std::vector<double> cdf(n);
  double acc = 0.0;
  for (std::uint32_t k = 0; k < n; ++k) {
    acc += qpe_kernel(phi - static_cast<double>(k) / n, bits);
    cdf[k] = acc;
  }
  return cdf;
}

std::uint32_t pick_from_cdf(const std::vector<double>& cdf, double u) {
  const double target = u * cdf.back();
  auto it = std::lower_bound(cdf.begin(), cdf.end(), target);
  if (it == cdf.end()) --it;
  return static_cast<std::uint32_t>(it - cdf.begin());
}

std::vector<QPEPeak> cluster_shots(const std::vector<QPEShot>& shots, int gap_bins,
                                   std::size_t total) {
  std::map<std::uint32_t, std::pair<int, double>> bins;  // outcome -> (count, sum E)
  for (const auto& s : shots) {
    auto& b = bins[s.outcome];
    b.first += 1;
    b.second += s.energy_estimate;
  }
  std::vector<QPEPeak> peaks;
  QPEPeak current;
  double energy_sum = 0.0;
  std::int64_t prev_bin = -1;
  auto flush = [&]() {
    if (current.shot_count == 0) return;
    current.energy_ha = energy_sum / current.shot_count;
    current.probability = static_cast<double>(current.shot_count) / static_cast<double>(total);
    peaks.push_back(current);
    current = QPEPeak{};
    energy_sum = 0.0;
  };
  for (const auto& [bin, acc] : bins) {
    if (prev_bin >= 0 && static_cast<std::int64_t>(bin) - prev_bin - 1 > gap_bins) flush();
    current.shot_count += acc.first;
    energy_sum += acc.second;
    prev_bin = bin;
  }
  flush();
  return peaks;
}

QpeTarget normalized(const QpeTarget& t) {
  double total = 0.0;
  for (double w : t.weights) total += w;
  if (total <= 0.0) throw std::invalid_argument("qpe target carries no weight");
  QpeTarget out = t;
  for (double& w : out.weights) w /= total;
  return out;
}

std::vector<QPEShot> draw_series(const QpeTarget& target, const PhaseWindow& window, int n_shots,
                                 std::uint64_t seed, std::uint64_t stream) {
  std::vector<double> state_cdf(target.weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < target.weights.size(); ++i) {
    acc += target.weights[i];
    state_cdf[i] = acc;
  }
  if (acc > 1.0 + 1e-10) throw std::invalid_argument("qpe weights sum above one");

  std::map<std::size_t, std::vector<double>> cdf_cache;
  std::vector<QPEShot> shots;
  shots.reserve(n_shots);
  for (int s = 0; s < n_shots; ++s) {
    const double u1 = shot_uniform(seed, stream, s, 0);
    const double u2 = shot_uniform(seed, stream, s, 1);
    QPEShot shot;
    if (u1 >= acc) {
      // miss branch: residual probability, uniform outcome
      shot.outcome = static_cast<std::uint32_t>(u2 * window.n_outcomes());
    } else {
      auto it = std::lower_bound(state_cdf.begin(), state_cdf.end(), u1);
      const std::size_t i = it - state_cdf.begin();
      auto cached = cdf_cache.find(i);
      if (cached == cdf_cache.end())
        cached = cdf_cache.emplace(i, outcome_cdf(wrap_phase(window.phase(target.energies[i])),
                                                  window.bits))
                     .first;
      shot.outcome = pick_from_cdf(cached->second, u2);
    }
    shot.energy_estimate = window.energy_of_outcome(shot.outcome);
    shots.push_back(shot);
  }
  return shots;
}

}  // namespace

double PhaseWindow::phase(double energy_ha) const { return (energy_ha - offset) * tau / two_pi; }
double PhaseWindow::energy(double phi) const { return offset + phi * two_pi / tau; }
double PhaseWindow::energy_of_outcome(std::uint32_t k) const {
  return energy(static_cast<double>(k) / n_outcomes());
}
double PhaseWindow::bin_width_energy() const { return two_pi / (tau * n_outcomes()); }
double PhaseWindow::max_energy() const { return offset + two_pi / tau; }

PhaseWindow phase_window(double e_min, double e_max, int bits, double margin_fraction) {
  if (bits < 1 || bits > 32) throw std::invalid_argument("phase_window: bits must be in 1..32");
  if (e_max < e_min) throw std::invalid_argument("phase_window: E_max < E_min");
  if (e_max == e_min) e_max = e_min + 1e-6;
  const double margin = margin_fraction * (e_max - e_min);
  PhaseWindow w;
  w.bits = bits;
  w.offset = e_min - margin;
  w.tau = two_pi * (1.0 - std::ldexp(1.0, -bits)) / (e_max - e_min + 2.0 * margin);
  return w;
}

PhaseWindow phase_window_for_poles(const std::vector<double>& energies,
                                   const std::vector<double>& weights, int bits,
                                   double margin_fraction, double include_floor) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < energies.size(); ++i) {
    if (weights[i] < include_floor) continue;
    lo = std::min(lo, energies[i]);
    hi = std::max(hi, energies[i]);
  }
  if (!(lo <= hi)) throw std::invalid_argument("phase_window_for_poles: no pole above the floor");
  return phase_window(lo, hi, bits, margin_fraction);
}

double qpe_kernel(double delta, int bits) {
  const double d = delta - std::round(delta);  // periodic, center on [-1/2, 1/2]
  if (d == 0.0) return 1.0;
  const double big = std::ldexp(1.0, bits);
  const double num = std::sin(big * std::numbers::pi * d);
  const double den = big * std::sin(std::numbers::pi * d);
  const double r = num / den;
  return r * r;
}

QpeTarget make_qpe_target(const EigenSolution& sol, const TrialState& trial) {
  EigenSolution with = attach_weights(sol, trial);
  QpeTarget t;
  t.energies.assign(sol.energies.data(), sol.energies.data() + sol.energies.size());
  t.weights.assign(with.weights->data(), with.weights->data() + with.weights->size());
  return t;
}

double shot_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t shot, int draw) {
  std::uint64_t x = splitmix64(seed + 0x2545f4914f6cdd1dull * stream);
  x = splitmix64(x + shot);
  x = splitmix64(x + static_cast<std::uint64_t>(draw));
  return std::ldexp(static_cast<double>(x >> 11), -53);
}

QPEShot sample_shot(const QpeTarget& target, const PhaseWindow& window, std::uint64_t seed,
                    std::uint64_t stream, std::uint64_t shot_index) {
  const double u1 = shot_uniform(seed, stream, shot_index, 0);
  const double u2 = shot_uniform(seed, stream, shot_index, 1);
  double total = 0.0;
  for (double w : target.weights) total += w;
  if (total > 1.0 + 1e-10) throw std::invalid_argument("sample_shot: weights sum above one");
  QPEShot shot;
  if (u1 >= total) {
    shot.outcome = static_cast<std::uint32_t>(u2 * window.n_outcomes());
  } else {
    double acc = 0.0;
    std::size_t i = 0;
    for (; i + 1 < target.weights.size(); ++i) {
      acc += target.weights[i];
      if (u1 < acc) break;
    }
    const auto cdf = outcome_cdf(wrap_phase(window.phase(target.energies[i])), window.bits);
    shot.outcome = pick_from_cdf(cdf, u2);
  }
  shot.energy_estimate = window.energy_of_outcome(shot.outcome);
  return shot;
}

QPECampaign run_campaign(const QpeTarget& trial_target, const std::string& trial_label,
                         const PhaseWindow& window, const QpeTarget& reference_target,
                         const PhaseWindow& reference_window, double exact_e0,
                         const CampaignParams& params) {
  if (params.n_shots < 1) throw std::invalid_argument("run_campaign: n_shots must be >= 1");

  const QpeTarget cond = normalized(trial_target);
  for (std::size_t i = 0; i < cond.energies.size(); ++i) {
    if (cond.weights[i] <= 1e-3) continue;
    const double phi = window.phase(cond.energies[i]);
    if (phi < 0.0 || phi >= 1.0)
      throw std::runtime_error(
          "run_campaign: window clips pole at " + std::to_string(cond.energies[i]) +
          " Ha (weight " + std::to_string(cond.weights[i]) + "); widen the window");
  }

  QPECampaign c;
  c.seed = params.seed;
  c.trial_label = trial_label;
  c.window = window;
  c.gap_bins = params.gap_bins;
  c.shots = draw_series(cond, window, params.n_shots, params.seed, /*stream=*/0);

  if (params.exact_reference) {
    c.reference_exact = true;
    c.reference_energy = exact_e0;
  } else {
    const QpeTarget ref = normalized(reference_target);
    const int ref_shots = params.reference_shots > 0 ? params.reference_shots : params.n_shots;
    for (std::size_t i = 0; i < ref.energies.size(); ++i) {
      if (ref.weights[i] <= 1e-3) continue;
      const double phi = reference_window.phase(ref.energies[i]);
      if (phi < 0.0 || phi >= 1.0)
        throw std::runtime_error("run_campaign: reference window clips pole at " +
                                 std::to_string(ref.energies[i]) + " Ha");
    }
    auto ref_series = draw_series(ref, reference_window, ref_shots, params.seed, /*stream=*/1);
    auto ref_peaks = cluster_shots(ref_series, params.gap_bins, ref_series.size());
    auto dominant = std::max_element(ref_peaks.begin(), ref_peaks.end(),
                                     [](const QPEPeak& a, const QPEPeak& b) {
                                       return a.probability < b.probability;
                                     });
    c.reference_energy = dominant->energy_ha;
    for (auto& p : ref_peaks) p.energy_ev = p.energy_ha * hartree_to_ev;
    c.reference_peaks = std::move(ref_peaks);
  }

  c.peaks = aggregate(c, params.gap_bins);
  return c;
}

std::vector<QPEPeak> aggregate(const QPECampaign& campaign, int gap_bins) {
  if (campaign.shots.empty()) throw std::invalid_argument("aggregate: empty campaign");
  auto peaks = cluster_shots(campaign.shots, gap_bins, campaign.shots.size());
  for (auto& p : peaks)
    p.energy_ev = (campaign.reference_energy - p.energy_ha) * hartree_to_ev;
  std::sort(peaks.begin(), peaks.end(),
            [](const QPEPeak& a, const QPEPeak& b) { return a.energy_ev < b.energy_ev; });
  return peaks;
}

SpectralFunction qpe_spectrum(const std::vector<QPEPeak>& peaks, const GridSpec& grid,
                              double theta_ev) {
  PoleSet poles;
  for (const auto& p : peaks)
    if (p.probability > 0.0) poles.poles.push_back({p.energy_ev, p.probability});
  return spectral_function(poles, grid, theta_ev);
}

}  // namespace corespec
