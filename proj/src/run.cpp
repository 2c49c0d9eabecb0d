#include "corespec/run.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "corespec/constants.hpp"
#include "corespec/qpe_sim.hpp"
#include "corespec/rt_eom_cc.hpp"

namespace corespec {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* tool_version = "0.1.0";
constexpr int schema_version = 1;

std::map<std::string, std::string> read_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

bool to_bool(const std::string& s) { return s == "true" || s == "1" || s == "yes" || s == "on"; }

struct TrialSetup {
  std::shared_ptr<const CISpace> n_space;       // only built when needed
  std::shared_ptr<const CISpace> target_space;  // ionized sector
  TrialState trial;
  Determinant reference;
  int n_alpha = 0, n_beta = 0;          // N-electron sector
  int ion_alpha = 0, ion_beta = 0;      // ionized sector
};

std::optional<Excitation> excitation_of(const RunConfig& c) {
  if (!c.excite_from && !c.excite_to) return std::nullopt;
  if (!c.excite_from || !c.excite_to)
    throw ConfigError("trial excitation needs both excite_from and excite_to");
  if (c.excite_spin != "alpha" && c.excite_spin != "beta")
    throw ConfigError("excite_spin must be alpha or beta");
  return Excitation{*c.excite_from - 1, *c.excite_to - 1, c.excite_spin == "alpha" ? 0 : 1};
}

json poles_to_json(const PoleSet& poles) {
  json rows = json::array();
  for (const auto& p : poles.poles) rows.push_back({{"energy_ev", p.omega_ev}, {"weight", p.weight}});
  return rows;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

GridSpec auto_grid(const RunConfig& cfg, double lo_pole_ev, double hi_pole_ev) {
  GridSpec g;
  g.lo_ev = cfg.omega_min_ev ? *cfg.omega_min_ev : lo_pole_ev - 50.0 * cfg.theta_ev;
  g.hi_ev = cfg.omega_max_ev ? *cfg.omega_max_ev : hi_pole_ev + 50.0 * cfg.theta_ev;
  g.step_ev = cfg.omega_step_ev;
  if (g.hi_ev <= g.lo_ev) throw ConfigError("empty spectrum window");
  return g;
}

json spectrum_to_json(const SpectralFunction& sf, const std::string& method,
                      const std::string& hash) {
  json j;
  j["schema_version"] = schema_version;
  j["method"] = method;
  j["integrals_hash"] = hash;
  j["theta_ev"] = sf.theta_ev;
  j["shift_ev"] = sf.shift_ev;
  j["kernel"] = sf.kernel == BroadeningKernel::lorentzian ? "lorentzian" : "gaussian";
  if (sf.poles) {
    j["reference_energy_hartree"] = sf.poles->reference_energy;
    j["poles"] = poles_to_json(*sf.poles);
  }
  j["grid"] = {{"lo_ev", sf.grid(0)},
               {"hi_ev", sf.grid(sf.grid.size() - 1)},
               {"step_ev", sf.grid.size() > 1 ? sf.grid(1) - sf.grid(0) : 0.0}};
  j["values"] = std::vector<double>(sf.values.data(), sf.values.data() + sf.values.size());
  return j;
}

json config_echo(const RunConfig& c) {
  json j;
  j["integrals"] = c.integrals;
  j["method"] = c.method;
  j["ci"] = {{"rank", c.ci_rank}};
  json trial = {{"annihilate", c.annihilate}, {"source", c.trial_source}};
  if (c.excite_from) {
    trial["excite_from"] = *c.excite_from;
    trial["excite_to"] = *c.excite_to;
    trial["excite_spin"] = c.excite_spin;
  }
  j["trial"] = trial;
  j["spectrum"] = {{"omega_min_ev", c.omega_min_ev ? json(*c.omega_min_ev) : json("auto")},
                   {"omega_max_ev", c.omega_max_ev ? json(*c.omega_max_ev) : json("auto")},
                   {"step_ev", c.omega_step_ev},
                   {"theta_ev", c.theta_ev},
                   {"kernel", c.kernel}};
  j["qpe"] = {{"bits", c.qpe_bits},
              {"shots", c.qpe_shots},
              {"seed", c.qpe_seed},
              {"gap", c.qpe_gap},
              {"margin", c.qpe_margin},
              {"exact_reference", c.qpe_exact_reference},
              {"reference_shots", c.qpe_reference_shots},
              {"record_shots", c.qpe_record_shots}};
  j["rtcc"] = {{"dt", c.rtcc_dt},
               {"t_max", c.rtcc_t_max},
               {"damping_ev", c.rtcc_damping_ev},
               {"e_corr", c.rtcc_e_corr},
               {"integrator", c.rtcc_integrator},
               {"checkpoint", c.rtcc_checkpoint}};
  j["solver"] = {{"dense_cap", c.dense_cap}, {"lanczos_iters", c.lanczos_iters}};
  j["out"] = c.out_dir;
  return j;
}

TrialSetup build_trial_setup(const RunConfig& cfg, const SpinIntegrals& ints) {
  TrialSetup setup;
  const int m = ints.m;
  setup.reference = Determinant{ints.reference_occupation, m};
  setup.n_alpha = setup.reference.n_alpha();
  setup.n_beta = setup.reference.n_beta();

  const int p = cfg.annihilate - 1;
  if (p < 0 || p >= m) throw ConfigError("trial.annihilate outside 1..M");
  setup.ion_alpha = setup.n_alpha - (p % 2 == 0 ? 1 : 0);
  setup.ion_beta = setup.n_beta - (p % 2 == 1 ? 1 : 0);
  if (setup.ion_alpha < 0 || setup.ion_beta < 0)
    throw ConfigError("annihilation empties a spin channel");

  if (cfg.method == "ci") {
    setup.target_space = std::make_shared<const CISpace>(CISpace::truncated_sector(
        m, setup.ion_alpha, setup.ion_beta, setup.reference, cfg.ci_rank));
  } else {
    setup.target_space =
        std::make_shared<const CISpace>(CISpace::sector(m, setup.ion_alpha, setup.ion_beta));
  }

  const auto extra = excitation_of(cfg);
  if (cfg.trial_source == "ground") {
    setup.n_space =
        std::make_shared<const CISpace>(CISpace::sector(m, setup.n_alpha, setup.n_beta));
    auto h_n = build_hamiltonian(ints, setup.n_space);
    auto ground = solve_ground_lanczos(h_n, 1e-12, std::max(400, cfg.lanczos_iters));
    setup.trial = make_trial(setup.n_space, ground.vectors->col(0), setup.target_space, p, extra);
  } else if (cfg.trial_source == "hf") {
    setup.trial = make_trial(setup.reference, setup.target_space, p, extra);
  } else {
    throw ConfigError("trial.source must be hf or ground");
  }
  return setup;
}

// Lehmann data for the ionized sector: dense when it fits, Ritz otherwise.
struct IonSolve {
  PoleSet poles;          // binding energies vs e0_n
  QpeTarget target;       // sector energies + weights (for qpe)
  std::string route;
};

IonSolve solve_ionized(const RunConfig& cfg, const SpinIntegrals& ints, const TrialSetup& setup,
                       double e0_n, double weight_floor) {
  IonSolve out;
  auto h = build_hamiltonian(ints, setup.target_space, 1u << 31);
  if (setup.target_space->size() <= cfg.dense_cap) {
    auto eigen = solve_dense(h);
    out.poles = lehmann_poles(eigen, setup.trial, e0_n, weight_floor);
    out.target = make_qpe_target(eigen, setup.trial);
    out.route = "dense";
  } else {
    auto tri = lanczos_from_vector(h, setup.trial.vector,
                                   std::min<std::size_t>(setup.target_space->size(),
                                                         cfg.lanczos_iters));
    auto ritz = ritz_spectrum(tri);
    for (int i = 0; i < ritz.values.size(); ++i) {
      if (ritz.weights(i) < weight_floor) continue;
      out.poles.poles.push_back({(e0_n - ritz.values(i)) * hartree_to_ev, ritz.weights(i)});
    }
    out.poles.reference_energy = e0_n;
    out.target.energies.assign(ritz.values.data(), ritz.values.data() + ritz.values.size());
    out.target.weights.assign(ritz.weights.data(), ritz.weights.data() + ritz.weights.size());
    out.route = "lanczos";
  }
  return out;
}

}  // namespace

RunConfig parse_config(std::istream& in) {
  auto kv = read_key_values(in);
  RunConfig c;
  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  try {
    if (auto v = take("integrals")) c.integrals = *v;
    if (auto v = take("method")) c.method = *v;
    if (auto v = take("out")) c.out_dir = *v;
    if (auto v = take("ci.rank")) c.ci_rank = std::stoi(*v);
    if (auto v = take("trial.annihilate")) c.annihilate = std::stoi(*v);
    if (auto v = take("trial.excite_from")) c.excite_from = std::stoi(*v);
    if (auto v = take("trial.excite_to")) c.excite_to = std::stoi(*v);
    if (auto v = take("trial.excite_spin")) c.excite_spin = *v;
    if (auto v = take("trial.source")) c.trial_source = *v;
    if (auto v = take("spectrum.omega_min")) c.omega_min_ev = std::stod(*v);
    if (auto v = take("spectrum.omega_max")) c.omega_max_ev = std::stod(*v);
    if (auto v = take("spectrum.step")) c.omega_step_ev = std::stod(*v);
    if (auto v = take("spectrum.theta")) c.theta_ev = std::stod(*v);
    if (auto v = take("spectrum.kernel")) c.kernel = *v;
    if (auto v = take("qpe.bits")) c.qpe_bits = std::stoi(*v);
    if (auto v = take("qpe.shots")) c.qpe_shots = std::stoi(*v);
    if (auto v = take("qpe.seed")) c.qpe_seed = std::stoull(*v);
    if (auto v = take("qpe.gap")) c.qpe_gap = std::stoi(*v);
    if (auto v = take("qpe.margin")) c.qpe_margin = std::stod(*v);
    if (auto v = take("qpe.exact_reference")) c.qpe_exact_reference = to_bool(*v);
    if (auto v = take("qpe.reference_shots")) c.qpe_reference_shots = std::stoi(*v);
    if (auto v = take("qpe.record_shots")) c.qpe_record_shots = to_bool(*v);
    if (auto v = take("rtcc.dt")) c.rtcc_dt = std::stod(*v);
    if (auto v = take("rtcc.t_max")) c.rtcc_t_max = std::stod(*v);
    if (auto v = take("rtcc.damping")) c.rtcc_damping_ev = std::stod(*v);
    if (auto v = take("rtcc.e_corr")) c.rtcc_e_corr = *v;
    if (auto v = take("rtcc.integrator")) c.rtcc_integrator = *v;
    if (auto v = take("rtcc.checkpoint")) c.rtcc_checkpoint = *v;
    if (auto v = take("solver.dense_cap")) c.dense_cap = std::stoul(*v);
    if (auto v = take("solver.lanczos_iters")) c.lanczos_iters = std::stoi(*v);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  if (!kv.empty()) throw ConfigError("unknown config key: " + kv.begin()->first);
  if (c.integrals.empty()) throw ConfigError("config needs an integrals path");
  if (c.method != "fci" && c.method != "ci" && c.method != "qpe" && c.method != "rtcc")
    throw ConfigError("method must be fci, ci, qpe or rtcc");
  if (c.theta_ev <= 0 || c.omega_step_ev <= 0) throw ConfigError("spectrum parameters must be positive");
  return c;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  return parse_config(in);
}

void run_job(const RunConfig& cfg, std::ostream& log) {
  const auto t_start = std::chrono::steady_clock::now();
  if (!fs::exists(cfg.integrals)) throw IoError("integrals file not found: " + cfg.integrals);
  fs::create_directories(cfg.out_dir);
  const std::string hash = file_hash_hex(cfg.integrals);

  IntegralStore store = parse_fcidump_file(cfg.integrals);
  auto ints = std::make_shared<const SpinIntegrals>(to_spin_integrals(store));
  log << "integrals: " << cfg.integrals << " (norb " << store.n_orb << ", nelec " << store.n_elec
      << ", hash " << hash << ")\n";

  json manifest;
  manifest["schema_version"] = schema_version;
  manifest["tool_version"] = tool_version;
  manifest["integrals_hash"] = hash;
  manifest["config"] = config_echo(cfg);
  json derived;

  const BroadeningKernel kernel =
      cfg.kernel == "gaussian" ? BroadeningKernel::gaussian : BroadeningKernel::lorentzian;

  SpectralFunction sf;
  json peaks_json;
  peaks_json["schema_version"] = schema_version;
  peaks_json["method"] = cfg.method;
  peaks_json["integrals_hash"] = hash;
  json extra_artifacts;

  if (cfg.method == "fci" || cfg.method == "ci" || cfg.method == "qpe") {
    TrialSetup setup = build_trial_setup(cfg, *ints);
    derived["ionized_dimension"] = setup.target_space->size();
    derived["trial_label"] = setup.trial.label;
    derived["trial_norm_sq"] = setup.trial.vector.squaredNorm();

    // exact N-electron reference energy
    auto n_space = setup.n_space
                       ? setup.n_space
                       : std::make_shared<const CISpace>(
                             CISpace::sector(ints->m, setup.n_alpha, setup.n_beta));
    auto h_n = build_hamiltonian(*ints, n_space, 1u << 31);
    const double e0_n = n_space->size() <= 2000
                            ? solve_dense(h_n, false).energies(0)
                            : solve_ground_lanczos(h_n, 1e-12, std::max(600, cfg.lanczos_iters))
                                  .energies(0);
    derived["e0_n_hartree"] = e0_n;
    log << "E0(N) = " << e0_n << " Ha\n";

    IonSolve ion = solve_ionized(cfg, *ints, setup, e0_n, 1e-8);
    derived["ionized_route"] = ion.route;

    if (cfg.method == "qpe") {
      PhaseWindow window =
          phase_window_for_poles(ion.target.energies, ion.target.weights, cfg.qpe_bits,
                                 cfg.qpe_margin);
      // reference distribution for the E0 mini-campaign: Ritz poles of |Phi0>
      Eigen::VectorXd phi0 = Eigen::VectorXd::Zero(static_cast<int>(n_space->size()));
      phi0(static_cast<int>(*n_space->find(setup.reference))) = 1.0;
      auto ref_tri = lanczos_from_vector(
          h_n, phi0, std::min<std::size_t>(n_space->size(), cfg.lanczos_iters));
      auto ref_ritz = ritz_spectrum(ref_tri);
      QpeTarget ref_target;
      ref_target.energies.assign(ref_ritz.values.data(),
                                 ref_ritz.values.data() + ref_ritz.values.size());
      ref_target.weights.assign(ref_ritz.weights.data(),
                                ref_ritz.weights.data() + ref_ritz.weights.size());
      PhaseWindow ref_window = phase_window_for_poles(ref_target.energies, ref_target.weights,
                                                      cfg.qpe_bits, cfg.qpe_margin);
      CampaignParams params;
      params.n_shots = cfg.qpe_shots;
      params.seed = cfg.qpe_seed;
      params.gap_bins = cfg.qpe_gap;
      params.exact_reference = cfg.qpe_exact_reference;
      params.reference_shots = cfg.qpe_reference_shots;
      QPECampaign campaign = run_campaign(ion.target, setup.trial.label, window, ref_target,
                                          ref_window, e0_n, params);
      derived["window"] = {{"tau", window.tau},
                           {"offset_hartree", window.offset},
                           {"bits", window.bits},
                           {"bin_width_hartree", window.bin_width_energy()},
                           {"bin_width_ev", window.bin_width_energy() * hartree_to_ev}};
      derived["reference_energy_hartree"] = campaign.reference_energy;

      PoleSet qpe_poles;
      qpe_poles.reference_energy = campaign.reference_energy;
      json rows = json::array();
      for (const auto& p : campaign.peaks) {
        qpe_poles.poles.push_back({p.energy_ev, p.probability});
        rows.push_back({{"energy_ev", p.energy_ev},
                        {"weight", p.probability},
                        {"shots", p.shot_count},
                        {"energy_hartree", p.energy_ha}});
      }
      peaks_json["peaks"] = rows;
      peaks_json["reference_energy_hartree"] = campaign.reference_energy;

      double lo = qpe_poles.poles.front().omega_ev, hi = qpe_poles.poles.back().omega_ev;
      sf = spectral_function(qpe_poles, auto_grid(cfg, lo, hi), cfg.theta_ev, kernel);

      json jc;
      jc["seed"] = campaign.seed;
      jc["trial"] = campaign.trial_label;
      jc["n_shots"] = campaign.shots.size();
      jc["gap_bins"] = campaign.gap_bins;
      jc["reference_exact"] = campaign.reference_exact;
      jc["reference_energy_hartree"] = campaign.reference_energy;
      if (cfg.qpe_record_shots) {
        json shots = json::array();
        for (const auto& s : campaign.shots) shots.push_back(s.outcome);
        jc["shot_outcomes"] = shots;
      }
      extra_artifacts["campaign.json"] = jc;
    } else {
      if (ion.poles.poles.empty()) throw NumericError("no Lehmann pole above the weight floor");
      json rows = json::array();
      for (const auto& p : ion.poles.poles)
        rows.push_back({{"energy_ev", p.omega_ev}, {"weight", p.weight}});
      peaks_json["peaks"] = rows;
      peaks_json["reference_energy_hartree"] = e0_n;
      const double lo = ion.poles.poles.front().omega_ev;
      const double hi = ion.poles.poles.back().omega_ev;
      sf = spectral_function(ion.poles, auto_grid(cfg, lo, hi), cfg.theta_ev, kernel);
    }
  } else {  // rtcc
    const int c = cfg.annihilate - 1;
    CCReference ref = init_reference(
        ints, c, cfg.rtcc_e_corr == "ccsd" ? ECorrSource::ccsd : ECorrSource::fci);
    derived["eps_c_hartree"] = ref.eps_c;
    derived["e_corr_hartree"] = ref.e_corr;
    derived["e_corr_source"] = cfg.rtcc_e_corr;
    log << "eps_c = " << ref.eps_c << " Ha, E_corr = " << ref.e_corr << " Ha\n";

    PropagateOptions opts;
    opts.dt = cfg.rtcc_dt;
    opts.t_max = cfg.rtcc_t_max;
    opts.integrator = cfg.rtcc_integrator == "backward_euler" ? Integrator::backward_euler
                                                              : Integrator::trapezoid;
    opts.checkpoint_path = cfg.rtcc_checkpoint;
    CCTrajectory traj = propagate(ref, opts);
    derived["steps"] = traj.times.size() - 1;
    derived["fourier_resolution_ev"] =
        2.0 * 3.141592653589793 / cfg.rtcc_t_max * hartree_to_ev;

    const double center = (ref.eps_c + ref.e_corr) * hartree_to_ev;
    GridSpec grid = auto_grid(cfg, center - 60.0, center + 25.0);
    sf = gf_and_spectrum(traj, ref, cfg.rtcc_damping_ev, grid);

    auto peaks = find_peaks(sf, 1e-3);
    json rows = json::array();
    for (const auto& p : peaks)
      rows.push_back({{"energy_ev", p.omega_ev},
                      {"weight", p.height * 3.141592653589793 * cfg.rtcc_damping_ev}});
    peaks_json["peaks"] = rows;
  }

  // artifacts
  {
    std::ostringstream tsv;
    write_tsv(sf, tsv);
    write_text(fs::path(cfg.out_dir) / "spectrum.tsv", tsv.str());
    write_text(fs::path(cfg.out_dir) / "spectrum.json",
               spectrum_to_json(sf, cfg.method, hash).dump(2) + "\n");
    write_text(fs::path(cfg.out_dir) / "peaks.json", peaks_json.dump(2) + "\n");
    for (auto& [name, payload] : extra_artifacts.items())
      write_text(fs::path(cfg.out_dir) / name, payload.dump(2) + "\n");
    manifest["derived"] = derived;
    manifest["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    write_text(fs::path(cfg.out_dir) / "manifest.json", manifest.dump(2) + "\n");
  }
  log << "artifacts written to " << cfg.out_dir << "\n";
}

namespace {

struct LoadedRun {
  std::string dir, method, hash;
  std::vector<Pole> peaks;
  std::optional<SpectralFunction> spectrum;  // rebuilt from stored poles when present
  json spectrum_json;
};

LoadedRun load_run(const std::string& dir) {
  LoadedRun run;
  run.dir = dir;
  std::ifstream pf(fs::path(dir) / "peaks.json");
  if (!pf) throw IoError("no peaks.json under " + dir);
  json peaks = json::parse(pf);
  run.method = peaks.value("method", "?");
  run.hash = peaks.value("integrals_hash", "");
  for (const auto& row : peaks["peaks"])
    run.peaks.push_back({row["energy_ev"].get<double>(), row["weight"].get<double>()});
  std::ifstream sfj(fs::path(dir) / "spectrum.json");
  if (sfj) run.spectrum_json = json::parse(sfj);
  return run;
}

}  // namespace

void compare_runs(const std::vector<std::string>& run_dirs, const CompareOptions& options,
                  std::ostream& log) {
  if (run_dirs.size() < 2) throw ConfigError("compare needs at least two run directories");
  std::vector<LoadedRun> runs;
  for (const auto& d : run_dirs) runs.push_back(load_run(d));
  for (std::size_t i = 1; i < runs.size(); ++i)
    if (runs[i].hash != runs[0].hash && !options.force)
      throw ConfigError("integral hashes differ between runs (" + runs[0].dir + " vs " +
                        runs[i].dir + "); pass --force to override");

  fs::create_directories(options.out_dir);

  // Greedy proximity matching of every run's peaks against the first run.
  const auto& base = runs[0].peaks;
  std::vector<std::vector<std::optional<Pole>>> rows(base.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    rows[r].assign(runs.size(), std::nullopt);
  for (std::size_t r = 0; r < base.size(); ++r) rows[r][0] = base[r];
  for (std::size_t j = 1; j < runs.size(); ++j) {
    struct Pair {
      double dist;
      std::size_t row, peak;
    };
    std::vector<Pair> pairs;
    for (std::size_t r = 0; r < base.size(); ++r)
      for (std::size_t p = 0; p < runs[j].peaks.size(); ++p) {
        const double d = std::abs(base[r].omega_ev - runs[j].peaks[p].omega_ev);
        if (d <= options.match_tol_ev) pairs.push_back({d, r, p});
      }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.dist < b.dist; });
    std::vector<bool> row_used(base.size(), false), peak_used(runs[j].peaks.size(), false);
    for (const auto& pr : pairs) {
      if (row_used[pr.row] || peak_used[pr.peak]) continue;
      row_used[pr.row] = true;
      peak_used[pr.peak] = true;
      rows[pr.row][j] = runs[j].peaks[pr.peak];
    }
  }

  json report;
  report["schema_version"] = schema_version;
  report["match_tol_ev"] = options.match_tol_ev;
  report["shift_ev"] = options.shift_ev;
  json jruns = json::array();
  for (const auto& r : runs) jruns.push_back({{"dir", r.dir}, {"method", r.method}, {"hash", r.hash}});
  report["runs"] = jruns;

  json jrows = json::array();
  std::vector<double> max_disc(runs.size(), 0.0);
  for (const auto& row : rows) {
    json jrow = json::array();
    for (std::size_t j = 0; j < runs.size(); ++j) {
      if (row[j])
        jrow.push_back({{"energy_ev", row[j]->omega_ev + options.shift_ev},
                        {"weight", row[j]->weight}});
      else
        jrow.push_back(nullptr);
      if (j > 0 && row[j] && row[0])
        max_disc[j] = std::max(max_disc[j], std::abs(row[j]->omega_ev - row[0]->omega_ev));
    }
    jrows.push_back(jrow);
  }
  report["matched_peaks"] = jrows;
  json jdisc = json::array();
  for (std::size_t j = 1; j < runs.size(); ++j)
    jdisc.push_back({{"vs", runs[j].dir}, {"max_abs_energy_ev", max_disc[j]}});
  report["max_discrepancy_vs_first"] = jdisc;

  // overlay spectra: shift + optional rebroaden from stored poles
  for (std::size_t j = 0; j < runs.size(); ++j) {
    const auto& sj = runs[j].spectrum_json;
    if (sj.is_null() || !sj.contains("poles")) continue;
    PoleSet poles;
    poles.reference_energy = sj.value("reference_energy_hartree", 0.0);
    for (const auto& row : sj["poles"])
      poles.poles.push_back(
          {row["energy_ev"].get<double>() + options.shift_ev, row["weight"].get<double>()});
    const double theta =
        options.rebroaden_ev > 0.0 ? options.rebroaden_ev : sj["theta_ev"].get<double>();
    double lo = 1e300, hi = -1e300;
    for (const auto& p : poles.poles) {
      lo = std::min(lo, p.omega_ev);
      hi = std::max(hi, p.omega_ev);
    }
    GridSpec grid{lo - 50.0 * theta, hi + 50.0 * theta,
                  sj["grid"]["step_ev"].get<double>()};
    auto sf = spectral_function(poles, grid, theta,
                                sj.value("kernel", "lorentzian") == std::string("gaussian")
                                    ? BroadeningKernel::gaussian
                                    : BroadeningKernel::lorentzian);
    sf.shift_ev = options.shift_ev;
    std::ostringstream tsv;
    write_tsv(sf, tsv);
    write_text(fs::path(options.out_dir) / ("overlay_" + std::to_string(j) + "_" + runs[j].method + ".tsv"),
               tsv.str());
  }
  if (!options.experiment_tsv.empty()) {
    std::ifstream exp_in(options.experiment_tsv);
    if (!exp_in) throw IoError("cannot open experiment curve: " + options.experiment_tsv);
    std::ostringstream copy;
    copy << exp_in.rdbuf();
    write_text(fs::path(options.out_dir) / "overlay_experiment.tsv", copy.str());
  }

  write_text(fs::path(options.out_dir) / "comparison.json", report.dump(2) + "\n");
  log << "comparison written to " << options.out_dir << "\n";
}

}  // namespace corespec
