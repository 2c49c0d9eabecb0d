#include <CLI11.hpp>
#include <iostream>

#include "corespec/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"corespec: core-level spectral functions via CI, simulated QPE and RT-EOM-CCSD"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "execute one job from a config file");
  std::string config_path, out_override;
  std::uint64_t seed_override = 0;
  bool seed_given = false;
  run->add_option("--config", config_path, "key = value config file")->required();
  run->add_option("--out", out_override, "override the output directory");
  run->add_option("--seed", seed_override, "override the qpe seed")
      ->each([&](const std::string&) { seed_given = true; });

  auto* cmp = app.add_subcommand("compare", "align peak tables of completed runs");
  std::vector<std::string> dirs;
  corespec::CompareOptions copts;
  cmp->add_option("dirs", dirs, "run directories")->expected(-2);
  cmp->add_option("--shift", copts.shift_ev, "scissors shift in eV");
  cmp->add_option("--broaden", copts.rebroaden_ev, "re-broadening theta in eV");
  cmp->add_option("--experiment", copts.experiment_tsv, "digitized experimental curve (TSV)");
  cmp->add_option("--tol", copts.match_tol_ev, "peak matching tolerance in eV");
  cmp->add_option("--out", copts.out_dir, "report directory");
  cmp->add_flag("--force", copts.force, "compare despite mismatched integral hashes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      corespec::RunConfig cfg = corespec::parse_config_file(config_path);
      if (!out_override.empty()) cfg.out_dir = out_override;
      if (seed_given) cfg.qpe_seed = seed_override;
      corespec::run_job(cfg, std::cout);
    } else if (*cmp) {
      corespec::compare_runs(dirs, copts, std::cout);
    }
  } catch (const corespec::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const corespec::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
