#include "ionsim/io.hpp"
#include "ionsim/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

// Command-line front end of the pipeline. Every configuration key is also a
// --key override; precedence is defaults < --config file < flags. Stage
// subcommands run their upstream stages first and reuse anything already
// cached under the output directory.

int main(int argc, char** argv) {
  CLI::App app{
      "long-range Ising chain simulator: trap couplings, ramped Green's-function "
      "traces, moment sum rules, sparse spectra, and arrival-time fits"};
  app.require_subcommand(1);

  std::string config_file;
  app.add_option("--config", config_file, "key = value configuration file");

  const std::vector<std::pair<std::string, std::string>> keys = {
      {"n", "number of ions"},
      {"alpha", "target decay exponent of the couplings"},
      {"omega_ax_khz", "axial frequency in kHz; 0 tunes it to alpha"},
      {"ferromagnetic", "true keeps the generated couplings, false negates them"},
      {"b0_over_j0", "initial transverse field in units of J0"},
      {"tau_j0", "ramp decay time in units of 1/(2 pi J0)"},
      {"b_targets", "comma-separated fields to probe, units of J0"},
      {"trace_t_max_ms", "trace window length in ms"},
      {"trace_samples", "samples per trace"},
      {"trace_method", "direct | lehmann | protocol"},
      {"source_site", "measured site i of G_ij"},
      {"moment_sites", "comma-separated partner sites j"},
      {"moment_step", "differentiation base step in ms; 0 = automatic"},
      {"cs_m", "time samples for the sparse recovery"},
      {"cs_n_step", "frequency bins for the sparse recovery"},
      {"gap_b_min", "gap scan start, units of J0"},
      {"gap_b_max", "gap scan end, units of J0"},
      {"gap_points", "gap scan points"},
      {"lr_intercepts", "comma-separated intercept levels"},
      {"lr_absolute", "interpret intercepts as raw values"},
      {"lr_dead_band", "zero-crossing dead band"},
      {"seed", "random seed for the sensing matrix"},
      {"outdir", "run directory"},
  };
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> flags;
  for (const auto& [key, help] : keys)
    flags[key] = app.add_option("--" + key, values[key], help);

  auto* c_chain = app.add_subcommand("chain", "ion positions, couplings, and the decay fit");
  auto* c_gap = app.add_subcommand("spectrum-gap", "coupled excitation gap across a field scan");
  auto* c_trace = app.add_subcommand("trace", "Green's-function traces after the field ramp");
  auto* c_moments = app.add_subcommand("moments", "analytic vs derivative moment reports");
  auto* c_cs = app.add_subcommand("cs", "sparse spectral recovery vs reference lines");
  auto* c_lr = app.add_subcommand("lr", "arrival-time features and power-law fits");
  auto* c_run = app.add_subcommand("run", "every stage, cached by fingerprint");
  auto* c_export = app.add_subcommand("export", "print one artifact of an existing run");
  for (auto* sub : {c_chain, c_gap, c_trace, c_moments, c_cs, c_lr, c_run}) sub->fallthrough();

  std::string export_dir, export_what;
  int export_b = 0, export_site = -1;
  c_export->add_option("run_dir", export_dir, "run directory")->required();
  c_export
      ->add_option("what", export_what,
                   "config | manifest | chain | positions | chain-summary | gap | gap-summary | "
                   "ramp | trace | moments | spectrum | spectra | features | lr-table")
      ->required();
  c_export->add_option("--b-index", export_b, "field target index");
  c_export->add_option("--site", export_site, "trace partner site (default: the source site)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_export->parsed()) {
      std::cout << ionsim::pipeline::export_artifact(export_dir, export_what, export_b,
                                                     export_site);
      return 0;
    }

    ionsim::io::Config file;
    if (!config_file.empty()) file = ionsim::io::load_config(config_file);
    for (const auto& [key, opt] : flags)
      if (opt->count() > 0) file.set(key, values[key]);

    ionsim::pipeline::Runner runner(ionsim::pipeline::config_from(file));
    if (c_chain->parsed()) runner.chain();
    if (c_gap->parsed()) runner.spectrum_gap();
    if (c_trace->parsed()) runner.traces();
    if (c_moments->parsed()) runner.moments();
    if (c_cs->parsed()) runner.cs();
    if (c_lr->parsed()) runner.lr();
    if (c_run->parsed()) runner.run();
    std::cout << runner.root().string() << "\n";
    return 0;
  } catch (const ionsim::pipeline::StageError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "config: " << e.what() << "\n";
    return 2;
  }
}
