#pragma once

#include "ionsim/io.hpp"
#include "ionsim/ramsey.hpp"
#include "ionsim/spin_system.hpp"
#include "ionsim/trap_chain.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

// Configuration-driven pipeline: ion chain -> couplings -> ramped states ->
// Green's-function traces -> moment reports, sparse spectra, and arrival-time
// fits, persisted as plain-text artifacts under one run directory.
//
// Field units: configuration fields named *_over_j0 are multiples of the mean
// nearest-neighbour coupling J0 of the generated chain (for a single ion,
// where no coupling exists, the unit falls back to 1 kHz). The ramp decay
// time is tau_j0 / (2 pi J0) ms, so tau_j0 is measured against the angular
// coupling strength.
//
// Every stage owns a subdirectory. A stage writes its data files, then a
// manifest recording the stage fingerprint (a hash of exactly the
// configuration keys that determine the stage's output, chained through its
// upstream stages). A rerun skips any stage whose manifest fingerprint
// matches and whose files all exist, so sweeping one knob recomputes only
// the stages downstream of it. All writes are whole-file atomic.

namespace ionsim::pipeline {

struct RunConfig {
  int n = 10;
  double alpha = 1.0;          // target decay exponent (used when omega_ax_khz == 0)
  double omega_ax_khz = 0.0;   // axial frequency; 0 = tune it to reach alpha
  bool ferromagnetic = true;   // false negates the generated couplings
  double b0_over_j0 = 10.0;    // initial transverse field of the ramp
  double tau_j0 = 0.85;        // ramp decay time in units of 1 / (2 pi J0)
  std::vector<double> b_targets{0.94, 0.74, 0.49, 0.35};  // fields probed, units of J0
  double trace_t_max_ms = 6.0;
  int trace_samples = 1201;
  std::string trace_method = "lehmann";  // direct | lehmann | protocol
  int source_site = 0;         // measured site i of G_ij; j sweeps the chain
  std::vector<int> moment_sites{0, 1, 4, 9};  // j partners; sites >= n are skipped
  double moment_step = 0.0;    // differentiation base step, ms; 0 = automatic
  int cs_m = 64;               // time samples for the sparse recovery
  int cs_n_step = 1024;        // frequency bins
  double gap_b_min = 0.1;      // gap scan window, units of J0
  double gap_b_max = 4.0;
  int gap_points = 50;
  std::vector<double> lr_intercepts{-0.0002, -0.0005, -0.001, -0.0015, -0.002};
  bool lr_absolute = false;    // intercepts as raw values instead of amplitude fractions
  double lr_dead_band = 1e-5;
  unsigned seed = 1;           // drives the sensing matrix of the cs stage
  std::string outdir = "runs/default";
};

// Builds a RunConfig from its key = value form. Unknown keys and
// out-of-range values raise std::invalid_argument naming the offending key.
RunConfig config_from(const io::Config& file);
// Inverse of config_from; serialize(config_to(c)) round-trips losslessly.
io::Config config_to(const RunConfig& cfg);
// The validation applied by config_from, usable on hand-built configs.
void validate(const RunConfig& cfg);

// Raised when a stage fails; the stage name is also written to
// <outdir>/<stage>/error.txt before the throw.
struct StageError : std::runtime_error {
  std::string stage;
  StageError(std::string stage_name, const std::string& message);
};

// Energy difference between the ground state and the lowest eigenstate of the
// same spin-reflection parity that the total-sigma^y operator couples to it
// (overlap above 1e-6). NaN when no such state exists.
double coupled_gap(const spin::EigenDecomposition& dec);

class Runner {
 public:
  explicit Runner(RunConfig cfg);  // validates; does not touch the filesystem

  const RunConfig& config() const { return cfg_; }
  const std::filesystem::path& root() const { return root_; }

  // Stage entry points; each ensures its upstream stages first. All are
  // cached: a stage whose manifest matches its fingerprint is skipped.
  void chain();
  void spectrum_gap();
  void traces();
  void moments();
  void cs();
  void lr();

  // config.txt + every stage + the top-level manifest. Returns the run root.
  std::filesystem::path run();

 private:
  void ensure_chain();     // in-memory chain data (always computed; cheap)
  void ensure_dynamics();  // eigendecompositions + ramped states per target
  void ensure_traces();    // in-memory traces, loaded from disk when cached
  void write_config_snapshot();

  bool stage_cached(const std::string& stage, const std::string& fp) const;
  void finish_stage(const std::string& stage, const std::string& fp,
                    const std::vector<std::string>& files);
  [[noreturn]] void fail_stage(const std::string& stage, const std::string& message);

  double field_unit_khz() const;  // J0, or 1 kHz for a single ion
  double b_angular(double b_over_j0) const;
  double tau_ms() const;

  RunConfig cfg_;
  std::filesystem::path root_;
  std::string chain_fp_, gap_fp_, trace_fp_, moments_fp_, cs_fp_, lr_fp_;

  bool chain_ready_ = false;
  trap::TrapParams params_;
  trap::ChainGeometry geom_;
  trap::CouplingMatrix coup_;
  trap::PowerLawFit fit_;  // alpha is NaN below three ions
  Eigen::MatrixXd j_signed_;

  bool dynamics_ready_ = false;
  std::vector<spin::EigenDecomposition> decs_;   // per b target
  std::vector<spin::StateVector> states_;        // ramped states per target
  std::vector<double> ramp_times_ms_;

  bool traces_ready_ = false;
  std::vector<std::vector<ramsey::RamseyTrace>> traces_;  // [target][site j]
};

// Reads one artifact of an existing run and returns its text. Valid names:
// config, manifest, chain, positions, chain-summary, gap, gap-summary, ramp,
// trace, moments, spectrum, spectra, features, lr-table. b_index selects the
// field target (trace, moments, spectrum, spectra, features); site selects
// the trace partner j (-1 = the source site). A missing artifact raises
// StageError naming the stage that would produce it.
std::string export_artifact(const std::filesystem::path& run_dir, const std::string& what,
                            int b_index = 0, int site = -1);

}  // namespace ionsim::pipeline
