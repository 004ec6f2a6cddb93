#include "ionsim/pipeline.hpp"

#include "ionsim/cs_spectra.hpp"
#include "ionsim/evolution.hpp"
#include "ionsim/lr_analysis.hpp"
#include "ionsim/moments.hpp"
#include "ionsim/units.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>

namespace ionsim::pipeline {
namespace {

using io::format_double;
using ordered_json = nlohmann::ordered_json;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
// Recovered spectral peaks below this fraction of the strongest one count as
// noise and are not reported.
constexpr double kCsPeakThreshold = 0.01;

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "n",           "alpha",          "omega_ax_khz",  "ferromagnetic", "b0_over_j0",
      "tau_j0",      "b_targets",      "trace_t_max_ms", "trace_samples", "trace_method",
      "source_site", "moment_sites",   "moment_step",   "cs_m",          "cs_n_step",
      "gap_b_min",   "gap_b_max",      "gap_points",    "lr_intercepts", "lr_absolute",
      "lr_dead_band", "seed",          "outdir"};
  return keys;
}

[[noreturn]] void bad_field(const std::string& key, const std::string& why) {
  throw std::invalid_argument("config field '" + key + "': " + why);
}

std::vector<int> int_list(const io::Config& file, const std::string& key) {
  std::vector<int> out;
  for (double v : file.get_double_list(key)) {
    if (!std::isfinite(v) || v != std::floor(v) || v < 0.0 || v > 1e9)
      bad_field(key, "entries must be nonnegative integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::string join_ints(const std::vector<int>& values) {
  std::string out;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (k) out += ", ";
    out += std::to_string(values[k]);
  }
  return out;
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

ramsey::TraceMethod parse_method(const std::string& name) {
  if (name == "direct") return ramsey::TraceMethod::direct;
  if (name == "lehmann") return ramsey::TraceMethod::lehmann;
  if (name == "protocol") return ramsey::TraceMethod::protocol;
  bad_field("trace_method", "must be direct, lehmann, or protocol");
}

std::string status_label(lr::FitStatus s) {
  switch (s) {
    case lr::FitStatus::ok: return "ok";
    case lr::FitStatus::insufficient: return "insufficient";
    case lr::FitStatus::rejected_negative: return "rejected_negative";
  }
  return "unknown";
}

std::string trace_file(int target, int j) {
  return "trace_b" + std::to_string(target) + "_j" + std::to_string(j) + ".csv";
}

io::Config strip_outdir(io::Config cfg) {
  std::erase_if(cfg.entries, [](const auto& kv) { return kv.first == "outdir"; });
  return cfg;
}

std::string opt_cell(const std::optional<double>& v) { return format_double(v ? *v : kNan); }

std::string gamma_cell(const lr::LrFit& fit) {
  return fit.status == lr::FitStatus::ok ? fmt3(fit.gamma) : "---";
}

ordered_json peak_json(const cs::Peak& p) {
  return ordered_json{{"bin", p.bin},
                      {"freq_rad_ms", p.freq},
                      {"magnitude", p.magnitude},
                      {"unresolved", p.unresolved}};
}

ordered_json fit_json(const lr::LrFit& f) {
  return ordered_json{{"gamma", f.gamma},
                      {"prefactor", f.prefactor},
                      {"residual", f.residual},
                      {"points", f.points},
                      {"status", status_label(f.status)}};
}

}  // namespace

RunConfig config_from(const io::Config& file) {
  const auto& keys = known_keys();
  for (const auto& [key, value] : file.entries)
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw std::invalid_argument("unknown config key: '" + key + "'");

  RunConfig cfg;
  if (file.has("n")) cfg.n = static_cast<int>(file.get_int("n"));
  if (file.has("alpha")) cfg.alpha = file.get_double("alpha");
  if (file.has("omega_ax_khz")) cfg.omega_ax_khz = file.get_double("omega_ax_khz");
  if (file.has("ferromagnetic")) cfg.ferromagnetic = file.get_bool("ferromagnetic");
  if (file.has("b0_over_j0")) cfg.b0_over_j0 = file.get_double("b0_over_j0");
  if (file.has("tau_j0")) cfg.tau_j0 = file.get_double("tau_j0");
  if (file.has("b_targets")) cfg.b_targets = file.get_double_list("b_targets");
  if (file.has("trace_t_max_ms")) cfg.trace_t_max_ms = file.get_double("trace_t_max_ms");
  if (file.has("trace_samples")) cfg.trace_samples = static_cast<int>(file.get_int("trace_samples"));
  if (file.has("trace_method")) cfg.trace_method = file.get("trace_method");
  if (file.has("source_site")) cfg.source_site = static_cast<int>(file.get_int("source_site"));
  if (file.has("moment_sites")) cfg.moment_sites = int_list(file, "moment_sites");
  if (file.has("moment_step")) cfg.moment_step = file.get_double("moment_step");
  if (file.has("cs_m")) cfg.cs_m = static_cast<int>(file.get_int("cs_m"));
  if (file.has("cs_n_step")) cfg.cs_n_step = static_cast<int>(file.get_int("cs_n_step"));
  if (file.has("gap_b_min")) cfg.gap_b_min = file.get_double("gap_b_min");
  if (file.has("gap_b_max")) cfg.gap_b_max = file.get_double("gap_b_max");
  if (file.has("gap_points")) cfg.gap_points = static_cast<int>(file.get_int("gap_points"));
  if (file.has("lr_intercepts")) cfg.lr_intercepts = file.get_double_list("lr_intercepts");
  if (file.has("lr_absolute")) cfg.lr_absolute = file.get_bool("lr_absolute");
  if (file.has("lr_dead_band")) cfg.lr_dead_band = file.get_double("lr_dead_band");
  if (file.has("seed")) {
    const long long s = file.get_int("seed");
    if (s < 0 || s > 0xffffffffLL) bad_field("seed", "must fit an unsigned 32-bit integer");
    cfg.seed = static_cast<unsigned>(s);
  }
  if (file.has("outdir")) cfg.outdir = file.get("outdir");
  validate(cfg);
  return cfg;
}

io::Config config_to(const RunConfig& cfg) {
  io::Config f;
  f.set_int("n", cfg.n);
  f.set_double("alpha", cfg.alpha);
  f.set_double("omega_ax_khz", cfg.omega_ax_khz);
  f.set_bool("ferromagnetic", cfg.ferromagnetic);
  f.set_double("b0_over_j0", cfg.b0_over_j0);
  f.set_double("tau_j0", cfg.tau_j0);
  f.set_double_list("b_targets", cfg.b_targets);
  f.set_double("trace_t_max_ms", cfg.trace_t_max_ms);
  f.set_int("trace_samples", cfg.trace_samples);
  f.set("trace_method", cfg.trace_method);
  f.set_int("source_site", cfg.source_site);
  f.set("moment_sites", join_ints(cfg.moment_sites));
  f.set_double("moment_step", cfg.moment_step);
  f.set_int("cs_m", cfg.cs_m);
  f.set_int("cs_n_step", cfg.cs_n_step);
  f.set_double("gap_b_min", cfg.gap_b_min);
  f.set_double("gap_b_max", cfg.gap_b_max);
  f.set_int("gap_points", cfg.gap_points);
  f.set_double_list("lr_intercepts", cfg.lr_intercepts);
  f.set_bool("lr_absolute", cfg.lr_absolute);
  f.set_double("lr_dead_band", cfg.lr_dead_band);
  f.set_int("seed", cfg.seed);
  f.set("outdir", cfg.outdir);
  return f;
}

void validate(const RunConfig& cfg) {
  if (cfg.n < 1 || cfg.n > spin::kMaxDenseSites)
    bad_field("n", "must lie between 1 and " + std::to_string(spin::kMaxDenseSites));
  if (!(cfg.alpha > 0.0) || !std::isfinite(cfg.alpha)) bad_field("alpha", "must be positive");
  if (!(cfg.omega_ax_khz >= 0.0) || !std::isfinite(cfg.omega_ax_khz))
    bad_field("omega_ax_khz", "must be zero (tune to alpha) or a positive frequency");
  if (!(cfg.b0_over_j0 > 0.0) || !std::isfinite(cfg.b0_over_j0))
    bad_field("b0_over_j0", "must be positive");
  if (!(cfg.tau_j0 > 0.0) || !std::isfinite(cfg.tau_j0)) bad_field("tau_j0", "must be positive");
  if (cfg.b_targets.empty()) bad_field("b_targets", "must list at least one field value");
  for (double b : cfg.b_targets)
    if (!(b > 0.0) || !(b <= cfg.b0_over_j0))
      bad_field("b_targets", "entries must lie in (0, b0_over_j0]");
  if (!(cfg.trace_t_max_ms > 0.0) || !std::isfinite(cfg.trace_t_max_ms))
    bad_field("trace_t_max_ms", "must be positive");
  if (cfg.trace_samples < 5) bad_field("trace_samples", "needs at least five samples");
  (void)parse_method(cfg.trace_method);
  if (cfg.source_site < 0 || cfg.source_site >= cfg.n)
    bad_field("source_site", "must lie in [0, n)");
  for (int s : cfg.moment_sites)
    if (s < 0) bad_field("moment_sites", "entries must be nonnegative");
  if (!(cfg.moment_step >= 0.0) || !std::isfinite(cfg.moment_step))
    bad_field("moment_step", "must be nonnegative (zero selects the automatic step)");
  if (cfg.cs_m < 2) bad_field("cs_m", "needs at least two time samples");
  if (cfg.cs_n_step < cfg.cs_m) bad_field("cs_n_step", "must be at least cs_m");
  if (!(cfg.gap_b_min > 0.0) || !std::isfinite(cfg.gap_b_min))
    bad_field("gap_b_min", "must be positive");
  if (!(cfg.gap_b_max > cfg.gap_b_min) || !std::isfinite(cfg.gap_b_max))
    bad_field("gap_b_max", "must exceed gap_b_min");
  if (cfg.gap_points < 2) bad_field("gap_points", "needs at least two points");
  for (double c : cfg.lr_intercepts)
    if (c == 0.0 || !std::isfinite(c)) bad_field("lr_intercepts", "entries must be nonzero");
  if (!(cfg.lr_dead_band >= 0.0) || !std::isfinite(cfg.lr_dead_band))
    bad_field("lr_dead_band", "must be nonnegative");
  if (cfg.outdir.empty()) bad_field("outdir", "must name a directory");
}

StageError::StageError(std::string stage_name, const std::string& message)
    : std::runtime_error("stage '" + stage_name + "': " + message), stage(std::move(stage_name)) {}

double coupled_gap(const spin::EigenDecomposition& dec) {
  const int d = dec.dim();
  const spin::StateVector ground = dec.eigenvector(0);
  spin::StateVector coupled = spin::StateVector::Zero(d);
  for (int i = 0; i < dec.n_sites; ++i) coupled += spin::apply_site(ground, spin::Axis::y, i);
  const Eigen::VectorXcd overlap = dec.to_eigenbasis(coupled);
  for (int k = 1; k < d; ++k)
    if (dec.parity(k) == dec.parity(0) && std::abs(overlap(k)) > 1e-6)
      return dec.energy(k) - dec.energy(0);
  return kNan;
}

Runner::Runner(RunConfig cfg) : cfg_(std::move(cfg)), root_(cfg_.outdir) {
  validate(cfg_);

  io::Config chain_cfg;
  chain_cfg.set("stage", "chain/1");
  chain_cfg.set_int("n", cfg_.n);
  chain_cfg.set_double("alpha", cfg_.alpha);
  chain_cfg.set_double("omega_ax_khz", cfg_.omega_ax_khz);
  chain_fp_ = io::fingerprint(chain_cfg);

  io::Config gap_cfg;
  gap_cfg.set("stage", "gap/1");
  gap_cfg.set("upstream", chain_fp_);
  gap_cfg.set_bool("ferromagnetic", cfg_.ferromagnetic);
  gap_cfg.set_double("gap_b_min", cfg_.gap_b_min);
  gap_cfg.set_double("gap_b_max", cfg_.gap_b_max);
  gap_cfg.set_int("gap_points", cfg_.gap_points);
  gap_fp_ = io::fingerprint(gap_cfg);

  io::Config trace_cfg;
  trace_cfg.set("stage", "trace/1");
  trace_cfg.set("upstream", chain_fp_);
  trace_cfg.set_bool("ferromagnetic", cfg_.ferromagnetic);
  trace_cfg.set_double("b0_over_j0", cfg_.b0_over_j0);
  trace_cfg.set_double("tau_j0", cfg_.tau_j0);
  trace_cfg.set_double_list("b_targets", cfg_.b_targets);
  trace_cfg.set_double("trace_t_max_ms", cfg_.trace_t_max_ms);
  trace_cfg.set_int("trace_samples", cfg_.trace_samples);
  trace_cfg.set("trace_method", cfg_.trace_method);
  trace_cfg.set_int("source_site", cfg_.source_site);
  trace_fp_ = io::fingerprint(trace_cfg);

  io::Config moments_cfg;
  moments_cfg.set("stage", "moments/1");
  moments_cfg.set("upstream", chain_fp_);
  moments_cfg.set_bool("ferromagnetic", cfg_.ferromagnetic);
  moments_cfg.set_double("b0_over_j0", cfg_.b0_over_j0);
  moments_cfg.set_double("tau_j0", cfg_.tau_j0);
  moments_cfg.set_double_list("b_targets", cfg_.b_targets);
  moments_cfg.set_int("source_site", cfg_.source_site);
  moments_cfg.set("moment_sites", join_ints(cfg_.moment_sites));
  moments_cfg.set_double("moment_step", cfg_.moment_step);
  moments_fp_ = io::fingerprint(moments_cfg);

  io::Config cs_cfg;
  cs_cfg.set("stage", "cs/1");
  cs_cfg.set("upstream", chain_fp_);
  cs_cfg.set_bool("ferromagnetic", cfg_.ferromagnetic);
  cs_cfg.set_double("b0_over_j0", cfg_.b0_over_j0);
  cs_cfg.set_double("tau_j0", cfg_.tau_j0);
  cs_cfg.set_double_list("b_targets", cfg_.b_targets);
  cs_cfg.set_double("trace_t_max_ms", cfg_.trace_t_max_ms);
  cs_cfg.set_int("cs_m", cfg_.cs_m);
  cs_cfg.set_int("cs_n_step", cfg_.cs_n_step);
  cs_cfg.set_int("seed", cfg_.seed);
  cs_cfg.set_int("source_site", cfg_.source_site);
  cs_fp_ = io::fingerprint(cs_cfg);

  io::Config lr_cfg;
  lr_cfg.set("stage", "lr/1");
  lr_cfg.set("upstream", trace_fp_);
  lr_cfg.set_double_list("lr_intercepts", cfg_.lr_intercepts);
  lr_cfg.set_bool("lr_absolute", cfg_.lr_absolute);
  lr_cfg.set_double("lr_dead_band", cfg_.lr_dead_band);
  lr_fp_ = io::fingerprint(lr_cfg);
}

double Runner::field_unit_khz() const { return coup_.j0_khz > 0.0 ? coup_.j0_khz : 1.0; }

double Runner::b_angular(double b_over_j0) const {
  return b_over_j0 * units::angular(field_unit_khz());
}

double Runner::tau_ms() const { return cfg_.tau_j0 / units::angular(field_unit_khz()); }

void Runner::ensure_chain() {
  if (chain_ready_) return;
  params_ = trap::TrapParams{};
  params_.n_ions = cfg_.n;
  if (cfg_.omega_ax_khz > 0.0)
    params_.axial_khz = cfg_.omega_ax_khz;
  else if (cfg_.n >= 3)
    params_ = trap::tune_axial(params_, cfg_.alpha);
  geom_ = trap::solve_equilibrium(cfg_.n);
  const auto modes = trap::transverse_modes(geom_, params_);
  coup_ = trap::coupling_matrix(geom_, modes, params_);
  if (cfg_.n >= 3)
    fit_ = trap::fit_alpha(coup_, geom_);
  else
    fit_ = trap::PowerLawFit{kNan, kNan, kNan};  // a power law needs three ions
  j_signed_ = cfg_.ferromagnetic ? coup_.j_khz : Eigen::MatrixXd(-coup_.j_khz);
  chain_ready_ = true;
}

void Runner::ensure_dynamics() {
  if (dynamics_ready_) return;
  ensure_chain();
  const int targets = static_cast<int>(cfg_.b_targets.size());
  decs_.resize(targets);
  states_.resize(targets);
  ramp_times_ms_.resize(targets);

  evolution::RampSpec ramp;
  ramp.j_khz = j_signed_;
  ramp.b0_angular = b_angular(cfg_.b0_over_j0);
  ramp.tau_ms = tau_ms();

  // One continuous ramp serves every target: visit them in decreasing field
  // order (increasing time) and snapshot the state as each field is reached.
  std::vector<int> order(targets);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return cfg_.b_targets[a] > cfg_.b_targets[b]; });

  spin::StateVector psi = spin::initial_state(cfg_.n);
  double t_prev = 0.0;
  for (int k : order) {
    const double t_k =
        evolution::ramp_duration(ramp.b0_angular, b_angular(cfg_.b_targets[k]), ramp.tau_ms);
    if (t_k > t_prev) psi = evolution::evolve_ramp(ramp, t_prev, t_k, psi);
    t_prev = t_k;
    states_[k] = psi;
    ramp_times_ms_[k] = t_k;
    decs_[k] = spin::diagonalize(spin::build_hamiltonian(j_signed_, b_angular(cfg_.b_targets[k])));
  }
  dynamics_ready_ = true;
}

bool Runner::stage_cached(const std::string& stage, const std::string& fp) const {
  const auto manifest = root_ / stage / "manifest.json";
  std::error_code ec;
  if (!std::filesystem::exists(manifest, ec)) return false;
  try {
    const auto j = ordered_json::parse(io::read_file(manifest));
    if (j.value("fingerprint", std::string{}) != fp) return false;
    for (const auto& f : j.at("files"))
      if (!std::filesystem::exists(root_ / stage / f.get<std::string>())) return false;
    return true;
  } catch (const std::exception&) {
    return false;  // unreadable manifest: recompute

  }
}

void Runner::finish_stage(const std::string& stage, const std::string& fp,
                          const std::vector<std::string>& files) {
  ordered_json j;
  j["schema"] = "manifest/1";
  j["stage"] = stage;
  j["fingerprint"] = fp;
  j["files"] = files;
  io::atomic_write(root_ / stage / "manifest.json", j.dump(2) + "\n");
  std::error_code ec;
  std::filesystem::remove(root_ / stage / "error.txt", ec);
}

void Runner::fail_stage(const std::string& stage, const std::string& message) {
  try {
    io::atomic_write(root_ / stage / "error.txt", message + "\n");
  } catch (const std::exception&) {
    // best effort; the exception below still carries the message
  }
  throw StageError(stage, message);
}

void Runner::write_config_snapshot() {
  const io::Config file = config_to(cfg_);
  io::atomic_write(root_ / "config.txt", "# fingerprint: " +
                                             io::fingerprint(strip_outdir(file)) + "\n" +
                                             io::serialize(file));
}

void Runner::chain() {
  write_config_snapshot();
  if (stage_cached("chain", chain_fp_)) return;
  try {
    ensure_chain();
    std::vector<std::string> files;

    io::Table pos;
    pos.comments = {{"schema", "chain/1"}, {"fingerprint", chain_fp_}};
    pos.columns = {"site", "position"};
    for (int i = 0; i < cfg_.n; ++i)
      pos.rows.push_back({std::to_string(i), format_double(geom_.positions(i))});
    io::atomic_write(root_ / "chain" / "positions.csv", io::serialize_csv(pos));
    files.push_back("positions.csv");

    io::Table cou;
    cou.comments = {{"schema", "chain/1"},
                    {"fingerprint", chain_fp_},
                    {"j0_khz", format_double(coup_.j0_khz)},
                    {"mu_khz", format_double(coup_.mu_khz)}};
    cou.columns = {"i", "j", "distance", "j_khz"};
    for (int i = 0; i < cfg_.n; ++i)
      for (int j = i + 1; j < cfg_.n; ++j)
        cou.rows.push_back({std::to_string(i), std::to_string(j),
                            format_double(geom_.positions(j) - geom_.positions(i)),
                            format_double(coup_.j_khz(i, j))});
    io::atomic_write(root_ / "chain" / "couplings.csv", io::serialize_csv(cou));
    files.push_back("couplings.csv");

    ordered_json sum;
    sum["schema"] = "chain/1";
    sum["fingerprint"] = chain_fp_;
    sum["n"] = cfg_.n;
    sum["axial_khz"] = params_.axial_khz;
    sum["transverse_com_khz"] = params_.transverse_com_khz;
    sum["eta"] = params_.eta();
    sum["beatnote_khz"] = coup_.mu_khz;
    sum["mu_over_com"] = coup_.mu_khz / params_.transverse_com_khz;
    sum["j0_khz"] = coup_.j0_khz;
    sum["alpha"] = fit_.alpha;
    sum["prefactor_khz"] = fit_.prefactor_khz;
    sum["max_log_residual"] = fit_.max_log_residual;
    io::atomic_write(root_ / "chain" / "summary.json", sum.dump(2) + "\n");
    files.push_back("summary.json");

    finish_stage("chain", chain_fp_, files);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    fail_stage("chain", e.what());
  }
}

void Runner::spectrum_gap() {
  chain();
  if (stage_cached("spectrum-gap", gap_fp_)) return;
  try {
    ensure_chain();
    double mean_row_khz = 0.0;
    for (int i = 0; i < cfg_.n; ++i) mean_row_khz += coup_.j_khz.row(i).sum();
    mean_row_khz /= cfg_.n;

    io::Table t;
    t.comments = {{"schema", "gap/1"},
                  {"fingerprint", gap_fp_},
                  {"j0_khz", format_double(field_unit_khz())},
                  {"mean_row_coupling_khz", format_double(mean_row_khz)}};
    t.columns = {"b_over_j0", "b_rad_ms", "gap_rad_ms", "b_over_mean_coupling"};

    double best_gap = kNan, best_r = kNan, best_over_mean = kNan;
    for (int k = 0; k < cfg_.gap_points; ++k) {
      const double r = cfg_.gap_b_min +
                       k * (cfg_.gap_b_max - cfg_.gap_b_min) / (cfg_.gap_points - 1);
      const auto dec = spin::diagonalize(spin::build_hamiltonian(j_signed_, b_angular(r)));
      const double gap = coupled_gap(dec);
      const double over_mean =
          mean_row_khz > 0.0 ? r * field_unit_khz() / mean_row_khz : kNan;
      t.rows.push_back({format_double(r), format_double(b_angular(r)), format_double(gap),
                        format_double(over_mean)});
      if (std::isfinite(gap) && (!std::isfinite(best_gap) || gap < best_gap)) {
        best_gap = gap;
        best_r = r;
        best_over_mean = over_mean;
      }
    }
    io::atomic_write(root_ / "spectrum-gap" / "gap.csv", io::serialize_csv(t));

    ordered_json gj;
    gj["schema"] = "gap/1";
    gj["fingerprint"] = gap_fp_;
    gj["j0_khz"] = field_unit_khz();
    gj["mean_row_coupling_khz"] = mean_row_khz;
    gj["points"] = cfg_.gap_points;
    if (std::isfinite(best_gap))
      gj["min"] = ordered_json{{"gap_rad_ms", best_gap},
                               {"b_over_j0", best_r},
                               {"b_over_mean_coupling", best_over_mean}};
    else
      gj["min"] = nullptr;
    io::atomic_write(root_ / "spectrum-gap" / "gap.json", gj.dump(2) + "\n");

    finish_stage("spectrum-gap", gap_fp_, {"gap.csv", "gap.json"});
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    fail_stage("spectrum-gap", e.what());
  }
}

void Runner::traces() {
  chain();
  if (stage_cached("trace", trace_fp_)) return;
  try {
    ensure_dynamics();
    const auto method = parse_method(cfg_.trace_method);
    const int targets = static_cast<int>(cfg_.b_targets.size());
    traces_.assign(targets, {});
    std::vector<std::string> files;

    ordered_json ramp;
    ramp["schema"] = "trace/1";
    ramp["fingerprint"] = trace_fp_;
    ramp["field_unit_khz"] = field_unit_khz();
    ramp["b0_over_j0"] = cfg_.b0_over_j0;
    ramp["b0_rad_ms"] = b_angular(cfg_.b0_over_j0);
    ramp["tau_ms"] = tau_ms();
    ramp["targets"] = ordered_json::array();
    for (int k = 0; k < targets; ++k)
      ramp["targets"].push_back(ordered_json{{"index", k},
                                             {"b_over_j0", cfg_.b_targets[k]},
                                             {"b_rad_ms", b_angular(cfg_.b_targets[k])},
                                             {"ramp_time_ms", ramp_times_ms_[k]}});
    io::atomic_write(root_ / "trace" / "ramp.json", ramp.dump(2) + "\n");
    files.push_back("ramp.json");

    for (int k = 0; k < targets; ++k) {
      traces_[k].reserve(cfg_.n);
      for (int j = 0; j < cfg_.n; ++j) {
        auto tr = ramsey::scan_trace(decs_[k], states_[k], cfg_.source_site, j,
                                     cfg_.trace_t_max_ms, cfg_.trace_samples, method);
        io::Table t;
        t.comments = {{"schema", "trace/1"},
                      {"fingerprint", trace_fp_},
                      {"i", std::to_string(cfg_.source_site)},
                      {"j", std::to_string(j)},
                      {"b_over_j0", format_double(cfg_.b_targets[k])},
                      {"alpha", format_double(fit_.alpha)}};
        t.columns = {"time_ms", "green"};
        for (int s = 0; s < tr.times.size(); ++s)
          t.rows.push_back({format_double(tr.times(s)), format_double(tr.values(s))});
        io::atomic_write(root_ / "trace" / trace_file(k, j), io::serialize_csv(t));
        files.push_back(trace_file(k, j));
        traces_[k].push_back(std::move(tr));
      }
    }
    finish_stage("trace", trace_fp_, files);
    traces_ready_ = true;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    fail_stage("trace", e.what());
  }
}

void Runner::ensure_traces() {
  if (traces_ready_) return;
  traces();
  if (traces_ready_) return;  // just computed

  // The stage was cached: reload the traces from their files.
  const int targets = static_cast<int>(cfg_.b_targets.size());
  traces_.assign(targets, {});
  for (int k = 0; k < targets; ++k) {
    traces_[k].reserve(cfg_.n);
    for (int j = 0; j < cfg_.n; ++j) {
      const auto table = io::parse_csv(io::read_file(root_ / "trace" / trace_file(k, j)));
      const int tc = table.column("time_ms");
      const int gc = table.column("green");
      ramsey::RamseyTrace tr;
      tr.i = cfg_.source_site;
      tr.j = j;
      const int rows = static_cast<int>(table.rows.size());
      tr.times.resize(rows);
      tr.values.resize(rows);
      for (int r = 0; r < rows; ++r) {
        tr.times(r) = table.number(r, tc);
        tr.values(r) = table.number(r, gc);
      }
      traces_[k].push_back(std::move(tr));
    }
  }
  traces_ready_ = true;
}

void Runner::moments() {
  chain();
  if (stage_cached("moments", moments_fp_)) return;
  try {
    ensure_dynamics();
    std::vector<std::string> files;
    for (int k = 0; k < static_cast<int>(cfg_.b_targets.size()); ++k) {
      const auto& dec = decs_[k];
      const double spread = dec.energy(dec.dim() - 1) - dec.energy(0);
      const double step =
          cfg_.moment_step > 0.0 ? cfg_.moment_step : moments::suggested_step(spread);

      io::Table t;
      t.comments = {{"schema", "moments/1"},
                    {"fingerprint", moments_fp_},
                    {"b_over_j0", format_double(cfg_.b_targets[k])},
                    {"base_step_ms", format_double(step)}};
      t.columns = {"i",           "j",           "analytic_mu0", "analytic_mu1",
                   "analytic_mu2", "analytic_mu3", "numeric_mu0",  "numeric_mu1",
                   "numeric_mu2",  "numeric_mu3",  "ratio_mu1",    "ratio_mu3",
                   "g0_residual",  "g2_residual"};
      for (int site : cfg_.moment_sites) {
        if (site >= cfg_.n) continue;
        const auto rep = moments::moment_report(dec, states_[k], j_signed_,
                                                b_angular(cfg_.b_targets[k]), cfg_.source_site,
                                                site, step);
        t.rows.push_back({std::to_string(rep.i), std::to_string(rep.j),
                          format_double(rep.analytic[0]), format_double(rep.analytic[1]),
                          format_double(rep.analytic[2]), format_double(rep.analytic[3]),
                          format_double(rep.numeric[0]), format_double(rep.numeric[1]),
                          format_double(rep.numeric[2]), format_double(rep.numeric[3]),
                          format_double(rep.ratio[1]), format_double(rep.ratio[3]),
                          format_double(rep.g0_residual), format_double(rep.g2_residual)});
      }
      const std::string name = "moments_b" + std::to_string(k) + ".csv";
      io::atomic_write(root_ / "moments" / name, io::serialize_csv(t));
      files.push_back(name);
    }
    finish_stage("moments", moments_fp_, files);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    fail_stage("moments", e.what());
  }
}

void Runner::cs() {
  chain();
  if (stage_cached("cs", cs_fp_)) return;
  try {
    ensure_dynamics();
    const auto prob = cs::build_problem(cfg_.cs_m, cfg_.cs_n_step, cfg_.trace_t_max_ms, cfg_.seed);
    std::vector<std::string> files;

    for (int k = 0; k < static_cast<int>(cfg_.b_targets.size()); ++k) {
      const auto terms =
          ramsey::lehmann_terms(decs_[k], states_[k], cfg_.source_site, cfg_.source_site);
      Eigen::VectorXd samples(cfg_.cs_m);
      for (int m = 0; m < cfg_.cs_m; ++m)
        samples(m) = ramsey::green_lehmann(terms, prob.times(m));

      const auto spectrum = cs::basis_pursuit(prob, samples);
      const auto peaks = cs::extract_peaks(spectrum, kCsPeakThreshold);
      const auto reference = cs::lehmann_reference(terms);
      const auto report = cs::match_peaks(peaks, reference, prob.bin_width(), prob.period());

      io::Table t;
      t.comments = {{"schema", "cs/1"},
                    {"fingerprint", cs_fp_},
                    {"b_over_j0", format_double(cfg_.b_targets[k])},
                    {"m", std::to_string(cfg_.cs_m)},
                    {"n_step", std::to_string(cfg_.cs_n_step)},
                    {"seed", std::to_string(cfg_.seed)},
                    {"bin_width_rad_ms", format_double(prob.bin_width())},
                    {"iterations", std::to_string(spectrum.iterations)},
                    {"residual", format_double(spectrum.residual)},
                    {"l1", format_double(spectrum.l1)}};
      t.columns = {"bin", "freq_rad_ms", "magnitude", "amplitude_re", "amplitude_im"};
      for (int n = 0; n < cfg_.cs_n_step; ++n)
        t.rows.push_back({std::to_string(n), format_double(spectrum.omega(n)),
                          format_double(std::abs(spectrum.amplitude(n))),
                          format_double(spectrum.amplitude(n).real()),
                          format_double(spectrum.amplitude(n).imag())});
      const std::string spec_name = "cs_spectrum_b" + std::to_string(k) + ".csv";
      io::atomic_write(root_ / "cs" / spec_name, io::serialize_csv(t));
      files.push_back(spec_name);

      ordered_json mj;
      mj["schema"] = "cs/1";
      mj["fingerprint"] = cs_fp_;
      mj["b_over_j0"] = cfg_.b_targets[k];
      mj["bin_width_rad_ms"] = prob.bin_width();
      mj["period_rad_ms"] = prob.period();
      mj["reference_lines"] = reference.size();
      mj["peaks"] = ordered_json::array();
      for (const auto& p : peaks) mj["peaks"].push_back(peak_json(p));
      mj["matched"] = ordered_json::array();
      for (const auto& m : report.matched)
        mj["matched"].push_back(ordered_json{{"ref_freq", m.ref_freq},
                                             {"folded_freq", m.folded_freq},
                                             {"rec_freq", m.rec_freq},
                                             {"distance", m.distance},
                                             {"ref_magnitude", m.ref_magnitude},
                                             {"rec_magnitude", m.rec_magnitude}});
      mj["unmatched_reference"] = ordered_json::array();
      for (const auto& [freq, weight] : report.unmatched_reference)
        mj["unmatched_reference"].push_back(ordered_json{{"freq", freq}, {"magnitude", weight}});
      mj["spurious"] = ordered_json::array();
      for (const auto& p : report.spurious) mj["spurious"].push_back(peak_json(p));
      const std::string match_name = "cs_match_b" + std::to_string(k) + ".json";
      io::atomic_write(root_ / "cs" / match_name, mj.dump(2) + "\n");
      files.push_back(match_name);
    }
    finish_stage("cs", cs_fp_, files);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    fail_stage("cs", e.what());
  }
}

void Runner::lr() {
  traces();
  if (stage_cached("lr", lr_fp_)) return;
  try {
    ensure_traces();
    ensure_chain();

    lr::FeatureOptions opts;
    opts.intercepts = cfg_.lr_intercepts;
    opts.absolute_intercepts = cfg_.lr_absolute;
    opts.dead_band = cfg_.lr_dead_band;
    const int nc = static_cast<int>(cfg_.lr_intercepts.size());
    std::vector<std::string> files;

    io::Table table;
    table.comments = {{"schema", "lr/1"},
                      {"fingerprint", lr_fp_},
                      {"absolute_intercepts", cfg_.lr_absolute ? "true" : "false"}};
    for (int c = 0; c < nc; ++c)
      table.comments.emplace_back("c" + std::to_string(c + 1),
                                  format_double(cfg_.lr_intercepts[c]));
    table.columns = {"b_over_j0"};
    for (int c = 0; c < nc; ++c) table.columns.push_back("c" + std::to_string(c + 1));
    table.columns.insert(table.columns.end(), {"first_min", "first_max", "first_zero"});

    ordered_json fits;
    fits["schema"] = "lr/1";
    fits["fingerprint"] = lr_fp_;
    fits["targets"] = ordered_json::array();

    for (int k = 0; k < static_cast<int>(cfg_.b_targets.size()); ++k) {
      std::vector<ramsey::RamseyTrace> family;
      std::vector<double> distances;
      std::vector<int> sites;
      for (int j = 0; j < cfg_.n; ++j) {
        if (j == cfg_.source_site) continue;
        family.push_back(traces_[k][j]);
        distances.push_back(std::abs(geom_.positions(j) - geom_.positions(cfg_.source_site)));
        sites.push_back(j);
      }
      const auto features = lr::family_features(family, opts);
      const auto row = lr::fit_family(features, distances);

      io::Table ft;
      ft.comments = {{"schema", "lr/1"},
                     {"fingerprint", lr_fp_},
                     {"b_over_j0", format_double(cfg_.b_targets[k])}};
      for (int c = 0; c < nc; ++c) {
        ft.comments.emplace_back("c" + std::to_string(c + 1),
                                 format_double(cfg_.lr_intercepts[c]));
        ft.comments.emplace_back("c" + std::to_string(c + 1) + "_applied",
                                 format_double(features.scaled_intercepts[c]));
      }
      ft.columns = {"site", "distance", "t_first_min", "t_first_max", "t_first_zero"};
      for (int c = 0; c < nc; ++c) ft.columns.push_back("t_c" + std::to_string(c + 1));
      for (std::size_t s = 0; s < family.size(); ++s) {
        const auto& f = features.per_site[s];
        std::vector<std::string> cells = {std::to_string(sites[s]),
                                          format_double(distances[s]),
                                          opt_cell(f.first_local_min),
                                          opt_cell(f.first_local_max),
                                          opt_cell(f.first_zero)};
        for (int c = 0; c < nc; ++c) cells.push_back(opt_cell(f.intercepts[c]));
        ft.rows.push_back(std::move(cells));
      }
      const std::string fname = "features_b" + std::to_string(k) + ".csv";
      io::atomic_write(root_ / "lr" / fname, io::serialize_csv(ft));
      files.push_back(fname);

      std::vector<std::string> cells = {format_double(cfg_.b_targets[k])};
      for (int c = 0; c < nc; ++c) cells.push_back(gamma_cell(row.intercept_fits[c]));
      cells.push_back(gamma_cell(row.min_fit));
      cells.push_back(gamma_cell(row.max_fit));
      cells.push_back(gamma_cell(row.zero_fit));
      table.rows.push_back(std::move(cells));

      ordered_json tj;
      tj["b_over_j0"] = cfg_.b_targets[k];
      tj["features"] = ordered_json::object();
      for (int c = 0; c < nc; ++c)
        tj["features"]["c" + std::to_string(c + 1)] = fit_json(row.intercept_fits[c]);
      tj["features"]["first_min"] = fit_json(row.min_fit);
      tj["features"]["first_max"] = fit_json(row.max_fit);
      tj["features"]["first_zero"] = fit_json(row.zero_fit);
      fits["targets"].push_back(tj);
    }

    io::atomic_write(root_ / "lr" / "lr_table.csv", io::serialize_csv(table));
    files.push_back("lr_table.csv");
    io::atomic_write(root_ / "lr" / "fits.json", fits.dump(2) + "\n");
    files.push_back("fits.json");
    finish_stage("lr", lr_fp_, files);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    fail_stage("lr", e.what());
  }
}

std::filesystem::path Runner::run() {
  write_config_snapshot();
  chain();
  spectrum_gap();
  traces();
  moments();
  cs();
  lr();

  ordered_json top;
  top["schema"] = "run/1";
  top["fingerprint"] = io::fingerprint(strip_outdir(config_to(cfg_)));
  top["stages"] = ordered_json::object();
  for (const auto& name : {"chain", "spectrum-gap", "trace", "moments", "cs", "lr"})
    top["stages"][name] = ordered_json::parse(io::read_file(root_ / name / "manifest.json"));
  io::atomic_write(root_ / "manifest.json", top.dump(2) + "\n");
  return root_;
}

std::string export_artifact(const std::filesystem::path& run_dir, const std::string& what,
                            int b_index, int site) {
  const auto config_path = run_dir / "config.txt";
  if (!std::filesystem::exists(config_path))
    throw StageError("run", "artifact not found: " + config_path.string());
  const RunConfig cfg = config_from(io::parse_config(io::read_file(config_path)));
  const int j = site < 0 ? cfg.source_site : site;
  const std::string b = std::to_string(b_index);

  std::string stage;
  std::filesystem::path rel;
  if (what == "config") {
    stage = "run";
    rel = "config.txt";
  } else if (what == "manifest") {
    stage = "run";
    rel = "manifest.json";
  } else if (what == "chain") {
    stage = "chain";
    rel = std::filesystem::path("chain") / "couplings.csv";
  } else if (what == "positions") {
    stage = "chain";
    rel = std::filesystem::path("chain") / "positions.csv";
  } else if (what == "chain-summary") {
    stage = "chain";
    rel = std::filesystem::path("chain") / "summary.json";
  } else if (what == "gap") {
    stage = "spectrum-gap";
    rel = std::filesystem::path("spectrum-gap") / "gap.csv";
  } else if (what == "gap-summary") {
    stage = "spectrum-gap";
    rel = std::filesystem::path("spectrum-gap") / "gap.json";
  } else if (what == "ramp") {
    stage = "trace";
    rel = std::filesystem::path("trace") / "ramp.json";
  } else if (what == "trace") {
    stage = "trace";
    rel = std::filesystem::path("trace") / trace_file(b_index, j);
  } else if (what == "moments") {
    stage = "moments";
    rel = std::filesystem::path("moments") / ("moments_b" + b + ".csv");
  } else if (what == "spectrum") {
    stage = "cs";
    rel = std::filesystem::path("cs") / ("cs_spectrum_b" + b + ".csv");
  } else if (what == "spectra") {
    stage = "cs";
    rel = std::filesystem::path("cs") / ("cs_match_b" + b + ".json");
  } else if (what == "features") {
    stage = "lr";
    rel = std::filesystem::path("lr") / ("features_b" + b + ".csv");
  } else if (what == "lr-table") {
    stage = "lr";
    rel = std::filesystem::path("lr") / "lr_table.csv";
  } else {
    throw std::invalid_argument("unknown export name: '" + what + "'");
  }

  const auto path = run_dir / rel;
  if (!std::filesystem::exists(path))
    throw StageError(stage, "artifact not found: " + path.string());
  return io::read_file(path);
}

}  // namespace ionsim::pipeline
