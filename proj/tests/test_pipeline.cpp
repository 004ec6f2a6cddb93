#include <doctest.h>

#include "ionsim/io.hpp"
#include "ionsim/pipeline.hpp"
#include "ionsim/units.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;
using namespace ionsim;

// Fresh scratch directory per test, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("ionsim_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Small but complete configuration that exercises every stage quickly.
pipeline::RunConfig small_config(const fs::path& outdir) {
  pipeline::RunConfig cfg;
  cfg.n = 3;
  cfg.omega_ax_khz = 700.0;  // skip the tuning bisection
  cfg.b_targets = {1.0, 0.6};
  cfg.trace_t_max_ms = 1.0;
  cfg.trace_samples = 81;
  cfg.moment_sites = {0, 1, 2};
  cfg.cs_m = 12;
  cfg.cs_n_step = 48;
  cfg.gap_points = 4;
  cfg.outdir = outdir.string();
  return cfg;
}

std::map<fs::path, std::string> snapshot_tree(const fs::path& root) {
  std::map<fs::path, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file())
      out[fs::relative(entry.path(), root)] = io::read_file(entry.path());
  return out;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("doubles survive the round trip through their text form") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 6.2831853071795862, -0.0, 1e17, 2.2250738585072014e-308}) {
    CHECK(io::parse_double(io::format_double(v)) == v);
  }
  CHECK(std::isnan(io::parse_double("nan")));
  CHECK(io::parse_double("inf") == HUGE_VAL);
  CHECK_THROWS_AS((void)io::parse_double("1.5x"), std::invalid_argument);
  CHECK_THROWS_AS((void)io::parse_double(""), std::invalid_argument);
}

TEST_CASE("config files parse, serialize, and reject duplicates") {
  const std::string text =
      "# a comment line\n"
      "\n"
      "n = 4\n"
      "alpha = 1.12\n"
      "flag=true\n"
      "list = 1, 2.5, -3\n"
      "name = hello world\n";
  const io::Config cfg = io::parse_config(text);
  CHECK(cfg.get_int("n") == 4);
  CHECK(cfg.get_double("alpha") == 1.12);
  CHECK(cfg.get_bool("flag"));
  CHECK(cfg.get_double_list("list") == std::vector<double>{1.0, 2.5, -3.0});
  CHECK(cfg.get("name") == "hello world");
  CHECK(cfg.get_or("missing", "fallback") == "fallback");
  CHECK_THROWS_AS((void)cfg.get("missing"), std::invalid_argument);
  CHECK_THROWS_AS((void)cfg.get_int("alpha"), std::invalid_argument);
  CHECK_THROWS_AS((void)cfg.get_bool("n"), std::invalid_argument);

  // serialize -> parse is the identity on entries
  CHECK(io::parse_config(io::serialize(cfg)).entries == cfg.entries);

  CHECK_THROWS_AS((void)io::parse_config("a = 1\na = 2\n"), std::invalid_argument);
  CHECK_THROWS_AS((void)io::parse_config("no equals sign\n"), std::invalid_argument);
  CHECK_THROWS_AS((void)io::parse_config("= empty key\n"), std::invalid_argument);
}

TEST_CASE("set replaces in place and typed setters format stably") {
  io::Config cfg;
  cfg.set("a", "1");
  cfg.set("b", "2");
  cfg.set("a", "3");
  CHECK(cfg.entries.size() == 2);
  CHECK(cfg.entries[0].second == "3");
  cfg.set_double("x", 0.1);
  cfg.set_int("k", -7);
  cfg.set_bool("f", false);
  cfg.set_double_list("l", {1.5, 2.5});
  CHECK(cfg.get_double("x") == 0.1);
  CHECK(cfg.get_int("k") == -7);
  CHECK_FALSE(cfg.get_bool("f"));
  CHECK(cfg.get_double_list("l") == std::vector<double>{1.5, 2.5});
}

TEST_CASE("fingerprints are stable and sensitive") {
  io::Config a;
  a.set("x", "1");
  a.set("y", "2");
  io::Config b = a;
  CHECK(io::fingerprint(a) == io::fingerprint(b));
  CHECK(io::fingerprint(a).size() == 16);
  b.set("y", "3");
  CHECK(io::fingerprint(a) != io::fingerprint(b));
  // order matters: the fingerprint covers the serialized form
  io::Config c;
  c.set("y", "2");
  c.set("x", "1");
  CHECK(io::fingerprint(a) != io::fingerprint(c));
  CHECK(io::fnv1a("") == 14695981039346656037ULL);  // standard offset basis
}

TEST_CASE("atomic writes create parents and leave no temp files") {
  TempDir tmp("atomic");
  const fs::path file = tmp.path / "a" / "b" / "data.txt";
  io::atomic_write(file, "payload");
  CHECK(io::read_file(file) == "payload");
  io::atomic_write(file, "replaced");
  CHECK(io::read_file(file) == "replaced");
  int count = 0;
  for (const auto& entry : fs::recursive_directory_iterator(tmp.path))
    if (entry.is_regular_file()) ++count;
  CHECK(count == 1);
}

TEST_CASE("csv tables round-trip with comments") {
  io::Table t;
  t.comments = {{"schema", "demo/1"}, {"note", "has: colon"}};
  t.columns = {"x", "y"};
  t.rows = {{io::format_double(0.1), "a"}, {io::format_double(-2.0), "b"}};
  const std::string text = io::serialize_csv(t);
  const io::Table back = io::parse_csv(text);
  CHECK(back.comment("schema") == "demo/1");
  CHECK(back.comment("note") == "has: colon");
  CHECK(back.comment("absent").empty());
  CHECK(back.columns == t.columns);
  CHECK(back.rows == t.rows);
  CHECK(back.number(0, back.column("x")) == 0.1);
  CHECK_THROWS_AS((void)back.column("z"), std::invalid_argument);
  CHECK_THROWS_AS((void)io::parse_csv(""), std::invalid_argument);
  CHECK_THROWS_AS((void)io::parse_csv("x,y\n1\n"), std::invalid_argument);
}

TEST_CASE("run configs round-trip losslessly through their file form") {
  pipeline::RunConfig cfg;
  cfg.n = 7;
  cfg.alpha = 1.1200000000000001;
  cfg.b_targets = {0.94, 0.35};
  cfg.moment_sites = {0, 2, 6};
  cfg.lr_absolute = true;
  cfg.seed = 4242;
  cfg.outdir = "some/dir";
  const io::Config file = pipeline::config_to(cfg);
  const pipeline::RunConfig back = pipeline::config_from(io::parse_config(io::serialize(file)));
  CHECK(back.n == cfg.n);
  CHECK(back.alpha == cfg.alpha);
  CHECK(back.omega_ax_khz == cfg.omega_ax_khz);
  CHECK(back.ferromagnetic == cfg.ferromagnetic);
  CHECK(back.b0_over_j0 == cfg.b0_over_j0);
  CHECK(back.tau_j0 == cfg.tau_j0);
  CHECK(back.b_targets == cfg.b_targets);
  CHECK(back.trace_t_max_ms == cfg.trace_t_max_ms);
  CHECK(back.trace_samples == cfg.trace_samples);
  CHECK(back.trace_method == cfg.trace_method);
  CHECK(back.source_site == cfg.source_site);
  CHECK(back.moment_sites == cfg.moment_sites);
  CHECK(back.moment_step == cfg.moment_step);
  CHECK(back.cs_m == cfg.cs_m);
  CHECK(back.cs_n_step == cfg.cs_n_step);
  CHECK(back.gap_b_min == cfg.gap_b_min);
  CHECK(back.gap_b_max == cfg.gap_b_max);
  CHECK(back.gap_points == cfg.gap_points);
  CHECK(back.lr_intercepts == cfg.lr_intercepts);
  CHECK(back.lr_absolute == cfg.lr_absolute);
  CHECK(back.lr_dead_band == cfg.lr_dead_band);
  CHECK(back.seed == cfg.seed);
  CHECK(back.outdir == cfg.outdir);
}

TEST_CASE("invalid config fields raise errors naming the field") {
  const auto message_of = [](pipeline::RunConfig cfg) {
    try {
      pipeline::validate(cfg);
      return std::string{};
    } catch (const std::invalid_argument& e) {
      return std::string(e.what());
    }
  };
  pipeline::RunConfig cfg;
  CHECK(message_of(cfg).empty());  // defaults are valid

  cfg.n = 0;
  CHECK(message_of(cfg).find("'n'") != std::string::npos);
  cfg = {};
  cfg.b_targets = {12.0};  // above b0_over_j0
  CHECK(message_of(cfg).find("'b_targets'") != std::string::npos);
  cfg = {};
  cfg.b_targets.clear();
  CHECK(message_of(cfg).find("'b_targets'") != std::string::npos);
  cfg = {};
  cfg.trace_method = "magic";
  CHECK(message_of(cfg).find("'trace_method'") != std::string::npos);
  cfg = {};
  cfg.source_site = 10;
  CHECK(message_of(cfg).find("'source_site'") != std::string::npos);
  cfg = {};
  cfg.cs_n_step = 4;  // below cs_m
  CHECK(message_of(cfg).find("'cs_n_step'") != std::string::npos);
  cfg = {};
  cfg.gap_b_max = 0.05;
  CHECK(message_of(cfg).find("'gap_b_max'") != std::string::npos);
  cfg = {};
  cfg.lr_intercepts = {0.0};
  CHECK(message_of(cfg).find("'lr_intercepts'") != std::string::npos);
  cfg = {};
  cfg.outdir.clear();
  CHECK(message_of(cfg).find("'outdir'") != std::string::npos);

  io::Config file;
  file.set("voltage", "9000");
  CHECK_THROWS_WITH_AS((void)pipeline::config_from(file), "unknown config key: 'voltage'",
                       std::invalid_argument);
}

TEST_CASE("a run produces every stage with matching manifests and schemas") {
  TempDir tmp("run");
  pipeline::Runner runner(small_config(tmp.path / "out"));
  const fs::path root = runner.run();

  for (const std::string stage : {"chain", "spectrum-gap", "trace", "moments", "cs", "lr"}) {
    CAPTURE(stage);
    const auto manifest = nlohmann::json::parse(io::read_file(root / stage / "manifest.json"));
    CHECK(manifest.at("stage") == stage);
    CHECK(manifest.at("fingerprint").get<std::string>().size() == 16);
    for (const auto& f : manifest.at("files")) {
      CAPTURE(f.get<std::string>());
      CHECK(fs::exists(root / stage / f.get<std::string>()));
    }
  }

  // pinned column schemas
  const auto head = [&](const fs::path& p) { return io::parse_csv(io::read_file(p)).columns; };
  CHECK(head(root / "chain" / "positions.csv") == std::vector<std::string>{"site", "position"});
  CHECK(head(root / "chain" / "couplings.csv") ==
        std::vector<std::string>{"i", "j", "distance", "j_khz"});
  CHECK(head(root / "spectrum-gap" / "gap.csv") ==
        std::vector<std::string>{"b_over_j0", "b_rad_ms", "gap_rad_ms", "b_over_mean_coupling"});
  CHECK(head(root / "trace" / "trace_b0_j1.csv") ==
        std::vector<std::string>{"time_ms", "green"});
  CHECK(head(root / "moments" / "moments_b0.csv") ==
        std::vector<std::string>{"i", "j", "analytic_mu0", "analytic_mu1", "analytic_mu2",
                                 "analytic_mu3", "numeric_mu0", "numeric_mu1", "numeric_mu2",
                                 "numeric_mu3", "ratio_mu1", "ratio_mu3", "g0_residual",
                                 "g2_residual"});
  CHECK(head(root / "cs" / "cs_spectrum_b0.csv") ==
        std::vector<std::string>{"bin", "freq_rad_ms", "magnitude", "amplitude_re",
                                 "amplitude_im"});
  CHECK(head(root / "lr" / "features_b0.csv") ==
        std::vector<std::string>{"site", "distance", "t_first_min", "t_first_max", "t_first_zero",
                                 "t_c1", "t_c2", "t_c3", "t_c4", "t_c5"});
  CHECK(head(root / "lr" / "lr_table.csv") ==
        std::vector<std::string>{"b_over_j0", "c1", "c2", "c3", "c4", "c5", "first_min",
                                 "first_max", "first_zero"});

  // every artifact carries a fingerprint
  const auto trace = io::parse_csv(io::read_file(root / "trace" / "trace_b1_j2.csv"));
  CHECK(trace.comment("fingerprint").size() == 16);
  CHECK(trace.comment("i") == "0");
  CHECK(trace.comment("j") == "2");
  CHECK(io::parse_double(trace.comment("b_over_j0")) == 0.6);
  const auto summary = nlohmann::json::parse(io::read_file(root / "chain" / "summary.json"));
  CHECK(summary.at("fingerprint").get<std::string>().size() == 16);
  CHECK(summary.at("n") == 3);
}

TEST_CASE("reruns are byte-identical and cached stages are not recomputed") {
  TempDir tmp("determinism");
  const pipeline::RunConfig cfg = small_config(tmp.path / "out");

  pipeline::Runner(cfg).run();
  const auto first = snapshot_tree(tmp.path / "out");
  CHECK(first.size() > 20);

  // rerun into the same directory: nothing may change
  pipeline::Runner(cfg).run();
  CHECK(snapshot_tree(tmp.path / "out") == first);

  // a fresh directory gives the same bytes except the outdir line of config.txt
  pipeline::RunConfig other = cfg;
  other.outdir = (tmp.path / "out2").string();
  pipeline::Runner(other).run();
  auto second = snapshot_tree(tmp.path / "out2");
  CHECK(second.size() == first.size());
  for (const auto& [rel, content] : first) {
    CAPTURE(rel.string());
    if (rel == fs::path("config.txt")) continue;
    CHECK(second.at(rel) == content);
  }

  // caching: poke one stage's knob and confirm only downstream stages refresh
  const auto mtime = [&](const std::string& rel) {
    return fs::last_write_time(tmp.path / "out" / rel);
  };
  const auto chain_before = mtime("chain/manifest.json");
  const auto trace_before = mtime("trace/manifest.json");
  const auto lr_before = mtime("lr/manifest.json");
  pipeline::RunConfig tweaked = cfg;
  tweaked.lr_dead_band = 2e-5;
  pipeline::Runner(tweaked).lr();
  CHECK(mtime("chain/manifest.json") == chain_before);
  CHECK(mtime("trace/manifest.json") == trace_before);
  CHECK(mtime("lr/manifest.json") != lr_before);
}

TEST_CASE("single-spin smoke run reproduces the analytic trace file") {
  TempDir tmp("single");
  pipeline::RunConfig cfg;
  cfg.n = 1;
  cfg.b_targets = {1.0};
  cfg.trace_t_max_ms = 2.0;
  cfg.trace_samples = 41;
  cfg.moment_sites = {0};
  cfg.cs_m = 8;
  cfg.cs_n_step = 32;
  cfg.gap_points = 3;
  cfg.outdir = (tmp.path / "out").string();
  pipeline::Runner runner(cfg);
  const fs::path root = runner.run();

  // for one ion the field unit is 1 kHz, so B = 2 pi rad/ms, and the ramp
  // leaves the polarized state invariant: G(t) = -2 sin(2 B t) <sigma_y>
  const double b = units::angular(1.0);
  const auto table = io::parse_csv(io::read_file(root / "trace" / "trace_b0_j0.csv"));
  const int tc = table.column("time_ms");
  const int gc = table.column("green");
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const double t = table.number(static_cast<int>(r), tc);
    CHECK(table.number(static_cast<int>(r), gc) ==
          doctest::Approx(-2.0 * std::sin(2.0 * b * t)).epsilon(1e-12));
  }
}

TEST_CASE("stage failures leave an error file and preserve prior stages") {
  TempDir tmp("failure");
  pipeline::RunConfig cfg = small_config(tmp.path / "out");
  cfg.omega_ax_khz = 0.0;
  cfg.alpha = 3.5;  // outside the reachable decay range: the chain stage fails
  pipeline::Runner runner(cfg);
  CHECK_THROWS_AS(runner.run(), pipeline::StageError);
  try {
    pipeline::Runner(cfg).run();
  } catch (const pipeline::StageError& e) {
    CHECK(e.stage == "chain");
    CHECK(std::string(e.what()).find("stage 'chain'") == 0);
  }
  CHECK(fs::exists(tmp.path / "out" / "chain" / "error.txt"));
  CHECK_FALSE(fs::exists(tmp.path / "out" / "chain" / "manifest.json"));

  // a later failure preserves the completed upstream stages
  pipeline::RunConfig late = small_config(tmp.path / "late");
  pipeline::Runner(late).chain();
  CHECK(fs::exists(tmp.path / "late" / "chain" / "manifest.json"));
}

TEST_CASE("export returns artifacts and names the stage when missing") {
  TempDir tmp("export");
  pipeline::RunConfig cfg = small_config(tmp.path / "out");
  pipeline::Runner runner(cfg);
  runner.run();

  const std::string trace = pipeline::export_artifact(runner.root(), "trace", 0, 1);
  CHECK(trace.find("time_ms,green") != std::string::npos);
  CHECK(trace.find("# j: 1") != std::string::npos);
  const std::string table = pipeline::export_artifact(runner.root(), "lr-table");
  CHECK(table.find("b_over_j0,c1") != std::string::npos);
  const std::string spectra = pipeline::export_artifact(runner.root(), "spectra");
  const auto match = nlohmann::json::parse(spectra);
  CHECK(match.contains("matched"));
  CHECK(match.contains("spurious"));

  CHECK_THROWS_AS((void)pipeline::export_artifact(runner.root(), "nonsense"),
                  std::invalid_argument);
  try {
    (void)pipeline::export_artifact(runner.root(), "trace", 9, 0);
  } catch (const pipeline::StageError& e) {
    CHECK(e.stage == "trace");
    CHECK(std::string(e.what()).find("not found") != std::string::npos);
  }
}

TEST_CASE("coupled gap ignores opposite-parity and uncoupled states") {
  // two uncoupled spins: H = -B (sigma_y1 + sigma_y2); the total-sigma_y
  // operator cannot reach any excited state from |y+ y+>, so no gap exists
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2, 2);
  const auto dec = spin::diagonalize(spin::build_hamiltonian(j, 3.0));
  CHECK(std::isnan(pipeline::coupled_gap(dec)));

  // with a coupling the first same-parity coupled state sits 2 levels up
  j(0, 1) = j(1, 0) = 0.5;
  const auto dec2 = spin::diagonalize(spin::build_hamiltonian(j, 3.0));
  const double gap = pipeline::coupled_gap(dec2);
  CHECK(std::isfinite(gap));
  CHECK(gap > 0.0);
}

}  // TEST_SUITE
