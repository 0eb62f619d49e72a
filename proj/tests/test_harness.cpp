#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "tll/harness.hpp"
#include "tll/io.hpp"

using namespace tll;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "tll_harness_tests" / name;
  fs::remove_all(dir);
  return dir;
}

harness::ExperimentConfig parse(const std::string& text) {
  return harness::parse_config_text(text);
}

std::vector<std::string> errors_of(const std::string& text) {
  try {
    (void)harness::parse_config_text(text);
  } catch (const harness::ConfigError& e) {
    return e.errors();
  }
  return {};
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  json j;
  in >> j;
  return j;
}

void check_manifest(const harness::ResultManifest& man, const fs::path& dir) {
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(!man.files.empty());
  std::set<std::string> seen;
  for (const auto& f : man.files) {
    CAPTURE(f.name);
    CHECK(seen.insert(f.name).second);
    const fs::path p = dir / f.name;
    REQUIRE(fs::exists(p));
    CHECK(io::hex64(io::checksum_file(p)) == f.checksum);
    CHECK(fs::file_size(p) == f.bytes);
  }
  // ascending by name, manifest not self-listed
  for (std::size_t i = 1; i < man.files.size(); ++i)
    CHECK(man.files[i - 1].name < man.files[i].name);
  CHECK(seen.count("manifest.json") == 0);

  const json j = read_json(dir / "manifest.json");
  CHECK(j["config_digest"] == man.config_digest);
  CHECK(j["files"].size() == man.files.size());
}

}  // namespace

TEST_SUITE_BEGIN("harness");

TEST_CASE("scenario names round trip") {
  const std::vector<std::string> names = {
      "ground_state_correlations", "adiabatic_ramp", "back_and_forth_ramp", "friedel",
      "quench",                    "dsf",            "disordered_chain",    "thermal_comparison"};
  std::set<harness::Scenario> seen;
  for (const auto& n : names) {
    const auto s = harness::scenario_from_name(n);
    CHECK(harness::scenario_name(s) == n);
    CHECK(seen.insert(s).second);
  }
  CHECK_THROWS_AS((void)harness::scenario_from_name("what"), std::invalid_argument);
}

TEST_CASE("minimal config fills the slow-preparation defaults") {
  const auto cfg = parse(R"({
    "scenario": "ground_state_correlations",
    "geometry": {"n_sites": 8}
  })");
  CHECK(cfg.scenario == harness::Scenario::GroundStateCorrelations);
  CHECK(cfg.geometry.n_sites == 8);
  CHECK(cfg.geometry.boundary == lattice::Boundary::PeriodicRing);
  CHECK(cfg.coupling.sign == lattice::Sign::FM);
  CHECK(cfg.coupling.j_xy == doctest::Approx(2.0 * M_PI * 0.55));
  CHECK(cfg.coupling.exponent == doctest::Approx(3.0));
  CHECK(cfg.coupling.vdw_uu == doctest::Approx(2.0 * M_PI * 0.051));
  CHECK(cfg.seed == 1);
  CHECK(cfg.workers == 1);
  CHECK(cfg.out_dir == "out");

  const auto quench = parse(R"({
    "scenario": "quench",
    "geometry": {"n_sites": 8},
    "quench": {"times_us": [0.0, 0.1]}
  })");
  CHECK(quench.coupling.j_xy == doctest::Approx(2.0 * M_PI * 0.62));
}

TEST_CASE("digest ignores formatting but tracks the physics") {
  const std::string base = R"({
    "scenario": "ground_state_correlations",
    "geometry": {"n_sites": 10},
    "coupling": {"sign": "afm"},
    "seed": 7
  })";
  const std::string shuffled = R"({
    // a comment, plus reordered keys
    "seed": 7,
    "coupling": {"sign": "afm"},
    "geometry": {"n_sites": 10},
    "scenario": "ground_state_correlations"
  })";
  const auto a = harness::config_digest(parse(base));
  const auto b = harness::config_digest(parse(shuffled));
  CHECK(a == b);

  auto seeded = parse(base);
  seeded.seed = 8;
  CHECK(harness::config_digest(seeded) != a);

  auto relocated = parse(base);
  relocated.out_dir = "elsewhere";
  relocated.workers = 4;
  CHECK(harness::config_digest(relocated) == a);
}

TEST_CASE("parse failures are collected, not thrown one at a time") {
  const auto errs = errors_of(R"({
    "scenario": "ground_state_correlations",
    "geometry": {"n_sites": -3},
    "seed": -1,
    "coupling": {"j_rad_per_us": 0.0}
  })");
  CHECK(errs.size() >= 3);

  try {
    (void)parse(R"({"scenario": "ground_state_correlations"})");
    FAIL("missing geometry accepted");
  } catch (const harness::ConfigError& e) {
    CHECK(std::string(e.what()).find("config invalid:") == 0);
    CHECK(std::string(e.what()).find("geometry") != std::string::npos);
  }
}

TEST_CASE("blocks outside their scenario are rejected") {
  const auto errs = errors_of(R"({
    "scenario": "ground_state_correlations",
    "geometry": {"n_sites": 8},
    "quench": {"times_us": [0.0]}
  })");
  REQUIRE(errs.size() == 1);
  CHECK(errs[0].find("quench") != std::string::npos);

  const auto unknown = errors_of(R"({
    "scenario": "ground_state_correlations",
    "geometry": {"n_sites": 8, "n_stes": 9}
  })");
  REQUIRE(!unknown.empty());
  CHECK(unknown[0].find("n_stes") != std::string::npos);

  // odd atom number cannot sit at half filling
  const auto odd = errors_of(R"({
    "scenario": "ground_state_correlations",
    "geometry": {"n_sites": 7}
  })");
  REQUIRE(!odd.empty());
  CHECK(odd[0].find("even") != std::string::npos);
}

TEST_CASE("friedel and ramp parsing guard their invariants") {
  // even active chain rejected
  CHECK(!errors_of(R"({
    "scenario": "friedel",
    "geometry": {"n_sites": 8, "boundary": "periodic"},
    "friedel": {"Mz": 3}
  })").empty());

  // Mz parity must match the odd chain
  const auto parity = errors_of(R"({
    "scenario": "friedel",
    "geometry": {"n_sites": 8, "boundary": "open"},
    "friedel": {"Mz": 2}
  })");
  CHECK(!parity.empty());

  // a negative delta0 magnitude is rejected up front
  const auto neg = errors_of(R"({
    "scenario": "adiabatic_ramp",
    "geometry": {"n_sites": 6},
    "ramp": {"delta0_rad_per_us": -3.0, "T_us": 2.0}
  })");
  CHECK(!neg.empty());

  // an explicit sign key disagreeing with the branch is rejected
  const auto clash = errors_of(R"({
    "scenario": "adiabatic_ramp",
    "geometry": {"n_sites": 6},
    "coupling": {"sign": "afm"},
    "ramp": {"delta0_rad_per_us": 3.0, "T_us": 2.0, "sign": "+"}
  })");
  CHECK(!clash.empty());

  // valid: the afm branch implies the negative shift
  const auto cfg = parse(R"({
    "scenario": "adiabatic_ramp",
    "geometry": {"n_sites": 6},
    "coupling": {"sign": "afm"},
    "ramp": {"delta0_rad_per_us": 3.0, "T_us": 2.0}
  })");
  CHECK(cfg.ramp.schedule.delta0 == doctest::Approx(-3.0));
  CHECK(cfg.ramp.schedule.reverse == false);

  const auto back = parse(R"({
    "scenario": "back_and_forth_ramp",
    "geometry": {"n_sites": 6},
    "ramp": {"delta0_rad_per_us": 3.0, "T_us": 2.0}
  })");
  CHECK(back.ramp.schedule.reverse == true);
}

TEST_CASE("quench parsing enforces the exact-evolution cap") {
  CHECK(!errors_of(R"({
    "scenario": "quench",
    "geometry": {"n_sites": 18},
    "quench": {"times_us": [0.0, 0.1]}
  })").empty());
  CHECK(!errors_of(R"({
    "scenario": "quench",
    "geometry": {"n_sites": 8},
    "quench": {"times_us": [0.2, 0.1]}
  })").empty());
  CHECK(!errors_of(R"({
    "scenario": "quench",
    "geometry": {"n_sites": 8},
    "quench": {"initial": "sideways", "times_us": [0.0, 0.1]}
  })").empty());
}

TEST_CASE("ground-state scenario writes its full bundle") {
  const auto dir = fresh_dir("gs");
  auto cfg = parse(R"({
    "scenario": "ground_state_correlations",
    "geometry": {"n_sites": 8}
  })");
  cfg.out_dir = dir.string();

  const auto man = harness::run_scenario(cfg);
  CHECK((man.exit_code == 0 || man.exit_code == 2));
  CHECK(man.scenario == "ground_state_correlations");
  check_manifest(man, dir);

  for (const char* need : {"gs_cx.csv", "gs_cz.csv", "fit_cx.json", "fit_cz.json",
                           "gs_summary.json", "gs_correlations.svg"})
    CHECK(fs::exists(dir / need));

  const auto cx = io::read_csv(dir / "gs_cx.csv");
  CHECK(cx.columns == std::vector<std::string>{"r_chord", "d_sites", "mean", "stderr", "n_pairs"});
  REQUIRE(cx.rows.size() == 4);  // separations 1..4 on an 8-ring
  CHECK(cx.value(0, cx.column_index("d_sites")) == doctest::Approx(1.0));

  const json fit = read_json(dir / "fit_cx.json");
  CHECK(fit.contains("names"));
  CHECK(fit.contains("values"));
  CHECK(fit.contains("r_c"));
}

TEST_CASE("quench scenario emits the light-cone grid") {
  const auto dir = fresh_dir("quench");
  auto cfg = parse(R"({
    "scenario": "quench",
    "geometry": {"n_sites": 8},
    "coupling": {"sign": "afm"},
    "quench": {"initial": "css_y", "times_us": [0.0, 0.1, 0.2, 0.3, 0.4]}
  })");
  cfg.out_dir = dir.string();

  const auto man = harness::run_scenario(cfg);
  CHECK((man.exit_code == 0 || man.exit_code == 2));
  check_manifest(man, dir);

  const auto grid = io::read_csv(dir / "quench_grid.csv");
  CHECK(grid.columns == std::vector<std::string>{"t_us", "d_sites", "czz", "stderr"});
  CHECK(grid.rows.size() == 5 * 5);  // five times, separations 0..4

  CHECK(fs::exists(dir / "fit_vg.json"));
  CHECK(fs::exists(dir / "quench_varmz.csv"));
  CHECK(fs::exists(dir / "quench_lightcone.svg"));

  // the y-polarized start carries unit on-site variance
  const int c_czz = grid.column_index("czz");
  const int c_d = grid.column_index("d_sites");
  REQUIRE(c_czz >= 0);
  CHECK(grid.value(0, c_d) == doctest::Approx(0.0));
  CHECK(grid.value(0, c_czz) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("dsf scenario keeps the q = 0 column silent") {
  const auto dir = fresh_dir("dsf");
  auto cfg = parse(R"({
    "scenario": "dsf",
    "geometry": {"n_sites": 8},
    "coupling": {"sign": "afm", "preset": "quench"},
    "dsf": {"mz": 0, "n_bins": 32}
  })");
  cfg.out_dir = dir.string();

  const auto man = harness::run_scenario(cfg);
  CHECK((man.exit_code == 0 || man.exit_code == 2));
  check_manifest(man, dir);

  const auto stat = io::read_csv(dir / "dsf_static.csv");
  const int cq = stat.column_index("q_index");
  const int cs = stat.column_index("total_weight");
  REQUIRE(cq >= 0);
  REQUIRE(cs >= 0);
  CHECK(stat.value(0, cq) == doctest::Approx(0.0));
  CHECK(std::abs(stat.value(0, cs)) < 1e-10);

  CHECK(fs::exists(dir / "dsf.csv"));
  CHECK(fs::exists(dir / "dsf_heatmap.svg"));
}

TEST_CASE("thermal scenario sweeps its temperature list") {
  const auto dir = fresh_dir("thermal");
  auto cfg = parse(R"({
    "scenario": "thermal_comparison",
    "geometry": {"n_sites": 6},
    "thermal": {"temperatures_rad_per_us": [1.0, 5.0]}
  })");
  cfg.out_dir = dir.string();

  const auto man = harness::run_scenario(cfg);
  CHECK((man.exit_code == 0 || man.exit_code == 2));
  check_manifest(man, dir);

  const auto prof = io::read_csv(dir / "thermal_profiles.csv");
  const int ct = prof.column_index("temperature_rad_per_us");
  REQUIRE(ct >= 0);
  std::set<std::string> temps;
  for (std::size_t r = 0; r < prof.rows.size(); ++r)
    temps.insert(prof.rows[r][static_cast<std::size_t>(ct)]);
  CHECK(temps.size() == 2);
}

TEST_CASE("ramp scenario reports its checkpoints") {
  const auto dir = fresh_dir("ramp");
  auto cfg = parse(R"({
    "scenario": "adiabatic_ramp",
    "geometry": {"n_sites": 6},
    "coupling": {"preset": "adiabatic"},
    "ramp": {"delta0_rad_per_us": 62.8, "T_us": 2.0, "checkpoints_us": [0.0, 1.0, 2.0]}
  })");
  cfg.out_dir = dir.string();

  const auto man = harness::run_scenario(cfg);
  CHECK((man.exit_code == 0 || man.exit_code == 2));
  check_manifest(man, dir);

  const auto cp = io::read_csv(dir / "ramp_checkpoints.csv");
  REQUIRE(cp.rows.size() == 3);
  const int cm = cp.column_index("mag_addressed");
  REQUIRE(cm >= 0);
  CHECK(cp.value(0, cm) == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(fs::exists(dir / "ramp_magnetization.svg"));
  CHECK(fs::exists(dir / "ramp_summary.json"));
}

TEST_CASE("disorder scenario is worker-invariant") {
  const std::string text = R"({
    "scenario": "disordered_chain",
    "geometry": {"n_sites": 64},
    "disorder": {"weak_probability": 0.06, "n_realizations": 4,
                 "dense_r_max": 10, "n_log_points": 4,
                 "tail_r_min": 4, "tail_r_max": 12},
    "seed": 3
  })";

  auto one = parse(text);
  auto four = parse(text);
  const auto dir1 = fresh_dir("disorder_w1");
  const auto dir4 = fresh_dir("disorder_w4");
  one.out_dir = dir1.string();
  one.workers = 1;
  four.out_dir = dir4.string();
  four.workers = 4;

  CHECK(harness::config_digest(one) == harness::config_digest(four));

  const auto man1 = harness::run_scenario(one);
  const auto man4 = harness::run_scenario(four);
  check_manifest(man1, dir1);
  check_manifest(man4, dir4);

  REQUIRE(man1.files.size() == man4.files.size());
  for (std::size_t i = 0; i < man1.files.size(); ++i) {
    CAPTURE(man1.files[i].name);
    CHECK(man1.files[i].name == man4.files[i].name);
    CHECK(man1.files[i].checksum == man4.files[i].checksum);
  }

  const json tail = read_json(dir1 / "fit_tail.json");
  CHECK(tail.contains("tail"));
  CHECK(tail.contains("full_range"));
  CHECK(tail["full_range"].contains("p_value"));
}

TEST_SUITE_END();
