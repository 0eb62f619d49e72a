// Experiment harness: config files in, result directories out. A config
// selects one scenario, the harness runs it deterministically for the given
// seed, writes CSV tables, JSON fit summaries, and SVG quick-looks, and
// finishes with a manifest listing every emitted file with its checksum.
//
// Reproducibility contract: the manifest's config digest covers the physics
// content plus the seed; output location and worker count are excluded, and
// results are bit-identical across worker counts.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tll/freefermion.hpp"
#include "tll/lattice.hpp"
#include "tll/protocol.hpp"

namespace tll::harness {

enum class Scenario {
  GroundStateCorrelations,
  AdiabaticRamp,
  BackAndForthRamp,
  Friedel,
  Quench,
  Dsf,
  DisorderedChain,
  ThermalComparison,
};

Scenario scenario_from_name(const std::string& name);  // throws on unknown names
std::string scenario_name(Scenario s);

// Parse failure carrying every problem found, not only the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

struct RampBlock {
  protocol::RampSchedule schedule;  // addressed filled at run time
  bool alternating = true;          // otherwise explicit_sites is used
  std::vector<int> explicit_sites;
  int n_trajectories = 1;
};

struct QuenchBlock {
  protocol::QuenchInitial initial = protocol::QuenchInitial::CssY;
  std::vector<double> times;
};

struct FriedelBlock {
  int mz = 1;
  protocol::FriedelMode mode = protocol::FriedelMode::DirectGroundState;
};

struct DsfBlock {
  int mz = 0;
  double eta = 0.0;       // rad/us Lorentzian width; 0 = exact bin deposit
  int n_bins = 256;
  double omega_max = -1;  // rad/us; negative = auto
};

struct ThermalBlock {
  std::vector<double> temperatures;  // rad/us, ascending
  double transverse_field = 0.0;     // rad/us
  double hole_density = 0.0;
  int n_realizations = 1;
};

struct DisorderBlock {
  freefermion::DisorderOptions options;  // n_sites/seed filled from the config
  double tail_r_min = 10.0;              // power-law window for the tail fit
  double tail_r_max = 30.0;
};

struct ExperimentConfig {
  Scenario scenario = Scenario::GroundStateCorrelations;
  lattice::ChainGeometry geometry;
  lattice::CouplingModel coupling;
  RampBlock ramp;
  protocol::NoiseModel noise;
  QuenchBlock quench;
  FriedelBlock friedel;
  DsfBlock dsf;
  ThermalBlock thermal;
  DisorderBlock disorder;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string out_dir = "out";
};

// JSON (comments allowed) with unit-suffixed keys; unknown keys, missing
// required keys, and inconsistent blocks are all reported together.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::filesystem::path& path);

// Stable hash of the physics content plus seed (out_dir and workers excluded).
std::string config_digest(const ExperimentConfig& config);

struct ManifestEntry {
  std::string name;      // relative to out_dir
  std::string checksum;  // fnv1a64 hex
  std::uint64_t bytes = 0;
};

struct ResultManifest {
  std::string tool_version;
  std::string scenario;
  std::string config_digest;
  std::uint64_t seed = 0;
  int workers = 1;
  double wall_seconds = 0;
  int exit_code = 0;  // 0 clean, 2 physics warnings (carried in `warnings`)
  std::vector<std::string> warnings;
  std::vector<ManifestEntry> files;
};

// Runs one scenario, emits its files under config.out_dir, and writes
// manifest.json last. Throws on hard errors (exit code 1 at the CLI).
ResultManifest run_scenario(const ExperimentConfig& config);

// Slot-indexed pool: task i writes only to slot i, so results do not depend
// on the worker count or on scheduling.
class TaskPool {
 public:
  explicit TaskPool(int workers);
  void run(int n_tasks, const std::function<void(int)>& task);

 private:
  int workers_;
};

}  // namespace tll::harness
