#pragma once

#include "mcbm/calibration.hpp"
#include "mcbm/data.hpp"
#include "mcbm/leakage.hpp"
#include "mcbm/mixed.hpp"
#include "mcbm/predictor.hpp"
#include "mcbm/probability_source.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mcbm
{

enum class CalibrationMethod
{
  platt_temperature,
  none
};

/// Everything a run needs. All randomness derives from `seed` through named
/// substreams (data, split, train).
struct RunConfig
{
  std::optional<SynthSpec> synthetic;
  std::filesystem::path csv_path;
  std::filesystem::path schema_path;
  std::filesystem::path probabilities_path; // optional external probabilities
  bool probabilities_calibrated = false;

  std::array<double, 3> split{0.7, 0.15, 0.15};
  TrainHyper train;
  int msl = 30;
  SourceMode mode = SourceMode::sequential;
  CalibrationMethod calibration = CalibrationMethod::platt_temperature;
  bool platt_corrected_targets = true;
  ConceptMode eval_concepts = ConceptMode::predicted;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "mcbm_out";

  // sweep settings
  std::vector<int> sweep_levels;
  std::vector<std::uint64_t> sweep_seeds{0, 1, 2, 3, 4};
  std::vector<int> sweep_msl{150, 70, 50, 30, 20, 5};

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  std::uint64_t data_seed() const;
  std::uint64_t split_seed() const;
  std::uint64_t train_seed() const;

  /// Canonical JSON (defaults filled in); the provenance hash is taken over its dump.
  nlohmann::json to_json() const;
  std::string hash() const;
  static RunConfig from_json(const nlohmann::json& j);
};

RunConfig load_config(const std::filesystem::path& path);

/// Derives an independent 64-bit seed for a named stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

struct Splits
{
  Dataset train, calib, test;
};

Splits split_for(const Dataset& ds, const RunConfig& cfg);

/// Trains the concept predictor (joint mode: the fine-tuned joint predictor)
/// and wraps it, calibrated on the calibration split when the config asks for it.
ProbabilitySource build_source(const Splits& splits, const RunConfig& cfg);

struct PipelineResult
{
  Splits splits;
  ProbabilitySource source;
  McbmModel model;
  BaselineModel hard;
  BaselineModel independent;
  BaselineModel soft;
  LeakageReport report;
};

/// In-memory end-to-end run: split, train, calibrate, fit, report.
PipelineResult run_pipeline(const Dataset& ds, const RunConfig& cfg);

struct SweepRow
{
  int level = 0;
  std::uint64_t seed = 0;
  double total_bits = 0.0;
  int n_extended_paths = 0;
  double task_accuracy = 0.0;
};

struct SweepSummary
{
  int level = 0;
  double mean_bits = 0.0;
  double std_bits = 0.0;
};

struct CompletenessSweep
{
  std::vector<SweepRow> rows;
  std::vector<SweepSummary> curve;
};

/// For every level L and seed, reveals the first L factor groups, regenerates
/// the data and runs the MCBM-Seq pipeline.
CompletenessSweep completeness_sweep(const SynthSpec& base, const std::vector<int>& levels,
                                     const std::vector<std::uint64_t>& seeds, const RunConfig& cfg);

struct MslSweepRow
{
  int msl = 0;
  int global_nodes = 0;
  int merged_nodes = 0;
  double hard_accuracy = 0.0;
  double mcbm_accuracy = 0.0;
  double total_bits = 0.0;
};

std::vector<MslSweepRow> msl_sweep(const Dataset& ds, const RunConfig& cfg, const std::vector<int>& msl_values);

// Stage commands. Each reads its upstream artifacts from cfg.out_dir and
// writes its outputs there; every output embeds the config hash and seed.
void cmd_synth(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_calibrate(const RunConfig& cfg);
void cmd_fit(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg);
void cmd_inspect(const RunConfig& cfg);
void cmd_sweep(const RunConfig& cfg);

} // namespace mcbm
