#pragma once

#include "mcbm/data.hpp"

#include <filesystem>
#include <map>
#include <utility>

namespace mcbm
{

struct PlattParams
{
  double a = 1.0;
  double b = 0.0;
};

/// Post-hoc calibration: Platt scaling sigma(a*z + b) for each independent
/// concept, softmax(z / T) for each mutually exclusive group.
struct CalibrationParams
{
  std::map<int, PlattParams> platt;     // keyed by concept index
  std::map<int, double> temperature;    // keyed by group index

  /// Identity parameters ((1, 0) and T = 1) for every concept/group in `schema`.
  static CalibrationParams identity(const ConceptSchema& schema);
};

struct PlattOptions
{
  bool corrected_targets = true;
  int max_iterations = 100;
  double tolerance = 1e-10;
};

/// Fits (a, b) by Newton's method with backtracking on the (optionally
/// target-corrected) negative log-likelihood. Throws std::invalid_argument
/// for a single-class calibration set.
PlattParams fit_platt(const Vector& logits, const Vector& targets, const PlattOptions& opts = {});

/// Mean NLL of sigma(a*z + b) against `targets` (targets may be soft).
double platt_nll(const Vector& logits, const Vector& targets, PlattParams params);

/// The soft targets Platt's method regresses onto: (N+ + 1)/(N+ + 2) for
/// positives and 1/(N- + 2) for negatives.
Vector platt_corrected_targets(const Vector& targets);

inline constexpr double kMinTemperature = 0.05;
inline constexpr double kMaxTemperature = 20.0;

/// Golden-section search for the NLL-minimising temperature in
/// [kMinTemperature, kMaxTemperature]. `targets` holds the class index per row.
double fit_temperature(const Matrix& group_logits, const Labels& targets, double width = 1e-6);

double temperature_nll(const Matrix& group_logits, const Labels& targets, double temperature);

/// Fits Platt parameters for every independent concept and a temperature for
/// every group from held-out logits and hard concepts.
CalibrationParams fit_calibration(const Matrix& logits, const Matrix& concepts, const ConceptSchema& schema,
                                  const PlattOptions& opts = {});

Vector apply_calibration(const CalibrationParams& cal, const Vector& logits, const ConceptSchema& schema);
Matrix apply_calibration(const CalibrationParams& cal, const Matrix& logits, const ConceptSchema& schema);

/// Equal-width-bin expected calibration error of probabilities against binary outcomes.
double expected_calibration_error(const Vector& probs, const Vector& outcomes, int n_bins = 15);

void save_calibration(const CalibrationParams& cal, const ConceptSchema& schema, const std::filesystem::path& path,
                      const std::string& config_hash = {}, std::uint64_t seed = 0);
CalibrationParams load_calibration(const std::filesystem::path& path, const ConceptSchema& schema);

} // namespace mcbm
