#pragma once

#include "mcbm/calibration.hpp"
#include "mcbm/data.hpp"
#include "mcbm/predictor.hpp"

#include <filesystem>
#include <optional>
#include <unordered_map>
#include <variant>

namespace mcbm
{

enum class SourceMode
{
  sequential,
  joint
};

const char* to_string(SourceMode mode);
SourceMode parse_source_mode(const std::string& text);

/// Probabilities read from a CSV keyed by sample id (e.g. produced by an
/// external deep encoder).
struct ProbabilityTable
{
  std::vector<std::int64_t> ids;
  Matrix probs;
  std::unordered_map<std::int64_t, Eigen::Index> row_of;

  ProbabilityTable() = default;
  ProbabilityTable(std::vector<std::int64_t> ids, Matrix probs);
};

/// Where concept probabilities come from, plus the sequential/joint tag.
/// Sequential sources must be calibrated before MCBM fitting; joint sources
/// must not be.
class ProbabilitySource
{
public:
  static ProbabilitySource from_model(MlpParams mlp, ConceptSchema schema, SourceMode mode,
                                      std::optional<CalibrationParams> calibration = std::nullopt);
  /// `externally_calibrated` declares that the file already holds calibrated probabilities.
  static ProbabilitySource from_table(ProbabilityTable table, ConceptSchema schema, SourceMode mode,
                                      bool externally_calibrated = false);

  SourceMode mode() const { return mode_; }
  const ConceptSchema& schema() const { return schema_; }
  bool is_model() const { return std::holds_alternative<MlpParams>(backend_); }
  const MlpParams& mlp() const { return std::get<MlpParams>(backend_); }
  const ProbabilityTable& table() const { return std::get<ProbabilityTable>(backend_); }
  const std::optional<CalibrationParams>& calibration() const { return calibration_; }
  bool calibrated() const { return calibration_.has_value() || externally_calibrated_; }

  /// Returns a copy with `cal` attached. Joint sources refuse calibration.
  ProbabilitySource with_calibration(CalibrationParams cal) const;

  /// Pre-calibration logits (file mode: log-odds / log-probabilities of the stored values).
  Matrix logits(const Dataset& ds) const;
  /// Calibrated probabilities when calibration is attached, raw otherwise.
  Matrix probs(const Dataset& ds) const;

private:
  ProbabilitySource() = default;
  Matrix table_rows(const Dataset& ds) const;

  SourceMode mode_ = SourceMode::sequential;
  ConceptSchema schema_;
  std::variant<MlpParams, ProbabilityTable> backend_;
  std::optional<CalibrationParams> calibration_;
  bool externally_calibrated_ = false;
};

/// Writes `sample_id` plus one column per concept.
void write_probability_table(const std::vector<std::int64_t>& ids, const Matrix& probs, const ConceptSchema& schema,
                             const std::filesystem::path& path, const std::string& comment = {});
ProbabilityTable read_probability_table(const std::filesystem::path& path, const ConceptSchema& schema);

} // namespace mcbm
