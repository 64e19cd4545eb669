#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <tuple>
#include <vector>

namespace mcbm
{

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Labels = Eigen::VectorXi;
using IndexList = std::vector<Eigen::Index>;

/// Names and structure of the concept space: which concepts are independent
/// binary attributes and which form mutually exclusive (one-hot) groups.
struct ConceptSchema
{
  std::vector<std::string> concepts;
  std::vector<std::vector<int>> groups;
  std::vector<int> independents;
  std::vector<std::string> classes;

  int num_concepts() const { return static_cast<int>(concepts.size()); }
  int num_classes() const { return static_cast<int>(classes.size()); }

  /// Throws std::invalid_argument when the partition or size rules are broken.
  void validate() const;

  /// Stable 64-bit fingerprint of the schema, used to pair model files with datasets.
  std::uint64_t fingerprint() const;

  bool operator==(const ConceptSchema&) const = default;
};

/// Features, hard concepts and labels. `ids` keeps the original row index so
/// externally computed probability files can be joined after splitting.
struct Dataset
{
  Matrix X;
  Matrix C;
  Labels Y;
  std::vector<std::int64_t> ids;
  ConceptSchema schema;

  Eigen::Index size() const { return Y.size(); }
  Eigen::Index feature_dim() const { return X.cols(); }

  /// Checks the binary/one-hot/finite invariants; throws std::invalid_argument.
  void validate() const;

  Dataset rows(const IndexList& idx) const;
};

struct SynthSpec
{
  int n_samples = 5000;
  int n_factors = 6;
  int bins_per_factor = 3;
  std::vector<int> revealed;
  int feature_dim = 3;
  double feature_noise_sigma = 0.05;
  double concept_flip_prob = 0.0;
  int n_classes = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Lower-bin-on-tie equal-width binning of a value in [0, 1].
int equal_width_bin(double value, int bins);

Dataset generate_synthetic(const SynthSpec& spec);

std::tuple<Dataset, Dataset, Dataset> split_dataset(const Dataset& ds,
                                                    const std::array<double, 3>& fractions,
                                                    std::uint64_t seed);

ConceptSchema load_schema(const std::filesystem::path& path);
void save_schema(const ConceptSchema& schema, const std::filesystem::path& path);

/// Reads a dataset CSV (header x_0..x_{d-1}, concept names, y). Lines starting
/// with '#' are comments. Class labels may be given by name or by index.
Dataset load_dataset(const std::filesystem::path& csv_path, const std::filesystem::path& schema_path);
Dataset load_dataset(const std::filesystem::path& csv_path, const ConceptSchema& schema);

/// `comment`, when non-empty, is written as a leading '#' line.
void write_dataset(const Dataset& ds, const std::filesystem::path& csv_path, const std::string& comment = {});

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

} // namespace mcbm
