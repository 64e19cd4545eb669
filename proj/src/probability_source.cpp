#include "mcbm/probability_source.hpp"
#include "mcbm/activations.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mcbm
{

const char* to_string(SourceMode mode)
{
  return mode == SourceMode::joint ? "joint" : "seq";
}

SourceMode parse_source_mode(const std::string& text)
{
  if (text == "seq" || text == "sequential")
    return SourceMode::sequential;
  if (text == "joint")
    return SourceMode::joint;
  throw std::invalid_argument("unknown mode '" + text + "' (expected seq or joint)");
}

ProbabilityTable::ProbabilityTable(std::vector<std::int64_t> ids_, Matrix probs_) : ids(std::move(ids_)), probs(std::move(probs_))
{
  if (static_cast<Eigen::Index>(ids.size()) != probs.rows())
    throw std::invalid_argument("probability table: id count differs from row count");
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (!row_of.emplace(ids[i], static_cast<Eigen::Index>(i)).second)
      throw std::invalid_argument("probability table: duplicate sample id " + std::to_string(ids[i]));
}

static void check_probabilities(const Matrix& probs, const ConceptSchema& schema)
{
  if (probs.cols() != schema.num_concepts())
    throw std::invalid_argument("probabilities: width does not match concept count");
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (Eigen::Index j = 0; j < probs.cols(); ++j)
      if (!(probs(i, j) >= 0.0 && probs(i, j) <= 1.0))
        throw std::invalid_argument("probabilities: value outside [0, 1] at row " + std::to_string(i));
    for (const auto& g : schema.groups) {
      double sum = 0;
      for (int j : g)
        sum += probs(i, j);
      if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("probabilities: group does not sum to 1 at row " + std::to_string(i));
    }
  }
}

ProbabilitySource ProbabilitySource::from_model(MlpParams mlp, ConceptSchema schema, SourceMode mode,
                                                std::optional<CalibrationParams> calibration)
{
  if (mlp.output_dim() != schema.num_concepts())
    throw std::invalid_argument("probability source: model output width does not match concept count");
  ProbabilitySource src;
  src.mode_ = mode;
  src.schema_ = std::move(schema);
  src.backend_ = std::move(mlp);
  if (calibration)
    src = src.with_calibration(std::move(*calibration));
  return src;
}

ProbabilitySource ProbabilitySource::from_table(ProbabilityTable table, ConceptSchema schema, SourceMode mode,
                                                bool externally_calibrated)
{
  check_probabilities(table.probs, schema);
  if (mode == SourceMode::joint && externally_calibrated)
    throw std::invalid_argument("probability source: joint sources are never calibrated");
  ProbabilitySource src;
  src.mode_ = mode;
  src.schema_ = std::move(schema);
  src.backend_ = std::move(table);
  src.externally_calibrated_ = externally_calibrated;
  return src;
}

ProbabilitySource ProbabilitySource::with_calibration(CalibrationParams cal) const
{
  if (mode_ == SourceMode::joint)
    throw std::invalid_argument("probability source: joint-mode probabilities must not be calibrated");
  for (const auto& [g, t] : cal.temperature)
    if (!(t > 0))
      throw std::invalid_argument("probability source: temperatures must be positive");
  ProbabilitySource out = *this;
  out.calibration_ = std::move(cal);
  return out;
}

Matrix ProbabilitySource::table_rows(const Dataset& ds) const
{
  const auto& t = table();
  Matrix out(ds.size(), t.probs.cols());
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    auto it = t.row_of.find(ds.ids[static_cast<std::size_t>(i)]);
    if (it == t.row_of.end())
      throw std::out_of_range("probability file has no row for sample id " + std::to_string(ds.ids[static_cast<std::size_t>(i)]));
    out.row(i) = t.probs.row(it->second);
  }
  return out;
}

Matrix ProbabilitySource::logits(const Dataset& ds) const
{
  if (is_model())
    return predict_logits(mlp(), ds.X);
  return probs_to_logits(table_rows(ds), schema_);
}

Matrix ProbabilitySource::probs(const Dataset& ds) const
{
  if (calibration_)
    return apply_calibration(*calibration_, logits(ds), schema_);
  if (is_model())
    return logits_to_probs(predict_logits(mlp(), ds.X), schema_);
  return table_rows(ds);
}

void write_probability_table(const std::vector<std::int64_t>& ids, const Matrix& probs, const ConceptSchema& schema,
                             const std::filesystem::path& path, const std::string& comment)
{
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write probability file " + path.string());
  if (!comment.empty())
    out << "# " << comment << '\n';
  out << "sample_id";
  for (const auto& c : schema.concepts)
    out << ',' << c;
  out << '\n';
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    out << ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < probs.cols(); ++j)
      out << ',' << format_double(probs(i, j));
    out << '\n';
  }
}

ProbabilityTable read_probability_table(const std::filesystem::path& path, const ConceptSchema& schema)
{
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open probability file " + path.string());
  std::string line;
  bool header_seen = false;
  std::vector<std::int64_t> ids;
  std::vector<double> values;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty() || line[0] == '#')
      continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ','))
      fields.push_back(f);
    if (!header_seen) {
      std::vector<std::string> expected{"sample_id"};
      expected.insert(expected.end(), schema.concepts.begin(), schema.concepts.end());
      if (fields != expected)
        throw std::runtime_error(path.string() + ": header must be sample_id followed by the schema's concept names");
      header_seen = true;
      continue;
    }
    if (static_cast<int>(fields.size()) != schema.num_concepts() + 1)
      throw std::runtime_error(path.string() + ": wrong field count at row " + std::to_string(row));
    std::int64_t id = 0;
    auto res = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), id);
    if (res.ec != std::errc{})
      throw std::runtime_error(path.string() + ": bad sample id at row " + std::to_string(row));
    ids.push_back(id);
    for (std::size_t j = 1; j < fields.size(); ++j) {
      double v = 0;
      auto r = std::from_chars(fields[j].data(), fields[j].data() + fields[j].size(), v);
      if (r.ec != std::errc{} || r.ptr != fields[j].data() + fields[j].size())
        throw std::runtime_error(path.string() + ": bad probability at row " + std::to_string(row));
      values.push_back(v);
    }
    ++row;
  }
  if (!header_seen)
    throw std::runtime_error(path.string() + ": missing header");
  Matrix probs = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
    values.data(), static_cast<Eigen::Index>(row), schema.num_concepts());
  check_probabilities(probs, schema);
  return ProbabilityTable(std::move(ids), std::move(probs));
}

} // namespace mcbm
