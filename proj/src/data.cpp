#include "mcbm/data.hpp"
#include "mcbm/provenance.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace mcbm
{

std::string to_hex(std::uint64_t value)
{
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, value >>= 4)
    out[static_cast<std::size_t>(i)] = digits[value & 0xF];
  return out;
}

std::string format_double(double value)
{
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Schema

void ConceptSchema::validate() const
{
  const int k = num_concepts();
  if (num_classes() < 2)
    throw std::invalid_argument("schema: at least two classes are required");
  std::vector<int> owner(static_cast<std::size_t>(k), 0);
  auto claim = [&](int idx) {
    if (idx < 0 || idx >= k)
      throw std::invalid_argument("schema: concept index " + std::to_string(idx) + " out of range");
    if (owner[static_cast<std::size_t>(idx)]++ != 0)
      throw std::invalid_argument("schema: concept index " + std::to_string(idx) + " assigned twice");
  };
  for (const auto& g : groups) {
    if (g.size() < 2)
      throw std::invalid_argument("schema: mutually exclusive groups need at least two concepts");
    for (int idx : g)
      claim(idx);
  }
  for (int idx : independents)
    claim(idx);
  for (int i = 0; i < k; ++i)
    if (owner[static_cast<std::size_t>(i)] == 0)
      throw std::invalid_argument("schema: concept '" + concepts[static_cast<std::size_t>(i)] +
                                  "' belongs to no group and is not independent");
}

static nlohmann::json schema_to_json(const ConceptSchema& s)
{
  return {{"concepts", s.concepts}, {"groups", s.groups}, {"independents", s.independents}, {"classes", s.classes}};
}

std::uint64_t ConceptSchema::fingerprint() const
{
  return fnv1a64(schema_to_json(*this).dump());
}

ConceptSchema load_schema(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open schema file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("schema file " + path.string() + ": " + e.what());
  }
  ConceptSchema s;
  try {
    s.concepts = j.at("concepts").get<std::vector<std::string>>();
    s.groups = j.value("groups", std::vector<std::vector<int>>{});
    s.independents = j.value("independents", std::vector<int>{});
    s.classes = j.at("classes").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("schema file " + path.string() + ": " + e.what());
  }
  s.validate();
  return s;
}

void save_schema(const ConceptSchema& schema, const std::filesystem::path& path)
{
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write schema file " + path.string());
  out << schema_to_json(schema).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Dataset

void Dataset::validate() const
{
  schema.validate();
  const auto n = size();
  if (X.rows() != n || C.rows() != n || static_cast<Eigen::Index>(ids.size()) != n)
    throw std::invalid_argument("dataset: row counts of X, C, Y and ids differ");
  if (C.cols() != schema.num_concepts())
    throw std::invalid_argument("dataset: concept matrix width does not match schema");
  if (!X.allFinite())
    throw std::invalid_argument("dataset: non-finite feature value");
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < C.cols(); ++j)
      if (C(i, j) != 0.0 && C(i, j) != 1.0)
        throw std::invalid_argument("dataset: non-binary concept value at row " + std::to_string(i));
    for (const auto& g : schema.groups) {
      double sum = 0;
      for (int idx : g)
        sum += C(i, idx);
      if (sum != 1.0)
        throw std::invalid_argument("dataset: one-hot violation at row " + std::to_string(i));
    }
    if (Y(i) < 0 || Y(i) >= schema.num_classes())
      throw std::invalid_argument("dataset: label out of range at row " + std::to_string(i));
  }
}

Dataset Dataset::rows(const IndexList& idx) const
{
  Dataset out;
  out.schema = schema;
  out.X = X(idx, Eigen::all);
  out.C = C(idx, Eigen::all);
  out.Y = Y(idx);
  out.ids.reserve(idx.size());
  for (auto i : idx)
    out.ids.push_back(ids[static_cast<std::size_t>(i)]);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SynthSpec::validate() const
{
  if (n_samples < 0 || n_factors < 1 || feature_dim < 1 || n_classes < 2)
    throw std::invalid_argument("synth: sizes must be positive (n_classes >= 2)");
  if (bins_per_factor < 2)
    throw std::invalid_argument("synth: bins_per_factor must be >= 2");
  if (!(feature_noise_sigma >= 0))
    throw std::invalid_argument("synth: feature_noise_sigma must be >= 0");
  if (!(concept_flip_prob >= 0 && concept_flip_prob < 0.5))
    throw std::invalid_argument("synth: concept_flip_prob must lie in [0, 0.5)");
  if (static_cast<int>(revealed.size()) > n_factors)
    throw std::invalid_argument("synth: more revealed groups than factors");
  std::set<int> seen;
  for (int g : revealed)
    if (g < 0 || g >= n_factors || !seen.insert(g).second)
      throw std::invalid_argument("synth: revealed groups must be distinct factor indices");
  if (std::pow(static_cast<double>(bins_per_factor), n_factors) > 1e7)
    throw std::invalid_argument("synth: label lookup table too large");
}

int equal_width_bin(double value, int bins)
{
  // cut points j/bins; a value sitting on a cut point belongs to the lower bin
  int b = static_cast<int>(std::ceil(value * bins)) - 1;
  return std::clamp(b, 0, bins - 1);
}

Dataset generate_synthetic(const SynthSpec& spec)
{
  spec.validate();
  const int n = spec.n_samples;
  const int G = spec.n_factors;
  const int B = spec.bins_per_factor;
  const int d = spec.feature_dim;

  // independent substreams: changing n leaves A and the table alone, and the
  // flip rate leaves X and Y alone
  std::seed_seq structure_seq{spec.seed, std::uint64_t{0x5eed0001}};
  std::seed_seq sample_seq{spec.seed, std::uint64_t{0x5eed0002}};
  std::mt19937_64 structure_rng(structure_seq);
  std::seed_seq flip_seq{spec.seed, std::uint64_t{0x5eed0003}};
  std::mt19937_64 sample_rng(sample_seq);
  std::mt19937_64 flip_rng(flip_seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Matrix A(d, G);
  for (Eigen::Index i = 0; i < A.size(); ++i)
    A.data()[i] = normal(structure_rng);
  std::size_t cells = 1;
  for (int j = 0; j < G; ++j)
    cells *= static_cast<std::size_t>(B);
  std::uniform_int_distribution<int> pick_class(0, spec.n_classes - 1);
  std::vector<int> table(cells);
  for (auto& c : table)
    c = pick_class(structure_rng);

  Dataset ds;
  auto& schema = ds.schema;
  for (int g : spec.revealed) {
    std::vector<int> group;
    for (int b = 0; b < B; ++b) {
      group.push_back(schema.num_concepts());
      schema.concepts.push_back("f" + std::to_string(g) + "_b" + std::to_string(b));
    }
    schema.groups.push_back(std::move(group));
  }
  for (int c = 0; c < spec.n_classes; ++c)
    schema.classes.push_back("class_" + std::to_string(c));

  const auto k = static_cast<Eigen::Index>(spec.revealed.size()) * B;
  Matrix Z(n, G);
  ds.X.resize(n, d);
  ds.C = Matrix::Zero(n, k);
  ds.Y.resize(n);
  ds.ids.resize(static_cast<std::size_t>(n));
  std::uniform_int_distribution<int> pick_other(0, B - 2);

  std::vector<int> bins(static_cast<std::size_t>(G));
  for (int i = 0; i < n; ++i) {
    std::size_t cell = 0;
    for (int j = 0; j < G; ++j) {
      Z(i, j) = unit(sample_rng);
      bins[static_cast<std::size_t>(j)] = equal_width_bin(Z(i, j), B);
      cell = cell * static_cast<std::size_t>(B) + static_cast<std::size_t>(bins[static_cast<std::size_t>(j)]);
    }
    ds.Y(i) = table[cell];
    for (int r = 0; r < d; ++r)
      ds.X(i, r) = A.row(r).dot(Z.row(i)) + spec.feature_noise_sigma * normal(sample_rng);
    for (std::size_t gi = 0; gi < spec.revealed.size(); ++gi) {
      int active = bins[static_cast<std::size_t>(spec.revealed[gi])];
      if (spec.concept_flip_prob > 0 && unit(flip_rng) < spec.concept_flip_prob) {
        int other = pick_other(flip_rng);
        active = other >= active ? other + 1 : other;
      }
      ds.C(i, static_cast<Eigen::Index>(gi) * B + active) = 1.0;
    }
    ds.ids[static_cast<std::size_t>(i)] = i;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Splitting

std::tuple<Dataset, Dataset, Dataset> split_dataset(const Dataset& ds,
                                                    const std::array<double, 3>& fractions,
                                                    std::uint64_t seed)
{
  double total = 0;
  for (double f : fractions) {
    if (!(f >= 0))
      throw std::invalid_argument("split: fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("split: fractions must sum to 1");

  const auto n = ds.size();
  IndexList order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto cut1 = static_cast<Eigen::Index>(std::llround(fractions[0] * static_cast<double>(n)));
  auto cut2 = static_cast<Eigen::Index>(std::llround((fractions[0] + fractions[1]) * static_cast<double>(n)));
  cut1 = std::clamp<Eigen::Index>(cut1, 0, n);
  cut2 = std::clamp<Eigen::Index>(cut2, cut1, n);
  if (fractions[2] == 0)
    cut2 = n;
  const std::array<Eigen::Index, 4> cuts{0, cut1, cut2, n};
  std::array<IndexList, 3> parts;
  for (std::size_t p = 0; p < 3; ++p) {
    parts[p].assign(order.begin() + cuts[p], order.begin() + cuts[p + 1]);
    if (fractions[p] > 0 && parts[p].empty())
      throw std::invalid_argument("split: partition " + std::to_string(p) + " is empty; dataset too small");
  }
  return {ds.rows(parts[0]), ds.rows(parts[1]), ds.rows(parts[2])};
}

// ---------------------------------------------------------------------------
// CSV

static std::vector<std::string> split_csv_line(const std::string& line)
{
  std::vector<std::string> fields;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ','))
    fields.push_back(cur);
  if (!line.empty() && line.back() == ',')
    fields.emplace_back();
  for (auto& f : fields) {
    while (!f.empty() && (f.back() == '\r' || f.back() == ' '))
      f.pop_back();
    std::size_t s = 0;
    while (s < f.size() && f[s] == ' ')
      ++s;
    f.erase(0, s);
  }
  return fields;
}

static double parse_double(const std::string& text, std::size_t row, const std::string& column)
{
  double value = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw std::runtime_error("row " + std::to_string(row) + ", column '" + column + "': cannot parse '" + text + "'");
  return value;
}

Dataset load_dataset(const std::filesystem::path& csv_path, const std::filesystem::path& schema_path)
{
  return load_dataset(csv_path, load_schema(schema_path));
}

Dataset load_dataset(const std::filesystem::path& csv_path, const ConceptSchema& schema)
{
  schema.validate();
  std::ifstream in(csv_path);
  if (!in)
    throw std::runtime_error("cannot open dataset file " + csv_path.string());

  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#')
      continue;
    header = split_csv_line(line);
    break;
  }
  if (header.empty())
    throw std::runtime_error(csv_path.string() + ": missing header row");

  int d = 0;
  while (d < static_cast<int>(header.size()) && header[static_cast<std::size_t>(d)] == "x_" + std::to_string(d))
    ++d;
  const int k = schema.num_concepts();
  std::vector<std::string> expected;
  for (int i = 0; i < d; ++i)
    expected.push_back("x_" + std::to_string(i));
  expected.insert(expected.end(), schema.concepts.begin(), schema.concepts.end());
  expected.emplace_back("y");
  if (header != expected) {
    std::string msg = csv_path.string() + ": header mismatch;";
    for (const auto& col : expected)
      if (std::find(header.begin(), header.end(), col) == header.end()) {
        msg += " missing column '" + col + "'";
        break;
      }
    for (const auto& col : header)
      if (std::find(expected.begin(), expected.end(), col) == expected.end()) {
        msg += " unexpected column '" + col + "'";
        break;
      }
    throw std::runtime_error(msg);
  }

  std::unordered_map<std::string, int> class_index;
  for (int c = 0; c < schema.num_classes(); ++c)
    class_index.emplace(schema.classes[static_cast<std::size_t>(c)], c);

  std::vector<double> xs, cs;
  std::vector<int> ys;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line == "\r")
      continue;
    auto fields = split_csv_line(line);
    if (fields.size() != expected.size())
      throw std::runtime_error("row " + std::to_string(row) + ": expected " + std::to_string(expected.size()) +
                               " fields, found " + std::to_string(fields.size()));
    for (int j = 0; j < d; ++j)
      xs.push_back(parse_double(fields[static_cast<std::size_t>(j)], row, expected[static_cast<std::size_t>(j)]));
    for (int j = 0; j < k; ++j) {
      const auto& f = fields[static_cast<std::size_t>(d + j)];
      if (f != "0" && f != "1")
        throw std::runtime_error("row " + std::to_string(row) + ": non-binary concept value '" + f + "' in column '" +
                                 schema.concepts[static_cast<std::size_t>(j)] + "'");
      cs.push_back(f == "1" ? 1.0 : 0.0);
    }
    auto it = class_index.find(fields.back());
    if (it == class_index.end())
      throw std::runtime_error("row " + std::to_string(row) + ": unknown class label '" + fields.back() + "'");
    ys.push_back(it->second);
    ++row;
  }

  const auto n = static_cast<Eigen::Index>(row);
  Dataset ds;
  ds.schema = schema;
  ds.X = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(xs.data(), n, d);
  ds.C = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(cs.data(), n, k);
  ds.Y = Eigen::Map<Labels>(ys.data(), n);
  ds.ids.resize(row);
  std::iota(ds.ids.begin(), ds.ids.end(), std::int64_t{0});

  for (Eigen::Index i = 0; i < n; ++i)
    for (const auto& g : schema.groups) {
      double sum = 0;
      for (int idx : g)
        sum += ds.C(i, idx);
      if (sum != 1.0)
        throw std::runtime_error("one-hot violation at row " + std::to_string(i));
    }
  ds.validate();
  return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& csv_path, const std::string& comment)
{
  std::ofstream out(csv_path);
  if (!out)
    throw std::runtime_error("cannot write dataset file " + csv_path.string());
  if (!comment.empty())
    out << "# " << comment << '\n';
  for (Eigen::Index j = 0; j < ds.X.cols(); ++j)
    out << "x_" << j << ',';
  for (const auto& name : ds.schema.concepts)
    out << name << ',';
  out << "y\n";
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index j = 0; j < ds.X.cols(); ++j)
      out << format_double(ds.X(i, j)) << ',';
    for (Eigen::Index j = 0; j < ds.C.cols(); ++j)
      out << (ds.C(i, j) == 1.0 ? '1' : '0') << ',';
    out << ds.schema.classes[static_cast<std::size_t>(ds.Y(i))] << '\n';
  }
}

} // namespace mcbm
