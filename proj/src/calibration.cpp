#include "mcbm/calibration.hpp"
#include "mcbm/activations.hpp"
#include "mcbm/provenance.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace mcbm
{

CalibrationParams CalibrationParams::identity(const ConceptSchema& schema)
{
  CalibrationParams cal;
  for (int j : schema.independents)
    cal.platt[j] = PlattParams{};
  for (std::size_t g = 0; g < schema.groups.size(); ++g)
    cal.temperature[static_cast<int>(g)] = 1.0;
  return cal;
}

// log(1 + exp(f)) without overflow
static double softplus(double f)
{
  return f > 0 ? f + std::log1p(std::exp(-f)) : std::log1p(std::exp(f));
}

double platt_nll(const Vector& logits, const Vector& targets, PlattParams params)
{
  double sum = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double f = params.a * logits(i) + params.b;
    sum += softplus(f) - targets(i) * f;
  }
  return sum / static_cast<double>(logits.size());
}

Vector platt_corrected_targets(const Vector& targets)
{
  const double pos = (targets.array() > 0.5).count();
  const double neg = static_cast<double>(targets.size()) - pos;
  const double hi = (pos + 1.0) / (pos + 2.0);
  const double lo = 1.0 / (neg + 2.0);
  return targets.unaryExpr([&](double t) { return t > 0.5 ? hi : lo; });
}

PlattParams fit_platt(const Vector& logits, const Vector& targets, const PlattOptions& opts)
{
  if (logits.size() != targets.size())
    throw std::invalid_argument("fit_platt: logits and targets differ in length");
  const double pos = (targets.array() > 0.5).count();
  const double neg = static_cast<double>(targets.size()) - pos;
  if (targets.size() < 2 || pos == 0 || neg == 0)
    throw std::invalid_argument("degenerate calibration set");

  const Vector t = opts.corrected_targets ? platt_corrected_targets(targets) : targets;
  PlattParams cur{0.0, std::log((pos + 1.0) / (neg + 1.0))};
  double fval = platt_nll(logits, t, cur);
  const double n = static_cast<double>(logits.size());

  for (int it = 0; it < opts.max_iterations; ++it) {
    double ga = 0, gb = 0, haa = 1e-12, hab = 0, hbb = 1e-12;
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
      const double z = logits(i);
      const double p = sigmoid(cur.a * z + cur.b);
      const double r = p - t(i);
      const double w = p * (1.0 - p);
      ga += r * z;
      gb += r;
      haa += w * z * z;
      hab += w * z;
      hbb += w;
    }
    ga /= n, gb /= n, haa /= n, hab /= n, hbb /= n;
    const double det = haa * hbb - hab * hab;
    if (!(std::abs(det) > 0))
      break;
    const double da = -(hbb * ga - hab * gb) / det;
    const double db = -(haa * gb - hab * ga) / det;
    const double slope = ga * da + gb * db;

    double step = 1.0;
    PlattParams next = cur;
    double nval = fval;
    while (step >= 1e-10) {
      next = {cur.a + step * da, cur.b + step * db};
      nval = platt_nll(logits, t, next);
      if (nval <= fval + 1e-4 * step * slope)
        break;
      step *= 0.5;
    }
    if (step < 1e-10)
      break;
    const double change = std::max(std::abs(next.a - cur.a), std::abs(next.b - cur.b));
    cur = next;
    fval = nval;
    if (change < opts.tolerance)
      break;
  }
  return cur;
}

double temperature_nll(const Matrix& group_logits, const Labels& targets, double temperature)
{
  double sum = 0;
  for (Eigen::Index i = 0; i < group_logits.rows(); ++i) {
    const Vector z = group_logits.row(i).transpose() / temperature;
    sum += log_sum_exp(z) - z(targets(i));
  }
  return sum / static_cast<double>(group_logits.rows());
}

double fit_temperature(const Matrix& group_logits, const Labels& targets, double width)
{
  if (group_logits.rows() != targets.size())
    throw std::invalid_argument("fit_temperature: logits and targets differ in length");
  std::set<int> distinct(targets.data(), targets.data() + targets.size());
  if (targets.size() < 2 || distinct.size() < 2)
    throw std::invalid_argument("degenerate calibration set");

  // NLL is convex in 1/T, hence unimodal in T
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = kMinTemperature, hi = kMaxTemperature;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = temperature_nll(group_logits, targets, x1);
  double f2 = temperature_nll(group_logits, targets, x2);
  while (hi - lo > width) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = temperature_nll(group_logits, targets, x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = temperature_nll(group_logits, targets, x2);
    }
  }
  const double t_fit = 0.5 * (lo + hi);
  // return the best evaluated point; T = 1 wins exact ties
  return temperature_nll(group_logits, targets, t_fit) < temperature_nll(group_logits, targets, 1.0) ? t_fit : 1.0;
}

CalibrationParams fit_calibration(const Matrix& logits, const Matrix& concepts, const ConceptSchema& schema,
                                  const PlattOptions& opts)
{
  CalibrationParams cal;
  for (int j : schema.independents) {
    try {
      cal.platt[j] = fit_platt(logits.col(j), concepts.col(j), opts);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(std::string(e.what()) + " for concept '" +
                                  schema.concepts[static_cast<std::size_t>(j)] + "'");
    }
  }
  for (std::size_t g = 0; g < schema.groups.size(); ++g) {
    const auto& group = schema.groups[g];
    Matrix z(logits.rows(), static_cast<Eigen::Index>(group.size()));
    Labels target(logits.rows());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      target(i) = 0;
      for (std::size_t t = 0; t < group.size(); ++t) {
        z(i, static_cast<Eigen::Index>(t)) = logits(i, group[t]);
        if (concepts(i, group[t]) == 1.0)
          target(i) = static_cast<int>(t);
      }
    }
    try {
      cal.temperature[static_cast<int>(g)] = fit_temperature(z, target);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(std::string(e.what()) + " for group " + std::to_string(g));
    }
  }
  return cal;
}

Vector apply_calibration(const CalibrationParams& cal, const Vector& logits, const ConceptSchema& schema)
{
  if (logits.size() != schema.num_concepts())
    throw std::invalid_argument("apply_calibration: logit row width differs from concept count");
  Vector probs(logits.size());
  for (int j : schema.independents) {
    auto it = cal.platt.find(j);
    const PlattParams p = it == cal.platt.end() ? PlattParams{} : it->second;
    probs(j) = sigmoid(p.a * logits(j) + p.b);
  }
  for (std::size_t g = 0; g < schema.groups.size(); ++g) {
    const auto& group = schema.groups[g];
    auto it = cal.temperature.find(static_cast<int>(g));
    const double temp = it == cal.temperature.end() ? 1.0 : it->second;
    Vector z(static_cast<Eigen::Index>(group.size()));
    for (std::size_t t = 0; t < group.size(); ++t)
      z(static_cast<Eigen::Index>(t)) = logits(group[t]) / temp;
    const Vector p = softmax(z);
    for (std::size_t t = 0; t < group.size(); ++t)
      probs(group[t]) = p(static_cast<Eigen::Index>(t));
  }
  return probs;
}

Matrix apply_calibration(const CalibrationParams& cal, const Matrix& logits, const ConceptSchema& schema)
{
  Matrix probs(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i)
    probs.row(i) = apply_calibration(cal, Vector(logits.row(i).transpose()), schema).transpose();
  return probs;
}

double expected_calibration_error(const Vector& probs, const Vector& outcomes, int n_bins)
{
  if (probs.size() != outcomes.size())
    throw std::invalid_argument("expected_calibration_error: size mismatch");
  if (probs.size() == 0)
    return 0.0;
  Vector count = Vector::Zero(n_bins), conf = Vector::Zero(n_bins), acc = Vector::Zero(n_bins);
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const int b = std::min(static_cast<int>(probs(i) * n_bins), n_bins - 1);
    count(b) += 1;
    conf(b) += probs(i);
    acc(b) += outcomes(i);
  }
  double ece = 0;
  for (int b = 0; b < n_bins; ++b)
    if (count(b) > 0)
      ece += std::abs(acc(b) - conf(b)) / static_cast<double>(probs.size());
  return ece;
}

void save_calibration(const CalibrationParams& cal, const ConceptSchema& schema, const std::filesystem::path& path,
                      const std::string& config_hash, std::uint64_t seed)
{
  nlohmann::json platt = nlohmann::json::object(), temperature = nlohmann::json::object();
  for (const auto& [j, p] : cal.platt)
    platt[schema.concepts[static_cast<std::size_t>(j)]] = {p.a, p.b};
  for (const auto& [g, t] : cal.temperature)
    temperature[std::to_string(g)] = t;
  nlohmann::json j = {{"platt", platt},
                      {"temperature", temperature},
                      {"schema_hash", to_hex(schema.fingerprint())},
                      {"provenance", {{"config_hash", config_hash}, {"seed", seed}}}};
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write calibration file " + path.string());
  out << j.dump(2) << '\n';
}

CalibrationParams load_calibration(const std::filesystem::path& path, const ConceptSchema& schema)
{
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open calibration file " + path.string());
  nlohmann::json j;
  in >> j;
  if (j.contains("schema_hash") && j["schema_hash"] != to_hex(schema.fingerprint()))
    throw std::runtime_error(path.string() + ": calibration was fitted for a different concept schema");
  CalibrationParams cal;
  for (const auto& [name, ab] : j.at("platt").items()) {
    auto it = std::find(schema.concepts.begin(), schema.concepts.end(), name);
    if (it == schema.concepts.end())
      throw std::runtime_error(path.string() + ": unknown concept '" + name + "'");
    cal.platt[static_cast<int>(it - schema.concepts.begin())] = {ab.at(0).get<double>(), ab.at(1).get<double>()};
  }
  for (const auto& [g, t] : j.at("temperature").items()) {
    const double temp = t.get<double>();
    if (!(temp > 0))
      throw std::runtime_error(path.string() + ": temperature must be positive");
    cal.temperature[std::stoi(g)] = temp;
  }
  return cal;
}

} // namespace mcbm
