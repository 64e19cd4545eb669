#include "mcbm/predictor.hpp"
#include "mcbm/activations.hpp"
#include "mcbm/provenance.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace mcbm
{

std::vector<int> MlpParams::layer_sizes() const
{
  std::vector<int> sizes;
  if (weights.empty())
    return sizes;
  sizes.push_back(static_cast<int>(weights.front().rows()));
  for (const auto& w : weights)
    sizes.push_back(static_cast<int>(w.cols()));
  return sizes;
}

Eigen::Index MlpParams::parameter_count() const
{
  Eigen::Index count = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    count += weights[l].size() + biases[l].size();
  return count;
}

bool MlpParams::all_finite() const
{
  for (std::size_t l = 0; l < weights.size(); ++l)
    if (!weights[l].allFinite() || !biases[l].allFinite())
      return false;
  return true;
}

bool MlpParams::operator==(const MlpParams& other) const
{
  if (activation != other.activation || weights.size() != other.weights.size())
    return false;
  for (std::size_t l = 0; l < weights.size(); ++l)
    if (weights[l].rows() != other.weights[l].rows() || weights[l].cols() != other.weights[l].cols() ||
        weights[l] != other.weights[l] || biases[l] != other.biases[l])
      return false;
  return true;
}

void TrainHyper::validate() const
{
  if (epochs < 1)
    throw std::invalid_argument("train: epochs must be >= 1");
  if (joint_epochs < 1)
    throw std::invalid_argument("train: joint_epochs must be >= 1");
  if (batch_size < 1)
    throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(learning_rate > 0))
    throw std::invalid_argument("train: learning_rate must be > 0");
  if (!(weight_decay >= 0))
    throw std::invalid_argument("train: weight_decay must be >= 0");
  if (!(lambda_c >= 0))
    throw std::invalid_argument("train: lambda_c must be >= 0");
  for (int h : hidden)
    if (h < 1)
      throw std::invalid_argument("train: hidden layer widths must be positive");
}

MlpParams zero_mlp(const std::vector<int>& layer_sizes, Activation activation)
{
  if (layer_sizes.size() < 2)
    throw std::invalid_argument("mlp: need at least input and output sizes");
  MlpParams p;
  p.activation = activation;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    p.weights.push_back(Matrix::Zero(layer_sizes[l], layer_sizes[l + 1]));
    p.biases.push_back(Vector::Zero(layer_sizes[l + 1]));
  }
  return p;
}

MlpParams init_mlp(const std::vector<int>& layer_sizes, Activation activation, std::uint64_t seed)
{
  MlpParams p = zero_mlp(layer_sizes, activation);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& w : p.weights) {
    const double gain = activation == Activation::relu ? 2.0 : 1.0;
    const double scale = std::sqrt(gain / static_cast<double>(std::max<Eigen::Index>(1, w.rows())));
    for (Eigen::Index i = 0; i < w.size(); ++i)
      w.data()[i] = scale * normal(rng);
  }
  return p;
}

namespace
{

struct ForwardCache
{
  std::vector<Matrix> inputs;      // input to each layer
  std::vector<Matrix> preacts;     // hidden pre-activations
  Matrix logits;
};

Matrix activate(const Matrix& a, Activation act)
{
  return act == Activation::relu ? Matrix(a.cwiseMax(0.0)) : Matrix(a.array().tanh().matrix());
}

ForwardCache forward(const MlpParams& params, const Matrix& X)
{
  if (X.cols() != params.input_dim())
    throw std::invalid_argument("mlp: input width " + std::to_string(X.cols()) + " does not match model input " +
                                std::to_string(params.input_dim()));
  ForwardCache cache;
  Matrix h = X;
  const std::size_t L = params.weights.size();
  for (std::size_t l = 0; l < L; ++l) {
    Matrix a = h * params.weights[l];
    a.rowwise() += params.biases[l].transpose();
    cache.inputs.push_back(std::move(h));
    if (l + 1 == L) {
      cache.logits = std::move(a);
      break;
    }
    h = activate(a, params.activation);
    cache.preacts.push_back(std::move(a));
  }
  return cache;
}

double concept_loss_from_probs(const Matrix& P, const Matrix& C, const ConceptSchema& schema)
{
  double sum = 0;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    for (int j : schema.independents) {
      const double p = clamp_prob(P(i, j));
      sum -= C(i, j) * std::log(p) + (1.0 - C(i, j)) * std::log(1.0 - p);
    }
    for (const auto& g : schema.groups)
      for (int j : g)
        if (C(i, j) != 0.0)
          sum -= C(i, j) * std::log(clamp_prob(P(i, j)));
  }
  return sum / static_cast<double>(P.rows());
}

Matrix class_logits(const LinearHead& head, const Matrix& P)
{
  Matrix s = P * head.weight;
  s.rowwise() += head.bias.transpose();
  return s;
}

double label_loss(const Matrix& S, const Labels& Y)
{
  double sum = 0;
  for (Eigen::Index i = 0; i < S.rows(); ++i)
    sum += log_sum_exp(S.row(i).transpose()) - S(i, Y(i));
  return sum / static_cast<double>(S.rows());
}

} // namespace

Matrix predict_logits(const MlpParams& params, const Matrix& X)
{
  return forward(params, X).logits;
}

Matrix predict_probs(const MlpParams& params, const Matrix& X, const ConceptSchema& schema)
{
  return logits_to_probs(predict_logits(params, X), schema);
}

double concept_loss(const MlpParams& params, const Matrix& X, const Matrix& C, const ConceptSchema& schema)
{
  if (X.rows() == 0)
    throw std::invalid_argument("concept_loss: empty batch");
  return concept_loss_from_probs(predict_probs(params, X, schema), C, schema);
}

double concept_loss(const MlpParams& params, const Dataset& batch)
{
  return concept_loss(params, batch.X, batch.C, batch.schema);
}

double joint_loss(const MlpParams& params, const LinearHead& head, const Matrix& X, const Matrix& C, const Labels& Y,
                  const ConceptSchema& schema, double lambda_c)
{
  if (X.rows() == 0)
    throw std::invalid_argument("joint_loss: empty batch");
  const Matrix P = predict_probs(params, X, schema);
  return label_loss(class_logits(head, P), Y) + lambda_c * concept_loss_from_probs(P, C, schema);
}

Vector flatten_parameters(const MlpParams& params, const LinearHead* head)
{
  Eigen::Index total = params.parameter_count();
  if (head)
    total += head->weight.size() + head->bias.size();
  Vector flat(total);
  Eigen::Index pos = 0;
  auto put = [&](const auto& m) {
    flat.segment(pos, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
    pos += m.size();
  };
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    put(params.weights[l]);
    put(params.biases[l]);
  }
  if (head) {
    put(head->weight);
    put(head->bias);
  }
  return flat;
}

void unflatten_parameters(const Vector& flat, MlpParams& params, LinearHead* head)
{
  Eigen::Index pos = 0;
  auto take = [&](auto& m) {
    Eigen::Map<Vector>(m.data(), m.size()) = flat.segment(pos, m.size());
    pos += m.size();
  };
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    take(params.weights[l]);
    take(params.biases[l]);
  }
  if (head) {
    take(head->weight);
    take(head->bias);
  }
  if (pos != flat.size())
    throw std::invalid_argument("unflatten_parameters: length mismatch");
}

LossGradient loss_gradient(const MlpParams& params, const LinearHead* head, const Matrix& X, const Matrix& C,
                           const Labels& Y, const ConceptSchema& schema, double lambda_c)
{
  const auto n = X.rows();
  if (n == 0)
    throw std::invalid_argument("loss_gradient: empty batch");
  const double inv_n = 1.0 / static_cast<double>(n);
  ForwardCache cache = forward(params, X);
  const Matrix P = logits_to_probs(cache.logits, schema);

  // d(concept loss)/d(logits): p - c for both sigmoid-BCE and softmax-CE pairs
  const double concept_weight = head ? lambda_c : 1.0;
  Matrix dZ = (P - C) * (concept_weight * inv_n);
  double loss = concept_weight * concept_loss_from_probs(P, C, schema);

  LinearHead head_grad;
  if (head) {
    const Matrix S = class_logits(*head, P);
    loss += label_loss(S, Y);
    Matrix dS(S.rows(), S.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      dS.row(i) = softmax(S.row(i).transpose()).transpose();
      dS(i, Y(i)) -= 1.0;
    }
    dS *= inv_n;
    head_grad.weight = P.transpose() * dS;
    head_grad.bias = dS.colwise().sum().transpose();
    const Matrix dP = dS * head->weight.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int j : schema.independents)
        dZ(i, j) += dP(i, j) * P(i, j) * (1.0 - P(i, j));
      for (const auto& g : schema.groups) {
        double dot = 0;
        for (int j : g)
          dot += P(i, j) * dP(i, j);
        for (int j : g)
          dZ(i, j) += P(i, j) * (dP(i, j) - dot);
      }
    }
  }

  const std::size_t L = params.weights.size();
  std::vector<Matrix> dW(L);
  std::vector<Vector> db(L);
  Matrix delta = std::move(dZ);
  for (std::size_t l = L; l-- > 0;) {
    dW[l] = cache.inputs[l].transpose() * delta;
    db[l] = delta.colwise().sum().transpose();
    if (l == 0)
      break;
    Matrix dH = delta * params.weights[l].transpose();
    const Matrix& a = cache.preacts[l - 1];
    if (params.activation == Activation::relu)
      delta = dH.cwiseProduct((a.array() > 0.0).cast<double>().matrix());
    else
      delta = dH.cwiseProduct((1.0 - a.array().tanh().square()).matrix());
  }

  MlpParams grad_params;
  grad_params.weights = std::move(dW);
  grad_params.biases = std::move(db);
  return {loss, flatten_parameters(grad_params, head ? &head_grad : nullptr)};
}

double gradient_check(const MlpParams& params, const LinearHead* head, const Matrix& X, const Matrix& C, const Labels& Y,
                      const ConceptSchema& schema, double lambda_c, double step)
{
  const Vector analytic = loss_gradient(params, head, X, C, Y, schema, lambda_c).gradient;
  MlpParams p = params;
  std::optional<LinearHead> h;
  if (head)
    h = *head;
  const Vector base = flatten_parameters(params, head);
  auto objective = [&](const Vector& flat) {
    unflatten_parameters(flat, p, h ? &*h : nullptr);
    return h ? joint_loss(p, *h, X, C, Y, schema, lambda_c) : concept_loss(p, X, C, schema);
  };
  double worst = 0;
  Vector probe = base;
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    probe(i) = base(i) + step;
    const double up = objective(probe);
    probe(i) = base(i) - step;
    const double down = objective(probe);
    probe(i) = base(i);
    const double numeric = (up - down) / (2.0 * step);
    const double err = std::abs(analytic(i) - numeric) / std::max(1.0, std::abs(analytic(i)) + std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

namespace
{

struct Adam
{
  Vector m, v;
  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay;
  long t = 0;

  Adam(Eigen::Index size, double lr_, double wd) : m(Vector::Zero(size)), v(Vector::Zero(size)), lr(lr_), weight_decay(wd)
  {}

  void step(Vector& theta, Vector grad)
  {
    if (weight_decay > 0)
      grad += weight_decay * theta;
    ++t;
    m = beta1 * m + (1 - beta1) * grad;
    v = beta2 * v + (1 - beta2) * grad.cwiseAbs2();
    const double c1 = 1 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1 - std::pow(beta2, static_cast<double>(t));
    theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

void run_adam(MlpParams& params, LinearHead* head, const Dataset& train, const TrainHyper& hyper, int epochs,
              std::uint64_t shuffle_seed)
{
  Vector theta = flatten_parameters(params, head);
  Adam opt(theta.size(), hyper.learning_rate, hyper.weight_decay);
  std::mt19937_64 rng(shuffle_seed);
  IndexList order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto batch = static_cast<std::size_t>(hyper.batch_size);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const IndexList idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                          order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch)));
      const Matrix Xb = train.X(idx, Eigen::all);
      const Matrix Cb = train.C(idx, Eigen::all);
      const Labels Yb = train.Y(idx);
      unflatten_parameters(theta, params, head);
      LossGradient lg = loss_gradient(params, head, Xb, Cb, Yb, train.schema, hyper.lambda_c);
      if (!std::isfinite(lg.loss) || !lg.gradient.allFinite())
        throw std::runtime_error("training diverged at epoch " + std::to_string(epoch));
      epoch_loss += lg.loss * static_cast<double>(idx.size());
      opt.step(theta, std::move(lg.gradient));
    }
    if (!std::isfinite(epoch_loss) || !theta.allFinite())
      throw std::runtime_error("training diverged at epoch " + std::to_string(epoch));
  }
  unflatten_parameters(theta, params, head);
}

std::vector<int> layer_plan(const Dataset& train, const TrainHyper& hyper)
{
  std::vector<int> sizes{static_cast<int>(train.feature_dim())};
  sizes.insert(sizes.end(), hyper.hidden.begin(), hyper.hidden.end());
  sizes.push_back(train.schema.num_concepts());
  return sizes;
}

// named substreams derived from the single run seed
constexpr std::uint64_t kInitStream = 0x1717;
constexpr std::uint64_t kShuffleStream = 0x5151;
constexpr std::uint64_t kJointStream = 0x7373;

std::uint64_t substream(std::uint64_t seed, std::uint64_t stream)
{
  std::seed_seq seq{seed, stream};
  std::uint64_t out;
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  out = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  return out;
}

} // namespace

MlpParams train_independent(const Dataset& train, const TrainHyper& hyper)
{
  hyper.validate();
  if (train.size() == 0)
    throw std::invalid_argument("train_independent: empty training set");
  MlpParams params = init_mlp(layer_plan(train, hyper), hyper.activation, substream(hyper.seed, kInitStream));
  run_adam(params, nullptr, train, hyper, hyper.epochs, substream(hyper.seed, kShuffleStream));
  return params;
}

JointModel train_joint(const Dataset& train, const TrainHyper& hyper)
{
  hyper.validate();
  if (train.size() == 0)
    throw std::invalid_argument("train_joint: empty training set");
  JointModel model;
  model.mlp = hyper.warm_start ? train_independent(train, hyper)
                               : init_mlp(layer_plan(train, hyper), hyper.activation, substream(hyper.seed, kInitStream));
  const int k = train.schema.num_concepts();
  const int r = train.schema.num_classes();
  model.head.weight.resize(k, r);
  model.head.bias = Vector::Zero(r);
  std::mt19937_64 rng(substream(hyper.seed, kJointStream));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(std::max(1, k))));
  for (Eigen::Index i = 0; i < model.head.weight.size(); ++i)
    model.head.weight.data()[i] = normal(rng);
  run_adam(model.mlp, &model.head, train, hyper, hyper.joint_epochs, substream(hyper.seed, kJointStream + 1));
  return model;
}

Vector binarize(const Vector& probs, const ConceptSchema& schema)
{
  Vector out = Vector::Zero(probs.size());
  for (int j : schema.independents)
    out(j) = probs(j) > 0.5 ? 1.0 : 0.0;
  for (const auto& g : schema.groups) {
    int best = g.front();
    for (int j : g)
      if (probs(j) > probs(best))
        best = j;
    out(best) = 1.0;
  }
  return out;
}

Matrix binarize(const Matrix& probs, const ConceptSchema& schema)
{
  Matrix out(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    out.row(i) = binarize(Vector(probs.row(i).transpose()), schema).transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

static nlohmann::json row_major(const Matrix& m)
{
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      flat.push_back(m(i, j));
  return flat;
}

static Matrix from_row_major(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols)
{
  const auto flat = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols)
    throw std::runtime_error("model file: weight array has wrong length");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(i, c) = flat[static_cast<std::size_t>(i * cols + c)];
  return m;
}

void save_mlp(const MlpParams& params, const ConceptSchema& schema, const std::filesystem::path& path,
              const LinearHead* head, const std::string& config_hash, std::uint64_t seed)
{
  nlohmann::json j;
  j["layer_sizes"] = params.layer_sizes();
  j["activation"] = params.activation == Activation::relu ? "relu" : "tanh";
  j["weights"] = nlohmann::json::array();
  j["biases"] = nlohmann::json::array();
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    j["weights"].push_back(row_major(params.weights[l]));
    j["biases"].push_back(std::vector<double>(params.biases[l].data(), params.biases[l].data() + params.biases[l].size()));
  }
  if (head)
    j["head"] = {{"weight", row_major(head->weight)},
                 {"bias", std::vector<double>(head->bias.data(), head->bias.data() + head->bias.size())}};
  j["schema_hash"] = to_hex(schema.fingerprint());
  j["provenance"] = {{"config_hash", config_hash}, {"seed", seed}};
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write model file " + path.string());
  out << j.dump(2) << '\n';
}

LoadedModel load_mlp(const std::filesystem::path& path, const ConceptSchema& schema)
{
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open model file " + path.string());
  nlohmann::json j;
  in >> j;
  if (j.at("schema_hash") != to_hex(schema.fingerprint()))
    throw std::runtime_error(path.string() + ": model was trained for a different concept schema");
  const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
  LoadedModel out;
  out.mlp = zero_mlp(sizes, j.at("activation") == "tanh" ? Activation::tanh : Activation::relu);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    out.mlp.weights[l] = from_row_major(j.at("weights").at(l), sizes[l], sizes[l + 1]);
    const auto b = j.at("biases").at(l).get<std::vector<double>>();
    out.mlp.biases[l] = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
  }
  if (out.mlp.output_dim() != schema.num_concepts())
    throw std::runtime_error(path.string() + ": output width does not match concept count");
  if (j.contains("head")) {
    LinearHead head;
    head.weight = from_row_major(j["head"].at("weight"), schema.num_concepts(), schema.num_classes());
    const auto b = j["head"].at("bias").get<std::vector<double>>();
    head.bias = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
    out.head = std::move(head);
  }
  if (!out.mlp.all_finite())
    throw std::runtime_error(path.string() + ": non-finite parameters");
  return out;
}

} // namespace mcbm
