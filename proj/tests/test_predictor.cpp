#include "support.hpp"

#include "mcbm/activations.hpp"
#include "mcbm/predictor.hpp"
#include "mcbm/probability_source.hpp"

#include <cmath>

using namespace mcbm;
using testing::make_schema;

namespace
{

Dataset toy_separable(int n, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  Dataset ds;
  ds.schema = make_schema(1, {}, 2);
  ds.X.resize(n, 1);
  ds.C.resize(n, 1);
  ds.Y.resize(n);
  for (int i = 0; i < n; ++i) {
    const int c = static_cast<int>(rng() % 2);
    ds.C(i, 0) = c;
    ds.X(i, 0) = c + noise(rng);
    ds.Y(i) = c;
    ds.ids.push_back(i);
  }
  return ds;
}

// Plain logistic regression by Newton's method; reference accuracy for the toy.
double logistic_regression_accuracy(const Matrix& X, const Vector& t)
{
  const Eigen::Index n = X.rows();
  Matrix A(n, X.cols() + 1);
  A << X, Vector::Ones(n);
  Vector w = Vector::Zero(A.cols());
  for (int it = 0; it < 25; ++it) {
    const Vector p2 = (1.0 / (1.0 + (-(A * w).array()).exp())).matrix();
    const Vector g = A.transpose() * (p2 - t) + 1e-6 * w;
    const Vector s = (p2.array() * (1 - p2.array())).matrix();
    const Matrix H = A.transpose() * s.asDiagonal() * A + 1e-6 * Matrix::Identity(A.cols(), A.cols());
    w -= H.ldlt().solve(g);
  }
  const Vector z = A * w;
  Eigen::Index ok = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    ok += (z(i) > 0) == (t(i) > 0.5);
  return static_cast<double>(ok) / static_cast<double>(n);
}

double binary_accuracy(const Matrix& probs, const Matrix& C, const ConceptSchema& s)
{
  const Matrix b = binarize(probs, s);
  return static_cast<double>((b.array() == C.array()).count()) / static_cast<double>(b.size());
}

Dataset small_synthetic(int n, std::uint64_t seed)
{
  SynthSpec spec;
  spec.n_samples = n;
  spec.n_factors = 3;
  spec.feature_dim = 3;
  spec.revealed = {0, 1, 2};
  spec.seed = seed;
  return generate_synthetic(spec);
}

// Label-only objective evaluated directly: mean -log softmax(P W + b)[y].
double label_only_loss(const MlpParams& p, const LinearHead& h, const Matrix& X, const Labels& Y, const ConceptSchema& s)
{
  const Matrix P = predict_probs(p, X, s);
  double total = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Vector z = (P.row(i) * h.weight).transpose() + h.bias;
    const double m = z.maxCoeff();
    total += -(z(Y(i)) - m - std::log((z.array() - m).exp().sum()));
  }
  return total / static_cast<double>(X.rows());
}

} // namespace

TEST_SUITE("concept_predictor")
{
  TEST_CASE("zero weights give symmetric losses")
  {
    const ConceptSchema one = make_schema(1, {}, 2);
    MlpParams p = zero_mlp({2, 4, 1}, Activation::relu);
    Matrix X = Matrix::Random(3, 2);
    Matrix C = Matrix::Ones(3, 1);
    CHECK(concept_loss(p, X, C, one) == doctest::Approx(0.693147).epsilon(1e-6));

    const ConceptSchema grp = make_schema(0, {3}, 2);
    MlpParams q = zero_mlp({2, 4, 3}, Activation::tanh);
    Matrix G = Matrix::Zero(3, 3);
    G(0, 0) = G(1, 2) = G(2, 1) = 1;
    CHECK(concept_loss(q, X, G, grp) == doctest::Approx(1.098612).epsilon(1e-6));
  }

  TEST_CASE("hand-evaluated two-sample loss")
  {
    const ConceptSchema s = make_schema(1, {}, 2);
    MlpParams p = zero_mlp({2, 1}, Activation::relu);
    p.weights[0] << 0.5, -1.0;
    p.biases[0] << 0.25;
    Matrix X(2, 2);
    X << 1, 2, -1, 0.5;
    Matrix C(2, 1);
    C << 1, 0;
    // logits -1.25 and -0.75
    const double expected = 0.5 * (std::log1p(std::exp(1.25)) + std::log1p(std::exp(-0.75)));
    CHECK(concept_loss(p, X, C, s) == doctest::Approx(expected).epsilon(1e-12));
  }

  TEST_CASE("empty batch is rejected")
  {
    const ConceptSchema s = make_schema(1, {}, 2);
    MlpParams p = zero_mlp({2, 1}, Activation::relu);
    CHECK_THROWS(concept_loss(p, Matrix(0, 2), Matrix(0, 1), s));
  }

  TEST_CASE("zero-weight probabilities and group normalisation")
  {
    const ConceptSchema s = make_schema(2, {3, 2}, 2);
    MlpParams z = zero_mlp({4, 8, 7}, Activation::relu);
    const Matrix P = predict_probs(z, Matrix::Random(5, 4), s);
    for (Eigen::Index i = 0; i < 5; ++i) {
      CHECK(P(i, 0) == 0.5);
      CHECK(P(i, 1) == 0.5);
      CHECK(P(i, 2) == doctest::Approx(1.0 / 3));
      CHECK(P(i, 5) == 0.5);
    }

    MlpParams r = init_mlp({4, 8, 7}, Activation::tanh, 5);
    for (auto& W : r.weights)
      W *= 4.0;
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd(0, 3);
    Matrix X(1000, 4);
    for (Eigen::Index i = 0; i < X.size(); ++i)
      X.data()[i] = nd(rng);
    const Matrix Q = predict_probs(r, X, s);
    CHECK((Q.array() >= 0).all());
    CHECK((Q.array() <= 1).all());
    for (const auto& g : s.groups) {
      Vector sum = Vector::Zero(X.rows());
      for (int idx : g)
        sum += Q.col(idx);
      CHECK((sum.array() - 1).abs().maxCoeff() <= 1e-9);
    }
  }

  TEST_CASE("binarize conventions")
  {
    const ConceptSchema s = make_schema(1, {3, 2}, 2);
    Vector p(6);
    p << 0.5, 0.2, 0.5, 0.3, 0.5, 0.5;
    Vector b = binarize(p, s);
    CHECK(b(0) == 0);
    CHECK(b.segment(1, 3) == Eigen::Vector3d(0, 1, 0));
    CHECK(b.segment(4, 2) == Eigen::Vector2d(1, 0));
    p(0) = 0.5000001;
    CHECK(binarize(p, s)(0) == 1);
  }

  TEST_CASE("gradient check over random configurations")
  {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      const ConceptSchema s = make_schema(1 + static_cast<int>(rng() % 2), {2 + static_cast<int>(rng() % 2)}, 3);
      const int d = 2 + static_cast<int>(rng() % 3);
      const Activation act = trial % 2 ? Activation::tanh : Activation::relu;
      MlpParams p = init_mlp({d, 5, s.num_concepts()}, act, rng());
      for (auto& b : p.biases)
        b.setRandom();
      const Matrix X = Matrix::Random(6, d);
      const Matrix C = testing::random_concepts(s, 6, rng);
      Labels Y(6);
      for (int i = 0; i < 6; ++i)
        Y(i) = static_cast<int>(rng() % 3);
      CHECK(gradient_check(p, nullptr, X, C, Y, s, 1.0) <= 1e-4);
      LinearHead h{Matrix::Random(s.num_concepts(), 3), Vector::Random(3)};
      CHECK(gradient_check(p, &h, X, C, Y, s, 1.0) <= 1e-4);
    }
  }

  TEST_CASE("constant-loss region has a vanishing gradient")
  {
    const ConceptSchema s = make_schema(0, {2}, 2);
    MlpParams p = zero_mlp({3, 4, 2}, Activation::relu);
    Matrix X = Matrix::Zero(4, 3);
    Matrix C(4, 2);
    C << 1, 0, 0, 1, 1, 0, 0, 1;
    const LossGradient g = loss_gradient(p, nullptr, X, C, Labels::Zero(4), s, 1.0);
    CHECK(g.gradient.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(gradient_check(p, nullptr, X, C, Labels::Zero(4), s, 1.0) <= 1e-9);
  }

  TEST_CASE("with lambda zero the gradient is that of the label loss alone")
  {
    std::mt19937_64 rng(4);
    const ConceptSchema s = make_schema(2, {3}, 3);
    MlpParams p = init_mlp({3, 6, 5}, Activation::tanh, 8);
    LinearHead h{Matrix::Random(5, 3), Vector::Random(3)};
    const Matrix X = Matrix::Random(7, 3);
    const Matrix C = testing::random_concepts(s, 7, rng);
    Labels Y(7);
    Y << 0, 1, 2, 2, 1, 0, 1;
    const LossGradient g = loss_gradient(p, &h, X, C, Y, s, 0.0);
    CHECK(g.loss == doctest::Approx(label_only_loss(p, h, X, Y, s)).epsilon(1e-12));

    const Vector flat = flatten_parameters(p, &h);
    const double step = 1e-5;
    double worst = 0;
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
      Vector up = flat, dn = flat;
      up(i) += step;
      dn(i) -= step;
      MlpParams pu = p, pd = p;
      LinearHead hu = h, hd = h;
      unflatten_parameters(up, pu, &hu);
      unflatten_parameters(dn, pd, &hd);
      const double num = (label_only_loss(pu, hu, X, Y, s) - label_only_loss(pd, hd, X, Y, s)) / (2 * step);
      worst = std::max(worst, std::abs(num - g.gradient(i)) / std::max(1.0, std::abs(num) + std::abs(g.gradient(i))));
    }
    CHECK(worst <= 1e-6);
  }

  TEST_CASE("separable toy is learned perfectly, like logistic regression")
  {
    const Dataset ds = toy_separable(200, 3);
    TrainHyper h;
    h.epochs = 40;
    h.hidden = {8};
    h.seed = 1;
    const MlpParams p = train_independent(ds, h);
    const double lr = logistic_regression_accuracy(ds.X, ds.C.col(0));
    CHECK(lr == 1.0);
    CHECK(binary_accuracy(predict_probs(p, ds.X, ds.schema), ds.C, ds.schema) == lr);
  }

  TEST_CASE("training is deterministic and validates its hyper-parameters")
  {
    const Dataset ds = small_synthetic(300, 2);
    TrainHyper h;
    h.epochs = 3;
    h.seed = 42;
    CHECK(train_independent(ds, h) == train_independent(ds, h));
    const JointModel a = train_joint(ds, h), b = train_joint(ds, h);
    CHECK(a.mlp == b.mlp);
    CHECK(a.head.weight == b.head.weight);
    h.epochs = 0;
    CHECK_THROWS(train_independent(ds, h));
    h.epochs = 1;
    h.learning_rate = 0;
    CHECK_THROWS(h.validate());
    h.learning_rate = 1e-2;
    h.lambda_c = -1;
    CHECK_THROWS(h.validate());
  }

  TEST_CASE("divergence is reported with its epoch")
  {
    const Dataset ds = small_synthetic(200, 1);
    TrainHyper h;
    h.epochs = 5;
    h.learning_rate = 1e300;
    try {
      train_independent(ds, h);
      FAIL("expected divergence");
    } catch (const std::exception& e) {
      CHECK(std::string(e.what()).find("training diverged at epoch") != std::string::npos);
    }
  }

  TEST_CASE("joint training: lambda extremes")
  {
    const Dataset ds = small_synthetic(1500, 6);
    TrainHyper h;
    h.epochs = 20;
    h.joint_epochs = 20;
    h.seed = 3;
    const double acc_ind = binary_accuracy(predict_probs(train_independent(ds, h), ds.X, ds.schema), ds.C, ds.schema);
    h.lambda_c = 1e6;
    const JointModel big = train_joint(ds, h);
    const double acc_big = binary_accuracy(predict_probs(big.mlp, ds.X, ds.schema), ds.C, ds.schema);
    CHECK(std::abs(acc_big - acc_ind) <= 0.005);

    double previous = std::numeric_limits<double>::infinity();
    for (double lambda : {0.1, 1.0, 100.0}) {
      h.lambda_c = lambda;
      const double loss = concept_loss(train_joint(ds, h).mlp, ds);
      CHECK(loss <= previous);
      previous = loss;
    }
  }

  TEST_CASE("model file round trip")
  {
    testing::ScratchDir dir("pred");
    const ConceptSchema s = make_schema(1, {3}, 2);
    const MlpParams p = init_mlp({3, 5, 4}, Activation::tanh, 9);
    LinearHead h{Matrix::Random(4, 2), Vector::Random(2)};
    save_mlp(p, s, dir / "m.json", &h, "abc", 7);
    const LoadedModel back = load_mlp(dir / "m.json", s);
    CHECK(back.mlp == p);
    REQUIRE(back.head);
    CHECK(back.head->weight == h.weight);
    CHECK(back.head->bias == h.bias);
    ConceptSchema other = s;
    other.concepts[0] = "renamed";
    CHECK_THROWS(load_mlp(dir / "m.json", other));
  }

  TEST_CASE("file-backed probabilities round trip and report missing ids")
  {
    testing::ScratchDir dir("pred");
    const Dataset ds = small_synthetic(60, 8);
    const MlpParams p = init_mlp({3, 6, ds.schema.num_concepts()}, Activation::relu, 1);
    const Matrix P = predict_probs(p, ds.X, ds.schema);
    write_probability_table(ds.ids, P, ds.schema, dir / "p.csv");
    const auto src = ProbabilitySource::from_table(read_probability_table(dir / "p.csv", ds.schema), ds.schema,
                                                   SourceMode::sequential, true);
    CHECK((src.probs(ds) - P).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(src.calibrated());

    Dataset shifted = ds;
    shifted.ids[5] = 999;
    try {
      src.probs(shifted);
      FAIL("expected a missing-id error");
    } catch (const std::out_of_range& e) {
      CHECK(std::string(e.what()).find("no row for sample id") != std::string::npos);
    }
  }

  TEST_CASE("logits and probabilities are inverse maps")
  {
    const ConceptSchema s = make_schema(2, {3}, 2);
    Matrix P(2, 5);
    P << 0.2, 0.9, 0.1, 0.6, 0.3, 0.5, 0.01, 1.0 / 3, 1.0 / 3, 1.0 / 3;
    const Matrix back = logits_to_probs(probs_to_logits(P, s), s);
    CHECK((back - P).cwiseAbs().maxCoeff() <= 1e-12);
  }
}
