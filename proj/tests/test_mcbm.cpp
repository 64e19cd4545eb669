#include "fixtures.hpp"

#include "mcbm/calibration.hpp"
#include "mcbm/mixed.hpp"
#include "mcbm/predictor.hpp"

using namespace mcbm;
using testing::LeakyProblem;
using testing::SoftLeafFixture;

namespace
{

double train_accuracy(const Labels& a, const Labels& b)
{
  return static_cast<double>((a.array() == b.array()).count()) / static_cast<double>(a.size());
}

Matrix random_probs(const ConceptSchema& s, Eigen::Index n, std::mt19937_64& rng)
{
  std::uniform_real_distribution<double> u(0, 1);
  Matrix P(n, s.num_concepts());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j : s.independents)
      P(i, j) = u(rng);
    for (const auto& g : s.groups) {
      double sum = 0;
      for (int idx : g)
        sum += P(i, idx) = u(rng) + 1e-3;
      for (int idx : g)
        P(i, idx) /= sum;
    }
  }
  return P;
}

} // namespace

TEST_SUITE("mcbm")
{
  TEST_CASE("mixed matrix substitutes soft values on the path's concepts only")
  {
    Matrix c(1, 3), p(1, 3);
    c << 1, 0, 1;
    p << 0.9, 0.2, 0.7;
    DecisionPath path;
    path.features = {0};
    const MixedConceptMatrix m = build_mixed_matrix(path, c, p);
    CHECK(m.values == (Matrix(1, 3) << 0.9, 0, 1).finished());
    CHECK(m.kinds == std::vector<FeatureKind>{FeatureKind::soft, FeatureKind::hard, FeatureKind::hard});

    path.features = {};
    CHECK(build_mixed_matrix(path, c, p).values == c);
    path.features = {0, 1, 2};
    CHECK(build_mixed_matrix(path, c, p).values == p);
    CHECK_THROWS(build_mixed_matrix(path, c, Matrix(1, 2)));
  }

  TEST_CASE("soft-leaf fixture: one subtree with a single pure split at 0.5")
  {
    const SoftLeafFixture f;
    const McbmModel m = fit_mcbm(f.C, f.P, f.Y, f.schema, 4);
    REQUIRE(m.global.node_count() == 3);
    REQUIRE(m.subtrees.size() == 1);
    const auto& [leaf, sub] = *m.subtrees.begin();
    CHECK(leaf == m.global.root().right);
    REQUIRE(sub.node_count() == 3);
    CHECK(sub.root().feature == 0);
    CHECK(sub.is_soft(0));
    CHECK(sub.root().threshold == 0.5);
    CHECK(sub.root().gain == doctest::Approx(1.0).epsilon(1e-12));
    for (int child : {sub.root().left, sub.root().right}) {
      const auto& node = sub.nodes[static_cast<std::size_t>(child)];
      CHECK(node.counts.maxCoeff() == node.n_samples);
    }
    CHECK(sub.root().n_samples == m.path_for_leaf(leaf).n_samples);

    // exhaustive split search on the eight leaf rows: 0.5 is the only threshold
    std::vector<double> values;
    for (int i = 8; i < 16; ++i)
      values.push_back(f.P(i, 0));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    REQUIRE(values.size() == 2);
    CHECK(0.5 * (values[0] + values[1]) == sub.root().threshold);

    Matrix probe(1, 2);
    probe << 0.9, 0.3;
    CHECK(evaluate(m, probe)(0) == 1);
    probe(0, 0) = 0.6;
    CHECK(evaluate(m, probe)(0) == 1);
    probe(0, 0) = 0.1;
    CHECK(evaluate(m, probe)(0) == 2);

    for (int msl : {1, 2, 3})
      CHECK(fit_mcbm(f.C, f.P, f.Y, f.schema, msl).subtrees.size() == 1);
    CHECK(fit_mcbm(f.C, f.P, f.Y, f.schema, 5).subtrees.empty());
  }

  TEST_CASE("soft baseline dominates MCBM on the fixture's training data")
  {
    const SoftLeafFixture f;
    const McbmModel m = fit_mcbm(f.C, f.P, f.Y, f.schema, 2);
    const BaselineModel soft = fit_baseline(f.C, f.P, f.Y, f.schema, 2, BaselineVariant::sequential_soft);
    const double mcbm_acc = train_accuracy(evaluate(m, f.P, &f.C), f.Y);
    const double soft_acc = train_accuracy(predict_baseline(soft, f.P, nullptr, f.schema), f.Y);
    CHECK(soft_acc >= mcbm_acc);
  }

  TEST_CASE("label determined by concepts: no subtrees")
  {
    std::mt19937_64 rng(1);
    const ConceptSchema s = testing::make_schema(3, {3}, 4);
    const Matrix C = testing::random_concepts(s, 400, rng);
    Labels Y(400);
    for (int i = 0; i < 400; ++i)
      Y(i) = (static_cast<int>(C(i, 0)) + 2 * static_cast<int>(C(i, 1)) + static_cast<int>(C(i, 4))) % 4;
    const McbmModel m = fit_mcbm(C, random_probs(s, 400, rng), Y, s, 5);
    CHECK(m.subtrees.empty());
  }

  TEST_CASE("msl = n: single global leaf and no soft columns to extend with")
  {
    const LeakyProblem p(120, 2);
    const McbmModel m = fit_mcbm(p.C, p.P, p.Y, p.schema, 120);
    CHECK(m.global.node_count() == 1);
    CHECK(m.subtrees.size() <= 1);
    CHECK(m.subtrees.empty()); // the root path uses no concepts
  }

  TEST_CASE("stored subtrees obey msl and contain a leaky split")
  {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const LeakyProblem p(600, seed);
      const int msl = 5 + static_cast<int>(seed);
      const McbmModel m = fit_mcbm(p.C, p.P, p.Y, p.schema, msl);
      for (const auto& [leaf, sub] : m.subtrees) {
        CHECK(sub.msl == msl);
        CHECK(sub.root().n_samples == m.path_for_leaf(leaf).n_samples);
        bool leaky = false;
        for (const auto& node : sub.nodes) {
          if (node.is_leaf())
            CHECK(node.n_samples >= msl);
          else if (sub.is_soft(node.feature) && node.gain > kMinLeakyGain)
            leaky = true;
        }
        CHECK(leaky);
      }
    }
  }

  TEST_CASE("merging: identity, node arithmetic and fidelity on random inputs")
  {
    std::mt19937_64 rng(3);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const LeakyProblem p(800, seed);
      const McbmModel m = fit_mcbm(p.C, p.P, p.Y, p.schema, 10);
      const DecisionTree merged = merge(m);
      int expected = m.global.node_count() - static_cast<int>(m.subtrees.size());
      for (const auto& [leaf, sub] : m.subtrees)
        expected += sub.node_count();
      CHECK(merged.node_count() == expected);
      CHECK_NOTHROW(merged.validate());

      const Matrix probs = random_probs(p.schema, 2000, rng);
      const Matrix hard = binarize(probs, p.schema);
      CHECK(predict(merged, merged_features(hard, probs)) == evaluate(m, probs));
    }

    const LeakyProblem p(300, 1);
    McbmModel m = fit_mcbm(p.C, p.P, p.Y, p.schema, 10);
    m.subtrees.clear();
    const DecisionTree merged = merge(m);
    REQUIRE(merged.node_count() == m.global.node_count());
    for (int i = 0; i < merged.node_count(); ++i) {
      CHECK(merged.nodes[static_cast<std::size_t>(i)].feature == m.global.nodes[static_cast<std::size_t>(i)].feature);
      CHECK(merged.nodes[static_cast<std::size_t>(i)].threshold == m.global.nodes[static_cast<std::size_t>(i)].threshold);
    }
    CHECK(evaluate(m, p.P, &p.C) == predict(m.global, p.C));
  }

  TEST_CASE("path isolation and training-accuracy monotonicity")
  {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const LeakyProblem p(700, 100 + seed);
      const McbmModel m = fit_mcbm(p.C, p.P, p.Y, p.schema, 8);
      const BaselineModel hard = fit_baseline(p.C, p.P, p.Y, p.schema, 8, BaselineVariant::hard);
      const Evaluation ev = evaluate_detailed(m, p.P, &p.C);
      const Labels base = predict_baseline(hard, p.P, &p.C, p.schema);
      for (Eigen::Index i = 0; i < p.Y.size(); ++i)
        if (!m.is_extended(ev.global_leaf[static_cast<std::size_t>(i)]))
          CHECK(ev.predictions(i) == base(i));
      CHECK(train_accuracy(ev.predictions, p.Y) >= train_accuracy(base, p.Y));
    }
  }

  TEST_CASE("hard and independent baselines share a tree; routing raw or binarised is identical")
  {
    std::mt19937_64 rng(9);
    const ConceptSchema s = testing::make_schema(4, {}, 3);
    const Matrix C = testing::random_concepts(s, 300, rng);
    Labels Y(300);
    for (int i = 0; i < 300; ++i)
      Y(i) = (static_cast<int>(C(i, 0) + C(i, 1) + C(i, 3)) + static_cast<int>(rng() % 2)) % 3;
    const Matrix P = random_probs(s, 300, rng);
    const BaselineModel h = fit_baseline(C, P, Y, s, 5, BaselineVariant::hard);
    const BaselineModel ind = fit_baseline(C, P, Y, s, 5, BaselineVariant::independent);
    CHECK(to_json(h.tree).dump() == to_json(ind.tree).dump());
    const Matrix probe = random_probs(s, 1000, rng);
    CHECK(predict_baseline(h, probe, nullptr, s) == predict_baseline(ind, probe, nullptr, s));
  }

  TEST_CASE("mode separation is enforced")
  {
    SynthSpec spec;
    spec.n_samples = 200;
    spec.n_factors = 2;
    spec.revealed = {0, 1};
    const Dataset ds = generate_synthetic(spec);
    const MlpParams mlp = init_mlp({3, 4, ds.schema.num_concepts()}, Activation::relu, 1);
    const auto raw = ProbabilitySource::from_model(mlp, ds.schema, SourceMode::sequential);
    CHECK_THROWS_WITH(fit_mcbm(ds, raw, 5, SourceMode::sequential), doctest::Contains("calibrated"));
    const auto cal = raw.with_calibration(CalibrationParams::identity(ds.schema));
    CHECK_NOTHROW(fit_mcbm(ds, cal, 5, SourceMode::sequential));
    CHECK_THROWS(fit_mcbm(ds, cal, 5, SourceMode::joint));
    const auto joint = ProbabilitySource::from_model(mlp, ds.schema, SourceMode::joint);
    CHECK_THROWS(joint.with_calibration(CalibrationParams::identity(ds.schema)));
    CHECK_NOTHROW(fit_mcbm(ds, joint, 5, SourceMode::joint));
    CHECK_THROWS(fit_mcbm(ds, joint, 5, SourceMode::sequential));
  }

  TEST_CASE("annotated evaluation needs concepts; predicted mode binarises")
  {
    const SoftLeafFixture f;
    McbmModel m = fit_mcbm(f.C, f.P, f.Y, f.schema, 2);
    Dataset test;
    test.schema = f.schema;
    test.X = Matrix::Zero(16, 1);
    test.C = f.C;
    test.Y = f.Y;
    for (int i = 0; i < 16; ++i)
      test.ids.push_back(i);
    CHECK_THROWS(evaluate(m, test)); // no source attached
    ProbabilityTable table(test.ids, f.P);
    m.source = ProbabilitySource::from_table(table, f.schema, SourceMode::sequential, true);
    // annotated routing sends rows 8-15 to the extended leaf
    CHECK(evaluate(m, test, ConceptMode::annotated) == f.Y);
    // predicted routing binarises p0: rows 8-11 (p0 = 0.2) fall back to the c0 = 0 leaf
    Labels expected = Labels::Constant(16, 2);
    expected.tail(4).setConstant(1);
    CHECK(evaluate(m, test, ConceptMode::predicted) == expected);
  }

  TEST_CASE("bundle JSON round trip")
  {
    const LeakyProblem p(500, 4);
    const McbmModel m = fit_mcbm(p.C, p.P, p.Y, p.schema, 10);
    REQUIRE(!m.subtrees.empty());
    const McbmModel back = mcbm_from_json(to_json(m));
    CHECK(to_json(back).dump() == to_json(m).dump());
    CHECK(evaluate(back, p.P) == evaluate(m, p.P));

    nlohmann::json broken = to_json(m);
    broken["msl"] = 11;
    CHECK_THROWS(mcbm_from_json(broken));
  }
}
