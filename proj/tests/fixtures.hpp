#pragma once

#include "support.hpp"

#include "mcbm/mixed.hpp"

namespace testing
{

// Sixteen rows over two independent concepts and classes {A, B, C}:
// rows 0-7 have c0 = 0 and class C; rows 8-15 have c0 = 1 and identical hard
// concepts, four of class A (p0 = 0.2) and four of class B (p0 = 0.8).
struct SoftLeafFixture
{
  mcbm::ConceptSchema schema;
  mcbm::Matrix C;
  mcbm::Matrix P;
  mcbm::Labels Y;

  SoftLeafFixture()
  {
    schema.concepts = {"c0", "c1"};
    schema.independents = {0, 1};
    schema.classes = {"A", "B", "C"};
    C = mcbm::Matrix::Zero(16, 2);
    P = mcbm::Matrix::Zero(16, 2);
    Y.resize(16);
    for (int i = 0; i < 16; ++i) {
      if (i < 8) {
        P(i, 0) = 0.1;
        Y(i) = 2;
      } else {
        C(i, 0) = 1;
        const bool b = i >= 12;
        P(i, 0) = b ? 0.8 : 0.2;
        Y(i) = b ? 1 : 0;
      }
      P(i, 1) = 0.3;
    }
  }
};

// Small random problem with a leakage channel: the label depends on a hidden
// bit that the probabilities see but the hard concepts do not.
struct LeakyProblem
{
  mcbm::ConceptSchema schema;
  mcbm::Matrix C, P;
  mcbm::Labels Y;

  LeakyProblem(int n, std::uint64_t seed, double leak = 0.35)
  {
    schema = make_schema(2, {3}, 3);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    C = random_concepts(schema, n, rng);
    P.resize(n, schema.num_concepts());
    Y.resize(n);
    for (int i = 0; i < n; ++i) {
      const int hidden = static_cast<int>(rng() % 2);
      const int g = C(i, 2) > 0 ? 0 : (C(i, 3) > 0 ? 1 : 2);
      Y(i) = (static_cast<int>(C(i, 0)) + g + hidden) % 3;
      if (u(rng) < 0.1)
        Y(i) = static_cast<int>(rng() % 3);
      for (int j = 0; j < 2; ++j)
        P(i, j) = std::clamp(0.25 + 0.5 * C(i, j) + (hidden ? leak : -leak) * u(rng) * 0.5, 0.0, 1.0);
      mcbm::Vector z(3);
      for (int j = 0; j < 3; ++j)
        z(j) = 2.0 * C(i, 2 + j) + (hidden ? leak : -leak) * (j == 0 ? 1 : -1) + 0.3 * u(rng);
      z = (z.array() - z.maxCoeff()).exp();
      P.row(i).segment(2, 3) = (z / z.sum()).transpose();
    }
  }
};

} // namespace testing
