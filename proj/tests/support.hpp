#pragma once

#include "mcbm/data.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

namespace testing
{

// Fresh scratch directory per call, removed by the caller's scope guard.
struct ScratchDir
{
  std::filesystem::path path;
  explicit ScratchDir(const std::string& tag)
  {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("mcbm_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~ScratchDir() { std::filesystem::remove_all(path); }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

inline std::string slurp(const std::filesystem::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text)
{
  std::ofstream(p, std::ios::binary) << text;
}

// Schema with `n_independent` binary concepts followed by groups of the given sizes.
inline mcbm::ConceptSchema make_schema(int n_independent, const std::vector<int>& group_sizes, int n_classes)
{
  mcbm::ConceptSchema s;
  int k = 0;
  for (int i = 0; i < n_independent; ++i) {
    s.independents.push_back(k);
    s.concepts.push_back("ind" + std::to_string(i));
    ++k;
  }
  for (std::size_t g = 0; g < group_sizes.size(); ++g) {
    std::vector<int> members;
    for (int j = 0; j < group_sizes[g]; ++j) {
      members.push_back(k++);
      s.concepts.push_back("g" + std::to_string(g) + "_" + std::to_string(j));
    }
    s.groups.push_back(members);
  }
  for (int c = 0; c < n_classes; ++c)
    s.classes.push_back("y" + std::to_string(c));
  return s;
}

// Random valid concept matrix for a schema.
inline mcbm::Matrix random_concepts(const mcbm::ConceptSchema& s, Eigen::Index n, std::mt19937_64& rng)
{
  mcbm::Matrix C = mcbm::Matrix::Zero(n, s.num_concepts());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j : s.independents)
      C(i, j) = static_cast<double>(rng() % 2);
    for (const auto& g : s.groups)
      C(i, g[rng() % g.size()]) = 1.0;
  }
  return C;
}

} // namespace testing
