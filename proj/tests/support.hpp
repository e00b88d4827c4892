#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "qafuse/score_table.hpp"

namespace qafuse::test {

// Test-side generator, deliberately separate from the library's RNG code.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double real(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
  }
  std::vector<double> reals(std::size_t n, double lo = 0.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = real(lo, hi);
    return v;
  }
  /// Scores drawn from a handful of levels so ties are common.
  std::vector<double> tied(std::size_t n, int levels = 4) {
    std::vector<double> v(n);
    for (auto& x : v) x = static_cast<double>(index(static_cast<std::size_t>(levels))) / levels;
    return v;
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline ScoreTable random_table(Gen& gen, std::string feature, std::size_t nq, std::size_t ng) {
  std::vector<std::string> q, g;
  for (std::size_t i = 0; i < nq; ++i) q.push_back("q" + std::to_string(i));
  for (std::size_t i = 0; i < ng; ++i) g.push_back("g" + std::to_string(i));
  ScoreTable t(std::move(feature), q, g);
  for (auto& s : t.scores) s = gen.real();
  return t;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("qafuse_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace qafuse::test
