#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <random>
#include <string>

#include <unistd.h>

#include <gtest/gtest.h>

#include "prism/numerics/finite_diff.hpp"
#include "prism/numerics/rng.hpp"
#include "prism/numerics/tape.hpp"

namespace prism::testing {

inline Matrix<double> random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1.0,
                                    double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

inline std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("prism-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string str() const { return path_.string(); }
  std::string operator/(const std::string& leaf) const { return (path_ / leaf).string(); }

 private:
  std::filesystem::path path_;
};

/// Analytic vs central-difference gradients of a scalar built by `loss`.
/// `loss` records onto the given tape and returns the scalar Var.
inline GradCheckResult gradcheck(const ParamList<double>& params, const std::function<Var(Tape<double>&)>& loss,
                                 double h = 1e-5, double floor = 1e-6) {
  zero_grads(params);
  Tape<double> tape;
  tape.backward(loss(tape));
  auto numeric = finite_diff_gradient<double>(
      [&] {
        Tape<double> t(false);
        return t.value(loss(t))(0, 0);
      },
      params, h);
  return compare_gradients(params, numeric, floor);
}

}  // namespace prism::testing
