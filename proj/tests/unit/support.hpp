#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "opinf/types.hpp"

namespace test {

inline opinf::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  opinf::Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  }
  return m;
}

inline opinf::Vector random_vector(Eigen::Index n, std::uint64_t seed) { return random_matrix(n, 1, seed).col(0); }

inline double rel_err(const opinf::Matrix& a, const opinf::Matrix& b) {
  const double den = b.norm();
  return den > 0.0 ? (a - b).norm() / den : (a - b).norm();
}

// x ⊗ y by the definition, entry i*d + j = x_i y_j.
inline opinf::Vector kron_oracle(const opinf::Vector& x, const opinf::Vector& y) {
  const Eigen::Index d = x.size();
  opinf::Vector out(d * y.size());
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < y.size(); ++j) out(i * y.size() + j) = x(i) * y(j);
  }
  return out;
}

inline opinf::Vector kron_oracle(const opinf::Vector& x) { return kron_oracle(x, x); }

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("opinf-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace test
