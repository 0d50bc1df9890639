#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace wcsim {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;
using Rng = std::mt19937_64;

inline double clip(double x, double lo, double hi) {
  return std::min(std::max(x, lo), hi);
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline bool all_finite(const Mat& m) { return m.allFinite(); }

/// Gaussian 3-vector with per-axis variance `var`.
inline Vec3 gaussian3(double var, Rng& rng) {
  if (var <= 0.0) return Vec3::Zero();
  std::normal_distribution<double> n(0.0, std::sqrt(var));
  return Vec3(n(rng), n(rng), n(rng));
}

}  // namespace wcsim
