#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "wcsim/common.hpp"

namespace wcsim {

/// Sensor (haptic stylus) and robot workspaces, in mm.
struct WorkspaceBounds {
  Vec3 xb_lo{-200.0, -200.0, 0.0};
  Vec3 xb_hi{200.0, 200.0, 400.0};
  Vec3 xt_lo{-105.0, -100.0, -220.0};
  Vec3 xt_hi{263.0, 150.0, 100.0};

  double robot_scale_sq() const { return (xb_hi - xb_lo).squaredNorm(); }
};

/// Per-axis Gaussian noise variances; the overall channel noise is the sum
/// of the independent sensing and transmission components.
struct NoiseConfig {
  double sigma_s2 = 0.0;
  double sigma_c2 = 0.0;

  double sigma2() const { return sigma_s2 + sigma_c2; }

  static NoiseConfig split_evenly(double sigma2_total) {
    require(sigma2_total >= 0.0, "noise variance must be non-negative");
    return {0.5 * sigma2_total, 0.5 * sigma2_total};
  }
};

struct PlantState {
  Vec3 x_bar = Vec3::Zero();
};

/// Time-indexed desired states in sensor space, mm, sampled at `rate` Hz.
struct Trajectory {
  Mat samples;  // (3, n)
  double rate = 120.0;

  Eigen::Index size() const { return samples.cols(); }
};

inline Vec3 sense(const Vec3& x, const NoiseConfig& noise, Rng& rng) {
  return x + gaussian3(noise.sigma_s2, rng);
}

inline Vec3 transmit(const Vec3& x_hat, const NoiseConfig& noise, Rng& rng) {
  return x_hat + gaussian3(noise.sigma_c2, rng);
}

/// Per-axis affine map from sensor space into robot space. Extrapolates
/// outside the stated bounds.
inline Vec3 map_touch_to_panda(const Vec3& x, const WorkspaceBounds& b) {
  Vec3 out;
  for (int j = 0; j < 3; ++j) {
    const double denom = b.xt_hi[j] - b.xt_lo[j];
    if (denom == 0.0)
      throw std::invalid_argument("map_touch_to_panda: degenerate bounds");
    out[j] = b.xb_lo[j] +
             (b.xb_hi[j] - b.xb_lo[j]) / denom * (x[j] - b.xt_lo[j]);
  }
  return out;
}

/// Overall noise variance (mm^2, per axis) for a given peak status-to-noise
/// ratio in dB.
inline double psnr_to_sigma2(double psnr_db, const WorkspaceBounds& b) {
  return b.robot_scale_sq() / std::pow(10.0, psnr_db / 10.0);
}

inline double sigma2_to_psnr(double sigma2, const WorkspaceBounds& b) {
  require(sigma2 > 0.0, "sigma2_to_psnr: variance must be positive");
  return 10.0 * std::log10(b.robot_scale_sq() / sigma2);
}

/// u_i = K_i (x_bar - x_tilde), both in robot space.
inline Vec3 control_command(double gain, const Vec3& x_bar,
                            const Vec3& x_tilde) {
  return gain * (x_bar - x_tilde);
}

/// First-order drive with per-axis velocity saturation: the commanded
/// displacement u*dt is clamped to +-v_max per slot.
inline PlantState plant_step(const PlantState& s, const Vec3& u, double dt,
                             double v_max) {
  PlantState next;
  for (int j = 0; j < 3; ++j) {
    next.x_bar[j] = s.x_bar[j] - clip(u[j] * dt, -v_max, v_max);
  }
  return next;
}

inline double duty_cycle(const std::vector<int>& decisions) {
  if (decisions.empty())
    throw std::invalid_argument("duty_cycle: empty decision list");
  long ones = 0;
  for (int a : decisions) ones += (a != 0);
  return static_cast<double>(ones) / static_cast<double>(decisions.size());
}

/// Mean Euclidean distance (mm) between mapped sensed states and actual
/// robot states over a trace.
inline double control_error_metric(
    const std::vector<std::pair<Vec3, Vec3>>& trace) {
  if (trace.empty())
    throw std::invalid_argument("control_error_metric: empty trace");
  double sum = 0.0;
  for (const auto& [xb_hat, x_bar] : trace) sum += (xb_hat - x_bar).norm();
  return sum / static_cast<double>(trace.size());
}

struct TrajectoryConfig {
  double duration_s = 20.0;
  int sinusoids = 3;
  double f_min_hz = 0.05;
  double f_max_hz = 0.5;
  double rate_hz = 120.0;
  double margin = 0.9;  // fraction of the half-range used by the amplitudes
};

/// Smooth sum-of-sinusoids per axis. Amplitudes are rescaled so their sum
/// equals margin * half-range, which keeps every sample inside the sensor
/// workspace and bounds the per-slot displacement by
/// 2*pi*f_max*(range/2)/rate.
inline Trajectory generate_trajectory(const TrajectoryConfig& cfg, Rng& rng,
                                      const WorkspaceBounds& b = {}) {
  require(cfg.duration_s > 0 && cfg.sinusoids > 0, "bad trajectory config");
  require(cfg.f_min_hz > 0 && cfg.f_max_hz >= cfg.f_min_hz,
          "bad trajectory frequency range");
  require(cfg.margin > 0 && cfg.margin <= 1.0, "margin must be in (0,1]");
  const auto n = static_cast<Eigen::Index>(cfg.duration_s * cfg.rate_hz);
  Trajectory traj;
  traj.rate = cfg.rate_hz;
  traj.samples = Mat(3, n);
  std::uniform_real_distribution<double> uf(cfg.f_min_hz, cfg.f_max_hz);
  std::uniform_real_distribution<double> uphase(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> uamp(0.2, 1.0);
  for (int axis = 0; axis < 3; ++axis) {
    const double center = 0.5 * (b.xt_hi[axis] + b.xt_lo[axis]);
    const double half_range = 0.5 * (b.xt_hi[axis] - b.xt_lo[axis]);
    std::vector<double> freq(cfg.sinusoids), phase(cfg.sinusoids),
        amp(cfg.sinusoids);
    double amp_sum = 0.0;
    for (int k = 0; k < cfg.sinusoids; ++k) {
      freq[k] = uf(rng);
      phase[k] = uphase(rng);
      amp[k] = uamp(rng);
      amp_sum += amp[k];
    }
    const double scale = cfg.margin * half_range / amp_sum;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / cfg.rate_hz;
      double s = 0.0;
      for (int k = 0; k < cfg.sinusoids; ++k)
        s += scale * amp[k] * std::sin(2.0 * M_PI * freq[k] * t + phase[k]);
      traj.samples(axis, i) = center + s;
    }
  }
  return traj;
}

inline void save_trajectory_csv(const Trajectory& traj,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "t,x,y,z\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < traj.size(); ++i) {
    out << static_cast<double>(i) / traj.rate << ',' << traj.samples(0, i)
        << ',' << traj.samples(1, i) << ',' << traj.samples(2, i) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

/// Parses a `t,x,y,z` CSV. Rejects malformed rows, non-monotone time, and
/// samples outside the sensor workspace, naming the first offending line.
inline Trajectory load_trajectory_csv(const std::string& path,
                                      const WorkspaceBounds& b = {},
                                      double rate_hz = 120.0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("t,x,y,z", 0) != 0)
    throw std::runtime_error(path + ": expected header 't,x,y,z'");
  std::vector<Vec3> rows;
  double prev_t = -std::numeric_limits<double>::infinity();
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    double vals[4];
    for (int k = 0; k < 4; ++k) {
      if (!std::getline(ss, field, ','))
        throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                 ": expected 4 fields");
      try {
        size_t pos = 0;
        vals[k] = std::stod(field, &pos);
        if (pos != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                 ": bad number '" + field + "'");
      }
      if (!std::isfinite(vals[k]))
        throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                 ": non-finite value");
    }
    if (vals[0] <= prev_t)
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": time not strictly increasing");
    prev_t = vals[0];
    for (int j = 0; j < 3; ++j) {
      if (vals[j + 1] < b.xt_lo[j] || vals[j + 1] > b.xt_hi[j])
        throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                                 ": sample outside sensor workspace");
    }
    rows.emplace_back(vals[1], vals[2], vals[3]);
  }
  Trajectory traj;
  traj.rate = rate_hz;
  traj.samples = Mat(3, static_cast<Eigen::Index>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i)
    traj.samples.col(static_cast<Eigen::Index>(i)) = rows[i];
  return traj;
}

}  // namespace wcsim
