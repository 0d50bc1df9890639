#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "wcsim/training.hpp"

namespace wcsim {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

}  // namespace detail

/// Flat key=value config with '#' comments. Unknown keys are rejected.
inline TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  TrainConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    try {
      if (key == "gamma") cfg.gamma = std::stod(val);
      else if (key == "rho") cfg.rho = std::stod(val);
      else if (key == "epsilon_decay") cfg.epsilon_decay = std::stod(val);
      else if (key == "epsilon_min") cfg.epsilon_min = std::stod(val);
      else if (key == "exploration_var") cfg.exploration_var = std::stod(val);
      else if (key == "policy_noise_var") cfg.policy_noise_var = std::stod(val);
      else if (key == "noise_clip") cfg.noise_clip = std::stod(val);
      else if (key == "k_max") cfg.k_max = std::stod(val);
      else if (key == "T") cfg.T = std::stoi(val);
      else if (key == "M") cfg.M = std::stoi(val);
      else if (key == "eta_a") cfg.eta_a = std::stod(val);
      else if (key == "tau_d") cfg.tau_d = std::stoi(val);
      else if (key == "n_updates") cfg.n_updates = std::stoi(val);
      else if (key == "p_a") cfg.p_a = std::stod(val);
      else if (key == "batch") cfg.batch = std::stoi(val);
      else if (key == "buffer_capacity")
        cfg.buffer_capacity = static_cast<size_t>(std::stoull(val));
      else if (key == "episode_len") cfg.episode_len = std::stoi(val);
      else if (key == "episodes") cfg.episodes = std::stoi(val);
      else if (key == "psnr_set") cfg.psnr_set = detail::parse_double_list(val);
      else if (key == "delta_l") cfg.delta_l = std::stod(val);
      else if (key == "delta_u") cfg.delta_u = std::stod(val);
      else if (key == "lr") cfg.lr = std::stod(val);
      else if (key == "v_max") cfg.v_max = std::stod(val);
      else if (key == "rate_hz") cfg.rate_hz = std::stod(val);
      else if (key == "traj_sinusoids") cfg.traj_sinusoids = std::stoi(val);
      else if (key == "traj_fmin") cfg.traj_fmin = std::stod(val);
      else if (key == "traj_fmax") cfg.traj_fmax = std::stod(val);
      else if (key == "seed") cfg.seed = std::stoull(val);
      else
        throw std::runtime_error("unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": bad value for " + key);
    }
  }
  return cfg;
}

inline void save_train_config(const TrainConfig& cfg,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out.precision(17);
  out << "gamma = " << cfg.gamma << "\n";
  out << "rho = " << cfg.rho << "\n";
  out << "epsilon_decay = " << cfg.epsilon_decay << "\n";
  out << "epsilon_min = " << cfg.epsilon_min << "\n";
  out << "exploration_var = " << cfg.exploration_var << "\n";
  out << "policy_noise_var = " << cfg.policy_noise_var << "\n";
  out << "noise_clip = " << cfg.noise_clip << "\n";
  out << "k_max = " << cfg.k_max << "\n";
  out << "T = " << cfg.T << "\n";
  out << "M = " << cfg.M << "\n";
  out << "eta_a = " << cfg.eta_a << "\n";
  out << "tau_d = " << cfg.tau_d << "\n";
  out << "n_updates = " << cfg.n_updates << "\n";
  out << "p_a = " << cfg.p_a << "\n";
  out << "batch = " << cfg.batch << "\n";
  out << "buffer_capacity = " << cfg.buffer_capacity << "\n";
  out << "episode_len = " << cfg.episode_len << "\n";
  out << "episodes = " << cfg.episodes << "\n";
  out << "psnr_set = ";
  for (size_t i = 0; i < cfg.psnr_set.size(); ++i)
    out << (i ? "," : "") << cfg.psnr_set[i];
  out << "\n";
  out << "delta_l = " << cfg.delta_l << "\n";
  out << "delta_u = " << cfg.delta_u << "\n";
  out << "lr = " << cfg.lr << "\n";
  out << "v_max = " << cfg.v_max << "\n";
  out << "rate_hz = " << cfg.rate_hz << "\n";
  out << "traj_sinusoids = " << cfg.traj_sinusoids << "\n";
  out << "traj_fmin = " << cfg.traj_fmin << "\n";
  out << "traj_fmax = " << cfg.traj_fmax << "\n";
  out << "seed = " << cfg.seed << "\n";
}

}  // namespace wcsim
