#pragma once

#include <iostream>
#include <optional>
#include <utility>
#include <vector>

#include "wcsim/agents.hpp"
#include "wcsim/common.hpp"
#include "wcsim/env.hpp"
#include "wcsim/mine.hpp"
#include "wcsim/sfr.hpp"

namespace wcsim {

struct TrainConfig {
  double gamma = 0.99;
  double rho = 0.005;
  double epsilon_decay = 7e-4;
  double epsilon_min = 0.05;
  double exploration_var = 0.2;   // initial actor exploration variance
  double policy_noise_var = 0.2;  // target policy smoothing variance
  double noise_clip = 0.1;
  double k_max = 30.0;
  int T = 80;
  int M = 20;
  double eta_a = 0.999;
  int tau_d = 3;
  int n_updates = 20;
  double p_a = 0.4;
  int batch = 1024;
  size_t buffer_capacity = 1000000;
  int episode_len = 2400;
  int episodes = 2000;
  std::vector<double> psnr_set = {8, 10, 12, 14, 16, 18, 20, 22, 24};
  double delta_l = 5.0;
  double delta_u = 20.0;
  double lr = 1e-3;
  double v_max = 10.0;  // plant per-slot displacement cap, mm
  double rate_hz = 120.0;
  int traj_sinusoids = 3;
  double traj_fmin = 0.05;
  double traj_fmax = 0.5;
  uint64_t seed = 1;

  void validate() const {
    require(gamma > 0 && gamma < 1, "gamma must be in (0,1)");
    require(rho > 0 && rho <= 1, "rho must be in (0,1]");
    require(epsilon_min < 1.0, "epsilon_min must be < 1");
    require(tau_d >= 1, "tau_d must be >= 1");
    require(episode_len > T, "episode_len must exceed the warm-up T");
    require(!psnr_set.empty(), "psnr_set must be non-empty");
    RewardParams{delta_l, delta_u}.validate();
  }
};

/// How a rollout picks transmissions, reconstructions, and gains. Baselines
/// are expressed as restrictions of the full loop.
struct RolloutOptions {
  enum class TxPolicy { Learned, Always, Periodic };
  enum class GainPolicy { Learned, Fixed };

  double epsilon = 0.0;
  double exploration_var = 0.0;
  TxPolicy tx = TxPolicy::Learned;
  int period = 1;          // for Periodic: transmit when i % period == 0
  bool use_sfr = true;     // false: hold the last received value
  GainPolicy gain = GainPolicy::Learned;
  double fixed_gain = 30.0;
  bool warmup = true;      // force a=1 for slots i <= T
  bool collect_transitions = false;
};

struct SlotRecord {
  Vec3 x = Vec3::Zero();        // desired state, sensor space
  Vec3 x_hat = Vec3::Zero();    // sensed
  Vec3 x_tilde = Vec3::Zero();  // reconstructed at the receiver
  Vec3 x_bar = Vec3::Zero();    // robot position entering the slot
  int a = 0;
  double gain = 0.0;
  double r = 0.0;
  double v = 0.0;
  double e = 0.0;  // ||x_bar - map(x_hat)||
  int d_o = 0;
};

struct EpisodeTrace {
  std::vector<SlotRecord> slots;
  double s_e = 0.0;
  double duty = 0.0;
  double total_reward = 0.0;
};

struct RolloutResult {
  EpisodeTrace trace;
  std::vector<Transition> transitions;
};

/// Runs one episode of the closed loop at a fixed noise level.
inline RolloutResult run_episode(const Trajectory& traj, double sigma2,
                                 const AgentBundle& bundle,
                                 const MineModel& mine, const SfrModel& sfr,
                                 const TrainConfig& cfg,
                                 const RolloutOptions& opts, Rng& rng,
                                 const WorkspaceBounds& bounds = {}) {
  require(traj.size() >= cfg.episode_len, "run_episode: trajectory too short");
  if (opts.use_sfr)
    require(cfg.T >= sfr.T, "run_episode: warm-up shorter than the SFR window");
  const NoiseConfig noise = NoiseConfig::split_evenly(sigma2);
  const double dt = 1.0 / cfg.rate_hz;
  const int L = cfg.episode_len;

  RolloutResult out;
  out.trace.slots.reserve(static_cast<size_t>(L));
  if (opts.collect_transitions)
    out.transitions.reserve(static_cast<size_t>(L));

  RxHistory history(opts.use_sfr ? sfr.T : 1);
  PlantState plant{map_touch_to_panda(traj.samples.col(0), bounds)};
  Vec3 prev_sensed = Vec3::Zero();
  Vec3 anchor_vel = Vec3::Zero();
  Vec3 last_rx = Vec3::Zero();
  bool have_rx = false;
  double tau_hat = 0.0;
  double reward_sum = 0.0;
  std::optional<Transition> pending;

  for (int i = 0; i < L; ++i) {
    const Vec3 x = traj.samples.col(i);
    const Vec3 x_hat = sense(x, noise, rng);
    const Vec3 x_hat_b = map_touch_to_panda(x_hat, bounds);
    const Vec3 vel = i == 0 ? Vec3::Zero() : Vec3(x_hat - prev_sensed);
    prev_sensed = x_hat;

    const bool learned_tx = opts.tx == RolloutOptions::TxPolicy::Learned;
    const double m_i =
        learned_tx ? mine_score(mine, {vel, anchor_vel}) : 0.0;
    const TxState tx_state{m_i, tau_hat, sigma2};
    const Vec3 tx_vec = tx_state_vec(tx_state, bundle.norm);

    int a = 1;
    switch (opts.tx) {
      case RolloutOptions::TxPolicy::Always:
        a = 1;
        break;
      case RolloutOptions::TxPolicy::Periodic:
        a = (i % opts.period == 0) ? 1 : 0;
        break;
      case RolloutOptions::TxPolicy::Learned:
        if (opts.warmup && i <= cfg.T) {
          a = 1;
        } else {
          const int policy_a = select_transmission(bundle.q, tx_vec);
          a = epsilon_greedy_decision(opts.epsilon, cfg.p_a, policy_a, rng);
        }
        break;
    }

    Vec3 x_tilde;
    if (a == 1) {
      const Vec3 x_r = transmit(x_hat, noise, rng);
      x_tilde = x_r;
      last_rx = x_r;
      have_rx = true;
      anchor_vel = vel;
    } else if (opts.use_sfr && history.fill() >= sfr.T) {
      x_tilde = predict_next(sfr, history);
    } else {
      x_tilde = have_rx ? last_rx : x;  // hold before anything arrived
    }
    history.push(x_tilde);

    const Vec3 x_tilde_b = map_touch_to_panda(x_tilde, bounds);
    const Vec3 delta_x = plant.x_bar - x_tilde_b;
    const RxState rx_state{delta_x, a, sigma2};
    const Vec rx_vec = rx_state_vec(rx_state, bundle.norm);

    double k = 0.0;
    double gain = opts.fixed_gain;
    if (opts.gain == RolloutOptions::GainPolicy::Learned) {
      k = actor_action(bundle.actor, rx_vec, opts.exploration_var, rng);
      gain = gain_from_action(k, bundle.k_max);
    } else {
      k = clip(2.0 * gain / bundle.k_max - 1.0, -1.0, 1.0);
    }

    const double e = (plant.x_bar - x_hat_b).norm();
    const double v = huber(e, bundle.reward);
    const double r = hybrid_reward(v, a, bundle.reward);
    reward_sum += r;

    if (opts.collect_transitions) {
      if (pending) {
        pending->tx_next = tx_state;
        pending->rx_next = rx_state;
        pending->d_o = 0;
        out.transitions.push_back(*pending);
      }
      Transition t;
      t.tx = tx_state;
      t.rx = rx_state;
      t.a = a;
      t.k = k;
      t.r = r;
      t.v = v;
      t.d_o = 0;
      pending = t;
    }

    SlotRecord rec;
    rec.x = x;
    rec.x_hat = x_hat;
    rec.x_tilde = x_tilde;
    rec.x_bar = plant.x_bar;
    rec.a = a;
    rec.gain = gain;
    rec.r = r;
    rec.v = v;
    rec.e = e;
    rec.d_o = (i == L - 1) ? 1 : 0;
    out.trace.slots.push_back(rec);

    const Vec3 u = control_command(gain, plant.x_bar, x_tilde_b);
    plant = plant_step(plant, u, dt, cfg.v_max);
    tau_hat = update_idle_time(tau_hat, a);
  }

  if (opts.collect_transitions && pending) {
    pending->tx_next = pending->tx;  // unused: terminal transitions are masked
    pending->rx_next = pending->rx;
    pending->d_o = 1;
    out.transitions.push_back(*pending);
  }

  double e_sum = 0.0;
  long ones = 0;
  for (const auto& s : out.trace.slots) {
    e_sum += s.e;
    ones += s.a;
  }
  out.trace.s_e = e_sum / static_cast<double>(L);
  out.trace.duty = static_cast<double>(ones) / static_cast<double>(L);
  out.trace.total_reward = reward_sum;
  return out;
}

inline void soft_update(nn::MlpParams& target, const nn::MlpParams& online,
                        double rho) {
  require(target.layer_sizes == online.layer_sizes,
          "soft_update: shape mismatch");
  for (size_t l = 0; l < target.W.size(); ++l) {
    target.W[l] = rho * online.W[l] + (1.0 - rho) * target.W[l];
    target.b[l] = rho * online.b[l] + (1.0 - rho) * target.b[l];
  }
}

inline void soft_update(DuelingQParams& target, const DuelingQParams& online,
                        double rho) {
  soft_update(target.trunk, online.trunk, rho);
  target.value_W = rho * online.value_W + (1.0 - rho) * target.value_W;
  target.value_b = rho * online.value_b + (1.0 - rho) * target.value_b;
  target.adv_W = rho * online.adv_W + (1.0 - rho) * target.adv_W;
  target.adv_b = rho * online.adv_b + (1.0 - rho) * target.adv_b;
}

/// Per-network Adam states used across update iterations.
struct AgentOptimizers {
  nn::AdamState q;
  nn::AdamState critic1;
  nn::AdamState critic2;
  nn::AdamState actor;
};

inline AgentOptimizers make_agent_optimizers(AgentBundle& b, double lr) {
  AgentOptimizers o;
  o.q = nn::make_adam(param_refs(b.q), lr);
  o.critic1 = nn::make_adam(nn::param_refs(b.critic1), lr);
  o.critic2 = nn::make_adam(nn::param_refs(b.critic2), lr);
  o.actor = nn::make_adam(nn::param_refs(b.actor), lr);
  return o;
}

struct UpdateLosses {
  double q = 0.0;
  double critic1 = 0.0;
  double critic2 = 0.0;
  double actor = std::numeric_limits<double>::quiet_NaN();  // NaN: skipped
};

/// One update iteration: Q and both critics every call; the actor and all
/// soft target updates only when step_index is a multiple of tau_d. Rewards
/// are conditioned by 1/c1 inside the losses (policy-invariant scaling).
inline UpdateLosses train_step_batch(AgentBundle& b, AgentOptimizers& opt,
                                     const ReplayBuffer& replay,
                                     const TrainConfig& cfg, int step_index,
                                     Rng& rng) {
  const auto batch =
      replay.sample(static_cast<size_t>(cfg.batch), rng);  // throws if short
  const auto N = static_cast<Eigen::Index>(batch.size());
  const double inv_n = 1.0 / static_cast<double>(N);
  const double r_scale = 1.0 / b.reward.c1();

  Mat stx(3, N), stx_next(3, N), srx(5, N), srx_next(5, N);
  std::vector<int> act(static_cast<size_t>(N));
  Vec k(N), r(N), v(N), not_done(N);
  for (Eigen::Index n = 0; n < N; ++n) {
    const Transition& t = *batch[static_cast<size_t>(n)];
    stx.col(n) = tx_state_vec(t.tx, b.norm);
    stx_next.col(n) = tx_state_vec(t.tx_next, b.norm);
    srx.col(n) = rx_state_vec(t.rx, b.norm);
    srx_next.col(n) = rx_state_vec(t.rx_next, b.norm);
    act[static_cast<size_t>(n)] = t.a;
    k(n) = t.k;
    r(n) = t.r * r_scale;
    v(n) = t.v * r_scale;
    not_done(n) = t.d_o ? 0.0 : 1.0;
  }

  UpdateLosses losses;

  {  // transmission agent: double dueling Q
    const Mat q_next_online = dueling_q_values(b.q, stx_next);
    const Mat q_next_target = dueling_q_values(b.q_target, stx_next);
    Vec y(N);
    for (Eigen::Index n = 0; n < N; ++n) {
      const int a_star = q_next_online(1, n) > q_next_online(0, n) ? 1 : 0;
      y(n) = r(n) + cfg.gamma * not_done(n) * q_next_target(a_star, n);
    }
    DuelingQCache cache;
    const Mat q_all = dueling_q_forward_cached(b.q, stx, cache);
    Mat dq = Mat::Zero(2, N);
    double loss = 0.0;
    for (Eigen::Index n = 0; n < N; ++n) {
      const double resid = q_all(act[static_cast<size_t>(n)], n) - y(n);
      loss += resid * resid;
      dq(act[static_cast<size_t>(n)], n) = 2.0 * resid * inv_n;
    }
    losses.q = loss * inv_n;
    std::vector<Mat> grads = dueling_q_backward(b.q, cache, dq);
    nn::clip_global_norm(grads, 10.0);
    nn::adam_step(opt.q, param_refs(b.q), grads);
  }

  {  // gain agent critics
    Mat mu_next = nn::mlp_forward(b.actor_target, srx_next);
    std::normal_distribution<double> pn(0.0, std::sqrt(cfg.policy_noise_var));
    Mat sk_next(6, N);
    sk_next.topRows(5) = srx_next;
    for (Eigen::Index n = 0; n < N; ++n) {
      const double noise =
          cfg.policy_noise_var > 0.0
              ? clip(pn(rng), -cfg.noise_clip, cfg.noise_clip)
              : 0.0;
      sk_next(5, n) = clip(mu_next(0, n) + noise, -1.0, 1.0);
    }
    const Vec q1n = nn::mlp_forward(b.critic1_target, sk_next).row(0).transpose();
    const Vec q2n = nn::mlp_forward(b.critic2_target, sk_next).row(0).transpose();
    Vec y(N);
    for (Eigen::Index n = 0; n < N; ++n)
      y(n) = -v(n) + cfg.gamma * not_done(n) * std::min(q1n(n), q2n(n));

    Mat sk(6, N);
    sk.topRows(5) = srx;
    sk.row(5) = k.transpose();
    auto update_critic = [&](nn::MlpParams& critic, nn::AdamState& copt,
                             double& loss_out) {
      nn::MlpCache cache;
      const Vec q =
          nn::mlp_forward_cached(critic, sk, cache).row(0).transpose();
      const Vec resid = q - y;
      loss_out = resid.array().square().mean();
      Mat dq = (2.0 * inv_n * resid.transpose().array()).matrix();
      nn::MlpGrads g = nn::zero_grads(critic);
      nn::mlp_backward(critic, cache, dq, g);
      std::vector<Mat> grads = nn::grads_as_list(std::move(g));
      nn::clip_global_norm(grads, 10.0);
      nn::adam_step(copt, nn::param_refs(critic), grads);
    };
    update_critic(b.critic1, opt.critic1, losses.critic1);
    update_critic(b.critic2, opt.critic2, losses.critic2);
  }

  if (step_index % cfg.tau_d == 0) {  // delayed actor + target updates
    nn::MlpCache actor_cache;
    const Mat mu = nn::mlp_forward_cached(b.actor, srx, actor_cache);
    Mat sk(6, N);
    sk.topRows(5) = srx;
    sk.row(5) = mu.row(0);
    nn::MlpCache c1_cache;
    const Mat q1 = nn::mlp_forward_cached(b.critic1, sk, c1_cache);
    losses.actor = -q1.row(0).mean();
    // gradient of the actor loss flows through the critic input only
    Mat dq1 = Mat::Constant(1, N, -inv_n);
    nn::MlpGrads c1_g = nn::zero_grads(b.critic1);  // discarded
    const Mat dsk = nn::mlp_backward(b.critic1, c1_cache, dq1, c1_g);
    Mat dmu = dsk.row(5);
    nn::MlpGrads a_g = nn::zero_grads(b.actor);
    nn::mlp_backward(b.actor, actor_cache, dmu, a_g);
    std::vector<Mat> grads = nn::grads_as_list(std::move(a_g));
    nn::clip_global_norm(grads, 10.0);
    nn::adam_step(opt.actor, nn::param_refs(b.actor), grads);

    soft_update(b.q_target, b.q, cfg.rho);
    soft_update(b.critic1_target, b.critic1, cfg.rho);
    soft_update(b.critic2_target, b.critic2, cfg.rho);
    soft_update(b.actor_target, b.actor, cfg.rho);
  }

  if (!std::isfinite(losses.q) || !std::isfinite(losses.critic1) ||
      !std::isfinite(losses.critic2))
    throw std::runtime_error("train_step_batch: loss diverged");
  return losses;
}

struct EpisodeLog {
  int episode = 0;
  double reward = 0.0;
  double s_e = 0.0;
  double duty = 0.0;
  double eps = 0.0;
  double loss_q = 0.0;
  double loss_c1 = 0.0;
  double loss_c2 = 0.0;
  double loss_actor = 0.0;
};

struct TrainResult {
  AgentBundle bundle;
  std::vector<EpisodeLog> log;
};

/// Full training: per episode, decay the exploration variance, draw a noise
/// level, roll out with epsilon-greedy transmissions, then run n_updates
/// batched update iterations. Epsilon decays linearly to its floor at the
/// end of each episode.
inline TrainResult train(const TrainConfig& cfg, const MineModel& mine,
                         const SfrModel& sfr,
                         std::ostream* progress = nullptr,
                         int progress_every = 50) {
  cfg.validate();
  Rng rng(cfg.seed);
  StateNorm norm;
  norm.m_mean = mine.m_mean;
  norm.m_std = mine.m_std;
  AgentBundle bundle = make_agent_bundle(
      rng, RewardParams{cfg.delta_l, cfg.delta_u}, norm, cfg.k_max);
  bundle.policy_noise_var = cfg.policy_noise_var;
  bundle.noise_clip = cfg.noise_clip;
  AgentOptimizers opt = make_agent_optimizers(bundle, cfg.lr);
  ReplayBuffer replay(cfg.buffer_capacity);

  TrajectoryConfig traj_cfg;
  traj_cfg.duration_s = static_cast<double>(cfg.episode_len) / cfg.rate_hz;
  traj_cfg.sinusoids = cfg.traj_sinusoids;
  traj_cfg.f_min_hz = cfg.traj_fmin;
  traj_cfg.f_max_hz = cfg.traj_fmax;
  traj_cfg.rate_hz = cfg.rate_hz;

  double epsilon = 1.0;
  double exploration_var = cfg.exploration_var;
  std::uniform_int_distribution<size_t> upsnr(0, cfg.psnr_set.size() - 1);

  TrainResult result;
  result.log.reserve(static_cast<size_t>(cfg.episodes));
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    exploration_var *= cfg.eta_a;
    const double psnr = cfg.psnr_set[upsnr(rng)];
    const double sigma2 = psnr_to_sigma2(psnr, WorkspaceBounds{});
    const Trajectory traj = generate_trajectory(traj_cfg, rng);

    RolloutOptions opts;
    opts.epsilon = epsilon;
    opts.exploration_var = exploration_var;
    opts.collect_transitions = true;
    const RolloutResult rr =
        run_episode(traj, sigma2, bundle, mine, sfr, cfg, opts, rng);
    for (const Transition& t : rr.transitions) replay.push(t);

    EpisodeLog log;
    log.episode = ep;
    log.reward = rr.trace.total_reward;
    log.s_e = rr.trace.s_e;
    log.duty = rr.trace.duty;
    log.eps = epsilon;
    if (replay.size() >= static_cast<size_t>(cfg.batch)) {
      UpdateLosses last{};
      for (int j = 1; j <= cfg.n_updates; ++j) {
        const UpdateLosses l = train_step_batch(bundle, opt, replay, cfg, j, rng);
        last.q = l.q;
        last.critic1 = l.critic1;
        last.critic2 = l.critic2;
        if (std::isfinite(l.actor)) last.actor = l.actor;
      }
      log.loss_q = last.q;
      log.loss_c1 = last.critic1;
      log.loss_c2 = last.critic2;
      log.loss_actor = last.actor;
    }
    result.log.push_back(log);
    epsilon = std::max(epsilon - cfg.epsilon_decay, cfg.epsilon_min);

    if (progress && ((ep + 1) % progress_every == 0 || ep + 1 == cfg.episodes)) {
      (*progress) << "episode " << (ep + 1) << "/" << cfg.episodes
                  << " psnr=" << psnr << " reward=" << log.reward
                  << " S_e=" << log.s_e << " duty=" << log.duty
                  << " eps=" << log.eps << " loss_q=" << log.loss_q
                  << std::endl;
    }
  }
  result.bundle = std::move(bundle);
  return result;
}

inline void save_train_log_csv(const std::vector<EpisodeLog>& log,
                               const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "episode,reward,S_e,duty_cycle,eps,loss_q,loss_c1,loss_c2,loss_actor\n";
  out.precision(12);
  for (const auto& row : log) {
    out << row.episode << ',' << row.reward << ',' << row.s_e << ','
        << row.duty << ',' << row.eps << ',' << row.loss_q << ','
        << row.loss_c1 << ',' << row.loss_c2 << ',' << row.loss_actor << '\n';
  }
}

}  // namespace wcsim
