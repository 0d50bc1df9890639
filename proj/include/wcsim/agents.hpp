#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "wcsim/common.hpp"
#include "wcsim/env.hpp"
#include "wcsim/nn/adam.hpp"
#include "wcsim/nn/checkpoint.hpp"
#include "wcsim/nn/mlp.hpp"

namespace wcsim {

/// Control-accuracy parameters of the hybrid reward. c2 > 1 whenever
/// 0 < delta_l < delta_u.
struct RewardParams {
  double delta_l = 5.0;
  double delta_u = 20.0;

  double c1() const { return 0.5 * delta_l * delta_l; }
  double c2() const { return (delta_u - 0.5 * delta_l) / (delta_u - delta_l); }

  void validate() const {
    require(delta_l > 0.0 && delta_u > delta_l,
            "reward params must satisfy 0 < delta_l < delta_u");
  }
};

/// Quadratic below delta_l, linear above.
inline double huber(double e, const RewardParams& p) {
  require(e >= 0.0, "huber: control error must be non-negative");
  if (e < p.delta_l) return 0.5 * e * e;
  return p.delta_l * e - 0.5 * p.delta_l * p.delta_l;
}

/// r = -v when transmitting, c2*(c1 - v) when silent.
inline double hybrid_reward(double v, int a, const RewardParams& p) {
  require(v >= 0.0, "hybrid_reward: loss must be non-negative");
  require(a == 0 || a == 1, "hybrid_reward: action must be 0 or 1");
  if (a == 1) return -v;
  return p.c2() * (p.c1() - v);
}

/// Transmission-agent observation.
struct TxState {
  double m = 0.0;        // statistics-network score
  double tau_hat = 0.0;  // idle slots since the last transmission
  double sigma2 = 0.0;   // overall noise variance, mm^2
};

/// Gain-agent observation. The critic input appends the action.
struct RxState {
  Vec3 delta_x = Vec3::Zero();  // robot-space tracking offset, mm
  int a = 0;
  double sigma2 = 0.0;
};

/// Fixed input scalings so every network sees unit-scale values.
struct StateNorm {
  double m_mean = 0.0;
  double m_std = 1.0;
  double tau_scale = 120.0;   // slots -> seconds
  double psnr_scale = 30.0;   // dB
  double dx_scale = 400.0;    // mm
  double scale_sq = 480000.0; // squared workspace scale for sigma2 -> dB
  double psnr_cap_db = 60.0;  // used when sigma2 is (near) zero

  double psnr_norm(double sigma2) const {
    double psnr = psnr_cap_db;
    if (sigma2 > 0.0)
      psnr = std::min(10.0 * std::log10(scale_sq / sigma2), psnr_cap_db);
    return psnr / psnr_scale;
  }
};

inline Vec3 tx_state_vec(const TxState& s, const StateNorm& n) {
  return Vec3((s.m - n.m_mean) / n.m_std, s.tau_hat / n.tau_scale,
              n.psnr_norm(s.sigma2));
}

inline Vec rx_state_vec(const RxState& s, const StateNorm& n) {
  Vec v(5);
  v.head<3>() = s.delta_x / n.dx_scale;
  v(3) = static_cast<double>(s.a);
  v(4) = n.psnr_norm(s.sigma2);
  return v;
}

/// Dueling Q network: shared trunk, scalar value head, per-action advantage
/// head combined with mean subtraction over the two actions.
struct DuelingQParams {
  nn::MlpParams trunk;  // (3,64,128,128,64), rectified output
  Mat value_W, value_b;
  Mat adv_W, adv_b;
};

inline DuelingQParams make_dueling_q(Rng& rng) {
  DuelingQParams p;
  std::vector<int> trunk_shape = {3, 64, 128, 128, 64};
  p.trunk = nn::make_mlp(trunk_shape, nn::OutputActivation::Relu, rng);
  const double bound = 1.0 / 8.0;  // 1/sqrt(64)
  std::uniform_real_distribution<double> u(-bound, bound);
  p.value_W = Mat(1, 64);
  p.adv_W = Mat(2, 64);
  for (int j = 0; j < 64; ++j) {
    p.value_W(0, j) = u(rng);
    p.adv_W(0, j) = u(rng);
    p.adv_W(1, j) = u(rng);
  }
  p.value_b = Mat::Zero(1, 1);
  p.adv_b = Mat::Zero(2, 1);
  return p;
}

inline std::vector<Mat*> param_refs(DuelingQParams& p) {
  std::vector<Mat*> refs = nn::param_refs(p.trunk);
  refs.push_back(&p.value_W);
  refs.push_back(&p.value_b);
  refs.push_back(&p.adv_W);
  refs.push_back(&p.adv_b);
  return refs;
}

/// Q(s,a) = V(s) + A(s,a) - (1/2) sum_a A(s,a); one column per sample.
inline Mat dueling_q_values(const DuelingQParams& p, const Mat& S) {
  Mat t = nn::mlp_forward(p.trunk, S);
  Mat v = p.value_W * t;
  v.colwise() += p.value_b.col(0);
  Mat a = p.adv_W * t;
  a.colwise() += p.adv_b.col(0);
  const Eigen::RowVectorXd mean_a = 0.5 * a.colwise().sum();
  Mat q(2, S.cols());
  for (int row = 0; row < 2; ++row)
    q.row(row) = v.row(0) + a.row(row) - mean_a;
  return q;
}

inline Eigen::Vector2d dueling_q_values(const DuelingQParams& p,
                                        const Vec3& s) {
  return dueling_q_values(p, Mat(s)).col(0);
}

/// Argmax over the two Q values; exact tie prefers silence (a = 0).
inline int select_transmission(const DuelingQParams& p, const Vec3& s) {
  const Eigen::Vector2d q = dueling_q_values(p, s);
  return q(1) > q(0) ? 1 : 0;
}

/// Double-Q target: the online network selects the next action, the target
/// network evaluates it.
inline double q_learning_target(const DuelingQParams& online,
                                const DuelingQParams& target,
                                const Vec3& s_next, double r, int d_o,
                                double gamma) {
  if (d_o != 0) return r;
  const int a_star = select_transmission(online, s_next);
  const Eigen::Vector2d q_next = dueling_q_values(target, s_next);
  return r + gamma * q_next(a_star);
}

/// Squared temporal-difference residual for one sample.
inline double dqn_loss(const DuelingQParams& p, double y, const Vec3& s,
                       int a) {
  const Eigen::Vector2d q = dueling_q_values(p, s);
  const double residual = y - q(a);
  return residual * residual;
}

struct DuelingQCache {
  nn::MlpCache trunk;
  Mat trunk_out;
  Mat adv;  // pre-combination advantages
};

inline Mat dueling_q_forward_cached(const DuelingQParams& p, const Mat& S,
                                    DuelingQCache& cache) {
  cache.trunk_out = nn::mlp_forward_cached(p.trunk, S, cache.trunk);
  Mat v = p.value_W * cache.trunk_out;
  v.colwise() += p.value_b.col(0);
  cache.adv = p.adv_W * cache.trunk_out;
  cache.adv.colwise() += p.adv_b.col(0);
  const Eigen::RowVectorXd mean_a = 0.5 * cache.adv.colwise().sum();
  Mat q(2, S.cols());
  for (int row = 0; row < 2; ++row)
    q.row(row) = v.row(0) + cache.adv.row(row) - mean_a;
  return q;
}

/// Backward pass for the dueling head + trunk; gradients in param_refs order.
inline std::vector<Mat> dueling_q_backward(const DuelingQParams& p,
                                           const DuelingQCache& cache,
                                           const Mat& dQ) {
  const Eigen::RowVectorXd sum_dq = dQ.colwise().sum();
  Mat dV = sum_dq;
  Mat dA(2, dQ.cols());
  for (int row = 0; row < 2; ++row) dA.row(row) = dQ.row(row) - 0.5 * sum_dq;
  Mat dtrunk = p.value_W.transpose() * dV + p.adv_W.transpose() * dA;
  // trunk output is rectified; mask through the cached activation
  nn::MlpGrads tg = nn::zero_grads(p.trunk);
  nn::mlp_backward(p.trunk, cache.trunk, dtrunk, tg);
  std::vector<Mat> grads = nn::grads_as_list(std::move(tg));
  grads.push_back(dV * cache.trunk_out.transpose());
  grads.push_back(Mat(dV.rowwise().sum()));
  grads.push_back(dA * cache.trunk_out.transpose());
  grads.push_back(Mat(dA.rowwise().sum()));
  return grads;
}

/// Clipped deterministic action with exploration noise.
inline double actor_action(const nn::MlpParams& actor, const Vec& s,
                           double exploration_var, Rng& rng) {
  double mu = nn::mlp_forward(actor, s)(0);
  if (exploration_var > 0.0) {
    std::normal_distribution<double> n(0.0, std::sqrt(exploration_var));
    mu += n(rng);
  }
  return clip(mu, -1.0, 1.0);
}

/// Linear map from the normalized action to [0, K_max].
inline double gain_from_action(double mu_value, double k_max) {
  require(mu_value >= -1.0 && mu_value <= 1.0,
          "gain_from_action: value outside [-1,1]");
  return 0.5 * k_max * (1.0 + mu_value);
}

/// Target value with clipped policy noise and the pessimistic twin critic.
/// The immediate reward is the negated control loss.
inline double td3_target(const nn::MlpParams& actor_target,
                         const nn::MlpParams& critic1_target,
                         const nn::MlpParams& critic2_target,
                         const Vec& s_next, double v, int d_o, double gamma,
                         double policy_noise_var, double noise_clip,
                         Rng& rng) {
  if (d_o != 0) return -v;
  std::normal_distribution<double> n(0.0, std::sqrt(policy_noise_var));
  const double noise =
      policy_noise_var > 0.0 ? clip(n(rng), -noise_clip, noise_clip) : 0.0;
  const double k_next =
      clip(nn::mlp_forward(actor_target, s_next)(0) + noise, -1.0, 1.0);
  Vec sk(6);
  sk.head(5) = s_next;
  sk(5) = k_next;
  const double q1 = nn::mlp_forward(critic1_target, sk)(0);
  const double q2 = nn::mlp_forward(critic2_target, sk)(0);
  return -v + gamma * std::min(q1, q2);
}

/// Mean squared error of one critic against precomputed targets.
inline double critic_loss(const nn::MlpParams& critic, const Mat& sk,
                          const Vec& y) {
  const Vec q = nn::mlp_forward(critic, sk).row(0).transpose();
  return (y - q).array().square().mean();
}

/// Negated mean critic-1 value at on-policy actions.
inline double actor_loss(const nn::MlpParams& actor,
                         const nn::MlpParams& critic1, const Mat& s) {
  const Vec mu = nn::mlp_forward(actor, s).row(0).transpose();
  Mat sk(6, s.cols());
  sk.topRows(5) = s;
  sk.row(5) = mu.transpose();
  return -nn::mlp_forward(critic1, sk).row(0).mean();
}

/// Idle-time recursion of the transmitter.
inline double update_idle_time(double tau_hat, int a, double tau_slot = 1.0) {
  require(tau_hat >= 0.0, "update_idle_time: negative idle time");
  return a == 1 ? 0.0 : tau_hat + tau_slot;
}

/// One replay record.
struct Transition {
  TxState tx;
  RxState rx;
  int a = 0;
  double k = 0.0;
  double r = 0.0;
  double v = 0.0;
  TxState tx_next;
  RxState rx_next;
  int d_o = 0;
};

/// Ring buffer with uniform with-replacement sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity) : cap_(capacity) {
    require(capacity >= 1, "ReplayBuffer: capacity must be >= 1");
    buf_.reserve(std::min<size_t>(capacity, 1 << 20));
  }

  void push(const Transition& t) {
    if (buf_.size() < cap_) {
      buf_.push_back(t);
    } else {
      buf_[head_] = t;
      head_ = (head_ + 1) % cap_;
    }
  }

  size_t size() const { return buf_.size(); }
  size_t capacity() const { return cap_; }
  const Transition& at(size_t i) const { return buf_[i]; }

  std::vector<const Transition*> sample(size_t n, Rng& rng) const {
    if (buf_.size() < n)
      throw std::runtime_error("ReplayBuffer: not enough samples");
    std::uniform_int_distribution<size_t> u(0, buf_.size() - 1);
    std::vector<const Transition*> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = &buf_[u(rng)];
    return out;
  }

 private:
  size_t cap_;
  size_t head_ = 0;
  std::vector<Transition> buf_;
};

/// With probability epsilon explore with a Bernoulli(p_a) transmission,
/// otherwise follow the policy.
inline int epsilon_greedy_decision(double epsilon, double p_a,
                                   int policy_action, Rng& rng) {
  require(epsilon >= 0.0 && epsilon <= 1.0, "epsilon must be in [0,1]");
  require(p_a >= 0.0 && p_a < 1.0, "p_a must be in [0,1)");
  std::bernoulli_distribution explore(epsilon);
  if (epsilon > 0.0 && explore(rng)) {
    std::bernoulli_distribution b(p_a);
    return b(rng) ? 1 : 0;
  }
  return policy_action;
}

/// Everything the two agents need at run time, plus target copies.
struct AgentBundle {
  DuelingQParams q, q_target;
  nn::MlpParams actor, actor_target;
  nn::MlpParams critic1, critic1_target;
  nn::MlpParams critic2, critic2_target;
  RewardParams reward;
  StateNorm norm;
  double k_max = 30.0;
  double policy_noise_var = 0.2;
  double noise_clip = 0.1;
};

inline AgentBundle make_agent_bundle(Rng& rng, const RewardParams& reward,
                                     const StateNorm& norm,
                                     double k_max = 30.0) {
  reward.validate();
  AgentBundle b;
  b.q = make_dueling_q(rng);
  b.q_target = b.q;
  b.actor = nn::make_mlp(nn::actor_shape(), nn::OutputActivation::Tanh, rng);
  b.actor_target = b.actor;
  b.critic1 =
      nn::make_mlp(nn::critic_shape(), nn::OutputActivation::Identity, rng);
  b.critic1_target = b.critic1;
  b.critic2 =
      nn::make_mlp(nn::critic_shape(), nn::OutputActivation::Identity, rng);
  b.critic2_target = b.critic2;
  b.reward = reward;
  b.norm = norm;
  b.k_max = k_max;
  return b;
}

inline nn::json dueling_to_json(const DuelingQParams& p) {
  nn::json j;
  j["trunk"] = nn::mlp_to_json(p.trunk);
  j["value_W"] = nn::mat_to_json(p.value_W);
  j["value_b"] = nn::mat_to_json(p.value_b);
  j["adv_W"] = nn::mat_to_json(p.adv_W);
  j["adv_b"] = nn::mat_to_json(p.adv_b);
  return j;
}

inline DuelingQParams dueling_from_json(const nn::json& j) {
  DuelingQParams p;
  p.trunk = nn::mlp_from_json(j.at("trunk"));
  p.value_W = nn::mat_from_json(j.at("value_W"));
  p.value_b = nn::mat_from_json(j.at("value_b"));
  p.adv_W = nn::mat_from_json(j.at("adv_W"));
  p.adv_b = nn::mat_from_json(j.at("adv_b"));
  return p;
}

inline void save_agent_bundle(const AgentBundle& b, const std::string& path) {
  nn::json payload;
  payload["q"] = dueling_to_json(b.q);
  payload["q_target"] = dueling_to_json(b.q_target);
  payload["actor"] = nn::mlp_to_json(b.actor);
  payload["actor_target"] = nn::mlp_to_json(b.actor_target);
  payload["critic1"] = nn::mlp_to_json(b.critic1);
  payload["critic1_target"] = nn::mlp_to_json(b.critic1_target);
  payload["critic2"] = nn::mlp_to_json(b.critic2);
  payload["critic2_target"] = nn::mlp_to_json(b.critic2_target);
  payload["delta_l"] = b.reward.delta_l;
  payload["delta_u"] = b.reward.delta_u;
  payload["m_mean"] = b.norm.m_mean;
  payload["m_std"] = b.norm.m_std;
  payload["k_max"] = b.k_max;
  payload["policy_noise_var"] = b.policy_noise_var;
  payload["noise_clip"] = b.noise_clip;
  nn::save_checkpoint(path, "agents", std::move(payload));
}

inline AgentBundle load_agent_bundle(const std::string& path) {
  const nn::json payload = nn::load_checkpoint(path, "agents");
  AgentBundle b;
  b.q = dueling_from_json(payload.at("q"));
  b.q_target = dueling_from_json(payload.at("q_target"));
  b.actor = nn::mlp_from_json(payload.at("actor"));
  b.actor_target = nn::mlp_from_json(payload.at("actor_target"));
  b.critic1 = nn::mlp_from_json(payload.at("critic1"));
  b.critic1_target = nn::mlp_from_json(payload.at("critic1_target"));
  b.critic2 = nn::mlp_from_json(payload.at("critic2"));
  b.critic2_target = nn::mlp_from_json(payload.at("critic2_target"));
  b.reward.delta_l = payload.at("delta_l").get<double>();
  b.reward.delta_u = payload.at("delta_u").get<double>();
  b.norm.m_mean = payload.at("m_mean").get<double>();
  b.norm.m_std = payload.at("m_std").get<double>();
  b.k_max = payload.at("k_max").get<double>();
  b.policy_noise_var = payload.at("policy_noise_var").get<double>();
  b.noise_clip = payload.at("noise_clip").get<double>();
  return b;
}

}  // namespace wcsim
