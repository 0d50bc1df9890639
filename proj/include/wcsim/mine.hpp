#pragma once

#include <utility>
#include <vector>

#include "wcsim/common.hpp"
#include "wcsim/env.hpp"
#include "wcsim/nn/adam.hpp"
#include "wcsim/nn/checkpoint.hpp"
#include "wcsim/nn/mlp.hpp"

namespace wcsim {

/// One velocity pair scored by the statistics network: the current sensed
/// velocity and the velocity at the last transmitted slot (mm/slot).
struct MiSamplePair {
  Vec3 v_current = Vec3::Zero();
  Vec3 v_anchor = Vec3::Zero();
};

/// Statistics network plus the moving average used by the bias-corrected
/// training objective. m_mean/m_std standardize scores for downstream use.
struct MineModel {
  nn::MlpParams stats_net;
  double e_bar0 = 1.0;
  double gamma_ma = 0.99;
  double m_mean = 0.0;
  double m_std = 1.0;
};

inline MineModel make_mine_model(Rng& rng, double gamma_ma = 0.99) {
  require(gamma_ma > 0.0 && gamma_ma < 1.0, "gamma_ma must be in (0,1)");
  MineModel m;
  m.stats_net =
      nn::make_mlp(nn::mine_stats_shape(), nn::OutputActivation::Identity, rng);
  m.gamma_ma = gamma_ma;
  return m;
}

inline Mat pairs_to_input(const std::vector<MiSamplePair>& pairs) {
  Mat X(6, static_cast<Eigen::Index>(pairs.size()));
  for (size_t k = 0; k < pairs.size(); ++k) {
    X.col(static_cast<Eigen::Index>(k)).head<3>() = pairs[k].v_current;
    X.col(static_cast<Eigen::Index>(k)).tail<3>() = pairs[k].v_anchor;
  }
  return X;
}

/// Scalar statistics-network value on the concatenated pair.
inline double mine_score(const MineModel& m, const MiSamplePair& pair) {
  Vec x(6);
  x.head<3>() = pair.v_current;
  x.tail<3>() = pair.v_anchor;
  return nn::mlp_forward(m.stats_net, x)(0);
}

inline Vec mine_scores(const MineModel& m, const Mat& inputs) {
  return nn::mlp_forward(m.stats_net, inputs).row(0).transpose();
}

/// Donsker-Varadhan estimate: mean joint score minus log mean exp of the
/// marginal scores (max-shifted exp for overflow safety).
inline double dv_estimate(const MineModel& m,
                          const std::vector<MiSamplePair>& joint,
                          const std::vector<MiSamplePair>& marginal) {
  require(!joint.empty() && !marginal.empty(),
          "dv_estimate: batches must be non-empty");
  const Vec sj = mine_scores(m, pairs_to_input(joint));
  const Vec sm = mine_scores(m, pairs_to_input(marginal));
  const double shift = sm.maxCoeff();
  const double log_mean_exp =
      shift + std::log((sm.array() - shift).exp().mean());
  return sj.mean() - log_mean_exp;
}

/// Batch mean of exp scores over marginal pairs. Raises on overflow, which
/// signals exploding scores.
inline double mine_e_bar(const MineModel& m, const Mat& marginal_in) {
  const Vec sm = mine_scores(m, marginal_in);
  const double e_bar = sm.array().exp().mean();
  if (!std::isfinite(e_bar))
    throw std::runtime_error("mine: exploding scores (e_bar not finite)");
  return e_bar;
}

/// Moving-average objective
///   V = mean(joint scores) - (e_bar / e_bar0) * log(e_bar),
/// with e_bar0 held constant. When grads_out is given it receives the
/// gradients of -V (the minimization direction) in param_refs order.
inline double mine_objective(const MineModel& m, const Mat& joint_in,
                             const Mat& marginal_in,
                             std::vector<Mat>* grads_out = nullptr) {
  const auto n = joint_in.cols();
  const auto nm = marginal_in.cols();
  require(n >= 2 && nm >= 2, "mine_objective: batch size must be >= 2");
  nn::MlpCache cache_j, cache_m;
  const Vec sj =
      nn::mlp_forward_cached(m.stats_net, joint_in, cache_j).row(0).transpose();
  const Vec sm = nn::mlp_forward_cached(m.stats_net, marginal_in, cache_m)
                     .row(0)
                     .transpose();
  const Vec exp_sm = sm.array().exp();
  const double e_bar = exp_sm.mean();
  if (!std::isfinite(e_bar))
    throw std::runtime_error("mine: exploding scores (e_bar not finite)");
  const double objective = sj.mean() - (e_bar / m.e_bar0) * std::log(e_bar);
  if (grads_out) {
    Mat dj = Mat::Constant(1, n, -1.0 / static_cast<double>(n));
    const double marg_coef =
        (std::log(e_bar) + 1.0) / (m.e_bar0 * static_cast<double>(nm));
    Mat dm = (marg_coef * exp_sm.transpose().array()).matrix();
    nn::MlpGrads grads = nn::zero_grads(m.stats_net);
    nn::mlp_backward(m.stats_net, cache_j, dj, grads);
    nn::mlp_backward(m.stats_net, cache_m, dm, grads);
    *grads_out = nn::grads_as_list(std::move(grads));
  }
  return objective;
}

/// One ascent step: refresh the moving average from this batch, then take a
/// clipped Adam step on the objective. Returns the objective value.
inline double mine_train_step(MineModel& m, nn::AdamState& opt,
                              const Mat& joint_in, const Mat& marginal_in,
                              double clip_norm = 10.0) {
  const double e_bar = mine_e_bar(m, marginal_in);
  m.e_bar0 = m.gamma_ma * m.e_bar0 + (1.0 - m.gamma_ma) * e_bar;
  std::vector<Mat> glist;
  const double objective = mine_objective(m, joint_in, marginal_in, &glist);
  nn::clip_global_norm(glist, clip_norm);
  nn::adam_step(opt, nn::param_refs(m.stats_net), glist);
  return objective;
}

/// Corpus of transmitted velocity pairs plus the received-velocity pool the
/// marginal batches are drawn from.
struct MineCorpus {
  Mat joint_current;  // (3, n)
  Mat joint_anchor;   // (3, n)
  Mat pool;           // (3, p) received velocities

  Eigen::Index size() const { return joint_current.cols(); }
};

struct MineTrainConfig {
  int batch = 1024;
  int max_epochs = 200;
  double lr = 1e-3;
  double gamma_ma = 0.99;
  double tol = 1e-4;
  int patience = 10;
  uint64_t seed = 1;
};

/// Trains the statistics network on a transmitted-pairs corpus. Stops at
/// max_epochs or when the objective has not improved by tol for `patience`
/// consecutive epochs. Score standardization stats are taken over the whole
/// joint corpus at the end.
inline MineModel train_mine(const MineCorpus& corpus,
                            const MineTrainConfig& cfg,
                            std::vector<double>* epoch_objectives = nullptr) {
  const auto n = corpus.size();
  require(n >= cfg.batch, "train_mine: corpus smaller than batch size");
  require(corpus.pool.cols() > 0, "train_mine: empty marginal pool");
  Rng rng(cfg.seed);
  MineModel model = make_mine_model(rng, cfg.gamma_ma);
  nn::AdamState opt = nn::make_adam(nn::param_refs(model.stats_net), cfg.lr);

  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::uniform_int_distribution<Eigen::Index> upool(0, corpus.pool.cols() - 1);

  double best = -std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double v_sum = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start + cfg.batch <= n; start += cfg.batch) {
      Mat joint(6, cfg.batch), marg(6, cfg.batch);
      for (int k = 0; k < cfg.batch; ++k) {
        const Eigen::Index idx = order[static_cast<size_t>(start + k)];
        joint.col(k).head<3>() = corpus.joint_current.col(idx);
        joint.col(k).tail<3>() = corpus.joint_anchor.col(idx);
        marg.col(k).head<3>() = corpus.joint_current.col(idx);
        marg.col(k).tail<3>() = corpus.pool.col(upool(rng));
      }
      v_sum += mine_train_step(model, opt, joint, marg);
      ++batches;
    }
    const double v_epoch = v_sum / std::max(batches, 1);
    if (epoch_objectives) epoch_objectives->push_back(v_epoch);
    if (v_epoch > best + cfg.tol) {
      best = v_epoch;
      best_epoch = epoch;
    } else if (epoch - best_epoch >= cfg.patience) {
      break;
    }
  }

  Mat all(6, n);
  all.topRows(3) = corpus.joint_current;
  all.bottomRows(3) = corpus.joint_anchor;
  const Vec scores = mine_scores(model, all);
  model.m_mean = scores.mean();
  const double var =
      (scores.array() - model.m_mean).square().sum() /
      std::max<double>(1.0, static_cast<double>(n - 1));
  model.m_std = std::max(std::sqrt(var), 1e-9);
  return model;
}

/// Builds a pretraining corpus from a trajectory by simulating sensing noise
/// and a Bernoulli transmission schedule (the anchor of a pair is the sensed
/// velocity at the last transmitted slot before it).
inline MineCorpus build_mine_corpus(const Trajectory& traj, double psnr_db,
                                    double tx_rate, uint64_t seed,
                                    const WorkspaceBounds& bounds = {}) {
  require(traj.size() >= 16, "build_mine_corpus: trajectory too short");
  require(tx_rate > 0.0 && tx_rate <= 1.0, "tx_rate must be in (0,1]");
  Rng rng(seed);
  const NoiseConfig noise = NoiseConfig::split_evenly(
      psnr_db >= 200.0 ? 0.0 : psnr_to_sigma2(psnr_db, bounds));
  const auto n = traj.size();
  Mat sensed(3, n);
  for (Eigen::Index i = 0; i < n; ++i)
    sensed.col(i) = sense(traj.samples.col(i), noise, rng);
  // velocities defined from slot 1 on
  Mat vel(3, n - 1);
  for (Eigen::Index i = 1; i < n; ++i)
    vel.col(i - 1) = sensed.col(i) - sensed.col(i - 1);

  std::bernoulli_distribution tx(tx_rate);
  std::vector<Vec3> cur, anc, pool;
  Eigen::Index anchor = 0;  // index into vel; slot 1 forced transmit
  pool.push_back(vel.col(0) + gaussian3(2.0 * noise.sigma_c2, rng));
  for (Eigen::Index i = 1; i < n - 1; ++i) {
    cur.push_back(vel.col(i));
    anc.push_back(vel.col(anchor));
    if (tx(rng)) {
      anchor = i;
      pool.push_back(vel.col(i) + gaussian3(2.0 * noise.sigma_c2, rng));
    }
  }
  MineCorpus corpus;
  corpus.joint_current = Mat(3, static_cast<Eigen::Index>(cur.size()));
  corpus.joint_anchor = Mat(3, static_cast<Eigen::Index>(anc.size()));
  corpus.pool = Mat(3, static_cast<Eigen::Index>(pool.size()));
  for (size_t k = 0; k < cur.size(); ++k) {
    corpus.joint_current.col(static_cast<Eigen::Index>(k)) = cur[k];
    corpus.joint_anchor.col(static_cast<Eigen::Index>(k)) = anc[k];
  }
  for (size_t k = 0; k < pool.size(); ++k)
    corpus.pool.col(static_cast<Eigen::Index>(k)) = pool[k];
  return corpus;
}

inline void save_mine_checkpoint(const MineModel& m, const std::string& path) {
  nn::json payload;
  payload["stats_net"] = nn::mlp_to_json(m.stats_net);
  payload["e_bar0"] = m.e_bar0;
  payload["gamma_ma"] = m.gamma_ma;
  payload["m_mean"] = m.m_mean;
  payload["m_std"] = m.m_std;
  nn::save_checkpoint(path, "mine", std::move(payload));
}

inline MineModel load_mine_checkpoint(const std::string& path) {
  const nn::json payload = nn::load_checkpoint(path, "mine");
  MineModel m;
  m.stats_net = nn::mlp_from_json(payload.at("stats_net"));
  m.e_bar0 = payload.at("e_bar0").get<double>();
  m.gamma_ma = payload.at("gamma_ma").get<double>();
  m.m_mean = payload.at("m_mean").get<double>();
  m.m_std = payload.at("m_std").get<double>();
  return m;
}

}  // namespace wcsim
