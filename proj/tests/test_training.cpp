#include <catch2/catch_amalgamated.hpp>

#include "testutil.hpp"
#include "wcsim/training.hpp"

using namespace wcsim;

namespace {

struct TinyWorld {
  TrainConfig cfg;
  MineModel mine;
  SfrModel sfr;
  AgentBundle bundle;

  explicit TinyWorld(uint64_t seed = 5) {
    cfg.T = 10;
    cfg.M = 3;
    cfg.episode_len = 150;
    cfg.episodes = 3;
    cfg.batch = 64;
    cfg.n_updates = 4;
    cfg.buffer_capacity = 5000;
    cfg.delta_l = 120.0;
    cfg.delta_u = 360.0;
    cfg.seed = seed;
    Rng rng(seed);
    mine = make_mine_model(rng);
    sfr = make_sfr_model(rng, cfg.T, cfg.M, 6, 1);
    bundle = make_agent_bundle(rng, RewardParams{cfg.delta_l, cfg.delta_u},
                               StateNorm{});
  }

  Trajectory trajectory(uint64_t seed) const {
    TrajectoryConfig tcfg;
    tcfg.duration_s = cfg.episode_len / cfg.rate_hz;
    Rng rng(seed);
    return generate_trajectory(tcfg, rng);
  }
};

AgentBundle always_transmit_bundle(const AgentBundle& base) {
  AgentBundle b = base;
  b.q.adv_W.setZero();
  b.q.adv_b << 0.0, 10.0;  // Q(.,1) always wins
  return b;
}

}  // namespace

TEST_CASE("warm-up forces transmission for every slot i <= T") {
  TinyWorld w;
  const Trajectory traj = w.trajectory(1);
  // a policy hard-wired to silence cannot override the warm-up
  AgentBundle silent = w.bundle;
  silent.q.adv_W.setZero();
  silent.q.adv_b << 10.0, 0.0;
  RolloutOptions opts;
  opts.collect_transitions = true;
  Rng rng(2);
  const auto rr = run_episode(traj, psnr_to_sigma2(15.0, {}), silent, w.mine,
                              w.sfr, w.cfg, opts, rng);
  for (int i = 0; i <= w.cfg.T; ++i)
    REQUIRE(rr.trace.slots[static_cast<size_t>(i)].a == 1);
  // and with this policy everything after the warm-up is silent
  for (size_t i = static_cast<size_t>(w.cfg.T) + 1; i < rr.trace.slots.size();
       ++i)
    REQUIRE(rr.trace.slots[i].a == 0);
}

TEST_CASE("hard-wired always-transmit policy reproduces the baseline trace") {
  TinyWorld w;
  const Trajectory traj = w.trajectory(3);
  const AgentBundle always = always_transmit_bundle(w.bundle);
  const double sigma2 = psnr_to_sigma2(18.0, {});

  RolloutOptions learned;
  learned.epsilon = 0.0;
  learned.gain = RolloutOptions::GainPolicy::Fixed;
  learned.fixed_gain = 15.0;
  Rng rng1(77);
  const auto a = run_episode(traj, sigma2, always, w.mine, w.sfr, w.cfg,
                             learned, rng1);

  RolloutOptions baseline;
  baseline.tx = RolloutOptions::TxPolicy::Always;
  baseline.use_sfr = false;
  baseline.gain = RolloutOptions::GainPolicy::Fixed;
  baseline.fixed_gain = 15.0;
  baseline.warmup = false;
  Rng rng2(77);
  const auto b = run_episode(traj, sigma2, always, w.mine, w.sfr, w.cfg,
                             baseline, rng2);

  REQUIRE(a.trace.duty == 1.0);
  REQUIRE(b.trace.duty == 1.0);
  REQUIRE(a.trace.s_e == b.trace.s_e);
  for (size_t i = 0; i < a.trace.slots.size(); ++i) {
    REQUIRE((a.trace.slots[i].x_bar - b.trace.slots[i].x_bar).norm() == 0.0);
    REQUIRE((a.trace.slots[i].x_tilde - b.trace.slots[i].x_tilde).norm() ==
            0.0);
  }
}

TEST_CASE("zero-noise always-transmit mid gain tracks a slow sinusoid") {
  TinyWorld w;
  w.cfg.episode_len = 1200;
  Trajectory traj;
  traj.rate = 120.0;
  traj.samples = Mat(3, 1200);
  for (int i = 0; i < 1200; ++i) {
    const double t = i / 120.0;
    const double s = std::sin(2.0 * M_PI * 0.05 * t);
    traj.samples.col(i) = Vec3(79.0 + 50.0 * s, 25.0 + 50.0 * s, -60.0 + 50.0 * s);
  }
  RolloutOptions opts;
  opts.tx = RolloutOptions::TxPolicy::Always;
  opts.use_sfr = false;
  opts.gain = RolloutOptions::GainPolicy::Fixed;
  opts.fixed_gain = 15.0;
  opts.warmup = false;
  Rng rng(5);
  const auto rr = run_episode(traj, 0.0, w.bundle, w.mine, w.sfr, w.cfg, opts,
                              rng);
  double acc = 0.0;
  int n = 0;
  for (size_t i = 200; i < rr.trace.slots.size(); ++i) {
    acc += rr.trace.slots[i].e;
    ++n;
  }
  REQUIRE(acc / n < 2.0);
}

TEST_CASE("stored transitions chain: S_next of record i equals S of i+1") {
  TinyWorld w;
  const Trajectory traj = w.trajectory(11);
  RolloutOptions opts;
  opts.epsilon = 0.35;
  opts.exploration_var = 0.1;
  opts.collect_transitions = true;
  Rng rng(13);
  const auto rr = run_episode(traj, psnr_to_sigma2(12.0, {}), w.bundle, w.mine,
                              w.sfr, w.cfg, opts, rng);
  REQUIRE(rr.transitions.size() == static_cast<size_t>(w.cfg.episode_len));
  for (size_t i = 0; i + 1 < rr.transitions.size(); ++i) {
    const Transition& cur = rr.transitions[i];
    const Transition& next = rr.transitions[i + 1];
    REQUIRE(cur.d_o == 0);
    REQUIRE(cur.tx_next.m == next.tx.m);
    REQUIRE(cur.tx_next.tau_hat == next.tx.tau_hat);
    REQUIRE(cur.tx_next.sigma2 == next.tx.sigma2);
    REQUIRE((cur.rx_next.delta_x - next.rx.delta_x).norm() == 0.0);
    REQUIRE(cur.rx_next.a == next.rx.a);
    REQUIRE(cur.k >= -1.0);
    REQUIRE(cur.k <= 1.0);
    REQUIRE(rr.transitions[i].v >= 0.0);
  }
  REQUIRE(rr.transitions.back().d_o == 1);
}

TEST_CASE("idle-time state follows the transmission pattern") {
  TinyWorld w;
  const Trajectory traj = w.trajectory(21);
  AgentBundle silent = w.bundle;
  silent.q.adv_W.setZero();
  silent.q.adv_b << 10.0, 0.0;
  RolloutOptions opts;
  opts.collect_transitions = true;
  Rng rng(23);
  const auto rr = run_episode(traj, psnr_to_sigma2(15.0, {}), silent, w.mine,
                              w.sfr, w.cfg, opts, rng);
  // after the warm-up the policy stays silent, so tau grows linearly
  for (size_t i = static_cast<size_t>(w.cfg.T) + 2; i < rr.transitions.size();
       ++i) {
    const double expect =
        static_cast<double>(i) - static_cast<double>(w.cfg.T) - 1.0;
    REQUIRE(rr.transitions[i].tx.tau_hat == expect);
  }
}

TEST_CASE("soft update blends parameters with the conventional direction") {
  Rng rng(31);
  nn::MlpParams online = nn::make_mlp({1, 1}, nn::OutputActivation::Identity, rng);
  nn::MlpParams target = online;
  online.W[0](0, 0) = 1.0;
  target.W[0](0, 0) = 0.0;

  nn::MlpParams t0 = target;
  soft_update(t0, online, 0.0);
  REQUIRE(t0.W[0](0, 0) == 0.0);

  nn::MlpParams t1 = target;
  soft_update(t1, online, 1.0);
  REQUIRE(t1.W[0](0, 0) == 1.0);

  nn::MlpParams t2 = target;
  soft_update(t2, online, 0.005);
  REQUIRE(t2.W[0](0, 0) == Catch::Approx(0.005));

  nn::MlpParams wrong = nn::make_mlp({2, 1}, nn::OutputActivation::Identity, rng);
  REQUIRE_THROWS_AS(soft_update(wrong, online, 0.5), std::invalid_argument);
}

TEST_CASE("update cadence: critics every step, actor only on tau_d multiples") {
  TinyWorld w;
  w.cfg.tau_d = 3;
  Rng rng(41);
  ReplayBuffer replay(4096);
  // synthetic replay
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 512; ++i) {
    Transition t;
    t.tx = {g(rng), std::abs(g(rng)) * 10, 4800.0};
    t.rx = {Vec3(g(rng), g(rng), g(rng)) * 50, i % 2, 4800.0};
    t.a = i % 2;
    t.k = clip(g(rng), -1.0, 1.0);
    t.v = std::abs(g(rng)) * 100;
    t.r = hybrid_reward(t.v, t.a, w.bundle.reward);
    t.tx_next = t.tx;
    t.rx_next = t.rx;
    t.d_o = (i % 100 == 99) ? 1 : 0;
    replay.push(t);
  }
  AgentOptimizers opt = make_agent_optimizers(w.bundle, 1e-3);
  int actor_updates = 0, q_updates = 0;
  for (int j = 1; j <= 20; ++j) {
    const Mat actor_before = w.bundle.actor.W[0];
    const Mat q_before = w.bundle.q.trunk.W[0];
    const Mat qt_before = w.bundle.q_target.trunk.W[0];
    const UpdateLosses l = train_step_batch(w.bundle, opt, replay, w.cfg, j, rng);
    if ((w.bundle.actor.W[0] - actor_before).norm() > 0) ++actor_updates;
    if ((w.bundle.q.trunk.W[0] - q_before).norm() > 0) ++q_updates;
    const bool target_moved =
        (w.bundle.q_target.trunk.W[0] - qt_before).norm() > 0;
    REQUIRE(target_moved == (j % 3 == 0));
    REQUIRE(std::isfinite(l.q));
    REQUIRE(std::isfinite(l.critic1));
    REQUIRE(std::isfinite(l.critic2));
    REQUIRE((j % 3 == 0) == std::isfinite(l.actor));
  }
  REQUIRE(q_updates == 20);
  REQUIRE(actor_updates == 20 / 3);
}

TEST_CASE("losses stay finite over 100 update steps on synthetic replay") {
  TinyWorld w;
  Rng rng(43);
  ReplayBuffer replay(4096);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 1024; ++i) {
    Transition t;
    t.tx = {g(rng), std::abs(g(rng)) * 20, 4800.0};
    t.rx = {Vec3(g(rng), g(rng), g(rng)) * 100, i % 2, 4800.0};
    t.a = (i * 7) % 3 == 0 ? 1 : 0;
    t.k = clip(g(rng), -1.0, 1.0);
    t.v = huber(std::abs(g(rng)) * 150, w.bundle.reward);
    t.r = hybrid_reward(t.v, t.a, w.bundle.reward);
    t.tx_next = {g(rng), std::abs(g(rng)) * 20, 4800.0};
    t.rx_next = {Vec3(g(rng), g(rng), g(rng)) * 100, t.a, 4800.0};
    t.d_o = (i % 150 == 149) ? 1 : 0;
    replay.push(t);
  }
  AgentOptimizers opt = make_agent_optimizers(w.bundle, 1e-3);
  for (int j = 1; j <= 100; ++j) {
    const UpdateLosses l = train_step_batch(w.bundle, opt, replay, w.cfg, j, rng);
    REQUIRE(std::isfinite(l.q));
    REQUIRE(std::isfinite(l.critic1));
    REQUIRE(std::isfinite(l.critic2));
  }
}

TEST_CASE("train_step_batch requires enough replay") {
  TinyWorld w;
  ReplayBuffer replay(128);
  replay.push(Transition{});
  AgentOptimizers opt = make_agent_optimizers(w.bundle, 1e-3);
  Rng rng(1);
  REQUIRE_THROWS_AS(train_step_batch(w.bundle, opt, replay, w.cfg, 1, rng),
                    std::runtime_error);
}

TEST_CASE("epsilon schedule arithmetic") {
  // linear decay with floor
  auto eps_after = [](int episodes) {
    double eps = 1.0;
    for (int i = 0; i < episodes; ++i) eps = std::max(eps - 7e-4, 0.05);
    return eps;
  };
  REQUIRE(eps_after(1000) == Catch::Approx(0.3).margin(1e-9));
  // floor reached at ceil(0.95 / 7e-4) = 1358
  REQUIRE(eps_after(1357) > 0.05);
  REQUIRE(eps_after(1358) == 0.05);
}

TEST_CASE("train runs end-to-end on a tiny configuration") {
  TinyWorld w(7);
  const TrainResult r = train(w.cfg, w.mine, w.sfr);
  REQUIRE(r.log.size() == 3);
  for (const auto& row : r.log) {
    REQUIRE(std::isfinite(row.reward));
    REQUIRE(row.duty >= 0.0);
    REQUIRE(row.duty <= 1.0);
    REQUIRE(row.s_e >= 0.0);
  }
  // epsilon decayed once per episode
  REQUIRE(r.log[0].eps == 1.0);
  REQUIRE(r.log[1].eps == Catch::Approx(1.0 - w.cfg.epsilon_decay));
  REQUIRE(r.log[2].eps == Catch::Approx(1.0 - 2 * w.cfg.epsilon_decay));
}

TEST_CASE("training is reproducible run-to-run with a fixed seed") {
  TinyWorld w1(9), w2(9);
  const TrainResult a = train(w1.cfg, w1.mine, w1.sfr);
  const TrainResult b = train(w2.cfg, w2.mine, w2.sfr);
  REQUIRE(a.log.size() == b.log.size());
  for (size_t i = 0; i < a.log.size(); ++i) {
    REQUIRE(a.log[i].reward == b.log[i].reward);
    REQUIRE(a.log[i].s_e == b.log[i].s_e);
    REQUIRE(a.log[i].loss_q == b.log[i].loss_q);
  }
  REQUIRE(std::memcmp(a.bundle.actor.W[0].data(), b.bundle.actor.W[0].data(),
                      sizeof(double) *
                          static_cast<size_t>(a.bundle.actor.W[0].size())) == 0);
  REQUIRE(std::memcmp(a.bundle.q.trunk.W[1].data(), b.bundle.q.trunk.W[1].data(),
                      sizeof(double) *
                          static_cast<size_t>(a.bundle.q.trunk.W[1].size())) == 0);
}

TEST_CASE("run_episode rejects a warm-up shorter than the SFR window") {
  TinyWorld w;
  w.cfg.T = 5;  // SFR expects 10
  const Trajectory traj = w.trajectory(2);
  RolloutOptions opts;
  Rng rng(3);
  REQUIRE_THROWS_AS(run_episode(traj, 100.0, w.bundle, w.mine, w.sfr, w.cfg,
                                opts, rng),
                    std::invalid_argument);
}

TEST_CASE("train log csv writes the documented schema") {
  std::vector<EpisodeLog> log(2);
  log[0].episode = 0;
  log[0].reward = 1.5;
  log[1].episode = 1;
  log[1].loss_actor = -0.25;
  const std::string path = "train_log_test.csv";
  save_train_log_csv(log, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  REQUIRE(header ==
          "episode,reward,S_e,duty_cycle,eps,loss_q,loss_c1,loss_c2,loss_actor");
  std::string row;
  std::getline(in, row);
  REQUIRE(row.rfind("0,1.5,", 0) == 0);
  in.close();
  std::remove(path.c_str());
}
