#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "wcsim/training.hpp"

namespace wcsim {

/// Benchmark policies. Case2 carries its sampling interval S.
enum class BaselineCase { Case1, Case2, Case3, Case4, Case5, Proposed };

struct CaseSpec {
  BaselineCase kind = BaselineCase::Proposed;
  int period = 2;  // Case2 only

  void validate() const {
    if (kind == BaselineCase::Case2)
      require(period >= 2, "case2 requires S >= 2");
  }
};

inline std::string case_name(const CaseSpec& c) {
  switch (c.kind) {
    case BaselineCase::Case1: return "case1";
    case BaselineCase::Case2: return "case2_S" + std::to_string(c.period);
    case BaselineCase::Case3: return "case3";
    case BaselineCase::Case4: return "case4";
    case BaselineCase::Case5: return "case5";
    case BaselineCase::Proposed: return "proposed";
  }
  return "unknown";
}

/// "case1", "case2:4", "case3", ..., "proposed"
inline CaseSpec parse_case(const std::string& s) {
  CaseSpec c;
  if (s == "case1") c.kind = BaselineCase::Case1;
  else if (s.rfind("case2:", 0) == 0) {
    c.kind = BaselineCase::Case2;
    c.period = std::stoi(s.substr(6));
  } else if (s == "case3") c.kind = BaselineCase::Case3;
  else if (s == "case4") c.kind = BaselineCase::Case4;
  else if (s == "case5") c.kind = BaselineCase::Case5;
  else if (s == "proposed") c.kind = BaselineCase::Proposed;
  else throw std::invalid_argument("unknown case: " + s);
  c.validate();
  return c;
}

inline bool case_needs_bundle(const CaseSpec& c) {
  return c.kind == BaselineCase::Case3 || c.kind == BaselineCase::Case4 ||
         c.kind == BaselineCase::Case5 || c.kind == BaselineCase::Proposed;
}

inline bool case_needs_mine(const CaseSpec& c) {
  return c.kind == BaselineCase::Case4 || c.kind == BaselineCase::Case5 ||
         c.kind == BaselineCase::Proposed;
}

inline bool case_needs_sfr(const CaseSpec& c) {
  return c.kind == BaselineCase::Case5 || c.kind == BaselineCase::Proposed;
}

inline RolloutOptions rollout_options_for(const CaseSpec& c,
                                          double fixed_gain = 30.0) {
  RolloutOptions o;  // frozen evaluation: no exploration anywhere
  switch (c.kind) {
    case BaselineCase::Case1:
      o.tx = RolloutOptions::TxPolicy::Always;
      o.use_sfr = false;
      o.gain = RolloutOptions::GainPolicy::Fixed;
      o.warmup = false;
      break;
    case BaselineCase::Case2:
      o.tx = RolloutOptions::TxPolicy::Periodic;
      o.period = c.period;
      o.use_sfr = false;
      o.gain = RolloutOptions::GainPolicy::Fixed;
      o.warmup = false;
      break;
    case BaselineCase::Case3:
      o.tx = RolloutOptions::TxPolicy::Always;
      o.use_sfr = false;
      o.gain = RolloutOptions::GainPolicy::Learned;
      o.warmup = false;
      break;
    case BaselineCase::Case4:
      o.tx = RolloutOptions::TxPolicy::Learned;
      o.use_sfr = false;
      o.gain = RolloutOptions::GainPolicy::Learned;
      o.warmup = true;
      break;
    case BaselineCase::Case5:
      o.tx = RolloutOptions::TxPolicy::Learned;
      o.use_sfr = true;
      o.gain = RolloutOptions::GainPolicy::Fixed;
      o.warmup = true;
      break;
    case BaselineCase::Proposed:
      o.tx = RolloutOptions::TxPolicy::Learned;
      o.use_sfr = true;
      o.gain = RolloutOptions::GainPolicy::Learned;
      o.warmup = true;
      break;
  }
  o.fixed_gain = fixed_gain;
  return o;
}

struct EvalPoint {
  double s_e = 0.0;
  double duty = 0.0;
  int episodes = 0;
};

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c = 0) {
  uint64_t h = a * 0x9e3779b97f4a7c15ULL ^ (b + 0x7f4a7c15);
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= c * 0x94d049bb133111ebULL;
  h ^= h >> 27;
  return h;
}

/// Evaluates one case at one noise level over n_eval frozen episodes.
/// Trajectories are seeded per episode only, so every case and PSNR sees the
/// same set of reference motions.
inline EvalPoint run_baseline(const CaseSpec& c, double psnr_db,
                              const TrainConfig& cfg,
                              const AgentBundle* bundle,
                              const MineModel* mine, const SfrModel* sfr,
                              int n_eval, uint64_t seed) {
  c.validate();
  if (case_needs_bundle(c) && bundle == nullptr)
    throw std::runtime_error("run_baseline: " + case_name(c) +
                             " needs an agent checkpoint");
  if (case_needs_mine(c) && mine == nullptr)
    throw std::runtime_error("run_baseline: " + case_name(c) +
                             " needs a MINE checkpoint");
  if (case_needs_sfr(c) && sfr == nullptr)
    throw std::runtime_error("run_baseline: " + case_name(c) +
                             " needs an SFR checkpoint");
  static const MineModel dummy_mine = [] {
    Rng r(0);
    return make_mine_model(r);
  }();
  static const SfrModel dummy_sfr = [] {
    Rng r(0);
    return make_sfr_model(r, 1, 1, 1, 1);
  }();
  static const AgentBundle dummy_bundle = [] {
    Rng r(0);
    return make_agent_bundle(r, RewardParams{}, StateNorm{});
  }();
  const AgentBundle& bd = bundle ? *bundle : dummy_bundle;
  const MineModel& mn = mine ? *mine : dummy_mine;
  const SfrModel& sf = sfr ? *sfr : dummy_sfr;

  TrajectoryConfig traj_cfg;
  traj_cfg.duration_s = static_cast<double>(cfg.episode_len) / cfg.rate_hz;
  traj_cfg.sinusoids = cfg.traj_sinusoids;
  traj_cfg.f_min_hz = cfg.traj_fmin;
  traj_cfg.f_max_hz = cfg.traj_fmax;
  traj_cfg.rate_hz = cfg.rate_hz;

  RolloutOptions opts = rollout_options_for(c);
  opts.use_sfr = opts.use_sfr && case_needs_sfr(c);
  const double sigma2 = psnr_to_sigma2(psnr_db, WorkspaceBounds{});

  EvalPoint point;
  point.episodes = n_eval;
  for (int ep = 0; ep < n_eval; ++ep) {
    Rng traj_rng(mix_seed(seed, static_cast<uint64_t>(ep)));
    const Trajectory traj = generate_trajectory(traj_cfg, traj_rng);
    Rng roll_rng(mix_seed(seed, static_cast<uint64_t>(ep),
                          static_cast<uint64_t>(psnr_db * 16.0) + 7));
    const RolloutResult rr =
        run_episode(traj, sigma2, bd, mn, sf, cfg, opts, roll_rng);
    point.s_e += rr.trace.s_e;
    point.duty += rr.trace.duty;
  }
  point.s_e /= std::max(n_eval, 1);
  point.duty /= std::max(n_eval, 1);
  return point;
}

struct SweepRow {
  double psnr_db = 0.0;
  std::string case_id;
  double s_e = 0.0;
  double duty = 0.0;
  int episodes = 0;
  uint64_t seed = 0;
};

inline void save_sweep_csv(const std::vector<SweepRow>& rows,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << "psnr_db,case,S_e_mm,duty_cycle,episodes,seed\n";
  out.precision(12);
  for (const auto& r : rows) {
    out << r.psnr_db << ',' << r.case_id << ',' << r.s_e << ',' << r.duty
        << ',' << r.episodes << ',' << r.seed << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

/// Cross-product evaluation; deterministic given the seed.
inline std::vector<SweepRow> sweep_psnr(
    const std::vector<CaseSpec>& cases, const std::vector<double>& psnr_list,
    const TrainConfig& cfg, const AgentBundle* bundle, const MineModel* mine,
    const SfrModel* sfr, int n_eval, uint64_t seed,
    const std::string& out_path = "", std::ostream* progress = nullptr) {
  require(!psnr_list.empty(), "sweep_psnr: empty PSNR list");
  require(!cases.empty(), "sweep_psnr: empty case list");
  std::vector<SweepRow> rows;
  for (const CaseSpec& c : cases) {
    for (double psnr : psnr_list) {
      const EvalPoint p =
          run_baseline(c, psnr, cfg, bundle, mine, sfr, n_eval, seed);
      SweepRow row;
      row.psnr_db = psnr;
      row.case_id = case_name(c);
      row.s_e = p.s_e;
      row.duty = p.duty;
      row.episodes = p.episodes;
      row.seed = seed;
      rows.push_back(row);
      if (progress)
        (*progress) << row.case_id << " @ " << psnr << " dB: S_e=" << row.s_e
                    << " mm, duty=" << row.duty << std::endl;
    }
  }
  if (!out_path.empty()) save_sweep_csv(rows, out_path);
  return rows;
}

}  // namespace wcsim
