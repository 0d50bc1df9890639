// Command-line surface: data generation, pretraining, training, and
// evaluation sweeps for the semantic-communication wireless control
// simulator.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "wcsim/config.hpp"
#include "wcsim/eval.hpp"
#include "wcsim/mine.hpp"
#include "wcsim/sfr.hpp"
#include "wcsim/training.hpp"

namespace fs = std::filesystem;
using namespace wcsim;

namespace {

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

int cmd_gen_data(const std::string& out, uint64_t seed, double duration,
                 int sinusoids, double fmin, double fmax) {
  TrajectoryConfig cfg;
  cfg.duration_s = duration;
  cfg.sinusoids = sinusoids;
  cfg.f_min_hz = fmin;
  cfg.f_max_hz = fmax;
  Rng rng(seed);
  const Trajectory traj = generate_trajectory(cfg, rng);
  save_trajectory_csv(traj, out);
  std::cout << "wrote " << traj.size() << " samples to " << out << "\n";
  return 0;
}

int cmd_pretrain_mine(const std::string& data, const std::string& out,
                      double psnr, bool noiseless, double tx_rate, int epochs,
                      int batch, double lr, double gamma_ma, uint64_t seed) {
  const Trajectory traj = load_trajectory_csv(data);
  const MineCorpus corpus =
      build_mine_corpus(traj, noiseless ? 1e9 : psnr, tx_rate, seed + 101);
  MineTrainConfig cfg;
  cfg.batch = batch;
  cfg.max_epochs = epochs;
  cfg.lr = lr;
  cfg.gamma_ma = gamma_ma;
  cfg.seed = seed;
  std::vector<double> objectives;
  const MineModel model = train_mine(corpus, cfg, &objectives);
  save_mine_checkpoint(model, out);
  std::cout << "trained " << objectives.size() << " epochs, final objective "
            << (objectives.empty() ? 0.0 : objectives.back()) << ", wrote "
            << out << "\n";
  return 0;
}

int cmd_pretrain_sfr(const std::string& data, const std::string& out,
                     double psnr, bool noiseless, int iters, int batch,
                     double lr, double lr_end, int T, int M, int hidden,
                     int layers, uint64_t seed) {
  const Trajectory traj = load_trajectory_csv(data);
  SfrTrainConfig cfg;
  cfg.iters = iters;
  cfg.batch = batch;
  cfg.lr = lr;
  cfg.lr_end = lr_end;
  cfg.T = T;
  cfg.M = M;
  cfg.hidden = hidden;
  cfg.layers = layers;
  cfg.seed = seed;
  cfg.noise_sigma2 =
      noiseless ? 0.0 : psnr_to_sigma2(psnr, WorkspaceBounds{});
  std::vector<double> losses;
  const SfrModel model = train_sfr({traj.samples}, cfg, WorkspaceBounds{},
                                   &losses);
  save_sfr_checkpoint(model, out);
  std::cout << "trained " << iters << " iterations, final loss "
            << (losses.empty() ? 0.0 : losses.back()) << " mm^2, wrote " << out
            << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& mine_path,
              const std::string& sfr_path, const std::string& out_dir,
              int episodes_override, int episode_len_override,
              double delta_l_override, double delta_u_override,
              int64_t seed_override) {
  TrainConfig cfg;
  if (!config_path.empty()) cfg = load_train_config(config_path);
  if (episodes_override > 0) cfg.episodes = episodes_override;
  if (episode_len_override > 0) cfg.episode_len = episode_len_override;
  if (delta_l_override > 0) cfg.delta_l = delta_l_override;
  if (delta_u_override > 0) cfg.delta_u = delta_u_override;
  if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
  cfg.validate();

  const MineModel mine = load_mine_checkpoint(mine_path);
  const SfrModel sfr = load_sfr_checkpoint(sfr_path);
  if (cfg.T < sfr.T)
    throw std::runtime_error("config T is smaller than the SFR window");

  fs::create_directories(out_dir);
  const TrainResult result = train(cfg, mine, sfr, &std::cerr);
  save_agent_bundle(result.bundle, out_dir + "/bundle.json");
  save_train_log_csv(result.log, out_dir + "/train_log.csv");
  save_train_config(cfg, out_dir + "/config_used.txt");
  std::cout << "trained " << cfg.episodes << " episodes; bundle and log in "
            << out_dir << "\n";
  return 0;
}

struct LoadedComponents {
  std::optional<AgentBundle> bundle;
  std::optional<MineModel> mine;
  std::optional<SfrModel> sfr;
};

LoadedComponents load_components(const std::string& bundle_path,
                                 const std::string& mine_path,
                                 const std::string& sfr_path) {
  LoadedComponents c;
  if (!bundle_path.empty()) c.bundle = load_agent_bundle(bundle_path);
  if (!mine_path.empty()) c.mine = load_mine_checkpoint(mine_path);
  if (!sfr_path.empty()) c.sfr = load_sfr_checkpoint(sfr_path);
  return c;
}

int cmd_eval(const std::string& bundle_path, const std::string& mine_path,
             const std::string& sfr_path, const std::string& case_str,
             double psnr, int episodes, uint64_t seed,
             const std::string& config_path) {
  TrainConfig cfg;
  if (!config_path.empty()) cfg = load_train_config(config_path);
  const CaseSpec spec = parse_case(case_str);
  const LoadedComponents c =
      load_components(bundle_path, mine_path, sfr_path);
  const EvalPoint p = run_baseline(
      spec, psnr, cfg, c.bundle ? &*c.bundle : nullptr,
      c.mine ? &*c.mine : nullptr, c.sfr ? &*c.sfr : nullptr, episodes, seed);
  std::cout << "case=" << case_name(spec) << " psnr_db=" << psnr
            << " S_e_mm=" << p.s_e << " duty_cycle=" << p.duty
            << " episodes=" << p.episodes << "\n";
  return 0;
}

int cmd_sweep(const std::string& bundle_path, const std::string& mine_path,
              const std::string& sfr_path, const std::string& cases_str,
              const std::string& psnr_str, const std::string& out,
              int episodes, uint64_t seed, const std::string& config_path) {
  TrainConfig cfg;
  if (!config_path.empty()) cfg = load_train_config(config_path);
  std::vector<CaseSpec> cases;
  for (const auto& s : split_commas(cases_str)) cases.push_back(parse_case(s));
  std::vector<double> psnrs;
  for (const auto& s : split_commas(psnr_str)) psnrs.push_back(std::stod(s));
  const LoadedComponents c =
      load_components(bundle_path, mine_path, sfr_path);
  sweep_psnr(cases, psnrs, cfg, c.bundle ? &*c.bundle : nullptr,
             c.mine ? &*c.mine : nullptr, c.sfr ? &*c.sfr : nullptr, episodes,
             seed, out, &std::cerr);
  std::cout << "wrote sweep to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-sequence semantic communication control simulator"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data",
                                 "Generate a synthetic sensor trajectory CSV");
  std::string gen_out;
  uint64_t gen_seed = 1;
  double gen_duration = 20.0, gen_fmin = 0.05, gen_fmax = 0.5;
  int gen_sinusoids = 3;
  gen->add_option("--out", gen_out, "Output CSV path")->required();
  gen->add_option("--seed", gen_seed, "RNG seed");
  gen->add_option("--duration", gen_duration, "Duration in seconds");
  gen->add_option("--sinusoids", gen_sinusoids, "Sinusoids per axis");
  gen->add_option("--fmin", gen_fmin, "Minimum frequency (Hz)");
  gen->add_option("--fmax", gen_fmax, "Maximum frequency (Hz)");

  // pretrain-mine
  auto* pm = app.add_subcommand(
      "pretrain-mine", "Train the mutual-information statistics network");
  std::string pm_data, pm_out;
  double pm_psnr = 15.0, pm_rate = 0.175, pm_lr = 1e-3, pm_gamma = 0.99;
  int pm_epochs = 200, pm_batch = 1024;
  uint64_t pm_seed = 1;
  bool pm_noiseless = false;
  pm->add_option("--data", pm_data, "Trajectory CSV")->required();
  pm->add_option("--out", pm_out, "Checkpoint path")->required();
  pm->add_option("--psnr", pm_psnr, "Noise level for the corpus (dB)");
  pm->add_flag("--noiseless", pm_noiseless, "Build the corpus without noise");
  pm->add_option("--tx-rate", pm_rate, "Simulated transmission rate");
  pm->add_option("--epochs", pm_epochs, "Maximum epochs");
  pm->add_option("--batch", pm_batch, "Batch size");
  pm->add_option("--lr", pm_lr, "Learning rate");
  pm->add_option("--gamma-ma", pm_gamma, "Moving-average weight");
  pm->add_option("--seed", pm_seed, "RNG seed");

  // pretrain-sfr
  auto* ps = app.add_subcommand("pretrain-sfr",
                                "Train the receiver-side reconstructor");
  std::string ps_data, ps_out;
  double ps_psnr = 15.0, ps_lr = 1e-3, ps_lr_end = 0.0;
  int ps_iters = 3000, ps_batch = 32, ps_T = 80, ps_M = 20, ps_hidden = 64,
      ps_layers = 3;
  uint64_t ps_seed = 1;
  bool ps_noiseless = false;
  ps->add_option("--data", ps_data, "Trajectory CSV")->required();
  ps->add_option("--out", ps_out, "Checkpoint path")->required();
  ps->add_option("--psnr", ps_psnr, "Training status-noise level (dB)");
  ps->add_flag("--noiseless", ps_noiseless, "Train without status noise");
  ps->add_option("--iters", ps_iters, "Training iterations");
  ps->add_option("--batch", ps_batch, "Batch size");
  ps->add_option("--lr", ps_lr, "Learning rate");
  ps->add_option("--lr-end", ps_lr_end, "Final learning rate (0: constant)");
  ps->add_option("--T", ps_T, "Encoder window length");
  ps->add_option("--M", ps_M, "Decoder horizon");
  ps->add_option("--hidden", ps_hidden, "LSTM hidden size");
  ps->add_option("--layers", ps_layers, "Stacked LSTM layers");
  ps->add_option("--seed", ps_seed, "RNG seed");

  // train
  auto* tr = app.add_subcommand("train", "Train the two decision agents");
  std::string tr_config, tr_mine, tr_sfr, tr_out;
  int tr_episodes = 0, tr_len = 0;
  double tr_dl = 0.0, tr_du = 0.0;
  int64_t tr_seed = -1;
  tr->add_option("--config", tr_config, "Flat key=value config file");
  tr->add_option("--mine", tr_mine, "MINE checkpoint")->required();
  tr->add_option("--sfr", tr_sfr, "SFR checkpoint")->required();
  tr->add_option("--out", tr_out, "Output directory")->required();
  tr->add_option("--episodes", tr_episodes, "Override episode count");
  tr->add_option("--episode-len", tr_len, "Override episode length (slots)");
  tr->add_option("--delta-l", tr_dl, "Control accuracy parameter (mm)");
  tr->add_option("--delta-u", tr_du, "Control-error upper bound (mm)");
  tr->add_option("--seed", tr_seed, "Override RNG seed");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate one case at one PSNR");
  std::string ev_bundle, ev_mine, ev_sfr, ev_case, ev_config;
  double ev_psnr = 20.0;
  int ev_episodes = 20;
  uint64_t ev_seed = 7;
  ev->add_option("--bundle", ev_bundle, "Agent bundle checkpoint");
  ev->add_option("--mine", ev_mine, "MINE checkpoint");
  ev->add_option("--sfr", ev_sfr, "SFR checkpoint");
  ev->add_option("--case", ev_case,
                 "case1|case2:S|case3|case4|case5|proposed")
      ->required();
  ev->add_option("--psnr", ev_psnr, "PSNR in dB")->required();
  ev->add_option("--episodes", ev_episodes, "Evaluation episodes");
  ev->add_option("--seed", ev_seed, "RNG seed");
  ev->add_option("--config", ev_config, "Training config for env parameters");

  // sweep
  auto* sw = app.add_subcommand("sweep",
                                "Cross-product case x PSNR evaluation CSV");
  std::string sw_bundle, sw_mine, sw_sfr, sw_cases, sw_psnr, sw_out, sw_config;
  int sw_episodes = 20;
  uint64_t sw_seed = 7;
  sw->add_option("--bundle", sw_bundle, "Agent bundle checkpoint");
  sw->add_option("--mine", sw_mine, "MINE checkpoint");
  sw->add_option("--sfr", sw_sfr, "SFR checkpoint");
  sw->add_option("--cases", sw_cases, "Comma-separated case list")->required();
  sw->add_option("--psnr", sw_psnr, "Comma-separated PSNR list (dB)")
      ->required();
  sw->add_option("--out", sw_out, "Output CSV path")->required();
  sw->add_option("--episodes", sw_episodes, "Episodes per point");
  sw->add_option("--seed", sw_seed, "RNG seed");
  sw->add_option("--config", sw_config, "Training config for env parameters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed())
      return cmd_gen_data(gen_out, gen_seed, gen_duration, gen_sinusoids,
                          gen_fmin, gen_fmax);
    if (pm->parsed())
      return cmd_pretrain_mine(pm_data, pm_out, pm_psnr, pm_noiseless, pm_rate,
                               pm_epochs, pm_batch, pm_lr, pm_gamma, pm_seed);
    if (ps->parsed())
      return cmd_pretrain_sfr(ps_data, ps_out, ps_psnr, ps_noiseless, ps_iters,
                              ps_batch, ps_lr, ps_lr_end, ps_T, ps_M,
                              ps_hidden, ps_layers, ps_seed);
    if (tr->parsed())
      return cmd_train(tr_config, tr_mine, tr_sfr, tr_out, tr_episodes, tr_len,
                       tr_dl, tr_du, tr_seed);
    if (ev->parsed())
      return cmd_eval(ev_bundle, ev_mine, ev_sfr, ev_case, ev_psnr,
                      ev_episodes, ev_seed, ev_config);
    if (sw->parsed())
      return cmd_sweep(sw_bundle, sw_mine, sw_sfr, sw_cases, sw_psnr, sw_out,
                       sw_episodes, sw_seed, sw_config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
