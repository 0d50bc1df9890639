#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "testutil.hpp"
#include "wcsim/eval.hpp"

using namespace wcsim;

namespace {

struct EvalWorld {
  TrainConfig cfg;
  MineModel mine;
  SfrModel sfr;
  AgentBundle bundle;

  explicit EvalWorld(uint64_t seed = 3) {
    cfg.T = 10;
    cfg.M = 3;
    cfg.episode_len = 600;
    cfg.delta_l = 120.0;
    cfg.delta_u = 360.0;
    Rng rng(seed);
    mine = make_mine_model(rng);
    sfr = make_sfr_model(rng, cfg.T, cfg.M, 6, 1);
    bundle = make_agent_bundle(rng, RewardParams{cfg.delta_l, cfg.delta_u},
                               StateNorm{});
  }
};

}  // namespace

TEST_CASE("case parsing round-trips and validates") {
  REQUIRE(parse_case("case1").kind == BaselineCase::Case1);
  REQUIRE(parse_case("case2:4").kind == BaselineCase::Case2);
  REQUIRE(parse_case("case2:4").period == 4);
  REQUIRE(parse_case("proposed").kind == BaselineCase::Proposed);
  REQUIRE(case_name(parse_case("case2:3")) == "case2_S3");
  REQUIRE_THROWS_AS(parse_case("case9"), std::invalid_argument);
  REQUIRE_THROWS_AS(parse_case("case2:1"), std::invalid_argument);
}

TEST_CASE("case1 and case3 report a duty cycle of exactly 1") {
  EvalWorld w;
  const EvalPoint p1 = run_baseline(parse_case("case1"), 20.0, w.cfg, nullptr,
                                    nullptr, nullptr, 3, 11);
  REQUIRE(p1.duty == 1.0);
  const EvalPoint p3 = run_baseline(parse_case("case3"), 20.0, w.cfg,
                                    &w.bundle, nullptr, nullptr, 3, 11);
  REQUIRE(p3.duty == 1.0);
}

TEST_CASE("case2 duty cycle is within 1/L of 1/S") {
  EvalWorld w;
  for (int S : {2, 3, 4}) {
    const EvalPoint p =
        run_baseline(CaseSpec{BaselineCase::Case2, S}, 20.0, w.cfg, nullptr,
                     nullptr, nullptr, 2, 13);
    REQUIRE(std::abs(p.duty - 1.0 / S) <= 1.0 / w.cfg.episode_len);
  }
}

TEST_CASE("case2 control error grows with the sampling interval") {
  EvalWorld w;
  double prev = 0.0;
  for (int S : {2, 3, 4}) {
    const EvalPoint p =
        run_baseline(CaseSpec{BaselineCase::Case2, S}, 20.0, w.cfg, nullptr,
                     nullptr, nullptr, 20, 17);
    if (S > 2) REQUIRE(p.s_e >= prev);
    prev = p.s_e;
  }
}

TEST_CASE("learned cases demand their checkpoints") {
  EvalWorld w;
  REQUIRE_THROWS_WITH(run_baseline(parse_case("proposed"), 20.0, w.cfg,
                                   nullptr, &w.mine, &w.sfr, 1, 1),
                      Catch::Matchers::ContainsSubstring("agent checkpoint"));
  REQUIRE_THROWS_WITH(run_baseline(parse_case("proposed"), 20.0, w.cfg,
                                   &w.bundle, nullptr, &w.sfr, 1, 1),
                      Catch::Matchers::ContainsSubstring("MINE"));
  REQUIRE_THROWS_WITH(run_baseline(parse_case("case5"), 20.0, w.cfg, &w.bundle,
                                   &w.mine, nullptr, 1, 1),
                      Catch::Matchers::ContainsSubstring("SFR"));
  // case1/case2 need nothing
  REQUIRE_NOTHROW(run_baseline(parse_case("case2:2"), 20.0, w.cfg, nullptr,
                               nullptr, nullptr, 1, 1));
}

TEST_CASE("proposed pipeline runs with untrained components") {
  EvalWorld w;
  const EvalPoint p = run_baseline(parse_case("proposed"), 16.0, w.cfg,
                                   &w.bundle, &w.mine, &w.sfr, 2, 19);
  REQUIRE(p.duty >= static_cast<double>(w.cfg.T) / w.cfg.episode_len);
  REQUIRE(p.duty <= 1.0);
  REQUIRE(p.s_e > 0.0);
  REQUIRE(std::isfinite(p.s_e));
}

TEST_CASE("sweep produces one row per case-psnr pair and is reproducible") {
  EvalWorld w;
  const std::vector<CaseSpec> cases = {parse_case("case1"),
                                       parse_case("case2:4")};
  const std::vector<double> psnrs = {12.0, 20.0};
  const auto rows =
      sweep_psnr(cases, psnrs, w.cfg, nullptr, nullptr, nullptr, 2, 23);
  REQUIRE(rows.size() == 4);
  const auto rows2 =
      sweep_psnr(cases, psnrs, w.cfg, nullptr, nullptr, nullptr, 2, 23);
  for (size_t i = 0; i < rows.size(); ++i) {
    REQUIRE(rows[i].s_e == rows2[i].s_e);
    REQUIRE(rows[i].duty == rows2[i].duty);
    REQUIRE(rows[i].duty >= 0.0);
    REQUIRE(rows[i].duty <= 1.0);
    REQUIRE(rows[i].s_e >= 0.0);
  }
  const auto single =
      sweep_psnr({parse_case("case1")}, {18.0}, w.cfg, nullptr, nullptr,
                 nullptr, 1, 23);
  REQUIRE(single.size() == 1);
}

TEST_CASE("sweep csv carries the documented schema") {
  EvalWorld w;
  const std::string path = "sweep_test.csv";
  sweep_psnr({parse_case("case1")}, {20.0}, w.cfg, nullptr, nullptr, nullptr,
             1, 29, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  REQUIRE(header == "psnr_db,case,S_e_mm,duty_cycle,episodes,seed");
  std::string row;
  std::getline(in, row);
  REQUIRE(row.rfind("20,case1,", 0) == 0);
  in.close();
  std::remove(path.c_str());
}

TEST_CASE("control error decreases with psnr for the simple baselines") {
  EvalWorld w;
  double prev = std::numeric_limits<double>::infinity();
  for (double psnr : {8.0, 14.0, 20.0}) {
    const EvalPoint p = run_baseline(parse_case("case1"), psnr, w.cfg, nullptr,
                                     nullptr, nullptr, 4, 31);
    REQUIRE(p.s_e < prev);
    prev = p.s_e;
  }
}
