#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "esds/pipeline.hpp"
#include "test_util.hpp"

using namespace esds;
namespace fs = std::filesystem;

namespace {

PipelineConfig tiny_pipeline(int iterations, int candidates) {
  PipelineConfig c;
  c.iterations = iterations;
  c.candidates = candidates;
  c.ppo.num_envs = 2;
  c.ppo.rollout_steps = 16;
  c.ppo.iterations = 2;
  c.ppo.hidden = 8;
  c.ppo.hidden_layers = 1;
  c.ppo.minibatches = 2;
  c.ppo.epochs = 1;
  c.eval.episodes = 2;
  c.eval.max_steps = 40;
  c.fleet.num_robots = 4;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("esds_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

PipelineInputs flat_inputs() { return {esds::testing::flat_map(10.0, 10.0, 0.1), "flat.json", SkillSpec{}}; }

}  // namespace

TEST(Score, Example) {
  EpisodeMetrics m;
  m.velocity_tracking_error = 0.0;
  m.exploration_score = 10.0;
  m.torso_contact_rate = 0.0;
  m.locomotion_quality = 1.0;
  EXPECT_DOUBLE_EQ(score_policy(m), 4.0);
  m.torso_contact_rate = 100.0;
  EXPECT_DOUBLE_EQ(score_policy(m), 3.0);
}

TEST(Feedback, Rules) {
  EpisodeMetrics m;
  EXPECT_EQ(feedback_text(m), "healthy gait");
  m.stationary_fraction = 0.31;
  EXPECT_EQ(feedback_text(m), "freezing");
  m.torso_contact_rate = 51.0;
  m.velocity_tracking_error = 1.5;
  EXPECT_EQ(feedback_text(m), "freezing; falling; poor tracking");
  m.stationary_fraction = 0.3;  // thresholds are strict
  m.torso_contact_rate = 50.0;
  EXPECT_EQ(feedback_text(m), "poor tracking");
}

TEST(Evaluate, ZeroPolicyOnFlatMapFreezes) {
  const TerrainMap map = esds::testing::flat_map();
  EnvConfig env;
  env.commands.vx = {0.5, 0.8};
  PPOConfig ppo;
  ppo.hidden = 8;
  PolicyParams p = init_policy(env.observation_size(), kNumJoints, ppo, 0);
  p.actor.W.back().setZero();
  p.actor.b.back().setZero();
  EvalConfig eval;
  eval.max_steps = 100;
  const EvalResult r = evaluate_policy(p, parse_reward("term t weight 1 = vx;"), map, env, eval);
  ASSERT_FALSE(r.failed) << r.error;
  EXPECT_EQ(r.rows.size(), 16u);
  EXPECT_EQ(r.commands.size(), 16u);
  EXPECT_GT(r.aggregate.stationary_fraction, 0.3);
  EXPECT_EQ(r.feedback.rfind("freezing", 0), 0u);
  // same seed, same commands
  const EvalResult again = evaluate_policy(p, parse_reward("term t weight 1 = vx;"), map, env, eval);
  EXPECT_TRUE(again.aggregate == r.aggregate);
}

TEST(SelectBest, ArgmaxWithTiesToLowerIndex) {
  EXPECT_EQ(select_best({}), -1);
  EXPECT_EQ(select_best({std::nullopt, std::nullopt}), -1);
  EXPECT_EQ(select_best({1.0, 3.0, 3.0, 2.0}), 1);
  EXPECT_EQ(select_best({std::nullopt, -5.0}), 1);
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::optional<double>> s;
    const int n = 1 + static_cast<int>(rng.below(6));
    for (int k = 0; k < n; ++k) {
      if (rng.uniform() < 0.3)
        s.emplace_back(std::nullopt);
      else
        s.emplace_back(static_cast<double>(rng.below(4)));  // small range forces ties
    }
    const int b = select_best(s);
    bool any = false;
    for (const auto& v : s) any = any || v.has_value();
    if (!any) {
      EXPECT_EQ(b, -1);
      continue;
    }
    ASSERT_GE(b, 0);
    ASSERT_TRUE(s[static_cast<std::size_t>(b)].has_value());
    for (int k = 0; k < n; ++k) {
      if (!s[static_cast<std::size_t>(k)]) continue;
      EXPECT_LE(*s[static_cast<std::size_t>(k)], *s[static_cast<std::size_t>(b)]);
      if (k < b) EXPECT_LT(*s[static_cast<std::size_t>(k)], *s[static_cast<std::size_t>(b)]);
    }
  }
}

TEST(Pipeline, SingleIterationSingleCandidate) {
  const fs::path dir = fresh_dir("single");
  const RunSummary s = run_pipeline(flat_inputs(), tiny_pipeline(1, 1), dir.string());
  EXPECT_TRUE(s.complete);
  ASSERT_EQ(s.candidates.size(), 1u);
  EXPECT_EQ(s.lineage, std::vector<int>{0});
  ASSERT_TRUE(s.last_best && s.elitist);
  EXPECT_TRUE(s.candidates[0].score.has_value());
  for (const char* f : {"manifest.json", "report.md", "prompts/0_0.txt", "rewards/0_0.rdsl", "checkpoints/0_0.ckpt",
                        "logs/0_0.csv", "eval/0_0.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_NO_THROW(parse_reward(read_file((dir / "rewards/0_0.rdsl").string())));
  EXPECT_NO_THROW(load_checkpoint((dir / "checkpoints/0_0.ckpt").string()));
}

TEST(Pipeline, DeterministicAcrossRuns) {
  const fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");
  const RunSummary sa = run_pipeline(flat_inputs(), tiny_pipeline(2, 2), a.string());
  const RunSummary sb = run_pipeline(flat_inputs(), tiny_pipeline(2, 2), b.string());
  EXPECT_EQ(sa.manifest, sb.manifest);
  EXPECT_EQ(read_file((a / "checkpoints/1_1.ckpt").string()), read_file((b / "checkpoints/1_1.ckpt").string()));
  EXPECT_EQ(sa.lineage.size(), 2u);
}

TEST(Pipeline, ResumeMatchesUninterruptedRun) {
  const fs::path full = fresh_dir("resume_full"), part = fresh_dir("resume_part");
  const RunSummary ref = run_pipeline(flat_inputs(), tiny_pipeline(2, 2), full.string());

  PipelineConfig stopping = tiny_pipeline(2, 2);
  stopping.stop_after_candidates = 3;
  const RunSummary cut = run_pipeline(flat_inputs(), stopping, part.string());
  EXPECT_FALSE(cut.complete);
  EXPECT_FALSE(fs::exists(part / "checkpoints/1_1.ckpt"));

  std::vector<std::string> trained;
  const RunSummary resumed = run_pipeline(flat_inputs(), tiny_pipeline(2, 2), part.string(), {},
                                          [&](const std::string& line) {
                                            if (line.rfind("training candidate", 0) == 0) trained.push_back(line);
                                          });
  EXPECT_TRUE(resumed.complete);
  EXPECT_EQ(trained, std::vector<std::string>{"training candidate 1_1"});
  EXPECT_EQ(resumed.manifest, ref.manifest);
  EXPECT_EQ(read_file((part / "checkpoints/1_1.ckpt").string()), read_file((full / "checkpoints/1_1.ckpt").string()));
}

TEST(Pipeline, ElitistIsBestOverAllIterations) {
  const RunSummary s = run_pipeline(flat_inputs(), tiny_pipeline(2, 2), fresh_dir("elitist").string());
  double best = -1e300;
  for (const auto& c : s.candidates)
    if (c.score) best = std::max(best, *c.score);
  EXPECT_EQ(*s.elitist->score, best);
  EXPECT_EQ(s.last_best->iteration, 1);
  EXPECT_GE(*s.elitist->score, *s.last_best->score);
}

TEST(Pipeline, BlindRunRecordsZeroedStats) {
  TerrainParams tp;
  tp.width = 10.0;
  tp.length = 10.0;
  tp.resolution = 0.1;
  tp.origin_x = tp.origin_y = -5.0;
  PipelineInputs in{generate_terrain(TerrainKind::Gaps, tp, 1), "gaps.json", SkillSpec{}};
  PipelineConfig cfg = tiny_pipeline(1, 1);
  cfg.mode = ObservationMode::Blind;
  const RunSummary s = run_pipeline(in, cfg, fresh_dir("blind").string());
  const auto& stats = s.manifest.at("inputs").at("stats");
  for (const char* k : {"gap_ratio", "obstacle_density", "roughness", "mean_abs_slope", "max_drop"})
    EXPECT_EQ(stats.at(k).get<double>(), 0.0) << k;
  EXPECT_EQ(s.candidates[0].reward_source.find("height_scan"), std::string::npos);
  EXPECT_EQ(s.candidates[0].reward_source.find("lidar"), std::string::npos);
}

TEST(Pipeline, RejectsInvalidConfig) {
  PipelineConfig cfg = tiny_pipeline(0, 1);
  EXPECT_THROW(run_pipeline(flat_inputs(), cfg, fresh_dir("invalid").string()), Error);
}

TEST(Ablation, RowsAndColumns) {
  AblationConfig a;
  a.terrains.push_back({"flat", "flat.json", esds::testing::flat_map(10.0, 10.0, 0.1)});
  a.seeds = {0, 1};
  a.pipeline = tiny_pipeline(1, 1);
  a.manual_baseline_source = read_file(std::string(ESDS_DATA_DIR) + "/manual_baseline.rdsl");
  const fs::path dir = fresh_dir("ablation");
  const AblationReport r = run_ablation(a, dir.string());
  EXPECT_EQ(r.rows.size(), 6u);  // 1 terrain x 3 modes x 2 seeds
  std::istringstream in(r.rows_csv);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(lines[0], std::string(kAblationCsvHeader) + kMetricsCsvHeader + ",run_dir");
  for (std::size_t i = 1; i < lines.size(); ++i)
    EXPECT_EQ(std::count(lines[i].begin(), lines[i].end(), ','), std::count(lines[0].begin(), lines[0].end(), ','));
  EXPECT_TRUE(fs::exists(dir / "ablation.csv"));
  EXPECT_TRUE(fs::exists(dir / "ablation.md"));
  EXPECT_TRUE(fs::exists(dir / "flat/blind/seed_1/manifest.json"));
  for (const auto& row : r.rows) EXPECT_EQ(row.score, score_policy(row.metrics));
}
