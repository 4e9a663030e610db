// Acceptance run: one PASS/FAIL line per criterion. Exit status is non-zero
// when any requested criterion fails.
//
//   acceptance [criteria...] [--work DIR]
//
// With no criteria every one is run; 5, 6 and 7 train policies and are slow.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "corpus.hpp"
#include "esds/pipeline.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "stub_llm.hpp"

using namespace esds;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 3) { return format_fixed(v, digits); }

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

void log_line(const std::string& s) {
  std::fprintf(stderr, "  %s\n", s.c_str());
  std::fflush(stderr);
}

const FeatureSchema& perceptive_schema() {
  static const FeatureSchema s = feature_schema(ObservationMode::Perceptive, SensorConfig{});
  return s;
}

// Tracking error and exploration score against brute-force oracles, 1000 random inputs each.
Outcome criterion1(const fs::path&) {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst_vte = 0.0, worst_expl = 0.0;
  for (int i = 0; i < 1000; ++i) {
    double v[6];
    for (double& x : v) x = rng.uniform(-3.0, 3.0);
    const double got = velocity_tracking_error(v[0], v[1], v[2], Command{v[3], v[4], v[5]});
    worst_vte = std::max(worst_vte, std::abs(got - oracle::tracking_error(v[0], v[1], v[2], v[3], v[4], v[5])));
  }
  for (int i = 0; i < 1000; ++i) {
    const int n = 1 + static_cast<int>(rng.below(300));
    const double step = rng.uniform(0.0, 0.1);
    double x = rng.uniform(-5, 5), y = rng.uniform(-5, 5);
    std::vector<std::pair<double, double>> pos;
    ExplorationTracker tracker(0.5, 100);
    for (int k = 0; k < n; ++k) {
      x += rng.uniform(-step, step);
      y += rng.uniform(-step, step);
      pos.emplace_back(x, y);
      tracker.update(x, y);
    }
    worst_expl = std::max(worst_expl, std::abs(tracker.score() - oracle::exploration(pos, 0.5, 100)));
  }
  const double secs = seconds_since(t0);
  return {worst_vte <= 1e-12 && worst_expl <= 1e-12 && secs < 1.0,
          "max |d| tracking " + sci(worst_vte) + ", exploration " + sci(worst_expl) + ", " + fmt(secs) + " s"};
}

// Round trip over the corpus, agreement with the naive interpreter, totality.
Outcome criterion2(const fs::path&) {
  const auto t0 = Clock::now();
  const auto programs = esds::testing::corpus();
  int round_trips = 0;
  for (const auto& text : programs) {
    const RewardProgram p = parse_reward(text);
    const std::string once = serialize(p);
    const RewardProgram q = parse_reward(once);
    if (same_structure(p, q) && serialize(q) == once) ++round_trips;
  }

  oracle::ProgramGen gen(23, perceptive_schema());
  double worst = 0.0;
  int invalid = 0;
  for (int i = 0; i < 500; ++i) {
    const RewardProgram p = parse_reward(gen.program(3, 4));
    if (!validate(p, perceptive_schema()).empty()) ++invalid;
    FeatureEnv fe(perceptive_schema());
    oracle::Env oe;
    gen.fill(fe, oe);
    worst = std::max(worst, std::abs(evaluate(p, fe).total - oracle::total(p, oe)));
  }

  oracle::ProgramGen fuzz(31, perceptive_schema());
  int cases = 0, non_finite = 0;
  for (int i = 0; i < 2000; ++i) {
    const RewardProgram p = parse_reward(fuzz.program(1 + static_cast<int>(fuzz.rng.below(5)), 6));
    if (!validate(p, perceptive_schema()).empty()) ++invalid;
    const BoundReward bound(p, perceptive_schema());
    FeatureEnv fe(perceptive_schema());
    oracle::Env oe;
    for (int k = 0; k < 5; ++k) {
      fuzz.fill(fe, oe);
      const auto r = evaluate(bound, fe);
      bool ok = std::isfinite(r.total);
      for (double v : r.per_term) ok = ok && std::isfinite(v);
      if (!ok) ++non_finite;
      ++cases;
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = programs.size() >= 20 && round_trips == static_cast<int>(programs.size()) && invalid == 0 &&
                    worst <= 1e-12 && cases >= 10000 && non_finite == 0 && secs < 30.0;
  return {pass, std::to_string(round_trips) + "/" + std::to_string(programs.size()) + " round trips, max |d| vs oracle " +
                    sci(worst) + " over 500, " + std::to_string(non_finite) + " non-finite of " + std::to_string(cases) +
                    ", " + fmt(secs) + " s"};
}

// Finite-difference gradients and brute-force GAE on 50-step trajectories.
Outcome criterion3(const fs::path&) {
  const auto t0 = Clock::now();
  const auto ff = esds::testing::check_ppo_gradients(false);
  const auto rec = esds::testing::check_ppo_gradients(true);
  Rng rng(303);
  double worst_gae = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int envs = 1 + static_cast<int>(rng.below(4));
    const int steps = 50;
    const double gamma = rng.uniform(0.8, 1.0), lambda = rng.uniform(0.5, 1.0);
    RolloutBuffer buf;
    buf.allocate(envs, steps, 1, 1, 0, 0);
    for (std::size_t i = 0; i < buf.size(); ++i) {
      buf.rewards[i] = rng.normal();
      buf.values[i] = rng.normal();
      buf.dones[i] = rng.uniform() < 0.1 ? 1 : 0;
    }
    for (auto& lv : buf.last_values) lv = rng.normal();
    compute_gae(buf, gamma, lambda);
    for (int e = 0; e < envs; ++e) {
      std::vector<double> r, v;
      std::vector<int> d;
      for (int t = 0; t < steps; ++t) {
        r.push_back(buf.rewards[buf.index(t, e)]);
        v.push_back(buf.values[buf.index(t, e)]);
        d.push_back(buf.dones[buf.index(t, e)]);
      }
      const auto expect = oracle::gae(r, v, d, buf.last_values[static_cast<std::size_t>(e)], gamma, lambda);
      for (int t = 0; t < steps; ++t)
        worst_gae = std::max(worst_gae, std::abs(buf.advantages[buf.index(t, e)] - expect[static_cast<std::size_t>(t)]));
    }
  }
  const double secs = seconds_since(t0);
  const double worst_grad = std::max(ff.max_rel_error, rec.max_rel_error);
  const bool pass = worst_grad <= 1e-4 && ff.checked == ff.parameters && rec.checked == rec.parameters &&
                    worst_gae <= 1e-10 && secs < 30.0;
  return {pass, "max rel gradient error " + sci(worst_grad) + " over " + std::to_string(ff.checked + rec.checked) +
                    " parameters, max GAE |d| " + sci(worst_gae) + ", " + fmt(secs) + " s"};
}

// Measured gap ratio against the carved-mask fraction, and stairs max drop.
Outcome criterion4(const fs::path&) {
  const auto t0 = Clock::now();
  FleetOptions fleet;
  fleet.num_robots = 100;
  bool pass = true;
  std::string detail;
  for (double target : {0.1, 0.2, 0.3}) {
    TerrainParams p;
    p.gap_area_target = target;
    const TerrainMap m = generate_terrain(TerrainKind::Gaps, p, 21);
    const TerrainStats s = analyze_environment(m, fleet, {}, 1);
    const double truth = m.gap_fraction();
    pass = pass && std::abs(s.gap_ratio - truth) <= 0.03;
    detail += "gap " + fmt(s.gap_ratio) + " vs " + fmt(truth) + ", ";
  }
  const TerrainStats stairs = analyze_environment(generate_terrain(TerrainKind::Stairs, TerrainParams{}, 0), fleet, {}, 1);
  const double secs = seconds_since(t0);
  pass = pass && stairs.max_drop >= 0.12 && secs < 60.0;
  return {pass, detail + "stairs max_drop " + fmt(stairs.max_drop) + " m, " + fmt(secs, 1) + " s"};
}

// Tracking reward on Simple terrain with the desk PPO config, seed 0.
Outcome criterion5(const fs::path&) {
  const auto t0 = Clock::now();
  const TerrainMap map = generate_terrain(TerrainKind::Simple, TerrainParams{}, 0);
  const RewardProgram reward = load_reward(std::string(ESDS_DATA_DIR) + "/tracking.rdsl");
  EnvConfig env;
  env.stats = analyze_environment(map, FleetOptions{}, {}, 0);
  PPOConfig cfg;
  cfg.num_envs = 64;
  cfg.iterations = 200;
  PPOConfig untrained_cfg = cfg;
  untrained_cfg.iterations = 0;
  const TrainResult before = train(reward, map, env, untrained_cfg, 0);
  const TrainResult after = train(reward, map, env, cfg, 0, [](const IterationLog& r) {
    if (r.iteration % 20 == 0) log_line("iteration " + std::to_string(r.iteration) + " return " + fmt(r.mean_return, 2));
  });
  const EvalConfig eval;
  const EvalResult e0 = evaluate_policy(before.params, reward, map, env, eval);
  const EvalResult e1 = evaluate_policy(after.params, reward, map, env, eval);
  const double secs = seconds_since(t0);
  if (after.log.rows.size() != 200 || e0.failed || e1.failed)
    return {false, "training or evaluation failed: " + e0.error + e1.error};
  const double r1 = after.log.rows.front().mean_return, r200 = after.log.rows.back().mean_return;
  const double v0 = e0.aggregate.velocity_tracking_error, v1 = e1.aggregate.velocity_tracking_error;
  const bool pass = r200 >= 1.5 * r1 && v1 < 0.6 * v0 && secs <= 900.0;
  return {pass, "return " + fmt(r1, 2) + " -> " + fmt(r200, 2) + " (x" + fmt(r200 / r1, 2) + "), tracking error " +
                    fmt(v0) + " -> " + fmt(v1) + " (x" + fmt(v1 / v0) + "), " + fmt(secs / 60.0, 1) + " min"};
}

PipelineConfig desk_pipeline(std::uint64_t seed, ObservationMode mode) {
  PipelineConfig c;
  c.iterations = 3;
  c.candidates = 2;
  c.seed = seed;
  c.mode = mode;
  c.ppo.iterations = 100;
  return c;
}

// Offline closed loop twice with identical seeds.
Outcome criterion6(const fs::path& work) {
  const auto t0 = Clock::now();
  TerrainParams tp;
  const PipelineInputs in{generate_terrain(TerrainKind::Gaps, tp, 0), "gaps_seed0.json", SkillSpec{}};
  const PipelineConfig cfg = desk_pipeline(0, ObservationMode::Perceptive);
  std::vector<RunSummary> runs;
  std::vector<std::string> ckpts;
  for (const char* name : {"c6_a", "c6_b"}) {
    const fs::path dir = work / name;
    fs::remove_all(dir);
    runs.push_back(run_pipeline(in, cfg, dir.string(), {}, log_line));
    ckpts.push_back(read_file((dir / "checkpoints/2_1.ckpt").string()));
  }
  const double secs = seconds_since(t0);
  const RunSummary& a = runs[0];
  double iter0_best = -1e300;
  for (const auto& c : a.candidates)
    if (c.iteration == 0 && c.score) iter0_best = std::max(iter0_best, *c.score);
  const bool identical = a.manifest.dump() == runs[1].manifest.dump() && ckpts[0] == ckpts[1];
  const bool pass = a.complete && runs[1].complete && a.candidates.size() == 6 && identical && a.elitist &&
                    *a.elitist->score >= iter0_best && secs <= 5400.0;
  return {pass, std::to_string(a.candidates.size()) + " candidates, manifests " +
                    (identical ? "bit-identical" : "differ") + ", final J " +
                    (a.elitist ? fmt(*a.elitist->score) : "none") + " vs iteration-0 best " + fmt(iter0_best) + ", " +
                    fmt(secs / 60.0, 1) + " min"};
}

// Perceptive against Blind on Gaps, five seeds.
Outcome criterion7(const fs::path& work) {
  const auto t0 = Clock::now();
  int wins = 0;
  double sum_p = 0.0, sum_b = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const PipelineInputs in{generate_terrain(TerrainKind::Gaps, TerrainParams{}, seed),
                            "gaps_seed" + std::to_string(seed) + ".json", SkillSpec{}};
    double tcr[2] = {0.0, 0.0};
    int m = 0;
    for (auto mode : {ObservationMode::Perceptive, ObservationMode::Blind}) {
      const fs::path dir = work / ("c7_" + to_string(mode) + "_seed" + std::to_string(seed));
      const RunSummary s = run_pipeline(in, desk_pipeline(seed, mode), dir.string(), {}, log_line);
      tcr[m++] = s.elitist->metrics->torso_contact_rate;
    }
    log_line("seed " + std::to_string(seed) + ": perceptive " + fmt(tcr[0]) + ", blind " + fmt(tcr[1]));
    wins += tcr[0] < tcr[1] ? 1 : 0;
    sum_p += tcr[0];
    sum_b += tcr[1];
    per_seed += (per_seed.empty() ? "" : " ") + fmt(tcr[0], 2) + "/" + fmt(tcr[1], 2);
  }
  const double secs = seconds_since(t0);
  const bool pass = sum_p / 5.0 < sum_b / 5.0 && wins >= 4 && secs <= 6 * 3600.0;
  return {pass, "mean torso contact rate perceptive " + fmt(sum_p / 5.0) + " vs blind " + fmt(sum_b / 5.0) + ", " +
                    std::to_string(wins) + "/5 seeds lower (" + per_seed + "), " + fmt(secs / 60.0, 1) + " min"};
}

int exteroceptive_terms(const std::vector<RewardProgram>& programs) {
  int n = 0;
  for (const auto& p : programs) n += exteroceptive_term_count(p);
  return n;
}

// Offline synthesis reads the terrain statistics.
Outcome criterion8(const fs::path&) {
  const auto t0 = Clock::now();
  struct Case {
    std::string name;
    double gap, obstacle;
    bool want;
  };
  const std::vector<Case> cases{{"gaps", 0.03, 0.0, true}, {"obstacles", 0.0, 0.06, true}, {"flat", 0.0, 0.0, false}};
  bool pass = true;
  std::string detail;
  for (const auto& c : cases) {
    TerrainStats s;
    s.gap_ratio = c.gap;
    s.obstacle_density = c.obstacle;
    s.max_drop = c.gap > 0 ? 1.0 : 0.0;
    s.sample_count = 1000;
    const PromptBundle b = combine_prompts(SkillSpec{}, s);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto programs = synthesize_offline(b, 2, seed);
      for (const auto& p : programs) {
        const int n = exteroceptive_term_count(p);
        pass = pass && (c.want ? n >= 1 : n == 0);
      }
    }
    detail += c.name + " " + std::to_string(exteroceptive_terms(synthesize_offline(b, 2, 0))) + " terms, ";
  }
  const double secs = seconds_since(t0);
  pass = pass && secs < 1.0;
  return {pass, detail + fmt(secs) + " s"};
}

// Remote backend against a local stub endpoint.
Outcome criterion9(const fs::path& work) {
  const auto t0 = Clock::now();
  TerrainStats stats;
  stats.gap_ratio = 0.3;
  stats.max_drop = 1.0;
  stats.sample_count = 1000;
  const PromptBundle bundle = combine_prompts(SkillSpec{}, stats);
  const std::string fenced = "Reward:\n```rdsl\nterm track weight 1.0 = exp(-square(vx - vx_cmd));\n```\n";

  auto run = [&](const std::function<std::string(int, const nlohmann::json&)>& reply, const std::string& sub,
                 SynthesisOutcome& out, std::size_t& bodies) {
    esds::testing::StubLlm stub(reply);
    SynthesisBackend backend;
    backend.kind = BackendKind::Remote;
    backend.remote.url = stub.url();
    backend.remote.model = "stub";
    const fs::path dir = work / "c9" / sub;
    fs::remove_all(dir);
    fs::create_directories(dir);
    int files = 0;
    out = synthesize(bundle, backend, 1, 0, perceptive_schema(),
                     [&](const std::string& name, const std::string& content) {
                       write_file((dir / name).string(), content);
                       ++files;
                     },
                     "i0");
    bodies = stub.bodies().size();
    return files;
  };

  SynthesisOutcome ok;
  std::size_t ok_requests = 0;
  const int ok_files = run([&](int, const nlohmann::json&) { return fenced; }, "valid", ok, ok_requests);
  const bool accepted = ok.origin == std::vector<std::string>{"remote"} && !ok.degraded &&
                        serialize(ok.programs[0]) == serialize(parse_reward("term track weight 1.0 = exp(-square(vx - vx_cmd));"));

  SynthesisOutcome bad;
  std::size_t bad_requests = 0;
  const int bad_files =
      run([](int, const nlohmann::json&) { return std::string("term broken weight = ;"); }, "malformed", bad, bad_requests);
  const bool fell_back = bad.degraded && bad.origin == std::vector<std::string>{"offline"} && bad_requests <= 4 &&
                         bad_requests >= 2;
  // every request and every reply is on disk
  const bool persisted = ok_files == 2 * static_cast<int>(ok_requests) && bad_files == 2 * static_cast<int>(bad_requests);
  const double secs = seconds_since(t0);
  const bool pass = accepted && fell_back && persisted && secs < 10.0;
  return {pass, std::string("valid reply ") + (accepted ? "accepted" : "rejected") + ", malformed reply: " +
                    std::to_string(bad_requests - 1) + " repair retries then " + (fell_back ? "offline" : "no") +
                    " fallback, " + std::to_string(ok_files + bad_files) + " audit files, " + fmt(secs) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> wanted;
  std::string work = (fs::temp_directory_path() / "esds_acceptance").string();
  app.add_option("criteria", wanted, "criteria to run (default: all)")->check(CLI::Range(1, 9));
  app.add_option("--work", work, "directory for run outputs");
  CLI11_PARSE(app, argc, argv);
  if (wanted.empty()) wanted = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  const std::map<int, std::function<Outcome(const fs::path&)>> criteria{
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
      {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}};
  fs::create_directories(work);
  int failed = 0;
  for (int n : wanted) {
    Outcome o;
    try {
      o = criteria.at(n)(fs::path(work));
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d: %s  %s\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
