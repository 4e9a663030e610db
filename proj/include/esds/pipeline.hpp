#pragma once

// Synthesize -> train -> evaluate -> score -> refine loop, persisted to a run
// directory so an interrupted run picks up where it stopped, plus the
// terrain x mode x seed ablation driver.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "esds/common.hpp"
#include "esds/env.hpp"
#include "esds/envstats.hpp"
#include "esds/metrics.hpp"
#include "esds/ppo.hpp"
#include "esds/remote.hpp"
#include "esds/reward_dsl.hpp"
#include "esds/synthesis.hpp"
#include "esds/terrain.hpp"

namespace esds {

inline constexpr int kManifestVersion = 1;

// ---------------------------------------------------------------------------
// Evaluation and scoring

struct EvalConfig {
  int episodes = 16;
  int max_steps = 500;
  std::uint64_t seed = 7;
  MetricsConfig metrics;

  void validate() const {
    if (episodes < 1 || max_steps < 1) throw Error(ErrorCode::InvalidParams, "eval episodes and max_steps must be >= 1");
  }
};

struct EvalResult {
  EpisodeMetrics aggregate;
  std::vector<EpisodeMetrics> rows;
  std::vector<Command> commands;
  std::string feedback;
  bool failed = false;
  std::string error;
};

inline std::string feedback_text(const EpisodeMetrics& m) {
  std::vector<std::string> tags;
  if (m.stationary_fraction > 0.3) tags.emplace_back("freezing");
  if (m.torso_contact_rate > 50.0) tags.emplace_back("falling");
  if (m.velocity_tracking_error > 1.0) tags.emplace_back("poor tracking");
  if (tags.empty()) return "healthy gait";
  std::string out = tags[0];
  for (std::size_t i = 1; i < tags.size(); ++i) out += "; " + tags[i];
  return out;
}

inline double score_policy(const EpisodeMetrics& m) {
  return 2.0 * std::exp(-m.velocity_tracking_error) + 0.1 * m.exploration_score - 0.01 * m.torso_contact_rate +
         m.locomotion_quality;
}

/// Seeded episodes under the policy mean. Commands are drawn per episode from
/// the environment's command ranges, so every candidate sees the same set.
inline EvalResult evaluate_policy(const PolicyParams& params, const RewardProgram& reward, const TerrainMap& map,
                                  const EnvConfig& env_cfg, const EvalConfig& eval) {
  eval.validate();
  EvalResult out;
  try {
    for (int ep = 0; ep < eval.episodes; ++ep) {
      Rng rng(mix_seed(eval.seed, 0xc0, static_cast<std::uint64_t>(ep)));
      const Command cmd = env_cfg.commands.sample(rng);
      const Policy policy = make_policy(params);
      const Trajectory traj = run_episode(policy, reward, map, cmd, eval.max_steps,
                                          mix_seed(eval.seed, 0xe9, static_cast<std::uint64_t>(ep)), env_cfg);
      if (traj.nan_detected) throw Error(ErrorCode::NanDetected, "episode " + std::to_string(ep) + " diverged");
      const EpisodeMetrics m = episode_metrics(traj, eval.metrics);
      if (!m.finite()) throw Error(ErrorCode::NanDetected, "non-finite metrics in episode " + std::to_string(ep));
      out.rows.push_back(m);
      out.commands.push_back(cmd);
    }
    out.aggregate = aggregate_metrics(out.rows);
    out.feedback = feedback_text(out.aggregate);
  } catch (const Error& e) {
    out.failed = true;
    out.error = e.what();
    out.feedback = "failed: " + out.error;
  }
  return out;
}

/// argmax over surviving candidates, ties to the lower index; -1 if none.
inline int select_best(const std::vector<std::optional<double>>& scores) {
  int best = -1;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (!scores[k]) continue;
    if (best < 0 || *scores[k] > *scores[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Run configuration

struct PipelineConfig {
  int iterations = 3;  // I_max
  int candidates = 2;  // N
  std::uint64_t seed = 0;
  ObservationMode mode = ObservationMode::Perceptive;
  EnvConfig env;  // mode and stats are overwritten by the pipeline
  PPOConfig ppo;
  EvalConfig eval;
  FleetOptions fleet;
  StatThresholds thresholds;
  SynthesisBackend backend;
  int stop_after_candidates = -1;  // test hook: return after this many trained candidates

  void validate() const {
    if (iterations < 1 || candidates < 1) throw Error(ErrorCode::InvalidParams, "iterations and candidates must be >= 1");
    ppo.validate();
    eval.validate();
    env.commands.validate();
    env.sensors.validate();
    if (backend.kind == BackendKind::Remote) backend.remote.validate();
  }
};

struct PipelineInputs {
  TerrainMap map;
  std::string terrain_file;  // recorded as given
  SkillSpec skill;
};

struct CandidateRecord {
  int iteration = 0;
  int index = 0;
  std::string origin;  // offline or remote
  std::string reward_source;
  std::optional<EpisodeMetrics> metrics;
  std::optional<double> score;  // empty when the candidate failed
  std::string feedback;
  std::string error;
};

struct RunSummary {
  nlohmann::json manifest;
  std::vector<CandidateRecord> candidates;
  std::vector<int> lineage;  // k* per finished iteration
  bool complete = false;
  std::optional<CandidateRecord> last_best;  // best of the last iteration
  std::optional<CandidateRecord> elitist;  // best over all iterations
};

// ---------------------------------------------------------------------------
// JSON for the configs the manifest records

inline nlohmann::json to_json(const MetricsConfig& c) {
  return {{"cell_size", c.cell_size},
          {"window_steps", c.window_steps},
          {"stationary_speed", c.stationary_speed},
          {"quality_action", c.quality_action},
          {"quality_height", c.quality_height},
          {"quality_tilt", c.quality_tilt}};
}

inline MetricsConfig metrics_config_from_json(const nlohmann::json& j) {
  MetricsConfig c;
  c.cell_size = j.value("cell_size", c.cell_size);
  c.window_steps = j.value("window_steps", c.window_steps);
  c.stationary_speed = j.value("stationary_speed", c.stationary_speed);
  c.quality_action = j.value("quality_action", c.quality_action);
  c.quality_height = j.value("quality_height", c.quality_height);
  c.quality_tilt = j.value("quality_tilt", c.quality_tilt);
  return c;
}

inline nlohmann::json to_json(const EvalConfig& c) {
  return {{"episodes", c.episodes}, {"max_steps", c.max_steps}, {"seed", c.seed}, {"metrics", to_json(c.metrics)}};
}

inline EvalConfig eval_config_from_json(const nlohmann::json& j) {
  EvalConfig c;
  c.episodes = j.value("episodes", c.episodes);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.seed = j.value("seed", c.seed);
  if (j.contains("metrics")) c.metrics = metrics_config_from_json(j.at("metrics"));
  return c;
}

inline nlohmann::json to_json(const OfflineConfig& c) {
  return {{"gap_gate", c.gap_gate},
          {"obstacle_gate", c.obstacle_gate},
          {"mutation_sigma", c.mutation_sigma},
          {"swap_probability", c.swap_probability}};
}

inline nlohmann::json to_json(const FleetOptions& f) {
  return {{"num_robots", f.num_robots}, {"duration_s", f.duration_s}, {"tick_hz", f.tick_hz},
          {"stand_height", f.stand_height}, {"interior", f.interior}, {"sensors", to_json(f.sensors)}};
}

inline nlohmann::json to_json(const SynthesisBackend& b) {
  nlohmann::json j{{"kind", to_string(b.kind)}, {"offline", to_json(b.offline)}, {"fallback_offline", b.fallback_offline}};
  if (b.kind == BackendKind::Remote) j["remote"] = to_json(b.remote);
  return j;
}

inline nlohmann::json to_json(const CandidateRecord& c) {
  const std::string stem = std::to_string(c.iteration) + "_" + std::to_string(c.index);
  nlohmann::json j{{"iteration", c.iteration},
                   {"k", c.index},
                   {"origin", c.origin},
                   {"reward", "rewards/" + stem + ".rdsl"},
                   {"reward_source", c.reward_source},
                   {"prompt", "prompts/" + stem + ".txt"},
                   {"feedback", c.feedback}};
  if (c.score) {
    j["status"] = "ok";
    j["checkpoint"] = "checkpoints/" + stem + ".ckpt";
    j["log"] = "logs/" + stem + ".csv";
    j["eval"] = "eval/" + stem + ".csv";
    j["metrics"] = to_json(*c.metrics);
    j["score"] = *c.score;
  } else {
    j["status"] = "failed";
    j["error"] = c.error;
    j["score"] = nullptr;
  }
  return j;
}

inline CandidateRecord candidate_record_from_json(const nlohmann::json& j) {
  CandidateRecord c;
  c.iteration = j.at("iteration").get<int>();
  c.index = j.at("k").get<int>();
  c.origin = j.at("origin").get<std::string>();
  c.reward_source = j.at("reward_source").get<std::string>();
  c.feedback = j.at("feedback").get<std::string>();
  if (!j.at("score").is_null()) {
    c.score = j.at("score").get<double>();
    c.metrics = episode_metrics_from_json(j.at("metrics"));
  } else {
    c.error = j.value("error", std::string());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Run directory

namespace pipeline_detail {

namespace fs = std::filesystem;

inline std::string stem(int i, int k) { return std::to_string(i) + "_" + std::to_string(k); }

inline void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  write_file(tmp.string(), content);
  fs::rename(tmp, path);
}

inline std::string prompt_file_text(const PromptBundle& b) {
  return "# system\n" + b.system_text + "\n\n# user\n" + b.user_text;
}

/// Everything that determines the run's results; a resumed run must match.
inline nlohmann::json inputs_json(const PipelineInputs& in, const PipelineConfig& cfg, const TerrainStats& stats) {
  const std::string terrain_text = terrain_to_json_text(in.map);
  return {{"terrain", {{"file", in.terrain_file}, {"hash", hex64(fnv1a64(terrain_text))}, {"kind", to_string(in.map.kind)}}},
          {"skill", to_json(in.skill)},
          {"mode", to_string(cfg.mode)},
          {"stats", to_json(stats)},
          {"stat_thresholds", to_json(cfg.thresholds)},
          {"fleet", to_json(cfg.fleet)},
          {"sensors", to_json(cfg.env.sensors)},
          {"observation_scales", to_json(cfg.env.scales)},
          {"commands", to_json(cfg.env.commands)},
          {"max_episode_steps", cfg.env.max_episode_steps},
          {"reset_jitter", cfg.env.reset_jitter},
          {"ppo", to_json(cfg.ppo)},
          {"eval", to_json(cfg.eval)},
          {"backend", to_json(cfg.backend)},
          {"seeds", {{"root", cfg.seed}, {"stats", mix_seed(cfg.seed, 0x57)}, {"eval", cfg.eval.seed}}},
          {"i_max", cfg.iterations},
          {"n_candidates", cfg.candidates}};
}

inline std::string report_markdown(const RunSummary& s, const nlohmann::json& inputs) {
  std::string md = "# Run report\n\n";
  md += "Terrain: " + inputs["terrain"]["kind"].get<std::string>() + " (" + inputs["terrain"]["file"].get<std::string>() +
        "), mode: " + inputs["mode"].get<std::string>() + ", seed " + std::to_string(inputs["seeds"]["root"].get<std::uint64_t>()) +
        "\n\n";
  md += "## Candidates\n\n";
  md += "| i | k | origin | J | velocity tracking | exploration | torso contact rate | quality | stationary | feedback |\n";
  md += "|---|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& c : s.candidates) {
    md += "| " + std::to_string(c.iteration) + " | " + std::to_string(c.index) + " | " + c.origin + " | ";
    if (c.score) {
      const auto& m = *c.metrics;
      md += format_fixed(*c.score, 3) + " | " + format_fixed(m.velocity_tracking_error, 3) + " | " +
            format_fixed(m.exploration_score, 3) + " | " + format_fixed(m.torso_contact_rate, 3) + " | " +
            format_fixed(m.locomotion_quality, 3) + " | " + format_fixed(m.stationary_fraction, 3) + " | ";
    } else {
      md += "failed | | | | | | ";
    }
    md += c.feedback + " |\n";
  }
  md += "\n## Selection\n\n";
  for (std::size_t i = 0; i < s.lineage.size(); ++i)
    md += "- iteration " + std::to_string(i) + ": k* = " + std::to_string(s.lineage[i]) + "\n";
  auto line = [](const char* label, const std::optional<CandidateRecord>& c) {
    if (!c) return std::string("- ") + label + ": none\n";
    return std::string("- ") + label + ": iteration " + std::to_string(c->iteration) + ", k " + std::to_string(c->index) +
           ", J = " + format_fixed(*c->score, 3) + "\n";
  };
  md += "\n## Result\n\n" + line("last iteration best", s.last_best) + line("best over all iterations", s.elitist);
  if (s.elitist) md += "\n```rdsl\n" + s.elitist->reward_source + "```\n";
  return md;
}

}  // namespace pipeline_detail

/// Statistics the run conditions on; Blind runs see them zeroed.
inline TerrainStats pipeline_stats(const TerrainMap& map, const PipelineConfig& cfg) {
  TerrainStats stats = analyze_environment(map, cfg.fleet, cfg.thresholds, mix_seed(cfg.seed, 0x57));
  if (cfg.mode == ObservationMode::Blind) stats = zeroed_exteroception(stats);
  return stats;
}

/// Runs the loop into `out_dir`. A manifest already in `out_dir` with the
/// same inputs is resumed: finished candidates are reused, synthesized
/// programs are not re-requested.
inline RunSummary run_pipeline(const PipelineInputs& in, const PipelineConfig& config, const std::string& out_dir,
                               const AuditSink& extra_audit = {}, const std::function<void(const std::string&)>& log = {}) {
  namespace fs = std::filesystem;
  using namespace pipeline_detail;
  using Clock = std::chrono::steady_clock;
  config.validate();
  in.skill.validate();
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };

  const fs::path root(out_dir);
  for (const char* d : {"prompts", "rewards", "checkpoints", "logs", "eval", "llm"}) fs::create_directories(root / d);

  nlohmann::json timings = nlohmann::json::object();
  auto timed = [&](const std::string& key, auto&& fn) {
    const auto t0 = Clock::now();
    fn();
    timings[key] = std::chrono::duration<double>(Clock::now() - t0).count();
  };

  TerrainStats stats;
  timed("analyze_environment", [&] { stats = pipeline_stats(in.map, config); });
  PipelineConfig cfg = config;
  cfg.env.mode = cfg.mode;
  cfg.env.stats = stats;
  const FeatureSchema schema = feature_schema(cfg.mode, cfg.env.sensors);
  const nlohmann::json inputs = inputs_json(in, cfg, stats);

  // resume state
  nlohmann::json previous;
  const fs::path manifest_path = root / "manifest.json";
  if (fs::exists(manifest_path)) {
    try {
      previous = nlohmann::json::parse(read_file(manifest_path.string()));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Format, std::string("unreadable manifest: ") + e.what());
    }
    if (previous.value("inputs", nlohmann::json()) != inputs)
      throw Error(ErrorCode::InvalidParams, "run directory holds a manifest with different inputs: " + out_dir);
    say("resuming " + out_dir);
  }
  auto previous_iteration = [&](int i) -> nlohmann::json {
    if (previous.is_null()) return nullptr;
    for (const auto& it : previous.at("iterations"))
      if (it.at("index").get<int>() == i) return it;
    return nullptr;
  };

  RunSummary summary;
  nlohmann::json iterations = nlohmann::json::array();
  int trained_now = 0;

  auto write_manifest = [&](const std::string& status) {
    nlohmann::json m{{"format_version", kManifestVersion}, {"inputs", inputs}, {"iterations", iterations}};
    nlohmann::json lineage = nlohmann::json::array();
    for (int k : summary.lineage) lineage.push_back(k);
    m["lineage"] = lineage;
    auto ref = [](const std::optional<CandidateRecord>& c) -> nlohmann::json {
      if (!c) return nullptr;
      return {{"iteration", c->iteration}, {"k", c->index}, {"score", *c->score}};
    };
    m["final"] = {{"last_iteration", ref(summary.last_best)}, {"elitist", ref(summary.elitist)}};
    m["status"] = status;
    write_atomic(manifest_path, m.dump(2) + "\n");
    summary.manifest = std::move(m);
  };

  std::optional<PriorProgram> prior;
  for (int i = 0; i < cfg.iterations; ++i) {
    const PromptBundle bundle = combine_prompts(in.skill, stats, prior, cfg.mode, cfg.env.sensors);
    const nlohmann::json prev_it = previous_iteration(i);

    // synthesis, reused verbatim on resume
    std::vector<RewardProgram> programs;
    std::vector<std::string> origin;
    bool degraded = false;
    std::string notes;
    if (!prev_it.is_null() && prev_it.contains("programs")) {
      for (const auto& src : prev_it.at("programs")) programs.push_back(parse_reward(src.get<std::string>()));
      origin = prev_it.at("origin").get<std::vector<std::string>>();
      degraded = prev_it.at("degraded").get<bool>();
      notes = prev_it.value("notes", std::string());
    } else {
      const AuditSink audit = [&](const std::string& name, const std::string& content) {
        write_file((root / "llm" / name).string(), content);
        if (extra_audit) extra_audit(name, content);
      };
      SynthesisOutcome syn;
      timed("synthesize_" + std::to_string(i), [&] {
        syn = synthesize(bundle, cfg.backend, cfg.candidates, mix_seed(cfg.seed, 0x5a, static_cast<std::uint64_t>(i)),
                         schema, audit, "i" + std::to_string(i));
      });
      programs = std::move(syn.programs);
      origin = std::move(syn.origin);
      degraded = syn.degraded;
      notes = syn.notes;
    }
    nlohmann::json it_json{{"index", i}, {"degraded", degraded}, {"origin", origin}};
    if (!notes.empty()) it_json["notes"] = notes;
    nlohmann::json sources = nlohmann::json::array();
    for (const auto& p : programs) sources.push_back(serialize(p));
    it_json["programs"] = sources;
    it_json["candidates"] = nlohmann::json::array();
    iterations.push_back(it_json);
    auto& cur = iterations.back();

    std::vector<CandidateRecord> records;
    for (int k = 0; k < cfg.candidates; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      const std::string st = stem(i, k);
      write_file((root / "prompts" / (st + ".txt")).string(), prompt_file_text(bundle));
      write_file((root / "rewards" / (st + ".rdsl")).string(), serialize(programs[ku]));

      std::optional<CandidateRecord> done;
      if (!prev_it.is_null()) {
        for (const auto& c : prev_it.at("candidates"))
          if (c.at("k").get<int>() == k) done = candidate_record_from_json(c);
      }
      if (!done) {
        if (cfg.stop_after_candidates >= 0 && trained_now >= cfg.stop_after_candidates) {
          write_manifest("partial");
          summary.complete = false;
          return summary;
        }
        CandidateRecord rec;
        rec.iteration = i;
        rec.index = k;
        rec.origin = origin[ku];
        rec.reward_source = serialize(programs[ku]);
        say("training candidate " + st);
        try {
          TrainResult tr;
          timed("train_" + st, [&] {
            tr = train(programs[ku], in.map, cfg.env, cfg.ppo,
                       mix_seed(cfg.seed, 0x7a, static_cast<std::uint64_t>(i * cfg.candidates + k)));
          });
          save_checkpoint(tr.params, (root / "checkpoints" / (st + ".ckpt")).string());
          write_file((root / "logs" / (st + ".csv")).string(), tr.log.to_csv());
          EvalResult ev;
          timed("evaluate_" + st, [&] { ev = evaluate_policy(tr.params, programs[ku], in.map, cfg.env, cfg.eval); });
          rec.feedback = ev.feedback;
          if (ev.failed) {
            rec.error = ev.error;
          } else {
            write_file((root / "eval" / (st + ".csv")).string(), metrics_csv(ev.rows));
            rec.metrics = ev.aggregate;
            rec.score = score_policy(ev.aggregate);
          }
        } catch (const Error& e) {
          rec.error = e.what();
          rec.feedback = "failed: " + rec.error;
        }
        ++trained_now;
        done = rec;
      }
      records.push_back(*done);
      cur["candidates"].push_back(to_json(*done));
      write_manifest("partial");
    }

    std::vector<std::optional<double>> scores;
    for (const auto& r : records) scores.push_back(r.score);
    const int best = select_best(scores);
    for (const auto& r : records) summary.candidates.push_back(r);
    if (best < 0) {
      cur["best_k"] = nullptr;
      write_manifest("failed");
      throw Error(ErrorCode::AllCandidatesFailed, "every candidate of iteration " + std::to_string(i) + " failed");
    }
    const CandidateRecord& winner = records[static_cast<std::size_t>(best)];
    cur["best_k"] = best;
    summary.lineage.push_back(best);
    summary.last_best = winner;
    if (!summary.elitist || *winner.score > *summary.elitist->score) summary.elitist = winner;
    prior = PriorProgram{winner.reward_source, winner.feedback};
    say("iteration " + std::to_string(i) + ": k* = " + std::to_string(best) + ", J = " + format_fixed(*winner.score, 3));
  }

  summary.complete = true;
  write_manifest("complete");
  write_file((root / "report.md").string(), report_markdown(summary, inputs));
  // wall-clock lives outside the manifest so identical runs give identical manifests
  nlohmann::json old_timings = nlohmann::json::object();
  if (fs::exists(root / "timings.json")) {
    try {
      old_timings = nlohmann::json::parse(read_file((root / "timings.json").string()));
    } catch (const nlohmann::json::exception&) {
    }
  }
  old_timings.update(timings);
  write_file((root / "timings.json").string(), old_timings.dump(2) + "\n");
  return summary;
}

// ---------------------------------------------------------------------------
// Ablation

enum class AblationMode { Perceptive, Blind, ManualBaseline };

inline std::string to_string(AblationMode m) {
  switch (m) {
    case AblationMode::Perceptive: return "perceptive";
    case AblationMode::Blind: return "blind";
    case AblationMode::ManualBaseline: return "manual_baseline";
  }
  return "unknown";
}

inline AblationMode ablation_mode_from_string(const std::string& s) {
  if (s == "perceptive") return AblationMode::Perceptive;
  if (s == "blind") return AblationMode::Blind;
  if (s == "manual_baseline" || s == "manual") return AblationMode::ManualBaseline;
  throw Error(ErrorCode::InvalidParams, "unknown ablation mode '" + s + "'");
}

struct NamedTerrain {
  std::string name;
  std::string file;
  TerrainMap map;
};

struct AblationConfig {
  std::vector<NamedTerrain> terrains;
  std::vector<AblationMode> modes{AblationMode::Perceptive, AblationMode::Blind, AblationMode::ManualBaseline};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  PipelineConfig pipeline;  // mode and seed are set per row
  SkillSpec skill;
  std::string manual_baseline_source;
};

struct AblationRow {
  std::string terrain;
  AblationMode mode = AblationMode::Perceptive;
  std::uint64_t seed = 0;
  EpisodeMetrics metrics;
  double score = 0.0;
  std::string run_dir;  // relative to the ablation directory
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::string rows_csv;
  std::string markdown;
};

/// Fixed reward, perceptive observations, no synthesis loop.
inline CandidateRecord run_manual_baseline(const TerrainMap& map, const RewardProgram& reward, const PipelineConfig& config,
                                           const std::string& out_dir) {
  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  for (const char* d : {"rewards", "checkpoints", "logs", "eval"}) fs::create_directories(root / d);
  PipelineConfig cfg = config;
  cfg.mode = ObservationMode::Perceptive;
  cfg.env.mode = ObservationMode::Perceptive;
  cfg.env.stats = pipeline_stats(map, cfg);
  const auto issues = validate(reward, feature_schema(cfg.env.mode, cfg.env.sensors));
  if (!issues.empty()) throw Error(ErrorCode::ValidationFailed, "manual baseline reward: " + describe(issues));
  CandidateRecord rec;
  rec.origin = "manual";
  rec.reward_source = serialize(reward);
  write_file((root / "rewards" / "0_0.rdsl").string(), rec.reward_source);
  const TrainResult tr = train(reward, map, cfg.env, cfg.ppo, mix_seed(cfg.seed, 0x7a, 0));
  save_checkpoint(tr.params, (root / "checkpoints" / "0_0.ckpt").string());
  write_file((root / "logs" / "0_0.csv").string(), tr.log.to_csv());
  const EvalResult ev = evaluate_policy(tr.params, reward, map, cfg.env, cfg.eval);
  rec.feedback = ev.feedback;
  if (ev.failed) throw Error(ErrorCode::NanDetected, "manual baseline evaluation failed: " + ev.error);
  write_file((root / "eval" / "0_0.csv").string(), metrics_csv(ev.rows));
  rec.metrics = ev.aggregate;
  rec.score = score_policy(ev.aggregate);
  nlohmann::json m{{"format_version", kManifestVersion},
                   {"mode", to_string(AblationMode::ManualBaseline)},
                   {"stats", to_json(cfg.env.stats)},
                   {"seed", cfg.seed},
                   {"ppo", to_json(cfg.ppo)},
                   {"eval", to_json(cfg.eval)},
                   {"candidate", to_json(rec)},
                   {"status", "complete"}};
  write_file((root / "manifest.json").string(), m.dump(2) + "\n");
  return rec;
}

inline const char* kAblationCsvHeader = "terrain,mode,seed,score,";

inline std::string ablation_rows_csv(const std::vector<AblationRow>& rows) {
  std::string out = std::string(kAblationCsvHeader) + kMetricsCsvHeader + ",run_dir\n";
  for (const auto& r : rows)
    out += r.terrain + "," + to_string(r.mode) + "," + std::to_string(r.seed) + "," + format_roundtrip(r.score) + "," +
           metrics_csv_row(r.metrics) + "," + r.run_dir + "\n";
  return out;
}

/// One comparison table per terrain: metric rows, one column per mode, each
/// cell the mean over seeds.
inline std::string ablation_markdown(const std::vector<AblationRow>& rows, const std::vector<std::string>& terrains,
                                     const std::vector<AblationMode>& modes) {
  static const char* kLabel[] = {"Perceptive", "Blind", "Manual Baseline"};
  struct Metric {
    const char* name;
    double EpisodeMetrics::*field;
  };
  static const Metric kMetrics[] = {{"Velocity Tracking (m/s)", &EpisodeMetrics::velocity_tracking_error},
                                    {"Exploration Score", &EpisodeMetrics::exploration_score},
                                    {"Torso Contact Rate", &EpisodeMetrics::torso_contact_rate},
                                    {"Locomotion Quality", &EpisodeMetrics::locomotion_quality},
                                    {"Stationary Fraction", &EpisodeMetrics::stationary_fraction}};
  std::string md = "# Ablation\n";
  for (const auto& t : terrains) {
    md += "\n## " + t + "\n\n| Metric |";
    for (auto m : modes) md += std::string(" ") + kLabel[static_cast<int>(m)] + " |";
    md += "\n|---|";
    for (std::size_t i = 0; i < modes.size(); ++i) md += "---|";
    md += "\n";
    for (const auto& metric : kMetrics) {
      md += std::string("| ") + metric.name + " |";
      for (auto mode : modes) {
        double sum = 0.0;
        int n = 0;
        for (const auto& r : rows)
          if (r.terrain == t && r.mode == mode) {
            sum += r.metrics.*metric.field;
            ++n;
          }
        md += " " + (n ? format_fixed(sum / n, 3) : std::string("-")) + " |";
      }
      md += "\n";
    }
    const bool both = std::count(modes.begin(), modes.end(), AblationMode::Perceptive) &&
                      std::count(modes.begin(), modes.end(), AblationMode::Blind);
    if (both) {
      int lower = 0, pairs = 0;
      for (const auto& p : rows) {
        if (p.terrain != t || p.mode != AblationMode::Perceptive) continue;
        for (const auto& b : rows)
          if (b.terrain == t && b.mode == AblationMode::Blind && b.seed == p.seed) {
            ++pairs;
            if (p.metrics.torso_contact_rate < b.metrics.torso_contact_rate) ++lower;
          }
      }
      md += "\nPerceptive torso contact rate below Blind on " + std::to_string(lower) + "/" + std::to_string(pairs) +
            " seeds.\n";
    }
  }
  return md;
}

/// Runs every (terrain, mode, seed) cell into `out_dir/<terrain>/<mode>/seed_<s>`.
/// Pipeline cells report their best candidate over all iterations.
inline AblationReport run_ablation(const AblationConfig& cfg, const std::string& out_dir,
                                   const std::function<void(const std::string&)>& log = {}) {
  namespace fs = std::filesystem;
  if (cfg.terrains.empty() || cfg.modes.empty() || cfg.seeds.empty())
    throw Error(ErrorCode::InvalidParams, "ablation needs terrains, modes and seeds");
  const bool manual = std::count(cfg.modes.begin(), cfg.modes.end(), AblationMode::ManualBaseline) > 0;
  RewardProgram baseline;
  if (manual) baseline = parse_reward(cfg.manual_baseline_source);
  AblationReport report;
  for (const auto& t : cfg.terrains) {
    for (auto mode : cfg.modes) {
      for (auto seed : cfg.seeds) {
        const std::string rel = t.name + "/" + to_string(mode) + "/seed_" + std::to_string(seed);
        const std::string dir = (fs::path(out_dir) / rel).string();
        if (log) log("ablation cell " + rel);
        PipelineConfig pc = cfg.pipeline;
        pc.seed = seed;
        AblationRow row;
        row.terrain = t.name;
        row.mode = mode;
        row.seed = seed;
        row.run_dir = rel;
        if (mode == AblationMode::ManualBaseline) {
          const CandidateRecord rec = run_manual_baseline(t.map, baseline, pc, dir);
          row.metrics = *rec.metrics;
          row.score = *rec.score;
        } else {
          pc.mode = mode == AblationMode::Perceptive ? ObservationMode::Perceptive : ObservationMode::Blind;
          const RunSummary s = run_pipeline({t.map, t.file, cfg.skill}, pc, dir, {}, log);
          row.metrics = *s.elitist->metrics;
          row.score = *s.elitist->score;
        }
        report.rows.push_back(row);
      }
    }
  }
  std::vector<std::string> names;
  for (const auto& t : cfg.terrains) names.push_back(t.name);
  report.rows_csv = ablation_rows_csv(report.rows);
  report.markdown = ablation_markdown(report.rows, names, cfg.modes);
  fs::create_directories(out_dir);
  write_file((fs::path(out_dir) / "ablation.csv").string(), report.rows_csv);
  write_file((fs::path(out_dir) / "ablation.md").string(), report.markdown);
  return report;
}

}  // namespace esds
