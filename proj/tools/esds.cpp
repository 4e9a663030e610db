// esds command line: one subcommand per pipeline stage plus the full loop.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "esds/envstats.hpp"
#include "esds/pipeline.hpp"
#include "esds/plot.hpp"
#include "esds/ppo.hpp"
#include "esds/remote.hpp"
#include "esds/synthesis.hpp"
#include "esds/terrain.hpp"

namespace fs = std::filesystem;
using namespace esds;

namespace {

struct Common {
  std::string mode = "perceptive";
  int ppo_iterations = -1;
  int envs = -1;
  int rollout_steps = -1;
  std::string ppo_config;
  int eval_episodes = -1;
  int robots = -1;

  void add(CLI::App* app, bool training) {
    app->add_option("--mode", mode, "perceptive or blind")->check(CLI::IsMember({"perceptive", "blind"}));
    app->add_option("--robots", robots, "survey fleet size for terrain statistics");
    if (!training) return;
    app->add_option("--ppo-iterations", ppo_iterations, "PPO iterations per candidate");
    app->add_option("--envs", envs, "parallel environments");
    app->add_option("--rollout-steps", rollout_steps, "steps per environment per iteration");
    app->add_option("--ppo-config", ppo_config, "PPO config JSON (flags override it)");
    app->add_option("--eval-episodes", eval_episodes, "evaluation episodes");
  }

  PipelineConfig pipeline() const {
    PipelineConfig c;
    c.mode = observation_mode_from_string(mode);
    c.env.mode = c.mode;
    if (!ppo_config.empty()) c.ppo = ppo_config_from_json(nlohmann::json::parse(read_file(ppo_config)));
    if (ppo_iterations >= 0) c.ppo.iterations = ppo_iterations;
    if (envs > 0) c.ppo.num_envs = envs;
    if (rollout_steps > 0) c.ppo.rollout_steps = rollout_steps;
    if (eval_episodes > 0) c.eval.episodes = eval_episodes;
    if (robots > 0) c.fleet.num_robots = robots;
    return c;
  }
};

SynthesisBackend make_backend(const std::string& kind, bool strict) {
  SynthesisBackend b;
  b.kind = backend_kind_from_string(kind);
  b.fallback_offline = !strict;
  if (b.kind == BackendKind::Remote) b.remote = RemoteConfig::from_environment();
  return b;
}

void log_line(const std::string& s) { std::cerr << s << "\n"; }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Environment-aware reward synthesis and locomotion training"};
  app.require_subcommand(1);

  // gen-terrain
  auto* gen = app.add_subcommand("gen-terrain", "generate a terrain heightfield");
  std::string gen_kind = "simple", gen_params, gen_out;
  std::uint64_t gen_seed = 0;
  double gen_gap_area = -1.0;
  gen->add_option("--kind", gen_kind, "simple, gaps, obstacles or stairs")->required();
  gen->add_option("--seed", gen_seed);
  gen->add_option("--params", gen_params, "TerrainParams JSON");
  gen->add_option("--gap-area", gen_gap_area, "target gap-area fraction");
  gen->add_option("--out", gen_out)->required();

  // analyze-env
  auto* ana = app.add_subcommand("analyze-env", "survey a terrain and print its statistics");
  std::string ana_terrain, ana_out;
  std::uint64_t ana_seed = 0;
  int ana_robots = 100;
  ana->add_option("--terrain", ana_terrain)->required();
  ana->add_option("--seed", ana_seed);
  ana->add_option("--robots", ana_robots);
  ana->add_option("--out", ana_out, "write the statistics as JSON");

  // synthesize
  auto* syn = app.add_subcommand("synthesize", "produce candidate reward programs");
  std::string syn_terrain, syn_stats, syn_skill = "data/skill.json", syn_backend = "offline", syn_out, syn_prior,
                               syn_feedback = "healthy gait";
  int syn_n = 2;
  std::uint64_t syn_seed = 0;
  bool syn_strict = false;
  Common syn_common;
  syn->add_option("--terrain", syn_terrain, "terrain to survey (or give --stats)");
  syn->add_option("--stats", syn_stats, "statistics JSON from analyze-env");
  syn->add_option("--skill", syn_skill);
  syn->add_option("--backend", syn_backend)->check(CLI::IsMember({"offline", "remote"}));
  syn->add_option("--n", syn_n);
  syn->add_option("--seed", syn_seed);
  syn->add_option("--prior", syn_prior, "previous best program (.rdsl)");
  syn->add_option("--feedback", syn_feedback, "feedback for the prior program");
  syn->add_flag("--strict", syn_strict, "fail instead of falling back to offline");
  syn->add_option("--out", syn_out)->required();
  syn_common.add(syn, false);

  // train
  auto* tr = app.add_subcommand("train", "train a policy on one reward program");
  std::string tr_terrain, tr_reward, tr_out;
  std::uint64_t tr_seed = 0;
  Common tr_common;
  tr->add_option("--terrain", tr_terrain)->required();
  tr->add_option("--reward", tr_reward)->required();
  tr->add_option("--seed", tr_seed);
  tr->add_option("--out", tr_out, "output directory")->required();
  tr_common.add(tr, true);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint");
  std::string ev_terrain, ev_reward, ev_ckpt, ev_out;
  std::uint64_t ev_seed = 7;
  Common ev_common;
  ev->add_option("--terrain", ev_terrain)->required();
  ev->add_option("--reward", ev_reward)->required();
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--seed", ev_seed);
  ev->add_option("--out", ev_out, "metrics CSV");
  ev_common.add(ev, true);

  // run
  auto* run = app.add_subcommand("run", "full synthesize/train/evaluate/refine loop");
  std::string run_terrain, run_skill = "data/skill.json", run_backend = "offline", run_out;
  std::uint64_t run_seed = 0;
  int run_iters = 3, run_n = 2;
  bool run_strict = false;
  Common run_common;
  run->add_option("--terrain", run_terrain)->required();
  run->add_option("--skill", run_skill);
  run->add_option("--backend", run_backend)->check(CLI::IsMember({"offline", "remote"}));
  run->add_option("--seed", run_seed);
  run->add_option("--iterations", run_iters, "refinement iterations");
  run->add_option("--candidates", run_n, "candidates per iteration");
  run->add_flag("--strict", run_strict, "fail instead of falling back to offline");
  run->add_option("--out", run_out)->required();
  run_common.add(run, true);

  // ablation
  auto* abl = app.add_subcommand("ablation", "terrain x mode x seed comparison");
  std::string abl_terrains, abl_modes = "perceptive,blind,manual_baseline", abl_seeds = "0,1,2",
                            abl_skill = "data/skill.json", abl_baseline = "data/manual_baseline.rdsl", abl_out;
  int abl_iters = 3, abl_n = 2;
  Common abl_common;
  abl->add_option("--terrains", abl_terrains, "comma-separated terrain JSON files")->required();
  abl->add_option("--modes", abl_modes);
  abl->add_option("--seeds", abl_seeds);
  abl->add_option("--skill", abl_skill);
  abl->add_option("--baseline", abl_baseline, "fixed reward for the manual baseline");
  abl->add_option("--iterations", abl_iters);
  abl->add_option("--candidates", abl_n);
  abl->add_option("--out", abl_out)->required();
  abl_common.add(abl, true);

  // plot
  auto* plt = app.add_subcommand("plot", "SVG chart from a CSV file");
  std::string plt_csv, plt_x = "iteration", plt_y = "mean_return", plt_out, plt_title, plt_label;
  bool plt_bar = false;
  plt->add_option("--csv", plt_csv)->required();
  plt->add_option("--x", plt_x, "x column (line charts)");
  plt->add_option("--y", plt_y, "comma-separated y columns");
  plt->add_option("--label", plt_label, "label column (bar charts)");
  plt->add_flag("--bar", plt_bar, "bar chart of the first y column");
  plt->add_option("--title", plt_title);
  plt->add_option("--out", plt_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      TerrainParams p;
      if (!gen_params.empty()) p = terrain_params_from_json(nlohmann::json::parse(read_file(gen_params)));
      if (gen_gap_area >= 0.0) p.gap_area_target = gen_gap_area;
      const TerrainMap map = generate_terrain(terrain_kind_from_string(gen_kind), p, gen_seed);
      save_terrain(map, gen_out);
      std::cout << to_string(map.kind) << " " << map.nx << "x" << map.ny << " gap fraction "
                << format_fixed(map.gap_fraction(), 3) << "\n";
    } else if (ana->parsed()) {
      const TerrainMap map = load_terrain(ana_terrain);
      FleetOptions fleet;
      fleet.num_robots = ana_robots;
      const TerrainStats s = analyze_environment(map, fleet, {}, ana_seed);
      std::cout << stats_summary_text(s);
      if (!ana_out.empty()) write_file(ana_out, to_json(s).dump(2) + "\n");
    } else if (syn->parsed()) {
      PipelineConfig c = syn_common.pipeline();
      TerrainStats stats;
      if (!syn_stats.empty()) {
        stats = terrain_stats_from_json(nlohmann::json::parse(read_file(syn_stats)));
      } else if (!syn_terrain.empty()) {
        c.seed = syn_seed;
        stats = pipeline_stats(load_terrain(syn_terrain), c);
      } else {
        throw Error(ErrorCode::InvalidParams, "synthesize needs --terrain or --stats");
      }
      if (c.mode == ObservationMode::Blind) stats = zeroed_exteroception(stats);
      std::optional<PriorProgram> prior;
      if (!syn_prior.empty()) prior = PriorProgram{serialize(load_reward(syn_prior)), syn_feedback};
      const PromptBundle bundle = combine_prompts(load_skill(syn_skill), stats, prior, c.mode, c.env.sensors);
      fs::create_directories(fs::path(syn_out) / "llm");
      write_file((fs::path(syn_out) / "prompt.txt").string(), bundle.system_text + "\n\n" + bundle.user_text);
      const AuditSink audit = [&](const std::string& name, const std::string& content) {
        write_file((fs::path(syn_out) / "llm" / name).string(), content);
      };
      const SynthesisOutcome out = synthesize(bundle, make_backend(syn_backend, syn_strict), syn_n, syn_seed,
                                              feature_schema(c.mode, c.env.sensors), audit);
      for (std::size_t k = 0; k < out.programs.size(); ++k) {
        const std::string path = (fs::path(syn_out) / ("candidate_" + std::to_string(k) + ".rdsl")).string();
        write_file(path, serialize(out.programs[k]));
        std::cout << path << " (" << out.origin[k] << ")\n";
      }
      if (out.degraded) std::cerr << "degraded: some candidates came from the offline synthesizer\n" << out.notes;
    } else if (tr->parsed()) {
      PipelineConfig c = tr_common.pipeline();
      c.seed = tr_seed;
      const TerrainMap map = load_terrain(tr_terrain);
      c.env.stats = pipeline_stats(map, c);
      const RewardProgram reward = load_reward(tr_reward);
      fs::create_directories(tr_out);
      const TrainResult res = train(reward, map, c.env, c.ppo, tr_seed, [](const IterationLog& l) {
        if (l.iteration % 10 == 0)
          std::cerr << "iteration " << l.iteration << " return " << format_fixed(l.mean_return, 2) << "\n";
      });
      save_checkpoint(res.params, (fs::path(tr_out) / "policy.ckpt").string());
      write_file((fs::path(tr_out) / "train.csv").string(), res.log.to_csv());
      std::cout << (fs::path(tr_out) / "policy.ckpt").string() << "\n";
    } else if (ev->parsed()) {
      PipelineConfig c = ev_common.pipeline();
      c.eval.seed = ev_seed;
      const TerrainMap map = load_terrain(ev_terrain);
      c.env.stats = pipeline_stats(map, c);
      const EvalResult r = evaluate_policy(load_checkpoint(ev_ckpt), load_reward(ev_reward), map, c.env, c.eval);
      if (r.failed) throw Error(ErrorCode::NanDetected, r.error);
      std::cout << to_json(r.aggregate).dump(2) << "\nscore " << format_fixed(score_policy(r.aggregate), 4)
                << "\nfeedback: " << r.feedback << "\n";
      if (!ev_out.empty()) write_file(ev_out, metrics_csv(r.rows));
    } else if (run->parsed()) {
      PipelineConfig c = run_common.pipeline();
      c.seed = run_seed;
      c.iterations = run_iters;
      c.candidates = run_n;
      c.backend = make_backend(run_backend, run_strict);
      const RunSummary s = run_pipeline({load_terrain(run_terrain), run_terrain, load_skill(run_skill)}, c, run_out, {},
                                        log_line);
      std::cout << (fs::path(run_out) / "manifest.json").string() << "\n";
      if (s.elitist) std::cout << "best J " << format_fixed(*s.elitist->score, 4) << "\n";
    } else if (abl->parsed()) {
      AblationConfig a;
      a.pipeline = abl_common.pipeline();
      a.pipeline.iterations = abl_iters;
      a.pipeline.candidates = abl_n;
      a.skill = load_skill(abl_skill);
      for (const auto& f : split_list(abl_terrains)) a.terrains.push_back({fs::path(f).stem().string(), f, load_terrain(f)});
      a.modes.clear();
      for (const auto& m : split_list(abl_modes)) a.modes.push_back(ablation_mode_from_string(m));
      a.seeds.clear();
      for (const auto& s : split_list(abl_seeds)) a.seeds.push_back(std::stoull(s));
      if (std::count(a.modes.begin(), a.modes.end(), AblationMode::ManualBaseline))
        a.manual_baseline_source = read_file(abl_baseline);
      const AblationReport r = run_ablation(a, abl_out, log_line);
      std::cout << r.markdown;
    } else if (plt->parsed()) {
      const CsvTable t = parse_csv(read_file(plt_csv));
      const auto ys = split_list(plt_y);
      if (ys.empty()) throw Error(ErrorCode::InvalidParams, "no y columns");
      std::string svg;
      if (plt_bar) {
        std::vector<std::string> labels;
        if (!plt_label.empty()) {
          labels = t.strings(plt_label);
        } else {
          for (std::size_t i = 0; i < t.rows.size(); ++i) labels.push_back(std::to_string(i));
        }
        svg = bar_chart_svg(labels, t.numbers(ys[0]), plt_title.empty() ? ys[0] : plt_title, ys[0]);
      } else {
        std::vector<Series> series;
        for (const auto& y : ys) series.push_back({y, t.numbers(plt_x), t.numbers(y)});
        svg = line_chart_svg(series, plt_title.empty() ? plt_csv : plt_title, plt_x, ys.size() == 1 ? ys[0] : "value");
      }
      write_file(plt_out, svg);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
