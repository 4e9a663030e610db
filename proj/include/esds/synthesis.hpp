#pragma once

// Reward generation: skill spec + terrain statistics -> prompt -> candidate
// reward programs. The offline synthesizer assembles programs from a template
// library gated by the statistics; the remote backend lives in remote.hpp.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "esds/common.hpp"
#include "esds/env.hpp"
#include "esds/envstats.hpp"
#include "esds/reward_dsl.hpp"

namespace esds {

struct SkillSpec {
  std::string task_text = "walk forward tracking the commanded velocity";
  double target_speed = 0.6;
  std::string posture_notes = "keep the torso level at standing height";
  std::string gait_notes = "alternate feet with smooth, regular steps";
  std::string source = "manual_file";

  void validate() const {
    if (task_text.empty()) throw Error(ErrorCode::InvalidParams, "skill task_text is empty");
    if (!(target_speed >= 0.0) || !std::isfinite(target_speed))
      throw Error(ErrorCode::InvalidParams, "skill target_speed must be >= 0");
  }
};

inline nlohmann::json to_json(const SkillSpec& s) {
  return {{"task_text", s.task_text},
          {"target_speed", s.target_speed},
          {"posture_notes", s.posture_notes},
          {"gait_notes", s.gait_notes},
          {"source", s.source}};
}

inline SkillSpec skill_spec_from_json(const nlohmann::json& j) {
  SkillSpec s;
  s.task_text = j.at("task_text").get<std::string>();
  s.target_speed = j.at("target_speed").get<double>();
  s.posture_notes = j.value("posture_notes", std::string());
  s.gait_notes = j.value("gait_notes", std::string());
  s.source = j.value("source", std::string("manual_file"));
  if (s.source != "manual_file") throw Error(ErrorCode::InvalidParams, "unsupported skill source '" + s.source + "'");
  s.validate();
  return s;
}

inline SkillSpec load_skill(const std::string& path) {
  try {
    return skill_spec_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("malformed skill file: ") + e.what());
  }
}

struct PriorProgram {
  std::string source;  // program text, embedded verbatim
  std::string feedback;
};

struct PromptBundle {
  std::string system_text;
  std::string user_text;
  // structured copies of what the text renders, for the offline synthesizer
  SkillSpec skill;
  TerrainStats stats;
  ObservationMode mode = ObservationMode::Perceptive;
  std::optional<PriorProgram> prior;
};

inline std::string grammar_text() {
  return "program   := term*\n"
         "term      := 'term' NAME 'weight' NUMBER '=' expr ';'\n"
         "expr      := product (('+' | '-') product)*\n"
         "product   := unary (('*' | '/') unary)*\n"
         "unary     := '-' unary | primary\n"
         "primary   := NUMBER | FEATURE | CALL | '(' expr ')'\n"
         "functions := exp(x) abs(x) tanh(x) square(x) clip(x, lo, hi) min(a, b) max(a, b)\n"
         "             sum(vec) mean(vec) std(vec) frac_below(vec, thr) frac_above(vec, thr)\n"
         "Comments start with '#'. Division by a value near zero yields 0. The reward is the\n"
         "weighted sum of all terms, evaluated every control step (50 Hz).\n";
}

inline std::string skill_text(const SkillSpec& s) {
  std::string out = "task: " + s.task_text + "\n";
  out += "target_speed: " + format_fixed(s.target_speed, 2) + " m/s\n";
  if (!s.posture_notes.empty()) out += "posture: " + s.posture_notes + "\n";
  if (!s.gait_notes.empty()) out += "gait: " + s.gait_notes + "\n";
  return out;
}

/// Sections in fixed order: task, terrain statistics, grammar, features, and
/// a refine section only when a prior program is given.
inline PromptBundle combine_prompts(const SkillSpec& skill, const TerrainStats& stats,
                                    const std::optional<PriorProgram>& prior = std::nullopt,
                                    ObservationMode mode = ObservationMode::Perceptive,
                                    const SensorConfig& sensors = {}) {
  PromptBundle b;
  b.skill = skill;
  b.stats = stats;
  b.mode = mode;
  b.prior = prior;
  b.system_text =
      "You design reward functions for a torque-controlled biped trained with PPO. Write the reward in the "
      "reward DSL described by the user. Answer with exactly one fenced code block tagged rdsl and nothing "
      "else inside the block.";
  std::string u;
  u += "## Task\n" + skill_text(skill) + "\n";
  u += "## Terrain statistics\n" + stats_summary_text(stats) + "\n";
  u += "## Reward DSL grammar\n" + grammar_text() + "\n";
  u += "## Feature schema\n" + feature_schema_text(feature_schema(mode, sensors));
  if (prior) {
    u += "\n## Refine\nPrevious best program:\n```rdsl\n" + prior->source;
    if (!prior->source.empty() && prior->source.back() != '\n') u += "\n";
    u += "```\nFeedback: " + prior->feedback + "\nImprove the program to address the feedback.\n";
  }
  b.user_text = std::move(u);
  return b;
}

inline int count_sections(const std::string& text) {
  int n = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (text.compare(pos, 3, "## ") == 0) ++n;
    pos = text.find('\n', pos);
    if (pos == std::string::npos) break;
    ++pos;
  }
  return n;
}

// ---------------------------------------------------------------------------
// Responses

struct ParsedResponse {
  RewardProgram program;
  std::string raw_text;
};

/// First fenced block (any language tag), or the whole text without fences.
inline std::string extract_program_text(const std::string& raw) {
  const std::size_t open = raw.find("```");
  if (open == std::string::npos) return raw;
  std::size_t body = raw.find('\n', open);
  if (body == std::string::npos) return "";
  ++body;
  const std::size_t close = raw.find("```", body);
  return raw.substr(body, close == std::string::npos ? std::string::npos : close - body);
}

inline ParsedResponse parse_response(const std::string& raw, const FeatureSchema& schema) {
  std::string text = extract_program_text(raw);
  const bool blank = std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); });
  if (blank) throw Error(ErrorCode::NoProgramFound, "response contains no program");
  ParsedResponse out;
  out.program = parse_reward(text);
  const auto issues = validate(out.program, schema);
  if (!issues.empty()) {
    const bool unknown = std::any_of(issues.begin(), issues.end(),
                                     [](const auto& i) { return i.code == ErrorCode::UnknownFeature; });
    throw Error(unknown ? ErrorCode::UnknownFeature : ErrorCode::ValidationFailed, describe(issues));
  }
  out.raw_text = raw;
  return out;
}

// ---------------------------------------------------------------------------
// Offline synthesizer

struct TermTemplate {
  std::string name;
  double weight;
  std::vector<std::string> variants;  // interchangeable expressions, variant 0 is the default
};

struct OfflineConfig {
  double gap_gate = 0.02;
  double obstacle_gate = 0.05;
  double mutation_sigma = 0.3;
  double swap_probability = 0.5;
};

inline const std::vector<TermTemplate>& template_library() {
  static const std::vector<TermTemplate> lib = {
      {"track_lin", 1.0,
       {"exp(-(square(vx - vx_cmd) + square(vy - vy_cmd)) / 0.1)",
        "exp(-(square(vx - vx_cmd) + square(vy - vy_cmd)) / 0.25)",
        "1 - clip(abs(vx - vx_cmd) + abs(vy - vy_cmd), 0, 1)"}},
      {"track_yaw", 0.3, {"exp(-square(wz - wz_cmd) / 0.25)", "exp(-abs(wz - wz_cmd) / 0.5)"}},
      {"upright", -0.5, {"square(roll) + square(pitch)", "abs(roll) + abs(pitch)"}},
      {"base_height", -1.0, {"square(base_height - 0.6)", "abs(base_height - 0.6)"}},
      {"torso_contact", -2.0, {"torso_contact"}},
      {"smoothness", -0.01, {"action_rate", "0.5 * action_rate + 0.05 * torque_sq"}},
      {"gap_avoid", -1.0,
       {"frac_below(height_scan, -0.5)", "frac_below(height_scan, -0.3)", "clip(-min(0, mean(height_scan)), 0, 1)"}},
      {"obstacle_clear", -0.5, {"frac_above(height_scan, 0.1)", "frac_above(height_scan, 0.2)"}},
  };
  return lib;
}

inline const TermTemplate* find_template(const std::string& name) {
  for (const auto& t : template_library())
    if (t.name == name) return &t;
  return nullptr;
}

namespace synth_detail {

// Four significant digits keep synthesized programs readable.
inline std::string format_weight(double w) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", w);
  return format_roundtrip(std::strtod(buf, nullptr));
}

inline std::string canonical_expr(const std::string& expr) {
  return serialize(parse_reward("term t weight 1 = " + expr + ";").terms.front().expr);
}

struct Draft {
  struct Term {
    std::string name;
    double weight;
    std::string expr;
  };
  std::vector<Term> terms;

  std::string text() const {
    std::string out;
    for (const auto& t : terms) out += "term " + t.name + " weight " + format_weight(t.weight) + " = " + t.expr + ";\n";
    return out;
  }

  Term* find(const std::string& name) {
    for (auto& t : terms)
      if (t.name == name) return &t;
    return nullptr;
  }
};

inline Draft from_program(const RewardProgram& p) {
  Draft d;
  for (const auto& t : p.terms) d.terms.push_back({t.name, t.weight, serialize(t.expr)});
  return d;
}

// Base program from the template library, gated and weighted by the stats.
inline Draft base_draft(const TerrainStats& stats, ObservationMode mode, const OfflineConfig& cfg) {
  Draft d;
  const bool see = mode == ObservationMode::Perceptive;
  for (const auto& t : template_library()) {
    double w = t.weight;
    if (t.name == "gap_avoid") {
      if (!see || !(stats.gap_ratio > cfg.gap_gate)) continue;
      w *= 1.0 + 5.0 * stats.gap_ratio;
    } else if (t.name == "obstacle_clear") {
      if (!see || !(stats.obstacle_density > cfg.obstacle_gate)) continue;
      w *= 1.0 + 5.0 * stats.obstacle_density;
    } else if (t.name == "upright") {
      w *= 1.0 + 10.0 * stats.roughness;
    } else if (t.name == "torso_contact") {
      w *= 1.0 + 2.0 * (stats.gap_ratio + stats.obstacle_density);
    }
    d.terms.push_back({t.name, w, t.variants.front()});
  }
  return d;
}

inline bool has_tag(const std::string& feedback, const std::string& tag) {
  return feedback.find(tag) != std::string::npos;
}

inline void scale(Draft& d, const std::string& name, double f) {
  if (auto* t = d.find(name)) t->weight *= f;
}

// Feedback-driven reweighting of the prior program.
inline Draft refine(Draft d, const std::string& feedback) {
  if (has_tag(feedback, "freezing")) scale(d, "track_lin", 1.5);
  if (has_tag(feedback, "falling")) {
    scale(d, "torso_contact", 1.5);
    scale(d, "upright", 1.5);
  }
  if (has_tag(feedback, "poor tracking")) {
    scale(d, "track_lin", 1.3);
    scale(d, "track_yaw", 1.3);
  }
  return d;
}

inline Draft mutate(Draft d, Rng& rng, const OfflineConfig& cfg) {
  if (d.terms.empty()) return d;
  // only terms with alternative expressions can be swapped
  std::vector<std::size_t> swappable;
  for (std::size_t i = 0; i < d.terms.size(); ++i) {
    const TermTemplate* t = find_template(d.terms[i].name);
    if (t && t->variants.size() > 1) swappable.push_back(i);
  }
  if (!swappable.empty() && rng.uniform() < cfg.swap_probability) {
    auto& term = d.terms[swappable[rng.below(swappable.size())]];
    const TermTemplate* t = find_template(term.name);
    std::vector<std::string> options;
    for (const auto& v : t->variants)
      if (canonical_expr(v) != canonical_expr(term.expr)) options.push_back(v);
    term.expr = options[rng.below(options.size())];
  } else {
    for (auto& t : d.terms) t.weight *= std::exp(cfg.mutation_sigma * rng.normal());
  }
  return d;
}

}  // namespace synth_detail

/// Deterministic in (bundle, seed, n). Candidate 0 is the template program
/// (or the feedback-adjusted prior); later candidates mutate candidate 0.
inline std::vector<RewardProgram> synthesize_offline(const PromptBundle& bundle, int n, std::uint64_t seed,
                                                     const OfflineConfig& cfg = {}) {
  if (n < 1) throw Error(ErrorCode::InvalidParams, "n_candidates must be >= 1");
  using synth_detail::Draft;
  Draft first;
  if (bundle.prior) {
    first = synth_detail::refine(synth_detail::from_program(parse_reward(bundle.prior->source)), bundle.prior->feedback);
  } else {
    first = synth_detail::base_draft(bundle.stats, bundle.mode, cfg);
  }
  const FeatureSchema schema = feature_schema(bundle.mode, SensorConfig{});
  std::vector<RewardProgram> out;
  for (int k = 0; k < n; ++k) {
    Draft d = first;
    if (k > 0) {
      Rng rng(mix_seed(seed, 0x5e7, static_cast<std::uint64_t>(k)));
      d = synth_detail::mutate(first, rng, cfg);
    }
    RewardProgram p = parse_reward(d.text());
    const auto issues = validate(p, schema);
    if (!issues.empty()) throw Error(ErrorCode::ValidationFailed, "offline candidate invalid: " + describe(issues));
    out.push_back(std::move(p));
  }
  return out;
}

/// Terms whose expression reads an exteroceptive vector.
inline int exteroceptive_term_count(const RewardProgram& p) {
  std::function<bool(const Expr&)> uses = [&](const Expr& e) {
    if (e.kind == Expr::Kind::Feature && (e.name == "height_scan" || e.name == "lidar")) return true;
    return std::any_of(e.args.begin(), e.args.end(), uses);
  };
  return static_cast<int>(std::count_if(p.terms.begin(), p.terms.end(), [&](const auto& t) { return uses(t.expr); }));
}

}  // namespace esds
