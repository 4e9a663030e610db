#pragma once

// PPO with GAE over vectorized walker environments. The networks are small
// dense tanh MLPs with hand-written backprop; no ML framework involved.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "esds/common.hpp"
#include "esds/env.hpp"
#include "esds/reward_dsl.hpp"
#include "esds/terrain.hpp"

namespace esds {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kLogStdMin = -4.0;
inline constexpr double kLogStdMax = 1.0;
inline const double kHalfLog2Pi = 0.5 * std::log(2.0 * M_PI);

struct PPOConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip = 0.2;
  double value_coef = 0.5;     // c1
  double entropy_coef = 0.01;  // c2
  double learning_rate = 3e-4;
  int epochs = 4;
  int minibatches = 4;
  int num_envs = 64;     // 3000 on the full-size setup
  int rollout_steps = 64;
  int iterations = 200;  // 500 on the full-size setup
  double max_grad_norm = 1.0;
  int hidden = 128;
  int hidden_layers = 2;
  double init_log_std = -1.6;
  bool recurrent = false;
  int recurrent_size = 32;

  void validate() const {
    auto bad = [](const char* what) { throw Error(ErrorCode::InvalidParams, what); };
    if (!(gamma > 0.0 && gamma <= 1.0)) bad("gamma must be in (0, 1]");
    if (!(lambda > 0.0 && lambda <= 1.0)) bad("lambda must be in (0, 1]");
    if (!(clip > 0.0 && clip < 1.0)) bad("clip must be in (0, 1)");
    if (!(learning_rate > 0.0)) bad("learning_rate must be positive");
    if (epochs < 1 || minibatches < 1 || num_envs < 1 || rollout_steps < 1 || hidden < 1 || hidden_layers < 1)
      bad("counts must be positive");
    if (iterations < 0) bad("iterations must be non-negative");
    if (minibatches > num_envs * rollout_steps) bad("more minibatches than samples");
    if (recurrent && recurrent_size < 1) bad("recurrent_size must be positive");
  }
};

// ---------------------------------------------------------------------------
// Networks

struct Mlp {
  std::vector<MatrixXd> W;
  std::vector<MatrixXd> b;  // column vectors

  struct Cache {
    std::vector<MatrixXd> acts;  // acts[0] = input, acts[l] = tanh output of layer l-1
  };

  static Mlp create(int in, int hidden, int layers, int out) {
    Mlp m;
    int prev = in;
    for (int l = 0; l <= layers; ++l) {
      const int next = l == layers ? out : hidden;
      m.W.push_back(MatrixXd::Zero(next, prev));
      m.b.push_back(MatrixXd::Zero(next, 1));
      prev = next;
    }
    return m;
  }

  std::size_t depth() const { return W.size(); }

  MatrixXd forward(const MatrixXd& x, Cache* cache) const {
    if (cache) {
      cache->acts.clear();
      cache->acts.push_back(x);
    }
    MatrixXd a = x;
    for (std::size_t l = 0; l < W.size(); ++l) {
      MatrixXd z = W[l] * a;
      z.colwise() += b[l].col(0);
      if (l + 1 < W.size()) z = z.array().tanh().matrix();
      if (cache && l + 1 < W.size()) cache->acts.push_back(z);
      a = std::move(z);
    }
    return a;
  }

  /// Accumulates parameter gradients into `grad`; returns d(loss)/d(input)
  /// when `want_input` is set.
  MatrixXd backward(const Cache& cache, const MatrixXd& d_out, Mlp& grad, bool want_input) const {
    MatrixXd g = d_out;
    MatrixXd d_in;
    for (std::size_t l = W.size(); l-- > 0;) {
      const MatrixXd& a = cache.acts[l];
      grad.W[l].noalias() += g * a.transpose();
      grad.b[l] += g.rowwise().sum();
      if (l == 0 && !want_input) break;
      MatrixXd prev = W[l].transpose() * g;
      if (l == 0) {
        d_in = std::move(prev);
        break;
      }
      g = (prev.array() * (1.0 - a.array().square())).matrix();
    }
    return d_in;
  }
};

/// Minimal gated recurrent cell: h = (1 - z) * h_prev + z * tanh(Wc [x; h_prev] + bc),
/// z = sigmoid(Wz [x; h_prev] + bz). Gradients stop at h_prev (one-step truncation).
struct GatedCell {
  MatrixXd Wz, bz, Wc, bc;

  struct Cache {
    MatrixXd xh, z, c, h_prev;
  };

  static GatedCell create(int in, int size) {
    GatedCell g;
    g.Wz = MatrixXd::Zero(size, in + size);
    g.bz = MatrixXd::Zero(size, 1);
    g.Wc = MatrixXd::Zero(size, in + size);
    g.bc = MatrixXd::Zero(size, 1);
    return g;
  }

  int size() const { return static_cast<int>(bz.rows()); }

  MatrixXd forward(const MatrixXd& x, const MatrixXd& h_prev, Cache* cache) const {
    MatrixXd xh(x.rows() + h_prev.rows(), x.cols());
    xh << x, h_prev;
    MatrixXd z = Wz * xh;
    z.colwise() += bz.col(0);
    z = (1.0 / (1.0 + (-z.array()).exp())).matrix();
    MatrixXd c = Wc * xh;
    c.colwise() += bc.col(0);
    c = c.array().tanh().matrix();
    MatrixXd h = ((1.0 - z.array()) * h_prev.array() + z.array() * c.array()).matrix();
    if (cache) {
      cache->xh = std::move(xh);
      cache->z = std::move(z);
      cache->c = std::move(c);
      cache->h_prev = h_prev;
    }
    return h;
  }

  void backward(const Cache& cache, const MatrixXd& d_h, GatedCell& grad) const {
    const MatrixXd dz =
        (d_h.array() * (cache.c.array() - cache.h_prev.array()) * cache.z.array() * (1.0 - cache.z.array())).matrix();
    const MatrixXd dc = (d_h.array() * cache.z.array() * (1.0 - cache.c.array().square())).matrix();
    grad.Wz.noalias() += dz * cache.xh.transpose();
    grad.bz += dz.rowwise().sum();
    grad.Wc.noalias() += dc * cache.xh.transpose();
    grad.bc += dc.rowwise().sum();
  }
};

struct PolicyParams {
  int obs_dim = 0;
  int act_dim = 0;
  Mlp actor;
  Mlp critic;
  MatrixXd log_std;  // act_dim x 1
  bool recurrent = false;
  GatedCell cell;

  struct NamedArray {
    std::string name;
    MatrixXd* array;
  };

  std::vector<NamedArray> arrays() {
    std::vector<NamedArray> out;
    for (std::size_t l = 0; l < actor.depth(); ++l) {
      out.push_back({"actor.W" + std::to_string(l), &actor.W[l]});
      out.push_back({"actor.b" + std::to_string(l), &actor.b[l]});
    }
    for (std::size_t l = 0; l < critic.depth(); ++l) {
      out.push_back({"critic.W" + std::to_string(l), &critic.W[l]});
      out.push_back({"critic.b" + std::to_string(l), &critic.b[l]});
    }
    out.push_back({"log_std", &log_std});
    if (recurrent) {
      out.push_back({"cell.Wz", &cell.Wz});
      out.push_back({"cell.bz", &cell.bz});
      out.push_back({"cell.Wc", &cell.Wc});
      out.push_back({"cell.bc", &cell.bc});
    }
    return out;
  }

  std::vector<std::pair<std::string, const MatrixXd*>> arrays() const {
    std::vector<std::pair<std::string, const MatrixXd*>> out;
    for (auto& a : const_cast<PolicyParams*>(this)->arrays()) out.emplace_back(a.name, a.array);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, a] : arrays()) n += static_cast<std::size_t>(a->size());
    return n;
  }

  bool finite() const {
    for (const auto& [name, a] : arrays())
      if (!a->allFinite()) return false;
    return true;
  }

  PolicyParams zeros_like() const {
    PolicyParams g = *this;
    for (auto& a : g.arrays()) a.array->setZero();
    return g;
  }

  int actor_input() const { return obs_dim + (recurrent ? cell.size() : 0); }
  int hidden_state_size() const { return recurrent ? cell.size() : 0; }

  bool operator==(const PolicyParams& o) const {
    const auto a = arrays();
    const auto b = o.arrays();
    if (obs_dim != o.obs_dim || act_dim != o.act_dim || recurrent != o.recurrent || a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].first != b[i].first || a[i].second->rows() != b[i].second->rows() ||
          a[i].second->cols() != b[i].second->cols() || *a[i].second != *b[i].second)
        return false;
    }
    return true;
  }
};

/// Gaussian init scaled by gain / sqrt(fan_in); near-zero action head so the
/// initial policy is close to the passive stance.
inline PolicyParams init_policy(int obs_dim, int act_dim, const PPOConfig& cfg, std::uint64_t seed) {
  PolicyParams p;
  p.obs_dim = obs_dim;
  p.act_dim = act_dim;
  p.recurrent = cfg.recurrent;
  if (cfg.recurrent) p.cell = GatedCell::create(obs_dim, cfg.recurrent_size);
  p.actor = Mlp::create(p.actor_input(), cfg.hidden, cfg.hidden_layers, act_dim);
  p.critic = Mlp::create(obs_dim, cfg.hidden, cfg.hidden_layers, 1);
  p.log_std = MatrixXd::Constant(act_dim, 1, std::clamp(cfg.init_log_std, kLogStdMin, kLogStdMax));
  Rng rng(mix_seed(seed, 0x1417));
  auto fill = [&](MatrixXd& w, double gain) {
    const double scale = gain / std::sqrt(static_cast<double>(w.cols()));
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = scale * rng.normal();
  };
  for (std::size_t l = 0; l < p.actor.depth(); ++l) fill(p.actor.W[l], l + 1 == p.actor.depth() ? 0.01 : 1.0);
  for (std::size_t l = 0; l < p.critic.depth(); ++l) fill(p.critic.W[l], 1.0);
  if (cfg.recurrent) {
    fill(p.cell.Wz, 1.0);
    fill(p.cell.Wc, 1.0);
  }
  return p;
}

/// Actor forward for a batch (columns); `h_prev` is ignored without a cell.
struct ActorPass {
  Mlp::Cache mlp;
  GatedCell::Cache cell;
  MatrixXd mean;
  MatrixXd h;  // new hidden state
};

inline void actor_forward(const PolicyParams& p, const MatrixXd& obs, const MatrixXd* h_prev, ActorPass& out,
                          bool keep_cache) {
  if (p.recurrent) {
    const MatrixXd hp = h_prev ? *h_prev : MatrixXd::Zero(p.cell.size(), obs.cols());
    out.h = p.cell.forward(obs, hp, keep_cache ? &out.cell : nullptr);
    MatrixXd in(obs.rows() + out.h.rows(), obs.cols());
    in << obs, out.h;
    out.mean = p.actor.forward(in, keep_cache ? &out.mlp : nullptr);
  } else {
    out.mean = p.actor.forward(obs, keep_cache ? &out.mlp : nullptr);
  }
}

inline double gaussian_log_prob(const double* action, const double* mean, const MatrixXd& log_std, int n) {
  double lp = 0.0;
  for (int j = 0; j < n; ++j) {
    const double s = log_std(j, 0);
    const double z = (action[j] - mean[j]) * std::exp(-s);
    lp += -0.5 * z * z - s - kHalfLog2Pi;
  }
  return lp;
}

/// Closed-form entropy of the diagonal Gaussian.
inline double gaussian_entropy(const MatrixXd& log_std) {
  return log_std.sum() + static_cast<double>(log_std.rows()) * (0.5 + kHalfLog2Pi);
}

/// Deterministic controller (mean action) with its own hidden state.
inline Policy make_policy(const PolicyParams& params) {
  auto p = std::make_shared<PolicyParams>(params);
  auto h = std::make_shared<MatrixXd>(MatrixXd::Zero(params.hidden_state_size(), 1));
  return [p, h](std::span<const double> obs, std::span<double> action) {
    if (static_cast<int>(obs.size()) != p->obs_dim)
      throw Error(ErrorCode::InvalidParams, "observation width " + std::to_string(obs.size()) +
                                                " does not match policy input " + std::to_string(p->obs_dim));
    const MatrixXd x = Eigen::Map<const MatrixXd>(obs.data(), p->obs_dim, 1);
    ActorPass pass;
    actor_forward(*p, x, p->recurrent ? h.get() : nullptr, pass, false);
    if (p->recurrent) *h = pass.h;
    for (int j = 0; j < p->act_dim; ++j) action[static_cast<std::size_t>(j)] = pass.mean(j, 0);
  };
}

// ---------------------------------------------------------------------------
// Rollouts and advantages

/// Samples laid out [step][env]: index t * num_envs + e.
struct RolloutBuffer {
  int num_envs = 0;
  int steps = 0;
  int obs_dim = 0;
  int act_dim = 0;
  int hidden_dim = 0;
  MatrixXd obs;      // obs_dim x (steps * num_envs)
  MatrixXd actions;  // act_dim x ...
  MatrixXd hidden;   // hidden_dim x ... (state before the step)
  std::vector<double> log_probs, values, rewards;
  std::vector<std::uint8_t> dones;
  std::vector<double> last_values;  // bootstrap V(s_T) per env
  MatrixXd per_term;                // terms x samples, weighted contributions
  std::vector<double> advantages, returns;
  bool has_advantages = false;

  void allocate(int envs, int t, int od, int ad, int hd, int terms) {
    num_envs = envs;
    steps = t;
    obs_dim = od;
    act_dim = ad;
    hidden_dim = hd;
    const auto n = static_cast<std::size_t>(envs) * static_cast<std::size_t>(t);
    obs.resize(od, static_cast<Eigen::Index>(n));
    actions.resize(ad, static_cast<Eigen::Index>(n));
    hidden.resize(hd, static_cast<Eigen::Index>(n));
    log_probs.assign(n, 0.0);
    values.assign(n, 0.0);
    rewards.assign(n, 0.0);
    dones.assign(n, 0);
    last_values.assign(static_cast<std::size_t>(envs), 0.0);
    per_term = MatrixXd::Zero(terms, static_cast<Eigen::Index>(n));
    advantages.assign(n, 0.0);
    returns.assign(n, 0.0);
    has_advantages = false;
  }

  std::size_t size() const { return rewards.size(); }
  std::size_t index(int t, int e) const {
    return static_cast<std::size_t>(t) * static_cast<std::size_t>(num_envs) + static_cast<std::size_t>(e);
  }
};

/// A_t = sum_l (gamma*lambda)^l delta_{t+l}, cut at done flags; returns = A + V.
inline void compute_gae(RolloutBuffer& buf, double gamma, double lambda) {
  for (int e = 0; e < buf.num_envs; ++e) {
    double next_value = buf.last_values[static_cast<std::size_t>(e)];
    double next_adv = 0.0;
    for (int t = buf.steps - 1; t >= 0; --t) {
      const std::size_t i = buf.index(t, e);
      const double live = buf.dones[i] ? 0.0 : 1.0;
      const double delta = buf.rewards[i] + gamma * next_value * live - buf.values[i];
      next_adv = delta + gamma * lambda * live * next_adv;
      buf.advantages[i] = next_adv;
      buf.returns[i] = next_adv + buf.values[i];
      next_value = buf.values[i];
    }
  }
  buf.has_advantages = true;
}

inline void normalize_advantages(std::vector<double>& adv) {
  if (adv.empty()) return;
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (double& a : adv) a = (a - mean) / (sd + 1e-8);
}

// ---------------------------------------------------------------------------
// Loss

struct Batch {
  MatrixXd obs;
  MatrixXd actions;
  MatrixXd hidden;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return advantages.size(); }
};

struct LossTerms {
  double total = 0.0;
  double clip_term = 0.0;
  double value_term = 0.0;
  double entropy_term = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

/// min(r A, clip(r, 1-eps, 1+eps) A) for one sample.
inline double clipped_surrogate(double ratio, double advantage, double eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

/// total = -clip_term + c1 * value_term - c2 * entropy_term. When `grad` is
/// given it receives d(total)/d(params).
inline LossTerms ppo_loss(const Batch& batch, const PolicyParams& p, const PPOConfig& cfg, PolicyParams* grad) {
  const auto m = static_cast<Eigen::Index>(batch.size());
  const double inv_m = 1.0 / static_cast<double>(m);
  LossTerms out;
  if (m == 0) return out;

  ActorPass pass;
  actor_forward(p, batch.obs, p.recurrent ? &batch.hidden : nullptr, pass, grad != nullptr);
  Mlp::Cache critic_cache;
  const MatrixXd values = p.critic.forward(batch.obs, grad ? &critic_cache : nullptr);

  const int J = p.act_dim;
  MatrixXd d_mean(J, m);
  VectorXd d_log_std = VectorXd::Zero(J);
  VectorXd inv_std(J);
  for (int j = 0; j < J; ++j) inv_std[j] = std::exp(-p.log_std(j, 0));
  double clip_sum = 0.0;
  double kl_sum = 0.0;
  std::size_t clipped = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    const double lp = gaussian_log_prob(&batch.actions(0, i), &pass.mean(0, i), p.log_std, J);
    const double log_ratio = lp - batch.old_log_probs[iu];
    const double ratio = std::exp(log_ratio);
    const double adv = batch.advantages[iu];
    clip_sum += clipped_surrogate(ratio, adv, cfg.clip);
    kl_sum += (ratio - 1.0) - log_ratio;
    const bool unclipped = ratio * adv <= std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv;
    if (!unclipped) ++clipped;
    // d(total)/d(log_prob) = -(1/m) * r * A on the active unclipped branch
    const double g = unclipped ? -inv_m * ratio * adv : 0.0;
    for (int j = 0; j < J; ++j) {
      const double z = (batch.actions(j, i) - pass.mean(j, i)) * inv_std[j];
      d_mean(j, i) = g * z * inv_std[j];
      d_log_std[j] += g * (z * z - 1.0);
    }
  }
  double value_sum = 0.0;
  MatrixXd d_value(1, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double diff = values(0, i) - batch.returns[static_cast<std::size_t>(i)];
    value_sum += diff * diff;
    d_value(0, i) = cfg.value_coef * 2.0 * diff * inv_m;
  }
  out.clip_term = clip_sum * inv_m;
  out.value_term = value_sum * inv_m;
  out.entropy_term = gaussian_entropy(p.log_std);
  out.total = -out.clip_term + cfg.value_coef * out.value_term - cfg.entropy_coef * out.entropy_term;
  out.approx_kl = kl_sum * inv_m;
  out.clip_fraction = static_cast<double>(clipped) * inv_m;

  if (grad) {
    const MatrixXd d_in = p.actor.backward(pass.mlp, d_mean, grad->actor, p.recurrent);
    if (p.recurrent) p.cell.backward(pass.cell, d_in.bottomRows(p.cell.size()), grad->cell);
    p.critic.backward(critic_cache, d_value, grad->critic, false);
    for (int j = 0; j < J; ++j) grad->log_std(j, 0) += d_log_std[j] - cfg.entropy_coef;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

class Adam {
 public:
  explicit Adam(const PolicyParams& like, double lr) : lr_(lr), m_(like.zeros_like()), v_(like.zeros_like()) {}

  void step(PolicyParams& params, const PolicyParams& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    auto p = params.arrays();
    auto g = const_cast<PolicyParams&>(grad).arrays();
    auto m = m_.arrays();
    auto v = v_.arrays();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i].array->array() = kBeta1 * m[i].array->array() + (1.0 - kBeta1) * g[i].array->array();
      v[i].array->array() = kBeta2 * v[i].array->array() + (1.0 - kBeta2) * g[i].array->array().square();
      p[i].array->array() -= lr_ * (m[i].array->array() / c1) / ((v[i].array->array() / c2).sqrt() + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_;
  int t_ = 0;
  PolicyParams m_;
  PolicyParams v_;
};

inline double global_norm(const PolicyParams& g) {
  double sq = 0.0;
  for (const auto& [name, a] : g.arrays()) sq += a->squaredNorm();
  return std::sqrt(sq);
}

inline void scale_gradients(PolicyParams& g, double factor) {
  for (auto& a : g.arrays()) *a.array *= factor;
}

// ---------------------------------------------------------------------------
// Training

struct IterationLog {
  int iteration = 0;
  double mean_return = 0.0;  // mean per-step reward x max episode length
  double mean_step_reward = 0.0;
  std::vector<double> term_means;  // weighted, per step
  double loss_total = 0.0;
  double loss_clip = 0.0;
  double loss_value = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double episodes_done = 0.0;
  double seconds = 0.0;
};

struct TrainingLog {
  std::vector<std::string> term_names;
  std::vector<IterationLog> rows;

  std::string to_csv() const {
    std::string out = "iteration,mean_return,mean_step_reward";
    for (const auto& n : term_names) out += ",term_" + n;
    out += ",loss_total,loss_clip,loss_value,entropy,approx_kl,episodes_done,seconds\n";
    for (const auto& r : rows) {
      out += std::to_string(r.iteration) + "," + format_roundtrip(r.mean_return) + "," +
             format_roundtrip(r.mean_step_reward);
      for (double v : r.term_means) out += "," + format_roundtrip(v);
      for (double v : {r.loss_total, r.loss_clip, r.loss_value, r.entropy, r.approx_kl, r.episodes_done})
        out += "," + format_roundtrip(v);
      out += "," + format_fixed(r.seconds, 3) + "\n";
    }
    return out;
  }
};

struct TrainResult {
  PolicyParams params;
  TrainingLog log;
};

using ProgressFn = std::function<void(const IterationLog&)>;

namespace ppo_detail {

inline void gather(const RolloutBuffer& buf, std::span<const std::size_t> idx, Batch& b) {
  const auto m = static_cast<Eigen::Index>(idx.size());
  b.obs.resize(buf.obs_dim, m);
  b.actions.resize(buf.act_dim, m);
  b.hidden.resize(buf.hidden_dim, m);
  b.old_log_probs.resize(idx.size());
  b.advantages.resize(idx.size());
  b.returns.resize(idx.size());
  for (Eigen::Index k = 0; k < m; ++k) {
    const std::size_t i = idx[static_cast<std::size_t>(k)];
    const auto ii = static_cast<Eigen::Index>(i);
    b.obs.col(k) = buf.obs.col(ii);
    b.actions.col(k) = buf.actions.col(ii);
    if (buf.hidden_dim > 0) b.hidden.col(k) = buf.hidden.col(ii);
    b.old_log_probs[static_cast<std::size_t>(k)] = buf.log_probs[i];
    b.advantages[static_cast<std::size_t>(k)] = buf.advantages[i];
    b.returns[static_cast<std::size_t>(k)] = buf.returns[i];
  }
}

}  // namespace ppo_detail

/// Trains one policy on one reward. Rollouts step every environment in a
/// fixed order on the calling thread, so results are bit-reproducible.
inline TrainResult train(const RewardProgram& reward, const TerrainMap& map, const EnvConfig& env_cfg,
                         const PPOConfig& cfg, std::uint64_t seed, const ProgressFn& progress = {}) {
  cfg.validate();
  env_cfg.commands.validate();
  const FeatureSchema schema = feature_schema(env_cfg.mode, env_cfg.sensors);
  const BoundReward bound(reward, schema);
  const int obs_dim = env_cfg.observation_size();
  const int J = kNumJoints;

  TrainResult result;
  result.params = init_policy(obs_dim, J, cfg, seed);
  for (const auto& t : reward.terms) result.log.term_names.push_back(t.name);
  if (cfg.iterations == 0) return result;
  PolicyParams& params = result.params;

  const int N = cfg.num_envs;
  const int T = cfg.rollout_steps;
  const int H = params.hidden_state_size();
  const std::size_t terms = reward.terms.size();
  std::vector<double> weights;
  for (const auto& t : reward.terms) weights.push_back(t.weight);

  std::vector<WalkerEnv> envs;
  envs.reserve(static_cast<std::size_t>(N));
  std::vector<Rng> command_rngs;
  std::vector<std::uint64_t> episode_counter(static_cast<std::size_t>(N), 0);
  for (int e = 0; e < N; ++e) {
    envs.emplace_back(map, env_cfg, schema, &bound);
    command_rngs.emplace_back(mix_seed(seed, 0xc0ade, static_cast<std::uint64_t>(e)));
  }
  auto reset_env = [&](int e) {
    const auto eu = static_cast<std::size_t>(e);
    const Command cmd = env_cfg.commands.sample(command_rngs[eu]);
    envs[eu].reset(mix_seed(seed, static_cast<std::uint64_t>(e), episode_counter[eu]++), cmd);
  };
  for (int e = 0; e < N; ++e) reset_env(e);

  Rng noise(mix_seed(seed, 0x401e));
  Rng shuffle_rng(mix_seed(seed, 0x5fff1e));
  Adam adam(params, cfg.learning_rate);
  RolloutBuffer buf;
  MatrixXd obs(obs_dim, N);
  MatrixXd hidden = MatrixXd::Zero(H, N);
  std::vector<double> action(static_cast<std::size_t>(J));
  std::vector<std::size_t> order;
  Batch batch;

  for (int it = 1; it <= cfg.iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    buf.allocate(N, T, obs_dim, J, H, static_cast<int>(terms));
    double episodes_done = 0.0;
    for (int e = 0; e < N; ++e) {
      const auto o = envs[static_cast<std::size_t>(e)].observation();
      std::copy(o.begin(), o.end(), obs.col(e).data());
    }
    for (int t = 0; t < T; ++t) {
      ActorPass pass;
      actor_forward(params, obs, H > 0 ? &hidden : nullptr, pass, false);
      const MatrixXd values = params.critic.forward(obs, nullptr);
      for (int e = 0; e < N; ++e) {
        const std::size_t i = buf.index(t, e);
        const auto ii = static_cast<Eigen::Index>(i);
        buf.obs.col(ii) = obs.col(e);
        if (H > 0) buf.hidden.col(ii) = hidden.col(e);
        for (int j = 0; j < J; ++j)
          action[static_cast<std::size_t>(j)] = pass.mean(j, e) + std::exp(params.log_std(j, 0)) * noise.normal();
        std::copy(action.begin(), action.end(), buf.actions.col(ii).data());
        buf.log_probs[i] = gaussian_log_prob(action.data(), &pass.mean(0, e), params.log_std, J);
        buf.values[i] = values(0, e);

        WalkerEnv& env = envs[static_cast<std::size_t>(e)];
        const StepOutcome out = env.step(action);
        double r = out.reward;
        for (std::size_t k = 0; k < terms; ++k) buf.per_term(static_cast<Eigen::Index>(k), ii) = weights[k] * (*out.per_term)[k];
        if (out.truncated) {
          // time limit: bootstrap from the value of the final state
          const auto o = env.observation();
          const MatrixXd x = Eigen::Map<const MatrixXd>(o.data(), obs_dim, 1);
          r += cfg.gamma * params.critic.forward(x, nullptr)(0, 0);
        }
        buf.rewards[i] = r;
        buf.dones[i] = (out.terminated || out.truncated) ? 1 : 0;
        if (H > 0) hidden.col(e) = pass.h.col(e);
        if (buf.dones[i]) {
          episodes_done += 1.0;
          reset_env(e);
          if (H > 0) hidden.col(e).setZero();
        }
        const auto o = env.observation();
        std::copy(o.begin(), o.end(), obs.col(e).data());
      }
    }
    const MatrixXd last = params.critic.forward(obs, nullptr);
    for (int e = 0; e < N; ++e) buf.last_values[static_cast<std::size_t>(e)] = last(0, e);

    // logged return uses the raw reward, without time-limit bootstrap
    IterationLog row;
    row.iteration = it;
    row.term_means.assign(terms, 0.0);
    const double n = static_cast<double>(buf.size());
    double raw_sum = 0.0;
    for (std::size_t i = 0; i < buf.size(); ++i) {
      double raw = 0.0;
      for (std::size_t k = 0; k < terms; ++k) {
        const double v = buf.per_term(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i));
        row.term_means[k] += v / n;
        raw += v;
      }
      raw_sum += raw;
    }
    row.mean_step_reward = raw_sum / n;
    row.mean_return = row.mean_step_reward * env_cfg.max_episode_steps;
    row.episodes_done = episodes_done;

    compute_gae(buf, cfg.gamma, cfg.lambda);
    normalize_advantages(buf.advantages);

    order.resize(buf.size());
    LossTerms acc;
    int updates = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
      const std::size_t mb = order.size() / static_cast<std::size_t>(cfg.minibatches);
      for (int k = 0; k < cfg.minibatches; ++k) {
        const std::size_t begin = static_cast<std::size_t>(k) * mb;
        const std::size_t end = k + 1 == cfg.minibatches ? order.size() : begin + mb;
        ppo_detail::gather(buf, std::span<const std::size_t>(order.data() + begin, end - begin), batch);
        PolicyParams grad = params.zeros_like();
        const LossTerms loss = ppo_loss(batch, params, cfg, &grad);
        if (!std::isfinite(loss.total) || !grad.finite())
          throw Error(ErrorCode::NonFiniteLoss, "non-finite PPO loss at iteration " + std::to_string(it));
        const double norm = global_norm(grad);
        if (norm > cfg.max_grad_norm) scale_gradients(grad, cfg.max_grad_norm / norm);
        adam.step(params, grad);
        params.log_std = params.log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
        acc.total += loss.total;
        acc.clip_term += loss.clip_term;
        acc.value_term += loss.value_term;
        acc.entropy_term += loss.entropy_term;
        acc.approx_kl += loss.approx_kl;
        ++updates;
      }
    }
    row.loss_total = acc.total / updates;
    row.loss_clip = acc.clip_term / updates;
    row.loss_value = acc.value_term / updates;
    row.entropy = acc.entropy_term / updates;
    row.approx_kl = acc.approx_kl / updates;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.rows.push_back(row);
    if (progress) progress(row);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints: "ESDSCKPT", u32 version, u32 meta length + JSON meta, u32 array
// count, then per array: u32 name length, name, u32 rows, u32 cols, doubles.
// All integers and doubles little-endian.

inline constexpr char kCheckpointMagic[8] = {'E', 'S', 'D', 'S', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace ppo_detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, sizeof v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& data;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > data.size()) throw Error(ErrorCode::Format, "truncated checkpoint");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
    pos += 8;
    double d;
    std::memcpy(&d, &v, sizeof d);
    return d;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace ppo_detail

inline std::string checkpoint_bytes(const PolicyParams& p) {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  ppo_detail::put_u32(out, kCheckpointVersion);
  const nlohmann::json meta = {{"obs_dim", p.obs_dim},
                               {"act_dim", p.act_dim},
                               {"actor_depth", p.actor.depth()},
                               {"critic_depth", p.critic.depth()},
                               {"recurrent", p.recurrent}};
  const std::string meta_text = meta.dump();
  ppo_detail::put_u32(out, static_cast<std::uint32_t>(meta_text.size()));
  out += meta_text;
  const auto arrays = p.arrays();
  ppo_detail::put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, a] : arrays) {
    ppo_detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    ppo_detail::put_u32(out, static_cast<std::uint32_t>(a->rows()));
    ppo_detail::put_u32(out, static_cast<std::uint32_t>(a->cols()));
    for (Eigen::Index j = 0; j < a->cols(); ++j)
      for (Eigen::Index i = 0; i < a->rows(); ++i) ppo_detail::put_f64(out, (*a)(i, j));
  }
  return out;
}

inline PolicyParams policy_from_checkpoint_bytes(const std::string& data) {
  ppo_detail::Reader in{data};
  if (in.bytes(sizeof kCheckpointMagic) != std::string(kCheckpointMagic, sizeof kCheckpointMagic))
    throw Error(ErrorCode::Format, "not a policy checkpoint");
  if (in.u32() != kCheckpointVersion) throw Error(ErrorCode::Format, "unsupported checkpoint version");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in.bytes(in.u32()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, std::string("bad checkpoint header: ") + e.what());
  }
  PolicyParams p;
  p.obs_dim = meta.at("obs_dim").get<int>();
  p.act_dim = meta.at("act_dim").get<int>();
  p.recurrent = meta.at("recurrent").get<bool>();
  p.actor.W.resize(meta.at("actor_depth").get<std::size_t>());
  p.actor.b.resize(p.actor.W.size());
  p.critic.W.resize(meta.at("critic_depth").get<std::size_t>());
  p.critic.b.resize(p.critic.W.size());
  const std::uint32_t count = in.u32();
  auto arrays = p.arrays();
  if (count != arrays.size()) throw Error(ErrorCode::Format, "checkpoint array count mismatch");
  for (auto& a : arrays) {
    const std::string name = in.bytes(in.u32());
    if (name != a.name) throw Error(ErrorCode::Format, "unexpected checkpoint array '" + name + "'");
    const std::uint32_t rows = in.u32();
    const std::uint32_t cols = in.u32();
    a.array->resize(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) (*a.array)(i, j) = in.f64();
  }
  if (in.pos != data.size()) throw Error(ErrorCode::Format, "trailing bytes in checkpoint");
  if (!p.finite()) throw Error(ErrorCode::Format, "checkpoint holds non-finite parameters");
  return p;
}

inline void save_checkpoint(const PolicyParams& p, const std::string& path) { write_file(path, checkpoint_bytes(p)); }

inline PolicyParams load_checkpoint(const std::string& path) { return policy_from_checkpoint_bytes(read_file(path)); }

inline nlohmann::json to_json(const PPOConfig& c) {
  return {{"gamma", c.gamma},
          {"lambda", c.lambda},
          {"clip", c.clip},
          {"value_coef", c.value_coef},
          {"entropy_coef", c.entropy_coef},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"minibatches", c.minibatches},
          {"num_envs", c.num_envs},
          {"rollout_steps", c.rollout_steps},
          {"iterations", c.iterations},
          {"max_grad_norm", c.max_grad_norm},
          {"hidden", c.hidden},
          {"hidden_layers", c.hidden_layers},
          {"init_log_std", c.init_log_std},
          {"recurrent", c.recurrent},
          {"recurrent_size", c.recurrent_size}};
}

inline PPOConfig ppo_config_from_json(const nlohmann::json& j) {
  PPOConfig c;
  c.gamma = j.at("gamma").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.clip = j.at("clip").get<double>();
  c.value_coef = j.at("value_coef").get<double>();
  c.entropy_coef = j.at("entropy_coef").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.minibatches = j.at("minibatches").get<int>();
  c.num_envs = j.at("num_envs").get<int>();
  c.rollout_steps = j.at("rollout_steps").get<int>();
  c.iterations = j.at("iterations").get<int>();
  c.max_grad_norm = j.at("max_grad_norm").get<double>();
  c.hidden = j.at("hidden").get<int>();
  c.hidden_layers = j.at("hidden_layers").get<int>();
  c.init_log_std = j.at("init_log_std").get<double>();
  c.recurrent = j.at("recurrent").get<bool>();
  c.recurrent_size = j.at("recurrent_size").get<int>();
  c.validate();
  return c;
}

}  // namespace esds
