#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ctl/env.hpp"
#include "ctl/nn.hpp"
#include "ctl/replay.hpp"
#include "ctl/rng.hpp"
#include "ctl/transfer.hpp"

namespace ctl {

// Salts for deriving the per-run RNG streams from one master seed.
inline constexpr std::uint64_t kSaltEnv = 1;
inline constexpr std::uint64_t kSaltAction = 2;
inline constexpr std::uint64_t kSaltReplay = 3;
inline constexpr std::uint64_t kSaltEval = 4;
inline constexpr std::uint64_t kSaltHead = 5;
inline constexpr std::uint64_t kSaltInit = 6;

struct TrainConfig {
  float gamma = 0.99f;
  float eps_start = 1.0f;
  float eps_end = 0.1f;
  std::int64_t eps_anneal_steps = 6000;
  std::int64_t learn_start = 5000;  // transitions collected before learning
  int batch_size = 32;
  int target_sync_every = 250;  // gradient steps between target refreshes
  int train_every = 1;          // gradient steps per env step
  int episodes_per_epoch = 50;
  int eval_episodes = 200;
  int num_epochs = 12;
  std::uint64_t seed = 1;
  std::size_t buffer_capacity = 400000;
  float grad_clip = 0.0f;  // elementwise clip; 0 disables
  OptimizerConfig optimizer;
};

struct EpochRecord {
  int epoch = 0;
  std::int64_t env_steps = 0;
  std::int64_t episodes = 0;
  double eval_catch_rate = 0.0;
  double eval_mean_return = 0.0;
  double mean_loss = 0.0;
  double epsilon = 0.0;
};

using LearningCurve = std::vector<EpochRecord>;

struct EvalResult {
  double catch_rate = 0.0;
  double mean_return = 0.0;
};

struct TrainResult {
  LearningCurve curve;
  NetworkParams params;
  std::int64_t env_steps = 0;
  std::int64_t episodes = 0;
  std::int64_t grad_steps = 0;
};

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Linear anneal from eps_start to eps_end over eps_anneal_steps env
// steps, constant afterwards.
inline double epsilon_at(std::int64_t t, const TrainConfig& cfg) {
  if (t >= cfg.eps_anneal_steps) return cfg.eps_end;
  const double frac = static_cast<double>(t) / static_cast<double>(cfg.eps_anneal_steps);
  return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac;
}

inline int argmax3(const float* q) {
  int best = 0;
  if (q[1] > q[best]) best = 1;
  if (q[2] > q[best]) best = 2;
  return best;  // ties break toward the lowest index
}

// Epsilon-greedy: explore with probability eps, otherwise the greedy
// action. The network is only evaluated when acting greedily.
inline int select_action(const NetworkParams& params, const Observation& obs, double eps,
                         Pcg32& rng, Workspace& ws) {
  if (rng.uniform() < eps) return static_cast<int>(rng.below(kNumActions));
  const auto q = forward_one(params, obs.values.data(), ws);
  return argmax3(q.data());
}

// A decoded minibatch, reused across gradient steps.
struct TransitionBatch {
  int size = 0;
  std::vector<float> obs;       // size x kObsValues
  std::vector<float> next_obs;  // size x kObsValues
  std::vector<int> actions;
  std::vector<float> rewards;
  std::vector<std::uint8_t> dones;

  void resize(int n) {
    size = n;
    obs.resize(static_cast<std::size_t>(n) * kObsValues);
    next_obs.resize(static_cast<std::size_t>(n) * kObsValues);
    actions.resize(n);
    rewards.resize(n);
    dones.resize(n);
  }
};

inline void sample_batch(const ReplayBuffer& buf, int n, Pcg32& rng, TransitionBatch& out) {
  out.resize(n);
  for (int b = 0; b < n; ++b) {
    const std::size_t i = buf.sample_index(rng);
    const StoredTransition& t = buf.at(i);
    buf.write_obs(i, out.obs.data() + static_cast<std::size_t>(b) * kObsValues);
    buf.write_next_obs(i, out.next_obs.data() + static_cast<std::size_t>(b) * kObsValues);
    out.actions[b] = t.action;
    out.rewards[b] = static_cast<float>(t.reward);
    out.dones[b] = t.done ? 1 : 0;
  }
}

// y = r for terminal transitions, otherwise r + gamma * max_a' Q(s',a')
// under the target parameters.
inline std::vector<float> td_targets(const TransitionBatch& batch,
                                     const NetworkParams& target_params, float gamma,
                                     Workspace& ws) {
  std::vector<float> q(static_cast<std::size_t>(batch.size) * kHeadUnits);
  forward_batch(target_params, batch.next_obs.data(), batch.size, ws, q.data());
  std::vector<float> y(batch.size);
  for (int b = 0; b < batch.size; ++b) {
    float target = batch.rewards[b];
    if (!batch.dones[b]) {
      const float* row = q.data() + static_cast<std::size_t>(b) * kHeadUnits;
      target += gamma * std::max(row[0], std::max(row[1], row[2]));
    }
    y[b] = target;
  }
  return y;
}

// Greedy policy evaluation: n_episodes fresh episodes stepped in
// lockstep so the network runs on batches instead of single frames.
// catch_rate counts individual drops (relevant for streak variants),
// mean_return the per-episode reward.
inline EvalResult evaluate(const NetworkParams& params, const VariantConfig& variant,
                           int n_episodes, std::uint64_t seed) {
  std::vector<Environment> envs(n_episodes, Environment(variant));
  for (int i = 0; i < n_episodes; ++i) envs[i].reset(split_seed(seed, i));

  Workspace ws;
  std::vector<float> batch_obs;
  std::vector<float> q;
  std::vector<int> active(n_episodes);
  for (int i = 0; i < n_episodes; ++i) active[i] = i;

  double total_return = 0.0;
  long drops = 0, catches = 0;
  while (!active.empty()) {
    const int n = static_cast<int>(active.size());
    batch_obs.resize(static_cast<std::size_t>(n) * kObsValues);
    q.resize(static_cast<std::size_t>(n) * kHeadUnits);
    for (int j = 0; j < n; ++j) {
      const auto& obs = envs[active[j]].observation();
      std::copy(obs.values.begin(), obs.values.end(),
                batch_obs.begin() + static_cast<std::size_t>(j) * kObsValues);
    }
    forward_batch(params, batch_obs.data(), n, ws, q.data());
    std::vector<int> still;
    still.reserve(active.size());
    for (int j = 0; j < n; ++j) {
      Environment& env = envs[active[j]];
      const int a = argmax3(q.data() + static_cast<std::size_t>(j) * kHeadUnits);
      const StepResult r = env.step(static_cast<Action>(a));
      total_return += r.reward;
      if (r.drop_resolved) {
        ++drops;
        if (r.drop_caught) ++catches;
      }
      if (!r.terminal) still.push_back(active[j]);
    }
    active = std::move(still);
  }
  return {drops > 0 ? static_cast<double>(catches) / drops : 0.0,
          total_return / n_episodes};
}

// Same protocol with an arbitrary state policy (used by the oracle).
inline EvalResult evaluate_with_policy(const std::function<Action(const GridState&)>& policy,
                                       const VariantConfig& variant, int n_episodes,
                                       std::uint64_t seed) {
  double total_return = 0.0;
  long drops = 0, catches = 0;
  Environment env(variant);
  for (int i = 0; i < n_episodes; ++i) {
    env.reset(split_seed(seed, i));
    while (!env.terminal()) {
      const StepResult r = env.step(policy(env.state()));
      total_return += r.reward;
      if (r.drop_resolved) {
        ++drops;
        if (r.drop_caught) ++catches;
      }
    }
  }
  return {drops > 0 ? static_cast<double>(catches) / drops : 0.0,
          total_return / n_episodes};
}

// Full DQN training run. Deterministic given (variant, config, init):
// every random stream is derived from config.seed via split_seed, and
// each epoch evaluates on the same fixed episode set.
inline TrainResult train(const VariantConfig& variant, const TrainConfig& cfg,
                         const InitSpec& init) {
  auto [params, mask] = materialize(init);
  NetworkParams target = params;
  OptimizerState opt;
  opt.cfg = cfg.optimizer;
  ReplayBuffer buffer(cfg.buffer_capacity);
  Environment env(variant);
  Workspace ws;
  GradientBuffer grads;
  TransitionBatch batch;

  const std::uint64_t env_seed = split_seed(cfg.seed, kSaltEnv);
  const std::uint64_t eval_seed = split_seed(cfg.seed, kSaltEval);
  Pcg32 action_rng = Pcg32::seeded(split_seed(cfg.seed, kSaltAction));
  Pcg32 replay_rng = Pcg32::seeded(split_seed(cfg.seed, kSaltReplay));

  const bool head_only = !mask.body_trainable();

  TrainResult result;
  std::int64_t t = 0, episodes = 0, grad_steps = 0;

  for (int epoch = 1; epoch <= cfg.num_epochs; ++epoch) {
    double loss_sum = 0.0;
    std::int64_t loss_count = 0;

    for (int ep = 0; ep < cfg.episodes_per_epoch; ++ep) {
      env.reset(split_seed(env_seed, episodes));
      ++episodes;
      while (!env.terminal()) {
        const double eps = epsilon_at(t, cfg);
        const Observation prev = env.observation();
        const int a = select_action(params, prev, eps, action_rng, ws);
        const StepResult r = env.step(static_cast<Action>(a));
        buffer.push(prev, static_cast<Action>(a), r.reward, env.observation(), r.terminal);
        ++t;

        if (static_cast<std::int64_t>(buffer.size()) >= cfg.learn_start &&
            t % cfg.train_every == 0) {
          sample_batch(buffer, cfg.batch_size, replay_rng, batch);
          const std::vector<float> targets = td_targets(batch, target, cfg.gamma, ws);
          const double loss = backward_batch(params, batch.obs.data(), batch.size,
                                             batch.actions.data(), targets.data(), ws,
                                             grads, head_only);
          if (!std::isfinite(loss)) {
            std::ostringstream msg;
            msg << "non-finite loss " << loss << " at epoch " << epoch << ", env step "
                << t << ", gradient step " << grad_steps;
            throw TrainError(msg.str());
          }
          if (cfg.grad_clip > 0.0f) {
            for (auto* g : grads.tensors()) {
              for (auto& v : *g) {
                v = std::clamp(v, -cfg.grad_clip, cfg.grad_clip);
              }
            }
          }
          rmsprop_step(params, grads, opt, mask);
          ++grad_steps;
          loss_sum += loss;
          ++loss_count;
          if (grad_steps % cfg.target_sync_every == 0) target = params;
        }
      }
    }

    const EvalResult eval = evaluate(params, variant, cfg.eval_episodes, eval_seed);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.env_steps = t;
    rec.episodes = episodes;
    rec.eval_catch_rate = eval.catch_rate;
    rec.eval_mean_return = eval.mean_return;
    rec.mean_loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
    rec.epsilon = epsilon_at(t, cfg);
    result.curve.push_back(rec);
  }

  result.params = std::move(params);
  result.env_steps = t;
  result.episodes = episodes;
  result.grad_steps = grad_steps;
  return result;
}

}  // namespace ctl
