"""On-policy multi-agent PPO with a centralized value function per agent."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .masac import JointLayout, TrainingAborted
from .neural import Adam, Mlp, init_policy_head, log_prob_pre_squash, log_prob_pre_squash_grad, policy_sample, split_head


@dataclass(frozen=True)
class MappoHyper:
    clip_eps: float = 0.2
    gae_lambda: float = 0.95
    rollout_size: int = 256
    n_minibatches: int = 64
    lr_actor: float = 2e-4
    lr_critic: float = 2e-4
    epochs: int = 1
    discount: float = 0.99
    normalize_advantages: bool = True
    check_gae: bool = False
    # wider initial mean head and a tighter start std: noisy beams break the SNR floors
    init_log_std: float = -1.0
    init_mean_gain: float = 5.0

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError("clip_eps must lie in (0, 1)")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if self.rollout_size < 1 or self.n_minibatches < 1 or self.epochs < 1:
            raise ValueError("rollout_size, n_minibatches and epochs must be >= 1")
        if self.n_minibatches > self.rollout_size:
            raise ValueError("n_minibatches cannot exceed rollout_size (empty mini-batches)")
        if self.lr_actor < 0 or self.lr_critic < 0:
            raise ValueError("learning rates must be >= 0")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")


class RolloutBuffer:
    """Ordered transitions of one collection phase, with log-probs cached at action time."""

    def __init__(self, capacity: int, layout: JointLayout):
        self.capacity = int(capacity)
        self.layout = layout
        self.clear()

    def clear(self) -> None:
        k = self.layout.n_agents
        self.states = [[] for _ in range(k)]
        self.next_states = [[] for _ in range(k)]
        self.pre_squash = [[] for _ in range(k)]
        self.log_prob_old = [[] for _ in range(k)]
        self.rewards = []
        self.dones = []

    def __len__(self) -> int:
        return len(self.dones)

    @property
    def full(self) -> bool:
        return len(self) >= self.capacity

    def add(self, states, pre_squash, log_probs, rewards, next_states, done: bool) -> None:
        if self.full:
            raise ValueError("rollout buffer is full; run a training event first")
        for i in range(self.layout.n_agents):
            self.states[i].append(np.asarray(states[i], dtype=np.float64))
            self.next_states[i].append(np.asarray(next_states[i], dtype=np.float64))
            self.pre_squash[i].append(np.asarray(pre_squash[i], dtype=np.float64))
            self.log_prob_old[i].append(float(log_probs[i]))
        self.rewards.append(np.asarray(rewards, dtype=np.float64))
        self.dones.append(float(done))

    def arrays(self):
        k = self.layout.n_agents
        return (
            [np.stack(self.states[i]) for i in range(k)],
            [np.stack(self.next_states[i]) for i in range(k)],
            [np.stack(self.pre_squash[i]) for i in range(k)],
            [np.array(self.log_prob_old[i]) for i in range(k)],
            np.stack(self.rewards),
            np.array(self.dones),
        )


class MappoAgent:
    def __init__(self, state_dim: int, action_dim: int, joint_state_dim: int, hidden: list[int],
                 hyper: MappoHyper, rng: np.random.Generator):
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.hyper = hyper
        self.actor = Mlp.init([state_dim, *hidden, 2 * action_dim], rng, out_scale=0.1)
        init_policy_head(self.actor, action_dim, hyper.init_log_std, hyper.init_mean_gain)
        self.critic = Mlp.init([joint_state_dim, *hidden, 1], rng)
        self.actor_opt = Adam(self.actor.params, hyper.lr_actor)
        self.critic_opt = Adam(self.critic.params, hyper.lr_critic)

    def act(self, state, rng: np.random.Generator | None = None, deterministic: bool = False):
        """Returns (action, pre-squash sample, log-prob); log-prob is ``nan`` when deterministic."""
        mean, raw = split_head(self.actor.forward(state))
        if deterministic:
            return np.tanh(mean), mean, float("nan")
        smp = policy_sample(mean, raw, rng.standard_normal(mean.shape))
        return smp.action, smp.pre_squash, float(smp.log_prob)

    def log_prob(self, states, pre_squash) -> np.ndarray:
        mean, raw = split_head(self.actor.forward(states))
        return log_prob_pre_squash(mean, raw, pre_squash)

    def value(self, joint_states) -> np.ndarray:
        return self.critic.forward(joint_states)[:, 0]

    def networks(self) -> dict:
        return {"actor": self.actor, "critic": self.critic}

    def optimizers(self) -> dict:
        return {"actor_opt": self.actor_opt, "critic_opt": self.critic_opt}


def compute_gae(rewards, dones, values, next_values, discount: float, lam: float):
    """Backward recursion A_j = delta_j + discount*lam*(1-d_j)*A_{j+1}; returns (advantages, value targets)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    next_values = np.asarray(next_values, dtype=np.float64)
    n = rewards.shape[0]
    if not (dones.shape[0] == values.shape[0] == next_values.shape[0] == n):
        raise ValueError("incomplete rollout: rewards, dones and values must align")
    keep = 1.0 - dones
    delta = rewards + discount * keep * next_values - values
    adv = np.empty(n)
    running = 0.0
    for j in range(n - 1, -1, -1):
        running = delta[j] + discount * lam * keep[j] * running
        adv[j] = running
    return adv, adv + values


def gae_direct(rewards, dones, values, next_values, discount: float, lam: float, j: int) -> float:
    """Explicit discounted sum of TD residuals from step ``j``, cut at the first terminal."""
    total = 0.0
    weight = 1.0
    for t in range(j, len(rewards)):
        keep = 1.0 - dones[t]
        total += weight * (rewards[t] + discount * keep * next_values[t] - values[t])
        weight *= discount * lam * keep
        if weight == 0.0:
            break
    return total


def clip_transform(advantage, epsilon: float):
    """(1 + eps) * A for A >= 0, else (1 - eps) * A."""
    a = np.asarray(advantage, dtype=np.float64)
    out = np.where(a >= 0, (1.0 + epsilon) * a, (1.0 - epsilon) * a)
    return out if out.ndim else float(out)


def normalize(adv: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    if adv.shape[0] < 2:
        return adv - adv.mean()
    return (adv - adv.mean()) / (adv.std() + eps)


@dataclass
class ActorLossResult:
    loss: float
    mean_ratio: float
    clip_fraction: float
    grads: list | None


def actor_loss(agent: MappoAgent, states, pre_squash, log_prob_old, advantages,
               counters: Counter | None = None, with_grads: bool = True) -> ActorLossResult:
    """Negative clipped surrogate min(ratio*A, g(A)) averaged over finite-ratio samples."""
    eps = agent.hyper.clip_eps
    out, cache = agent.actor.forward_cached(states)
    mean, raw = split_head(out)
    logp_new = log_prob_pre_squash(mean, raw, pre_squash)
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.exp(logp_new - log_prob_old)
    valid = np.isfinite(ratio)
    n_bad = int((~valid).sum())
    if n_bad and counters is not None:
        counters["ppo_ratio_dropped"] += n_bad
    n = int(valid.sum())
    if n == 0:
        return ActorLossResult(0.0, float("nan"), 0.0, None)
    ratio_v = np.where(valid, ratio, 0.0)
    adv = np.asarray(advantages, dtype=np.float64)
    surrogate = ratio_v * adv
    clipped = clip_transform(adv, eps)
    unclipped_active = (surrogate <= clipped) & valid
    objective = np.where(unclipped_active, surrogate, clipped)
    loss = -float(np.sum(np.where(valid, objective, 0.0)) / n)
    if not math.isfinite(loss):
        raise TrainingAborted("non-finite actor loss")
    clip_frac = float(np.sum(valid & ~unclipped_active) / n)
    grads = None
    if with_grads:
        g_logp = np.where(unclipped_active, -surrogate / n, 0.0)
        g_mean, g_log_std = log_prob_pre_squash_grad(mean, raw, pre_squash, g_logp)
        grads, _ = agent.actor.backward(cache, np.concatenate([g_mean, g_log_std], axis=1), need_input_grad=False)
    return ActorLossResult(loss, float(np.mean(ratio_v[valid])), clip_frac, grads)


def critic_loss(agent: MappoAgent, joint_states, targets, with_grads: bool = True):
    """Mean squared value error; returns (loss, grads)."""
    pred, cache = agent.critic.forward_cached(joint_states)
    err = pred[:, 0] - targets
    loss = float(np.mean(err * err))
    if not math.isfinite(loss):
        raise TrainingAborted("non-finite critic loss")
    grads = None
    if with_grads:
        grads, _ = agent.critic.backward(cache, (2.0 / err.shape[0]) * err[:, None], need_input_grad=False)
    return loss, grads


@dataclass
class MappoEventMetrics:
    actor_loss: list
    critic_loss: list
    mean_ratio: list
    clip_fraction: list


def _check_gae_sample(rewards, dones, values, next_values, adv, hyper: MappoHyper, rng) -> None:
    n = len(rewards)
    picks = rng.choice(n, size=max(1, n // 20), replace=False)
    for j in picks:
        ref = gae_direct(rewards, dones, values, next_values, hyper.discount, hyper.gae_lambda, int(j))
        if not math.isclose(ref, adv[j], rel_tol=1e-9, abs_tol=1e-9):
            raise AssertionError(f"GAE recursion disagrees with direct sum at step {j}: {adv[j]} vs {ref}")


def train_event(buffer: RolloutBuffer, agents, hyper: MappoHyper, rng: np.random.Generator,
                counters: Counter | None = None) -> MappoEventMetrics:
    """Advantages for every agent, then K random mini-batches of actor and critic steps; clears the buffer."""
    if len(buffer) != hyper.rollout_size:
        raise ValueError(f"rollout holds {len(buffer)} transitions, expected {hyper.rollout_size}")
    states, next_states, pre_squash, logp_old, rewards, dones = buffer.arrays()
    joint = np.concatenate(states, axis=1)
    joint_next = np.concatenate(next_states, axis=1)
    k = len(agents)

    advantages, targets = [], []
    for i, agent in enumerate(agents):
        v = agent.value(joint)
        v_next = agent.value(joint_next)
        adv, tgt = compute_gae(rewards[:, i], dones, v, v_next, hyper.discount, hyper.gae_lambda)
        if hyper.check_gae:
            _check_gae_sample(rewards[:, i], dones, v, v_next, adv, hyper, rng)
        advantages.append(adv)
        targets.append(tgt)

    sums = np.zeros((4, k))
    n_steps = 0
    for _ in range(hyper.epochs):
        for mb in np.array_split(rng.permutation(hyper.rollout_size), hyper.n_minibatches):
            n_steps += 1
            for i, agent in enumerate(agents):
                adv = advantages[i][mb]
                if hyper.normalize_advantages:
                    adv = normalize(adv)
                res = actor_loss(agent, states[i][mb], pre_squash[i][mb], logp_old[i][mb], adv, counters)
                if res.grads is not None:
                    agent.actor_opt.step(agent.actor.params, res.grads)
                c_loss, c_grads = critic_loss(agent, joint[mb], targets[i][mb])
                agent.critic_opt.step(agent.critic.params, c_grads)
                sums[:, i] += (res.loss, c_loss, res.mean_ratio, res.clip_fraction)
    buffer.clear()
    means = sums / max(n_steps, 1)
    return MappoEventMetrics(*(list(map(float, row)) for row in means))
