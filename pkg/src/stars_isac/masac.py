"""Off-policy multi-agent soft actor-critic with centralized twin critics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .neural import Adam, Mlp, init_policy_head, policy_sample, policy_sample_grad, split_head

ALPHA_MODES = ("fixed", "adaptive_positive", "adaptive_negative")


class TrainingAborted(RuntimeError):
    """A loss or gradient went non-finite during a training event."""


@dataclass(frozen=True)
class MasacHyper:
    batch_size: int = 256
    train_interval: int = 5
    alpha_init: float = 0.1
    alpha_mode: str = "fixed"
    lr_actor: float = 5e-5
    lr_critic: float = 5e-5
    lr_temp: float = 5e-5
    tau: float = 0.05
    discount: float = 0.99
    capacity: int = 100_000
    actor_uses_target_critics: bool = True
    init_log_std: float = 0.0
    init_mean_gain: float = 1.0

    def __post_init__(self):
        if self.batch_size < 1 or self.train_interval < 1 or self.capacity < 1:
            raise ValueError("batch_size, train_interval and capacity must be >= 1")
        if self.alpha_mode not in ALPHA_MODES:
            raise ValueError(f"alpha_mode must be one of {ALPHA_MODES}, got {self.alpha_mode!r}")
        if not self.alpha_init > 0:
            raise ValueError("alpha_init must be > 0")
        for name in ("lr_actor", "lr_critic", "lr_temp"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")


@dataclass(frozen=True)
class JointLayout:
    """Column layout of the joint critic input (s^R, s^C, a^R, a^C)."""

    state_dims: tuple[int, ...]
    action_dims: tuple[int, ...]

    @property
    def n_agents(self) -> int:
        return len(self.state_dims)

    @property
    def width(self) -> int:
        return sum(self.state_dims) + sum(self.action_dims)

    def action_slice(self, i: int) -> slice:
        start = sum(self.state_dims) + sum(self.action_dims[:i])
        return slice(start, start + self.action_dims[i])

    def join(self, states, actions) -> np.ndarray:
        return np.concatenate(list(states) + list(actions), axis=-1)


class ReplayBuffer:
    """Fixed-capacity ring of joint transitions with FIFO overwrite."""

    def __init__(self, capacity: int, layout: JointLayout):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.layout = layout
        k = layout.n_agents
        self.states = [np.zeros((capacity, d)) for d in layout.state_dims]
        self.next_states = [np.zeros((capacity, d)) for d in layout.state_dims]
        self.actions = [np.zeros((capacity, d)) for d in layout.action_dims]
        self.rewards = np.zeros((capacity, k))
        self.dones = np.zeros(capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, states, actions, rewards, next_states, done: bool) -> None:
        c = self.cursor
        for buf, v in zip(self.states, states):
            buf[c] = v
        for buf, v in zip(self.actions, actions):
            buf[c] = v
        for buf, v in zip(self.next_states, next_states):
            buf[c] = v
        self.rewards[c] = rewards
        self.dones[c] = float(done)
        self.cursor = (c + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, rng: np.random.Generator, batch_size: int) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=batch_size)

    def gather(self, idx: np.ndarray) -> "Batch":
        return Batch(
            states=[s[idx] for s in self.states],
            actions=[a[idx] for a in self.actions],
            rewards=self.rewards[idx],
            next_states=[s[idx] for s in self.next_states],
            dones=self.dones[idx],
        )


@dataclass
class Batch:
    states: list
    actions: list
    rewards: np.ndarray
    next_states: list
    dones: np.ndarray

    def __len__(self) -> int:
        return self.dones.shape[0]


class MasacAgent:
    """Actor, twin critics, their targets, and the entropy temperature of one agent."""

    def __init__(
        self, state_dim: int, action_dim: int, joint_dim: int, hidden: list[int],
        hyper: MasacHyper, rng: np.random.Generator,
    ):
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.hyper = hyper
        self.actor = Mlp.init([state_dim, *hidden, 2 * action_dim], rng, out_scale=0.1)
        init_policy_head(self.actor, action_dim, hyper.init_log_std, hyper.init_mean_gain)
        self.critics = [Mlp.init([joint_dim, *hidden, 1], rng) for _ in range(2)]
        self.target_critics = [c.copy() for c in self.critics]
        self.log_alpha = math.log(hyper.alpha_init)
        if hyper.alpha_mode == "adaptive_positive":
            self.target_entropy = float(action_dim)
        elif hyper.alpha_mode == "adaptive_negative":
            self.target_entropy = -float(action_dim)
        else:
            self.target_entropy = None
        self.actor_opt = Adam(self.actor.params, hyper.lr_actor)
        self.critic_opts = [Adam(c.params, hyper.lr_critic) for c in self.critics]
        self.temp_opt = Adam([np.zeros(1)], hyper.lr_temp)

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)

    def act(self, state, rng: np.random.Generator | None = None, deterministic: bool = False) -> np.ndarray:
        mean, raw = split_head(self.actor.forward(state))
        if deterministic:
            return np.tanh(mean)
        return policy_sample(mean, raw, rng.standard_normal(mean.shape)).action

    def sample(self, states, rng: np.random.Generator):
        mean, raw = split_head(self.actor.forward(states))
        return policy_sample(mean, raw, rng.standard_normal(mean.shape))

    def networks(self) -> dict:
        return {
            "actor": self.actor,
            "critic1": self.critics[0], "critic2": self.critics[1],
            "target1": self.target_critics[0], "target2": self.target_critics[1],
        }

    def optimizers(self) -> dict:
        return {"actor_opt": self.actor_opt, "critic1_opt": self.critic_opts[0],
                "critic2_opt": self.critic_opts[1], "temp_opt": self.temp_opt}


def soft_target(rewards, dones, q_min, alpha: float, log_prob, discount: float) -> np.ndarray:
    """y = r + discount * (1 - d) * (min target Q - alpha * log pi)."""
    return np.asarray(rewards) + discount * (1.0 - np.asarray(dones)) * (np.asarray(q_min) - alpha * np.asarray(log_prob))


def _min_q(critics, x) -> np.ndarray:
    return np.minimum(critics[0].forward(x)[:, 0], critics[1].forward(x)[:, 0])


def target_value(batch: Batch, agents, i: int, layout: JointLayout, rng: np.random.Generator, discount: float):
    """Per-transition soft targets for agent ``i`` with fresh next actions; no gradients."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    samples = [ag.sample(s, rng) for ag, s in zip(agents, batch.next_states)]
    x = layout.join(batch.next_states, [smp.action for smp in samples])
    q_min = _min_q(agents[i].target_critics, x)
    return soft_target(batch.rewards[:, i], batch.dones, q_min, agents[i].alpha, samples[i].log_prob, discount)


def _guard(value: float, what: str) -> None:
    if not math.isfinite(value):
        raise TrainingAborted(f"non-finite {what}")


def critic_update(agent: MasacAgent, x: np.ndarray, y: np.ndarray) -> list[float]:
    """One Adam step on each critic towards the fixed targets ``y``."""
    losses = []
    n = x.shape[0]
    for critic, opt in zip(agent.critics, agent.critic_opts):
        pred, cache = critic.forward_cached(x)
        err = pred[:, 0] - y
        loss = float(np.mean(err * err))
        _guard(loss, "critic loss")
        grads, _ = critic.backward(cache, (2.0 / n) * err[:, None], need_input_grad=False)
        opt.step(critic.params, grads)
        losses.append(loss)
    return losses


def actor_update(agent: MasacAgent, i: int, batch: Batch, layout: JointLayout, rng: np.random.Generator):
    """One reparameterized step on agent ``i``'s actor; returns (loss, log-probs).

    Other agents keep their stored actions in the joint critic input.
    """
    states = batch.states[i]
    n = states.shape[0]
    out, actor_cache = agent.actor.forward_cached(states)
    mean, raw = split_head(out)
    noise = rng.standard_normal(mean.shape)
    smp = policy_sample(mean, raw, noise)

    actions = list(batch.actions)
    actions[i] = smp.action
    x = layout.join(batch.states, actions)
    critics = agent.target_critics if agent.hyper.actor_uses_target_critics else agent.critics
    q1, c1 = critics[0].forward_cached(x)
    q2, c2 = critics[1].forward_cached(x)
    q1, q2 = q1[:, 0], q2[:, 0]
    pick1 = q1 <= q2
    q_min = np.where(pick1, q1, q2)
    alpha = agent.alpha
    loss = float(np.mean(alpha * smp.log_prob - q_min))
    _guard(loss, "actor loss")

    g_q = -1.0 / n
    _, gx1 = critics[0].backward(c1, (g_q * pick1)[:, None], need_param_grads=False)
    _, gx2 = critics[1].backward(c2, (g_q * ~pick1)[:, None], need_param_grads=False)
    g_action = (gx1 + gx2)[:, layout.action_slice(i)]
    g_mean, g_log_std = policy_sample_grad(smp, raw, noise, g_action, np.full(n, alpha / n))
    grads, _ = agent.actor.backward(actor_cache, np.concatenate([g_mean, g_log_std], axis=1), need_input_grad=False)
    agent.actor_opt.step(agent.actor.params, grads)
    return loss, smp.log_prob


def temperature_update(agent: MasacAgent, log_prob: np.ndarray) -> float:
    """Minimize mean(alpha * (log pi - target)) in log-alpha; no-op in fixed mode."""
    if agent.target_entropy is None:
        return 0.0
    gap = float(np.mean(log_prob)) - agent.target_entropy
    alpha = agent.alpha
    loss = alpha * gap
    _guard(loss, "temperature loss")
    log_alpha = np.array([agent.log_alpha])
    agent.temp_opt.step([log_alpha], [np.array([alpha * gap])])
    agent.log_alpha = float(log_alpha[0])
    return loss


def soft_update(agent: MasacAgent, tau: float) -> None:
    """target <- tau * target + (1 - tau) * online, elementwise."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    for tgt, src in zip(agent.target_critics, agent.critics):
        for pt, ps in zip(tgt.params, src.params):
            pt *= tau
            pt += (1.0 - tau) * ps


@dataclass
class MasacEventMetrics:
    iterations: int = 0
    skipped: bool = False
    critic_loss: list = field(default_factory=list)
    actor_loss: list = field(default_factory=list)
    temp_loss: list = field(default_factory=list)
    alpha: list = field(default_factory=list)


def train_event(
    buffer: ReplayBuffer, agents, hyper: MasacHyper, rng: np.random.Generator, n_iterations: int
) -> MasacEventMetrics:
    """Run ``n_iterations`` gradient iterations; each samples one batch shared by all agents."""
    k = len(agents)
    metrics = MasacEventMetrics(alpha=[ag.alpha for ag in agents])
    if len(buffer) < hyper.batch_size:
        metrics.skipped = True
        return metrics
    layout = buffer.layout
    sums = np.zeros((3, k))
    for _ in range(n_iterations):
        batch = buffer.gather(buffer.sample_indices(rng, hyper.batch_size))
        x = layout.join(batch.states, batch.actions)
        for i, agent in enumerate(agents):
            y = target_value(batch, agents, i, layout, rng, hyper.discount)
            sums[0, i] += float(np.mean(critic_update(agent, x, y)))
            a_loss, log_prob = actor_update(agent, i, batch, layout, rng)
            sums[1, i] += a_loss
            sums[2, i] += temperature_update(agent, log_prob)
            soft_update(agent, hyper.tau)
    metrics.iterations = n_iterations
    if n_iterations:
        means = sums / n_iterations
        metrics.critic_loss, metrics.actor_loss, metrics.temp_loss = (list(map(float, row)) for row in means)
    metrics.alpha = [ag.alpha for ag in agents]
    return metrics
