"""Training loop, evaluation, metrics files, mode comparison and parameter sweeps."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mappo, masac
from .config import HyperParams
from .env import AgentStates, StarsIsacEnv, db_reward, normalize_state
from .neural import load_checkpoint, save_checkpoint, split_head
from .scenario import ScenarioConfig

log = logging.getLogger(__name__)

ALGORITHMS = ("masac", "mappo")
AGENT_NAMES = ("rsu", "car")

BASE_COLUMNS = [
    "episode", "return_rsu", "return_car", "avg_return_rsu", "avg_return_car", "ep_length",
    "mean_radar_snr_db", "mean_user_snr_db", "mean_rate",
]


@dataclass
class EpisodeMetrics:
    episode: int
    return_rsu: float
    return_car: float
    avg_return_rsu: float
    avg_return_car: float
    ep_length: int
    mean_radar_snr_db: float
    mean_user_snr_db: float
    mean_rate: float
    radar_snr: list = field(default_factory=list)
    user_snr: list = field(default_factory=list)


@dataclass
class EvalSummary:
    """Deterministic-policy aggregates; SNR and rate averaged over served slots."""

    radar_snr: float
    rate: float
    mean_length: float
    constraint_fraction: float
    episodes: list

    @property
    def radar_snr_db(self) -> float:
        return db_reward(self.radar_snr)

    def as_dict(self) -> dict:
        return {
            "radar_snr": self.radar_snr, "radar_snr_db": self.radar_snr_db, "rate": self.rate,
            "mean_length": self.mean_length, "constraint_fraction": self.constraint_fraction,
        }


@dataclass
class TrainingResult:
    algorithm: str
    metrics: list
    final_eval: EvalSummary | None
    out_dir: Path | None
    agents: list
    counters: Counter
    train_events: list


class RunningMean:
    """Incremental mean, as used for the average-return columns."""

    def __init__(self):
        self.count = 0
        self.value = 0.0

    def update(self, x: float) -> float:
        self.count += 1
        self.value += (x - self.value) / self.count
        return self.value


def csv_columns(n_slots: int, slot_columns: bool) -> list[str]:
    cols = list(BASE_COLUMNS)
    if slot_columns:
        cols += [f"snr_rsu_n{n}" for n in range(n_slots)]
    return cols


class MetricsWriter:
    """Streams EpisodeMetrics rows to CSV, flushing after each row."""

    def __init__(self, path, n_slots: int, slot_columns: bool = False):
        self.columns = csv_columns(n_slots, slot_columns)
        self.n_slots = n_slots
        self.slot_columns = slot_columns
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(self.columns)
        self._fh.flush()

    def write(self, m: EpisodeMetrics) -> None:
        row = [m.episode] + [repr(float(getattr(m, c))) for c in BASE_COLUMNS[1:5]]
        row += [m.ep_length] + [repr(float(getattr(m, c))) for c in BASE_COLUMNS[6:]]
        if self.slot_columns:
            slots = [repr(db_reward(x)) for x in m.radar_snr] + [""] * (self.n_slots - len(m.radar_snr))
            row += slots
        self._writer.writerow(row)
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def emit_metrics(metrics, path, n_slots: int, slot_columns: bool = False) -> Path:
    writer = MetricsWriter(path, n_slots, slot_columns)
    try:
        for m in metrics:
            writer.write(m)
    finally:
        writer.close()
    return Path(path)


def read_metrics(path) -> list[dict]:
    """Parse a metrics CSV back into dicts of ints/floats (empty cells become None)."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            for k, v in row.items():
                if v == "":
                    rec[k] = None
                elif k in ("episode", "ep_length"):
                    rec[k] = int(v)
                else:
                    rec[k] = float(v)
            out.append(rec)
    return out


def _agent_dims(config: ScenarioConfig):
    return (config.rsu_state_dim, config.car_state_dim), (config.rsu_action_dim, config.car_action_dim)


def build_agents(algorithm: str, config: ScenarioConfig, hyper: HyperParams, rng: np.random.Generator):
    state_dims, action_dims = _agent_dims(config)
    layout = masac.JointLayout(state_dims, action_dims)
    hidden = hyper.network.hidden
    if algorithm == "masac":
        agents = [masac.MasacAgent(s, a, layout.width, hidden, hyper.masac, rng) for s, a in zip(state_dims, action_dims)]
    elif algorithm == "mappo":
        agents = [mappo.MappoAgent(s, a, sum(state_dims), hidden, hyper.mappo, rng) for s, a in zip(state_dims, action_dims)]
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
    # A zero Car action puts every element at phase pi; spreading the initial
    # mean biases breaks that symmetric start.
    car = agents[1]
    car.actor.params[-1][: car.action_dim] = rng.uniform(
        -hyper.network.car_mean_spread, hyper.network.car_mean_spread, car.action_dim
    )
    return agents, layout


def _obs(states: AgentStates, config: ScenarioConfig):
    s = normalize_state(states, config)
    return [s.rsu_state, s.car_state]


def save_agents(directory, algorithm: str, agents, extra: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, agent in zip(AGENT_NAMES, agents):
        meta = {"algorithm": algorithm, "agent": name, **(extra or {})}
        if algorithm == "masac":
            meta["log_alpha"] = agent.log_alpha
        save_checkpoint(directory / f"{name}.ckpt", agent.networks(), agent.optimizers(), meta)
    return directory


class LoadedPolicy:
    """Deterministic actor restored from a checkpoint."""

    def __init__(self, actor):
        self.actor = actor

    def act(self, state, rng=None, deterministic: bool = True):
        mean, _ = split_head(self.actor.forward(state))
        return np.tanh(mean)


def load_policies(directory, config: ScenarioConfig) -> list[LoadedPolicy]:
    directory = Path(directory)
    state_dims, action_dims = _agent_dims(config)
    policies = []
    for name, s_dim, a_dim in zip(AGENT_NAMES, state_dims, action_dims):
        nets, _, _ = load_checkpoint(directory / f"{name}.ckpt")
        actor = nets["actor"]
        if actor.in_dim != s_dim or actor.out_dim != 2 * a_dim:
            raise ValueError(
                f"{name} checkpoint expects state {actor.in_dim} / action {actor.out_dim // 2}, "
                f"config gives {s_dim} / {a_dim}"
            )
        policies.append(LoadedPolicy(actor))
    return policies


def _deterministic_action(agent, obs):
    if isinstance(agent, mappo.MappoAgent):
        return agent.act(obs, deterministic=True)[0]
    return agent.act(obs, deterministic=True)


def evaluate(policies, config: ScenarioConfig, n_episodes: int, seed: int,
             reflection: bool | None = None) -> EvalSummary:
    """Roll out actor means for ``n_episodes``; ``reflection`` overrides the scenario flag."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    if reflection is not None and reflection != config.reflection_enabled:
        config = dataclasses.replace(config, reflection_enabled=reflection)
    env = StarsIsacEnv(config)
    seeds = np.random.SeedSequence([int(seed), 0xE7A1]).generate_state(n_episodes)
    radar, rates, lengths, episodes = [], [], [], []
    for ep in range(n_episodes):
        obs = _obs(env.reset(int(seeds[ep])), config)
        done = False
        ep_radar, ep_user, ep_rate = [], [], []
        while not done:
            a_rsu = _deterministic_action(policies[0], obs[0])
            a_car = _deterministic_action(policies[1], obs[1])
            states, _, done, out = env.step(a_rsu, a_car)
            obs = _obs(states, config)
            ep_radar.append(out.radar_snr)
            ep_user.append(out.user_snr)
            ep_rate.append(out.rate)
        radar += ep_radar
        rates += ep_rate
        lengths.append(len(ep_radar))
        episodes.append({"radar_snr": ep_radar, "user_snr": ep_user, "rate": ep_rate})
    satisfied = sum(1 for n in lengths if n == config.n_slots)
    return EvalSummary(
        radar_snr=float(np.mean(radar)),
        rate=float(np.mean(rates)),
        mean_length=float(np.mean(lengths)),
        constraint_fraction=satisfied / n_episodes,
        episodes=episodes,
    )


def evaluate_checkpoint(directory, config: ScenarioConfig, n_episodes: int, seed: int,
                        reflection: bool | None = None) -> EvalSummary:
    return evaluate(load_policies(directory, config), config, n_episodes, seed, reflection)


def run_training(config: ScenarioConfig, hyper: HyperParams, algorithm: str, out_dir=None,
                 transition_log=None, progress=None) -> TrainingResult:
    """Interleave episodes with trainer events; write metrics CSV and checkpoints when ``out_dir`` is set."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
    tr = hyper.training
    root = np.random.SeedSequence(tr.seed)
    init_ss, act_ss, train_ss, env_ss = root.spawn(4)
    agents, layout = build_agents(algorithm, config, hyper, np.random.default_rng(init_ss))
    act_rng = np.random.default_rng(act_ss)
    train_rng = np.random.default_rng(train_ss)
    env_seeds = np.random.default_rng(env_ss)
    env = StarsIsacEnv(config, log_path=transition_log)
    counters: Counter = env.counters

    if algorithm == "masac":
        buffer = masac.ReplayBuffer(hyper.masac.capacity, layout)
    else:
        buffer = mappo.RolloutBuffer(hyper.mappo.rollout_size, layout)

    writer = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        writer = MetricsWriter(out_dir / "metrics.csv", config.n_slots, tr.slot_snr_columns)
        save_agents(out_dir / "checkpoints" / "ep0", algorithm, agents, {"episode": 0})

    metrics, events = [], []
    mean_r, mean_c = RunningMean(), RunningMean()
    pending = 0
    try:
        for e in range(1, tr.episodes + 1):
            obs = _obs(env.reset(int(env_seeds.integers(0, 2**63 - 1))), config)
            done = False
            g_r = g_c = 0.0
            radar, user, rate = [], [], []
            while not done:
                if algorithm == "masac":
                    acts = [ag.act(o, act_rng) for ag, o in zip(agents, obs)]
                else:
                    outs = [ag.act(o, act_rng) for ag, o in zip(agents, obs)]
                    acts = [o[0] for o in outs]
                states, rewards, done, out = env.step(acts[0], acts[1])
                next_obs = _obs(states, config)
                if algorithm == "masac":
                    buffer.add(obs, acts, rewards, next_obs, done)
                    pending += 1
                else:
                    buffer.add(obs, [o[1] for o in outs], [o[2] for o in outs], rewards, next_obs, done)
                    if buffer.full:
                        try:
                            events.append(mappo.train_event(buffer, agents, hyper.mappo, train_rng, counters))
                        except masac.TrainingAborted as exc:
                            raise masac.TrainingAborted(f"episode {e}: {exc}") from exc
                obs = next_obs
                g_r += rewards[0]
                g_c += rewards[1]
                radar.append(out.radar_snr)
                user.append(out.user_snr)
                rate.append(out.rate)

            if algorithm == "masac" and e % hyper.masac.train_interval == 0:
                try:
                    ev = masac.train_event(buffer, agents, hyper.masac, train_rng, pending)
                except masac.TrainingAborted as exc:
                    raise masac.TrainingAborted(f"episode {e}: {exc}") from exc
                if ev.skipped:
                    counters["masac_event_skipped"] += 1
                    log.info("episode %d: buffer holds %d < %d transitions, training skipped",
                             e, len(buffer), hyper.masac.batch_size)
                events.append(ev)
                pending = 0

            m = EpisodeMetrics(
                episode=e, return_rsu=g_r, return_car=g_c,
                avg_return_rsu=mean_r.update(g_r), avg_return_car=mean_c.update(g_c),
                ep_length=len(radar),
                mean_radar_snr_db=float(np.mean([db_reward(x) for x in radar])),
                mean_user_snr_db=float(np.mean([db_reward(x) for x in user])),
                mean_rate=float(np.mean(rate)),
                radar_snr=radar, user_snr=user,
            )
            metrics.append(m)
            if writer is not None:
                writer.write(m)
                if e % tr.eval_interval == 0:
                    save_agents(out_dir / "checkpoints" / f"ep{e}", algorithm, agents, {"episode": e})
            if progress is not None:
                progress(m)
    finally:
        env.close()
        if writer is not None:
            writer.close()

    final_eval = None
    if tr.episodes > 0:
        final_eval = evaluate(agents, config, tr.eval_episodes, tr.seed)
    if out_dir is not None:
        save_agents(out_dir / "final", algorithm, agents, {"episode": tr.episodes})
        if final_eval is not None:
            (out_dir / "final_eval.json").write_text(json.dumps(final_eval.as_dict(), indent=2, sort_keys=True) + "\n")
    return TrainingResult(algorithm, metrics, final_eval, out_dir, agents, counters, events)


def compare_modes(config: ScenarioConfig, hyper: HyperParams, algorithm: str, out_dir=None) -> dict:
    """Train and evaluate with and without reflection on the same seed."""
    report = {"algorithm": algorithm, "seed": hyper.training.seed}
    for mode, flag in (("with", True), ("without", False)):
        cfg = dataclasses.replace(config, reflection_enabled=flag)
        sub = None if out_dir is None else Path(out_dir) / f"{mode}_reflection"
        res = run_training(cfg, hyper, algorithm, sub)
        report[mode] = res.final_eval.as_dict()
    report["radar_snr_ratio"] = report["with"]["radar_snr"] / report["without"]["radar_snr"]
    report["rate_ratio"] = report["with"]["rate"] / report["without"]["rate"] if report["without"]["rate"] > 0 else math.inf
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "compare.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


SWEEP_KEYS = ("m", "n_tx", "n_rx", "tx_power", "speed")


def apply_sweep_value(config: ScenarioConfig, key: str, value) -> ScenarioConfig:
    from .config import scenario_from_dict

    if key not in SWEEP_KEYS:
        raise ValueError(f"cannot sweep {key!r}; choose from {SWEEP_KEYS}")
    base = {f.name: getattr(config, f.name) for f in dataclasses.fields(config)}
    if key == "m":
        base.pop("m_side")
    elif key in ("n_tx", "n_rx"):
        base.pop(f"{key}_y")
        base.pop(f"{key}_z")
    elif key == "speed":
        base.pop("speed_profile")
    base[key] = value
    return scenario_from_dict(base, prefix="sweep")


def sweep(config: ScenarioConfig, hyper: HyperParams, algorithm: str, key: str, values, seeds,
          out_dir=None) -> list[dict]:
    """Train and evaluate once per (value, seed); returns one row per run."""
    rows = []
    for value in values:
        cfg = apply_sweep_value(config, key, value)
        for seed in seeds:
            sub = None if out_dir is None else Path(out_dir) / f"{key}={value}" / f"seed{seed}"
            res = run_training(cfg, hyper.with_seed(seed), algorithm, sub)
            rows.append({"param": key, "value": value, "seed": int(seed), **res.final_eval.as_dict()})
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        with open(Path(out_dir) / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()) if rows else ["param"], lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    return rows
