"""Two-agent MDP over the STARS ISAC link: RSU agent (beams) and Car agent (STARS)."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import ChannelSet, build_channels
from .isac import RsuBeams, SlotOutcome, achievable_rate, decode_rsu_action, fast_echo, matched_beams, slot_snrs
from .scenario import ScenarioConfig, vehicle_state_at
from .stars import StarsProfile, decode_car_action

SNR_FLOOR = 1e-12


@dataclass(frozen=True)
class AgentStates:
    rsu_state: np.ndarray
    car_state: np.ndarray


@dataclass(frozen=True)
class JointTransition:
    prev_states: AgentStates
    rsu_action: np.ndarray
    car_action: np.ndarray
    rewards: tuple[float, float]
    next_states: AgentStates
    done: bool
    slot_index: int


class EpisodeDone(RuntimeError):
    pass


def db_reward(snr: float) -> float:
    return 10.0 * math.log10(max(snr, SNR_FLOOR))


def rewards_for(radar_snr: float, user_snr: float, weight: float) -> tuple[float, float]:
    """(RSU reward, Car reward); the sensing term stands in for the Car-side radar SNR."""
    sense = db_reward(radar_snr)
    return sense, weight * sense + db_reward(user_snr)


def done_flag(radar_snr: float, user_snr: float, n: int, config: ScenarioConfig) -> bool:
    """Terminal when either SNR floor is violated or the last slot has been served."""
    return bool(radar_snr < config.snr_floor_rsu or user_snr < config.snr_floor_user or n >= config.last_slot)


def normalize_state(
    s: AgentStates, config: ScenarioConfig, clip: float = 10.0, speed_ref: float = 30.0, snr_floor: float = 1.0
) -> AgentStates:
    """Scale observations for the networks: echo in noise-std units, SNR in dB/100.

    The SNR floor (linear, default 0 dB) keeps the Car feature finite and maps
    an all-zero state to zero.
    """
    rsu = np.clip(s.rsu_state / math.sqrt(config.sensing_noise_power), -clip, clip)
    speed, snr = float(s.car_state[0]), float(s.car_state[1])
    car = np.array([speed / speed_ref, 10.0 * math.log10(max(snr, snr_floor)) / 100.0])
    return AgentStates(rsu_state=rsu, car_state=car)


def _complex_noise(rng: np.random.Generator, n: int, power: float) -> np.ndarray:
    scale = math.sqrt(power / 2.0)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


class StarsIsacEnv:
    """Stateful environment; one instance owns its RNG streams and is single-threaded.

    ``reset`` returns the pre-episode observations s_{-1}; each ``step`` serves
    one slot and returns (states, (r_rsu, r_car), done, SlotOutcome).
    """

    def __init__(self, config: ScenarioConfig, log_path: str | Path | None = None):
        self.config = config
        self.counters: Counter = Counter()
        self._channels = [build_channels(config, vehicle_state_at(config, n)) for n in range(config.n_slots)]
        self._log = open(log_path, "w", encoding="utf-8") if log_path is not None else None
        self._slot = 0
        self._done = True
        self._states: AgentStates | None = None
        self._rcs_rng: np.random.Generator | None = None
        self._noise_rng: np.random.Generator | None = None
        self.last_profile: StarsProfile | None = None
        self.last_beams: RsuBeams | None = None

    @property
    def slot(self) -> int:
        return self._slot

    @property
    def done(self) -> bool:
        return self._done

    def channels(self, n: int) -> ChannelSet:
        return self._channels[n]

    def close(self) -> None:
        if self._log is not None:
            self._log.close()
            self._log = None

    def _observe(self, ch: ChannelSet, profile: StarsProfile, beams: RsuBeams) -> np.ndarray:
        cfg = self.config
        rcs_draw = complex(_complex_noise(self._rcs_rng, 1, cfg.rcs_std**2)[0])
        noise = _complex_noise(self._noise_rng, cfg.n_rx, cfg.sensing_noise_power)
        return fast_echo(ch, profile, beams.w_tx, rcs_draw, cfg.mf_gain, noise)

    def _snrs(self, ch: ChannelSet, profile: StarsProfile, beams: RsuBeams) -> tuple[float, float]:
        cfg = self.config
        return slot_snrs(
            ch, profile, beams, cfg.rcs_std, cfg.mf_gain, cfg.sensing_noise_power, cfg.comm_noise_power
        )

    def reset(self, seed: int | None = None) -> AgentStates:
        cfg = self.config
        rcs_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
        self._rcs_rng = np.random.default_rng(rcs_ss)
        self._noise_rng = np.random.default_rng(noise_ss)
        self._slot = 0
        self._done = False

        ch = self._channels[0]
        profile = StarsProfile.default(cfg.n_elements)
        if not cfg.reflection_enabled:
            profile = profile.refraction_only()
        beams = matched_beams(ch, cfg.tx_power)
        echo = self._observe(ch, profile, beams)
        _, user = self._snrs(ch, profile, beams)
        self._states = AgentStates(
            rsu_state=np.concatenate([echo.real, echo.imag]),
            car_state=np.array([cfg.speed_profile[0], user]),
        )
        return self._states

    def decode(self, rsu_raw, car_raw) -> tuple[RsuBeams, StarsProfile]:
        cfg = self.config
        profile = decode_car_action(car_raw, cfg.phase_bits, self.counters)
        if not cfg.reflection_enabled:
            profile = profile.refraction_only()
        beams = decode_rsu_action(rsu_raw, cfg.tx_power, cfg.n_tx, cfg.n_rx, self.counters)
        return beams, profile

    def evaluate_actions(self, n: int, rsu_raw, car_raw) -> tuple[float, float]:
        """Deterministic (radar SNR, user SNR) of raw actions at slot ``n``; no state change."""
        beams, profile = self.decode(rsu_raw, car_raw)
        return self._snrs(self._channels[n], profile, beams)

    def step(self, rsu_raw, car_raw):
        if self._done or self._states is None:
            raise EpisodeDone("step() called on a finished episode; call reset()")
        cfg = self.config
        n = self._slot
        ch = self._channels[n]
        beams, profile = self.decode(rsu_raw, car_raw)
        radar, user = self._snrs(ch, profile, beams)
        echo = self._observe(ch, profile, beams)

        next_states = AgentStates(
            rsu_state=np.concatenate([echo.real, echo.imag]),
            car_state=np.array([cfg.speed_profile[n], user]),
        )
        rewards = rewards_for(radar, user, cfg.reward_weight)
        done = done_flag(radar, user, n, cfg)
        outcome = SlotOutcome(echo=echo, radar_snr=radar, user_snr=user, rate=achievable_rate(user))

        if self._log is not None:
            self._write_log(
                JointTransition(
                    prev_states=self._states,
                    rsu_action=np.asarray(rsu_raw, dtype=float),
                    car_action=np.asarray(car_raw, dtype=float),
                    rewards=rewards,
                    next_states=next_states,
                    done=done,
                    slot_index=n,
                ),
                outcome,
            )

        self.last_profile = profile
        self.last_beams = beams
        self._states = next_states
        self._done = done
        self._slot = n + 1
        return next_states, rewards, done, outcome

    def _write_log(self, t: JointTransition, outcome: SlotOutcome) -> None:
        record = {
            "slot": t.slot_index,
            "prev_rsu_state": t.prev_states.rsu_state.tolist(),
            "prev_car_state": t.prev_states.car_state.tolist(),
            "rsu_action": t.rsu_action.tolist(),
            "car_action": t.car_action.tolist(),
            "rewards": list(t.rewards),
            "next_rsu_state": t.next_states.rsu_state.tolist(),
            "next_car_state": t.next_states.car_state.tolist(),
            "done": t.done,
            "radar_snr": outcome.radar_snr,
            "user_snr": outcome.user_snr,
            "rate": outcome.rate,
        }
        self._log.write(json.dumps(record) + "\n")
        self._log.flush()


def read_transition_log(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
