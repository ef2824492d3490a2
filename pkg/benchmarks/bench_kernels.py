"""Compare the compiled kernels with the numpy fallback.

Times each kernel on identical inputs, then an environment-only episode loop
(random actions, no learning) under each backend in a fresh interpreter.

    python benchmarks/bench_kernels.py [--repeat N] [--config configs/desk.toml]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from stars_isac import _kernels_py
from stars_isac.channel import build_channels
from stars_isac.config import load_config
from stars_isac.isac import matched_beams
from stars_isac.scenario import vehicle_state_at
from stars_isac.stars import decode_car_action

try:
    from stars_isac import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

ENV_LOOP = """
import json, sys, time
import numpy as np
from stars_isac.config import load_config
from stars_isac.env import StarsIsacEnv
from stars_isac import kernels
cfg, _ = load_config(sys.argv[1])
env = StarsIsacEnv(cfg)
rng = np.random.default_rng(0)
steps = 0
t0 = time.perf_counter()
for ep in range(int(sys.argv[2])):
    env.reset(ep)
    for _ in range(cfg.n_slots):
        env.evaluate_actions(env.slot, rng.uniform(-1, 1, cfg.rsu_action_dim), rng.uniform(-1, 1, cfg.car_action_dim))
        _, _, done, _ = env.step(rng.uniform(-1, 1, cfg.rsu_action_dim), rng.uniform(-1, 1, cfg.car_action_dim))
        steps += 1
        if done:
            break
print(json.dumps({"backend": kernels.BACKEND, "steps": steps, "seconds": time.perf_counter() - t0}))
"""


def kernel_cases(config):
    ch = build_channels(config, vehicle_state_at(config, 0))
    rng = np.random.default_rng(0)
    profile = decode_car_action(rng.uniform(-1, 1, 3 * config.n_elements), config.phase_bits)
    beams = matched_beams(ch, config.tx_power)
    noise = rng.standard_normal(config.n_rx) + 1j * rng.standard_normal(config.n_rx)
    raw = rng.uniform(-1, 1, 3 * config.n_elements)
    m = config.n_elements
    bufs = [np.empty(m) for _ in range(4)]
    x = rng.uniform(-10, 10, 64)
    return {
        "steering_upa": lambda k: k.steering_upa(5, 5, 0.3, -0.7),
        "quantize_phases": lambda k: k.quantize_phases(x, 3),
        "decode_car": lambda k: k.decode_car(raw, 3, *bufs),
        "slot_snrs": lambda k: k.slot_snrs(
            ch.a_tx, ch.b_rx, ch.a_stars, ch.a_user, beams.w_tx, beams.w_rx,
            profile.amp_r, profile.phase_r, profile.amp_t, profile.phase_t,
            ch.pathloss_rsu, ch.pathloss_user, config.rcs_std, config.mf_gain,
            config.sensing_noise_power, config.comm_noise_power,
        ),
        "echo": lambda k: k.echo(
            ch.a_tx, ch.b_rx, ch.a_stars, beams.w_tx, profile.amp_r, profile.phase_r,
            ch.pathloss_rsu, 1.0 + 0.5j, config.mf_gain, noise,
        ),
    }


def time_call(fn, repeat: int) -> float:
    number = 2000
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def env_loop(config_path: str, episodes: int, pure: bool) -> dict:
    env = dict(os.environ, STARS_ISAC_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", ENV_LOOP, config_path, str(episodes)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="configs/desk.toml")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--episodes", type=int, default=2000)
    args = p.parse_args(argv)
    config, _ = load_config(args.config)

    print(f"{'kernel':<16}{'python us':>12}{'cython us':>12}{'speedup':>10}")
    for name, call in kernel_cases(config).items():
        t_py = time_call(lambda: call(_kernels_py), args.repeat)
        if _kernels_c is None:
            print(f"{name:<16}{t_py * 1e6:>12.2f}{'n/a':>12}{'':>10}")
            continue
        t_c = time_call(lambda: call(_kernels_c), args.repeat)
        print(f"{name:<16}{t_py * 1e6:>12.2f}{t_c * 1e6:>12.2f}{t_py / t_c:>9.1f}x")

    runs = [env_loop(args.config, args.episodes, pure=True)]
    if _kernels_c is not None:
        runs.append(env_loop(args.config, args.episodes, pure=False))
    print()
    for r in runs:
        print(f"env loop [{r['backend']}]: {r['steps'] / r['seconds']:.0f} steps/s over {r['steps']} steps")
    return 0


if __name__ == "__main__":
    sys.exit(main())
