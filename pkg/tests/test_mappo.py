import hashlib
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from stars_isac import mappo
from stars_isac.masac import JointLayout
from stars_isac.mappo import (
    MappoAgent,
    MappoHyper,
    RolloutBuffer,
    actor_loss,
    clip_transform,
    compute_gae,
    critic_loss,
    train_event,
)
from stars_isac.neural import Mlp

LAYOUT = JointLayout((3, 2), (2, 3))


def make_agents(hyper, seed=0):
    rng = np.random.default_rng(seed)
    return [MappoAgent(s, a, 5, [16, 16], hyper, rng) for s, a in zip(LAYOUT.state_dims, LAYOUT.action_dims)]


def fill(buffer, agents, n, seed=1):
    rng = np.random.default_rng(seed)
    for k in range(n):
        states = [rng.standard_normal(d) for d in LAYOUT.state_dims]
        outs = [ag.act(s, rng) for ag, s in zip(agents, states)]
        nxt = [rng.standard_normal(d) for d in LAYOUT.state_dims]
        buffer.add(states, [o[1] for o in outs], [o[2] for o in outs], rng.standard_normal(2), nxt, k % 5 == 4)


def digest(agents):
    h = hashlib.sha256()
    for ag in agents:
        for net in ag.networks().values():
            for p in net.params:
                h.update(p.tobytes())
    return h.hexdigest()


def test_gae_single_terminal_step():
    adv, tgt = compute_gae([2.0], [1.0], [0.5], [9.0], 0.99, 0.95)
    assert adv[0] == 1.5 and tgt[0] == 2.0


def test_gae_three_step_direct_sum():
    r, d = [1.0, -0.5, 2.0], [0.0, 0.0, 0.0]
    v, nv = [0.3, 0.1, -0.2], [0.1, -0.2, 0.4]
    adv, _ = compute_gae(r, d, v, nv, 0.9, 0.8)
    for j in range(3):
        assert adv[j] == pytest.approx(oracles.gae_direct(r, d, v, nv, 0.9, 0.8, j), rel=1e-12)


def test_gae_lambda_zero_is_td():
    rng = np.random.default_rng(0)
    r, v, nv = rng.standard_normal((3, 20))
    d = (rng.uniform(size=20) < 0.2).astype(float)
    adv, _ = compute_gae(r, d, v, nv, 0.99, 0.0)
    np.testing.assert_allclose(adv, r + 0.99 * (1 - d) * nv - v)


@given(st.integers(1, 60), st.integers(0, 10_000))
def test_gae_matches_direct_sum_on_random_rollouts(n, seed):
    rng = np.random.default_rng(seed)
    r, v, nv = rng.standard_normal((3, n))
    d = (rng.uniform(size=n) < 0.15).astype(float)
    adv, _ = compute_gae(r, d, v, nv, 0.99, 0.95)
    for j in range(n):
        assert adv[j] == pytest.approx(oracles.gae_direct(r, d, v, nv, 0.99, 0.95, j), rel=1e-10, abs=1e-10)


def test_gae_incomplete_rollout():
    with pytest.raises(ValueError):
        compute_gae([1.0, 2.0], [0.0], [0.0, 0.0], [0.0, 0.0], 0.99, 0.95)


def test_clip_transform():
    assert clip_transform(2.0, 0.2) == pytest.approx(2.4)
    assert clip_transform(-1.0, 0.2) == pytest.approx(-0.8)
    assert clip_transform(0.0, 0.2) == 0.0


def _minibatch(agent, n=6, seed=0):
    rng = np.random.default_rng(seed)
    states = rng.standard_normal((n, agent.state_dim))
    outs = [agent.act(s, rng) for s in states]
    return states, np.stack([o[1] for o in outs]), np.array([o[2] for o in outs])


def test_ratio_is_one_at_collection_time():
    ag = make_agents(MappoHyper())[0]
    states, u, logp = _minibatch(ag, 50)
    res = actor_loss(ag, states, u, logp, np.ones(50), with_grads=False)
    np.testing.assert_allclose(ag.log_prob(states, u), logp, atol=1e-10)
    assert res.mean_ratio == pytest.approx(1.0, abs=1e-10)
    adv = np.linspace(-1, 1, 50)
    res = actor_loss(ag, states, u, logp, adv, with_grads=False)
    assert res.loss == pytest.approx(-np.mean(np.minimum(adv, clip_transform(adv, 0.2))), abs=1e-9)


def test_clipped_branch_hand_value():
    ag = make_agents(MappoHyper())[0]
    states, u, logp = _minibatch(ag, 1)
    res = actor_loss(ag, states, u, logp - np.log(2.0), np.array([1.5]), with_grads=True)
    assert res.loss == pytest.approx(-1.2 * 1.5)
    assert res.clip_fraction == 1.0
    assert all(not np.any(g) for g in res.grads)


@given(st.integers(0, 1000))
def test_objective_bounded_by_unclipped(seed):
    rng = np.random.default_rng(seed)
    ag = make_agents(MappoHyper(), seed=seed % 7)[0]
    states, u, logp = _minibatch(ag, 8, seed)
    shift = rng.normal(0, 0.5, 8)
    adv = rng.standard_normal(8)
    res = actor_loss(ag, states, u, logp + shift, adv, with_grads=False)
    ratio = np.exp(ag.log_prob(states, u) - logp - shift)
    assert -res.loss <= np.mean(ratio * adv) + 1e-12


def test_actor_loss_gradient_finite_differences():
    ag = make_agents(MappoHyper())[1]
    states, u, logp = _minibatch(ag, 5, 3)
    logp = logp + np.array([0.05, -0.3, 0.0, 0.4, -0.1])
    adv = np.array([1.0, -0.5, 2.0, -1.5, 0.3])
    res = actor_loss(ag, states, u, logp, adv)
    h = 1e-6
    for p, g in zip(ag.actor.params, res.grads):
        flat, gf = p.reshape(-1), g.reshape(-1)
        for k in range(0, flat.size, 7):
            old = flat[k]
            flat[k] = old + h
            up = actor_loss(ag, states, u, logp, adv, with_grads=False).loss
            flat[k] = old - h
            down = actor_loss(ag, states, u, logp, adv, with_grads=False).loss
            flat[k] = old
            assert abs((up - down) / (2 * h) - gf[k]) <= 1e-4 * max(1.0, abs(gf[k]))


def test_nonfinite_ratio_dropped():
    ag = make_agents(MappoHyper())[0]
    states, u, logp = _minibatch(ag, 4)
    logp[1] = -1e6
    c = Counter()
    res = actor_loss(ag, states, u, logp, np.ones(4), c)
    assert c["ppo_ratio_dropped"] == 1 and np.isfinite(res.loss)


def test_critic_loss_cases():
    ag = make_agents(MappoHyper())[0]
    x = np.random.default_rng(0).standard_normal((6, 5))
    loss, _ = critic_loss(ag, x, ag.value(x))
    assert loss == 0.0
    perm = np.array([3, 1, 5, 0, 2, 4])
    t = np.arange(6.0)
    assert critic_loss(ag, x, t)[0] == pytest.approx(critic_loss(ag, x[perm], t[perm])[0], rel=1e-12)


def test_constant_critic_converges_to_mean():
    hyper = MappoHyper(lr_critic=0.05)
    ag = make_agents(hyper)[0]
    ag.critic = Mlp([5, 1], [np.zeros((5, 1)), np.zeros(1)])
    ag.critic_opt = mappo.Adam(ag.critic.params, 0.05)
    x = np.zeros((2, 5))
    t = np.array([0.0, 2.0])
    for _ in range(400):
        _, g = critic_loss(ag, x, t)
        ag.critic_opt.step(ag.critic.params, g)
    assert ag.critic.params[1][0] == pytest.approx(1.0, abs=1e-2)


def test_train_event_partition_and_clear():
    hyper = MappoHyper(rollout_size=256, n_minibatches=64)
    agents = make_agents(hyper)
    buf = RolloutBuffer(256, LAYOUT)
    fill(buf, agents, 256)
    seen = []
    real = mappo.actor_loss

    def spy(agent, states, *a, **k):
        if agent is agents[0]:
            seen.append(states.shape[0])
        return real(agent, states, *a, **k)

    mappo.actor_loss = spy
    try:
        m = train_event(buf, agents, hyper, np.random.default_rng(0))
    finally:
        mappo.actor_loss = real
    assert seen == [4] * 64
    assert len(buf) == 0
    assert len(m.actor_loss) == 2


def test_train_event_zero_rates_still_clears():
    hyper = MappoHyper(rollout_size=32, n_minibatches=8, lr_actor=0.0, lr_critic=0.0)
    agents = make_agents(hyper)
    buf = RolloutBuffer(32, LAYOUT)
    fill(buf, agents, 32)
    before = digest(agents)
    train_event(buf, agents, hyper, np.random.default_rng(0))
    assert digest(agents) == before and len(buf) == 0


def test_train_event_wrong_size():
    hyper = MappoHyper(rollout_size=32, n_minibatches=8)
    agents = make_agents(hyper)
    buf = RolloutBuffer(32, LAYOUT)
    fill(buf, agents, 10)
    with pytest.raises(ValueError):
        train_event(buf, agents, hyper, np.random.default_rng(0))


def test_train_event_deterministic_with_gae_check():
    hyper = MappoHyper(rollout_size=64, n_minibatches=16, check_gae=True, epochs=2)

    def run():
        agents = make_agents(hyper, seed=2)
        buf = RolloutBuffer(64, LAYOUT)
        fill(buf, agents, 64)
        train_event(buf, agents, hyper, np.random.default_rng(5))
        return digest(agents)

    assert run() == run()


def test_hyper_validation():
    with pytest.raises(ValueError):
        MappoHyper(clip_eps=0.0)
    with pytest.raises(ValueError):
        MappoHyper(rollout_size=4, n_minibatches=8)
