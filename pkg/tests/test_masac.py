import dataclasses
import hashlib

import numpy as np
import pytest

from stars_isac import masac
from stars_isac.masac import (
    JointLayout,
    MasacAgent,
    MasacHyper,
    ReplayBuffer,
    actor_update,
    critic_update,
    soft_target,
    soft_update,
    target_value,
    temperature_update,
    train_event,
)
from stars_isac.neural import Mlp

LAYOUT = JointLayout((3, 2), (2, 3))


def make_agents(hyper=MasacHyper(), seed=0):
    rng = np.random.default_rng(seed)
    return [MasacAgent(s, a, LAYOUT.width, [16, 16], hyper, rng) for s, a in zip(LAYOUT.state_dims, LAYOUT.action_dims)]


def fill(buffer, n, seed=1):
    rng = np.random.default_rng(seed)
    for k in range(n):
        states = [rng.standard_normal(d) for d in LAYOUT.state_dims]
        acts = [rng.uniform(-0.9, 0.9, d) for d in LAYOUT.action_dims]
        nxt = [rng.standard_normal(d) for d in LAYOUT.state_dims]
        buffer.add(states, acts, rng.standard_normal(2), nxt, k % 7 == 6)


def digest(agents):
    h = hashlib.sha256()
    for ag in agents:
        for net in ag.networks().values():
            for p in net.params:
                h.update(p.tobytes())
        h.update(np.float64(ag.log_alpha).tobytes())
    return h.hexdigest()


def test_soft_target_hand_values():
    assert soft_target(1.0, 0.0, 2.0, 0.1, -3.0, 0.99) == pytest.approx(3.277)
    assert soft_target(1.5, 1.0, 100.0, 0.1, -3.0, 0.99) == 1.5


def test_target_value_terminal_is_reward():
    agents = make_agents()
    buf = ReplayBuffer(10, LAYOUT)
    fill(buf, 10)
    buf.dones[:] = 1.0
    batch = buf.gather(np.arange(10))
    y = target_value(batch, agents, 1, LAYOUT, np.random.default_rng(0), 0.99)
    np.testing.assert_array_equal(y, batch.rewards[:, 1])


def test_equal_target_critics_min_is_common_value():
    agents = make_agents()
    ag = agents[0]
    ag.target_critics[1].load_from(ag.target_critics[0])
    x = np.random.default_rng(2).standard_normal((5, LAYOUT.width))
    np.testing.assert_array_equal(masac._min_q(ag.target_critics, x), ag.target_critics[0].forward(x)[:, 0])


def test_empty_batch_rejected():
    buf = ReplayBuffer(4, LAYOUT)
    with pytest.raises(ValueError):
        buf.sample_indices(np.random.default_rng(0), 2)


def test_replay_ring_overwrites_fifo():
    buf = ReplayBuffer(3, LAYOUT)
    for k in range(5):
        buf.add([np.full(3, k), np.full(2, k)], [np.zeros(2), np.zeros(3)], [k, k], [np.zeros(3), np.zeros(2)], False)
    assert len(buf) == 3
    assert sorted(buf.states[0][:, 0]) == [2.0, 3.0, 4.0]


def test_sampling_reproducible_and_in_range():
    buf = ReplayBuffer(100, LAYOUT)
    fill(buf, 37)
    a = buf.sample_indices(np.random.default_rng(9), 500)
    b = buf.sample_indices(np.random.default_rng(9), 500)
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 0 and a.max() < 37


def test_critic_update_zero_loss_when_exact():
    agents = make_agents()
    ag = agents[0]
    x = np.random.default_rng(3).standard_normal((8, LAYOUT.width))
    y = ag.critics[0].forward(x)[:, 0]
    ag.critics[1].load_from(ag.critics[0])
    before = [p.copy() for p in ag.critics[0].params]
    losses = critic_update(ag, x, y)
    assert losses == [0.0, 0.0]
    for a, b in zip(before, ag.critics[0].params):
        np.testing.assert_array_equal(a, b)


def test_critic_toy_gradient_direction():
    hyper = MasacHyper(lr_critic=0.01)
    ag = make_agents(hyper)[0]
    width = LAYOUT.width
    for l in range(2):
        ag.critics[l] = Mlp([width, 1], [np.zeros((width, 1)), np.zeros(1)])
    ag.critic_opts = [masac.Adam(c.params, 0.01) for c in ag.critics]
    x = np.zeros((4, width))
    x[:, 0] = [1.0, 2.0, -1.0, 0.5]
    y = np.array([2.0, 4.0, -2.0, 1.0])
    # d/dw mean((w x - y)^2) at w=0 is -2 mean(x y) < 0, so w must increase
    critic_update(ag, x, y)
    assert ag.critics[0].params[0][0, 0] > 0
    loss_order = critic_update(make_agents()[0], x, y)
    perm = np.array([2, 0, 3, 1])
    assert critic_update(make_agents()[0], x[perm], y[perm]) == pytest.approx(loss_order, rel=1e-12)


def test_soft_update_rule():
    ag = make_agents()[0]
    for net in ag.target_critics:
        for p in net.params:
            p[...] = 0.0
    for net in ag.critics:
        for p in net.params:
            p[...] = 1.0
    soft_update(ag, 1.0)
    assert all(np.all(p == 0.0) for net in ag.target_critics for p in net.params)
    soft_update(ag, 0.05)
    assert all(np.all(p == 0.95) for net in ag.target_critics for p in net.params)
    soft_update(ag, 0.0)
    assert all(np.all(p == 1.0) for net in ag.target_critics for p in net.params)


def _batch(n=16, seed=4):
    buf = ReplayBuffer(n, LAYOUT)
    fill(buf, n, seed)
    return buf.gather(np.arange(n))


def test_actor_update_zero_alpha_constant_critics_no_change():
    hyper = MasacHyper(alpha_init=1e-300, lr_actor=1e-2)
    agents = make_agents(hyper)
    ag = agents[0]
    for net in ag.target_critics:
        for p in net.params[:-1]:
            p[...] = 0.0
    before = [p.copy() for p in ag.actor.params]
    actor_update(ag, 0, _batch(), LAYOUT, np.random.default_rng(0))
    # the 1e-300 entropy weight leaves only subnormal residue
    for a, b in zip(before, ag.actor.params):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-250)


def test_actor_update_leaves_other_agents_untouched():
    agents = make_agents(MasacHyper(lr_actor=1e-2))
    other = [p.copy() for p in agents[1].actor.params]
    own = [p.copy() for p in agents[0].actor.params]
    actor_update(agents[0], 0, _batch(), LAYOUT, np.random.default_rng(0))
    for a, b in zip(other, agents[1].actor.params):
        np.testing.assert_array_equal(a, b)
    assert any(np.any(a != b) for a, b in zip(own, agents[0].actor.params))


def test_actor_gradient_quadratic_critic_finite_differences():
    """Critic Q(a) = -a^2 on a 1-D toy; the analytic actor gradient must match finite differences."""
    layout = JointLayout((1,), (1,))
    hyper = MasacHyper(alpha_init=0.2, lr_actor=1.0)
    rng = np.random.default_rng(0)
    ag = MasacAgent(1, 1, 2, [4], hyper, rng)

    class Quadratic:
        def forward_cached(self, x):
            return -(x[:, 1:2] ** 2), x

        def backward(self, cache, g, need_param_grads=False, need_input_grad=True):
            gx = np.zeros_like(cache)
            gx[:, 1] = g[:, 0] * (-2 * cache[:, 1])
            return None, gx

    ag.target_critics = [Quadratic(), Quadratic()]
    batch = masac.Batch([np.array([[0.5], [-1.0], [2.0]])], [np.zeros((3, 1))], np.zeros((3, 1)),
                        [np.zeros((3, 1))], np.zeros(3))

    captured = {}

    def capture(params, grads):
        captured["g"] = [g.copy() for g in grads]

    ag.actor_opt.step = capture
    actor_update(ag, 0, batch, layout, np.random.default_rng(5))

    def loss():
        r = np.random.default_rng(5)
        from stars_isac.neural import policy_sample, split_head

        mean, raw = split_head(ag.actor.forward(batch.states[0]))
        s = policy_sample(mean, raw, r.standard_normal(mean.shape))
        return float(np.mean(ag.alpha * s.log_prob + s.action[:, 0] ** 2))

    h = 1e-6
    for p, g in zip(ag.actor.params, captured["g"]):
        flat, gf = p.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            up = loss()
            flat[k] = old - h
            down = loss()
            flat[k] = old
            num = (up - down) / (2 * h)
            assert abs(num - gf[k]) <= 1e-4 * max(1.0, abs(num))
    # with a negligible entropy weight, repeated steps pull the mean action to zero
    ag2 = MasacAgent(1, 1, 2, [4], MasacHyper(alpha_init=1e-12, lr_actor=1e-2), np.random.default_rng(1))
    ag2.target_critics = [Quadratic(), Quadratic()]
    ag2.actor.params[-1][0] = 1.0
    from stars_isac.neural import split_head

    start = np.abs(np.tanh(split_head(ag2.actor.forward(batch.states[0]))[0])).mean()
    for k in range(200):
        actor_update(ag2, 0, batch, layout, np.random.default_rng(k))
    end = np.abs(np.tanh(split_head(ag2.actor.forward(batch.states[0]))[0])).mean()
    assert end < 0.5 * start


@pytest.mark.parametrize(
    "mode,log_prob,direction",
    [("adaptive_positive", -1.0, +1), ("adaptive_negative", 5.0, -1)],
)
def test_temperature_moves_with_sign(mode, log_prob, direction):
    ag = make_agents(MasacHyper(alpha_mode=mode, lr_temp=1e-2))[1]
    before = ag.alpha
    temperature_update(ag, np.full(8, log_prob))
    assert np.sign(ag.alpha - before) == direction
    assert ag.alpha > 0


def test_temperature_stationary_and_fixed_mode():
    ag = make_agents(MasacHyper(alpha_mode="adaptive_positive"))[1]
    before = ag.alpha
    temperature_update(ag, np.full(4, ag.target_entropy))
    assert ag.alpha == before
    fixed = make_agents()[1]
    temperature_update(fixed, np.full(4, -100.0))
    assert fixed.alpha == pytest.approx(0.1)


def test_temperature_stays_positive_under_many_updates():
    ag = make_agents(MasacHyper(alpha_mode="adaptive_negative", lr_temp=0.5))[1]
    for _ in range(500):
        temperature_update(ag, np.full(4, 50.0))
    assert ag.alpha > 0


def test_train_event_skips_small_buffer():
    agents = make_agents()
    buf = ReplayBuffer(1000, LAYOUT)
    fill(buf, 10)
    before = digest(agents)
    m = train_event(buf, agents, MasacHyper(batch_size=32), np.random.default_rng(0), 10)
    assert m.skipped and digest(agents) == before


def test_train_event_zero_rates_is_noop():
    hyper = MasacHyper(batch_size=8, lr_actor=0.0, lr_critic=0.0, lr_temp=0.0, tau=1.0)
    agents = make_agents(hyper)
    buf = ReplayBuffer(100, LAYOUT)
    fill(buf, 40)
    before = digest(agents)
    m = train_event(buf, agents, hyper, np.random.default_rng(0), 3)
    assert digest(agents) == before
    assert m.iterations == 3 and len(m.critic_loss) == 2 and m.alpha == pytest.approx([0.1, 0.1])


def test_train_event_deterministic():
    hyper = MasacHyper(batch_size=8, lr_actor=1e-3, lr_critic=1e-3, alpha_mode="adaptive_negative")

    def run():
        agents = make_agents(hyper, seed=3)
        buf = ReplayBuffer(100, LAYOUT)
        fill(buf, 50)
        train_event(buf, agents, hyper, np.random.default_rng(11), 5)
        return digest(agents)

    assert run() == run()


def test_targets_change_only_through_soft_update(monkeypatch):
    hyper = MasacHyper(batch_size=8, lr_actor=1e-3, lr_critic=1e-3)
    agents = make_agents(hyper)
    buf = ReplayBuffer(100, LAYOUT)
    fill(buf, 30)
    snapshots = []
    real = masac.soft_update

    def spy(agent, tau):
        snapshots.append([p.copy() for net in agent.target_critics for p in net.params])
        real(agent, tau)

    monkeypatch.setattr(masac, "soft_update", spy)
    expected = [[p.copy() for net in ag.target_critics for p in net.params] for ag in agents]
    train_event(buf, agents, hyper, np.random.default_rng(0), 1)
    # the snapshot taken just before each agent's soft update equals the pre-event targets
    for snap, exp in zip(snapshots, expected):
        for a, b in zip(snap, exp):
            np.testing.assert_array_equal(a, b)


def test_hyper_validation():
    with pytest.raises(ValueError):
        MasacHyper(alpha_mode="bogus")
    with pytest.raises(ValueError):
        MasacHyper(tau=1.5)
    assert dataclasses.replace(MasacHyper(), tau=0.0).tau == 0.0
