import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import norm

from ssac.buffer import Batch, ReplayBuffer, Transition
from ssac.checks import GRADIENT_TOLERANCE, gradient_errors
from ssac.env import EnvConfig
from ssac.learner import Agent, LearnerConfig, UpdateCounts, gradient_step, train
from ssac.losses import alpha_loss_from_log_probs, multiplier_grad, policy_loss, q_loss, qc_loss
from ssac.metrics import write_metrics
from ssac.networks import MultiplierNet, PolicyNet, StateActionNet, Temperature, squash_sample
from ssac.nn import ConfigurationError, Mlp, mlp_init, soft_update
from ssac.safety import SafetyIndexParams

TINY = dict(
    hidden_sizes=(16, 16),
    iterations=3,
    env_steps_per_iteration=100,
    gradient_steps_per_iteration=24,
    warmup_steps=50,
    batch_size=16,
    buffer_capacity=1000,
)


def _transition(i, obs_dim=3):
    return Transition(np.full(obs_dim, float(i)), np.zeros(2), float(i), np.zeros(1), np.zeros(1), np.zeros(obs_dim), False)


def _policy_1d(mu, log_std, obs_dim=1):
    net = Mlp([obs_dim, 2], biases=[np.array([mu, log_std])])
    return PolicyNet(obs_dim, 1, net=net)


def _linear_critic(obs_dim, action_dim, w_action, bias=0.0):
    w = np.concatenate([np.zeros(obs_dim), np.atleast_1d(w_action)])[None, :]
    return StateActionNet(obs_dim, action_dim, 1, net=Mlp([obs_dim + action_dim, 1], [w], [np.array([bias])]))


def _batch(rng, n=8, obs_dim=3, action_dim=2, reward=None):
    return Batch(
        obs=rng.normal(size=(n, obs_dim)),
        action=np.tanh(rng.normal(size=(n, action_dim))),
        reward=rng.normal(size=n) if reward is None else reward,
        cost=rng.normal(size=(n, 1)),
        phi=rng.normal(size=(n, 1)),
        next_obs=rng.normal(size=(n, obs_dim)),
        done=np.zeros(n),
    )


# replay buffer


def test_buffer_evicts_oldest():
    buf = ReplayBuffer(2, 3, 2, 1)
    for i in range(3):
        buf.push(_transition(i))
    assert len(buf) == 2
    assert sorted(buf.reward.tolist()) == [1.0, 2.0]


def test_buffer_fifo_order():
    buf = ReplayBuffer(4, 3, 2, 1)
    for i in range(6):
        buf.push(_transition(i))
    # Oldest-first view starting at the cursor.
    order = [(buf.cursor + j) % buf.capacity for j in range(buf.capacity)]
    assert buf.reward[order].tolist() == [2.0, 3.0, 4.0, 5.0]


def test_buffer_size_saturates():
    buf = ReplayBuffer(1000, 3, 2, 1)
    for i in range(10_000):
        buf.push(_transition(i))
    assert len(buf) == 1000
    assert buf.reward.min() == 9000.0


def test_buffer_sampling_reproducible():
    buf = ReplayBuffer(64, 3, 2, 1)
    for i in range(50):
        buf.push(_transition(i))
    a = buf.sample(50, np.random.default_rng(9))
    b = buf.sample(50, np.random.default_rng(9))
    assert np.array_equal(a.reward, b.reward)
    assert a.reward.max() < 50


def test_buffer_empty_sample_raises():
    with pytest.raises(ValueError):
        ReplayBuffer(4, 3, 2, 1).sample(1, np.random.default_rng(0))


# squashed Gaussian


def test_log_prob_at_origin():
    a, lp = squash_sample(np.zeros(2), np.zeros(2), np.zeros(2))
    assert np.array_equal(a, np.zeros(2))
    # The 1e-6 stabiliser inside log(1 - a^2 + 1e-6) shifts the exact value slightly.
    assert lp == pytest.approx(-np.log(2 * np.pi) - 2 * np.log1p(1e-6), abs=1e-12)
    assert lp == pytest.approx(-np.log(2 * np.pi), abs=1e-5)


@pytest.mark.parametrize("mu,log_std", [(0.0, 0.0), (0.7, -0.5), (-1.2, 0.4)])
def test_log_prob_matches_quadrature(mu, log_std):
    sigma = np.exp(log_std)

    def density(a):
        eps = (np.arctanh(a) - mu) / sigma
        _, lp = squash_sample(np.array([mu]), np.array([log_std]), np.array([eps]))
        return np.exp(lp)

    for a0 in (-0.6, 0.0, 0.35, 0.8):
        a1 = a0 + 0.01
        mass, _ = integrate.quad(density, a0, a1)
        exact = norm.cdf((np.arctanh(a1) - mu) / sigma) - norm.cdf((np.arctanh(a0) - mu) / sigma)
        assert mass == pytest.approx(exact, rel=1e-5)


def test_tiny_std_is_deterministic_limit():
    pol = _policy_1d(0.3, -25.0)
    a, _ = pol.sample(np.zeros(1), eps=np.array([3.0]))
    assert a[0] == pytest.approx(np.tanh(0.3), abs=1e-8)
    assert pol.deterministic(np.zeros(1))[0] == np.tanh(0.3)


def test_zero_policy_deterministic_action():
    pol = PolicyNet(5, 2, net=Mlp([5, 8, 4]))
    x = np.arange(5.0)
    assert np.array_equal(pol.deterministic(x), np.zeros(2))
    assert np.array_equal(pol.deterministic(x), pol.deterministic(x))
    a, _ = pol.sample(x, eps=np.zeros(2))
    assert np.array_equal(a, pol.deterministic(x))


# losses


def test_q_loss_reduces_to_regression():
    rng = np.random.default_rng(0)
    q1, q2 = (StateActionNet(3, 2, 1, (8,), rng) for _ in range(2))
    pol = PolicyNet(3, 2, (8,), rng)
    batch = _batch(rng)
    loss, _, _ = q_loss(q1, q2, q1.copy(), q2.copy(), pol, 0.0, batch, 0.0, rng=rng)
    expect = sum(0.5 * np.mean((q(batch.obs, batch.action)[:, 0] - batch.reward) ** 2) for q in (q1, q2))
    assert loss == pytest.approx(expect, rel=1e-14)


def test_q_loss_zero_at_optimum():
    rng = np.random.default_rng(1)
    q1, q2 = (StateActionNet(3, 2, 1, net=Mlp([5, 4, 1])) for _ in range(2))
    batch = _batch(rng, reward=np.zeros(8))
    loss, g1, g2 = q_loss(q1, q2, q1.copy(), q2.copy(), PolicyNet(3, 2, (4,), rng), 0.3, batch, 0.0, rng=rng)
    assert loss == 0.0
    assert all(not np.any(g) for g in g1 + g2)


def test_qc_loss_hand_example():
    qc = StateActionNet(2, 2, 1, net=Mlp([4, 1], biases=[np.array([0.3])]))
    batch = _batch(np.random.default_rng(0), n=1, obs_dim=2)
    batch.cost = np.array([[0.1]])
    loss, _ = qc_loss(qc, batch)
    assert loss == pytest.approx(0.02, abs=1e-15)
    batch.cost = np.array([[0.3]])
    loss, grads = qc_loss(qc, batch)
    assert loss == 0.0 and all(not np.any(g) for g in grads)


def _silent_multiplier(obs_dim):
    # softplus(-1000) is exactly 0 in float64.
    return MultiplierNet(obs_dim, 1, net=Mlp([obs_dim, 1], biases=[np.array([-1000.0])]))


def test_policy_loss_reduces_to_min_q():
    rng = np.random.default_rng(2)
    pol = PolicyNet(3, 2, (8,), rng)
    q1, q2, qc = (StateActionNet(3, 2, 1, (8,), rng) for _ in range(3))
    obs = rng.normal(size=(6, 3))
    eps = rng.normal(size=(6, 2))
    loss, grads, _ = policy_loss(pol, q1, q2, 0.0, obs, qc, _silent_multiplier(3), eps=eps)
    a, _ = pol.sample(obs, eps=eps)
    assert loss == pytest.approx(-np.mean(np.minimum(q1(obs, a), q2(obs, a))), rel=1e-14)
    _, plain, _ = policy_loss(pol, q1, q2, 0.0, obs, eps=eps)
    for g, h in zip(grads, plain):
        assert np.array_equal(g, h)


def test_policy_gradient_pushes_away_from_cost():
    # 1-D action, Q = 0 and Qc = a: a large multiplier must drive the mean action down.
    pol = _policy_1d(0.2, -1.0)
    zero_q = _linear_critic(1, 1, 0.0)
    qc = _linear_critic(1, 1, 1.0)
    lam = MultiplierNet(1, 1, net=Mlp([1, 1], biases=[np.array([10.0])]))
    _, grads, _ = policy_loss(pol, zero_q, zero_q, 0.0, np.zeros((4, 1)), qc, lam, eps=np.zeros((4, 1)))
    g_mu_bias = grads[1][0]
    assert g_mu_bias > 0  # descent lowers mu, hence the action and the predicted cost


def test_multiplier_frozen_when_cost_critic_zero():
    rng = np.random.default_rng(3)
    lam = MultiplierNet(3, 1, (8,), rng)
    _, grads = multiplier_grad(lam, StateActionNet(3, 2, 1, net=Mlp([5, 1])), PolicyNet(3, 2, (8,), rng), rng.normal(size=(5, 3)), rng=rng)
    assert all(not np.any(g) for g in grads)


def test_multiplier_ascent_raises_lambda_where_cost_positive():
    rng = np.random.default_rng(4)
    lam = MultiplierNet(3, 1, (8,), rng)
    qc = StateActionNet(3, 2, 1, net=Mlp([5, 1], biases=[np.array([0.5])]))
    pol = PolicyNet(3, 2, (8,), rng)
    obs = rng.normal(size=(32, 3))
    before = lam(obs)
    _, grads = multiplier_grad(lam, qc, pol, obs, rng=rng)
    lr = 1e-3
    for p, g in zip(lam.params, grads):
        p += lr * g
    assert np.mean(lam(obs)) > np.mean(before)


def test_multiplier_cost_floor_clips_only_negative_side():
    rng = np.random.default_rng(5)
    lam = MultiplierNet(3, 1, (8,), rng)
    pol = PolicyNet(3, 2, (8,), rng)
    obs = rng.normal(size=(16, 3))

    def grads(qc_value, floor):
        return multiplier_grad(lam, _linear_critic(3, 2, [0.0, 0.0], qc_value), pol, obs, rng=rng, cost_floor=floor)[1]

    for got, want in ((grads(-3.0, 0.01), grads(-0.01, np.inf)), (grads(0.5, 0.01), grads(0.5, np.inf))):
        for g, w in zip(got, want):
            assert np.array_equal(g, w)


def test_multiplier_logit_floor_stops_downward_push_only():
    rng = np.random.default_rng(6)
    pol = PolicyNet(3, 2, (8,), rng)
    obs = rng.normal(size=(8, 3))
    low = MultiplierNet(3, 1, net=Mlp([3, 1], biases=[np.array([-7.0])]))
    for qc_value, frozen in ((-0.5, True), (0.5, False)):
        qc = _linear_critic(3, 2, [0.0, 0.0], qc_value)
        _, grads = multiplier_grad(low, qc, pol, obs, rng=rng, logit_floor=-5.0)
        assert all(not np.any(g) for g in grads) == frozen
    # Above the floor the objective is untouched.
    high = MultiplierNet(3, 1, net=Mlp([3, 1], biases=[np.array([-1.0])]))
    qc = _linear_critic(3, 2, [0.0, 0.0], -0.5)
    a = multiplier_grad(high, qc, pol, obs, rng=np.random.default_rng(0), logit_floor=-5.0)[1]
    b = multiplier_grad(high, qc, pol, obs, rng=np.random.default_rng(0))[1]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_multiplier_cost_floor_validated():
    with pytest.raises(ConfigurationError):
        LearnerConfig(multiplier_cost_floor=0.0)


def test_alpha_equilibrium_and_sign():
    temp = Temperature(0.3, target_entropy=-2.0)
    _, g = alpha_loss_from_log_probs(temp, np.full(5, 2.0))
    assert g[0][0] == 0.0
    _, g = alpha_loss_from_log_probs(temp, np.full(5, 4.0))
    assert g[0][0] < 0  # descent raises log alpha when entropy is below target


@pytest.mark.parametrize("seed", range(3))
def test_gradients_match_finite_differences(seed):
    errs = gradient_errors(seed, batch_size=2)
    assert max(errs.values()) < GRADIENT_TOLERANCE, errs
    assert errs["alpha"] < 1e-6


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(1.0, 50.0))
def test_multiplier_nonnegative_fuzz(seed, scale):
    rng = np.random.default_rng(seed)
    net = mlp_init([8, 16, 16, 1], seed)
    for p in net.params:
        p += rng.normal(scale=scale, size=p.shape)
    lam = MultiplierNet(8, 1, net=net)
    out = lam(rng.normal(scale=scale, size=(5000, 8)))
    assert np.all(out >= 0.0) and np.all(np.isfinite(out))


# update schedule and reductions


def _filled_buffer(cfg, lc, rng, n=200):
    buf = ReplayBuffer(lc.buffer_capacity, cfg.obs_dim, cfg.action_dim, cfg.n_hazards)
    for _ in range(n):
        buf.push(Transition(rng.normal(size=cfg.obs_dim), rng.uniform(-1, 1, 2), rng.normal(), rng.normal(size=1), rng.normal(size=1), rng.normal(size=cfg.obs_dim), False))
    return buf


def test_update_intervals():
    cfg, lc = EnvConfig(), LearnerConfig(**TINY)
    rng = np.random.default_rng(0)
    agent = Agent(cfg.obs_dim, cfg.action_dim, 1, lc, rng)
    buf = _filled_buffer(cfg, lc, rng)
    counts = UpdateCounts()
    for _ in range(12):
        gradient_step(agent, buf, rng, counts)
    assert (counts.gradient_steps, counts.policy_updates, counts.multiplier_updates) == (12, 4, 1)
    assert agent.optimizers["policy"].state.step_count == 4
    assert agent.optimizers["multiplier"].state.step_count == 1


def _params(agent):
    return [p.copy() for name in ("policy", "q1", "q2", "q1_target", "q2_target") for p in agent.networks()[name].params] + [agent.temperature.params[0].copy()]


def test_ablation_matches_handwritten_sac():
    cfg = EnvConfig()
    lc = LearnerConfig(**TINY, lagrangian=False)
    ablation = Agent(cfg.obs_dim, cfg.action_dim, 1, lc, np.random.default_rng(1))
    ref = Agent(cfg.obs_dim, cfg.action_dim, 1, lc, np.random.default_rng(1))
    buf = _filled_buffer(cfg, lc, np.random.default_rng(2))

    rng_a, rng_b = np.random.default_rng(3), np.random.default_rng(3)
    counts = UpdateCounts()
    for k in range(1, 31):
        gradient_step(ablation, buf, rng_a, counts)
        # Plain soft actor-critic step, written out independently.
        batch = buf.sample(lc.batch_size, rng_b)
        _, g1, g2 = q_loss(ref.q1, ref.q2, ref.q1_target, ref.q2_target, ref.policy, ref.temperature.alpha, batch, lc.gamma, rng=rng_b)
        ref.optimizers["q1"].step(g1)
        ref.optimizers["q2"].step(g2)
        _, gc = qc_loss(ref.safety_critic, batch)
        ref.optimizers["safety_critic"].step(gc)
        if k % lc.m_pi == 0:
            _, gp, logp = policy_loss(ref.policy, ref.q1, ref.q2, ref.temperature.alpha, batch.obs, rng=rng_b)
            ref.optimizers["policy"].step(gp)
            ref.optimizers["alpha"].step(alpha_loss_from_log_probs(ref.temperature, logp)[1])
        soft_update(ref.q1_target.params, ref.q1.params, lc.tau)
        soft_update(ref.q2_target.params, ref.q2.params, lc.tau)
    for p, q in zip(_params(ablation), _params(ref)):
        assert np.array_equal(p, q)
    assert counts.multiplier_updates == 0


def test_silenced_multiplier_matches_ablation():
    # Before the first multiplier update both variants consume identical randomness.
    cfg = EnvConfig()
    full = Agent(cfg.obs_dim, cfg.action_dim, 1, LearnerConfig(**TINY), np.random.default_rng(1))
    ablation = Agent(cfg.obs_dim, cfg.action_dim, 1, LearnerConfig(**TINY, lagrangian=False), np.random.default_rng(1))
    for p in full.multiplier.params:
        p[...] = 0.0
    full.multiplier.params[-1][...] = -1000.0
    buf = _filled_buffer(cfg, full.config, np.random.default_rng(2))
    ra, rb = np.random.default_rng(3), np.random.default_rng(3)
    ca, cb = UpdateCounts(), UpdateCounts()
    for _ in range(11):
        gradient_step(full, buf, ra, ca)
        gradient_step(ablation, buf, rb, cb)
    assert ca.policy_updates == cb.policy_updates == 3
    for p, q in zip(_params(full), _params(ablation)):
        assert np.array_equal(p, q)
    assert np.array_equal(full.multipliers(np.zeros((1, cfg.obs_dim))), np.zeros((1, 1)))


def test_train_deterministic_and_metric_invariants(tmp_path):
    cfg, lc, sp = EnvConfig(), LearnerConfig(**TINY), SafetyIndexParams()
    _, rows_a = train(cfg, lc, sp, np.random.default_rng(5))
    _, rows_b = train(cfg, lc, sp, np.random.default_rng(5))
    write_metrics(tmp_path / "a.csv", rows_a)
    write_metrics(tmp_path / "b.csv", rows_b)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    total = 0
    prev_cum = 0.0
    for r in rows_a:
        total += r.violation_steps
        assert r.cost_rate == total / r.env_steps
        assert 0.0 <= r.cost_rate <= 1.0
        assert r.cumulative_cost >= prev_cum
        assert r.mean_multiplier >= 0 and r.max_multiplier >= 0
        prev_cum = r.cumulative_cost


def test_ablation_reports_zero_multiplier():
    _, rows = train(EnvConfig(), LearnerConfig(**TINY, lagrangian=False), SafetyIndexParams(), np.random.default_rng(0))
    assert all(r.mean_multiplier == 0.0 and r.max_multiplier == 0.0 for r in rows)


def test_zero_hazard_arena_never_violates():
    cfg = EnvConfig(hazards=())
    agent, rows = train(cfg, LearnerConfig(**TINY), SafetyIndexParams(), np.random.default_rng(0))
    assert all(r.violation_steps == 0 and r.cumulative_cost == 0 for r in rows)
