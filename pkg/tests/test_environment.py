import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sessmarl.environment import (
    BUILDING_KINDS,
    SESS_KINDS,
    DEFAULT_BUILDINGS,
    BuildingParams,
    ContractViolation,
    EnvState,
    EpisodeTrace,
    JointAction,
    ObsScaling,
    RewardConfig,
    SessHvacEnv,
    SessParams,
    building_reward,
    building_step,
    denormalize,
    discretize,
    normalize,
    objective_cost,
    project_actions,
    sess_reward,
    sess_step,
)
from sessmarl.timeseries import EpisodeWindow

B1, B2 = DEFAULT_BUILDINGS
SESS = SessParams()


def window(prices, temps, label="test"):
    return EpisodeWindow(np.asarray(prices, float), np.asarray(temps, float), label, np.datetime64("2017-01-01T00", "h"))


def flat_window(K=96, price=50.0, temp=20.0):
    return window(np.full(K, price), np.full(K, temp))


# -- thermal model -----------------------------------------------------------

def test_discretize_building1():
    d = discretize(B1, 1.0)
    assert d.d1 == pytest.approx(1 - 1 / 120, abs=1e-12)  # 0.991667
    assert d.d2 == pytest.approx(0.06, abs=1e-12)
    assert d.d3 == pytest.approx(1.1 / 15, abs=1e-12)     # 0.073333
    assert d.d4 == pytest.approx(1 / 120, abs=1e-12)      # 0.008333


def test_discretize_building2():
    d = discretize(B2, 1.0)
    assert d.d1 == pytest.approx(1 - 1 / 84, abs=1e-12)   # 0.988095
    assert d.d2 == d.d3 == pytest.approx(1 / 14, abs=1e-12)
    assert d.d4 == pytest.approx(1 / 84, abs=1e-12)


@given(R=st.floats(0.5, 50), C=st.floats(0.5, 50), dt=st.floats(0.01, 0.2))
def test_discretize_euler_identity(R, C, dt):
    d = discretize(BuildingParams(R=R, C=C, w_d=1, w_g=1), dt)
    assert d.d1 + d.d4 == pytest.approx(1.0, abs=1e-15)


def test_discretize_unstable():
    with pytest.raises(ValueError, match="unstable"):
        discretize(BuildingParams(R=0.5, C=1.0, w_d=1, w_g=1), 1.0)


def test_building_step_values():
    d = discretize(B1)
    assert building_step(20.0, 20.0, 0.0, 0.0, d) == pytest.approx(20.0, abs=1e-12)
    assert building_step(20.0, 10.0, 0.0, 0.0, d) == pytest.approx(19.916666666666668, abs=1e-9)
    assert building_step(20.0, 10.0, 1.0, 1.0, d) == pytest.approx(20.05, abs=1e-9)


@given(st.lists(st.floats(-30, 40), min_size=8, max_size=8), st.floats(0, 1))
def test_building_step_is_linear(v, lam):
    d = discretize(B2)
    a, b = np.array(v[:4]), np.array(v[4:])
    mix = lam * a + (1 - lam) * b
    lhs = building_step(*mix, d)
    rhs = lam * building_step(*a, d) + (1 - lam) * building_step(*b, d)
    assert lhs == pytest.approx(rhs, abs=1e-9)


# -- storage -----------------------------------------------------------------

def test_sess_step_values():
    soc, d = sess_step(5.0, 2.0, [1.1], SESS)
    assert d[0] == pytest.approx(1.0, abs=1e-12)
    assert soc == pytest.approx(5.8, abs=1e-12)
    assert sess_step(3.0, 0.0, [0.0, 0.0], SESS)[0] == 3.0
    assert sess_step(0.0, 5.0, [], SESS)[0] == pytest.approx(4.5, abs=1e-12)


def test_sess_step_rejects_infeasible():
    with pytest.raises(ContractViolation):
        sess_step(0.0, 0.0, [1.1], SESS)
    with pytest.raises(ContractViolation):
        sess_step(0.0, -1.0, [0.0], SESS)


def test_project_feasible_unchanged():
    a = JointAction([1.0, -2.0], [0.5, -0.3], 2.0)
    p = project_actions(a, 5.0, SESS, DEFAULT_BUILDINGS)
    np.testing.assert_array_equal(p.as_vector(), a.as_vector())


def test_project_rations_overdraw():
    a = JointAction([0.0, 0.0], [1.1, 1.1], 0.0)  # d = 1 each
    p = project_actions(a, 0.5, SESS, DEFAULT_BUILDINGS)
    np.testing.assert_allclose(p.P_d, [0.275, 0.275], atol=1e-12)  # scaled by 0.25
    soc, d = sess_step(0.5, p.c, p.P_d, SESS)
    assert d.sum() == pytest.approx(0.5, abs=1e-12)
    assert soc == 0.0


def test_project_trims_overfill():
    a = JointAction([0.0, 0.0], [0.0, 0.0], 5.0)
    p = project_actions(a, 9.5, SESS, DEFAULT_BUILDINGS)
    assert p.c == pytest.approx(0.5 / 0.9, abs=1e-12)  # 0.5556


def test_project_clamps_boxes():
    a = JointAction([9.0, -9.0], [-9.0, 9.0], 7.0)
    p = project_actions(a, 10.0, SESS, DEFAULT_BUILDINGS)
    np.testing.assert_array_equal(p.P_g, [5.0, -5.0])
    assert p.c <= SESS.c_max
    assert np.all(np.abs(p.P_d) <= 5.0)


actions = st.lists(st.floats(-20, 20), min_size=5, max_size=5)


@given(v=actions, soc=st.floats(0, 10))
def test_project_idempotent_and_feasible(v, soc):
    once = project_actions(JointAction.from_vector(v), soc, SESS, DEFAULT_BUILDINGS)
    twice = project_actions(once, soc, SESS, DEFAULT_BUILDINGS)
    np.testing.assert_allclose(twice.as_vector(), once.as_vector(), rtol=1e-12, atol=1e-12)
    new_soc, d = sess_step(soc, once.c, once.P_d, SESS)
    assert 0.0 <= new_soc <= SESS.soc_max
    assert np.all((0 <= d) & (d <= SESS.d_max_per_building + 1e-12))
    assert 0.0 <= once.c <= SESS.c_max


# -- rewards -----------------------------------------------------------------

CFG = RewardConfig(alpha_temp=10.0, alpha_energy=1.0, beta=0.5)


def test_building_reward_values():
    assert building_reward(20.0, 20.0, 0.05, 0.0, CFG) == 0.0
    assert building_reward(21.0, 20.0, 0.05, 2.0, CFG) == pytest.approx(-10.1, abs=1e-9)
    assert building_reward(21.0, 20.0, 0.05, -2.0, CFG) == building_reward(21.0, 20.0, 0.05, 2.0, CFG)


@given(T=st.floats(-50, 50), p=st.floats(-1, 1), P=st.floats(-10, 10))
def test_building_reward_nonpositive(T, p, P):
    assert building_reward(T, 20.0, abs(p), P, CFG) <= 0.0


def test_sess_reward_values():
    assert sess_reward(0.052, 0.048, 2.0, False, 0.0, CFG) == pytest.approx(0.008, abs=1e-9)
    assert sess_reward(0.05, 0.04, 0.0, False, 7.0, CFG) == 0.0
    assert sess_reward(0.05, 0.05, 0.0, True, 3.0, CFG) == pytest.approx(-1.5, abs=1e-9)


@given(pb=st.floats(0, 1), p=st.floats(0, 1), c=st.floats(0.01, 5))
def test_sess_reward_sign(pb, p, c):
    r = sess_reward(pb, p, c, False, 0.0, CFG)
    assert np.sign(r) == np.sign(pb - p) or r == 0.0


# -- reset / step ------------------------------------------------------------

def test_reset():
    env = SessHvacEnv()
    w = window(np.linspace(40, 60, 96), np.zeros(96))
    s = env.reset(w, [20, 20], 0.0)
    assert s.k == 0 and s.soc == 0.0
    assert s.p_bar == pytest.approx(0.040)
    s2 = env.reset(w, [20, 20], 0.0)
    assert s2.indoor_temps.tobytes() == s.indoor_temps.tobytes()
    assert (s2.soc, s2.k, s2.p_bar) == (s.soc, s.k, s.p_bar)
    with pytest.raises(ValueError):
        env.reset(w, [20, 20], 11.0)


def test_zero_step_is_noop():
    env = SessHvacEnv()
    w = flat_window()
    s = env.reset(w, [20, 20], 3.0)
    out = env.step(s, JointAction.zeros(2), w)
    np.testing.assert_allclose(out.rewards, 0.0, atol=1e-12)
    assert out.next_state.soc == 3.0
    np.testing.assert_allclose(out.next_state.indoor_temps, [20, 20], atol=1e-12)


def test_step_composition():
    """One step of building 1 with the storage; every term computed by hand."""
    env = SessHvacEnv(buildings=[B1], reward=RewardConfig(10.0, 1.0, 0.5), K=96)
    w = window(np.r_[48.0, np.full(95, 50.0)], np.full(96, 10.0))
    s = EnvState([20.0], 5.0, 0, 0.052)
    out = env.step(s, JointAction([1.0], [1.1], 2.0), w)
    # T' = (119/120)*20 + 0.06*1.1 + (1.1/15)*1 + (1/120)*10
    T_next = 119 / 120 * 20 + 0.066 + 1.1 / 15 + 10 / 120
    assert out.next_state.indoor_temps[0] == pytest.approx(T_next, abs=1e-9)
    assert out.next_state.indoor_temps[0] == pytest.approx(20.056, abs=1e-9)
    assert out.next_state.soc == pytest.approx(5.8, abs=1e-9)
    assert out.info["d"][0] == pytest.approx(1.0, abs=1e-9)
    assert out.rewards[0] == pytest.approx(-(10 * 0.056 + 0.048 * 1.0), abs=1e-9)
    assert out.rewards[1] == pytest.approx(0.008, abs=1e-9)
    assert out.info["grid_cost"][0] == pytest.approx(0.048, abs=1e-12)
    assert out.info["sess_cost"] == pytest.approx(0.096, abs=1e-12)
    # p_bar advances with the next step's price: 0.8*0.052 + 0.2*0.050
    assert out.next_state.p_bar == pytest.approx(0.0516, abs=1e-12)


def test_terminal_step_penalizes_soc():
    env = SessHvacEnv(K=2, reward=RewardConfig(10, 1, 0.5))
    w = flat_window(2)
    s = env.reset(w, init_soc=4.0)
    out = env.step(s, JointAction.zeros(2), w)
    assert not out.info["terminal"] and out.rewards[2] == 0.0
    out = env.step(out.next_state, JointAction.zeros(2), w)
    assert out.info["terminal"] and out.rewards[2] == pytest.approx(-2.0)
    with pytest.raises(ContractViolation):
        env.step(out.next_state, JointAction.zeros(2), w)


def test_no_sess_variant_ignores_storage_actions():
    env = SessHvacEnv(with_sess=False)
    w = flat_window(temp=0.0)
    s = env.reset(w)
    out = env.step(s, JointAction([1.0, 1.0], [3.0, 3.0], 5.0), w)
    assert out.action.c == 0.0 and np.all(out.action.P_d == 0.0)
    assert out.rewards[-1] == 0.0 and out.next_state.soc == 0.0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_random_rollout_keeps_soc_in_bounds(seed):
    env = SessHvacEnv()
    rng = np.random.default_rng(seed)
    w = window(rng.uniform(20, 90, 96), rng.uniform(-5, 35, 96))

    def policy(state, win):
        return JointAction.from_vector(rng.uniform(-8, 8, 5))

    tr = env.rollout(policy, w, init_soc=float(rng.uniform(0, 10)))
    assert np.all((tr.soc >= 0) & (tr.soc <= 10))
    assert np.all((tr.d >= 0) & (tr.d <= 5))
    lhs = tr.soc[-1] - tr.soc0
    rhs = 0.9 * tr.c.sum() - tr.d.sum()
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_rollout_reproducible():
    env = SessHvacEnv()
    w = window(np.linspace(30, 70, 96), np.linspace(-3, 12, 96))

    def make_policy():
        rng = np.random.default_rng(7)
        return lambda s, win: JointAction.from_vector(rng.uniform(-6, 6, 5))

    a = env.rollout(make_policy(), w)
    b = env.rollout(make_policy(), w)
    for f in ("T_in", "P_g", "P_d", "c", "soc", "rewards"):
        assert getattr(a, f).tobytes() == getattr(b, f).tobytes()


# -- observations ------------------------------------------------------------

def test_observation_shapes_and_contents():
    env = SessHvacEnv()
    w = window(np.full(96, 50.0), np.full(96, 5.0))
    s = EnvState([19.0, 21.0], 2.0, 0, 0.06)
    obs = env.observations(s, w)
    assert [len(o) for o in obs] == [4, 4, 4]
    np.testing.assert_allclose(denormalize(obs[0], BUILDING_KINDS, env.scaling), [19.0, 5.0, 0.05, 2.0])
    np.testing.assert_allclose(denormalize(obs[2], SESS_KINDS, env.scaling), [5.0, 0.05, 0.06, 2.0])
    # buildings do not see p_bar, the storage does not see indoor temperatures
    other = env.observations(EnvState([25.0, 15.0], 2.0, 0, 0.09), w)
    np.testing.assert_array_equal(other[2][:2], obs[2][:2])
    np.testing.assert_array_equal(other[2][3], obs[2][3])
    np.testing.assert_array_equal(env.observations(EnvState([19.0, 21.0], 2.0, 0, 0.09), w)[0], obs[0])


@given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4))
def test_normalization_bijective(x):
    sc = ObsScaling()
    np.testing.assert_allclose(denormalize(normalize(x, BUILDING_KINDS, sc), BUILDING_KINDS, sc), x, atol=1e-12)


# -- objective ---------------------------------------------------------------

def _trace(p, c, P_g, T_in, target, d=None):
    P_g = np.asarray(P_g, float).reshape(len(p), -1)
    n = P_g.shape[1]
    zeros = np.zeros_like(P_g)
    return EpisodeTrace(
        p=np.asarray(p, float), p_bar=np.asarray(p, float), T_out=np.zeros(len(p)),
        T_in=np.asarray(T_in, float).reshape(len(p), n), P_g=P_g, P_d=zeros,
        d=zeros if d is None else np.asarray(d, float).reshape(len(p), n), c=np.asarray(c, float),
        soc=np.zeros(len(p)), rewards=np.zeros((len(p), n + 1)), T_target=np.full(n, target),
    )


def test_objective_zero_trace():
    assert objective_cost(_trace([0.05, 0.05], [0, 0], [0, 0], [20, 20], 20.0)) == 0.0


def test_objective_hand_values():
    tr = _trace([0.05, 0.1], [1.0, 0.0], [2.0, -1.0], [21.0, 19.5], 20.0)
    # step 1: 0.05*(1+2) + 0.3*1 = 0.45; step 2: 0.1*(0-1) + 0.3*0.5 = 0.05
    assert objective_cost(tr, 0.3) == pytest.approx(0.5, abs=1e-12)
    # absolute grid power: step 2 becomes 0.1 + 0.15
    assert objective_cost(tr, 0.3, absolute_grid=True) == pytest.approx(0.7, abs=1e-12)
    assert objective_cost(tr, 0.0) == pytest.approx(0.15 - 0.1, abs=1e-12)


def test_objective_counts_charging_per_building():
    tr = _trace([0.1], [2.0], [[0.0, 0.0]], [[20.0, 20.0]], 20.0)
    assert objective_cost(tr, 0.3) == pytest.approx(0.4, abs=1e-12)
    assert objective_cost(tr, 0.3, charge_per_building=False) == pytest.approx(0.2, abs=1e-12)


def test_trace_csv_round_trip(tmp_path):
    env = SessHvacEnv()
    w = window(np.linspace(30, 70, 96), np.linspace(-3, 12, 96))
    rng = np.random.default_rng(1)
    tr = env.rollout(lambda s, win: JointAction.from_vector(rng.uniform(-5, 5, 5)), w, init_soc=2.0)
    tr.to_csv(tmp_path / "t.csv")
    back = EpisodeTrace.from_csv(tmp_path / "t.csv", [20.0, 20.0], soc0=2.0)
    for f in ("p", "p_bar", "T_out", "T_in", "P_g", "P_d", "d", "c", "soc", "rewards"):
        np.testing.assert_array_equal(getattr(back, f), getattr(tr, f))
