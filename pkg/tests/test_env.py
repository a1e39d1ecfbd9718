import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omarl.env import (
    OBS_CLIP, NetConfig, RRMEnv, advance_mobility, compute_sinr_and_rates, dbm_to_mw,
    draw_channel_gains, observe, pairwise_distances, path_loss_db, reflect_into, reset,
    sample_topology, served_from_action, action_from_served, update_pf_state,
)
from omarl.errors import ConfigError, InvalidActionError, PlacementInfeasibleError

from conftest import hand_state
from oracles import brute_force_sinr


# ---- config


def test_defaults_match_table_sizes(table3):
    assert (table3.num_aps, table3.num_ues, table3.top_n, table3.episode_len) == (4, 20, 3, 200)
    assert table3.area_side_m == 100.0 and table3.min_ap_dist_m == 10.0
    assert table3.state_dim == 24 and table3.num_actions == 4


@pytest.mark.parametrize("bad", [
    dict(top_n=0), dict(pf_smoothing=0.0), dict(pf_smoothing=1.5), dict(fairness_exponent=1.2),
    dict(episode_len=0), dict(min_ap_dist_m=0.0), dict(area_side_m=-1.0), dict(rate_floor=0.0),
])
def test_invalid_config_rejected(bad):
    with pytest.raises(ConfigError):
        NetConfig(**bad)


def test_config_mapping_round_trip(table3):
    again = NetConfig.from_mapping({k: str(v) for k, v in table3.to_dict().items()})
    assert again == table3 and again.config_hash() == table3.config_hash()
    assert NetConfig(num_ues=19).config_hash() != table3.config_hash()


# ---- path loss


@pytest.mark.parametrize("d,expected", [(1.0, 25.3), (10.0, 62.9), (100.0, 100.5)])
def test_path_loss_reference_points(d, expected):
    assert abs(path_loss_db(d) - expected) <= 1e-9


def test_path_loss_rejects_nonpositive():
    with pytest.raises(ValueError):
        path_loss_db(0.0)
    with pytest.raises(ValueError):
        path_loss_db([1.0, -2.0])


# ---- topology


def test_single_ap_placement_always_succeeds():
    cfg = NetConfig(num_aps=1, num_ues=5)
    for seed in range(20):
        topo = sample_topology(cfg, np.random.default_rng(seed))
        assert np.all(topo.association == 0)


def test_geometry_constraints_hold_on_every_reset(table3):
    for seed in range(200):
        topo = sample_topology(table3, np.random.default_rng(seed))
        d_ap = pairwise_distances(topo.ap_positions, topo.ap_positions)
        off = d_ap[~np.eye(4, dtype=bool)]
        assert off.size == 12 and off.min() >= table3.min_ap_dist_m
        assert pairwise_distances(topo.ap_positions, topo.ue_positions).min() >= table3.min_ap_ue_dist_m
        pos = np.vstack([topo.ap_positions, topo.ue_positions])
        assert np.all((pos >= 0) & (pos <= table3.area_side_m))


def test_infeasible_placement_raises():
    cfg = NetConfig(num_aps=2, min_ap_dist_m=100.0 * math.sqrt(2) + 1)
    with pytest.raises(PlacementInfeasibleError):
        sample_topology(cfg, np.random.default_rng(0))


def test_association_is_max_rsrp(table3):
    topo = sample_topology(table3, np.random.default_rng(3))
    for j in range(table3.num_ues):
        rsrp = [table3.tx_power_dbm - path_loss_db(np.hypot(*(topo.ap_positions[i] - topo.ue_positions[j])))
                - topo.shadowing_db[i, j] for i in range(table3.num_aps)]
        assert topo.association[j] == int(np.argmax(rsrp))


def test_reset_determinism_and_sizes(table3):
    a = reset(table3, np.random.default_rng(7))
    b = reset(table3, np.random.default_rng(7))
    c = reset(table3, np.random.default_rng(8))
    assert np.array_equal(a.topology.ap_positions, b.topology.ap_positions)
    assert np.array_equal(a.gains, b.gains)
    assert not np.array_equal(a.topology.ap_positions, c.topology.ap_positions)
    assert a.topology.ue_positions.shape == (20, 2) and a.gains.shape == (4, 20)
    assert np.all(a.pf_weight == 1.0)


# ---- channel


def test_deterministic_gain_core():
    cfg = NetConfig(num_aps=1, num_ues=1, shadowing_std_db=0.0)
    s = reset(cfg, np.random.default_rng(0))
    d = max(np.hypot(*(s.topology.ap_positions[0] - s.topology.ue_positions[0])), cfg.min_ap_ue_dist_m)
    g = draw_channel_gains(s, None, fading=np.ones((1, 1)))
    assert g[0, 0] == pytest.approx(10 ** (-path_loss_db(d) / 10), rel=1e-12)


def test_fading_is_unit_mean_and_positive(table3):
    s = reset(table3, np.random.default_rng(0))
    ones = draw_channel_gains(s, None, fading=np.ones((4, 20)))
    draws = np.stack([draw_channel_gains(s, np.random.default_rng(k)) for k in range(5000)]) / ones
    assert np.all(draws > 0)
    assert 0.99 <= draws.mean() <= 1.01


# ---- SINR and rates


def test_sinr_and_rate_match_per_link_oracle():
    rng = np.random.default_rng(99)
    for _ in range(500):
        I, J = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        gains = 10 ** rng.uniform(-12, -6, size=(I, J))
        assoc = rng.integers(0, I, size=J)
        cfg = NetConfig(num_aps=I, num_ues=J, top_n=J)
        s = hand_state(gains, assoc, cfg=cfg)
        served = np.array([rng.choice(np.append(np.flatnonzero(assoc == i), -1)) for i in range(I)])
        out = compute_sinr_and_rates(s, served=served)
        p_t, noise = 10 ** (cfg.tx_power_dbm / 10), 10 ** (cfg.noise_power_dbm / 10)
        sinr_o, rate_o = brute_force_sinr(gains.tolist(), assoc.tolist(), served.tolist(), p_t, noise)
        np.testing.assert_allclose(out.per_ue_sinr, sinr_o, rtol=1e-10, atol=0)
        np.testing.assert_allclose(out.per_ue_rate, rate_o, rtol=1e-10, atol=0)


def test_all_silent_gives_zero():
    s = hand_state(np.full((2, 3), 1e-9), [0, 0, 1])
    out = compute_sinr_and_rates(s, joint_action=[s.cfg.top_n] * 2)
    assert out.reward == 0.0 and np.all(out.per_ue_rate == 0.0)


def test_unit_sinr_gives_one_bit():
    cfg = NetConfig(num_aps=1, num_ues=1, top_n=1)
    gain = dbm_to_mw(cfg.noise_power_dbm) / dbm_to_mw(cfg.tx_power_dbm)
    s = hand_state([[gain]], [0], cfg=cfg)
    out = compute_sinr_and_rates(s, joint_action=[0])
    assert out.per_ue_sinr[0] == pytest.approx(1.0, rel=1e-12)
    assert out.per_ue_rate[0] == pytest.approx(1.0, rel=1e-12)


def test_two_link_hand_oracle():
    cfg = NetConfig(num_aps=2, num_ues=2, top_n=1)
    p, n = dbm_to_mw(cfg.tx_power_dbm), dbm_to_mw(cfg.noise_power_dbm)
    g = np.array([[4e-9, 1e-10], [2e-10, 3e-9]])
    s = hand_state(g, [0, 1], cfg=cfg)
    out = compute_sinr_and_rates(s, joint_action=[0, 0])
    assert out.per_ue_sinr[0] == pytest.approx(4e-9 * p / (2e-10 * p + n), rel=1e-12)
    assert out.per_ue_sinr[1] == pytest.approx(3e-9 * p / (1e-10 * p + n), rel=1e-12)


def test_reward_uses_weights_in_force():
    cfg = NetConfig(num_aps=1, num_ues=2, top_n=2, fairness_exponent=0.8)
    s = hand_state([[1e-9, 1e-9]], [0, 0], cfg=cfg, weights=[4.0, 1.0])
    out = compute_sinr_and_rates(s, served=[0])
    assert out.reward == pytest.approx(4.0 ** 0.8 * out.per_ue_rate[0], rel=1e-12)


def test_silent_ap_causes_no_interference():
    g = np.array([[1e-9, 5e-9], [5e-9, 1e-9]])
    s = hand_state(g, [0, 1], cfg=NetConfig(num_aps=2, num_ues=2, top_n=1))
    alone = compute_sinr_and_rates(s, served=[0, -1])
    p, n = dbm_to_mw(10.0), dbm_to_mw(-104.0)
    assert alone.per_ue_sinr[0] == pytest.approx(1e-9 * p / n, rel=1e-12)
    assert alone.per_ue_rate[1] == 0.0


def test_invalid_action_index():
    s = hand_state(np.full((2, 3), 1e-9), [0, 0, 1])
    with pytest.raises(InvalidActionError):
        compute_sinr_and_rates(s, joint_action=[s.cfg.top_n + 1, 0])
    with pytest.raises(InvalidActionError):
        compute_sinr_and_rates(s, served=[2, -1])  # UE 2 belongs to AP 1


def test_empty_slot_coerced_to_silent():
    s = hand_state(np.full((2, 3), 1e-9), [0, 0, 0], cfg=NetConfig(num_aps=2, num_ues=3, top_n=3))
    served = served_from_action(s, [0, 0])
    assert served[1] == -1
    assert list(action_from_served(s, served)) == [0, 3]


# ---- PF recursion and ranking


def test_pf_first_step_initializes_then_smooths():
    cfg = NetConfig(num_aps=1, num_ues=2, top_n=2, pf_smoothing=0.5)
    s = hand_state([[1e-9, 1e-9]], [0, 0], cfg=cfg)
    s.pf_initialized = False
    update_pf_state(s, [2.0, 0.0])
    assert list(s.long_term_rate) == [2.0, 0.0]
    assert s.pf_weight[1] == pytest.approx(1 / cfg.rate_floor)
    update_pf_state(s, [4.0, 0.0])
    assert s.long_term_rate[0] == pytest.approx(3.0) and s.pf_weight[0] == pytest.approx(1 / 3)


def test_pf_fixed_point_and_full_replacement():
    s = hand_state([[1e-9, 1e-9]], [0, 0], cfg=NetConfig(num_aps=1, num_ues=2, top_n=2))
    s.pf_initialized = True
    s.long_term_rate = np.array([1.5, 2.5])
    update_pf_state(s, [1.5, 2.5])
    assert list(s.long_term_rate) == [1.5, 2.5]
    s2 = hand_state([[1e-9, 1e-9]], [0, 0], cfg=NetConfig(num_aps=1, num_ues=2, top_n=2, pf_smoothing=1.0))
    s2.pf_initialized = True
    update_pf_state(s2, [0.7, 3.0])
    assert list(s2.long_term_rate) == [0.7, 3.0]


def test_pf_weight_nondecreasing_while_starved(table3):
    env = RRMEnv(table3, np.random.default_rng(5))
    env.reset()
    prev = None
    j = 0
    for _ in range(30):
        env.step(served=np.full(4, -1))
        w = env.state.pf_weight[j]
        assert prev is None or w >= prev
        prev = w


def test_ranking_sorted_by_pf_ratio_with_index_ties():
    cfg = NetConfig(num_aps=1, num_ues=4, top_n=3)
    s = hand_state([[1e-9, 1e-9, 2e-9, 1e-9]], [0, 0, 0, 0], cfg=cfg, weights=[1.0, 1.0, 1.0, 5.0])
    assert list(s.topn_ranking[0]) == [3, 2, 0]


# ---- mobility


def test_mobility_interior_step_and_reflection(table3):
    s = reset(table3, np.random.default_rng(0))
    s.topology.ue_positions[:] = 50.0
    s.topology.ue_positions[1] = (0.5, 50.0)
    heading = np.zeros(20)
    heading[1] = np.pi
    advance_mobility(s, None, heading=heading)
    assert np.allclose(s.topology.ue_positions[0], (51.0, 50.0))
    assert np.allclose(s.topology.ue_positions[1], (0.5, 50.0))


def test_zero_speed_keeps_positions():
    cfg = NetConfig(ue_speed_mps=0.0)
    s = reset(cfg, np.random.default_rng(0))
    before = s.topology.ue_positions.copy()
    advance_mobility(s, np.random.default_rng(1))
    assert np.array_equal(before, s.topology.ue_positions)


def test_mobility_containment_many_steps():
    cfg = NetConfig(num_ues=1000, ue_speed_mps=7.3)
    s = reset(cfg, np.random.default_rng(2))
    r = np.random.default_rng(3)
    for _ in range(100):
        advance_mobility(s, r)
        p = s.topology.ue_positions
        assert p.min() >= 0.0 and p.max() <= cfg.area_side_m


@given(st.floats(-1e4, 1e4, allow_nan=False), st.floats(0.5, 500))
def test_reflection_stays_in_box(x, side):
    y = float(reflect_into(np.array(x), side))
    assert -1e-9 <= y <= side + 1e-9


# ---- observations


def test_observation_padding_and_values():
    cfg = NetConfig(num_aps=2, num_ues=2, top_n=3)
    p, n = dbm_to_mw(cfg.tx_power_dbm), dbm_to_mw(cfg.noise_power_dbm)
    g = np.array([[n / p, 0.0], [0.0, 1e-9]])
    s = hand_state(g, [0, 1], cfg=cfg)
    s.last_active = np.array([True, False])
    obs = observe(s)
    assert obs.shape == (2, 6)
    assert abs(obs[0, 0]) < 1e-8 and abs(obs[0, 1]) < 1e-8  # SINR 1, weight 1
    assert np.all(obs[0, 2:] == -OBS_CLIP) and np.all(obs[1, 2:] == -OBS_CLIP)


def test_ap_without_ues_observes_floor():
    cfg = NetConfig(num_aps=2, num_ues=2, top_n=3)
    s = hand_state(np.full((2, 2), 1e-9), [0, 0], cfg=cfg)
    assert np.all(observe(s)[1] == -OBS_CLIP)


def test_observations_are_clipped(table3):
    env = RRMEnv(table3, np.random.default_rng(1))
    obs = env.reset()
    for _ in range(50):
        out = env.step(np.zeros(4, dtype=int))
        assert np.all(np.abs(out.observations) <= OBS_CLIP)
    assert obs.reshape(-1).shape == (24,)


# ---- episode loop


def test_episode_runs_to_done_and_is_deterministic(table3):
    def run(seed):
        env = RRMEnv(table3, np.random.default_rng(seed))
        env.reset()
        rewards, obs = [], []
        done = False
        while not done:
            out = env.step(np.zeros(4, dtype=int))
            rewards.append(out.reward)
            obs.append(out.observations)
            done = out.done
        return np.array(rewards), np.array(obs)

    r1, o1 = run(11)
    r2, o2 = run(11)
    assert r1.shape == (200,) and np.array_equal(r1, r2) and np.array_equal(o1, o2)
    assert np.all(r1 >= 0)


def test_step_after_done_raises():
    env = RRMEnv(NetConfig(episode_len=2), np.random.default_rng(0))
    env.reset()
    env.step(np.zeros(4, dtype=int))
    assert env.step(np.zeros(4, dtype=int)).done
    with pytest.raises(RuntimeError):
        env.step(np.zeros(4, dtype=int))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=4, max_size=4), st.integers(0, 2**31 - 1))
def test_rates_nonnegative_and_silence_respected(action, seed):
    s = reset(NetConfig(), np.random.default_rng(seed))
    out = compute_sinr_and_rates(s, joint_action=action)
    assert np.all(out.per_ue_rate >= 0)
    served_ues = set(out.served[out.served >= 0].tolist())
    assert all(out.per_ue_rate[j] == 0 for j in range(20) if j not in served_ues)
    for i, a in enumerate(action):
        if a == 3:
            assert out.served[i] == -1
