import numpy as np
import pytest

from omarl.baselines import (
    KINDS, BaselinePolicy, TDMPolicy, greedy_action, itlinq_action, itlinq_served, make_policy,
    rw_action, tdm_action,
)
from omarl.env import NetConfig, RRMEnv, dbm_to_mw, reset, served_from_action
from omarl.metrics import evaluate

from conftest import hand_state


def test_rw_singleton_and_empty_ap():
    cfg = NetConfig(num_aps=2, num_ues=1, top_n=3)
    s = hand_state([[1e-9], [1e-9]], [0], cfg=cfg)
    r = np.random.default_rng(0)
    for _ in range(50):
        assert list(rw_action(s, r)) == [0, 3]


def test_rw_slot_frequencies_uniform():
    cfg = NetConfig(num_aps=1, num_ues=5, top_n=3)
    s = hand_state(np.full((1, 5), 1e-9), [0] * 5, cfg=cfg)
    r = np.random.default_rng(1)
    draws = np.array([rw_action(s, r)[0] for _ in range(100_000)])
    freq = np.bincount(draws, minlength=4) / draws.size
    assert freq[3] == 0.0
    assert np.all(np.abs(freq[:3] - 1 / 3) <= 0.02 / 3)


def _obs_with_sinr(values, n=3):
    obs = np.full((1, 2 * n), -10.0)
    obs[0, 0::2][: len(values)] = values
    return obs


@pytest.mark.parametrize("sinrs,expected", [((3, 1, 2), 0), ((2, 2, 1), 0), ((1, 2, 5), 2)])
def test_greedy_argmax_with_tie_rule(sinrs, expected):
    cfg = NetConfig(num_aps=1, num_ues=3, top_n=3)
    s = hand_state(np.full((1, 3), 1e-9), [0, 0, 0], cfg=cfg)
    assert greedy_action(s, _obs_with_sinr(sinrs))[0] == expected


def test_greedy_all_empty_is_silent():
    cfg = NetConfig(num_aps=2, num_ues=1, top_n=3)
    s = hand_state([[1e-9], [1e-9]], [0], cfg=cfg)
    assert greedy_action(s)[1] == 3


def test_tdm_round_robin_order_and_reset():
    cfg = NetConfig(num_aps=1, num_ues=3, top_n=3)
    s = hand_state(np.full((1, 3), 1e-9), [0, 0, 0], cfg=cfg)
    p = TDMPolicy()
    p.reset(s)
    seq = [int(p.schedule(s)[0]) for _ in range(6)]
    assert seq == [0, 1, 2, 0, 1, 2]
    p.reset(s)
    assert int(p.schedule(s)[0]) == 0


def test_tdm_singleton_and_cursor_bounds():
    cfg = NetConfig(num_aps=2, num_ues=3, top_n=3)
    s = hand_state(np.full((2, 3), 1e-9), [0, 0, 1], cfg=cfg)
    p = make_policy("tdm")
    p.reset(s, np.random.default_rng(0))
    for _ in range(7):
        served = p.schedule(s)
        assert served[1] == 2
        assert 0 <= p.tdm_counters[0] < 2 and p.tdm_counters[1] == 0


def test_tdm_cycles_beyond_top_n_and_projects_to_silent():
    cfg = NetConfig(num_aps=1, num_ues=5, top_n=3)
    s = hand_state(np.full((1, 5), 1e-9), [0] * 5, cfg=cfg, weights=[5, 4, 3, 2, 1])
    p = TDMPolicy()
    p.reset(s)
    actions = [int(tdm_action(s, p)[0]) for _ in range(5)]
    assert actions == [0, 1, 2, 3, 3]


def test_tdm_fairness_over_an_episode(table3):
    env = RRMEnv(table3, np.random.default_rng(4))
    env.reset()
    p = make_policy("tdm")
    p.reset(env.state)
    counts = np.zeros(table3.num_ues, dtype=int)
    for _ in range(table3.episode_len):
        served = p.schedule(env.state)
        counts[served[served >= 0]] += 1
        env.step(served=served)
    for i in range(table3.num_aps):
        members = env.state.topology.members(i)
        if members.size:
            assert counts[members].max() - counts[members].min() <= 1


def test_itlinq_single_ap_serves_top_pf():
    cfg = NetConfig(num_aps=1, num_ues=3, top_n=3)
    s = hand_state([[1e-9, 3e-9, 2e-9]], [0, 0, 0], cfg=cfg)
    assert itlinq_served(s)[0] == s.topn_ranking[0, 0]


def test_itlinq_infinite_tolerance_is_top_pf(table3):
    for seed in range(10):
        s = reset(table3, np.random.default_rng(seed))
        served = itlinq_served(s, m_db=np.inf)
        np.testing.assert_array_equal(served, served_from_action(s, np.zeros(4, dtype=int)))


def test_itlinq_zero_tolerance_silences_interfered_aps(table3):
    s = reset(table3, np.random.default_rng(0))
    served = itlinq_served(s, m_db=-np.inf)
    # the first AP sees no interference yet; everyone after it is interfered
    assert served[0] == s.topn_ranking[0, 0]
    assert np.all(served[1:] == -1)


def test_itlinq_hand_threshold():
    cfg = NetConfig(num_aps=2, num_ues=2, top_n=1)
    p, n = dbm_to_mw(cfg.tx_power_dbm), dbm_to_mw(cfg.noise_power_dbm)
    direct = 1e-8
    snr = direct * p / n
    m_lin = 10 ** 2.5
    threshold_gain = m_lin * snr ** 0.5 * n / p  # cross-link gain at which UE 1 stops tolerating AP 0
    for cross, expect_on in ((0.99 * threshold_gain, True), (1.01 * threshold_gain, False)):
        g = np.array([[1e-8, cross], [1e-14, direct]])
        s = hand_state(g, [0, 1], cfg=cfg)
        served = itlinq_served(s, 25.0, 0.5)
        assert served[0] == 0
        assert bool(served[1] == 1) is expect_on


@pytest.mark.parametrize("kind", KINDS)
def test_all_baselines_emit_valid_actions(kind, table3):
    env = RRMEnv(table3, np.random.default_rng(2))
    env.reset()
    p = make_policy(kind)
    p.reset(env.state, np.random.default_rng(3))
    for _ in range(40):
        served = p.schedule(env.state)
        assoc = env.state.topology.association
        for i, ue in enumerate(served):
            assert ue == -1 or assoc[ue] == i
        env.step(served=served)
    a = itlinq_action(env.state)
    assert np.all((a >= 0) & (a <= table3.top_n))


def test_bad_baseline_arguments():
    with pytest.raises(ValueError):
        BaselinePolicy("oracle")
    with pytest.raises(ValueError):
        BaselinePolicy("itlinq", eta_itl=1.5)


def test_round_robin_is_fair_on_single_ap_toy():
    cfg = NetConfig(num_aps=1, num_ues=2, top_n=2)
    s = evaluate(make_policy("tdm"), cfg, 50, seed=0)
    rates = s.user_rates
    ratio = rates[:, 0].mean() / rates[:, 1].mean()
    assert abs(ratio - 1.0) <= 0.1
