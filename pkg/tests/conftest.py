import numpy as np
import pytest

from omarl.env import EnvState, NetConfig, Topology, rank_topn


def hand_state(gains, association, cfg=None, weights=None, ranking=None):
    """EnvState over a hand-built gain matrix; positions are irrelevant."""
    gains = np.asarray(gains, dtype=float)
    I, J = gains.shape
    cfg = cfg or NetConfig(num_aps=I, num_ues=J, top_n=max(1, min(3, J)))
    topo = Topology(ap_positions=np.zeros((I, 2)), ue_positions=np.ones((J, 2)),
                    association=np.asarray(association, dtype=int), shadowing_db=np.zeros((I, J)))
    state = EnvState(cfg=cfg, topology=topo, rng_stream=np.random.default_rng(0))
    state.gains = gains
    state.pf_weight = np.ones(J) if weights is None else np.asarray(weights, dtype=float)
    state.long_term_rate = 1.0 / state.pf_weight
    state.last_active = np.ones(I, dtype=bool)
    state.topn_ranking = rank_topn(state) if ranking is None else np.asarray(ranking, dtype=int)
    return state


@pytest.fixture
def table3():
    return NetConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
