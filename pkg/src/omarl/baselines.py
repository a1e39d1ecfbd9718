"""Rule-based schedulers: random-walk, greedy, round-robin TDM and ITLinQ.

Each policy object follows the small protocol used by the evaluator and the
dataset collector:

    policy.reset(state, rng)      # start of an episode
    policy.schedule(state)        # -> served UE per AP, -1 for silence

The ``*_action`` functions return per-AP action indices (slot ``0..N-1`` or
``N`` for silence) for callers that work in the agents' action space.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import EnvState, action_from_served, dbm_to_mw, observe, served_from_action

KINDS = ("rw", "greedy", "tdm", "itlinq")


def _slot_counts(state: EnvState):
    return (state.topn_ranking >= 0).sum(axis=1)


def rw_action(state: EnvState, rng):
    """Uniform choice among each AP's occupied ranking slots."""
    counts = _slot_counts(state)
    n = state.cfg.top_n
    draws = np.floor(rng.random(state.cfg.num_aps) * np.maximum(counts, 1)).astype(int)
    return np.where(counts > 0, draws, n)


def greedy_action(state: EnvState, observations=None):
    """Serve the ranked UE with the highest observed SINR; ties to the lower slot."""
    obs = observe(state) if observations is None else observations
    n = state.cfg.top_n
    sinr_hat = obs.reshape(state.cfg.num_aps, n, 2)[:, :, 0]
    masked = np.where(state.topn_ranking >= 0, sinr_hat, -np.inf)
    best = np.argmax(masked, axis=1)
    return np.where(_slot_counts(state) > 0, best, n)


def _round_robin(state: EnvState, counters):
    served = np.full(state.cfg.num_aps, -1, dtype=int)
    for i in range(state.cfg.num_aps):
        members = state.topology.members(i)
        if members.size:
            served[i] = members[counters[i] % members.size]
            counters[i] = (counters[i] + 1) % members.size
    return served


@dataclass
class TDMPolicy:
    """Round-robin over all UEs associated to each AP."""

    kind: str = "tdm"
    tdm_counters: np.ndarray | None = None

    def reset(self, state: EnvState, rng=None):
        self.tdm_counters = np.zeros(state.cfg.num_aps, dtype=int)

    def schedule(self, state: EnvState):
        if self.tdm_counters is None:
            self.reset(state)
        return _round_robin(state, self.tdm_counters)


def tdm_schedule(state: EnvState, policy: TDMPolicy):
    return policy.schedule(state)


def tdm_action(state: EnvState, policy: TDMPolicy):
    """Round-robin choice projected onto ranking slots.

    When the UE due for service is outside the AP's top-N ranking it has no
    slot and the AP is reported silent.
    """
    return action_from_served(state, policy.schedule(state))


def itlinq_served(state: EnvState, m_db=25.0, eta_itl=0.5):
    """Sequential interference-tolerance scan over APs in index order.

    AP ``i`` walks its ranking (PF descending) and picks the first UE whose
    interference from the APs already switched on is at most
    ``M * SNR^eta * noise``.  With no passing UE the AP stays off.
    """
    cfg = state.cfg
    p = dbm_to_mw(cfg.tx_power_dbm)
    noise = dbm_to_mw(cfg.noise_power_dbm)
    m_lin = 10.0 ** (m_db / 10.0)
    rx = state.gains * p
    served = np.full(cfg.num_aps, -1, dtype=int)
    on = np.zeros(cfg.num_aps, dtype=bool)
    for i in range(cfg.num_aps):
        for ue in state.topn_ranking[i]:
            if ue < 0:
                break
            interference = rx[on, ue].sum()
            snr = rx[i, ue] / noise
            if interference <= m_lin * snr ** eta_itl * noise:
                served[i] = ue
                on[i] = True
                break
    return served


def itlinq_action(state: EnvState, policy=None):
    m_db = 25.0 if policy is None else policy.m_db
    eta = 0.5 if policy is None else policy.eta_itl
    return action_from_served(state, itlinq_served(state, m_db, eta))


@dataclass
class BaselinePolicy:
    kind: str
    m_db: float = 25.0
    eta_itl: float = 0.5
    tdm_counters: np.ndarray | None = None
    rng: np.random.Generator | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown baseline {self.kind!r}; expected one of {KINDS}")
        if not 0.0 <= self.eta_itl <= 1.0:
            raise ValueError("eta_itl must lie in [0, 1]")

    @property
    def name(self):
        return self.kind

    def reset(self, state: EnvState, rng=None):
        self.tdm_counters = np.zeros(state.cfg.num_aps, dtype=int)
        if rng is not None:
            self.rng = rng
        elif self.rng is None:
            self.rng = np.random.default_rng()

    def schedule(self, state: EnvState):
        if self.kind == "tdm":
            if self.tdm_counters is None:
                self.reset(state)
            return _round_robin(state, self.tdm_counters)
        if self.kind == "itlinq":
            return itlinq_served(state, self.m_db, self.eta_itl)
        if self.kind == "rw":
            if self.rng is None:
                self.rng = np.random.default_rng()
            return served_from_action(state, rw_action(state, self.rng))
        return served_from_action(state, greedy_action(state))


def make_policy(kind, m_db=25.0, eta_itl=0.5):
    return BaselinePolicy(kind=kind, m_db=m_db, eta_itl=eta_itl)
