"""Downlink multi-AP scheduling simulator.

An episode places ``num_aps`` access points and ``num_ues`` mobile users in a
square area, associates every user to its strongest AP (path loss plus
shadowing), and then runs ``episode_len`` scheduling steps.  At each step every
AP either serves one user from its top-N proportional-fair ranking or stays
silent.  Channels combine a 3GPP indoor path loss, quasi-static log-normal
shadowing and per-step Rayleigh fading.

Action convention: index ``0..N-1`` selects a ranking slot, index ``N`` is
silence.  A slot that holds no user is treated as silence.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError, InvalidActionError, PlacementInfeasibleError

MAX_PLACEMENT_ATTEMPTS = 10_000
OBS_CLIP = 10.0
OBS_EPS = 1e-9


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


@dataclass(frozen=True)
class NetConfig:
    area_side_m: float = 100.0
    num_aps: int = 4
    num_ues: int = 20
    top_n: int = 3
    min_ap_dist_m: float = 10.0
    min_ap_ue_dist_m: float = 1.0
    ue_speed_mps: float = 1.0
    tx_power_dbm: float = 10.0
    noise_power_dbm: float = -104.0
    shadowing_std_db: float = 7.0
    pl_offset_db: float = 10.0
    episode_len: int = 200
    pf_smoothing: float = 0.1
    fairness_exponent: float = 0.8
    rate_floor: float = 1e-3

    def __post_init__(self):
        problems = []
        if self.area_side_m <= 0:
            problems.append("area_side_m must be > 0")
        if self.num_aps < 1 or self.num_ues < 1:
            problems.append("num_aps and num_ues must be >= 1")
        if self.top_n < 1:
            problems.append("top_n must be >= 1")
        if self.min_ap_dist_m <= 0 or self.min_ap_ue_dist_m <= 0:
            problems.append("minimum distances must be > 0")
        if self.ue_speed_mps < 0:
            problems.append("ue_speed_mps must be >= 0")
        if self.shadowing_std_db < 0:
            problems.append("shadowing_std_db must be >= 0")
        if not 0 < self.pf_smoothing <= 1:
            problems.append("pf_smoothing must lie in (0, 1]")
        if not 0 <= self.fairness_exponent <= 1:
            problems.append("fairness_exponent must lie in [0, 1]")
        if self.episode_len < 1:
            problems.append("episode_len must be >= 1")
        if self.rate_floor <= 0:
            problems.append("rate_floor must be > 0")
        if problems:
            raise ConfigError("invalid NetConfig: " + "; ".join(problems))

    @property
    def obs_dim(self):
        return 2 * self.top_n

    @property
    def num_actions(self):
        return self.top_n + 1

    @property
    def state_dim(self):
        return 2 * self.top_n * self.num_aps

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_mapping(cls, mapping):
        """Build from a mapping of field name to value (strings are coerced)."""
        kwargs = {}
        for f in fields(cls):
            if f.name in mapping:
                kwargs[f.name] = type(f.default)(mapping[f.name]) if f.default is not None else mapping[f.name]
        return cls(**kwargs)

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Topology:
    ap_positions: np.ndarray  # (I, 2)
    ue_positions: np.ndarray  # (J, 2)
    association: np.ndarray  # (J,) serving AP index
    shadowing_db: np.ndarray  # (I, J)

    def members(self, ap):
        """UE indices associated to ``ap`` in ascending order."""
        return np.flatnonzero(self.association == ap)


@dataclass
class EnvState:
    cfg: NetConfig
    topology: Topology
    rng_stream: np.random.Generator
    t: int = 0
    gains: np.ndarray | None = None
    long_term_rate: np.ndarray | None = None
    pf_weight: np.ndarray | None = None
    topn_ranking: np.ndarray | None = None  # (I, N), -1 marks an empty slot
    last_active: np.ndarray | None = None
    pf_initialized: bool = False


@dataclass
class StepOutcome:
    per_ue_rate: np.ndarray
    per_ue_sinr: np.ndarray
    reward: float
    served: np.ndarray  # (I,) served UE per AP, -1 when silent
    observations: np.ndarray | None = None
    done: bool = False


def path_loss_db(d_m, offset_db=10.0):
    """3GPP indoor path loss ``15.3 + 37.6 log10(d) + offset`` in dB."""
    d = np.asarray(d_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path loss needs strictly positive distances")
    pl = 15.3 + 37.6 * np.log10(d) + offset_db
    return float(pl) if pl.ndim == 0 else pl


def pairwise_distances(a, b):
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _place_points(count, side, rng, ok, what):
    """Rejection-sample ``count`` points one at a time; ``ok(pt, placed)`` validates."""
    placed = np.empty((0, 2))
    for _ in range(count):
        for _attempt in range(MAX_PLACEMENT_ATTEMPTS):
            pt = rng.uniform(0.0, side, size=2)
            if ok(pt, placed):
                placed = np.vstack([placed, pt])
                break
        else:
            raise PlacementInfeasibleError(
                f"could not place {what} {len(placed)} after {MAX_PLACEMENT_ATTEMPTS} attempts"
            )
    return placed


def sample_topology(cfg: NetConfig, rng) -> Topology:
    d0, d1 = cfg.min_ap_dist_m, cfg.min_ap_ue_dist_m

    def ap_ok(pt, placed):
        return len(placed) == 0 or np.min(np.hypot(*(placed - pt).T)) >= d0

    aps = _place_points(cfg.num_aps, cfg.area_side_m, rng, ap_ok, "AP")

    def ue_ok(pt, _placed):
        return np.min(np.hypot(*(aps - pt).T)) >= d1

    ues = _place_points(cfg.num_ues, cfg.area_side_m, rng, ue_ok, "UE")
    shadow = rng.normal(0.0, cfg.shadowing_std_db, size=(cfg.num_aps, cfg.num_ues))
    pl = path_loss_db(pairwise_distances(aps, ues), cfg.pl_offset_db)
    rsrp = cfg.tx_power_dbm - pl - shadow
    association = np.argmax(rsrp, axis=0)
    return Topology(aps, ues, association, shadow)


def large_scale_loss_db(state: EnvState):
    """Path loss plus shadowing (dB) at the current UE positions.

    UEs may wander closer than ``min_ap_ue_dist_m`` after placement; the
    distance is floored there so the path-loss model stays in range.
    """
    topo, cfg = state.topology, state.cfg
    d = np.maximum(pairwise_distances(topo.ap_positions, topo.ue_positions), cfg.min_ap_ue_dist_m)
    return path_loss_db(d, cfg.pl_offset_db) + topo.shadowing_db


def draw_channel_gains(state: EnvState, rng, fading=None):
    """Return the (I, J) matrix of linear channel power gains ``|h|^2``."""
    loss_db = large_scale_loss_db(state)
    if fading is None:
        fading = rng.exponential(1.0, size=loss_db.shape)
    return 10.0 ** (-loss_db / 10.0) * fading


def served_from_action(state: EnvState, joint_action):
    """Map per-AP action indices to served UE indices (-1 for silence)."""
    a = np.asarray(joint_action, dtype=int).reshape(-1)
    n = state.cfg.top_n
    if a.shape[0] != state.cfg.num_aps:
        raise InvalidActionError(f"expected {state.cfg.num_aps} actions, got {a.shape[0]}")
    if np.any(a < 0) or np.any(a > n):
        raise InvalidActionError(f"action indices must lie in 0..{n}, got {a.tolist()}")
    served = np.full(state.cfg.num_aps, -1, dtype=int)
    talk = a < n
    served[talk] = state.topn_ranking[np.flatnonzero(talk), a[talk]]
    return served


def action_from_served(state: EnvState, served):
    """Inverse of :func:`served_from_action`.

    A UE outside its AP's current top-N ranking has no slot and is reported as
    the silent index.
    """
    n = state.cfg.top_n
    a = np.full(state.cfg.num_aps, n, dtype=int)
    for i, ue in enumerate(served):
        if ue >= 0:
            hit = np.flatnonzero(state.topn_ranking[i] == ue)
            if hit.size:
                a[i] = hit[0]
    return a


def sinr_all(state: EnvState, active, gains=None):
    """SINR every UE would see from its own AP under the given active-AP mask."""
    cfg = state.cfg
    g = state.gains if gains is None else gains
    assoc = state.topology.association
    rx = g * dbm_to_mw(cfg.tx_power_dbm)
    cols = np.arange(cfg.num_ues)
    own = rx[assoc, cols]
    total = rx[active].sum(axis=0)
    interference = total - own * active[assoc]
    return own / (interference + dbm_to_mw(cfg.noise_power_dbm))


def compute_sinr_and_rates(state: EnvState, joint_action=None, served=None) -> StepOutcome:
    """Evaluate one scheduling decision on the current gains.

    Give either ``joint_action`` (slot indices) or ``served`` (UE per AP, -1
    silent).  The reward uses the PF weights currently in force.
    """
    if served is None:
        served = served_from_action(state, joint_action)
    else:
        served = np.asarray(served, dtype=int)
        assoc = state.topology.association
        for i, ue in enumerate(served):
            if ue >= 0 and assoc[ue] != i:
                raise InvalidActionError(f"AP {i} cannot serve UE {ue} associated to AP {assoc[ue]}")
    active = served >= 0
    sinr = sinr_all(state, active)
    rate = np.zeros(state.cfg.num_ues)
    ues = served[active]
    rate[ues] = np.log2(1.0 + sinr[ues])
    reward = float(np.sum(state.pf_weight ** state.cfg.fairness_exponent * rate))
    return StepOutcome(per_ue_rate=rate, per_ue_sinr=sinr, reward=reward, served=served)


def rank_topn(state: EnvState):
    """Per-AP top-N UEs by PF ratio, descending, ties to the lower UE index.

    The rate term is a single-transmitter probe on the current gains.
    """
    cfg = state.cfg
    assoc = state.topology.association
    snr = state.gains[assoc, np.arange(cfg.num_ues)] * dbm_to_mw(cfg.tx_power_dbm) / dbm_to_mw(cfg.noise_power_dbm)
    score = state.pf_weight * np.log2(1.0 + snr)
    order = np.lexsort((np.arange(cfg.num_ues), -score, assoc))
    ranking = np.full((cfg.num_aps, cfg.top_n), -1, dtype=int)
    sorted_assoc = assoc[order]
    starts = np.searchsorted(sorted_assoc, np.arange(cfg.num_aps), side="left")
    stops = np.searchsorted(sorted_assoc, np.arange(cfg.num_aps), side="right")
    for i in range(cfg.num_aps):
        top = order[starts[i]:min(stops[i], starts[i] + cfg.top_n)]
        ranking[i, : top.size] = top
    return ranking


def update_pf_state(state: EnvState, per_ue_rate):
    """Advance the long-term rate recursion, refresh weights, re-rank."""
    cfg = state.cfg
    rate = np.asarray(per_ue_rate, dtype=float)
    if not state.pf_initialized:
        state.long_term_rate = rate.copy()
        state.pf_initialized = True
    else:
        eta = cfg.pf_smoothing
        state.long_term_rate = eta * rate + (1.0 - eta) * state.long_term_rate
    state.pf_weight = 1.0 / np.maximum(state.long_term_rate, cfg.rate_floor)
    state.topn_ranking = rank_topn(state)


def reflect_into(x, side):
    y = np.mod(x, 2.0 * side)
    return np.where(y > side, 2.0 * side - y, y)


def advance_mobility(state: EnvState, rng, heading=None):
    """Move every UE ``ue_speed_mps`` metres (one-second step) on a random heading."""
    cfg = state.cfg
    if heading is None:
        heading = rng.uniform(0.0, 2.0 * np.pi, size=cfg.num_ues)
    step = cfg.ue_speed_mps * np.column_stack([np.cos(heading), np.sin(heading)])
    state.topology.ue_positions = reflect_into(state.topology.ue_positions + step, cfg.area_side_m)


def _log_clip(x):
    return np.clip(np.log10(x + OBS_EPS), -OBS_CLIP, OBS_CLIP)


def observe(state: EnvState):
    """Per-agent observations, shape (I, 2N), pairs ``(log SINR, log weight)``.

    SINR uses the current gains with the interference pattern of the previous
    step (every AP counted as active before the first step).  Empty slots hold
    the clip floor.
    """
    cfg = state.cfg
    sinr = sinr_all(state, state.last_active)
    obs = np.full((cfg.num_aps, cfg.top_n, 2), -OBS_CLIP)
    valid = state.topn_ranking >= 0
    ues = state.topn_ranking[valid]
    obs[valid, 0] = _log_clip(sinr[ues])
    obs[valid, 1] = _log_clip(state.pf_weight[ues])
    return obs.reshape(cfg.num_aps, 2 * cfg.top_n)


def global_state(observations):
    return np.asarray(observations).reshape(-1)


def reset(cfg: NetConfig, rng) -> EnvState:
    topo = sample_topology(cfg, rng)
    state = EnvState(cfg=cfg, topology=topo, rng_stream=rng)
    state.gains = draw_channel_gains(state, rng)
    state.long_term_rate = np.zeros(cfg.num_ues)
    state.pf_weight = np.ones(cfg.num_ues)
    state.last_active = np.ones(cfg.num_aps, dtype=bool)
    state.topn_ranking = rank_topn(state)
    return state


class RRMEnv:
    """Stateful wrapper: ``reset`` then ``step`` until ``done``."""

    def __init__(self, cfg: NetConfig, rng=None):
        self.cfg = cfg
        self.rng = rng if rng is not None else np.random.default_rng()
        self.state: EnvState | None = None

    def reset(self, rng=None):
        if rng is not None:
            self.rng = rng
        self.state = reset(self.cfg, self.rng)
        return observe(self.state)

    def step(self, joint_action=None, served=None) -> StepOutcome:
        s = self.state
        if s is None:
            raise RuntimeError("call reset() before step()")
        if s.t >= self.cfg.episode_len:
            raise RuntimeError("episode finished; call reset()")
        out = compute_sinr_and_rates(s, joint_action, served)
        s.last_active = out.served >= 0
        advance_mobility(s, self.rng)
        s.gains = draw_channel_gains(s, self.rng)
        update_pf_state(s, out.per_ue_rate)
        s.t += 1
        out.observations = observe(s)
        out.done = s.t >= self.cfg.episode_len
        return out

    def observe(self):
        return observe(self.state)
