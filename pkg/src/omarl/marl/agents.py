"""Network bundles for the three training scopes and action selection."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..env import NetConfig, observe, served_from_action
from ..errors import DimensionError
from ..nn import DenseNet, softmax
from .codec import JointActionCodec

ALGO_SCOPE = {
    "sac-c": "centralized",
    "dqn-c": "centralized",
    "cql-c": "centralized",
    "sac-i": "independent",
    "cql-i": "independent",
    "sac-ctde": "ctde",
    "cql-ctde": "ctde",
}
ONLINE_ALGOS = ("sac-c", "dqn-c", "sac-i", "sac-ctde")
OFFLINE_ALGOS = ("cql-c", "cql-i", "cql-ctde")
MODEL_FORMAT = "omarl.agentnets/1"


@dataclass
class AgentNets:
    algo: str
    scope: str
    num_agents: int
    obs_dim: int
    n_actions: int
    critics: list
    target_critics: list
    policies: list = field(default_factory=list)
    net_config: dict | None = None

    @property
    def codec(self):
        return JointActionCodec(self.num_agents, self.n_actions)

    @property
    def centralized(self):
        return self.scope == "centralized"

    def copy(self):
        return AgentNets(self.algo, self.scope, self.num_agents, self.obs_dim, self.n_actions,
                         [c.copy() for c in self.critics], [c.copy() for c in self.target_critics],
                         [p.copy() for p in self.policies], self.net_config)

    def to_dict(self, config_hash="", extra=None):
        d = {
            "format": MODEL_FORMAT,
            "algo": self.algo,
            "scope": self.scope,
            "num_agents": self.num_agents,
            "obs_dim": self.obs_dim,
            "n_actions": self.n_actions,
            "net_config": self.net_config,
            "config_hash": config_hash,
            "critics": [c.to_dict(config_hash) for c in self.critics],
            "target_critics": [c.to_dict(config_hash) for c in self.target_critics],
            "policies": [p.to_dict(config_hash) for p in self.policies],
        }
        if extra:
            d["extra"] = extra
        return d

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {d.get('format')!r}")
        nets = lambda key: [DenseNet.from_dict(x) for x in d[key]]
        return cls(d["algo"], d["scope"], d["num_agents"], d["obs_dim"], d["n_actions"],
                   nets("critics"), nets("target_critics"), nets("policies"), d.get("net_config"))

    def save(self, path, config_hash="", extra=None):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(config_hash, extra), fh, sort_keys=True)
        return path

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def build_agent_nets(algo, cfg: NetConfig, hidden=(256, 256), rng=None):
    """Fresh critics, targets and policies sized for ``algo`` on ``cfg``.

    Centralized scope sees the concatenated state and outputs one value per
    joint action; the other scopes give each agent its own nets over its
    local observation.
    """
    if algo not in ALGO_SCOPE:
        raise ValueError(f"unknown algo {algo!r}")
    rng = np.random.default_rng() if rng is None else rng
    scope = ALGO_SCOPE[algo]
    I, D, A = cfg.num_aps, cfg.obs_dim, cfg.num_actions
    if scope == "centralized":
        dims = (I * D, *hidden, A ** I)
        count = 1
    else:
        dims = (D, *hidden, A)
        count = I
    critics = [DenseNet(dims, rng) for _ in range(count)]
    policies = [] if algo == "dqn-c" else [DenseNet(dims, rng) for _ in range(count)]
    targets = [c.copy() for c in critics]
    return AgentNets(algo, scope, I, D, A, critics, targets, policies, cfg.to_dict())


def act(nets: AgentNets, observations, mode="greedy", rng=None, epsilon=0.0):
    """Joint action (one index per agent) for observations of shape (I, D).

    ``greedy``: CTDE takes each agent's argmax of its own critic, DQN the
    joint-critic argmax, SAC scopes the policy argmax.  ``sample`` draws from
    the policy softmax (epsilon-greedy for DQN).  Ties go to the lowest index.
    """
    obs = np.asarray(observations, dtype=float)
    if obs.shape != (nets.num_agents, nets.obs_dim):
        raise DimensionError(f"observations must be {(nets.num_agents, nets.obs_dim)}, got {obs.shape}")
    if mode not in ("greedy", "sample"):
        raise ValueError(f"unknown mode {mode!r}")
    if nets.centralized:
        codec = nets.codec
        s = obs.reshape(-1)
        if not nets.policies:
            if mode == "sample" and rng is not None and rng.random() < epsilon:
                return codec.decode(int(rng.integers(codec.size)))
            return codec.decode(int(np.argmax(nets.critics[0].forward(s))))
        logits = nets.policies[0].forward(s)
        if mode == "greedy":
            return codec.decode(int(np.argmax(logits)))
        return codec.decode(_sample(softmax(logits), rng))
    out = np.empty(nets.num_agents, dtype=int)
    for i in range(nets.num_agents):
        if mode == "greedy":
            head = nets.critics[i] if nets.scope == "ctde" else nets.policies[i]
            out[i] = int(np.argmax(head.forward(obs[i])))
        else:
            out[i] = _sample(softmax(nets.policies[i].forward(obs[i])), rng)
    return out


def _sample(probs, rng):
    rng = np.random.default_rng() if rng is None else rng
    c = np.cumsum(probs)
    return int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), probs.size - 1))


class ModelPolicy:
    """Adapter so trained nets plug into the evaluator and the collector."""

    def __init__(self, nets: AgentNets, mode="greedy", epsilon=0.0, name=None):
        self.nets = nets
        self.mode = mode
        self.epsilon = epsilon
        self.name = name or f"model:{nets.algo}"
        self.rng = None

    def reset(self, state, rng=None):
        self.rng = rng if rng is not None else np.random.default_rng()

    def schedule(self, state):
        a = act(self.nets, observe(state), self.mode, self.rng, self.epsilon)
        return served_from_action(state, a)

    def __deepcopy__(self, memo):
        # nets are read-only during evaluation, so copies may share them
        return ModelPolicy(self.nets, self.mode, self.epsilon, self.name)
