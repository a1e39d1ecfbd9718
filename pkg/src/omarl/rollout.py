"""Run one scheduling episode with any policy and keep what callers need."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import NetConfig, RRMEnv, action_from_served


@dataclass
class EpisodeTrace:
    rates: np.ndarray  # (T, J)
    rewards: np.ndarray  # (T,)
    observations: np.ndarray | None = None  # (T + 1, I, 2N)
    actions: np.ndarray | None = None  # (T, I)


def run_episode(policy, cfg: NetConfig, env_rng, policy_rng=None, record=False, env_cls=RRMEnv):
    """Play a full episode.

    ``policy`` needs ``reset(state, rng)`` and ``schedule(state)`` returning
    the served UE per AP.  With ``record=True`` the observations and the
    slot-space actions are kept for dataset building.
    """
    env = env_cls(cfg, env_rng)
    obs = env.reset()
    policy.reset(env.state, policy_rng)
    T = cfg.episode_len
    rates = np.empty((T, cfg.num_ues))
    rewards = np.empty(T)
    all_obs = np.empty((T + 1,) + obs.shape) if record else None
    actions = np.empty((T, cfg.num_aps), dtype=int) if record else None
    for t in range(T):
        served = np.asarray(policy.schedule(env.state), dtype=int)
        if record:
            all_obs[t] = obs
            actions[t] = action_from_served(env.state, served)
        out = env.step(served=served)
        rates[t] = out.per_ue_rate
        rewards[t] = out.reward
        obs = out.observations
    if record:
        all_obs[T] = obs
    return EpisodeTrace(rates, rewards, all_obs, actions)
