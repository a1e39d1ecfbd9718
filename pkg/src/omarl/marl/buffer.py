import numpy as np

from ..dataset import Batch, Dataset, DatasetMeta


class ReplayBuffer:
    """Fixed-capacity ring of transitions; the oldest record is overwritten first."""

    def __init__(self, capacity, num_agents, obs_dim):
        self.capacity = int(capacity)
        self.obs = np.zeros((self.capacity, num_agents, obs_dim))
        self.next_obs = np.zeros_like(self.obs)
        self.actions = np.zeros((self.capacity, num_agents), dtype=int)
        self.rewards = np.zeros(self.capacity)
        self.done = np.zeros(self.capacity, dtype=bool)
        self.episode_id = np.zeros(self.capacity, dtype=int)
        self.t = np.zeros(self.capacity, dtype=int)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, obs, action, reward, next_obs, done, episode_id=0, t=0):
        k = self.cursor
        self.obs[k] = obs
        self.actions[k] = action
        self.rewards[k] = reward
        self.next_obs[k] = next_obs
        self.done[k] = done
        self.episode_id[k] = episode_id
        self.t[k] = t
        self.cursor = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size, rng):
        idx = rng.choice(self.size, size=min(batch_size, self.size), replace=False)
        return Batch(self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.done[idx])

    def _chronological(self):
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.cursor) % self.capacity

    def to_dataset(self, env_cfg, behavior, seed=None):
        idx = self._chronological()
        meta = DatasetMeta(env_cfg.config_hash(), env_cfg.to_dict(), behavior, int(idx.size), seed)
        return Dataset(meta, self.episode_id[idx], self.t[idx], self.obs[idx], self.actions[idx],
                       self.rewards[idx], self.next_obs[idx], self.done[idx],
                       np.array([behavior] * idx.size, dtype=object))
