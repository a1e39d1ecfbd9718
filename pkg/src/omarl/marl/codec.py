import numpy as np


class JointActionCodec:
    """Mixed-radix map between per-agent actions and one joint index.

    Agent 0 is the least significant digit, so with 4 actions per agent the
    joint index 7 decodes to ``(3, 1, 0, 0)``.
    """

    def __init__(self, num_agents, per_agent_actions):
        self.num_agents = int(num_agents)
        self.per_agent_actions = int(per_agent_actions)
        self.radix = self.per_agent_actions ** np.arange(self.num_agents)
        self.size = self.per_agent_actions ** self.num_agents

    def encode(self, actions):
        a = np.asarray(actions, dtype=int)
        if a.shape[-1] != self.num_agents:
            raise ValueError(f"expected {self.num_agents} agent actions, got shape {a.shape}")
        if np.any(a < 0) or np.any(a >= self.per_agent_actions):
            raise ValueError("agent action out of range")
        idx = a @ self.radix
        return int(idx) if np.ndim(idx) == 0 else idx

    def decode(self, index):
        idx = np.asarray(index, dtype=int)
        if np.any(idx < 0) or np.any(idx >= self.size):
            raise ValueError(f"joint index out of range 0..{self.size - 1}")
        return (idx[..., None] // self.radix) % self.per_agent_actions

    def table(self):
        """All joint actions, row ``k`` is ``decode(k)``."""
        return self.decode(np.arange(self.size))
