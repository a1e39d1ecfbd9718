"""Offline multi-agent RL for downlink radio resource management."""
from .env import NetConfig, RRMEnv

__version__ = "0.1.0"
