"""
A tour of the scheduling environment and the four baseline policies
====================================================================

One episode is 200 slots on a 100 m square with 4 APs and 20 moving UEs.
Each AP either serves one of its top-3 ranked UEs or stays silent.
"""

import numpy as np

from omarl.baselines import make_policy
from omarl.env import NetConfig, RRMEnv
from omarl.metrics import evaluate

cfg = NetConfig()
env = RRMEnv(cfg, np.random.default_rng(0))
obs = env.reset()

# each row is one AP: (log10 SINR, log10 PF weight) for its three ranked UEs
print("observation shape", obs.shape)
print(np.round(obs, 2))

# serve the top-ranked UE everywhere for a few slots
for t in range(3):
    out = env.step(np.zeros(cfg.num_aps, dtype=int))
    print(f"slot {t}: reward {out.reward:8.2f}  served UEs {out.served.tolist()}")

# baselines on shared seeds, short run
print()
print(f"{'policy':8s} {'Rsum':>7s} {'Rperc5':>7s} {'Rscore':>7s}")
for kind in ("rw", "greedy", "tdm", "itlinq"):
    s = evaluate(make_policy(kind), cfg, 20, seed=0)
    print(f"{kind:8s} {s.rsum_mean:7.3f} {s.rperc5:7.4f} {s.rscore:7.4f}")
