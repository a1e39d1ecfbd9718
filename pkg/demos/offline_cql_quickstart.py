"""
Offline CTDE-CQL from an ITLinQ dataset, at toy scale
=====================================================

The full experiment uses 80 episodes and 20,000 gradient steps.  Here we
use 10 episodes and 1,000 steps so the script finishes in well under a minute;
expect a policy that is still rough.
"""

from omarl.baselines import make_policy
from omarl.dataset import collect
from omarl.env import NetConfig
from omarl.marl import ModelPolicy, TrainerConfig, train_offline
from omarl.metrics import evaluate

cfg = NetConfig()

# behaviour data: ITLinQ decisions, one record per slot
data = collect(cfg, make_policy("itlinq"), episodes=10, seed=0)
print(len(data), "transitions, mean reward", round(float(data.rewards.mean()), 2))

# conservative training never touches the environment
tcfg = TrainerConfig(algo="cql-ctde", iterations=10, grad_steps=100, seed=0)


def show(row):
    print(f"iter {row['iteration']:2d}  critic {row['critic_loss']:.3f}  "
          f"penalty {row['cql_penalty_mean']:.3f}  policy {row['policy_loss']:.3f}")


result = train_offline(tcfg, data, cfg, progress=show)

for name, policy in (("cql-ctde", ModelPolicy(result.nets)), ("itlinq", make_policy("itlinq")),
                     ("rw", make_policy("rw"))):
    s = evaluate(policy, cfg, 10, seed=1)
    print(f"{name:9s} Rsum {s.rsum_mean:6.3f}  Rperc5 {s.rperc5:.4f}  Rscore {s.rscore:.4f}")
