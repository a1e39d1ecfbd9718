"""Offline (conservative) and online training loops."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..env import NetConfig, RRMEnv
from ..errors import ConfigError, EmptyDatasetError, NonFiniteError
from ..metrics import evaluate
from ..nn import AdamState, adam_step, polyak_update
from ..seeding import derive_rng
from .agents import ALGO_SCOPE, OFFLINE_ALGOS, ONLINE_ALGOS, ModelPolicy, act, build_agent_nets
from .buffer import ReplayBuffer
from .losses import critic_loss, improve_losses

CURVE_FIELDS = ("iteration", "eval_Rsum", "eval_Rperc5", "eval_Rscore",
                "critic_loss", "policy_loss", "cql_penalty_mean")


@dataclass
class TrainerConfig:
    algo: str = "cql-ctde"
    beta: float = 0.99
    cql_alpha: float = 1.0
    entropy_coeff: float = 1.0
    iterations: int = 200
    grad_steps: int = 100
    batch_size: int = 64
    actor_lr: float = 1e-5
    critic_lr: float = 1e-4
    polyak_tau: float = 0.005
    hidden_layers: int = 2
    hidden_units: int = 256
    # rewards are O(100) at the default network sizes; scaling keeps the
    # critic targets O(10) so the default learning rates stay stable
    reward_scale: float = 0.002
    episodes: int = 100
    online_grad_steps: int = 200
    buffer_capacity: int = 100_000
    dqn_eps_start: float = 1.0
    dqn_eps_end: float = 0.05
    dqn_eps_decay_frac: float = 0.5
    eval_every: int = 0
    eval_episodes: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.algo not in ALGO_SCOPE:
            raise ConfigError(f"unknown algo {self.algo!r}; expected one of {sorted(ALGO_SCOPE)}")
        if not 0.0 < self.beta < 1.0:
            raise ConfigError("beta must lie in (0, 1)")
        if self.cql_alpha < 0:
            raise ConfigError("cql_alpha must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    @property
    def hidden(self):
        return (self.hidden_units,) * self.hidden_layers

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_mapping(cls, mapping):
        kwargs = {f.name: type(f.default)(mapping[f.name]) for f in fields(cls) if f.name in mapping}
        return cls(**kwargs)


@dataclass
class TrainResult:
    nets: object
    curves: list = field(default_factory=list)
    buffer: ReplayBuffer | None = None
    gradient_steps: int = 0

    def curves_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CURVE_FIELDS)
        for row in self.curves:
            w.writerow([row[k] for k in CURVE_FIELDS])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


class Learner:
    """Owns the optimiser state and performs single gradient steps."""

    def __init__(self, nets, tcfg: TrainerConfig):
        self.nets = nets
        self.tcfg = tcfg
        # gradients are consumed right away, so each net can keep one buffer
        for net in nets.critics + nets.policies:
            net.reuse_grad_buffer = True
        self.critic_opt = [AdamState.for_net(c, tcfg.critic_lr) for c in nets.critics]
        self.policy_opt = [AdamState.for_net(p, tcfg.actor_lr) for p in nets.policies]
        self.steps = 0

    def step(self, batch, conservative):
        """Critic update, then policy update on the refreshed critic, then targets."""
        t, nets = self.tcfg, self.nets
        res = critic_loss(nets, batch, t.beta, t.entropy_coeff,
                          t.cql_alpha if conservative else None, t.reward_scale)
        if not np.isfinite(res.loss):
            raise NonFiniteError("non-finite critic loss", self.steps)
        try:
            for net, grads, opt in zip(nets.critics, res.grads, self.critic_opt):
                adam_step(net, grads, opt)
            policy_loss = 0.0
            if nets.policies:
                for net, (loss, grads), opt in zip(nets.policies, improve_losses(nets, batch, t.entropy_coeff),
                                                   self.policy_opt):
                    if not np.isfinite(loss):
                        raise NonFiniteError("non-finite policy loss", self.steps)
                    adam_step(net, grads, opt)
                    policy_loss += loss
        except NonFiniteError as exc:
            raise NonFiniteError(str(exc).split(" (")[0], self.steps) from None
        for target, online in zip(nets.target_critics, nets.critics):
            polyak_update(target, online, t.polyak_tau)
        self.steps += 1
        return res.loss, policy_loss, res.penalty


def _eval_row(nets, env_cfg, tcfg, iteration, critic, policy, penalty):
    row = {"iteration": iteration, "eval_Rsum": float("nan"), "eval_Rperc5": float("nan"),
           "eval_Rscore": float("nan"), "critic_loss": critic, "policy_loss": policy,
           "cql_penalty_mean": penalty}
    due = tcfg.eval_every > 0 and env_cfg is not None and (iteration + 1) % tcfg.eval_every == 0
    if due:
        summary = evaluate(ModelPolicy(nets), env_cfg, tcfg.eval_episodes, seed=tcfg.seed)
        row.update(eval_Rsum=summary.rsum_mean, eval_Rperc5=summary.rperc5, eval_Rscore=summary.rscore)
    return row


def train_offline(tcfg: TrainerConfig, dataset, env_cfg: NetConfig | None = None, nets=None, progress=None):
    """K iterations of G gradient steps on uniform batches from ``dataset``.

    The environment is never stepped for learning; it is only used for the
    optional periodic evaluation (``eval_every > 0``).
    """
    if tcfg.algo not in OFFLINE_ALGOS:
        raise ConfigError(f"{tcfg.algo!r} is not an offline algorithm")
    if len(dataset) == 0:
        raise EmptyDatasetError("offline training needs a non-empty dataset")
    cfg = env_cfg or dataset.cfg
    if nets is None:
        nets = build_agent_nets(tcfg.algo, cfg, tcfg.hidden, derive_rng(tcfg.seed, "init"))
    learner = Learner(nets, tcfg)
    rng = derive_rng(tcfg.seed, "batches")
    curves = []
    for k in range(tcfg.iterations):
        sums = np.zeros(3)
        for _ in range(tcfg.grad_steps):
            sums += learner.step(dataset.sample_batch(tcfg.batch_size, rng), conservative=True)
        avg = sums / max(tcfg.grad_steps, 1)
        curves.append(_eval_row(nets, cfg, tcfg, k, *avg))
        if progress is not None:
            progress(curves[-1])
    return TrainResult(nets, curves, None, learner.steps)


def epsilon_at(tcfg: TrainerConfig, episode):
    """Linear decay from start to end over the first ``decay_frac`` of episodes."""
    horizon = tcfg.dqn_eps_decay_frac * tcfg.episodes
    frac = 1.0 if horizon <= 0 else min(1.0, episode / horizon)
    return tcfg.dqn_eps_start + (tcfg.dqn_eps_end - tcfg.dqn_eps_start) * frac


def train_online(tcfg: TrainerConfig, env_cfg: NetConfig, nets=None, env_cls=RRMEnv, progress=None):
    """Interact for ``episodes`` episodes, then ``online_grad_steps`` updates after each."""
    if tcfg.algo not in ONLINE_ALGOS:
        raise ConfigError(f"{tcfg.algo!r} is not an online algorithm")
    if nets is None:
        nets = build_agent_nets(tcfg.algo, env_cfg, tcfg.hidden, derive_rng(tcfg.seed, "init"))
    learner = Learner(nets, tcfg)
    buffer = ReplayBuffer(tcfg.buffer_capacity, env_cfg.num_aps, env_cfg.obs_dim)
    batch_rng = derive_rng(tcfg.seed, "batches")
    act_rng = derive_rng(tcfg.seed, "act")
    curves = []
    for ep in range(tcfg.episodes):
        env = env_cls(env_cfg, derive_rng(tcfg.seed, "online-env", ep))
        obs = env.reset()
        eps = epsilon_at(tcfg, ep) if tcfg.algo == "dqn-c" else 0.0
        done, t = False, 0
        while not done:
            a = act(nets, obs, "sample", act_rng, eps)
            out = env.step(a)
            buffer.add(obs, a, out.reward, out.observations, out.done, ep, t)
            obs, done, t = out.observations, out.done, t + 1
        sums = np.zeros(3)
        n = 0
        if len(buffer) >= tcfg.batch_size:
            for _ in range(tcfg.online_grad_steps):
                sums += learner.step(buffer.sample(tcfg.batch_size, batch_rng), conservative=False)
                n += 1
        curves.append(_eval_row(nets, env_cfg, tcfg, ep, *(sums / max(n, 1))))
        if progress is not None:
            progress(curves[-1])
    return TrainResult(nets, curves, buffer, learner.steps)
