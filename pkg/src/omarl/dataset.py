"""Offline transition datasets: collection, persistence, mixing, subsampling.

On disk a dataset is UTF-8 text.  The first line is a JSON header
(:class:`DatasetMeta`) and every following line is one JSON transition
record.  JSON floats are written with ``repr`` so reals round-trip exactly,
and keys are sorted so equal datasets produce equal bytes.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .env import NetConfig
from .errors import DatasetIOError, IncompatibleConfigError
from .rollout import run_episode
from .seeding import derive_rng

FORMAT_VERSION = 1
KIND = "omarl.dataset"


@dataclass
class TransitionRecord:
    episode_id: int
    t: int
    observations: np.ndarray  # (I, 2N)
    joint_action: np.ndarray  # (I,)
    reward: float
    next_observations: np.ndarray
    done: bool
    behavior_tag: str

    def to_json(self):
        return json.dumps({
            "episode_id": int(self.episode_id),
            "t": int(self.t),
            "obs": np.asarray(self.observations, dtype=float).tolist(),
            "action": [int(a) for a in self.joint_action],
            "reward": float(self.reward),
            "next_obs": np.asarray(self.next_observations, dtype=float).tolist(),
            "done": bool(self.done),
            "tag": self.behavior_tag,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line):
        d = json.loads(line)
        return cls(d["episode_id"], d["t"], np.array(d["obs"], dtype=float),
                   np.array(d["action"], dtype=int), float(d["reward"]),
                   np.array(d["next_obs"], dtype=float), bool(d["done"]), d["tag"])


@dataclass
class DatasetMeta:
    config_hash: str
    net_config: dict
    behavior: str
    record_count: int
    creation_seed: int | None = None
    format_version: int = FORMAT_VERSION

    def to_json(self):
        d = asdict(self)
        d["kind"] = KIND
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line):
        d = json.loads(line)
        if d.pop("kind", None) != KIND:
            raise DatasetIOError("not a dataset file (bad header)")
        if d.get("format_version") != FORMAT_VERSION:
            raise DatasetIOError(f"unsupported dataset format_version {d.get('format_version')}")
        return cls(**d)

    @property
    def cfg(self):
        return NetConfig(**self.net_config)


@dataclass
class Batch:
    obs: np.ndarray  # (B, I, D)
    actions: np.ndarray  # (B, I)
    rewards: np.ndarray  # (B,)
    next_obs: np.ndarray
    done: np.ndarray  # (B,) bool

    def __len__(self):
        return self.rewards.shape[0]


@dataclass
class Dataset:
    meta: DatasetMeta
    episode_id: np.ndarray
    t: np.ndarray
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    done: np.ndarray
    tags: np.ndarray = field(default=None)

    def __len__(self):
        return int(self.rewards.shape[0])

    @property
    def cfg(self):
        return self.meta.cfg

    def record(self, k):
        return TransitionRecord(int(self.episode_id[k]), int(self.t[k]), self.obs[k], self.actions[k],
                                float(self.rewards[k]), self.next_obs[k], bool(self.done[k]), str(self.tags[k]))

    def records(self):
        for k in range(len(self)):
            yield self.record(k)

    def take(self, idx, behavior=None, seed=None):
        idx = np.asarray(idx, dtype=int)
        meta = DatasetMeta(self.meta.config_hash, dict(self.meta.net_config),
                           behavior or self.meta.behavior, int(idx.size),
                           self.meta.creation_seed if seed is None else seed)
        return Dataset(meta, self.episode_id[idx], self.t[idx], self.obs[idx], self.actions[idx],
                       self.rewards[idx], self.next_obs[idx], self.done[idx], self.tags[idx])

    def batch(self, idx):
        return Batch(self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.done[idx])

    def sample_batch(self, batch_size, rng):
        """Uniform batch, without replacement inside the batch."""
        n = len(self)
        idx = rng.choice(n, size=min(batch_size, n), replace=False)
        return self.batch(idx)

    def to_text(self):
        lines = [self.meta.to_json()]
        lines += [rec.to_json() for rec in self.records()]
        return "\n".join(lines) + "\n"

    def save(self, path):
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(self.to_text())
        except OSError as exc:
            raise DatasetIOError(f"cannot write dataset {path}: {exc}") from exc
        return path

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                header = fh.readline()
                if not header:
                    raise DatasetIOError(f"empty dataset file {path}")
                meta = DatasetMeta.from_json(header)
                recs = [TransitionRecord.from_json(line) for line in fh if line.strip()]
        except OSError as exc:
            raise DatasetIOError(f"cannot read dataset {path}: {exc}") from exc
        except (ValueError, KeyError, TypeError) as exc:
            raise DatasetIOError(f"malformed dataset {path}: {exc}") from exc
        if len(recs) != meta.record_count:
            raise DatasetIOError(f"header claims {meta.record_count} records, body has {len(recs)}")
        return cls.from_records(meta, recs)

    @classmethod
    def from_records(cls, meta, recs):
        cfg = meta.cfg
        if not recs:
            empty_obs = np.empty((0, cfg.num_aps, cfg.obs_dim))
            return cls(meta, np.empty(0, int), np.empty(0, int), empty_obs, np.empty((0, cfg.num_aps), int),
                       np.empty(0), empty_obs.copy(), np.empty(0, bool), np.empty(0, dtype=object))
        return cls(
            meta,
            np.array([r.episode_id for r in recs], dtype=int),
            np.array([r.t for r in recs], dtype=int),
            np.stack([r.observations for r in recs]),
            np.stack([r.joint_action for r in recs]).astype(int),
            np.array([r.reward for r in recs], dtype=float),
            np.stack([r.next_observations for r in recs]),
            np.array([r.done for r in recs], dtype=bool),
            np.array([r.behavior_tag for r in recs], dtype=object),
        )


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _policy_tag(policy):
    return str(getattr(policy, "name", None) or getattr(policy, "kind", None) or type(policy).__name__)


def collect(env_cfg: NetConfig, policy, episodes, seed=0, path=None, behavior=None):
    """Roll out ``policy`` for ``episodes`` full episodes, one record per step.

    Episode ``e`` uses streams derived from ``(seed, e)``, so the output is a
    pure function of its arguments.
    """
    tag = behavior or _policy_tag(policy)
    T = env_cfg.episode_len
    ep_ids, ts, obs, acts, rews, nxt, dones = [], [], [], [], [], [], []
    for e in range(episodes):
        trace = run_episode(policy, env_cfg, derive_rng(seed, "collect-env", e),
                            derive_rng(seed, "collect-policy", e), record=True)
        ep_ids.append(np.full(T, e))
        ts.append(np.arange(T))
        obs.append(trace.observations[:-1])
        nxt.append(trace.observations[1:])
        acts.append(trace.actions)
        rews.append(trace.rewards)
        d = np.zeros(T, dtype=bool)
        d[-1] = True
        dones.append(d)
    n = episodes * T
    meta = DatasetMeta(env_cfg.config_hash(), env_cfg.to_dict(), tag, n, seed)
    if episodes == 0:
        ds = Dataset.from_records(meta, [])
    else:
        ds = Dataset(meta, np.concatenate(ep_ids), np.concatenate(ts), np.concatenate(obs),
                     np.concatenate(acts).astype(int), np.concatenate(rews), np.concatenate(nxt),
                     np.concatenate(dones), np.array([tag] * n, dtype=object))
    if path is not None:
        ds.save(path)
    return ds


def _largest_remainder(proportions, size):
    raw = np.asarray(proportions, dtype=float) * size
    counts = np.floor(raw).astype(int)
    short = size - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def mix(datasets, proportions, size=None, seed=0, path=None):
    """Draw ``proportions`` of ``size`` records from each dataset and shuffle."""
    if len(datasets) != len(proportions) or not datasets:
        raise ValueError("need one proportion per dataset")
    p = np.asarray(proportions, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"proportions must be non-negative and sum to 1, got {p.tolist()}")
    ref = datasets[0].meta
    for ds in datasets[1:]:
        if ds.meta.config_hash != ref.config_hash:
            raise IncompatibleConfigError("datasets were generated under different network configs")
    size = len(datasets[0]) if size is None else int(size)
    counts = _largest_remainder(p, size)
    rng = derive_rng(seed, "mix")
    parts = []
    for ds, c in zip(datasets, counts):
        if c > len(ds):
            raise ValueError(f"requested {c} records from a dataset of {len(ds)}")
        parts.append(ds.take(rng.choice(len(ds), size=c, replace=False)))
    merged = _concat(parts)
    order = rng.permutation(len(merged))
    desc = "mix(" + ",".join(f"{ds.meta.behavior}:{q:g}" for ds, q in zip(datasets, p)) + ")"
    out = merged.take(order, behavior=desc, seed=seed)
    if path is not None:
        out.save(path)
    return out


def _concat(parts):
    meta = parts[0].meta
    cat = lambda name: np.concatenate([getattr(d, name) for d in parts])
    n = sum(len(d) for d in parts)
    return Dataset(DatasetMeta(meta.config_hash, dict(meta.net_config), meta.behavior, n, meta.creation_seed),
                   cat("episode_id"), cat("t"), cat("obs"), cat("actions"), cat("rewards"),
                   cat("next_obs"), cat("done"), cat("tags"))


def subsample(dataset, size, seed=0, path=None):
    """Uniform sample of ``size`` records without replacement."""
    if size > len(dataset):
        raise ValueError(f"subsample size {size} exceeds source size {len(dataset)}")
    idx = derive_rng(seed, "subsample").permutation(len(dataset))[:size]
    out = dataset.take(idx, behavior=f"subsample({dataset.meta.behavior},{size})", seed=seed)
    if path is not None:
        out.save(path)
    return out
