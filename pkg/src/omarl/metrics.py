"""Sum rate, 5-percentile rate, Rscore and the evaluation harness."""
from __future__ import annotations

import copy
import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .env import NetConfig
from .errors import TooFewSamplesError
from .rollout import run_episode
from .seeding import derive_rng

MIN_PERCENTILE_SAMPLES = 20
CSV_FIELDS = ("run_id", "episode", "Rsum", "Rperc5_running", "Rscore_running")


def avg_user_rates(episode_rates):
    """Per-user time average of a (T, J) rate matrix."""
    return np.asarray(episode_rates, dtype=float).mean(axis=0)


def sum_rate(user_rates):
    user_rates = np.asarray(user_rates, dtype=float)
    if user_rates.size < 1:
        raise ValueError("sum rate needs at least one user")
    return float(user_rates.sum())


def percentile5(values):
    """Largest ``C`` such that at least 95% of ``values`` are ``>= C``.

    For ``n`` sorted values the answer sits at zero-based index ``n // 20``:
    every value at or above that position is met by ``n - n // 20 >= 0.95 n``
    samples, and the next distinct value is not.
    """
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size < MIN_PERCENTILE_SAMPLES:
        raise TooFewSamplesError(f"need at least {MIN_PERCENTILE_SAMPLES} values, got {v.size}")
    return float(v[v.size // 20])


def rscore(rsum, rperc5, mu1, mu2=3.0):
    if mu1 < 0 or mu2 < 0:
        raise ValueError("score weights must be non-negative")
    return mu1 * rsum + mu2 * rperc5


def default_mu1(cfg: NetConfig):
    return 1.0 / cfg.num_ues


def moving_average(values, window=None):
    """Trailing moving average; ``window`` of None or 1 returns the input."""
    x = np.asarray(values, dtype=float)
    if not window or window <= 1:
        return x
    c = np.cumsum(np.insert(x, 0, 0.0))
    out = np.empty_like(x)
    for k in range(x.size):
        lo = max(0, k + 1 - window)
        out[k] = (c[k + 1] - c[lo]) / (k + 1 - lo)
    return out


@dataclass
class EvalSummary:
    episodes: int
    user_rates: np.ndarray  # (episodes, J) per-episode user averages
    rsum_per_episode: np.ndarray
    rsum_mean: float
    rsum_std: float
    rperc5: float
    rscore: float
    mu1: float
    mu2: float
    run_id: str = ""
    rows: list = field(default_factory=list)

    @property
    def pooled_rates(self):
        return self.user_rates.ravel()

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for row in self.rows:
            w.writerow([row[k] for k in CSV_FIELDS])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self):
        return {
            "run_id": self.run_id,
            "episodes": self.episodes,
            "Rsum_mean": self.rsum_mean,
            "Rsum_std": self.rsum_std,
            "Rperc5": self.rperc5,
            "Rscore": self.rscore,
            "mu1": self.mu1,
            "mu2": self.mu2,
        }

    def to_text(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"


def summarize(user_rates, mu1, mu2=3.0, run_id=""):
    """Build an :class:`EvalSummary` from per-episode user averages (E, J)."""
    user_rates = np.atleast_2d(np.asarray(user_rates, dtype=float))
    rsums = user_rates.sum(axis=1)
    rows = []
    for e in range(user_rates.shape[0]):
        pooled = user_rates[: e + 1].ravel()
        running_sum = float(rsums[: e + 1].mean())
        if pooled.size >= MIN_PERCENTILE_SAMPLES:
            p5 = percentile5(pooled)
            score = rscore(running_sum, p5, mu1, mu2)
        else:
            p5 = score = float("nan")
        rows.append({"run_id": run_id, "episode": e, "Rsum": float(rsums[e]),
                     "Rperc5_running": p5, "Rscore_running": score})
    p5 = percentile5(user_rates.ravel())
    mean = float(rsums.mean())
    return EvalSummary(
        episodes=user_rates.shape[0],
        user_rates=user_rates,
        rsum_per_episode=rsums,
        rsum_mean=mean,
        rsum_std=float(rsums.std()),
        rperc5=p5,
        rscore=rscore(mean, p5, mu1, mu2),
        mu1=mu1,
        mu2=mu2,
        run_id=run_id,
        rows=rows,
    )


def default_workers():
    try:
        return max(1, int(os.environ.get("RRM_THREADS", "1")))
    except ValueError:
        return 1


def episode_user_rates(policy, env_cfg: NetConfig, seed, episode):
    """Per-user average rates of one seeded evaluation episode.

    The environment stream depends only on ``(seed, episode)`` so every policy
    evaluated with the same seed sees the same topologies, fading and mobility.
    """
    trace = run_episode(policy, env_cfg, derive_rng(seed, "eval-env", episode),
                        derive_rng(seed, "eval-policy", episode))
    return avg_user_rates(trace.rates)


def evaluate(policy, env_cfg: NetConfig, episodes, seed=0, mu1=None, mu2=3.0, run_id="", workers=None):
    """Evaluate ``policy`` over ``episodes`` seeded episodes.

    Per-user averages are pooled across episodes for the percentile; the sum
    rate is averaged per episode.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    mu1 = default_mu1(env_cfg) if mu1 is None else mu1
    workers = default_workers() if workers is None else workers

    def one(e):
        return episode_user_rates(copy.deepcopy(policy), env_cfg, seed, e)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_episode = list(pool.map(one, range(episodes)))
    else:
        per_episode = [one(e) for e in range(episodes)]
    return summarize(np.vstack(per_episode), mu1, mu2, run_id)
