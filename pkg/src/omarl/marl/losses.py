"""Critic and policy losses with hand-derived gradients.

Every critic loss comes in two flavours selected by ``cql_alpha``:

* ``None``  -> the online policy-evaluation loss ``mean(delta^2)``;
* a float   -> the conservative loss ``0.5 * mean(delta^2) + alpha * penalty``
  where the penalty is ``logsumexp(Q(s, .)) - Q(s, a_data)`` averaged over the
  batch (summed over agents in the CTDE scope).

Targets come from the target critics and the current policies and carry no
gradient.  ``log pi`` is floored at ``log(1e-8)`` so near-deterministic
policies keep a finite entropy term.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import log_softmax, logsumexp, softmax

PROB_FLOOR = 1e-8
LOG_FLOOR = float(np.log(PROB_FLOOR))


@dataclass
class CriticLoss:
    loss: float
    grads: list  # one parameter-gradient list per critic
    eval_loss: float
    penalty: float
    targets: np.ndarray
    q_tot: np.ndarray | None = None


def cql_penalty(q_row, a_data):
    """``logsumexp(q_row) - q_row[a_data]``; vectorised over leading axes."""
    q = np.asarray(q_row, dtype=float)
    a = np.asarray(a_data)
    q_data = np.take_along_axis(q, a[..., None], axis=-1)[..., 0] if q.ndim > 1 else q[int(a)]
    return logsumexp(q, axis=-1) - q_data


def soft_value(logits, q, entropy_coeff):
    """``sum_a pi(a) (q(a) - c log pi(a))`` row-wise, exact over the action set."""
    logp = log_softmax(logits)
    p = np.exp(logp)
    return np.sum(p * (q - entropy_coeff * np.maximum(logp, LOG_FLOOR)), axis=-1)


def _not_done(batch):
    return 1.0 - np.asarray(batch.done, dtype=float)


def _regress(critic, x, a, y, cql_alpha):
    q, cache = critic.forward_cached(x)
    B = a.shape[0]
    rows = np.arange(B)
    q_sa = q[rows, a]
    delta = y - q_sa
    ev = float(np.mean(delta ** 2))
    pen = logsumexp(q, axis=-1) - q_sa
    if cql_alpha is None:
        loss = ev
        g = np.zeros_like(q)
        g[rows, a] = -2.0 * delta / B
    else:
        loss = 0.5 * ev + cql_alpha * float(pen.mean())
        g = (cql_alpha / B) * softmax(q)
        g[rows, a] -= (delta + cql_alpha) / B
    grads, _ = critic.backward(cache, g, need_input_grad=False)
    return loss, grads, ev, float(pen.mean())


def _flat(obs):
    return obs.reshape(obs.shape[0], -1)


def sac_eval_loss_centralized(nets, batch, beta, entropy_coeff=1.0, cql_alpha=None, reward_scale=1.0):
    """Joint-critic loss; the next-state expectation runs over every joint action."""
    s, s2 = _flat(batch.obs), _flat(batch.next_obs)
    a = nets.codec.encode(batch.actions)
    v_next = soft_value(nets.policies[0].forward(s2), nets.target_critics[0].forward(s2), entropy_coeff)
    y = reward_scale * batch.rewards + beta * _not_done(batch) * v_next
    loss, grads, ev, pen = _regress(nets.critics[0], s, a, y, cql_alpha)
    return CriticLoss(loss, [grads], ev, pen, y)


def sac_eval_loss_independent(nets, batch, beta, entropy_coeff=1.0, cql_alpha=None, reward_scale=1.0):
    """Per-agent losses on local observations; the reported loss is their sum."""
    total = ev_total = pen_total = 0.0
    all_grads, targets = [], []
    for i in range(nets.num_agents):
        o2 = batch.next_obs[:, i]
        v_next = soft_value(nets.policies[i].forward(o2), nets.target_critics[i].forward(o2), entropy_coeff)
        y = reward_scale * batch.rewards + beta * _not_done(batch) * v_next
        loss, grads, ev, pen = _regress(nets.critics[i], batch.obs[:, i], batch.actions[:, i], y, cql_alpha)
        total += loss
        ev_total += ev
        pen_total += pen
        all_grads.append(grads)
        targets.append(y)
    return CriticLoss(total, all_grads, ev_total, pen_total, np.stack(targets, axis=1))


def ctde_eval_loss(nets, batch, beta, entropy_coeff=1.0, cql_alpha=None, reward_scale=1.0):
    """Additive value decomposition: ``Q_tot = sum_i Q_i(o_i, a_i)``.

    One shared residual drives every agent critic; the conservative penalty
    is summed over agents.
    """
    B, I = batch.actions.shape
    rows = np.arange(B)
    nd = _not_done(batch)
    v_next = np.zeros(B)
    for i in range(I):
        o2 = batch.next_obs[:, i]
        v_next += soft_value(nets.policies[i].forward(o2), nets.target_critics[i].forward(o2), entropy_coeff)
    y = reward_scale * batch.rewards + beta * nd * v_next
    qs, caches, q_data = [], [], []
    for i in range(I):
        q, cache = nets.critics[i].forward_cached(batch.obs[:, i])
        qs.append(q)
        caches.append(cache)
        q_data.append(q[rows, batch.actions[:, i]])
    q_tot = np.sum(q_data, axis=0)
    delta = y - q_tot
    ev = float(np.mean(delta ** 2))
    pens = [logsumexp(q, axis=-1) - qd for q, qd in zip(qs, q_data)]
    penalty = float(sum(p.mean() for p in pens))
    loss = ev if cql_alpha is None else 0.5 * ev + cql_alpha * penalty
    all_grads = []
    for i in range(I):
        a_i = batch.actions[:, i]
        if cql_alpha is None:
            g = np.zeros_like(qs[i])
            g[rows, a_i] = -2.0 * delta / B
        else:
            g = (cql_alpha / B) * softmax(qs[i])
            g[rows, a_i] -= (delta + cql_alpha) / B
        grads, _ = nets.critics[i].backward(caches[i], g, need_input_grad=False)
        all_grads.append(grads)
    return CriticLoss(loss, all_grads, ev, penalty, y, q_tot)


def dqn_loss(nets, batch, beta, reward_scale=1.0):
    """Joint-critic TD loss with a max over next joint actions."""
    s, s2 = _flat(batch.obs), _flat(batch.next_obs)
    a = nets.codec.encode(batch.actions)
    y = reward_scale * batch.rewards + beta * _not_done(batch) * nets.target_critics[0].forward(s2).max(axis=-1)
    loss, grads, ev, pen = _regress(nets.critics[0], s, a, y, None)
    return CriticLoss(loss, [grads], ev, pen, y)


def sac_improve_loss(policy, critic, x, entropy_coeff=1.0):
    """``mean_b sum_a pi(a|x) (c log pi(a|x) - Q(x, a))`` and its policy gradient.

    The critic is only read.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    B = x.shape[0]
    logits, cache = policy.forward_cached(x)
    q = critic.forward(x)
    logp = log_softmax(logits)
    p = np.exp(logp)
    live = logp > LOG_FLOOR
    u = entropy_coeff * np.where(live, logp, LOG_FLOOR) - q
    per = np.sum(p * u, axis=-1)
    g = p * (u - per[:, None]) + entropy_coeff * p * (live - np.sum(p * live, axis=-1, keepdims=True))
    grads, _ = policy.backward(cache, g / B, need_input_grad=False)
    return float(per.mean()), grads


def improve_losses(nets, batch, entropy_coeff=1.0):
    """Policy-improvement loss and gradients for every policy in the bundle."""
    if nets.centralized:
        return [sac_improve_loss(nets.policies[0], nets.critics[0], _flat(batch.obs), entropy_coeff)]
    return [sac_improve_loss(nets.policies[i], nets.critics[i], batch.obs[:, i], entropy_coeff)
            for i in range(nets.num_agents)]


def critic_loss(nets, batch, beta, entropy_coeff=1.0, cql_alpha=None, reward_scale=1.0):
    """Dispatch to the critic loss of the bundle's algorithm."""
    if nets.algo == "dqn-c":
        return dqn_loss(nets, batch, beta, reward_scale)
    fn = {"centralized": sac_eval_loss_centralized,
          "independent": sac_eval_loss_independent,
          "ctde": ctde_eval_loss}[nets.scope]
    return fn(nets, batch, beta, entropy_coeff, cql_alpha, reward_scale)
