"""Sequential inner loops: forward filter, backward smoother, simulator.

All kernels take precomputed per-day tables (see ``emission.build_day_tables``
and ``states.log_transition_tables``) and plain float64/int64 arrays, so they
compile under numba and run unchanged in pure python. Randomness is consumed
from caller-supplied uniform and normal arrays, which keeps draws identical
across the compiled and interpreted paths.

Augmented-state conventions: messages live on the 11 admissible consecutive
state pairs in the module-level order of ``states.AUGMENTED_PAIRS``; -inf
marks structurally impossible entries.
"""

from __future__ import annotations

import math

import numpy as np

from .accel import maybe_njit
from .states import PAIR_CUR, PAIR_PREV

LOG_2PI = math.log(2.0 * math.pi)

# 0-based pair coordinate tables, fixed at import
_PAIR_A = (PAIR_PREV - 1).astype(np.int64)
_PAIR_B = (PAIR_CUR - 1).astype(np.int64)
NEG_INF = -np.inf


def _forward_impl(y, loglam, logl0, mu, phi, tau1, tau2, ltau1, ltau2,
                  psi, v_inv, v_logdet, pair_a, pair_b, msgs, lognorm):
    """Forward pass; returns the observed-data log likelihood.

    ``msgs[t]`` holds the per-day normalised log joint over the 11 pairs and
    ``lognorm[t]`` the day's log normalising increment, so that the joint
    filtered log probability is ``msgs[t] + lognorm[:t+1].sum()``.
    """
    T = y.shape[0]
    p00, p01, p11 = psi[0, 0], psi[0, 1], psi[1, 1]

    cur = np.empty(11)
    for i in range(11):
        a = pair_a[i]
        b = pair_b[i]
        la = logl0[a] + loglam[0, a, b]
        if la == NEG_INF:
            cur[i] = NEG_INF
            continue
        e0 = y[0, 0] - mu[0, b, 0]
        e1 = y[0, 1] - mu[0, b, 1]
        quad = (v_inv[b, 0, 0] * e0 * e0 + 2.0 * v_inv[b, 0, 1] * e0 * e1
                + v_inv[b, 1, 1] * e1 * e1)
        cur[i] = la - LOG_2PI - 0.5 * v_logdet[b] - 0.5 * quad

    loglik = 0.0
    mx = cur[0]
    for i in range(1, 11):
        if cur[i] > mx:
            mx = cur[i]
    if mx == NEG_INF:
        return NEG_INF
    acc = 0.0
    for i in range(11):
        if cur[i] > NEG_INF:
            acc += math.exp(cur[i] - mx)
    step = mx + math.log(acc)
    for i in range(11):
        msgs[0, i] = cur[i] - step
    lognorm[0] = step
    loglik += step

    inmass = np.empty(4)
    nxt = np.empty(11)
    for t in range(1, T):
        for b in range(4):
            inmass[b] = NEG_INF
        for i in range(11):
            b = pair_b[i]
            v = msgs[t - 1, i]
            if v > inmass[b]:
                inmass[b] = v
        for b in range(4):
            if inmass[b] == NEG_INF:
                continue
            s = 0.0
            for i in range(11):
                if pair_b[i] == b and msgs[t - 1, i] > NEG_INF:
                    s += math.exp(msgs[t - 1, i] - inmass[b])
            inmass[b] = inmass[b] + math.log(s)

        yp0 = y[t - 1, 0]
        yp1 = y[t - 1, 1]
        for i in range(11):
            b = pair_a[i]
            c = pair_b[i]
            la = loglam[t, b, c]
            if la == NEG_INF or inmass[b] == NEG_INF:
                nxt[i] = NEG_INF
                continue
            d0 = yp0 - mu[t - 1, b, 0]
            d1 = yp1 - mu[t - 1, b, 1]
            e0 = y[t, 0] - mu[t, c, 0] - (p00 * d0 + p01 * d1)
            e1 = y[t, 1] - mu[t, c, 1] - (p01 * d0 + p11 * d1)
            u2 = e1 - phi[t, c] * e0
            ll = (-LOG_2PI + 0.5 * (ltau1[t, c] + ltau2[t, c])
                  - 0.5 * (tau1[t, c] * e0 * e0 + tau2[t, c] * u2 * u2))
            nxt[i] = inmass[b] + la + ll

        mx = nxt[0]
        for i in range(1, 11):
            if nxt[i] > mx:
                mx = nxt[i]
        if mx == NEG_INF:
            return NEG_INF
        acc = 0.0
        for i in range(11):
            if nxt[i] > NEG_INF:
                acc += math.exp(nxt[i] - mx)
        step = mx + math.log(acc)
        for i in range(11):
            msgs[t, i] = nxt[i] - step
        lognorm[t] = step
        loglik += step
    return loglik


def _backward_impl(y, loglam, msgs, mu, phi, tau1, tau2, ltau1, ltau2,
                   psi, pair_a, pair_b, smoothed):
    """Backward pass over filtered messages.

    Because the future depends on a pair only through its second coordinate,
    the backward message is a 4-vector. ``smoothed`` is (T+1, 4) and row 0 is
    the anchor-day marginal recovered from the first pair distribution.
    """
    T = y.shape[0]
    p00, p01, p11 = psi[0, 0], psi[0, 1], psi[1, 1]

    beta = np.zeros(4)
    beta_next = np.empty(4)
    g = np.empty(11)
    for t in range(T - 1, -1, -1):
        # smoothed pair distribution for day t+1 (array row t)
        mx = NEG_INF
        for i in range(11):
            val = msgs[t, i] + beta[pair_b[i]]
            g[i] = val
            if val > mx:
                mx = val
        acc = 0.0
        for i in range(11):
            if g[i] > NEG_INF:
                g[i] = math.exp(g[i] - mx)
                acc += g[i]
            else:
                g[i] = 0.0
        for c in range(4):
            smoothed[t + 1, c] = 0.0
        for i in range(11):
            smoothed[t + 1, pair_b[i]] += g[i] / acc
        if t == 0:
            for c in range(4):
                smoothed[0, c] = 0.0
            for i in range(11):
                smoothed[0, pair_a[i]] += g[i] / acc
            break

        # backward message for day t (transitions from day t into day t+1)
        yp0 = y[t - 1, 0]
        yp1 = y[t - 1, 1]
        vals = np.empty(4)
        for b in range(4):
            mxb = NEG_INF
            d0 = yp0 - mu[t - 1, b, 0]
            d1 = yp1 - mu[t - 1, b, 1]
            for c in range(4):
                la = loglam[t, b, c]
                if la == NEG_INF or beta[c] == NEG_INF:
                    vals[c] = NEG_INF
                    continue
                e0 = y[t, 0] - mu[t, c, 0] - (p00 * d0 + p01 * d1)
                e1 = y[t, 1] - mu[t, c, 1] - (p01 * d0 + p11 * d1)
                u2 = e1 - phi[t, c] * e0
                ll = (-LOG_2PI + 0.5 * (ltau1[t, c] + ltau2[t, c])
                      - 0.5 * (tau1[t, c] * e0 * e0 + tau2[t, c] * u2 * u2))
                vals[c] = la + ll + beta[c]
                if vals[c] > mxb:
                    mxb = vals[c]
            if mxb == NEG_INF:
                beta_next[b] = NEG_INF
                continue
            accb = 0.0
            for c in range(4):
                if vals[c] > NEG_INF:
                    accb += math.exp(vals[c] - mxb)
            beta_next[b] = mxb + math.log(accb)
        for b in range(4):
            beta[b] = beta_next[b]
    return 0


def _simulate_impl(lam, l0, mu, phi, tau1, tau2, psi, v_chol,
                   u, z, has_init, init_state, init_y, init_mu,
                   states, y):
    """Draw a state path and demand series.

    With ``has_init`` false the path starts from the anchor distribution and
    the first observation from its stationary law; otherwise ``init_state``,
    ``init_y`` and ``init_mu`` describe the day before the first output day
    and the recursion continues from there (forecasting).
    """
    T = y.shape[0]
    p00, p01, p11 = psi[0, 0], psi[0, 1], psi[1, 1]

    if has_init:
        states[0] = init_state
    else:
        c = 0.0
        s0 = 3
        for k in range(4):
            c += l0[k]
            if u[0] < c:
                s0 = k
                break
        states[0] = s0

    for t in range(T):
        prev = states[t]
        c = 0.0
        st = 3
        for k in range(4):
            c += lam[t, prev, k]
            if u[t + 1] < c:
                st = k
                break
        states[t + 1] = st

        if t == 0 and not has_init:
            y[0, 0] = mu[0, st, 0] + v_chol[st, 0, 0] * z[0, 0]
            y[0, 1] = mu[0, st, 1] + v_chol[st, 1, 0] * z[0, 0] + v_chol[st, 1, 1] * z[0, 1]
            continue
        if t == 0:
            d0 = init_y[0] - init_mu[0]
            d1 = init_y[1] - init_mu[1]
        else:
            d0 = y[t - 1, 0] - mu[t - 1, states[t], 0]
            d1 = y[t - 1, 1] - mu[t - 1, states[t], 1]
        e0 = z[t, 0] / math.sqrt(tau1[t, st])
        e1 = phi[t, st] * e0 + z[t, 1] / math.sqrt(tau2[t, st])
        y[t, 0] = mu[t, st, 0] + (p00 * d0 + p01 * d1) + e0
        y[t, 1] = mu[t, st, 1] + (p01 * d0 + p11 * d1) + e1
    return 0


forward_kernel = maybe_njit(_forward_impl)
backward_kernel = maybe_njit(_backward_impl)
simulate_kernel = maybe_njit(_simulate_impl)
