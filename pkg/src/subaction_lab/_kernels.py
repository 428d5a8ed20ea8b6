"""Compiled inner loops for value iteration on a preimage stencil.

The python-level operators in :mod:`discounted` and :mod:`gibbs` are the
reference implementations; these loops repeat exactly the same arithmetic
many times without returning to the interpreter.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _pull(values, lo, hi, frac, i, a):
    f = frac[i, a]
    if f == 0.0:
        return values[lo[i, a]]
    return (1.0 - f) * values[lo[i, a]] + f * values[hi[i, a]]


@njit(cache=True)
def _max_step(src, dst, lam, lo, hi, frac, weight):
    n, d = weight.shape
    delta = 0.0
    for i in range(n):
        best = -math.inf
        for a in range(d):
            z = lam * _pull(src, lo, hi, frac, i, a) + weight[i, a]
            if z > best:
                best = z
        dst[i] = best
        diff = abs(best - src[i])
        if diff > delta:
            delta = diff
    return delta


@njit(cache=True)
def _lse_step(src, dst, lam, beta, lo, hi, frac, weight, z):
    n, d = weight.shape
    delta = 0.0
    for i in range(n):
        top = -math.inf
        arg = 0
        for a in range(d):
            z[a] = beta * weight[i, a] + lam * _pull(src, lo, hi, frac, i, a)
            if z[a] > top:
                top = z[a]
                arg = a
        s = 0.0
        for a in range(d):
            if a != arg:
                s += math.exp(z[a] - top)
        val = top + math.log1p(s)
        dst[i] = val
        diff = abs(val - src[i])
        if diff > delta:
            delta = diff
    return delta


@njit(cache=True)
def iterate(kind, start, lam, beta, lo, hi, frac, weight, threshold, window, max_iter):
    """Apply the max (kind 0) or log-sum-exp (kind 1) operator until the
    successive sup-distance is <= threshold.

    Both operators are lam-contractions, so in exact arithmetic the distance
    halves at least every ``window`` >= log 2 / (1 - lam) steps.  When it does
    not, float rounding has taken over and the loop stops early.

    Returns (final values, iterations, last delta, stopped-on-threshold flag).
    """
    cur = start.copy()
    nxt = np.empty_like(cur)
    z = np.empty(weight.shape[1])
    delta = math.inf
    best = math.inf
    since = 0
    for it in range(1, max_iter + 1):
        if kind == 0:
            delta = _max_step(cur, nxt, lam, lo, hi, frac, weight)
        else:
            delta = _lse_step(cur, nxt, lam, beta, lo, hi, frac, weight, z)
        cur, nxt = nxt, cur
        if delta <= threshold:
            return cur, it, delta, True
        if delta < 0.5 * best:
            best = delta
            since = 0
        else:
            since += 1
            if since >= window:
                return cur, it, delta, False
    return cur, max_iter, delta, False
