"""Independent reference implementations used to check the package.

Everything here is deliberately written against plain numpy / itertools,
separate from the library code paths it validates: finite differences for
gradients, a hand-rolled LSTM cell, exhaustive enumeration over monotone
alignments, exact sign-flip enumeration for the permutation test, and a
distance-only Wagner-Fischer for edit scripts.
"""
from __future__ import annotations

import itertools

import numpy as np


def finite_difference(loss_fn, params: dict[str, np.ndarray], h: float = 1e-5):
    """Central differences of loss_fn() w.r.t. every entry of every array.

    loss_fn takes no arguments and must read the arrays in ``params`` (they
    are perturbed in place and restored).
    """
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = loss_fn()
            flat[i] = orig - h
            f_minus = loss_fn()
            flat[i] = orig
            gflat[i] = (f_plus - f_minus) / (2.0 * h)
        grads[name] = g
    return grads


def max_rel_err(analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray],
                min_magnitude: float = 0.0):
    """Worst relative error; optionally skip coordinates whose reference
    value sits below the finite-difference noise floor."""
    worst = 0.0
    for name in numeric:
        err = np.abs(analytic[name] - numeric[name]) / (np.abs(numeric[name]) + 1e-12)
        if min_magnitude > 0.0:
            err = err[np.abs(numeric[name]) >= min_magnitude]
            if err.size == 0:
                continue
        worst = max(worst, float(err.max()))
    return worst


def directional_fd_check(loss_fn, params: dict[str, np.ndarray],
                         grads: dict[str, np.ndarray], rng: np.random.Generator,
                         n_directions: int = 8, h: float = 1e-5) -> float:
    """Worst relative error of grad . v against a central difference along
    random unit directions v over all parameters jointly.

    Checks every coordinate at once while keeping the compared quantities
    well above the cancellation noise floor that per-coordinate differences
    hit wherever a single true gradient entry is near zero.
    """
    originals = {k: p.copy() for k, p in params.items()}
    worst = 0.0
    for _ in range(n_directions):
        v = {k: rng.normal(size=p.shape) for k, p in params.items()}
        norm = np.sqrt(sum(float((d * d).sum()) for d in v.values()))
        v = {k: d / norm for k, d in v.items()}
        analytic = sum(float((grads[k] * v[k]).sum()) for k in params)
        for k, p in params.items():
            p[...] = originals[k] + h * v[k]
        f_plus = loss_fn()
        for k, p in params.items():
            p[...] = originals[k] - h * v[k]
        f_minus = loss_fn()
        for k, p in params.items():
            p[...] = originals[k]
        fd = (f_plus - f_minus) / (2.0 * h)
        worst = max(worst, abs(analytic - fd) / (abs(fd) + 1e-12))
    return worst


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_cell_reference(p, x, h, c):
    """One LSTM cell update written directly from the gate equations."""
    z = np.concatenate([x, h])
    i = _sigmoid(p.w_in @ z + p.b_in)
    f = _sigmoid(p.w_forget @ z + p.b_forget)
    o = _sigmoid(p.w_out @ z + p.b_out)
    cand = np.tanh(p.w_cand @ z + p.b_cand)
    c_new = f * c + i * cand
    h_new = o * np.tanh(c_new)
    return h_new, c_new


def monotone_alignments(n_positions: int, n_steps: int):
    """All non-decreasing index vectors of length n_steps over the positions."""
    return itertools.combinations_with_replacement(range(n_positions), n_steps)


def enumerate_alignment_marginal(emissions: np.ndarray, scores: np.ndarray,
                                 targets: list[int]) -> float:
    """Brute-force log p(targets) by summing over every monotone alignment.

    emissions: (J, L, V) log emission tables per step; scores: (J, L) raw
    transition attention scores per step (renormalized over the reachable
    suffix here, independently of the library DP); targets: J symbol ids.
    The step-1 transition renormalizes over all positions (virtual start 0).
    """
    J, L, _ = emissions.shape
    assert len(targets) == J
    log_weights = []
    for a in monotone_alignments(L, J):
        total = 0.0
        prev = 0
        for j in range(J):
            s = scores[j]
            denom = np.log(np.sum(np.exp(s[prev:] - np.max(s[prev:])))) + np.max(s[prev:])
            total += s[a[j]] - denom
            total += emissions[j, a[j], targets[j]]
            prev = a[j]
        log_weights.append(total)
    m = max(log_weights)
    return float(m + np.log(sum(np.exp(lw - m) for lw in log_weights)))


def exact_sign_flip_pvalue(a, b) -> float:
    """Two-sided paired permutation p by enumerating all 2^n sign flips."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    n = len(d)
    observed = abs(d.mean())
    count = 0
    for signs in itertools.product((1.0, -1.0), repeat=n):
        if abs((d * np.array(signs)).mean()) >= observed:
            count += 1
    return count / (2 ** n)


def levenshtein_distance(a: str, b: str) -> int:
    """Distance-only Wagner-Fischer, kept separate from the script backtrace."""
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[len(b)]
