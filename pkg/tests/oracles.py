"""Independent reference implementations used only to check results.

These deliberately avoid the code paths they verify: the l1 problem is
solved by exhaustive vertex enumeration, network outputs by a plain
interpreter over the layer list, and distances by closed-form geometry.
"""

import itertools
import math

import numpy as np


def l1_min_on_hyperplane_box(w, c, lo, hi, tol=1e-9):
    """Exact minimum of ||r||_1 subject to w . r = c and lo <= r <= hi.

    Enumerates every candidate optimum: within each sign-orthant the
    objective is linear, so an optimum sits at a point where all but one
    coordinate is pinned to {lo_j, 0, hi_j} and the last is forced by the
    equality. Returns None when the constraint set is empty.
    """
    w = np.asarray(w, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = w.size

    reach_lo = np.minimum(w * lo, w * hi).sum()
    reach_hi = np.maximum(w * lo, w * hi).sum()
    if not (reach_lo - tol <= c <= reach_hi + tol):
        return None

    best = None
    for d in range(n):
        if w[d] == 0.0:
            continue
        others = [j for j in range(n) if j != d]
        grids = [np.array([lo[j], 0.0, hi[j]]) for j in others]
        combos = np.array(list(itertools.product(*grids))) if others else np.zeros((1, 0))
        rd = (c - combos @ w[others]) / w[d]
        ok = (rd >= lo[d] - tol) & (rd <= hi[d] + tol)
        if not ok.any():
            continue
        costs = np.abs(combos[ok]).sum(axis=1) + np.abs(rd[ok])
        v = float(costs.min())
        if best is None or v < best:
            best = v
    return best


def mlp_reference_logits(layers, x):
    """Straight-line evaluation of a layer list with scalar loops."""
    a = [float(v) for v in x]
    for layer in layers:
        out = []
        for row, bias in zip(layer.weights, layer.biases):
            z = math.fsum(float(wv) * av for wv, av in zip(row, a)) + float(bias)
            if layer.activation == "relu":
                z = max(z, 0.0)
            out.append(z)
        a = out
    return np.array(a)


def affine_min_l2_distance(weights, biases, x):
    """Smallest l2 distance from x to any pairwise decision hyperplane of
    an affine classifier, measured against the predicted class."""
    logits = weights @ x + biases
    k = int(np.argmax(logits))
    dists = []
    for j in range(weights.shape[0]):
        if j == k:
            continue
        wj = weights[j] - weights[k]
        nrm = np.linalg.norm(wj)
        if nrm == 0.0:
            continue
        dists.append(abs(logits[j] - logits[k]) / nrm)
    return min(dists)


def affine_min_l1_distance(weights, biases, x):
    """Same, in the l1 sense (dual: divide the gap by max |w_j|)."""
    logits = weights @ x + biases
    k = int(np.argmax(logits))
    dists = []
    for j in range(weights.shape[0]):
        if j == k:
            continue
        wj = weights[j] - weights[k]
        nrm = np.max(np.abs(wj))
        if nrm == 0.0:
            continue
        dists.append(abs(logits[j] - logits[k]) / nrm)
    return min(dists)
