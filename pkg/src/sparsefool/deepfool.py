"""Minimal-perturbation boundary search.

``deepfool`` walks an input to the nearest decision boundary by repeated
linearization: at each step the closest class hyperplane is found and the
iterate is projected onto it. The projection geometry is controlled by the
norm exponent p (p=2 is the classic dense walk; p=1 concentrates each step
on a single coordinate). ``estimate_boundary`` wraps the walk and returns
the boundary point and its normal, optionally pushed past the boundary by
a factor lambda.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .classifiers import Classifier
from .tensor import Tensor


class DegenerateClassifierError(Exception):
    """All candidate classes have a zero gradient difference."""


@dataclass
class DeepFoolConfig:
    max_iter: int = 50
    overshoot_eta: float = 0.02
    p: float = 2.0
    candidate_classes: int | str = "all"  # "all" or top-K count

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.overshoot_eta < 0:
            raise ValueError("overshoot must be nonnegative")


@dataclass
class BoundaryEstimate:
    x_boundary: Tensor
    normal: Tensor
    source_label: int
    adversarial_label: int
    converged: bool
    iterations: int


def _step(w: np.ndarray, gap: float, p: float) -> np.ndarray:
    """Perturbation moving the linearized logit gap to zero with minimal
    lp norm. w is the gradient difference, gap the (negative) logit gap."""
    if p == 1.0:
        d = int(np.argmax(np.abs(w)))
        r = np.zeros_like(w)
        r[d] = abs(gap) / abs(w[d]) * np.sign(w[d])
        return r
    q = p / (p - 1.0)
    mag = np.abs(w) ** (q - 1.0)
    return (abs(gap) / np.sum(np.abs(w) ** q)) * mag * np.sign(w)


def _dual_norm(w: np.ndarray, p: float) -> float:
    if p == 1.0:
        return float(np.max(np.abs(w)))
    q = p / (p - 1.0)
    return float(np.sum(np.abs(w) ** q) ** (1.0 / q))


def deepfool(
    c: Classifier,
    x: Tensor,
    cfg: DeepFoolConfig,
    target: Optional[int] = None,
    clip_lo: np.ndarray | None = None,
    clip_hi: np.ndarray | None = None,
) -> tuple[Tensor, BoundaryEstimate]:
    """Iterative projection of x onto the nearest linearized class
    boundary. Returns the accumulated perturbation (without overshoot) and
    the boundary estimate. With ``target`` set, only that class is
    considered. ``clip_lo``/``clip_hi`` clamp each iterate (used by the
    in-loop clipping study); by default iterates run unconstrained.
    """
    k0 = c.predict(x)
    if target is not None and target == k0:
        raise ValueError("target label equals the current prediction")
    xi = x.data.copy()
    n = x.size
    converged = False
    adv_label = k0
    iterations = 0
    fooled_label = None

    for iterations in range(1, cfg.max_iter + 1):
        xt = Tensor(xi, x.shape)
        logits = c.logits(xt).data
        jac = c.grad_matrix(xt)

        if target is not None:
            candidates = [target]
        else:
            others = [j for j in range(c.num_classes) if j != k0]
            if cfg.candidate_classes != "all":
                top = int(cfg.candidate_classes)
                others.sort(key=lambda j: logits[j], reverse=True)
                others = others[:top]
            candidates = others

        best = None
        for j in candidates:
            w = jac[j] - jac[k0]
            gap = logits[j] - logits[k0]
            denom = _dual_norm(w, cfg.p)
            if denom == 0.0:
                continue  # degenerate candidate, cannot define a hyperplane
            dist = abs(gap) / denom
            if best is None or dist < best[0]:
                best = (dist, j, w, gap)
        if best is None:
            raise DegenerateClassifierError(
                "zero gradient difference for every candidate class"
            )
        _, adv_label, w, gap = best
        if best[0] == 0.0:
            # the iterate sits exactly on the closest hyperplane
            converged = True
            break
        xi = xi + _step(w, gap, cfg.p)
        if clip_lo is not None:
            xi = np.clip(xi, clip_lo, clip_hi)

        r_tot = xi - x.data
        probe = Tensor(x.data + (1.0 + cfg.overshoot_eta) * r_tot, x.shape)
        lab = c.predict(probe)
        if (target is None and lab != k0) or (target is not None and lab == target):
            converged = True
            fooled_label = lab
            break

    r_adv = Tensor(xi - x.data, x.shape)
    x_b = Tensor(xi, x.shape)
    # normal of the approximating hyperplane at the boundary point
    adv_for_normal = fooled_label if fooled_label is not None else adv_label
    jac_b = c.grad_matrix(x_b)
    normal = Tensor(jac_b[adv_for_normal] - jac_b[k0], (n,))
    est = BoundaryEstimate(
        x_boundary=x_b,
        normal=normal,
        source_label=k0,
        adversarial_label=adv_for_normal,
        converged=converged,
        iterations=iterations,
    )
    return r_adv, est


def deepfool_lp(
    c: Classifier,
    x: Tensor,
    cfg: DeepFoolConfig,
    clip_lo: np.ndarray | None = None,
    clip_hi: np.ndarray | None = None,
) -> tuple[Tensor, BoundaryEstimate]:
    """The generalized-projection variant; with cfg.p == 1 each step
    perturbs a single coordinate. No box constraints are enforced unless
    clip bounds are passed explicitly."""
    return deepfool(c, x, cfg, clip_lo=clip_lo, clip_hi=clip_hi)


def estimate_boundary(
    c: Classifier,
    x: Tensor,
    lam: float,
    cfg: DeepFoolConfig,
    target: Optional[int] = None,
) -> BoundaryEstimate:
    """Boundary point and normal near x. The normal is evaluated at the
    unshifted boundary point; lam >= 1 then slides the stored point further
    past the boundary: x + lam * (x_B - x)."""
    if lam < 1:
        raise ValueError("lambda must be >= 1")
    r_adv, est = deepfool(c, x, cfg, target=target)
    if lam != 1.0:
        shifted = Tensor(x.data + lam * (est.x_boundary.data - x.data), x.shape)
        est = replace(est, x_boundary=shifted)
    return est
