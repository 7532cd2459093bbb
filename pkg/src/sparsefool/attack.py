"""The sparse attack itself: box projection, the greedy coordinate
hyperplane solver, the outer attack loop, perceptibility bounds, and the
clipping-failure study.

The solver projects a point onto an affine hyperplane one coordinate at a
time, always spending the coordinate with the largest normal component,
clamping into the box after every step. Coordinates that saturate join a
forbidden set and are never touched again, so the perturbation support is
exactly the set of visited coordinates.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .classifiers import Classifier
from .deepfool import (
    DeepFoolConfig,
    DegenerateClassifierError,
    deepfool_lp,
    estimate_boundary,
)
from .tensor import Tensor


@dataclass(frozen=True)
class BoxBounds:
    lower: Tensor
    upper: Tensor

    def __post_init__(self):
        if self.lower.shape != self.upper.shape:
            raise ValueError("bound shapes differ")
        if np.any(self.lower.data > self.upper.data):
            raise ValueError("lower bound exceeds upper bound")

    @classmethod
    def constant(cls, shape, lo: float, hi: float) -> "BoxBounds":
        n = int(np.prod(tuple(shape)))
        return cls(Tensor(np.full(n, lo), shape), Tensor(np.full(n, hi), shape))


@dataclass
class SparseFoolConfig:
    lam: float = 3.0
    max_outer_iter: int = 20
    epsilon_plane: float = 1e-8
    deepfool_cfg: DeepFoolConfig = field(default_factory=DeepFoolConfig)
    target_label: Optional[int] = None

    def __post_init__(self):
        if self.lam < 1:
            raise ValueError("lambda must be >= 1")
        if self.max_outer_iter < 1 or self.epsilon_plane <= 0:
            raise ValueError("invalid iteration/tolerance settings")


@dataclass
class AttackOutcome:
    r: Tensor
    x_adv: Tensor
    original_label: int
    adversarial_label: int
    fooled: bool
    outer_iterations: int
    perturbed_coordinates: list[int]
    perturbed_pixel_count: int
    wall_time: float
    failure_reason: Optional[str] = None

    @property
    def perturbed_element_count(self) -> int:
        return len(self.perturbed_coordinates)


def box_project(x: Tensor, b: BoxBounds) -> Tensor:
    """Componentwise clamp into [lower, upper]; idempotent."""
    if x.size != b.lower.size:
        raise ValueError("bounds do not match input length")
    return x.with_data(np.clip(x.data, b.lower.data, b.upper.data))


def delta_bounds(x: Tensor, delta: float, domain_lo: float, domain_hi: float) -> BoxBounds:
    """Per-coordinate interval +-delta around x, intersected with the
    data domain."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if np.any(x.data < domain_lo) or np.any(x.data > domain_hi):
        raise ValueError("x lies outside the stated domain")
    lo = np.maximum(domain_lo, x.data - delta)
    hi = np.minimum(domain_hi, x.data + delta)
    return BoxBounds(x.with_data(lo), x.with_data(hi))


def linear_solver(
    x: Tensor, w: Tensor, x_b: Tensor, b: BoxBounds, eps: float = 1e-8
) -> Tensor:
    """Greedy coordinate projection of x onto the hyperplane through x_b
    with normal w, under the box constraints.

    Each step spends the unused coordinate with the largest |w_d|, moving
    the residual w.(x - x_b) toward zero, then clamps. Terminates when the
    residual reaches zero (within eps), crosses zero, or every coordinate
    has been used.
    """
    wd = w.data
    if not np.any(wd):
        raise ValueError("normal vector is zero")
    if x.size != wd.size or x.size != x_b.size:
        raise ValueError("shape mismatch")
    lo, hi = b.lower.data, b.upper.data
    xi = np.clip(x.data.copy(), lo, hi)

    used = wd == 0.0  # zero components can never move the residual
    abs_w = np.abs(wd)
    res0 = float(wd @ (xi - x_b.data))
    sign0 = np.sign(res0)
    while True:
        res = float(wd @ (xi - x_b.data))
        if abs(res) <= eps or np.sign(res) != sign0:
            break
        if used.all():
            break  # box exhausted; return the best iterate
        masked = np.where(used, -np.inf, abs_w)
        d = int(np.argmax(masked))
        # signed step landing exactly on the hyperplane before clamping
        xi[d] = np.clip(xi[d] - res / wd[d], lo[d], hi[d])
        used[d] = True
    return x.with_data(xi)


def _consistent_adv(x: np.ndarray, target: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Perturbation r and point x + r (evaluated in that exact order)
    landing as close as possible to ``target`` while staying inside the
    box bit-exactly. Untouched coordinates keep r == 0."""
    r = target - x
    xa = x + r
    # rounding in x + (target - x) can poke one ulp outside the box;
    # nudge r until the recomputed sum is inside
    for _ in range(64):
        over = xa > hi
        under = xa < lo
        if not (over.any() or under.any()):
            break
        r = np.where(over, np.nextafter(r, -np.inf), r)
        r = np.where(under, np.nextafter(r, np.inf), r)
        xa = x + r
    return r, xa


def _pixel_count(coords: Sequence[int], shape: tuple[int, ...]) -> int:
    """Perturbed pixels: for [C, H, W] data a pixel counts once if any of
    its channels moved; otherwise pixels are just elements."""
    if len(shape) == 3:
        plane = shape[1] * shape[2]
        return len({c % plane for c in coords})
    return len(coords)


def sparsefool(
    c: Classifier, x: Tensor, b: BoxBounds, cfg: SparseFoolConfig
) -> AttackOutcome:
    """Outer attack loop: estimate the local boundary, project onto its
    (lambda-shifted) hyperplane with the coordinate solver, repeat until
    the label flips or the iteration budget runs out.

    Never raises for attack-level failures; they surface as fooled=False
    with a failure_reason.
    """
    t0 = time.perf_counter()
    eta = cfg.deepfool_cfg.overshoot_eta
    k0 = c.predict(x)
    if cfg.target_label is not None and cfg.target_label == k0:
        raise ValueError("target label equals the original prediction")

    lo, hi = b.lower.data, b.upper.data
    xi = x
    r_data = np.zeros(x.size)
    x_adv = x
    adv_label = k0
    fooled = False
    reason: Optional[str] = "iteration_budget_exhausted"
    outer = 0
    for outer in range(1, cfg.max_outer_iter + 1):
        try:
            est = estimate_boundary(c, xi, cfg.lam, cfg.deepfool_cfg, target=cfg.target_label)
        except DegenerateClassifierError:
            reason = "degenerate_gradient"
            outer -= 1
            break
        if not np.any(est.normal.data):
            reason = "degenerate_gradient"
            outer -= 1
            break
        xi = linear_solver(xi, est.normal, est.x_boundary, b, cfg.epsilon_plane)
        # overshoot the accumulated perturbation so the candidate does not
        # sit exactly on the boundary, then re-box
        target_pt = np.clip(x.data + (1.0 + eta) * (xi.data - x.data), lo, hi)
        r_data, adv_data = _consistent_adv(x.data, target_pt, lo, hi)
        x_adv = x.with_data(adv_data)
        lab = c.predict(x_adv)
        adv_label = lab
        hit = lab == cfg.target_label if cfg.target_label is not None else lab != k0
        if hit:
            fooled = True
            reason = None
            break

    r = x.with_data(r_data)
    coords = np.flatnonzero(r.data)
    return AttackOutcome(
        r=r,
        x_adv=x_adv,
        original_label=k0,
        adversarial_label=adv_label,
        fooled=fooled,
        outer_iterations=outer,
        perturbed_coordinates=[int(i) for i in coords],
        perturbed_pixel_count=_pixel_count(coords, x.shape),
        wall_time=time.perf_counter() - t0,
        failure_reason=reason,
    )


@dataclass
class ClipFailureReport:
    sample_count: int
    fooling_rate_unclipped: float
    fooling_rate_posthoc_clipped: float
    fooling_rate_inloop_clipped: float

    def to_dict(self) -> dict:
        return {
            "sample_count": self.sample_count,
            "fooling_rate_unclipped": self.fooling_rate_unclipped,
            "fooling_rate_posthoc_clipped": self.fooling_rate_posthoc_clipped,
            "fooling_rate_inloop_clipped": self.fooling_rate_inloop_clipped,
        }


def clip_failure_experiment(
    c: Classifier,
    samples: Sequence[Tensor],
    b: BoxBounds,
    cfg: DeepFoolConfig | None = None,
) -> ClipFailureReport:
    """Fooling rates of the single-coordinate projection walk (p=1) when
    run unconstrained, when its output is clamped after the fact, and when
    every iterate is clamped inside the loop."""
    if not samples:
        raise ValueError("need at least one sample")
    cfg = cfg or DeepFoolConfig(p=1.0)
    if cfg.p != 1.0:
        cfg = replace_p(cfg, 1.0)
    n_unclipped = n_posthoc = n_inloop = 0
    for x in samples:
        k0 = c.predict(x)
        r, _ = deepfool_lp(c, x, cfg)
        x_raw = x + (1.0 + cfg.overshoot_eta) * r
        if c.predict(x_raw) != k0:
            n_unclipped += 1
        if c.predict(box_project(x_raw, b)) != k0:
            n_posthoc += 1
        r_c, _ = deepfool_lp(c, x, cfg, clip_lo=b.lower.data, clip_hi=b.upper.data)
        x_c = box_project(x + (1.0 + cfg.overshoot_eta) * r_c, b)
        if c.predict(x_c) != k0:
            n_inloop += 1
    m = len(samples)
    return ClipFailureReport(m, n_unclipped / m, n_posthoc / m, n_inloop / m)


def replace_p(cfg: DeepFoolConfig, p: float) -> DeepFoolConfig:
    return DeepFoolConfig(
        max_iter=cfg.max_iter,
        overshoot_eta=cfg.overshoot_eta,
        p=p,
        candidate_classes=cfg.candidate_classes,
    )
