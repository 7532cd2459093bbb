"""Dataset ingestion, evaluation metrics, baselines, sweeps, and report
persistence.

Datasets are lists of tensors in a known value domain. IDX files (the
classic big-endian byte-image format) are parsed bit-exactly and
normalized to [0, 1]. Two synthetic generators are provided: separable
Gaussian-style blobs for oracle-friendly tests, and rendered digit images
for desk-scale image experiments when the real corpus is unavailable.
"""

from __future__ import annotations

import csv
import json
import statistics
import struct
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .attack import AttackOutcome, BoxBounds, SparseFoolConfig, delta_bounds, sparsefool
from .classifiers import Classifier
from .tensor import Rng, Tensor

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class IdxFormatError(Exception):
    """Raised on malformed IDX files."""


@dataclass
class Dataset:
    samples: list[Tensor]
    labels: list[int]
    name: str
    domain_lo: float = 0.0
    domain_hi: float = 1.0

    def __post_init__(self):
        if len(self.samples) != len(self.labels):
            raise ValueError("sample/label count mismatch")
        for s in self.samples:
            if np.any(s.data < self.domain_lo) or np.any(s.data > self.domain_hi):
                raise ValueError("sample values outside the stated domain")

    def __len__(self):
        return len(self.samples)

    def subset(self, n: int) -> "Dataset":
        return Dataset(self.samples[:n], self.labels[:n], self.name,
                       self.domain_lo, self.domain_hi)

    def as_matrix(self) -> np.ndarray:
        return np.stack([s.data for s in self.samples])


def _read_be_u32(blob: bytes, off: int) -> int:
    if off + 4 > len(blob):
        raise IdxFormatError("truncated header")
    return struct.unpack_from(">I", blob, off)[0]


def load_idx(images_path, labels_path) -> Dataset:
    """Parse an IDX image/label file pair; pixels are normalized from
    bytes to [0, 1] and shaped [1, H, W]."""
    with open(images_path, "rb") as f:
        img_blob = f.read()
    with open(labels_path, "rb") as f:
        lab_blob = f.read()

    if _read_be_u32(img_blob, 0) != IDX_IMAGE_MAGIC:
        raise IdxFormatError(f"bad image magic in {images_path}")
    count = _read_be_u32(img_blob, 4)
    rows = _read_be_u32(img_blob, 8)
    cols = _read_be_u32(img_blob, 12)
    if len(img_blob) != 16 + count * rows * cols:
        raise IdxFormatError("image payload size mismatch")

    if _read_be_u32(lab_blob, 0) != IDX_LABEL_MAGIC:
        raise IdxFormatError(f"bad label magic in {labels_path}")
    lab_count = _read_be_u32(lab_blob, 4)
    if len(lab_blob) != 8 + lab_count:
        raise IdxFormatError("label payload size mismatch")
    if lab_count != count:
        raise IdxFormatError(f"image/label count mismatch: {count} vs {lab_count}")

    pixels = np.frombuffer(img_blob, dtype=np.uint8, offset=16).astype(np.float64) / 255.0
    pixels = pixels.reshape(count, rows * cols)
    samples = [Tensor(row, (1, rows, cols)) for row in pixels]
    labels = [int(v) for v in lab_blob[8:]]
    return Dataset(samples, labels, name=str(images_path))


def write_idx(dataset: Dataset, images_path, labels_path) -> None:
    """Inverse of load_idx; values are scaled back to bytes."""
    if not dataset.samples:
        raise ValueError("empty dataset")
    shape = dataset.samples[0].shape
    if len(shape) != 3 or shape[0] != 1:
        raise ValueError("IDX export expects [1, H, W] samples")
    _, rows, cols = shape
    span = dataset.domain_hi - dataset.domain_lo
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, len(dataset), rows, cols))
        for s in dataset.samples:
            scaled = np.rint((s.data - dataset.domain_lo) / span * 255.0)
            f.write(scaled.astype(np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, len(dataset)))
        f.write(bytes(int(v) for v in dataset.labels))


def synth_blobs(n: int, classes: int, dim: int, margin: float, seed: int) -> Dataset:
    """Class blobs with guaranteed linear separability at the given
    margin: class centers sit on a circle in the first two dimensions and
    per-sample noise is norm-clipped, so the midpoint hyperplane between
    any two centers classifies perfectly."""
    if margin <= 0:
        raise ValueError("margin must be positive")
    if classes < 2 or dim < 2 or n < 0:
        raise ValueError("need classes >= 2, dim >= 2, n >= 0")
    rng = Rng(seed)
    radius_noise = 1.0
    # chord between adjacent centers >= 2 * (noise radius + margin)
    ring = (radius_noise + margin) / np.sin(np.pi / classes)
    centers = np.zeros((classes, dim))
    angles = 2.0 * np.pi * np.arange(classes) / classes
    centers[:, 0] = ring * np.cos(angles)
    centers[:, 1] = ring * np.sin(angles)

    samples, labels = [], []
    for i in range(n):
        k = int(rng.integers(0, classes))
        noise = rng.normal(size=dim) * (radius_noise / 3.0)
        nrm = np.linalg.norm(noise)
        if nrm > radius_noise:
            noise *= radius_noise / nrm
        samples.append(Tensor(centers[k] + noise, (dim,)))
        labels.append(k)
    lo = min((s.data.min() for s in samples), default=-ring) - 1.0
    hi = max((s.data.max() for s in samples), default=ring) + 1.0
    return Dataset(samples, labels, name=f"blobs(n={n},c={classes},d={dim})",
                   domain_lo=float(lo), domain_hi=float(hi))


_DIGIT_FONT_CANDIDATES = (
    "fonts/ttf/DejaVuSans-Bold.ttf",
    "fonts/ttf/DejaVuSans.ttf",
)


def _load_digit_font(size: int):
    from PIL import ImageFont

    try:
        import matplotlib

        base = matplotlib.get_data_path()
        for rel in _DIGIT_FONT_CANDIDATES:
            try:
                return ImageFont.truetype(f"{base}/{rel}", size)
            except OSError:
                continue
    except ImportError:
        pass
    return ImageFont.load_default(size=size)


def synth_digits(n: int, seed: int, image_size: int = 28) -> Dataset:
    """Rendered digit images (10 classes) with randomized size, placement,
    rotation, and stroke intensity. Deterministic per seed. A stand-in for
    handwritten-digit corpora in offline environments."""
    from PIL import Image, ImageDraw

    rng = Rng(seed)
    canvas = image_size * 2
    samples, labels = [], []
    for _ in range(n):
        digit = int(rng.integers(0, 10))
        size = int(rng.integers(30, 46))
        font = _load_digit_font(size)
        img = Image.new("L", (canvas, canvas), 0)
        draw = ImageDraw.Draw(img)
        intensity = int(rng.integers(180, 256))
        x0, y0, x1, y1 = draw.textbbox((0, 0), str(digit), font=font)
        cx = (canvas - (x1 - x0)) / 2 - x0 + float(rng.uniform(-4, 4))
        cy = (canvas - (y1 - y0)) / 2 - y0 + float(rng.uniform(-4, 4))
        draw.text((cx, cy), str(digit), fill=intensity, font=font)
        angle = float(rng.uniform(-14, 14))
        img = img.rotate(angle, resample=Image.BILINEAR, fillcolor=0)
        img = img.resize((image_size, image_size), resample=Image.LANCZOS)
        arr = np.asarray(img, dtype=np.float64) / 255.0
        samples.append(Tensor(np.clip(arr, 0.0, 1.0).reshape(-1), (1, image_size, image_size)))
        labels.append(digit)
    return Dataset(samples, labels, name=f"digits(n={n},seed={seed})")


def fooling_rate(outcomes: Sequence[AttackOutcome]) -> float:
    if not outcomes:
        raise ValueError("no outcomes")
    return sum(1 for o in outcomes if o.fooled) / len(outcomes)


def median_pert_pct(outcomes: Sequence[AttackOutcome], pixel_grouping: bool = True) -> float:
    """Median over fooled samples of the percentage of perturbed pixels
    (or raw elements with pixel_grouping=False)."""
    pcts = []
    for o in outcomes:
        if not o.fooled:
            continue
        shape = o.x_adv.shape
        if pixel_grouping and len(shape) == 3:
            total = shape[1] * shape[2]
            count = o.perturbed_pixel_count
        else:
            total = o.x_adv.size
            count = o.perturbed_element_count
        pcts.append(100.0 * count / total)
    if not pcts:
        raise ValueError("no fooled outcomes to take a median over")
    return float(statistics.median(pcts))


@dataclass
class EvalReport:
    fooling_rate: float
    median_pert_pct: Optional[float]
    mean_time_per_sample: float
    per_sample: list[dict]
    config_echo: dict
    name: str = "attack"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "fooling_rate": self.fooling_rate,
            "median_pert_pct": self.median_pert_pct,
            "mean_time_per_sample": self.mean_time_per_sample,
            "per_sample": self.per_sample,
            "config_echo": self.config_echo,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            fooling_rate=d["fooling_rate"],
            median_pert_pct=d["median_pert_pct"],
            mean_time_per_sample=d["mean_time_per_sample"],
            per_sample=d["per_sample"],
            config_echo=d["config_echo"],
            name=d.get("name", "attack"),
        )


def _config_echo(cfg: SparseFoolConfig, extra: dict | None = None) -> dict:
    echo = {
        "lambda": cfg.lam,
        "max_outer_iter": cfg.max_outer_iter,
        "epsilon_plane": cfg.epsilon_plane,
        "target_label": cfg.target_label,
        "deepfool": {
            "max_iter": cfg.deepfool_cfg.max_iter,
            "overshoot_eta": cfg.deepfool_cfg.overshoot_eta,
            "p": cfg.deepfool_cfg.p,
            "candidate_classes": cfg.deepfool_cfg.candidate_classes,
        },
    }
    if extra:
        echo.update(extra)
    return echo


def _outcome_row(i: int, o: AttackOutcome) -> dict:
    shape = o.x_adv.shape
    pixels = shape[1] * shape[2] if len(shape) == 3 else o.x_adv.size
    return {
        "index": i,
        "original_label": o.original_label,
        "adversarial_label": o.adversarial_label,
        "fooled": o.fooled,
        "outer_iterations": o.outer_iterations,
        "perturbed_pixels": o.perturbed_pixel_count,
        "perturbed_elements": o.perturbed_element_count,
        "pert_pct": 100.0 * o.perturbed_pixel_count / pixels,
        "wall_time": o.wall_time,
        "failure_reason": o.failure_reason,
    }


def attack_dataset(
    c: Classifier,
    dataset: Dataset,
    cfg: SparseFoolConfig,
    delta: float | None = None,
    limit: int | None = None,
) -> list[AttackOutcome]:
    """Run the sparse attack over the dataset; bounds are +-delta around
    each sample (full domain when delta is None)."""
    span = dataset.domain_hi - dataset.domain_lo
    d = span if delta is None else delta
    outcomes = []
    samples = dataset.samples[:limit] if limit else dataset.samples
    for x in samples:
        b = delta_bounds(x, d, dataset.domain_lo, dataset.domain_hi)
        outcomes.append(sparsefool(c, x, b, cfg))
    return outcomes


def evaluate(
    c: Classifier,
    dataset: Dataset,
    cfg: SparseFoolConfig,
    delta: float | None = None,
    limit: int | None = None,
    name: str = "attack",
) -> EvalReport:
    outcomes = outcomes_to_report(
        attack_dataset(c, dataset, cfg, delta=delta, limit=limit),
        cfg,
        extra={"dataset": dataset.name, "delta": delta, "limit": limit},
        name=name,
    )
    return outcomes


def outcomes_to_report(
    outcomes: Sequence[AttackOutcome],
    cfg: SparseFoolConfig,
    extra: dict | None = None,
    name: str = "attack",
) -> EvalReport:
    rate = fooling_rate(outcomes)
    med = median_pert_pct(outcomes) if any(o.fooled for o in outcomes) else None
    mean_t = float(np.mean([o.wall_time for o in outcomes]))
    rows = [_outcome_row(i, o) for i, o in enumerate(outcomes)]
    return EvalReport(rate, med, mean_t, rows, _config_echo(cfg, extra), name=name)


def random_sparse_baseline(
    c: Classifier,
    dataset: Dataset,
    per_channel_budget: int | Sequence[int],
    seed: int,
    limit: int | None = None,
) -> EvalReport:
    """Per image and channel, flip budget-many random positions to the
    domain extremes and measure the fooling rate."""
    rng = Rng(seed)
    samples = dataset.samples[:limit] if limit else dataset.samples
    if not samples:
        raise ValueError("empty dataset")
    shape = samples[0].shape
    channels = shape[0] if len(shape) == 3 else 1
    plane = shape[1] * shape[2] if len(shape) == 3 else samples[0].size
    budgets = ([int(per_channel_budget)] * channels
               if np.isscalar(per_channel_budget) else [int(v) for v in per_channel_budget])
    if len(budgets) != channels:
        raise ValueError("one budget per channel required")
    if any(bgt > plane or bgt < 0 for bgt in budgets):
        raise ValueError("budget exceeds channel size")

    rows = []
    n_fooled = 0
    t0 = time.perf_counter()
    outcomes = []
    for x in samples:
        k0 = c.predict(x)
        xd = x.data.copy()
        for ch, bgt in enumerate(budgets):
            if bgt == 0:
                continue
            pos = rng.choice(plane, size=bgt, replace=False)
            vals = np.where(rng.integers(0, 2, size=bgt) == 1,
                            dataset.domain_hi, dataset.domain_lo)
            xd[ch * plane + np.asarray(pos, dtype=int)] = vals
        x_adv = x.with_data(xd)
        lab = c.predict(x_adv)
        fooled = lab != k0
        n_fooled += fooled
        r = x_adv - x
        coords = [int(i) for i in np.flatnonzero(r.data)]
        outcomes.append(AttackOutcome(
            r=r, x_adv=x_adv, original_label=k0, adversarial_label=lab,
            fooled=fooled, outer_iterations=0,
            perturbed_coordinates=coords,
            perturbed_pixel_count=len({i % plane for i in coords}) if len(shape) == 3 else len(coords),
            wall_time=0.0,
        ))
    elapsed = time.perf_counter() - t0
    rate = n_fooled / len(samples)
    med = median_pert_pct(outcomes) if n_fooled else None
    rows = [_outcome_row(i, o) for i, o in enumerate(outcomes)]
    echo = {"baseline": "random_sparse", "per_channel_budget": budgets,
            "seed": seed, "dataset": dataset.name}
    return EvalReport(rate, med, elapsed / len(samples), rows, echo, name="baseline")


def sweep_lambda(
    c: Classifier,
    dataset: Dataset,
    lambdas: Sequence[float],
    cfg: SparseFoolConfig,
    delta: float | None = None,
    limit: int | None = None,
) -> list[dict]:
    """One full evaluation per lambda; rows keep the input order."""
    rows = []
    for lam in lambdas:
        run_cfg = SparseFoolConfig(
            lam=lam, max_outer_iter=cfg.max_outer_iter,
            epsilon_plane=cfg.epsilon_plane, deepfool_cfg=cfg.deepfool_cfg,
            target_label=cfg.target_label,
        )
        outcomes = attack_dataset(c, dataset, run_cfg, delta=delta, limit=limit)
        rows.append({
            "lambda": float(lam),
            "fooling_rate": fooling_rate(outcomes),
            "median_pert_pct": median_pert_pct(outcomes) if any(o.fooled for o in outcomes) else None,
            "mean_outer_iterations": float(np.mean([o.outer_iterations for o in outcomes])),
        })
    return rows


def sweep_delta(
    c: Classifier,
    dataset: Dataset,
    deltas: Sequence[float],
    cfg: SparseFoolConfig,
    limit: int | None = None,
) -> list[dict]:
    rows = []
    for d in deltas:
        outcomes = attack_dataset(c, dataset, cfg, delta=d, limit=limit)
        rows.append({
            "delta": float(d),
            "fooling_rate": fooling_rate(outcomes),
            "median_pert_pct": median_pert_pct(outcomes) if any(o.fooled for o in outcomes) else None,
        })
    return rows


def transfer_matrix(
    models: Sequence[Classifier],
    dataset: Dataset,
    cfg: SparseFoolConfig,
    delta: float | None = None,
    limit: int | None = None,
) -> np.ndarray:
    """Entry (i, j): fooling rate on model j of adversarial samples
    crafted on model i (label change relative to model j's clean
    prediction)."""
    if not models:
        raise ValueError("need at least one model")
    shapes = {m.input_size for m in models}
    if len(shapes) != 1:
        raise ValueError("models must share an input shape")
    samples = dataset.samples[:limit] if limit else dataset.samples
    mat = np.zeros((len(models), len(models)))
    for i, src in enumerate(models):
        advs = [o.x_adv for o in attack_dataset(src, Dataset(
            list(samples), dataset.labels[: len(samples)], dataset.name,
            dataset.domain_lo, dataset.domain_hi), cfg, delta=delta)]
        for j, dst in enumerate(models):
            flips = sum(1 for x, xa in zip(samples, advs)
                        if dst.predict(xa) != dst.predict(x))
            mat[i, j] = flips / len(samples)
    return mat


def write_report(report: EvalReport, path, format: str = "json") -> None:
    """Serialize a report; JSON round-trips losslessly, CSV carries a
    summary header block plus one row per sample."""
    if format == "json":
        with open(path, "w") as f:
            json.dump(report.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
    elif format == "csv":
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["# name", report.name])
            writer.writerow(["# fooling_rate", report.fooling_rate])
            writer.writerow(["# median_pert_pct", report.median_pert_pct])
            writer.writerow(["# mean_time_per_sample", report.mean_time_per_sample])
            writer.writerow(["# config", json.dumps(report.config_echo, sort_keys=True)])
            if report.per_sample:
                cols = list(report.per_sample[0].keys())
                writer.writerow(cols)
                for row in report.per_sample:
                    writer.writerow([row[c] for c in cols])
    else:
        raise ValueError(f"unknown report format {format!r}")


def read_report(path) -> EvalReport:
    with open(path) as f:
        return EvalReport.from_dict(json.load(f))
