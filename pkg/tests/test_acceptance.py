"""End-to-end acceptance suite.

Each test covers one numbered criterion and prints a single PASS/FAIL
line. Desk-scale experiments share the session-trained digit classifier
from conftest; the determinism criterion rebuilds the whole pipeline from
scratch and compares reports byte for byte.
"""

import json
import time
from contextlib import contextmanager

import numpy as np
import pytest

from sparsefool import (
    AffineClassifier,
    BoxBounds,
    DeepFoolConfig,
    MlpClassifier,
    Rng,
    SparseFoolConfig,
    Tensor,
    attack_dataset,
    clip_failure_experiment,
    deepfool,
    finite_diff_grad,
    linear_solver,
    outcomes_to_report,
    random_sparse_baseline,
    sparsefool,
    sweep_delta,
    sweep_lambda,
)
from conftest import build_desk_setup
from oracles import affine_min_l2_distance, l1_min_on_hyperplane_box


@contextmanager
def criterion(num, label):
    try:
        yield
    except BaseException:
        print(f"CRITERION {num:2d} [{label}]: FAIL")
        raise
    print(f"CRITERION {num:2d} [{label}]: PASS")


def count_inversions(values, direction):
    """Adjacent rank-order violations; direction is +1 for non-decreasing
    and -1 for non-increasing."""
    bad = 0
    for a, b in zip(values, values[1:]):
        if direction * (b - a) < -1e-12:
            bad += 1
    return bad


def scrubbed(obj):
    """Drop wall-clock fields before byte comparison."""
    drop = {"wall_time", "mean_time_per_sample", "attack_seconds"}
    if isinstance(obj, dict):
        return {k: scrubbed(v) for k, v in obj.items() if k not in drop}
    if isinstance(obj, list):
        return [scrubbed(v) for v in obj]
    return obj


def run_desk_suite(model, test):
    """All desk-scale experiments in one deterministic pass."""
    cfg1 = SparseFoolConfig(lam=1.0)
    t0 = time.perf_counter()
    attack_outs = attack_dataset(model, test, cfg1, limit=1000)
    elapsed = time.perf_counter() - t0
    report = outcomes_to_report(
        attack_outs, cfg1, extra={"dataset": test.name, "limit": 1000},
        name="desk-lam1")

    clip = clip_failure_experiment(
        model, test.samples[:300],
        BoxBounds.constant((1, 28, 28), 0.0, 1.0), DeepFoolConfig(p=1.0))

    sub = test.subset(300)
    lam_rows = sweep_lambda(model, sub, [1.0, 2.0, 3.0, 5.0], SparseFoolConfig())
    delta_rows = sweep_delta(model, sub, [0.1, 0.2, 0.5, 1.0], cfg1)

    fooled300 = [o for o in attack_outs[:300] if o.fooled]
    budget = max(1, round(float(np.median(
        [o.perturbed_element_count for o in fooled300])))) if fooled300 else 1
    base = random_sparse_baseline(model, test, budget, seed=7, limit=300)

    return {
        "attack_seconds": elapsed,
        "attack": report.to_dict(),
        "clipfail": {
            "sample_count": clip.sample_count,
            "unclipped": clip.fooling_rate_unclipped,
            "posthoc": clip.fooling_rate_posthoc_clipped,
            "inloop": clip.fooling_rate_inloop_clipped,
        },
        "sweep_lambda": lam_rows,
        "sweep_delta": delta_rows,
        "baseline_budget": budget,
        "baseline": base.to_dict(),
    }


@pytest.fixture(scope="session")
def desk_suite(desk_model, digits_test):
    return run_desk_suite(desk_model, digits_test)


def test_criterion_1_solver_cost_matches_lp_oracle():
    with criterion(1, "solver vs exact LP"):
        rng = Rng(101)
        t0 = time.perf_counter()
        feasible = within = 0
        solver_costs, lp_costs = [], []
        for _ in range(500):
            n = int(rng.integers(2, 7))
            w = rng.normal(size=n)
            lo = rng.normal(size=n) - 1.5
            hi = lo + np.abs(rng.normal(size=n)) + 0.5
            x = lo + (hi - lo) * rng.uniform(size=n)
            x_b = rng.normal(size=n)
            out = linear_solver(Tensor.of(x), Tensor.of(w), Tensor.of(x_b),
                                BoxBounds(Tensor.of(lo), Tensor.of(hi)))
            assert np.all(out.data >= lo) and np.all(out.data <= hi)
            opt = l1_min_on_hyperplane_box(w, float(w @ (x_b - x)), lo - x, hi - x)
            if opt is None:
                continue
            feasible += 1
            cost = float(np.sum(np.abs(out.data - x)))
            assert cost >= opt - 1e-9
            solver_costs.append(cost)
            lp_costs.append(opt)
            if cost <= opt * 1.10 + 1e-9:
                within += 1
        elapsed = time.perf_counter() - t0
        print(f"  feasible={feasible}/500 within10pct={within/feasible:.3f} "
              f"mean_solver_cost={np.mean(solver_costs):.4f} "
              f"mean_lp_cost={np.mean(lp_costs):.4f} time={elapsed:.2f}s")
        assert feasible > 100
        assert within / feasible >= 0.90
        assert elapsed < 10.0


def test_criterion_2_flat_boundary_single_iteration():
    with criterion(2, "affine exactness"):
        rng = Rng(202)
        for i in range(100):
            classes = int(rng.integers(2, 6))
            n = int(rng.integers(2, 9))
            w = rng.normal(size=(classes, n))
            b = rng.normal(size=classes)
            c = AffineClassifier(w, b)
            x = Tensor.of(rng.normal(size=n))

            r, est = deepfool(c, x, DeepFoolConfig())
            assert est.converged
            expected = affine_min_l2_distance(w, b, x.data)
            assert np.linalg.norm(r.data) == pytest.approx(expected, rel=1e-9)

            box = BoxBounds.constant((n,), -1e12, 1e12)
            o = sparsefool(c, x, box, SparseFoolConfig(lam=1.0))
            assert o.fooled and o.outer_iterations == 1


def test_criterion_3_gradients_match_finite_differences():
    with criterion(3, "analytic gradients"):
        rng = Rng(303)
        worst = 0.0
        for seed in range(50):
            n = int(rng.integers(4, 8))
            classes = int(rng.integers(3, 6))
            hidden = int(rng.integers(8, 16))
            m = MlpClassifier.random([n, hidden, classes], seed=1000 + seed)
            found = 0
            while found < 20:
                x = Tensor.of(rng.normal(size=n))
                if not all(np.all(np.abs(z) > 1e-3) for z in m.preactivations(x)):
                    continue
                found += 1
                jac = m.grad_matrix(x)
                for k in range(classes):
                    fd = finite_diff_grad(lambda t: float(m.logits(t).data[k]), x, 1e-5)
                    denom = max(np.max(np.abs(fd.data)), 1e-8)
                    err = np.max(np.abs(jac[k] - fd.data)) / denom
                    worst = max(worst, err)
        print(f"  worst relative gradient error {worst:.3e}")
        assert worst < 1e-4


def test_criterion_4_desk_attack_quality(desk, desk_suite):
    with criterion(4, "digit-corpus attack"):
        result = desk[0]
        rep = desk_suite["attack"]
        print(f"  test_accuracy={result.val_accuracy:.4f} "
              f"fooling_rate={rep['fooling_rate']:.4f} "
              f"median_pert_pct={rep['median_pert_pct']:.3f} "
              f"time={desk_suite['attack_seconds']:.1f}s")
        assert result.val_accuracy >= 0.95
        assert rep["fooling_rate"] >= 0.99
        assert rep["median_pert_pct"] <= 10.0
        assert desk_suite["attack_seconds"] < 600.0


def test_criterion_5_clipping_failure(desk_suite):
    with criterion(5, "post-hoc clipping failure"):
        c = desk_suite["clipfail"]
        gap = c["unclipped"] - c["posthoc"]
        print(f"  unclipped={c['unclipped']:.3f} posthoc={c['posthoc']:.3f} "
              f"inloop={c['inloop']:.3f}")
        assert gap >= 0.20
        # in-loop clipping must not recover more than half the gap
        assert c["inloop"] - c["posthoc"] <= gap / 2.0


def test_criterion_6_lambda_trend(desk_suite):
    with criterion(6, "lambda sweep trend"):
        rows = desk_suite["sweep_lambda"]
        meds = [r["median_pert_pct"] for r in rows]
        iters = [r["mean_outer_iterations"] for r in rows]
        print(f"  medians={meds} iterations={iters}")
        for r in rows:
            assert r["fooling_rate"] >= 0.99
        assert count_inversions(meds, +1) <= 1
        assert count_inversions(iters, -1) <= 1


def test_criterion_7_delta_behavior(desk_suite):
    with criterion(7, "delta sweep"):
        rows = desk_suite["sweep_delta"]
        print("  " + " ".join(
            f"d={r['delta']}: rate={r['fooling_rate']:.3f} med={r['median_pert_pct']:.2f}"
            for r in rows))
        for r in rows:
            assert r["fooling_rate"] >= 0.99
        assert rows[0]["median_pert_pct"] > rows[-1]["median_pert_pct"]


def test_criterion_8_random_baseline_gap(desk_suite):
    with criterion(8, "random baseline gap"):
        sf_rate = desk_suite["sweep_lambda"][0]["fooling_rate"]
        base_rate = desk_suite["baseline"]["fooling_rate"]
        print(f"  budget={desk_suite['baseline_budget']} "
              f"baseline={base_rate:.4f} attack={sf_rate:.4f}")
        assert base_rate < sf_rate / 2.0


def test_criterion_9_box_invariant_property():
    with criterion(9, "box/untouched invariants"):
        rng = Rng(909)
        models = [AffineClassifier(rng.normal(size=(3, 5)), rng.normal(size=3))
                  for _ in range(40)]
        models += [MlpClassifier.random([5, 8, 3], seed=2000 + s) for s in range(10)]
        cases = 0
        while cases < 10000:
            c = models[int(rng.integers(0, len(models)))]
            lo = rng.normal(size=5) - 2.0
            hi = lo + np.abs(rng.normal(size=5)) + 0.2
            x = Tensor.of(lo + (hi - lo) * rng.uniform(size=5))
            cfg = SparseFoolConfig(lam=float(rng.uniform(1.0, 3.0)),
                                   max_outer_iter=5)
            o = sparsefool(c, x, BoxBounds(Tensor.of(lo), Tensor.of(hi)), cfg)
            cases += 1
            assert np.all(o.x_adv.data >= lo) and np.all(o.x_adv.data <= hi)
            assert np.array_equal(o.x_adv.data, x.data + o.r.data)
            untouched = np.setdiff1d(np.arange(5), o.perturbed_coordinates)
            assert np.array_equal(o.x_adv.data[untouched], x.data[untouched])
        print(f"  {cases} randomized cases checked")


def test_criterion_10_determinism(desk_suite, tmp_path_factory):
    with criterion(10, "byte-identical reruns"):
        result, _, test = build_desk_setup(tmp_path_factory.mktemp("rerun"))
        rerun = run_desk_suite(result.model, test)
        blob_a = json.dumps(scrubbed(desk_suite), sort_keys=True).encode()
        blob_b = json.dumps(scrubbed(rerun), sort_keys=True).encode()
        print(f"  report bytes: {len(blob_a)} vs {len(blob_b)}")
        assert blob_a == blob_b
