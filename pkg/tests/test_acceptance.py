"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` or
``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import dataclasses
import itertools
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from ddq import losses as L  # noqa: E402
from ddq import simulator as sim  # noqa: E402
from ddq._backend import available_backends  # noqa: E402
from ddq.assignment import center_prior_match, hungarian  # noqa: E402
from ddq.config import ResponseModel, SceneConfig, load_config  # noqa: E402
from ddq.dense_queries import build_pyramid, count_queries  # noqa: E402
from ddq.duplicate_removal import nms_indices, score_order  # noqa: E402
from ddq.evaluation import COCO_THRESHOLDS, DetectionRecord, average_precision  # noqa: E402
from ddq.geometry import pairwise_iou  # noqa: E402
from ddq.roi_features import FeatureMap, roi_align  # noqa: E402
from oracles import brute_force_ap, central_difference, dense_roi_align, reference_nms  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "src" / "ddq" / "configs"
BACKENDS = available_backends()


def report(n, ok, detail):
    line = f"[criterion {n:>2}] {'PASS' if ok else 'FAIL'}: {detail}"
    sys.__stdout__.write(line + "\n")
    sys.__stdout__.flush()
    assert ok, line


def with_backend(mod, fn):
    import ddq.assignment
    import ddq.duplicate_removal
    import ddq.geometry

    mods = (ddq.assignment, ddq.duplicate_removal, ddq.geometry)
    saved = [m.kernels for m in mods]
    for m in mods:
        m.kernels = mod
    try:
        return fn()
    finally:
        for m, k in zip(mods, saved):
            m.kernels = k


# 1 ---------------------------------------------------------------------------

def _exhaustive_minimum(c, inv, cols):
    # sum each permutation in column order, the order hungarian() totals in
    vals = c[inv, cols[None, :]]
    tot = vals[:, 0].copy()
    for j in range(1, c.shape[0]):
        tot = tot + vals[:, j]
    return tot.min()


@pytest.mark.parametrize("backend_name", sorted(BACKENDS))
def test_criterion_01_hungarian_optimality(backend_name):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    mismatches = 0

    def run():
        nonlocal mismatches
        for n in range(1, 8):
            perms = np.array(list(itertools.permutations(range(n))))
            inv = np.argsort(perms, axis=1)
            cols = np.arange(n)
            for _ in range(1000):
                c = rng.uniform(-1.0, 1.0, (n, n))
                res = hungarian(c)
                if res.total_cost != _exhaustive_minimum(c, inv, cols) or len(res.pairs) != n:
                    mismatches += 1

    with_backend(BACKENDS[backend_name], run)
    elapsed = time.perf_counter() - start
    report(1, mismatches == 0 and elapsed < 30.0,
           f"[{backend_name}] 7000 matrices n=1..7, {mismatches} mismatches vs exhaustive, {elapsed:.2f}s (< 30s)")


# 2 ---------------------------------------------------------------------------

@pytest.mark.parametrize("backend_name", sorted(BACKENDS))
def test_criterion_02_nms_oracle(backend_name):
    rng = np.random.default_rng(202)
    bad_match = bad_idem = 0

    def run():
        nonlocal bad_match, bad_idem
        for trial in range(1000):
            n = int(rng.integers(0, 65))
            xy = rng.uniform(0, 100, (n, 2))
            wh = rng.uniform(2, 40, (n, 2))
            if trial % 2:
                # snap to a grid so exact overlaps and score ties occur
                xy, wh = np.round(xy / 5) * 5, np.round(wh / 5) * 5 + 5
            boxes = np.concatenate([xy, xy + wh], 1)
            scores = rng.uniform(0, 1, n)
            if trial % 2:
                scores = np.round(scores * 5) / 5
            thr = float(rng.uniform(0.1, 0.9))
            kept = nms_indices(boxes, scores, thr)
            if kept.tolist() != reference_nms(boxes.tolist(), scores.tolist(), thr):
                bad_match += 1
            again = nms_indices(boxes[kept], scores[kept], thr)
            if again.tolist() != list(range(len(kept))):
                bad_idem += 1

    with_backend(BACKENDS[backend_name], run)
    report(2, bad_match == 0 and bad_idem == 0,
           f"[{backend_name}] 1000 sets of <=64 boxes, {bad_match} index mismatches, {bad_idem} idempotence failures")


# 3 ---------------------------------------------------------------------------

def test_criterion_03_dense_query_count():
    n = count_queries(build_pyramid(800, 800))
    report(3, n == 13343, f"count_queries(800x800) = {n} (expected 13343)")


# 4 ---------------------------------------------------------------------------

def test_criterion_04_duplicate_gradient_ratio():
    image = (800, 800)
    gt = np.array([[200.0, 200.0, 600.0, 600.0]])
    h = 1e-6
    worst = 0.0
    negative_ok = True
    for p in np.round(np.arange(0.05, 0.951, 0.05), 2):
        probs = np.array([p])
        g_pair = sim.fd_shared_gradient(gt, probs, 2, image, h)[0]
        g_single = sim.fd_shared_gradient(gt, probs, 1, image, h)[0]
        alpha = L.duplicate_gradient_ratio(p)
        worst = max(worst, abs(g_pair / g_single - alpha))
        if p > 0.5 and not alpha < 0:
            negative_ok = False
    at_half = abs(L.duplicate_gradient_ratio(0.5))
    report(4, worst <= 1e-6 and at_half <= 1e-12 and negative_ok,
           f"max |alpha - FD ratio| = {worst:.2e} (<= 1e-6), |alpha(0.5)| = {at_half:.1e} (<= 1e-12), "
           f"alpha < 0 for all p > 0.5: {negative_ok}")


# 5 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_05_recall_gap_trend():
    cfg = load_config(CONFIGS / "fig2_recall.yaml")
    assert cfg.seeds >= 20
    cfg = cfg.replace(recall=dataclasses.replace(cfg.recall, budgets=(300,), duplication_factors=(1, 4, 8)))
    start = time.perf_counter()
    rep = sim.run_recall_experiment(cfg)
    elapsed = time.perf_counter() - start
    gaps = [rep.summary["gap_dqr_minus_topk"][f"dup={d},budget=300"]["mean"] for d in (1, 4, 8)]
    ok = all(g >= 0 for g in gaps) and gaps[0] <= gaps[1] <= gaps[2] and elapsed < 300
    report(5, ok, f"{cfg.seeds} seeds, mean AR@300 gap (dqr - topk) at dup 1/4/8 = "
                  f"{gaps[0]:.4f}/{gaps[1]:.4f}/{gaps[2]:.4f}, {elapsed:.1f}s (< 300s)")


# 6 ---------------------------------------------------------------------------

def _kth_distance_per_level(pyr, center, k):
    out = {}
    for lv in pyr.levels:
        pts = pyr.level_points(lv.level)
        d = np.sqrt(((pts - center) ** 2).sum(1))
        out[lv.level] = np.sort(d)[min(k, lv.num_points) - 1]
    return out


@pytest.mark.slow
def test_criterion_06_center_prior():
    pyr = build_pyramid(800, 800)
    scene_cfg = SceneConfig()
    model = ResponseModel(feature_dim=0)
    outside = checked = 0
    for s in range(1000):
        scene = sim.generate_scene(scene_cfg, sim.trial_rng(606, s, 0))
        q = sim.simulate_responses(scene, pyr, model, sim.trial_rng(606, s, 1))
        gts = scene.gts.boxes
        res = center_prior_match(q, pyr, gts, k=9)
        for qi, g in res.pairs:
            center = np.array([(gts[g, 0] + gts[g, 2]) / 2, (gts[g, 1] + gts[g, 3]) / 2])
            lvl = int(q.levels[qi])
            pt = pyr.level_points(lvl)[q.indices[qi]]
            d = np.sqrt(((pt - center) ** 2).sum())
            checked += 1
            if d > _kth_distance_per_level(pyr, center, 9)[lvl]:
                outside += 1

    low_noise = ResponseModel(score_noise=0.0, box_noise=0.5, feature_dim=0)
    hits = {5: 0, 9: 0, 13: 0}
    total = 0
    for s in range(300):
        scene = sim.generate_scene(scene_cfg, sim.trial_rng(616, s, 0))
        q = sim.simulate_responses(scene, pyr, low_noise, sim.trial_rng(616, s, 1))
        gts = scene.gts.boxes
        total += len(gts)
        for k in hits:
            for qi, g in center_prior_match(q, pyr, gts, k=k).pairs:
                hits[k] += pairwise_iou(q.boxes[qi], gts[g])[0, 0] >= 0.5
    recall = {k: v / total for k, v in hits.items()}
    spread = max(recall.values()) - min(recall.values())
    report(6, outside == 0 and spread < 0.01,
           f"{checked} matches over 1000 scenes, {outside} outside top-9; matched-gt recall K=5/9/13 = "
           f"{recall[5]:.4f}/{recall[9]:.4f}/{recall[13]:.4f}, spread {spread:.4f} (< 0.01)")


# 7 ---------------------------------------------------------------------------

def test_criterion_07_roi_align():
    rng = np.random.default_rng(707)
    const_ok = True
    worst_lin = worst_oracle = 0.0
    for _ in range(100):
        h, w, c = (int(v) for v in rng.integers(2, 14, 3))
        lvl = int(rng.integers(3, 8))
        s = 2 ** lvl
        x1, y1 = rng.uniform(-s, w * s), rng.uniform(-s, h * s)
        box = [x1, y1, x1 + rng.uniform(0.5, 2 * w) * s / 2, y1 + rng.uniform(0.5, 2 * h) * s / 2]
        value = float(rng.normal())
        if not (roi_align(FeatureMap(lvl, np.full((h, w, c), value)), box) == value).all():
            const_ok = False
        f, g = rng.normal(size=(h, w, c)), rng.normal(size=(h, w, c))
        a, b = rng.normal(size=2)
        af, ag = roi_align(FeatureMap(lvl, f), box), roi_align(FeatureMap(lvl, g), box)
        mixed = roi_align(FeatureMap(lvl, a * f + b * g), box)
        worst_lin = max(worst_lin, float(np.abs(mixed - (a * af + b * ag)).max()))
        worst_oracle = max(worst_oracle, float(np.abs(af - dense_roi_align(f, box, s, (7, 7), 2)).max()))
    report(7, const_ok and worst_lin <= 1e-6 and worst_oracle <= 1e-6,
           f"constant maps bit-exact: {const_ok}; max linearity error {worst_lin:.1e}, "
           f"max dense-oracle error {worst_oracle:.1e} (<= 1e-6) over 100 cases")


# 8 ---------------------------------------------------------------------------

def _ap_scene(rng):
    gts, dets = {}, []
    for img in range(int(rng.integers(1, 4))):
        n_g = int(rng.integers(0, 11))
        xy = rng.integers(0, 50, (n_g, 2)).astype(float)
        g = np.concatenate([xy, xy + rng.integers(4, 25, (n_g, 2))], 1)
        gts[img] = g
        for _ in range(int(rng.integers(0, 11))):
            if n_g and rng.uniform() < 0.7:
                box = g[rng.integers(n_g)] + rng.integers(-4, 5, 4)
                box[2:] = np.maximum(box[2:], box[:2] + 1)
            else:
                xy = rng.integers(0, 50, 2).astype(float)
                box = np.concatenate([xy, xy + rng.integers(4, 25, 2)])
            dets.append(DetectionRecord(tuple(box), float(rng.integers(0, 8)) / 7, img))
    return dets, gts


def test_criterion_08_ap_oracle():
    rng = np.random.default_rng(808)
    mismatches = rank_failures = 0
    for _ in range(200):
        dets, gts = _ap_scene(rng)
        rep = average_precision(dets, gts)
        raw = [(d.box, d.score, d.image_id) for d in dets]
        graw = {k: v.tolist() for k, v in gts.items()}
        expect = [brute_force_ap(raw, graw, t) for t in COCO_THRESHOLDS]
        if [rep.ap_per_threshold[t] for t in COCO_THRESHOLDS] != expect or rep.ap != float(np.mean(expect)):
            mismatches += 1
        moved = [DetectionRecord(d.box, 0.05 + 0.9 * d.score ** 3, d.image_id) for d in dets]
        if average_precision(moved, gts).ap_per_threshold != rep.ap_per_threshold:
            rank_failures += 1
    report(8, mismatches == 0 and rank_failures == 0,
           f"200 scenes, {mismatches} AP mismatches vs brute force, {rank_failures} rank-invariance failures")


# 9 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_09_cli_determinism(tmp_path):
    runs = [("fig2_recall.yaml", "6"), ("gradient.yaml", "3"), ("cascade.yaml", "3")]
    differing = []
    for name, seeds in runs:
        blobs = []
        for threads in ("1", "8", "8"):
            out = tmp_path / f"{name}-{threads}-{len(blobs)}"
            env = dict(os.environ, DDQ_THREADS=threads)
            proc = subprocess.run(
                [sys.executable, "-m", "ddq.cli", "experiment", str(CONFIGS / name), "--out", str(out),
                 "--seeds", seeds],
                env=env, capture_output=True, text=True,
            )
            assert proc.returncode == 0, proc.stderr
            blobs.append((out / "results.csv").read_bytes())
        if len(set(blobs)) != 1:
            differing.append(name)
    report(9, not differing,
           f"3 experiments x runs at DDQ_THREADS 1/8/8: byte-identical CSV (differing: {differing or 'none'})")


# 10 --------------------------------------------------------------------------

def _rel_err(analytic, numeric):
    analytic, numeric = np.atleast_1d(analytic), np.atleast_1d(numeric)
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-300))


def test_criterion_10_loss_gradients():
    rng = np.random.default_rng(1010)
    h = 1e-6
    worst = {"bce": 0.0, "qfl": 0.0, "regression_l1": 0.0, "regression_giou": 0.0}
    for _ in range(100):
        p, y = rng.uniform(0.01, 0.99), rng.uniform(0, 1)
        worst["bce"] = max(worst["bce"], _rel_err(L.bce_grad(p, y), (L.bce(p + h, y) - L.bce(p - h, y)) / (2 * h)))
        worst["qfl"] = max(worst["qfl"], _rel_err(L.qfl_grad(p, y), (L.qfl(p + h, y) - L.qfl(p - h, y)) / (2 * h)))
    image = (800, 600)
    for _ in range(100):
        xy = rng.uniform(0, 500, 2)
        gt = np.concatenate([xy, xy + rng.uniform(20, 200, 2)])
        pred = gt + rng.normal(0, 15, 4)
        pred[2:] = np.maximum(pred[2:], pred[:2] + 5)
        step = h * np.maximum(np.abs(pred), 1.0)
        g1, g2 = L.regression_loss_grad(pred, gt, image)
        fd1 = central_difference(lambda b: L.regression_loss(b, gt, image)[0], pred, step)
        fd2 = central_difference(lambda b: L.regression_loss(b, gt, image)[1], pred, step)
        worst["regression_l1"] = max(worst["regression_l1"], _rel_err(g1, fd1))
        worst["regression_giou"] = max(worst["regression_giou"], _rel_err(g2, fd2))
    ok = all(v <= 1e-5 for v in worst.values())
    report(10, ok, "max relative gradient error over 100 inputs each: "
                   + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " (<= 1e-5)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
