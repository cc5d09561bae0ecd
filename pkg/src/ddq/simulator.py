"""Synthetic scenes, a parametric proposal-head stand-in, and experiments.

Randomness: every trial draws from streams derived from
``(master_seed, trial_index, purpose)`` so results do not depend on the
order or concurrency in which trials run. Trials may run on up to
``DDQ_THREADS`` worker threads; results are always reduced in trial order.
"""

from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assignment import build_cost_matrix, hungarian
from .config import ExperimentConfig, ResponseModel, SceneConfig
from .dense_queries import FeaturePyramid, QuerySet, build_pyramid
from .duplicate_removal import DqrConfig, cascade_select, nms_indices, topk_indices
from .errors import ValidationError
from .evaluation import DetectionRecord, average_precision, recall_at
from .geometry import BoxList, clip_boxes, pairwise_iou
from .losses import EPS, duplicate_gradient_ratio, set_prediction_loss, set_prediction_score_grad
from .roi_features import FeatureMap

# stream purposes inside one trial
_SCENE, _RESPONSE, _INIT = 0, 1, 2


def trial_rng(master_seed: int, trial: int, purpose: int, sub: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(trial), int(purpose), int(sub)))
    return np.random.default_rng(seq)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def worker_count() -> int:
    raw = os.environ.get("DDQ_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValidationError(f"DDQ_THREADS must be an integer, got {raw!r}") from exc
    return max(n, 1)


def map_trials(fn, n_trials: int, threads: int | None = None) -> list:
    threads = worker_count() if threads is None else max(int(threads), 1)
    if threads == 1 or n_trials <= 1:
        return [fn(t) for t in range(n_trials)]
    with ThreadPoolExecutor(max_workers=min(threads, n_trials)) as pool:
        return list(pool.map(fn, range(n_trials)))


@dataclass
class Scene:
    image_w: int
    image_h: int
    gts: BoxList
    seed: object = None

    @property
    def image_size(self) -> tuple[int, int]:
        return (self.image_w, self.image_h)


def generate_scene(cfg: SceneConfig, seed) -> Scene:
    """Place ``cfg.gt_count`` boxes by rejection sampling.

    Box scale is log-uniform in ``[min_size, max_size]`` (geometric mean of
    the sides) and aspect ratio log-uniform in ``[1/max_aspect, max_aspect]``.
    A box is rejected when its IoU with any placed box exceeds
    ``max_overlap``.
    """
    cfg.validate()
    rng = _as_rng(seed)
    w_img, h_img = float(cfg.image_w), float(cfg.image_h)
    placed = np.zeros((0, 4))
    for n in range(cfg.gt_count):
        for _ in range(cfg.max_attempts):
            scale = np.exp(rng.uniform(np.log(cfg.min_size), np.log(cfg.max_size)))
            aspect = np.exp(rng.uniform(-np.log(cfg.max_aspect), np.log(cfg.max_aspect)))
            bw = min(scale * np.sqrt(aspect), w_img)
            bh = min(scale / np.sqrt(aspect), h_img)
            x1 = rng.uniform(0.0, w_img - bw)
            y1 = rng.uniform(0.0, h_img - bh)
            cand = np.array([[x1, y1, x1 + bw, y1 + bh]])
            if placed.shape[0] == 0 or pairwise_iou(cand, placed).max() <= cfg.max_overlap:
                placed = np.concatenate([placed, cand])
                break
        else:
            raise ValidationError(
                f"could not place box {n + 1} of {cfg.gt_count} within "
                f"{cfg.max_attempts} attempts; relax max_overlap or sizes"
            )
    return Scene(cfg.image_w, cfg.image_h, BoxList(placed), seed if isinstance(seed, int) else None)


def score_boxes(boxes: np.ndarray, gts: np.ndarray, model: ResponseModel, noise: np.ndarray) -> np.ndarray:
    if gts.shape[0] == 0:
        best = np.zeros(boxes.shape[0])
    else:
        best = pairwise_iou(boxes, gts).max(axis=1)
    return np.clip(best ** model.gamma * model.quality + model.score_noise * noise, 0.0, 1.0)


def simulate_responses(scene: Scene, pyramid: FeaturePyramid, model: ResponseModel, seed) -> QuerySet:
    """One query per pyramid point times ``model.duplication``, copies of a
    point stored consecutively."""
    model.validate()
    rng = _as_rng(seed)
    pts = pyramid.points
    n_pts, dup = pts.shape[0], model.duplication
    strides = (2.0 ** pyramid.point_levels).astype(np.float64)
    half = 0.5 * model.prior_scale * strides
    base = np.stack([pts[:, 0] - half, pts[:, 1] - half, pts[:, 0] + half, pts[:, 1] + half], axis=1)
    base = base + model.box_noise * rng.standard_normal(base.shape)

    boxes = np.repeat(base, dup, axis=0)
    if dup > 1:
        size = np.repeat(np.stack([base[:, 2] - base[:, 0], base[:, 3] - base[:, 1]], axis=1), dup, axis=0)
        jitter = model.copy_jitter * rng.standard_normal(boxes.shape)
        boxes = boxes + jitter * np.concatenate([size, size], axis=1)
    boxes = clip_boxes(boxes, pyramid.image_w, pyramid.image_h)
    boxes = _sorted_corners(boxes)

    scores = score_boxes(boxes, scene.gts.boxes, model, rng.standard_normal(boxes.shape[0]))
    base_feat = rng.standard_normal((n_pts, model.feature_dim))
    feats = np.repeat(base_feat, dup, axis=0)
    if dup > 1 and model.feature_dim:
        feats = feats + 0.01 * rng.standard_normal(feats.shape)
    q = QuerySet(
        boxes, scores, feats,
        np.repeat(pyramid.point_levels, dup), np.repeat(pyramid.point_indices, dup),
        "synthetic",
    )
    q.meta["image_size"] = (pyramid.image_w, pyramid.image_h)
    return q


def _sorted_corners(boxes: np.ndarray) -> np.ndarray:
    x = np.sort(boxes[:, 0::2], axis=1)
    y = np.sort(boxes[:, 1::2], axis=1)
    return np.stack([x[:, 0], y[:, 0], x[:, 1], y[:, 1]], axis=1)


def synthesize_feature_maps(scene: Scene, pyramid: FeaturePyramid, channels: int = 8, seed=0,
                            noise: float = 0.05) -> dict[int, FeatureMap]:
    """Per-level maps with one Gaussian blob per gt (a random channel
    signature scaled by a bump at the gt center) plus white noise."""
    rng = _as_rng(seed)
    signatures = rng.standard_normal((len(scene.gts), channels))
    maps = {}
    for lv in pyramid.levels:
        ys = np.arange(lv.grid_h)[:, None]
        xs = np.arange(lv.grid_w)[None, :]
        data = noise * rng.standard_normal((lv.grid_h, lv.grid_w, channels))
        for g, box in enumerate(scene.gts.boxes):
            cx = (box[0] + box[2]) / 2.0 / lv.stride - 0.5
            cy = (box[1] + box[3]) / 2.0 / lv.stride - 0.5
            sx = max((box[2] - box[0]) / lv.stride / 4.0, 0.5)
            sy = max((box[3] - box[1]) / lv.stride / 4.0, 0.5)
            bump = np.exp(-0.5 * (((xs - cx) / sx) ** 2 + ((ys - cy) / sy) ** 2))
            data += bump[:, :, None] * signatures[g][None, None, :]
        maps[lv.level] = FeatureMap(lv.level, data)
    return maps


@dataclass
class ExperimentReport:
    experiment: str
    columns: list[str]
    rows: list[dict]
    summary: dict
    seeds: list[int]
    master_seed: int
    config: dict = field(default_factory=dict)

    def to_summary(self) -> dict:
        return {
            "experiment": self.experiment,
            "master_seed": self.master_seed,
            "seeds": self.seeds,
            "summary": self.summary,
            "config": self.config,
        }


def _mean_std(values) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std(ddof=0)), "n": int(arr.size)}


def select(q: QuerySet, method: str, budget: int, nms_iou: float) -> np.ndarray:
    if method == "topk":
        return topk_indices(q.scores, budget)
    if method == "dqr":
        return nms_indices(q.boxes, q.scores, nms_iou, budget)
    raise ValidationError(f"unknown selection method {method!r}")


def run_recall_experiment(cfg: ExperimentConfig, threads: int | None = None) -> ExperimentReport:
    """AR@budget of top-k versus duplicate-removed selection over scenes.

    Rows: one per (seed, duplication factor, budget, method).
    """
    cfg.validate()
    rc = cfg.recall
    pyramid = build_pyramid(cfg.scene.image_w, cfg.scene.image_h)

    def trial(t):
        scene = generate_scene(cfg.scene, trial_rng(cfg.master_seed, t, _SCENE))
        out = []
        for di, dup in enumerate(rc.duplication_factors):
            model = _replace(cfg.response, duplication=int(dup))
            q = simulate_responses(scene, pyramid, model, trial_rng(cfg.master_seed, t, _RESPONSE, di))
            for budget in rc.budgets:
                for method in rc.methods:
                    kept = select(q, method, int(budget), rc.nms_iou)
                    ar = recall_at(BoxList(q.boxes[kept], q.scores[kept]), scene.gts, rc.match_iou)
                    out.append({"method": method, "budget": int(budget), "duplication": int(dup),
                                "seed": t, "AR": ar})
        return out

    rows = [r for chunk in map_trials(trial, cfg.seeds, threads) for r in chunk]
    summary = {"AR": {}, "gap_dqr_minus_topk": {}}
    for dup in rc.duplication_factors:
        for budget in rc.budgets:
            key = f"dup={dup},budget={budget}"
            per_method = {}
            for method in rc.methods:
                vals = [r["AR"] for r in rows
                        if r["method"] == method and r["duplication"] == dup and r["budget"] == budget]
                per_method[method] = vals
                summary["AR"][f"{method},{key}"] = _mean_std(vals)
            if {"topk", "dqr"} <= set(per_method):
                gap = np.subtract(per_method["dqr"], per_method["topk"])
                summary["gap_dqr_minus_topk"][key] = _mean_std(gap)
    return ExperimentReport("recall", ["method", "budget", "duplication", "seed", "AR"], rows,
                            summary, list(range(cfg.seeds)), cfg.master_seed, cfg.to_dict())


def _replace(model: ResponseModel, **changes) -> ResponseModel:
    out = dataclasses.replace(model, **changes)
    out.validate()
    return out


def pool_queries(gt_boxes: np.ndarray, probs: np.ndarray, copies: int, image_size) -> QuerySet:
    """``copies`` identical queries per gt, each a perfect box with the gt's
    shared probability; copies of one gt are consecutive."""
    boxes = np.repeat(gt_boxes, copies, axis=0)
    scores = np.repeat(probs, copies)
    n = boxes.shape[0]
    q = QuerySet(boxes, scores, np.zeros((n, 0)), np.full(n, 3), np.arange(n), "synthetic")
    q.meta["image_size"] = tuple(image_size)
    return q


def pool_loss(gt_boxes, probs, copies, image_size) -> float:
    q = pool_queries(gt_boxes, probs, copies, image_size)
    match = hungarian(build_cost_matrix(q, gt_boxes, image_size=image_size))
    return set_prediction_loss(q, gt_boxes, match, image_size=image_size).total


def shared_gradient(gt_boxes, probs, copies, image_size) -> np.ndarray:
    """Analytic d(total loss)/d(shared probability of each gt) through the
    matching pipeline: per-query score gradients summed over copies."""
    q = pool_queries(gt_boxes, probs, copies, image_size)
    match = hungarian(build_cost_matrix(q, gt_boxes, image_size=image_size))
    g = set_prediction_score_grad(q, gt_boxes, match)
    return g.reshape(-1, copies).sum(axis=1)


def fd_shared_gradient(gt_boxes, probs, copies, image_size, h) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    out = np.zeros_like(probs)
    for g in range(probs.shape[0]):
        up, dn = probs.copy(), probs.copy()
        up[g] += h
        dn[g] -= h
        out[g] = (pool_loss(gt_boxes, up, copies, image_size) -
                  pool_loss(gt_boxes, dn, copies, image_size)) / (2.0 * h)
    return out


def run_gradient_experiment(cfg: ExperimentConfig, threads: int | None = None) -> ExperimentReport:
    """Score-only gradient study of duplicated versus distinct query pools.

    ``sweep`` rows measure, at each probability in ``p_grid``, the central
    finite-difference gradient of the matched BCE loss for a single gt with
    ``copies`` identical queries and with one query, and their ratio.
    ``descent`` rows run gradient descent on per-gt shared probabilities for
    both pools and record the loss, mean probability and the measured
    gradient ratio at every step.
    """
    cfg.validate()
    gc = cfg.gradient
    image = (cfg.scene.image_w, cfg.scene.image_h)
    columns = ["kind", "pool", "seed", "step", "p", "alpha_eq1", "alpha_empirical", "grad", "loss"]
    rows: list[dict] = []

    one_gt = np.array([[0.25 * image[0], 0.25 * image[1], 0.75 * image[0], 0.75 * image[1]]])
    for p in gc.p_grid:
        probs = np.array([p])
        g_dup = fd_shared_gradient(one_gt, probs, gc.copies, image, gc.fd_step)[0]
        g_one = fd_shared_gradient(one_gt, probs, 1, image, gc.fd_step)[0]
        alpha_eq1 = duplicate_gradient_ratio(p) if gc.copies == 2 else float("nan")
        rows.append({"kind": "sweep", "pool": f"copies={gc.copies}", "seed": "", "step": "",
                     "p": float(p), "alpha_eq1": alpha_eq1, "alpha_empirical": float(g_dup / g_one),
                     "grad": float(g_dup), "loss": pool_loss(one_gt, probs, gc.copies, image)})

    scene_cfg = _replace_scene(cfg.scene, gt_count=gc.gt_count)

    def trial(t):
        scene = generate_scene(scene_cfg, trial_rng(cfg.master_seed, t, _SCENE))
        gts = scene.gts.boxes
        p0 = trial_rng(cfg.master_seed, t, _INIT).uniform(gc.init_low, gc.init_high, gts.shape[0])
        out = []
        for pool, copies in (("duplicated", gc.copies), ("distinct", 1)):
            p = p0.copy()
            for step in range(gc.steps + 1):
                grad = shared_gradient(gts, p, copies, image)
                ref = shared_gradient(gts, p, 1, image)
                out.append({"kind": "descent", "pool": pool, "seed": t, "step": step,
                            "p": float(p.mean()), "alpha_eq1": float(np.mean(duplicate_gradient_ratio(p))),
                            "alpha_empirical": float(np.mean(grad / ref)),
                            "grad": float(grad.mean()), "loss": pool_loss(gts, p, copies, image)})
                p = np.clip(p - gc.lr * grad, EPS, 1.0 - 1e-6)
        return out

    for chunk in map_trials(trial, cfg.seeds, threads):
        rows.extend(chunk)

    sweep = [r for r in rows if r["kind"] == "sweep"]
    summary = {
        "max_abs_alpha_error": float(max(abs(r["alpha_empirical"] - r["alpha_eq1"]) for r in sweep))
        if sweep and gc.copies == 2 else None,
    }
    for pool in ("duplicated", "distinct"):
        final = [r for r in rows if r["kind"] == "descent" and r["pool"] == pool and r["step"] == gc.steps]
        if final:
            summary[f"final_p_{pool}"] = _mean_std([r["p"] for r in final])
            summary[f"final_loss_{pool}"] = _mean_std([r["loss"] for r in final])
    return ExperimentReport("gradient", columns, rows, summary, list(range(cfg.seeds)),
                            cfg.master_seed, cfg.to_dict())


def _replace_scene(scene: SceneConfig, **changes) -> SceneConfig:
    out = dataclasses.replace(scene, **changes)
    out.validate()
    return out


def refine(q: QuerySet, gts: np.ndarray, model: ResponseModel, shrink: float) -> QuerySet:
    """Simulated refinement stage: move each box toward its best-overlap gt
    by ``1 - shrink`` of the gap and pull its score the same fraction toward
    the noiseless quality score. ``shrink == 1`` is the identity."""
    if shrink >= 1.0 or gts.shape[0] == 0 or len(q) == 0:
        return q
    ious = pairwise_iou(q.boxes, gts)
    best = ious.argmax(axis=1)
    has = ious.max(axis=1) > 0.0
    target = gts[best]
    boxes = np.where(has[:, None], target + shrink * (q.boxes - target), q.boxes)
    clean = score_boxes(boxes, gts, _replace(model, score_noise=0.0), np.zeros(len(q)))
    scores = np.clip(q.scores + (1.0 - shrink) * (clean - q.scores), 0.0, 1.0)
    return QuerySet(boxes, scores, q.features, q.levels, q.indices, q.feature_source, dict(q.meta))


def run_cascade_experiment(cfg: ExperimentConfig, threads: int | None = None) -> ExperimentReport:
    """Per-stage survivors, recall and AP under duplicate removal with a
    query budget per stage, for each budget schedule."""
    cfg.validate()
    cc = cfg.cascade
    pyramid = build_pyramid(cfg.scene.image_w, cfg.scene.image_h)
    model = _replace(cfg.response, duplication=cc.duplication)

    def trial(t):
        scene = generate_scene(cfg.scene, trial_rng(cfg.master_seed, t, _SCENE))
        dense = simulate_responses(scene, pyramid, model, trial_rng(cfg.master_seed, t, _RESPONSE))
        gts = scene.gts.boxes
        out = []
        for sched in cc.schedules:
            dqr = DqrConfig(cc.nms_iou, tuple(sched))
            q = dense
            for stage, budget in enumerate(dqr.stage_budgets):
                q = cascade_select(q, dqr, stage)
                dets = [DetectionRecord(tuple(b), float(s), 0) for b, s in zip(q.boxes, q.scores)]
                rep = average_precision(dets, {0: gts}, ar_ks=())
                out.append({"schedule": "-".join(str(b) for b in sched), "stage": stage,
                            "budget": int(budget), "seed": t, "survivors": len(q),
                            "AR": recall_at(q.box_list(), gts, 0.5), "AP": rep.ap, "AP50": rep.ap50})
                q = refine(q, gts, model, cc.refine_shrink)
        return out

    rows = [r for chunk in map_trials(trial, cfg.seeds, threads) for r in chunk]
    summary = {}
    for sched in cc.schedules:
        label = "-".join(str(b) for b in sched)
        for stage in range(len(sched)):
            sel = [r for r in rows if r["schedule"] == label and r["stage"] == stage]
            summary[f"{label},stage={stage}"] = {
                "AR": _mean_std([r["AR"] for r in sel]),
                "AP": _mean_std([r["AP"] for r in sel]),
                "max_survivors": int(max(r["survivors"] for r in sel)),
            }
    return ExperimentReport("cascade", ["schedule", "stage", "budget", "seed", "survivors", "AR", "AP", "AP50"],
                            rows, summary, list(range(cfg.seeds)), cfg.master_seed, cfg.to_dict())


EXPERIMENT_RUNNERS = {
    "recall": run_recall_experiment,
    "gradient": run_gradient_experiment,
    "cascade": run_cascade_experiment,
}


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> ExperimentReport:
    return EXPERIMENT_RUNNERS[cfg.experiment](cfg, threads)
