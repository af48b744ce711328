"""Evaluation metrics: offset errors, sample-set likelihood, intention accuracy.

Offset errors compare one prediction against the ground truth per step (mean,
final, max of the per-step Euclidean distance). NLL scores a whole sample set
distributionally: a per-step 2D Gaussian KDE over the sample positions,
evaluated at the truth. IEA scores the final belief: correct when a
top-probability intention hits the ground-truth region or one of its
adjacent regions.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from intentraj.core import IntentionMap, Trajectory
from intentraj.data import TrajectoryRecord, write_atomic
from intentraj.filtering import read_run_log, select_top_samples, top_intentions

__all__ = [
    "aoe",
    "foe",
    "moe",
    "nll",
    "iea",
    "scott_bandwidth",
    "fixed_bandwidth",
    "align_samples",
    "EvalReport",
    "evaluate_run",
    "report_to_csv_row",
    "write_report_csv",
]

BANDWIDTH_FLOOR = 1e-3


def _pts(x) -> np.ndarray:
    pts = x.points if isinstance(x, Trajectory) else np.asarray(x, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected (n, 2) positions, got shape {pts.shape}")
    return pts


def _step_errors(pred, truth) -> np.ndarray:
    p, t = _pts(pred), _pts(truth)
    if p.shape[0] != t.shape[0]:
        raise ValueError(f"length mismatch: {p.shape[0]} vs {t.shape[0]}")
    return np.linalg.norm(p - t, axis=1)


def aoe(pred, truth) -> float:
    """Average per-step Euclidean error."""
    return float(np.mean(_step_errors(pred, truth)))


def foe(pred, truth) -> float:
    """Euclidean error at the final step."""
    return float(_step_errors(pred, truth)[-1])


def moe(pred, truth) -> float:
    """Maximum per-step Euclidean error."""
    return float(np.max(_step_errors(pred, truth)))


def scott_bandwidth(points: np.ndarray, floor: float = BANDWIDTH_FLOOR) -> tuple[float, float]:
    """Per-axis Scott's-rule bandwidth (n^(-1/6) * sigma for 2D), floored.

    The floor guards collapsed sample sets (n = 1, or identical points).
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n < 2:
        return floor, floor
    factor = n ** (-1.0 / 6.0)
    sx = float(np.std(points[:, 0], ddof=1))
    sy = float(np.std(points[:, 1], ddof=1))
    return max(factor * sx, floor), max(factor * sy, floor)


def fixed_bandwidth(h: float):
    """Bandwidth rule holding both axes at ``h``."""
    if h <= 0:
        raise ValueError("bandwidth must be positive")

    def rule(points: np.ndarray) -> tuple[float, float]:
        return h, h

    return rule


def align_samples(samples: list, horizon: int) -> np.ndarray:
    """Stack samples to ``(n, horizon, 2)``: truncate long, hold-pad short."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    out = np.empty((len(samples), horizon, 2))
    for i, s in enumerate(samples):
        p = _pts(s)
        k = min(p.shape[0], horizon)
        out[i, :k] = p[:k]
        if k < horizon:
            out[i, k:] = p[k - 1]
    return out


def nll(samples: list, truth, bandwidth_rule=scott_bandwidth) -> float:
    """Mean negative log likelihood of the truth under per-step sample KDEs.

    At each step a diagonal-bandwidth Gaussian KDE is fit over all sample
    positions and evaluated at the truth position. Densities are clamped at
    the smallest positive float so the result stays finite.
    """
    truth_pts = _pts(truth)
    horizon = truth_pts.shape[0]
    if len(samples) < 1:
        raise ValueError("need at least one sample")
    stack = np.stack([_pts(s) for s in samples])
    if stack.shape[1] != horizon:
        raise ValueError(f"samples have horizon {stack.shape[1]}, truth has {horizon}")
    total = 0.0
    tiny = np.finfo(float).tiny
    for k in range(horizon):
        pts = stack[:, k, :]
        hx, hy = bandwidth_rule(pts)
        q = ((truth_pts[k, 0] - pts[:, 0]) / hx) ** 2 + ((truth_pts[k, 1] - pts[:, 1]) / hy) ** 2
        density = float(np.mean(np.exp(-0.5 * q))) / (2.0 * math.pi * hx * hy)
        total += -math.log(max(density, tiny))
    return total / horizon


def iea(final_belief: np.ndarray, nti: int, gt_intention: int, imap: IntentionMap) -> bool:
    """Correct when a top-nti intention is the ground truth or adjacent to it."""
    if not 0 <= gt_intention < len(imap):
        raise ValueError(f"unknown intention id {gt_intention}")
    accept = {gt_intention} | set(imap.adjacent(gt_intention))
    return bool(top_intentions(final_belief, nti) & accept)


@dataclass
class EvalReport:
    """Aggregate metrics over a set of filter runs, plus per-trajectory rows."""

    nti: int
    num_trajectories: int
    iea: float
    nll: float
    min_aoe: float
    min_foe: float
    mean_aoe: float
    mean_foe: float
    moe: float
    config: dict = field(default_factory=dict)
    rows: list[dict] = field(default_factory=list)

    def to_jsonable(self) -> dict:
        return {
            "nti": self.nti,
            "num_trajectories": self.num_trajectories,
            "iea": self.iea,
            "nll": self.nll,
            "min_aoe": self.min_aoe,
            "min_foe": self.min_foe,
            "mean_aoe": self.mean_aoe,
            "mean_foe": self.mean_foe,
            "moe": self.moe,
            "config": self.config,
            "rows": self.rows,
        }


def evaluate_run(
    runs: list,
    test_records: list[TrajectoryRecord],
    imap: IntentionMap,
    nti: int,
    bandwidth_rule=scott_bandwidth,
) -> EvalReport:
    """Score each trajectory's final filter iteration over the lookback horizon.

    ``runs`` holds log paths or (header, iterations) pairs. Every test record
    must have a matching run (by pedestrian id); offset metrics are min/mean
    over the top-nti sample subset, and IEA uses the final belief against the
    record's (post-switch) goal region.
    """
    by_ped = {}
    for run in runs:
        header, iters = read_run_log(run) if isinstance(run, (str, Path)) else run
        by_ped[header["ped_id"]] = (header, iters)

    rows = []
    config = {}
    for rec in test_records:
        if rec.ped_id not in by_ped:
            raise ValueError(f"no run log for record {rec.ped_id}")
        header, iters = by_ped[rec.ped_id]
        if not iters:
            raise ValueError(f"empty run log for record {rec.ped_id}")
        config = header.get("config", {})
        lookback = int(config.get("lookback", 20))
        final = iters[-1]
        if not isinstance(final, dict):  # in-memory IterationResult
            final = final.to_jsonable()
        t = int(final["frame"])
        if t + lookback > len(rec.trajectory):
            raise ValueError(
                f"{rec.ped_id}: no {lookback}-frame ground truth after frame {t}"
            )
        truth = rec.trajectory.points[t:t + lookback]
        belief = np.asarray(final["belief"], dtype=float)
        intentions = np.asarray(final["intentions"], dtype=np.int64)
        samples = align_samples(final["samples"], lookback)
        subset = select_top_samples(list(samples), intentions, belief, nti)
        chosen = samples[subset]

        step_err = np.linalg.norm(chosen - truth, axis=2)  # (n_subset, lookback)
        aoes = step_err.mean(axis=1)
        foes = step_err[:, -1]
        moes = step_err.max(axis=1)
        row = {
            "ped_id": rec.ped_id,
            "frame": t,
            "num_selected": int(len(subset)),
            "min_aoe": float(aoes.min()),
            "min_foe": float(foes.min()),
            "mean_aoe": float(aoes.mean()),
            "mean_foe": float(foes.mean()),
            "moe": float(moes.mean()),
            "nll": nll(list(chosen), truth, bandwidth_rule),
            "iea": bool(iea(belief, nti, rec.goal_region_id, imap))
            if rec.goal_region_id is not None
            else None,
        }
        rows.append(row)

    if not rows:
        raise ValueError("no records to evaluate")
    labeled = [r for r in rows if r["iea"] is not None]
    return EvalReport(
        nti=nti,
        num_trajectories=len(rows),
        iea=float(np.mean([r["iea"] for r in labeled])) if labeled else float("nan"),
        nll=float(np.mean([r["nll"] for r in rows])),
        min_aoe=float(np.mean([r["min_aoe"] for r in rows])),
        min_foe=float(np.mean([r["min_foe"] for r in rows])),
        mean_aoe=float(np.mean([r["mean_aoe"] for r in rows])),
        mean_foe=float(np.mean([r["mean_foe"] for r in rows])),
        moe=float(np.mean([r["moe"] for r in rows])),
        config=config,
        rows=rows,
    )


REPORT_COLUMNS = (
    "model", "tau", "p_mutation", "nti",
    "iea", "nll", "min_aoe", "min_foe", "mean_aoe", "mean_foe", "moe",
    "num_trajectories",
)


def report_to_csv_row(report: EvalReport, model: str = "") -> list:
    cfg = report.config
    return [
        model, cfg.get("tau"), cfg.get("p_mutation"), report.nti,
        report.iea, report.nll, report.min_aoe, report.min_foe,
        report.mean_aoe, report.mean_foe, report.moe,
        report.num_trajectories,
    ]


def write_report_csv(reports: list[tuple[str, EvalReport]], path: str | Path) -> None:
    """Flat CSV: one row per (model, nti) report."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for model, report in reports:
        writer.writerow(report_to_csv_row(report, model))
    write_atomic(path, out.getvalue())


def write_report_json(report: EvalReport, path: str | Path) -> None:
    write_atomic(path, json.dumps(report.to_jsonable(), indent=1, sort_keys=True) + "\n")
