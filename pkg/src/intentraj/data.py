"""Corpus ingestion, goal maps, train/test splitting, and synthetic trajectories.

File formats owned by this module:

- normalized trajectory CSV: header ``ped_id,frame,x,y``, one row per frame,
  frames contiguous per pedestrian, UTF-8, decimal point;
- Edinburgh-style raw rows: ``id frame x y`` (whitespace or comma separated,
  no header), with an optional uniform scale factor for unit conversion;
- goal-map JSON: ``{"regions": [{"id", "cx", "cy", "half_width"}, ...],
  "adjacency": {"0": [1, 2], ...}}``;
- corpus manifest JSON: config echo, list of record files, and per-record
  metadata (goal label, switch frame) that the CSV alone cannot carry.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from intentraj.core import GoalRegion, IntentionMap, Position, Trajectory

__all__ = [
    "TrajectoryRecord",
    "SynthConfig",
    "load_trajectories",
    "load_map",
    "save_map",
    "build_boundary_map",
    "generate_synthetic",
    "split_corpus",
    "save_corpus",
    "load_corpus",
    "write_atomic",
]

DEFAULT_FRAME_INTERVAL = 0.1


@dataclass(frozen=True)
class TrajectoryRecord:
    """One pedestrian's trajectory plus optional ground-truth annotations."""

    ped_id: str
    trajectory: Trajectory
    goal_region_id: int | None = None
    switch_frame: int | None = None

    def __post_init__(self) -> None:
        if self.switch_frame is not None and not 0 < self.switch_frame < len(self.trajectory):
            raise ValueError(
                f"switch_frame {self.switch_frame} outside (0, {len(self.trajectory)})"
            )


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic trajectory generator.

    ``speed_range`` is in meters per frame interval. ``curvature_amplitude``
    scales a lateral sinusoidal bow relative to the start-goal distance.
    """

    map: IntentionMap
    num_trajectories: int = 100
    speed_range: tuple[float, float] = (0.08, 0.15)
    heading_noise_std: float = 0.0
    position_noise_std: float = 0.0
    curvature_amplitude: float = 0.0
    intention_switch_probability: float = 0.0
    rng_seed: int = 0
    frame_interval: float = DEFAULT_FRAME_INTERVAL

    def __post_init__(self) -> None:
        if self.num_trajectories < 0:
            raise ValueError("num_trajectories must be >= 0")
        lo, hi = self.speed_range
        if not 0 < lo <= hi:
            raise ValueError(f"invalid speed_range {self.speed_range}")
        for name in ("heading_noise_std", "position_noise_std", "curvature_amplitude"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 <= self.intention_switch_probability <= 1:
            raise ValueError("intention_switch_probability must be in [0, 1]")

    def params_dict(self) -> dict:
        """Generator parameters without the map, for manifest echoes."""
        return {
            "num_trajectories": self.num_trajectories,
            "speed_range": list(self.speed_range),
            "heading_noise_std": self.heading_noise_std,
            "position_noise_std": self.position_noise_std,
            "curvature_amplitude": self.curvature_amplitude,
            "intention_switch_probability": self.intention_switch_probability,
            "rng_seed": self.rng_seed,
            "frame_interval": self.frame_interval,
        }


def write_atomic(path: str | Path, text: str) -> None:
    """Write a text file via temp + rename so readers never see partial output."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Goal maps
# ---------------------------------------------------------------------------


def build_boundary_map(
    bounds: tuple[float, float, float, float], num_regions: int, side: float = 1.5
) -> IntentionMap:
    """Evenly spaced square goal regions along a rectangle's perimeter.

    Regions are ordered counter-clockwise starting from the bottom-left
    corner; adjacency links each region to its two perimeter neighbors
    (wrap-around), forming a single cycle.
    """
    xmin, ymin, xmax, ymax = bounds
    w, h = xmax - xmin, ymax - ymin
    if w <= 0 or h <= 0:
        raise ValueError(f"degenerate bounds {bounds}")
    if num_regions < 2:
        raise ValueError("need at least 2 regions")
    if side <= 0:
        raise ValueError("side must be positive")
    perimeter = 2 * (w + h)
    if perimeter / num_regions < side:
        raise ValueError(
            f"{num_regions} regions of side {side} do not fit on perimeter {perimeter:.3f}"
        )

    regions = []
    for i in range(num_regions):
        s = perimeter * i / num_regions
        regions.append(GoalRegion(id=i, center=_perimeter_point(bounds, s), half_width=side / 2))
    n = num_regions
    adjacency = {i: {(i - 1) % n, (i + 1) % n} - {i} for i in range(n)}
    return IntentionMap(regions=tuple(regions), adjacency=adjacency)


def _perimeter_point(bounds, s: float) -> Position:
    """Point at arc length ``s`` along the rectangle, counter-clockwise from bottom-left."""
    xmin, ymin, xmax, ymax = bounds
    w, h = xmax - xmin, ymax - ymin
    s = s % (2 * (w + h))
    if s < w:
        return Position(xmin + s, ymin)
    s -= w
    if s < h:
        return Position(xmax, ymin + s)
    s -= h
    if s < w:
        return Position(xmax - s, ymax)
    s -= w
    return Position(xmin, ymax - s)


def save_map(imap: IntentionMap, path: str | Path) -> None:
    payload = {
        "regions": [
            {"id": r.id, "cx": r.center.x, "cy": r.center.y, "half_width": r.half_width}
            for r in imap.regions
        ],
        "adjacency": {str(rid): sorted(imap.adjacent(rid)) for rid in range(len(imap))},
    }
    write_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_map(path: str | Path) -> IntentionMap:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    regions = tuple(
        GoalRegion(id=int(r["id"]), center=Position(float(r["cx"]), float(r["cy"])),
                   half_width=float(r["half_width"]))
        for r in sorted(payload["regions"], key=lambda r: int(r["id"]))
    )
    adjacency = {int(k): set(v) for k, v in payload.get("adjacency", {}).items()}
    return IntentionMap(regions=regions, adjacency=adjacency)


# ---------------------------------------------------------------------------
# Trajectory ingestion
# ---------------------------------------------------------------------------


def load_trajectories(
    source,
    format: str = "normalized_csv",
    imap: IntentionMap | None = None,
    scale: float | None = None,
    frame_interval: float = DEFAULT_FRAME_INTERVAL,
) -> list[TrajectoryRecord]:
    """Parse trajectories from a path or text stream.

    ``format`` is ``"normalized_csv"`` (header ``ped_id,frame,x,y``) or
    ``"edinburgh"`` (headerless ``id frame x y`` rows, whitespace or comma
    separated; ``scale`` multiplies raw coordinates, e.g. pixels to meters —
    the conversion factor is dataset-specific and user-supplied).

    Rows are grouped by pedestrian and sorted by frame. Records shorter than
    two frames are dropped. When ``imap`` is given, each record whose final
    position falls inside a region gets that region id as its goal label.
    """
    if format not in ("normalized_csv", "edinburgh"):
        raise ValueError(f"unknown format {format!r}")
    if hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")

    rows = _parse_rows(text, format)
    by_ped: dict[str, list[tuple[int, float, float]]] = {}
    for ped_id, frame, x, y in rows:
        by_ped.setdefault(ped_id, []).append((frame, x, y))

    k = 1.0 if scale is None else float(scale)
    records = []
    for ped_id, frames in by_ped.items():
        frames.sort(key=lambda r: r[0])
        if len(frames) < 2:
            continue
        pts = np.array([[x * k, y * k] for _, x, y in frames], dtype=float)
        traj = Trajectory(pts, frame_interval)
        goal_id = imap.locate(traj.final_position()) if imap is not None else None
        records.append(TrajectoryRecord(ped_id=ped_id, trajectory=traj, goal_region_id=goal_id))
    return records


def _parse_rows(text: str, format: str) -> list[tuple[str, int, float, float]]:
    rows = []
    if format == "normalized_csv":
        reader = csv.reader(io.StringIO(text))
        lines = list(reader)
        if not lines:
            return []
        header, body, start = lines[0], lines[1:], 2
        if [c.strip() for c in header] != ["ped_id", "frame", "x", "y"]:
            raise ValueError(f"row 1: expected header 'ped_id,frame,x,y', got {header}")
        for lineno, cells in enumerate(body, start=start):
            if not cells or (len(cells) == 1 and not cells[0].strip()):
                continue
            if len(cells) != 4:
                raise ValueError(f"row {lineno}: expected 4 fields, got {len(cells)}")
            try:
                rows.append((cells[0], int(cells[1]), float(cells[2]), float(cells[3])))
            except ValueError as exc:
                raise ValueError(f"row {lineno}: {exc}") from None
    else:  # edinburgh
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = line.replace(",", " ").split()
            if len(cells) != 4:
                raise ValueError(f"row {lineno}: expected 4 fields, got {len(cells)}")
            try:
                rows.append((cells[0], int(float(cells[1])), float(cells[2]), float(cells[3])))
            except ValueError as exc:
                raise ValueError(f"row {lineno}: {exc}") from None
    return rows


def records_to_csv(records: list[TrajectoryRecord]) -> str:
    """Render records in the normalized CSV format (frames 0-based per pedestrian)."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["ped_id", "frame", "x", "y"])
    for rec in records:
        for frame, (x, y) in enumerate(rec.trajectory.points):
            writer.writerow([rec.ped_id, frame, repr(float(x)), repr(float(y))])
    return out.getvalue()


def save_corpus(
    records: list[TrajectoryRecord],
    out_dir: str | Path,
    config: SynthConfig | None = None,
    csv_name: str = "trajectories.csv",
) -> Path:
    """Write a corpus directory (CSV + manifest); returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_atomic(out_dir / csv_name, records_to_csv(records))
    frame_interval = records[0].trajectory.frame_interval if records else DEFAULT_FRAME_INTERVAL
    manifest = {
        "format": "intentraj-corpus",
        "version": 1,
        "frame_interval": frame_interval,
        "files": [csv_name],
        "config": config.params_dict() if config is not None else None,
        "records": [
            {
                "ped_id": rec.ped_id,
                "goal_region_id": rec.goal_region_id,
                "switch_frame": rec.switch_frame,
                "num_frames": len(rec.trajectory),
            }
            for rec in records
        ],
    }
    manifest_path = out_dir / "manifest.json"
    write_atomic(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def load_corpus(manifest_path: str | Path) -> list[TrajectoryRecord]:
    """Load a corpus directory written by :func:`save_corpus`."""
    manifest_path = Path(manifest_path)
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    frame_interval = float(manifest.get("frame_interval", DEFAULT_FRAME_INTERVAL))
    records: list[TrajectoryRecord] = []
    for name in manifest["files"]:
        records.extend(
            load_trajectories(manifest_path.parent / name, "normalized_csv",
                              frame_interval=frame_interval)
        )
    meta = {m["ped_id"]: m for m in manifest.get("records", [])}
    out = []
    for rec in records:
        m = meta.get(rec.ped_id)
        if m is None:
            out.append(rec)
            continue
        out.append(
            replace(
                rec,
                goal_region_id=m.get("goal_region_id"),
                switch_frame=m.get("switch_frame"),
            )
        )
    return out


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------


def generate_synthetic(config: SynthConfig) -> list[TrajectoryRecord]:
    """Generate goal-directed trajectories over the map's arena.

    Each trajectory starts on the arena boundary (the bounding rectangle of
    the region centers), heads toward a goal position sampled uniformly in a
    random region, and optionally re-targets a different region once midway
    (recorded as ``switch_frame``). Generation is deterministic given
    ``rng_seed``: trajectory ``i`` uses the substream seeded ``(seed, i)``,
    so records are independent of generation order.
    """
    imap = config.map
    centers = imap.centers()
    bounds = (
        float(centers[:, 0].min()),
        float(centers[:, 1].min()),
        float(centers[:, 0].max()),
        float(centers[:, 1].max()),
    )
    diag = math.hypot(bounds[2] - bounds[0], bounds[3] - bounds[1])
    records = []
    for i in range(config.num_trajectories):
        rng = np.random.default_rng([config.rng_seed, i])
        records.append(_generate_one(config, imap, bounds, diag, i, rng))
    return records


def _generate_one(config, imap, bounds, diag, index: int, rng) -> TrajectoryRecord:
    m = len(imap)
    region_id = int(rng.integers(m))
    goal = _sample_in_region(imap.region(region_id), rng)
    start = _sample_start(bounds, diag, goal, rng)
    speed = float(rng.uniform(*config.speed_range))

    leg1 = _curved_leg(start, goal, speed, config, rng)
    switch_frame = None
    if rng.uniform() < config.intention_switch_probability and m >= 2:
        lo = max(1, int(0.35 * (len(leg1) - 1)))
        hi = max(lo + 1, int(0.65 * (len(leg1) - 1)))
        switch_frame = int(rng.integers(lo, hi))
        other = int(rng.integers(m - 1))
        region_id = other + 1 if other >= region_id else other
        goal = _sample_in_region(imap.region(region_id), rng)
        leg2 = _curved_leg(leg1[switch_frame], goal, speed, config, rng)
        points = np.vstack([leg1[: switch_frame + 1], leg2[1:]])
    else:
        points = leg1

    # Force the endpoint into the labeled region so the label invariant holds
    # exactly even under noise.
    region = imap.region(region_id)
    points[-1, 0] = min(max(points[-1, 0], region.center.x - region.half_width),
                        region.center.x + region.half_width)
    points[-1, 1] = min(max(points[-1, 1], region.center.y - region.half_width),
                        region.center.y + region.half_width)

    return TrajectoryRecord(
        ped_id=f"synth-{index:05d}",
        trajectory=Trajectory(points, config.frame_interval),
        goal_region_id=region_id,
        switch_frame=switch_frame,
    )


def _sample_in_region(region: GoalRegion, rng) -> np.ndarray:
    offsets = rng.uniform(-region.half_width, region.half_width, size=2)
    return np.array([region.center.x + offsets[0], region.center.y + offsets[1]])


def _sample_start(bounds, diag, goal, rng) -> np.ndarray:
    """Boundary point at a workable distance from the goal (bounded retries)."""
    xmin, ymin, xmax, ymax = bounds
    perimeter = 2 * (xmax - xmin + ymax - ymin)
    start = None
    for _ in range(20):
        p = _perimeter_point(bounds, float(rng.uniform(0, perimeter)))
        start = np.array([p.x, p.y])
        if np.hypot(*(start - goal)) >= 0.3 * diag:
            break
    return start


def _curved_leg(start: np.ndarray, goal: np.ndarray, speed: float, config, rng) -> np.ndarray:
    """One goal-directed leg: straight baseline, sinusoidal bow, per-frame noise.

    The step count is rounded up and the baseline spaced evenly, so a
    noiseless leg is an exactly uniform polyline ending at the goal.
    """
    delta = goal - start
    dist = float(np.hypot(*delta))
    steps = max(2, math.ceil(dist / speed))
    s = np.arange(steps + 1, dtype=float)[:, None] / steps
    points = start + s * delta

    if config.curvature_amplitude > 0 and dist > 0:
        normal = np.array([-delta[1], delta[0]]) / dist
        sign = 1.0 if rng.integers(2) == 1 else -1.0
        bow = sign * config.curvature_amplitude * dist * np.sin(np.pi * s)
        points = points + bow * normal

    if config.heading_noise_std > 0:
        # Rotate each displacement by iid angular noise; accumulate only the
        # perturbation so the zero-noise path is untouched bitwise.
        d = np.diff(points, axis=0)
        ang = rng.normal(0.0, config.heading_noise_std, size=steps)
        cos, sin = np.cos(ang), np.sin(ang)
        rotated = np.stack([cos * d[:, 0] - sin * d[:, 1], sin * d[:, 0] + cos * d[:, 1]], axis=1)
        points[1:] += np.cumsum(rotated - d, axis=0)

    if config.position_noise_std > 0:
        points[1:] += rng.normal(0.0, config.position_noise_std, size=(steps, 2))

    return points


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------


def split_corpus(
    records: list[TrajectoryRecord], train_fraction: float, rng_seed: int
) -> tuple[list[TrajectoryRecord], list[TrajectoryRecord]]:
    """Disjoint random partition; sizes within one record of the fraction."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be strictly between 0 and 1")
    n = len(records)
    order = np.random.default_rng(rng_seed).permutation(n)
    n_train = int(round(n * train_fraction))
    train_idx = set(order[:n_train].tolist())
    train = [records[i] for i in range(n) if i in train_idx]
    test = [records[i] for i in range(n) if i not in train_idx]
    return train, test
