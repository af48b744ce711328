"""Domain types shared by every other module.

Positions and trajectories are immutable value objects backed by float64
numpy arrays; goal regions are axis-aligned squares identified by integer
ids and organized into an :class:`IntentionMap` with symmetric adjacency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Position",
    "Trajectory",
    "GoalRegion",
    "IntentionMap",
    "segment_distance",
    "average_step_length",
    "region_contains",
]


@dataclass(frozen=True)
class Position:
    """A 2D global position in meters."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"position coordinates must be finite, got ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    @classmethod
    def from_array(cls, a) -> "Position":
        return cls(float(a[0]), float(a[1]))


class Trajectory:
    """A time-ordered sequence of 2D positions with a fixed frame interval.

    The underlying ``(n, 2)`` float64 array is made read-only on
    construction, so trajectories may be shared freely across threads.
    ``frame_interval`` is carried for plotting and ingestion fidelity; all
    per-frame math is interval-free.
    """

    __slots__ = ("_points", "frame_interval")

    def __init__(self, points, frame_interval: float = 0.1):
        pts = np.array(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"expected an (n, 2) array of positions, got shape {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("trajectory must contain at least one position")
        if not np.all(np.isfinite(pts)):
            raise ValueError("trajectory contains non-finite coordinates")
        if frame_interval <= 0:
            raise ValueError("frame_interval must be positive")
        pts.setflags(write=False)
        object.__setattr__(self, "_points", pts)
        object.__setattr__(self, "frame_interval", float(frame_interval))

    def __setattr__(self, name, value):
        raise AttributeError("Trajectory is immutable")

    @property
    def points(self) -> np.ndarray:
        """Read-only ``(n, 2)`` array of positions."""
        return self._points

    def __len__(self) -> int:
        return self._points.shape[0]

    def __getitem__(self, i: int) -> np.ndarray:
        return self._points[i]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Trajectory)
            and self.frame_interval == other.frame_interval
            and self._points.shape == other.points.shape
            and bool(np.all(self._points == other.points))
        )

    def __repr__(self) -> str:
        return f"Trajectory(len={len(self)}, start={tuple(self._points[0])}, end={tuple(self._points[-1])})"

    def final_position(self) -> Position:
        return Position.from_array(self._points[-1])

    def prefix(self, n: int) -> "Trajectory":
        """First ``n`` frames as a new trajectory."""
        if not 1 <= n <= len(self):
            raise ValueError(f"prefix length {n} out of range for trajectory of length {len(self)}")
        return Trajectory(self._points[:n], self.frame_interval)

    def segment(self, start: int, stop: int) -> "Trajectory":
        """Frames ``start:stop`` (python slice convention) as a new trajectory."""
        pts = self._points[start:stop]
        return Trajectory(pts, self.frame_interval)

    def translated(self, offset) -> "Trajectory":
        return Trajectory(self._points + np.asarray(offset, dtype=float), self.frame_interval)


@dataclass(frozen=True)
class GoalRegion:
    """An axis-aligned square goal region: ``center`` plus/minus ``half_width``."""

    id: int
    center: Position
    half_width: float = 0.75

    def __post_init__(self) -> None:
        if self.half_width <= 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")


@dataclass(frozen=True)
class IntentionMap:
    """The finite set of goal regions G_0..G_{m-1} with adjacency structure.

    Region ids must be exactly 0..m-1 in list order and adjacency must be
    symmetric; both are checked at construction.
    """

    regions: tuple[GoalRegion, ...]
    adjacency: dict[int, frozenset[int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        regions = tuple(self.regions)
        object.__setattr__(self, "regions", regions)
        ids = [r.id for r in regions]
        if ids != list(range(len(regions))):
            raise ValueError("region ids must be 0..m-1 in order")
        adjacency = {int(k): frozenset(int(v) for v in vs) for k, vs in self.adjacency.items()}
        for rid in range(len(regions)):
            adjacency.setdefault(rid, frozenset())
        for rid, neighbors in adjacency.items():
            if rid not in range(len(regions)):
                raise ValueError(f"adjacency references unknown region id {rid}")
            for n in neighbors:
                if n not in range(len(regions)):
                    raise ValueError(f"adjacency references unknown region id {n}")
                if rid not in adjacency[n]:
                    raise ValueError(f"adjacency is not symmetric: {rid} -> {n}")
        object.__setattr__(self, "adjacency", adjacency)

    def __len__(self) -> int:
        return len(self.regions)

    def region(self, rid: int) -> GoalRegion:
        return self.regions[rid]

    def adjacent(self, rid: int) -> frozenset[int]:
        return self.adjacency[rid]

    def centers(self) -> np.ndarray:
        """``(m, 2)`` array of region centers."""
        return np.array([[r.center.x, r.center.y] for r in self.regions], dtype=float)

    def locate(self, p: Position) -> int | None:
        """Id of the first region containing ``p``, or None."""
        for r in self.regions:
            if region_contains(r, p):
                return r.id
        return None


def segment_distance(a: Trajectory, b: Trajectory) -> float:
    """Euclidean norm of the flattened difference of two equal-length segments.

    This is the L2 distance used to compare a predicted segment against the
    observed ground truth; it is a metric on equal-length sequences.
    """
    if len(a) != len(b):
        raise ValueError(f"segment length mismatch: {len(a)} vs {len(b)}")
    return float(np.linalg.norm(a.points - b.points))


def average_step_length(traj: Trajectory) -> float:
    """Mean Euclidean displacement between consecutive frames."""
    if len(traj) < 2:
        raise ValueError("average step length needs at least two frames of history")
    steps = np.diff(traj.points, axis=0)
    return float(np.mean(np.linalg.norm(steps, axis=1)))


def region_contains(region: GoalRegion, p: Position) -> bool:
    """Boundary-inclusive membership test for the region's square."""
    return (
        abs(p.x - region.center.x) <= region.half_width
        and abs(p.y - region.center.y) <= region.half_width
    )
