"""Particle filter over goal-region hypotheses with intention mutation.

Each of the M particles carries a weight and a goal-region hypothesis. One
filter iteration at observation length t:

1. predict from the prefix x[. : t-T_f] under every hypothesis and keep the
   first T_f steps (padding short horizons by holding the endpoint);
2. reweight by exp(-tau * L2 distance) against the observed tail x[t-T_f : t]
   and renormalize;
3. systematic resampling back to uniform weights;
4. mutate each hypothesis with a small probability to a different region,
   which keeps every intention recoverable after the population collapses;
5. aggregate particle counts into a belief over intentions;
6. emit one long-horizon prediction sample per particle from the full
   history.

Until the observation is longer than T_f + 1 there is no tail to compare
against, so iterations run in warm-up mode: belief and samples are emitted
but weights stay untouched.

Per-particle prediction is embarrassingly parallel; the reference
implementation vectorizes it instead (see ``predict_batch`` on the motion
model). The filter itself is single-writer: weight update, resampling,
mutation, and aggregation are serial barriers.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from intentraj.core import IntentionMap, Position, Trajectory, average_step_length
from intentraj.data import TrajectoryRecord, write_atomic
from intentraj.motion import EPS_SPEED, T_MAX, MotionModel

__all__ = [
    "FilterConfig",
    "Particle",
    "ParticleSet",
    "IterationResult",
    "WarmupError",
    "IntentionFilter",
    "init_particles",
    "truncated_predict",
    "weight_update",
    "resample_sir",
    "mutate_intentions",
    "aggregate_belief",
    "top_intentions",
    "select_top_samples",
    "run_filter_on_record",
    "write_run_log",
    "read_run_log",
]


@dataclass(frozen=True)
class FilterConfig:
    """Filter hyperparameters.

    ``tau`` trades exploration against exploitation in the weight update;
    both published settings (1 and 10) are reasonable defaults depending on
    how aggressively the belief should converge.
    """

    num_particles: int = 340
    tau: float = 1.0
    p_mutation: float = 0.01
    lookback: int = 20
    iterate_every: int = 2
    nti: int = 1
    eps_speed: float = EPS_SPEED
    t_max: int = T_MAX

    def __post_init__(self) -> None:
        if self.num_particles < 1:
            raise ValueError("num_particles must be >= 1")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if not 0 <= self.p_mutation <= 1:
            raise ValueError("p_mutation must be in [0, 1]")
        if self.lookback < 1 or self.iterate_every < 1 or self.nti < 1:
            raise ValueError("lookback, iterate_every, and nti must be >= 1")

    def params_dict(self) -> dict:
        return {
            "num_particles": self.num_particles,
            "tau": self.tau,
            "p_mutation": self.p_mutation,
            "lookback": self.lookback,
            "iterate_every": self.iterate_every,
            "nti": self.nti,
        }


class Particle(NamedTuple):
    weight: float
    intention_id: int
    last_prediction: np.ndarray | None


@dataclass
class ParticleSet:
    """Weights and intention hypotheses for all M particles."""

    weights: np.ndarray
    intentions: np.ndarray
    last_predictions: list[np.ndarray] | None = None

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        self.intentions = np.asarray(self.intentions, dtype=np.int64)
        if self.weights.shape != self.intentions.shape or self.weights.ndim != 1:
            raise ValueError("weights and intentions must be equal-length 1D arrays")

    def __len__(self) -> int:
        return self.weights.shape[0]

    def particle(self, i: int) -> Particle:
        pred = None if self.last_predictions is None else self.last_predictions[i]
        return Particle(float(self.weights[i]), int(self.intentions[i]), pred)


@dataclass
class IterationResult:
    """Everything one filter iteration yields, as logged."""

    frame: int
    belief: np.ndarray
    weighted_belief: np.ndarray
    ess: float
    mutations: int
    warmup: bool
    underflow: bool
    intentions: np.ndarray
    samples: list[np.ndarray]

    def to_jsonable(self) -> dict:
        return {
            "frame": self.frame,
            "belief": self.belief.tolist(),
            "weighted_belief": self.weighted_belief.tolist(),
            "ess": self.ess,
            "mutations": self.mutations,
            "warmup": self.warmup,
            "underflow": self.underflow,
            "intentions": self.intentions.tolist(),
            "samples": [s.tolist() for s in self.samples],
        }


class WarmupError(ValueError):
    """Observation too short for a truncated comparison; skip the weight update."""


def init_particles(imap: IntentionMap, num_particles: int, rng: np.random.Generator) -> ParticleSet:
    """Uniform weights, intentions i.i.d. uniform over the map."""
    if num_particles < 1:
        raise ValueError("num_particles must be >= 1")
    if len(imap) < 1:
        raise ValueError("map must contain at least one region")
    weights = np.full(num_particles, 1.0 / num_particles)
    intentions = rng.integers(0, len(imap), size=num_particles)
    return ParticleSet(weights=weights, intentions=intentions)


def _sample_goals(imap: IntentionMap, intentions: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Fresh goal positions, one uniform draw inside each particle's region."""
    centers = imap.centers()[intentions]
    half_widths = np.array([imap.region(int(i)).half_width for i in intentions])[:, None]
    return centers + rng.uniform(-half_widths, half_widths, size=(len(intentions), 2))


def _horizons(history: Trajectory, goals: np.ndarray, config: FilterConfig) -> np.ndarray:
    """Vectorized time-to-go for many goals from one shared history."""
    speed = max(average_step_length(history), config.eps_speed)
    dists = np.linalg.norm(goals - history.points[-1], axis=1)
    steps = np.ceil((dists / speed) * (1.0 - 1e-12)).astype(np.int64)
    return np.clip(steps, 1, config.t_max)


def _predict_batch(
    model: MotionModel,
    history: Trajectory,
    goals: np.ndarray,
    steps: np.ndarray,
    upto: int | None,
) -> np.ndarray | list[np.ndarray]:
    """Per-particle predictions, vectorized when the model supports it.

    With ``upto`` set, returns an (M, upto, 2) array padded by holding each
    prediction's final position; otherwise a ragged list of (T_i, 2) arrays.
    """
    if hasattr(model, "predict_batch"):
        grid = model.predict_batch(history, goals, steps, upto=upto)
        if upto is not None:
            return grid
        return [grid[i, : steps[i]].copy() for i in range(len(steps))]
    preds = []
    for i in range(len(steps)):
        traj = model.predict(history, Position.from_array(goals[i]), int(steps[i]))
        preds.append(np.asarray(traj.points))
    if upto is None:
        return preds
    out = np.empty((len(preds), upto, 2))
    for i, p in enumerate(preds):
        k = min(len(p), upto)
        out[i, :k] = p[:k]
        if k < upto:
            out[i, k:] = p[k - 1]
    return out


def truncated_predict(
    observation: Trajectory,
    particles: ParticleSet,
    imap: IntentionMap,
    model: MotionModel,
    config: FilterConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Predict from the pre-lookback prefix under every hypothesis.

    Returns an ``(M, lookback, 2)`` array: each particle's first ``lookback``
    predicted steps, padded by holding the final predicted position when its
    horizon is shorter.
    """
    t = len(observation)
    if t <= config.lookback + 1:
        raise WarmupError(
            f"observation length {t} <= lookback + 1 = {config.lookback + 1}"
        )
    prefix = observation.prefix(t - config.lookback)
    goals = _sample_goals(imap, particles.intentions, rng)
    steps = _horizons(prefix, goals, config)
    return _predict_batch(model, prefix, goals, steps, upto=config.lookback)


def weight_update(
    particles: ParticleSet,
    truncated: np.ndarray,
    gt_segment: Trajectory,
    tau: float,
) -> tuple[ParticleSet, bool]:
    """Exponential reweighting by segment distance, then renormalization.

    Returns the updated set and an underflow flag: if every numerator
    underflows to zero (all distances huge), weights fall back to uniform.
    """
    gt = gt_segment.points if isinstance(gt_segment, Trajectory) else np.asarray(gt_segment)
    if truncated.shape[0] != len(particles) or truncated.shape[1] != gt.shape[0]:
        raise ValueError(
            f"shape mismatch: truncated {truncated.shape}, particles {len(particles)}, "
            f"segment {gt.shape}"
        )
    dists = np.sqrt(np.sum((truncated - gt) ** 2, axis=(1, 2)))
    numer = particles.weights * np.exp(-tau * dists)
    total = numer.sum()
    if total <= 0.0 or not np.isfinite(total):
        m = len(particles)
        return ParticleSet(np.full(m, 1.0 / m), particles.intentions.copy()), True
    return ParticleSet(numer / total, particles.intentions.copy()), False


def resample_sir(particles: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    """Systematic resampling: M offspring from one uniform draw, weights reset.

    Offspring inherit intention hypotheses; particle count is conserved and
    the expected offspring count of particle i is exactly M * w_i.
    """
    m = len(particles)
    positions = (np.arange(m) + rng.uniform()) / m
    cumulative = np.cumsum(particles.weights)
    cumulative[-1] = 1.0  # guard against fp shortfall in the last bin
    idx = np.searchsorted(cumulative, positions, side="left")
    return ParticleSet(
        weights=np.full(m, 1.0 / m),
        intentions=particles.intentions[idx],
    )


def mutate_intentions(
    particles: ParticleSet,
    p_mutation: float,
    imap: IntentionMap,
    rng: np.random.Generator,
) -> tuple[ParticleSet, int]:
    """Replace each hypothesis, with probability ``p_mutation``, by a different one.

    The replacement is uniform over the other m-1 regions; weights are
    untouched. Returns the mutated set and the mutation count.
    """
    m = len(imap)
    if m < 2:
        if p_mutation > 0:
            warnings.warn("mutation requested but map has a single region; no-op")
        return ParticleSet(particles.weights.copy(), particles.intentions.copy()), 0
    draws = rng.uniform(size=len(particles))
    mask = draws < p_mutation
    intentions = particles.intentions.copy()
    n_mut = int(mask.sum())
    if n_mut:
        alt = rng.integers(0, m - 1, size=n_mut)
        cur = intentions[mask]
        intentions[mask] = np.where(alt >= cur, alt + 1, alt)
    return ParticleSet(particles.weights.copy(), intentions), n_mut


def aggregate_belief(particles: ParticleSet, num_intentions: int) -> np.ndarray:
    """Belief over intentions: summed particle weights per region id."""
    return np.bincount(
        particles.intentions, weights=particles.weights, minlength=num_intentions
    )


def top_intentions(belief: np.ndarray, nti: int) -> set[int]:
    """Ids of the nti highest-belief intentions; ties at the cutoff included.

    Zero-belief intentions are never "top": an intention no particle holds
    is not a candidate, however large nti is.
    """
    belief = np.asarray(belief, dtype=float)
    m = belief.shape[0]
    if not 1 <= nti <= m:
        raise ValueError(f"nti must be in [1, {m}]")
    cutoff = np.sort(belief)[::-1][nti - 1]
    return {i for i in range(m) if belief[i] >= cutoff and belief[i] > 0}


def select_top_samples(
    samples: list, intentions: np.ndarray, belief: np.ndarray, nti: int
) -> np.ndarray:
    """Indices of samples whose hypothesis is among the top-nti intentions."""
    if len(samples) != len(intentions):
        raise ValueError("samples and intentions must align")
    top = top_intentions(belief, nti)
    return np.nonzero(np.isin(np.asarray(intentions), sorted(top)))[0]


class IntentionFilter:
    """Stateful filter: feed observations, step on the configured cadence."""

    def __init__(
        self,
        imap: IntentionMap,
        model: MotionModel,
        config: FilterConfig,
        rng: np.random.Generator | int,
        frame_interval: float = 0.1,
    ):
        self.imap = imap
        self.model = model
        self.config = config
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.particles = init_particles(imap, config.num_particles, self.rng)
        self._points: list[np.ndarray] = []
        self._frame_interval = frame_interval

    def extend(self, points) -> None:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        for p in pts:
            self._points.append(p)

    @property
    def observation(self) -> Trajectory:
        return Trajectory(np.array(self._points), self._frame_interval)

    def step(self) -> IterationResult:
        """Run one filter iteration at the current observation length."""
        t = len(self._points)
        if t < 2:
            raise ValueError("need at least two observed frames to predict")
        obs = self.observation
        cfg = self.config
        m = len(self.imap)

        warmup = t <= cfg.lookback + 1
        underflow = False
        mutations = 0
        if not warmup:
            truncated = truncated_predict(obs, self.particles, self.imap, self.model, cfg, self.rng)
            gt_segment = obs.segment(t - cfg.lookback, t)
            self.particles, underflow = weight_update(self.particles, truncated, gt_segment, cfg.tau)
            weighted_belief = aggregate_belief(self.particles, m)
            ess = float(1.0 / np.sum(self.particles.weights ** 2))
            self.particles = resample_sir(self.particles, self.rng)
            self.particles, mutations = mutate_intentions(
                self.particles, cfg.p_mutation, self.imap, self.rng)
        else:
            weighted_belief = aggregate_belief(self.particles, m)
            ess = float(1.0 / np.sum(self.particles.weights ** 2))

        belief = aggregate_belief(self.particles, m)

        goals = _sample_goals(self.imap, self.particles.intentions, self.rng)
        steps = _horizons(obs, goals, cfg)
        samples = _predict_batch(self.model, obs, goals, steps, upto=None)
        self.particles.last_predictions = samples

        return IterationResult(
            frame=t,
            belief=belief,
            weighted_belief=weighted_belief,
            ess=ess,
            mutations=mutations,
            warmup=warmup,
            underflow=underflow,
            intentions=self.particles.intentions.copy(),
            samples=samples,
        )


def run_filter_on_record(
    record: TrajectoryRecord,
    imap: IntentionMap,
    model: MotionModel,
    config: FilterConfig,
    seed,
    model_name: str = "ilm",
    final_margin: int | None = None,
) -> tuple[dict, list[IterationResult]]:
    """Replay a recorded trajectory through the filter on its cadence.

    The last iteration happens ``final_margin`` frames before the end
    (default: the lookback window) so evaluation always has a ground-truth
    future to score the final samples against.
    """
    margin = config.lookback if final_margin is None else final_margin
    traj = record.trajectory
    t_end = len(traj) - margin
    times = [t for t in range(config.iterate_every, t_end + 1, config.iterate_every) if t >= 2]
    if not times:
        raise ValueError(
            f"{record.ped_id}: trajectory of length {len(traj)} too short to filter "
            f"(margin {margin})"
        )
    filt = IntentionFilter(imap, model, config, np.random.default_rng(seed),
                           frame_interval=traj.frame_interval)
    results = []
    fed = 0
    for t in times:
        filt.extend(traj.points[fed:t])
        fed = t
        results.append(filt.step())
    header = {
        "type": "header",
        "ped_id": record.ped_id,
        "num_frames": len(traj),
        "frame_interval": traj.frame_interval,
        "goal_region_id": record.goal_region_id,
        "switch_frame": record.switch_frame,
        "num_intentions": len(imap),
        "model": model_name,
        "seed": list(seed) if isinstance(seed, (list, tuple)) else seed,
        "final_margin": margin,
        "config": config.params_dict(),
    }
    return header, results


def write_run_log(path: str | Path, header: dict, results: list[IterationResult]) -> None:
    """One JSON object per line: header first, then one record per iteration."""
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    lines.extend(
        json.dumps(r.to_jsonable(), sort_keys=True, separators=(",", ":")) for r in results
    )
    write_atomic(path, "\n".join(lines) + "\n")


def read_run_log(path: str | Path) -> tuple[dict, list[dict]]:
    header = None
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if obj.get("type") == "header":
                header = obj
            else:
                records.append(obj)
    if header is None:
        raise ValueError(f"{path}: missing header line")
    return header, records
