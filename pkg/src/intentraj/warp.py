"""Residual-offset recurrent motion model ("warp" model).

The model receives a nominal full trajectory — observed history concatenated
with the straight-line prediction to the goal — and learns per-step 2D
offsets that warp the nominal toward the ground truth:

    e_t   = W_e @ x_t + b_e                       (linear embedding)
    h>_t  = cell(e_t, h>_{t-1}; W>)               (forward recurrence)
    h<_t  = cell(e_t, h<_{t+1}; W<)               (backward recurrence)
    o_t   = W_o @ [h>_t ; h<_t] + b_o             (affine decode)
    out_t = x_t + o_t                             (skip connection)

Each direction is a standard gated cell (input/forget/output gates, tanh
candidate, tanh on the cell state at the output). With a zero decoder the
module is exactly the identity on the nominal trajectory, which is also how
training starts. Offsets at different steps are decoded independently given
the hidden states — nothing feeds back through the outputs — so the whole
offset sequence comes out of one bidirectional sweep.

Gradients are computed by hand (reverse-mode through the recurrences) and
optimized with Adam; both live here so the training loop has no framework
dependencies. Time within one trajectory is inherently sequential; separate
trajectories may be processed concurrently as long as parameter updates stay
serialized.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from intentraj.core import Trajectory
from intentraj.data import TrajectoryRecord, write_atomic
from intentraj.motion import ilm_predict

__all__ = [
    "WarpModel",
    "NominalFullTrajectory",
    "ModelBank",
    "TrainConfig",
    "DivergenceError",
    "init_warp_model",
    "build_nominal",
    "warp_forward",
    "warp_loss",
    "backward",
    "loss_and_gradients",
    "train",
    "select_model",
    "save_checkpoint",
    "load_checkpoint",
    "save_bank",
    "load_bank",
    "WarpMotionModel",
    "PERCENT_BUCKETS",
]

PERCENT_BUCKETS = (0, 25, 50, 75)


class DivergenceError(RuntimeError):
    """Raised when a forward or backward pass produces non-finite values."""


@dataclass
class WarpModel:
    """Parameters of the residual offset network.

    Gate blocks in ``w_x``/``w_h``/``b`` are stacked row-wise in the order
    input, forget, candidate, output (each block ``d_h`` rows).
    """

    d_e: int
    d_h: int
    w_embed: np.ndarray  # (d_e, 2)
    b_embed: np.ndarray  # (d_e,)
    fwd_w_x: np.ndarray  # (4*d_h, d_e)
    fwd_w_h: np.ndarray  # (4*d_h, d_h)
    fwd_b: np.ndarray  # (4*d_h,)
    bwd_w_x: np.ndarray
    bwd_w_h: np.ndarray
    bwd_b: np.ndarray
    w_out: np.ndarray  # (2, 2*d_h), forward half first
    b_out: np.ndarray  # (2,)

    PARAM_NAMES = (
        "w_embed", "b_embed",
        "fwd_w_x", "fwd_w_h", "fwd_b",
        "bwd_w_x", "bwd_w_h", "bwd_b",
        "w_out", "b_out",
    )

    def __post_init__(self) -> None:
        expected = _param_shapes(self.d_e, self.d_h)
        for name in self.PARAM_NAMES:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != expected[name]:
                raise ValueError(f"{name}: expected shape {expected[name]}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            setattr(self, name, arr)

    def named_params(self) -> list[tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name in self.PARAM_NAMES]

    def copy(self) -> "WarpModel":
        return WarpModel(
            self.d_e, self.d_h,
            **{name: getattr(self, name).copy() for name in self.PARAM_NAMES},
        )


def _param_shapes(d_e: int, d_h: int) -> dict[str, tuple]:
    return {
        "w_embed": (d_e, 2),
        "b_embed": (d_e,),
        "fwd_w_x": (4 * d_h, d_e),
        "fwd_w_h": (4 * d_h, d_h),
        "fwd_b": (4 * d_h,),
        "bwd_w_x": (4 * d_h, d_e),
        "bwd_w_h": (4 * d_h, d_h),
        "bwd_b": (4 * d_h,),
        "w_out": (2, 2 * d_h),
        "b_out": (2,),
    }


def init_warp_model(d_e: int = 128, d_h: int = 128, rng: np.random.Generator | None = None) -> WarpModel:
    """Uniform +-1/sqrt(fan_in) init; forget-gate bias +1; zero decoder.

    The zero decoder makes the freshly initialized model an exact identity
    mapping on its input, so training starts from the nominal prediction.
    """
    rng = np.random.default_rng() if rng is None else rng

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    def lstm_params():
        w_x = uniform((4 * d_h, d_e), d_h)
        w_h = uniform((4 * d_h, d_h), d_h)
        b = uniform((4 * d_h,), d_h)
        b[d_h:2 * d_h] += 1.0  # forget gate
        return w_x, w_h, b

    fwd = lstm_params()
    bwd = lstm_params()
    return WarpModel(
        d_e=d_e, d_h=d_h,
        w_embed=uniform((d_e, 2), 2), b_embed=uniform((d_e,), 2),
        fwd_w_x=fwd[0], fwd_w_h=fwd[1], fwd_b=fwd[2],
        bwd_w_x=bwd[0], bwd_w_h=bwd[1], bwd_b=bwd[2],
        w_out=np.zeros((2, 2 * d_h)), b_out=np.zeros(2),
    )


@dataclass(frozen=True)
class NominalFullTrajectory:
    """Observation concatenated with the nominal prediction."""

    positions: Trajectory
    observed_len: int

    def __post_init__(self) -> None:
        if not 1 <= self.observed_len < len(self.positions):
            raise ValueError(
                f"observed_len {self.observed_len} outside [1, {len(self.positions)})"
            )


def build_nominal(history: Trajectory, goal, steps: int) -> NominalFullTrajectory:
    """History plus the straight line to ``goal`` as one full trajectory."""
    line = ilm_predict(history, goal, steps)
    pts = np.vstack([history.points, line.points])
    return NominalFullTrajectory(Trajectory(pts, history.frame_interval), len(history))


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _run_cell(w_x, w_h, b, inputs: np.ndarray, d_h: int):
    """One direction over ``inputs`` (T, d_e); initial state is zero.

    Returns hidden states (T, d_h) and the per-step cache needed for the
    reverse pass.
    """
    T = inputs.shape[0]
    z_in = inputs @ w_x.T + b
    H = np.empty((T, d_h))
    C = np.empty((T, d_h))
    TC = np.empty((T, d_h))
    gates = np.empty((T, 4 * d_h))
    h = np.zeros(d_h)
    c = np.zeros(d_h)
    for t in range(T):
        z = z_in[t] + w_h @ h
        i = _sigmoid(z[:d_h])
        f = _sigmoid(z[d_h:2 * d_h])
        g = np.tanh(z[2 * d_h:3 * d_h])
        o = _sigmoid(z[3 * d_h:])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        gates[t, :d_h] = i
        gates[t, d_h:2 * d_h] = f
        gates[t, 2 * d_h:3 * d_h] = g
        gates[t, 3 * d_h:] = o
        C[t] = c
        TC[t] = tc
        H[t] = h
    return H, {"gates": gates, "C": C, "TC": TC, "H": H, "inputs": inputs}


def _cell_backward(w_x, w_h, d_h: int, cache: dict, dH: np.ndarray):
    """Reverse pass for one direction. Returns parameter grads and dInputs."""
    gates, C, TC, H, inputs = cache["gates"], cache["C"], cache["TC"], cache["H"], cache["inputs"]
    T = inputs.shape[0]
    DZ = np.empty((T, 4 * d_h))
    dh_next = np.zeros(d_h)
    dc_next = np.zeros(d_h)
    for t in range(T - 1, -1, -1):
        i = gates[t, :d_h]
        f = gates[t, d_h:2 * d_h]
        g = gates[t, 2 * d_h:3 * d_h]
        o = gates[t, 3 * d_h:]
        c_prev = C[t - 1] if t > 0 else np.zeros(d_h)
        dh = dH[t] + dh_next
        do = dh * TC[t]
        dc = dc_next + dh * o * (1.0 - TC[t] ** 2)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f
        DZ[t, :d_h] = di * i * (1.0 - i)
        DZ[t, d_h:2 * d_h] = df * f * (1.0 - f)
        DZ[t, 2 * d_h:3 * d_h] = dg * (1.0 - g ** 2)
        DZ[t, 3 * d_h:] = do * o * (1.0 - o)
        dh_next = w_h.T @ DZ[t]
    H_prev = np.vstack([np.zeros((1, d_h)), H[:-1]])
    g_w_x = DZ.T @ inputs
    g_w_h = DZ.T @ H_prev
    g_b = DZ.sum(axis=0)
    d_inputs = DZ @ w_x
    return g_w_x, g_w_h, g_b, d_inputs


def _forward_full(model: WarpModel, nominal_points: np.ndarray):
    X = nominal_points
    E = X @ model.w_embed.T + model.b_embed
    Hf, cache_f = _run_cell(model.fwd_w_x, model.fwd_w_h, model.fwd_b, E, model.d_h)
    Hb_rev, cache_b = _run_cell(model.bwd_w_x, model.bwd_w_h, model.bwd_b, E[::-1], model.d_h)
    Hb = Hb_rev[::-1]
    d_h = model.d_h
    offsets = Hf @ model.w_out[:, :d_h].T + Hb @ model.w_out[:, d_h:].T + model.b_out
    return offsets, {"X": X, "E": E, "Hf": Hf, "Hb": Hb, "cache_f": cache_f, "cache_b": cache_b}


def warp_forward(model: WarpModel, nominal) -> tuple[Trajectory, np.ndarray]:
    """Warp a nominal trajectory; returns (warped trajectory, per-step offsets)."""
    traj = nominal.positions if isinstance(nominal, NominalFullTrajectory) else nominal
    if len(traj) < 2:
        raise ValueError("nominal trajectory must have length >= 2")
    offsets, _ = _forward_full(model, traj.points)
    if not np.all(np.isfinite(offsets)):
        raise DivergenceError("non-finite offsets in forward pass")
    warped = Trajectory(traj.points + offsets, traj.frame_interval)
    return warped, offsets


def warp_loss(warped: Trajectory, ground_truth: Trajectory) -> float:
    """Mean squared error over all time steps and both coordinates."""
    if len(warped) != len(ground_truth):
        raise ValueError(f"length mismatch: {len(warped)} vs {len(ground_truth)}")
    diff = warped.points - ground_truth.points
    return float(np.mean(diff ** 2))


def loss_and_gradients(model: WarpModel, nominal, ground_truth: Trajectory):
    """Loss plus exact gradients w.r.t. every parameter."""
    traj = nominal.positions if isinstance(nominal, NominalFullTrajectory) else nominal
    if len(traj) != len(ground_truth):
        raise ValueError(f"length mismatch: {len(traj)} vs {len(ground_truth)}")
    offsets, cache = _forward_full(model, traj.points)
    if not np.all(np.isfinite(offsets)):
        raise DivergenceError("non-finite offsets in forward pass")
    diff = traj.points + offsets - ground_truth.points
    loss = float(np.mean(diff ** 2))

    d_off = (2.0 / diff.size) * diff  # (T, 2)
    d_h = model.d_h
    Hf, Hb, E = cache["Hf"], cache["Hb"], cache["E"]
    g_w_out = np.hstack([d_off.T @ Hf, d_off.T @ Hb])
    g_b_out = d_off.sum(axis=0)
    dHf = d_off @ model.w_out[:, :d_h]
    dHb = d_off @ model.w_out[:, d_h:]

    gf_w_x, gf_w_h, gf_b, dE_f = _cell_backward(
        model.fwd_w_x, model.fwd_w_h, d_h, cache["cache_f"], dHf)
    gb_w_x, gb_w_h, gb_b, dE_b_rev = _cell_backward(
        model.bwd_w_x, model.bwd_w_h, d_h, cache["cache_b"], dHb[::-1])
    dE = dE_f + dE_b_rev[::-1]

    grads = {
        "w_embed": dE.T @ traj.points,
        "b_embed": dE.sum(axis=0),
        "fwd_w_x": gf_w_x, "fwd_w_h": gf_w_h, "fwd_b": gf_b,
        "bwd_w_x": gb_w_x, "bwd_w_h": gb_w_h, "bwd_b": gb_b,
        "w_out": g_w_out, "b_out": g_b_out,
    }
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {name}")
    return loss, grads


def backward(model: WarpModel, nominal, ground_truth: Trajectory) -> dict[str, np.ndarray]:
    """Gradients of :func:`warp_loss` w.r.t. every parameter."""
    return loss_and_gradients(model, nominal, ground_truth)[1]


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 100
    batch_size: int = 1
    rng_seed: int = 0
    d_e: int = 128
    d_h: int = 128

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    def params_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "adam_eps": self.adam_eps,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "rng_seed": self.rng_seed,
            "d_e": self.d_e,
            "d_h": self.d_h,
        }


class Adam:
    """Per-array Adam with bias correction."""

    def __init__(self, model: WarpModel, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = {name: np.zeros_like(p) for name, p in model.named_params()}
        self.v = {name: np.zeros_like(p) for name, p in model.named_params()}

    def step(self, model: WarpModel, grads: dict[str, np.ndarray]) -> None:
        cfg = self.cfg
        self.t += 1
        for name, p in model.named_params():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1 - cfg.beta2) * g ** 2
            m_hat = m / (1 - cfg.beta1 ** self.t)
            v_hat = v / (1 - cfg.beta2 ** self.t)
            p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def split_observation(total: int, percent_observed: int) -> int:
    """Observed frame count for a fixed percentage split.

    0% means the first position plus the first displacement, i.e. two
    observed frames; every split leaves at least one step to predict.
    """
    obs = int(round(total * percent_observed / 100.0))
    return min(max(obs, 2), total - 1)


def default_nominal_builder(record: TrajectoryRecord, observed_len: int) -> NominalFullTrajectory:
    """Nominal from the ground-truth goal (the final position) and exact horizon."""
    traj = record.trajectory
    history = traj.prefix(observed_len)
    goal = traj.final_position()
    return build_nominal(history, goal, len(traj) - observed_len)


def train(
    corpus: list[TrajectoryRecord],
    percent_observed: int,
    cfg: TrainConfig,
    nominal_builder=default_nominal_builder,
    on_epoch=None,
) -> WarpModel:
    """Adam-train a warp model on fixed-percentage splits of the corpus.

    Records must carry goal labels (the label certifies the endpoint is a
    usable goal). ``on_epoch(epoch, mean_loss)`` is invoked after each epoch
    for loss-curve recording. Deterministic given ``cfg.rng_seed``.
    """
    if percent_observed not in PERCENT_BUCKETS:
        raise ValueError(f"percent_observed must be one of {PERCENT_BUCKETS}")
    usable = [r for r in corpus if r.goal_region_id is not None and len(r.trajectory) >= 3]
    if not usable:
        raise ValueError("empty corpus: no labeled records with length >= 3")

    rng = np.random.default_rng(cfg.rng_seed)
    model = init_warp_model(cfg.d_e, cfg.d_h, rng)
    opt = Adam(model, cfg)

    pairs = []
    for rec in usable:
        obs = split_observation(len(rec.trajectory), percent_observed)
        pairs.append((nominal_builder(rec, obs), rec.trajectory))

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        total = 0.0
        for batch_start in range(0, len(order), cfg.batch_size):
            batch = order[batch_start:batch_start + cfg.batch_size]
            acc: dict[str, np.ndarray] | None = None
            for j in batch:
                nominal, gt = pairs[j]
                loss, grads = loss_and_gradients(model, nominal, gt)
                total += loss
                if acc is None:
                    acc = grads
                else:
                    for name in acc:
                        acc[name] += grads[name]
            if len(batch) > 1:
                for name in acc:
                    acc[name] /= len(batch)
            opt.step(model, acc)
        if on_epoch is not None:
            on_epoch(epoch, total / len(pairs))
    return model


# ---------------------------------------------------------------------------
# Model bank and checkpoints
# ---------------------------------------------------------------------------


@dataclass
class ModelBank:
    """Warp models keyed by observed-percentage bucket (0, 25, 50, 75)."""

    models: dict[int, WarpModel] = field(default_factory=dict)

    def require_complete(self) -> None:
        missing = [p for p in PERCENT_BUCKETS if p not in self.models]
        if missing:
            raise ValueError(f"model bank missing buckets {missing}")


def select_model(bank: ModelBank, observed_len: int, estimated_t_g: int) -> WarpModel:
    """Bucket whose percentage is nearest to observed/(observed+remaining).

    Ties go to the lower bucket.
    """
    if observed_len < 1 or estimated_t_g < 1:
        raise ValueError("observed_len and estimated_t_g must be >= 1")
    r = observed_len / (observed_len + estimated_t_g)
    best = None
    best_diff = np.inf
    for pct in sorted(bank.models):
        diff = abs(r - pct / 100.0)
        if diff < best_diff:
            best, best_diff = pct, diff
    if best is None:
        raise ValueError("model bank is empty")
    return bank.models[best]


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(payload: dict) -> np.ndarray:
    raw = base64.b64decode(payload["data"])
    return np.frombuffer(raw, dtype="<f8").astype(float).reshape(payload["shape"])


def save_checkpoint(
    model: WarpModel,
    path: str | Path,
    percent_observed: int | None = None,
    train_config: TrainConfig | None = None,
) -> None:
    """Versioned JSON checkpoint; parameter bytes round-trip bit-exactly."""
    payload = {
        "format": "intentraj-warp",
        "version": 1,
        "d_e": model.d_e,
        "d_h": model.d_h,
        "percent_observed": percent_observed,
        "train_config": train_config.params_dict() if train_config else None,
        "params": {name: _encode_array(p) for name, p in model.named_params()},
    }
    write_atomic(path, json.dumps(payload, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> tuple[WarpModel, dict]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != "intentraj-warp":
        raise ValueError(f"{path}: not a warp checkpoint")
    params = {name: _decode_array(p) for name, p in payload["params"].items()}
    model = WarpModel(d_e=int(payload["d_e"]), d_h=int(payload["d_h"]), **params)
    meta = {
        "percent_observed": payload.get("percent_observed"),
        "train_config": payload.get("train_config"),
        "version": payload.get("version"),
    }
    return model, meta


def save_bank(bank: ModelBank, out_dir: str | Path, train_config: TrainConfig | None = None) -> Path:
    """Write one checkpoint per bucket plus a bank index; returns index path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = {"format": "intentraj-bank", "version": 1, "buckets": {}}
    for pct, model in sorted(bank.models.items()):
        name = f"warp_pct{pct:02d}.json"
        save_checkpoint(model, out_dir / name, percent_observed=pct, train_config=train_config)
        index["buckets"][str(pct)] = name
    index_path = out_dir / "bank.json"
    write_atomic(index_path, json.dumps(index, indent=2, sort_keys=True) + "\n")
    return index_path


def load_bank(index_path: str | Path) -> ModelBank:
    index_path = Path(index_path)
    if index_path.is_dir():
        index_path = index_path / "bank.json"
    with open(index_path, encoding="utf-8") as fh:
        index = json.load(fh)
    if index.get("format") != "intentraj-bank":
        raise ValueError(f"{index_path}: not a model bank index")
    models = {}
    for pct, name in index["buckets"].items():
        model, _ = load_checkpoint(index_path.parent / name)
        models[int(pct)] = model
    return ModelBank(models=models)


class WarpMotionModel:
    """Motion-model adapter: warp the straight line to the goal.

    Selects a bank model from the observation/remaining ratio, builds the
    nominal full trajectory, and returns the warped prediction segment.
    """

    def __init__(self, bank: ModelBank):
        if not bank.models:
            raise ValueError("model bank is empty")
        self.bank = bank

    def predict(self, history: Trajectory, goal, steps: int) -> Trajectory:
        nominal = build_nominal(history, goal, steps)
        model = select_model(self.bank, len(history), steps)
        warped, _ = warp_forward(model, nominal)
        return Trajectory(warped.points[len(history):], history.frame_interval)
