"""Velocity planner: two small ReLU networks trained by behavioural cloning.

Inputs are ``(left_cm, right_cm, x_angle, proximity)``; one network predicts
the linear velocity (trained on MAE), the other the angular velocity
(trained on MSE).  Backprop, Adam and feature scaling are implemented here
on plain numpy arrays.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from follower.kinematics import BodyTwist
from follower.vision import CENTER_X, FRAME_WIDTH, Detection, Proximity

V_NET_SIZES = (4, 6, 6, 1)
W_NET_SIZES = (4, 6, 8, 1)
V_CLAMP = 1.0  # m/s; labels and planner output are clipped to [0, V_CLAMP]
MODEL_FORMAT_VERSION = 1
DATASET_HEADER = ("left_cm", "right_cm", "x_angle", "proximity", "v", "omega")

MAE = "mae"
MSE = "mse"


class TrainingDiverged(RuntimeError):
    pass


# ---------------------------------------------------------------- network


@dataclass
class MlpNetwork:
    """Dense ReLU network with a linear scalar output.

    ``weights[i]`` has shape ``(layer_sizes[i], layer_sizes[i+1])``.
    """

    layer_sizes: tuple
    weights: list
    biases: list

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("need one weight matrix and bias vector per layer transition")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if w.shape != shape or b.shape != (shape[1],):
                raise ValueError(f"layer {i}: expected weights {shape}, got {w.shape}/{b.shape}")

    @property
    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpNetwork":
        return MlpNetwork(
            self.layer_sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def to_json(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "hidden_activation": "relu",
            "output_activation": "linear",
        }

    @classmethod
    def from_json(cls, d: dict) -> "MlpNetwork":
        return cls(
            tuple(d["layer_sizes"]),
            [np.asarray(w, dtype=np.float64) for w in d["weights"]],
            [np.asarray(b, dtype=np.float64) for b in d["biases"]],
        )


def init_network(layer_sizes: Sequence[int], seed: int) -> MlpNetwork:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpNetwork(tuple(layer_sizes), weights, biases)


def _forward(net: MlpNetwork, X: np.ndarray):
    """Batch forward pass; returns (output column, list of layer activations)."""
    acts = [X]
    h = X
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return h[:, 0], acts


def mlp_forward(net: MlpNetwork, scaled_input) -> float:
    x = np.asarray(scaled_input, dtype=np.float64).reshape(1, -1)
    if x.shape[1] != net.layer_sizes[0]:
        raise ValueError(f"expected {net.layer_sizes[0]} inputs, got {x.shape[1]}")
    return float(_forward(net, x)[0][0])


def mlp_predict(net: MlpNetwork, X) -> np.ndarray:
    return _forward(net, np.atleast_2d(np.asarray(X, dtype=np.float64)))[0]


def compute_loss(preds, targets, kind: str) -> float:
    preds = np.asarray(preds, dtype=np.float64).ravel()
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if preds.shape != targets.shape:
        raise ValueError(f"length mismatch: {preds.size} predictions vs {targets.size} targets")
    if preds.size == 0:
        raise ValueError("loss of an empty batch is undefined")
    err = preds - targets
    if kind == MAE:
        return float(np.mean(np.abs(err)))
    if kind == MSE:
        return float(np.mean(err * err))
    raise ValueError(f"unknown loss kind {kind!r}")


def _loss_grad(err: np.ndarray, kind: str) -> np.ndarray:
    n = err.size
    if kind == MAE:
        return np.sign(err) / n
    if kind == MSE:
        return 2.0 * err / n
    raise ValueError(f"unknown loss kind {kind!r}")


def batch_gradients(net: MlpNetwork, X: np.ndarray, y: np.ndarray, kind: str):
    """Gradients of the mean loss over a batch, ordered like ``net.params``."""
    out, acts = _forward(net, X)
    delta = _loss_grad(out - y, kind)[:, None]
    grads = [None] * (2 * len(net.weights))
    for i in range(len(net.weights) - 1, -1, -1):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i].T) * (acts[i] > 0.0)
    return grads


def mlp_gradients(net: MlpNetwork, scaled_input, target: float, loss_kind: str):
    """Per-parameter gradients of the single-sample loss (``net.params`` order)."""
    x = np.asarray(scaled_input, dtype=np.float64).reshape(1, -1)
    return batch_gradients(net, x, np.array([float(target)]), loss_kind)


# ---------------------------------------------------------------- Adam


@dataclass
class AdamState:
    eta: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Optional[list] = None
    v2: Optional[list] = None


def adam_step(state: AdamState, params: list, grads: list) -> list:
    """One bias-corrected Adam update; ``params`` are updated in place and returned."""
    if state.m is None:
        state.m = [np.zeros_like(p) for p in params]
        state.v2 = [np.zeros_like(p) for p in params]
    if len(grads) != len(params):
        raise ValueError("one gradient per parameter array required")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v2):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.eta * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# ---------------------------------------------------------------- scaling


@dataclass
class FeatureScaler:
    mean: np.ndarray
    std: np.ndarray
    std_floor: float = 1e-8

    @classmethod
    def fit(cls, X, std_floor: float = 1e-8) -> "FeatureScaler":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("cannot fit a scaler on an empty dataset")
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        flat = std < std_floor
        if flat.any():
            warnings.warn(
                f"constant feature(s) {np.nonzero(flat)[0].tolist()}; std floored at {std_floor}",
                RuntimeWarning,
                stacklevel=2,
            )
            std = np.where(flat, std_floor, std)
        return cls(mean, std, std_floor)

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * self.std + self.mean

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "FeatureScaler":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def fit_scaler(dataset: "DemoDataset") -> FeatureScaler:
    return FeatureScaler.fit(dataset.X)


def apply_scaler(scaler: FeatureScaler, x) -> np.ndarray:
    return scaler.transform(x)


# ---------------------------------------------------------------- data


@dataclass(frozen=True)
class PlannerInput:
    left_cm: float
    right_cm: float
    x_angle: float
    proximity: float  # 0.0 far, 1.0 close

    def as_array(self) -> np.ndarray:
        return np.array([self.left_cm, self.right_cm, self.x_angle, self.proximity])


@dataclass
class DemoDataset:
    X: np.ndarray      # (n, 4): left_cm, right_cm, x_angle, proximity
    v: np.ndarray      # (n,) m/s
    omega: np.ndarray  # (n,) rad/s

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64).reshape(-1, 4)
        self.v = np.asarray(self.v, dtype=np.float64).ravel()
        self.omega = np.asarray(self.omega, dtype=np.float64).ravel()
        if not (len(self.X) == len(self.v) == len(self.omega)):
            raise ValueError("dataset columns have different lengths")

    def __len__(self) -> int:
        return len(self.v)

    def subset(self, idx) -> "DemoDataset":
        return DemoDataset(self.X[idx], self.v[idx], self.omega[idx])

    def split(self, seed: int, val_fraction: float = 0.2):
        """Seeded shuffle, then (train, validation)."""
        order = np.random.default_rng(seed).permutation(len(self))
        n_val = int(round(len(self) * val_fraction))
        return self.subset(order[n_val:]), self.subset(order[:n_val])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(DATASET_HEADER)
            for row, v, om in zip(self.X, self.v, self.omega):
                w.writerow([repr(float(c)) for c in (*row, v, om)])

    @classmethod
    def from_csv(cls, path) -> "DemoDataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != DATASET_HEADER:
                raise ValueError(f"{path}: expected header {','.join(DATASET_HEADER)}")
            rows = np.array([[float(c) for c in r] for r in reader if r], dtype=np.float64)
        if rows.size == 0:
            rows = rows.reshape(0, 6)
        return cls(rows[:, :4], rows[:, 4], rows[:, 5])


# ---------------------------------------------------------------- expert


@dataclass(frozen=True)
class ExpertConfig:
    k_img: float = 1.0
    k_obs: float = 0.3
    v_max: float = 0.3
    obstacle_active_cm: float = 80.0
    stop_cm: float = 20.0
    clear_cm: float = 60.0


def expert_policy(inp: PlannerInput, cfg: ExpertConfig = ExpertConfig()) -> BodyTwist:
    """Scripted demonstrator: steer at the target, veer from near obstacles."""
    x_err = (inp.x_angle - CENTER_X) / CENTER_X
    near = min(inp.left_cm, inp.right_cm)
    w = -cfg.k_img * x_err
    if near < cfg.obstacle_active_cm:
        w -= cfg.k_obs * (100.0 / max(inp.left_cm, 10.0) - 100.0 / max(inp.right_cm, 10.0))
    if inp.proximity >= 0.5:
        v = 0.0
    else:
        free = (near - cfg.stop_cm) / (cfg.clear_cm - cfg.stop_cm)
        v = cfg.v_max * min(1.0, max(0.0, free)) * (1.0 - 0.5 * abs(x_err))
    v = min(V_CLAMP, max(0.0, v))
    return BodyTwist(v, w)


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    net: MlpNetwork
    scaler: FeatureScaler
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)


def train_network(
    net: MlpNetwork,
    dataset: DemoDataset,
    target: str,
    loss_kind: str,
    epochs: int = 300,
    batch_size: int = 32,
    seed: int = 0,
    val_fraction: float = 0.2,
    adam: Optional[AdamState] = None,
) -> TrainResult:
    """Mini-batch Adam on one label column (``"v"`` or ``"omega"``).

    The split and the feature scaler depend only on ``seed`` and the data,
    so two networks trained with the same seed share them.  Losses are
    recorded on the full train and validation splits after every epoch.
    """
    if len(dataset) < 10:
        raise ValueError("need at least 10 rows to train")
    train, val = dataset.split(seed, val_fraction)
    scaler = FeatureScaler.fit(train.X)
    Xt, Xv = scaler.transform(train.X), scaler.transform(val.X)
    yt, yv = getattr(train, target), getattr(val, target)

    net = net.copy()
    adam = adam or AdamState()
    rng = np.random.default_rng(seed + 1)
    params = net.params
    result = TrainResult(net, scaler)
    n = len(yt)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            adam_step(adam, params, batch_gradients(net, Xt[idx], yt[idx], loss_kind))
        tr = compute_loss(mlp_predict(net, Xt), yt, loss_kind)
        va = compute_loss(mlp_predict(net, Xv), yv, loss_kind) if len(yv) else float("nan")
        if not math.isfinite(tr):
            raise TrainingDiverged(f"training loss became {tr}")
        result.train_loss.append(tr)
        result.val_loss.append(va)
    return result


@dataclass
class PlannerBundle:
    v_net: MlpNetwork
    w_net: MlpNetwork
    scaler: FeatureScaler
    seed: int = 0
    history: dict = field(default_factory=dict)

    def save(self, path) -> None:
        doc = {
            "format": "follower-planner",
            "version": MODEL_FORMAT_VERSION,
            "seed": self.seed,
            "scaler": self.scaler.to_json(),
            "v_net": self.v_net.to_json(),
            "w_net": self.w_net.to_json(),
            "loss_history": self.history,
        }
        Path(path).write_text(json.dumps(doc, indent=1))

    @classmethod
    def load(cls, path) -> "PlannerBundle":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != "follower-planner":
            raise ValueError(f"{path}: not a planner model file")
        if doc.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported model version {doc.get('version')}")
        return cls(
            MlpNetwork.from_json(doc["v_net"]),
            MlpNetwork.from_json(doc["w_net"]),
            FeatureScaler.from_json(doc["scaler"]),
            int(doc.get("seed", 0)),
            doc.get("loss_history", {}),
        )


def train_planner(dataset: DemoDataset, seed: int = 42, epochs: int = 300,
                  batch_size: int = 32) -> PlannerBundle:
    """Train the v-net (MAE) and the omega-net (MSE) on one shared split."""
    v_res = train_network(init_network(V_NET_SIZES, seed), dataset, "v", MAE,
                          epochs, batch_size, seed)
    w_res = train_network(init_network(W_NET_SIZES, seed + 1), dataset, "omega", MSE,
                          epochs, batch_size, seed)
    history = {
        "v_train_mae": v_res.train_loss,
        "v_val_mae": v_res.val_loss,
        "w_train_mse": w_res.train_loss,
        "w_val_mse": w_res.val_loss,
    }
    return PlannerBundle(v_res.net, w_res.net, v_res.scaler, seed, history)


# ---------------------------------------------------------------- inference

INITIAL_X_ANGLE = float(CENTER_X)


def plan_twist(
    bundle: PlannerBundle,
    detection: Optional[Detection],
    left_cm: float,
    right_cm: float,
    last_x_angle: Optional[float] = INITIAL_X_ANGLE,
) -> tuple[BodyTwist, float]:
    """Desired twist for one planner tick, and the x_angle to remember.

    A close target stops the robot outright.  When the target is not in
    view the previous x_angle is reused with the far flag.
    """
    if detection is not None:
        if detection.proximity == Proximity.CLOSE:
            return BodyTwist(0.0, 0.0), float(detection.x_angle)
        x_angle, prox = float(detection.x_angle), 0.0
    else:
        if last_x_angle is None:
            raise ValueError("object never detected and no last x_angle available")
        x_angle, prox = float(last_x_angle), 0.0
    x_angle = min(max(x_angle, 0.0), FRAME_WIDTH - 1.0)
    z = bundle.scaler.transform(np.array([[left_cm, right_cm, x_angle, prox]]))
    v = float(mlp_predict(bundle.v_net, z)[0])
    w = float(mlp_predict(bundle.w_net, z)[0])
    v = min(V_CLAMP, max(0.0, v)) if math.isfinite(v) else 0.0
    if not math.isfinite(w):
        w = 0.0
    return BodyTwist(v, w), x_angle
