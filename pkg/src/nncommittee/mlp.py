"""Two-layer perceptron ``O = W2 tanh(W1 x + b1) + b2``.

Parameters are flattened in a fixed order (W1 row-major, b1, W2 row-major, b2),
which is also the column order of every Jacobian in the package and the
order stored in checkpoint files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CHECKPOINT_FORMAT = "nncommittee-mlp"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MlpTopology:
    input_dim: int = 9
    hidden_dim: int = 30
    output_dim: int = 22

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.output_dim) < 1:
            raise ValueError(f"all layer sizes must be >= 1, got {self}")

    @property
    def n_params(self) -> int:
        p, h, n = self.input_dim, self.hidden_dim, self.output_dim
        return h * p + h + n * h + n

    def offsets(self) -> tuple[int, int, int]:
        """Start indices of b1, W2 and b2 in the flat parameter vector."""
        p, h, n = self.input_dim, self.hidden_dim, self.output_dim
        return h * p, h * p + h, h * p + h + n * h


@dataclass(frozen=True, eq=False)
class MlpModel:
    topology: MlpTopology
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        t = self.topology
        shapes = {
            "w1": (t.hidden_dim, t.input_dim),
            "b1": (t.hidden_dim,),
            "w2": (t.output_dim, t.hidden_dim),
            "b2": (t.output_dim,),
        }
        for name, shape in shapes.items():
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    @classmethod
    def unflatten(cls, topology: MlpTopology, theta) -> "MlpModel":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (topology.n_params,):
            raise ValueError(f"expected {topology.n_params} parameters, got {theta.shape}")
        p, h, n = topology.input_dim, topology.hidden_dim, topology.output_dim
        o1, o2, o3 = topology.offsets()
        return cls(topology, theta[:o1].reshape(h, p), theta[o1:o2],
                   theta[o2:o3].reshape(n, h), theta[o3:])

    def with_params(self, theta) -> "MlpModel":
        return MlpModel.unflatten(self.topology, theta)

    def __eq__(self, other):
        if not isinstance(other, MlpModel):
            return NotImplemented
        return self.topology == other.topology and np.array_equal(self.flatten(), other.flatten())

    @property
    def output_dim(self) -> int:
        return self.topology.output_dim

    def __call__(self, x) -> np.ndarray:
        return forward(self, x)


def init_weights(topology: MlpTopology, seed: int) -> MlpModel:
    """Uniform ``[-a, a]`` weights and biases with ``a = 1/sqrt(fan_in)`` per layer."""
    rng = np.random.default_rng(seed)
    p, h, n = topology.input_dim, topology.hidden_dim, topology.output_dim
    a1, a2 = 1.0 / np.sqrt(p), 1.0 / np.sqrt(h)
    w1 = rng.uniform(-a1, a1, (h, p))
    b1 = rng.uniform(-a1, a1, h)
    w2 = rng.uniform(-a2, a2, (n, h))
    b2 = rng.uniform(-a2, a2, n)
    return MlpModel(topology, w1, b1, w2, b2)


def _as_input(m: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != m.topology.input_dim or x.ndim > 2:
        raise ValueError(f"input must have {m.topology.input_dim} features, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    return x


def forward(m: MlpModel, x) -> np.ndarray:
    """Outputs for one input (P,) -> (N,) or a batch (S, P) -> (S, N)."""
    x = _as_input(m, x)
    return np.tanh(x @ m.w1.T + m.b1) @ m.w2.T + m.b2


def jacobian(m: MlpModel, x) -> np.ndarray:
    """``dO[j]/dtheta`` as an (N, W) matrix for a single input."""
    x = _as_input(m, x)
    if x.ndim != 1:
        raise ValueError("jacobian takes a single input vector")
    return batch_jacobian(m, x[None, :])[0]


def batch_jacobian(m: MlpModel, x: np.ndarray) -> np.ndarray:
    """(S, N, W) stack of per-sample Jacobians."""
    t = m.topology
    p, h, n = t.input_dim, t.hidden_dim, t.output_dim
    s = x.shape[0]
    a = np.tanh(x @ m.w1.T + m.b1)                # (S, H)
    d = 1.0 - a * a
    g = m.w2[None, :, :] * d[:, None, :]           # dO_j/dz_h, (S, N, H)
    o1, o2, o3 = t.offsets()
    J = np.zeros((s, n, t.n_params))
    J[:, :, :o1] = (g[:, :, :, None] * x[:, None, None, :]).reshape(s, n, h * p)
    J[:, :, o1:o2] = g
    rows = np.arange(n)
    for j in rows:
        J[:, j, o2 + j * h:o2 + (j + 1) * h] = a
    J[:, rows, o3 + rows] = 1.0
    return J


def model_to_dict(m: MlpModel, normalizer=None) -> dict:
    t = m.topology
    d = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": "mlp",
        "topology": [t.input_dim, t.hidden_dim, t.output_dim],
        "param_order": ["w1", "b1", "w2", "b2"],
        "params": m.flatten().tolist(),
    }
    if normalizer is not None:
        d["normalizer"] = normalizer.to_dict()
    return d


def model_from_dict(d: dict):
    """Inverse of :func:`model_to_dict`; returns ``(model, normalizer_or_None)``."""
    from .data import Normalizer

    if d.get("format") != CHECKPOINT_FORMAT or d.get("kind") != "mlp":
        raise ValueError("not an nncommittee MLP checkpoint")
    if d.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('version')}")
    topo = MlpTopology(*d["topology"])
    model = MlpModel.unflatten(topo, d["params"])
    norm = Normalizer.from_dict(d["normalizer"]) if "normalizer" in d else None
    return model, norm


def save_model(m: MlpModel, path, normalizer=None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(m, normalizer), indent=1) + "\n",
                          encoding="utf-8")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
