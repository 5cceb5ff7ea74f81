"""Basic Ensemble Method: arithmetic mean of expert outputs."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import LabeledDataset, Normalizer
from .mlp import CHECKPOINT_FORMAT, CHECKPOINT_VERSION, MlpModel, forward, model_from_dict, model_to_dict
from .train import mse


@dataclass(frozen=True)
class Committee:
    experts: tuple[MlpModel, ...]

    def __post_init__(self):
        experts = tuple(self.experts)
        if not experts:
            raise ValueError("a committee needs at least one expert")
        topo = experts[0].topology
        if any(e.topology != topo for e in experts):
            raise ValueError("all experts must share one topology")
        object.__setattr__(self, "experts", experts)

    @property
    def topology(self):
        return self.experts[0].topology

    @property
    def output_dim(self) -> int:
        return self.topology.output_dim

    def __len__(self) -> int:
        return len(self.experts)

    def __call__(self, x) -> np.ndarray:
        return combine(self, x)


def combine(c: Committee, x) -> np.ndarray:
    """``(1/M) sum_i F_i(x)`` for one input or a batch."""
    if not c.experts:
        raise ValueError("empty committee")
    return np.mean([forward(e, x) for e in c.experts], axis=0)


def committee_mse(c: Committee, data: LabeledDataset) -> float:
    e = data.targets() - combine(c, data.features)
    return float(np.mean(e * e))


def average_expert_mse(experts, data: LabeledDataset) -> float:
    """Mean of the experts' individual MSEs."""
    experts = list(experts.experts if isinstance(experts, Committee) else experts)
    if not experts:
        raise ValueError("no experts")
    return float(np.mean([mse(e, data) for e in experts]))


def bem_reduction_check(M: int, n_draws: int = 1_000_000, seed: int = 0,
                        correlated: bool = False) -> float:
    """Monte-Carlo ratio ``MSE[mean of M errors] / mean_i MSE[error_i]``.

    Errors are independent zero-mean unit-variance Gaussians, so the ratio
    should approach ``1/M``. With ``correlated=True`` one stream is reused for
    every expert and the ratio stays at 1.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    rng = np.random.default_rng(seed)
    if correlated:
        m = np.broadcast_to(rng.standard_normal(n_draws), (M, n_draws))
    else:
        m = rng.standard_normal((M, n_draws))
    avg = m.mean(axis=0)
    return float(np.mean(avg * avg) / np.mean(m * m))


def committee_to_dict(c: Committee, normalizer: Normalizer | None = None) -> dict:
    d = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": "committee",
        "combiner": "bem",
        "members": [model_to_dict(e) for e in c.experts],
    }
    if normalizer is not None:
        d["normalizer"] = normalizer.to_dict()
    return d


def save_committee(c: Committee, path, normalizer: Normalizer | None = None) -> None:
    Path(path).write_text(json.dumps(committee_to_dict(c, normalizer), indent=1) + "\n",
                          encoding="utf-8")


def load_scorer(path):
    """Load an MLP or committee file; returns ``(scorer, normalizer_or_None)``."""
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    kind = d.get("kind") if isinstance(d, dict) else None
    if kind == "mlp":
        return model_from_dict(d)
    if kind != "committee" or d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not an nncommittee model or committee file")
    if d.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported version {d.get('version')}")
    experts = [model_from_dict(m)[0] for m in d["members"]]
    norm = Normalizer.from_dict(d["normalizer"]) if "normalizer" in d else None
    return Committee(tuple(experts)), norm
