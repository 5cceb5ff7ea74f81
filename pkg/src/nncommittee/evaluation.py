"""Identification and verification metrics over an N x N x K similarity tensor.

``s[i, j, k]`` is output j of the scorer for test trial k of person i. Scores
are similarities: higher means "more like person j". Verification accepts a
claim when ``score >= threshold``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .data import DataError, LabeledDataset, Normalizer


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SimilarityTensor:
    scores: np.ndarray

    def __post_init__(self):
        s = np.array(self.scores, dtype=np.float64)
        if s.ndim != 3 or s.shape[0] != s.shape[1]:
            raise EvaluationError(f"similarity tensor must be N x N x K, got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise EvaluationError("non-finite similarity score")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)

    @property
    def n_people(self) -> int:
        return self.scores.shape[0]

    @property
    def n_trials(self) -> int:
        return self.scores.shape[2]


@dataclass(frozen=True)
class ScoreSplit:
    intra: np.ndarray
    inter: np.ndarray


@dataclass(frozen=True)
class DetCurve:
    thresholds: np.ndarray
    p_fa: np.ndarray
    p_miss: np.ndarray
    probit_fa: np.ndarray
    probit_miss: np.ndarray

    def __len__(self) -> int:
        return len(self.thresholds)


@dataclass(frozen=True)
class DcfResult:
    min_dcf: float
    threshold: float
    c_miss: float
    c_fa: float
    p_true: float


def build_tensor(scorer, test: LabeledDataset, normalizer: Normalizer | None = None) -> SimilarityTensor:
    """Score every test trial. ``scorer`` maps an (S, P) batch to (S, N) outputs."""
    x = test.grouped()                                   # (N, K, P)
    n, k, p = x.shape
    flat = x.reshape(n * k, p)
    if normalizer is not None:
        flat = normalizer.apply(flat)
    out = np.asarray(scorer(flat))
    if out.shape != (n * k, n):
        raise EvaluationError(f"scorer output dim {out.shape[-1]} != number of people {n}")
    return SimilarityTensor(out.reshape(n, k, n).transpose(0, 2, 1))


def identification_rate(t: SimilarityTensor) -> float:
    """Fraction of trials whose own-person score strictly beats every other score."""
    s = t.scores
    n = t.n_people
    own = s[np.arange(n), np.arange(n), :]               # (N, K)
    others = s.copy()
    others[np.arange(n), np.arange(n), :] = -np.inf
    success = own > others.max(axis=1)
    return float(success.mean())


def split_scores(t: SimilarityTensor) -> ScoreSplit:
    """Genuine (diagonal) and impostor scores, flattened in (i, j, k) order."""
    if t.n_people < 2:
        raise EvaluationError("verification undefined for N=1")
    diag = np.eye(t.n_people, dtype=bool)[:, :, None]
    mask = np.broadcast_to(diag, t.scores.shape)
    return ScoreSplit(intra=t.scores[mask], inter=t.scores[~mask])


def _check_split(split: ScoreSplit) -> None:
    if len(split.intra) == 0 or len(split.inter) == 0:
        raise EvaluationError("empty score split")


def _rates(split: ScoreSplit, thresholds: np.ndarray):
    intra = np.sort(split.intra)
    inter = np.sort(split.inter)
    p_miss = np.searchsorted(intra, thresholds, side="left") / len(intra)
    p_fa = (len(inter) - np.searchsorted(inter, thresholds, side="left")) / len(inter)
    return p_fa, p_miss


def far_frr_at(split: ScoreSplit, threshold: float) -> tuple[float, float]:
    """``(P_fa, P_miss)`` when claims with score >= threshold are accepted."""
    _check_split(split)
    p_fa = float(np.mean(split.inter >= threshold))
    p_miss = float(np.mean(split.intra < threshold))
    return p_fa, p_miss


def candidate_thresholds(split: ScoreSplit) -> np.ndarray:
    """Distinct observed scores plus ``-inf`` and ``+inf``, ascending."""
    scores = np.unique(np.concatenate([split.intra, split.inter]))
    return np.concatenate([[-np.inf], scores, [np.inf]])


def probit(p, n: int) -> np.ndarray:
    """Normal deviate of ``p`` clamped to ``[1/(2n), 1 - 1/(2n)]``."""
    lo = 1.0 / (2 * n)
    return ndtri(np.clip(p, lo, 1.0 - lo))


def det_curve(split: ScoreSplit) -> DetCurve:
    _check_split(split)
    thr = candidate_thresholds(split)
    p_fa, p_miss = _rates(split, thr)
    return DetCurve(thr, p_fa, p_miss, probit(p_fa, len(split.inter)),
                    probit(p_miss, len(split.intra)))


def dcf(p_fa, p_miss, c_miss: float = 1.0, c_fa: float = 1.0, p_true: float = 0.5):
    return c_miss * p_miss * p_true + c_fa * p_fa * (1.0 - p_true)


def min_dcf(split: ScoreSplit, c_miss: float = 1.0, c_fa: float = 1.0,
            p_true: float = 0.5) -> DcfResult:
    """Minimum detection cost over all thresholds.

    The cost is piecewise constant between observed scores, so evaluating it
    at each distinct score (and at +-inf) is exact. Ties go to the lowest
    threshold.
    """
    _check_split(split)
    if not (c_miss > 0 and c_fa > 0):
        raise EvaluationError("costs must be positive")
    if not 0.0 < p_true < 1.0:
        raise EvaluationError("p_true must lie in (0, 1)")
    thr = candidate_thresholds(split)
    p_fa, p_miss = _rates(split, thr)
    cost = dcf(p_fa, p_miss, c_miss, c_fa, p_true)
    i = int(np.argmin(cost))
    return DcfResult(float(cost[i]), float(thr[i]), c_miss, c_fa, p_true)


def write_det_csv(curve: DetCurve, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "p_fa", "p_miss", "probit_fa", "probit_miss"])
        for row in zip(curve.thresholds, curve.p_fa, curve.p_miss, curve.probit_fa,
                       curve.probit_miss):
            w.writerow([repr(float(v)) for v in row])


def det_svg(curve: DetCurve, size: int = 400) -> str:
    """DET curve as an SVG polyline on probit axes spanning [-4, 4]."""
    lim = 4.0

    def px(v):
        return (np.clip(v, -lim, lim) + lim) / (2 * lim) * size

    xs, ys = px(curve.probit_fa), size - px(curve.probit_miss)
    points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">\n'
        f'<rect width="{size}" height="{size}" fill="white" stroke="black"/>\n'
        f'<line x1="0" y1="0" x2="{size}" y2="{size}" stroke="#bbb"/>\n'
        f'<polyline fill="none" stroke="blue" points="{points}"/>\n'
        "</svg>\n"
    )


def evaluate(scorer, test: LabeledDataset, normalizer: Normalizer | None = None,
             c_miss: float = 1.0, c_fa: float = 1.0, p_true: float = 0.5):
    """Convenience: ``(identification_rate, DcfResult, tensor)`` on a test split."""
    try:
        t = build_tensor(scorer, test, normalizer)
    except DataError as exc:
        raise EvaluationError(str(exc)) from exc
    split = split_scores(t)
    return identification_rate(t), min_dcf(split, c_miss, c_fa, p_true), t
