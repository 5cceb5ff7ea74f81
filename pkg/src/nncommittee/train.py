"""Batch Levenberg-Marquardt training against ±1 targets.

Two objectives are supported:

* ``mse``: plain sum of squared residuals.
* ``msereg``: ``beta * E_D + alpha * E_W`` (E_D: squared residuals, E_W: squared
  weights) with ``alpha``/``beta`` re-estimated after every accepted step from
  the Gauss-Newton Hessian (evidence-framework Bayesian regularization).

One epoch is one *accepted* update over the full batch. Rejected trial steps
raise the damping and are retried inside the same epoch. Training stops early
(``converged``) once the objective gradient norm drops below ``min_grad``, and
is flagged ``stalled`` if the damping exceeds ``mu_max`` before that.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from . import kernels
from .data import DataError, LabeledDataset
from .mlp import MlpModel, forward

logger = logging.getLogger(__name__)

SCHEMES = ("mse", "msereg")
DEFAULT_EPOCHS = {"mse": 10, "msereg": 50}
HYPER_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    scheme: str = "mse"
    epochs: int | None = None
    mu0: float = 1e-3
    mu_up: float = 10.0
    mu_down: float = 0.1
    mu_max: float = 1e10
    min_grad: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.epochs is None:
            object.__setattr__(self, "epochs", DEFAULT_EPOCHS[self.scheme])
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.mu0 > 0 or not self.mu_up > 1 or not 0 < self.mu_down < 1:
            raise ValueError("need mu0 > 0, mu_up > 1 and 0 < mu_down < 1")


@dataclass
class Step:
    """One LM trial.

    ``objective`` is the candidate's objective, ``reference`` the objective of
    the current point under the same hyperparameters; a step is accepted only
    when ``objective < reference``. Row 0 of a history is the starting point.
    """

    epoch: int
    objective: float
    reference: float
    mu: float
    accepted: bool


@dataclass
class TrainReport:
    scheme: str
    history: list[Step] = field(default_factory=list)
    final_mse: float = float("nan")
    n_accepted: int = 0
    n_rejected: int = 0
    stalled: bool = False
    converged: bool = False
    gamma: float | None = None
    gamma_history: list[float] = field(default_factory=list)
    alpha: float | None = None
    beta: float | None = None

    def accepted_objectives(self) -> list[float]:
        return [s.objective for s in self.history if s.accepted]

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "objective", "mu", "accepted"])
            for s in self.history:
                w.writerow([s.epoch, repr(s.objective), repr(s.mu), int(s.accepted)])


def mse(m: MlpModel, data: LabeledDataset) -> float:
    """Mean over samples and outputs of ``(target - output)^2``."""
    if len(data) == 0:
        raise DataError("mse of an empty dataset")
    e = data.targets() - forward(m, data.features)
    return float(np.mean(e * e))


def lm_step(JtJ, Jte, mu, theta=None, alpha=0.0, beta=1.0):
    """Solve ``(beta JtJ + (alpha + mu) I) delta = beta Jte - alpha theta``.

    With ``alpha = 0, beta = 1`` this is the plain LM step. Raises
    ``numpy.linalg.LinAlgError`` if the damped matrix is not numerically
    positive definite.
    """
    A = beta * JtJ
    A[np.diag_indices_from(A)] += alpha + mu
    rhs = beta * Jte
    if alpha:
        rhs = rhs - alpha * theta
    factor = linalg.cho_factor(A, lower=True, check_finite=False)
    return linalg.cho_solve(factor, rhs, check_finite=False)


def effective_parameters(JtJ, alpha, beta) -> float:
    """``gamma = W - alpha * trace((beta JtJ + alpha I)^-1)``, in ``(0, W]``."""
    W = JtJ.shape[0]
    if alpha == 0.0:
        return float(W)
    A = beta * JtJ
    A[np.diag_indices_from(A)] += alpha
    try:
        L = linalg.cholesky(A, lower=True, check_finite=False)
        Linv, info = linalg.lapack.dtrtri(L, lower=1)
        if info != 0:
            raise np.linalg.LinAlgError("dtrtri failed")
        trace = float(np.sum(Linv * Linv))
    except np.linalg.LinAlgError:
        lam = np.clip(np.linalg.eigvalsh(beta * JtJ), 0.0, None)
        trace = float(np.sum(1.0 / (lam + alpha)))
    return W - alpha * trace


class BlockNormalEquations:
    """Damped normal equations ``beta JtJ + shift I`` for the two-layer MLP.

    Output unit j only touches its own W2 row and b2 entry, so the output part
    of ``JtJ`` is block diagonal with N blocks of size H+1. Eliminating those
    blocks leaves a Schur complement over the H*(P+1) hidden parameters, which
    is the only dense factorization needed.
    """

    def __init__(self, JtJ: np.ndarray, topology):
        h, n = topology.hidden_dim, topology.output_dim
        self.n_hidden = topology.offsets()[1]
        o2, o3 = self.n_hidden, topology.offsets()[2]
        idx = np.empty((n, h + 1), dtype=np.intp)
        idx[:, :h] = o2 + np.arange(n)[:, None] * h + np.arange(h)
        idx[:, h] = o3 + np.arange(n)
        self.out_idx = idx
        self.A = JtJ[:o2, :o2]
        self.B = JtJ[:o2][:, idx]                               # (K, N, H+1)
        self.D = JtJ[idx[:, :, None], idx[:, None, :]]          # (N, H+1, H+1)
        self.size = JtJ.shape[0]
        self._factored = None

    def factor(self, beta: float, shift: float) -> "BlockNormalEquations":
        """Raises ``numpy.linalg.LinAlgError`` if not positive definite."""
        eye_o = np.eye(self.D.shape[1])
        Dm = beta * self.D + shift * eye_o
        np.linalg.cholesky(Dm)
        Dinv = np.linalg.inv(Dm)
        Bm = beta * self.B.reshape(self.n_hidden, -1)              # (K, N*(H+1))
        n, h1 = self.D.shape[:2]
        # X[j] = D_j^-1 B_j^T, stacked to (N*(H+1), K)
        X = (Dinv @ Bm.T.reshape(n, h1, -1)).reshape(n * h1, -1)
        S = beta * self.A - Bm @ X
        S[np.diag_indices_from(S)] += shift
        L = linalg.cholesky(S, lower=True, check_finite=False)
        self._factored = (Dinv, Bm, X, L)
        return self

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        Dinv, Bm, X, L = self._factored
        r_h, r_o = rhs[:self.n_hidden], rhs[self.out_idx]
        y_o = (Dinv @ r_o[:, :, None]).ravel()
        x_h = linalg.cho_solve((L, True), r_h - Bm @ y_o, check_finite=False)
        out = np.empty(self.size)
        out[:self.n_hidden] = x_h
        out[self.out_idx] = (y_o - X @ x_h).reshape(self.out_idx.shape)
        return out

    def trace_inverse(self) -> float:
        Dinv, Bm, X, L = self._factored
        Linv = linalg.solve_triangular(L, np.eye(L.shape[0]), lower=True, check_finite=False)
        # M^-1 diagonal blocks: S^-1 and D^-1 + X S^-1 X^T
        Y = Linv @ X.T
        return float(np.sum(Linv * Linv) + np.trace(Dinv, axis1=1, axis2=2).sum()
                     + np.sum(Y * Y))


def reestimate(JtJ, sse, ew, alpha, beta, n_resid, system=None):
    """One Bayesian hyperparameter update; returns ``(gamma, alpha, beta)``.

    ``system`` (a :class:`BlockNormalEquations` over the same JtJ) enables the
    structured trace computation.
    """
    if system is not None and alpha != 0.0:
        try:
            gamma = JtJ.shape[0] - alpha * system.factor(beta, alpha).trace_inverse()
        except np.linalg.LinAlgError:
            gamma = effective_parameters(JtJ, alpha, beta)
    else:
        gamma = effective_parameters(JtJ, alpha, beta)
    new_alpha = gamma / (2.0 * max(ew, HYPER_FLOOR))
    if n_resid - gamma > 0:
        new_beta = (n_resid - gamma) / (2.0 * max(sse, HYPER_FLOOR))
    else:
        new_beta = beta
    return gamma, new_alpha, new_beta


def _train(m0: MlpModel, data: LabeledDataset, cfg: TrainConfig, regularized: bool):
    if len(data) == 0:
        raise DataError("cannot train on an empty dataset")
    if data.dims != m0.topology.input_dim or data.people_count != m0.output_dim:
        raise DataError("dataset does not match the model topology")
    X, T = data.features, data.targets()
    n_resid = T.size
    topo = m0.topology
    theta = m0.flatten()
    model = m0
    alpha, beta = 0.0, 1.0
    report = TrainReport(scheme=cfg.scheme)

    JtJ, Jte, sse = kernels.gauss_newton(model, X, T)
    system = BlockNormalEquations(JtJ, topo)
    if regularized:
        # gamma = W on the first estimate
        _, alpha, beta = reestimate(JtJ, sse, float(theta @ theta), 0.0, 1.0, n_resid)
    obj = beta * sse + alpha * float(theta @ theta)
    report.history.append(Step(0, obj, obj, cfg.mu0, True))
    mu = cfg.mu0
    epoch = 0
    while epoch < cfg.epochs:
        # objective gradient is -2 (beta Jte - alpha theta)
        grad = beta * Jte - alpha * theta
        if obj == 0.0 or 2.0 * np.linalg.norm(grad) < cfg.min_grad:
            report.converged = True
            break
        while True:
            try:
                rhs = beta * Jte - alpha * theta
                delta = system.factor(beta, alpha + mu).solve(rhs)
            except np.linalg.LinAlgError:
                delta = None
            if delta is not None:
                cand = theta + delta
                cmodel = model.with_params(cand)
                e = T - forward(cmodel, X)
                csse = float(np.sum(e * e))
                cobj = beta * csse + alpha * float(cand @ cand)
                accepted = bool(cobj < obj)
                report.history.append(Step(epoch + 1, cobj, obj, mu, accepted))
            else:
                accepted = False
                report.history.append(Step(epoch + 1, float("nan"), obj, mu, False))
            if accepted:
                report.n_accepted += 1
                mu *= cfg.mu_down
                break
            report.n_rejected += 1
            mu *= cfg.mu_up
            if mu > cfg.mu_max:
                report.stalled = True
                break
        if report.stalled:
            logger.warning("LM stalled at epoch %d (mu > %g)", epoch + 1, cfg.mu_max)
            break
        epoch += 1
        theta, model = cand, cmodel
        JtJ, Jte, sse = kernels.gauss_newton(model, X, T)
        system = BlockNormalEquations(JtJ, topo)
        if regularized:
            report.gamma, alpha, beta = reestimate(JtJ, sse, float(theta @ theta),
                                                   alpha, beta, n_resid, system)
            report.gamma_history.append(report.gamma)
        obj = beta * sse + alpha * float(theta @ theta)

    if regularized:
        report.alpha, report.beta = alpha, beta
        if report.gamma is None:
            report.gamma = reestimate(JtJ, sse, float(theta @ theta), alpha, beta,
                                      n_resid, system)[0]
    report.final_mse = sse / n_resid
    return MlpModel.unflatten(topo, theta), report


def train_lm(m0: MlpModel, data: LabeledDataset, cfg: TrainConfig | None = None):
    """Plain LM on the summed squared error. Returns ``(model, report)``."""
    cfg = cfg or TrainConfig("mse")
    if cfg.scheme != "mse":
        raise ValueError("train_lm expects scheme='mse'")
    return _train(m0, data, cfg, regularized=False)


def train_lm_bayes(m0: MlpModel, data: LabeledDataset, cfg: TrainConfig | None = None):
    """LM with Bayesian regularization. Returns ``(model, report)``.

    The initial hyperparameters take ``gamma = W``; every later estimate uses
    the damped Gauss-Newton Hessian at the newly accepted point.
    """
    cfg = cfg or TrainConfig("msereg")
    if cfg.scheme != "msereg":
        raise ValueError("train_lm_bayes expects scheme='msereg'")
    return _train(m0, data, cfg, regularized=True)


def train(m0: MlpModel, data: LabeledDataset, cfg: TrainConfig):
    """Dispatch on ``cfg.scheme``."""
    if cfg.scheme == "mse":
        return train_lm(m0, data, cfg)
    return train_lm_bayes(m0, data, cfg)
