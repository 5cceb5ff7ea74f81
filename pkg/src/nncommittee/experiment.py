"""Multi-start study of the four training schemes.

Each scheme is run from many random initializations; every run yields an
(identification rate, min DCF) pair on the test split. Summaries are the
sample mean/stddev of each metric (a method-of-moments Gaussian fit) and the
Pearson correlation between the two.

Seeds
-----
Every initialization seed is derived from ``(base_seed, role, run_index,
member_index)`` through :class:`numpy.random.SeedSequence`, with role 0 for
single networks and role 1 for committee members. Single schemes (a) and (b)
therefore start run r from the same weights, as do committee schemes (c)
and (d), while committee members never reuse a single-network seed.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .committee import Committee
from .data import LabeledDataset, apply_normalizer, fit_normalizer, split_train_test
from .evaluation import build_tensor, identification_rate, min_dcf, split_scores
from .mlp import MlpTopology, init_weights
from .train import TrainConfig, train

logger = logging.getLogger(__name__)

COMMITTEE_SIZE = 3
UNDEFINED = "undefined"


class SchemeId(str, enum.Enum):
    MSE_SINGLE = "MSE_single"
    MSEREG_SINGLE = "MSEREG_single"
    MSE_COMMITTEE = "MSE_committee"
    MSEREG_COMMITTEE = "MSEREG_committee"

    @property
    def letter(self) -> str:
        return "abcd"[list(SchemeId).index(self)]

    @property
    def training(self) -> str:
        return "msereg" if self.value.startswith("MSEREG") else "mse"

    @property
    def is_committee(self) -> bool:
        return self.value.endswith("committee")

    @classmethod
    def parse(cls, text) -> "SchemeId":
        if isinstance(text, cls):
            return text
        text = str(text).strip()
        for s in cls:
            if text in (s.letter, s.value, s.name):
                return s
        raise ValueError(f"unknown scheme {text!r}; use a, b, c, d")


def derive_seed(base_seed: int, role: int, run_index: int, member: int = 0) -> int:
    ss = np.random.SeedSequence([base_seed, role, run_index, member])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class RunRecord:
    scheme: SchemeId
    run_index: int
    seeds: tuple[int, ...]
    identification_rate: float
    min_dcf: float
    stalled: bool = False


@dataclass(frozen=True)
class SchemeSummary:
    n_runs: int
    n_excluded: int
    ident_mean: float
    ident_std: float
    dcf_mean: float
    dcf_std: float
    corr: float | None


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray


@dataclass(frozen=True)
class ScatterFit:
    points: np.ndarray          # (R, 2): identification rate, min DCF
    slope: float | None
    intercept: float | None


def prepare(ds: LabeledDataset, train_per_person: int = 5):
    """Split, fit the normalizer on train, return normalized ``(train, test, normalizer)``."""
    train_ds, test_ds = split_train_test(ds, train_per_person)
    norm = fit_normalizer(train_ds)
    return apply_normalizer(norm, train_ds), apply_normalizer(norm, test_ds), norm


def _run_one(scheme: SchemeId, run_index: int, train_ds, test_ds, base_seed: int,
             hidden: int, epochs: dict, clone_members: bool, p_true: float) -> RunRecord:
    topo = MlpTopology(train_ds.dims, hidden, train_ds.people_count)
    cfg = TrainConfig(scheme.training, epochs=epochs.get(scheme.training))
    if not scheme.is_committee:
        seeds = (derive_seed(base_seed, 0, run_index),)
    elif clone_members:
        seeds = (derive_seed(base_seed, 0, run_index),) * COMMITTEE_SIZE
    else:
        seeds = tuple(derive_seed(base_seed, 1, run_index, m) for m in range(COMMITTEE_SIZE))

    experts, stalled = [], False
    for seed in seeds:
        model, report = train(init_weights(topo, seed), train_ds, cfg)
        stalled |= report.stalled
        experts.append(model)
    scorer = Committee(tuple(experts)) if scheme.is_committee else experts[0]
    t = build_tensor(scorer, test_ds)
    dcf = min_dcf(split_scores(t), p_true=p_true).min_dcf
    return RunRecord(scheme, run_index, seeds, identification_rate(t), dcf, stalled)


def run_scheme(scheme: SchemeId, train_ds: LabeledDataset, test_ds: LabeledDataset,
               n_runs: int = 100, base_seed: int = 0, *, hidden: int = 30,
               epochs: dict | None = None, clone_members: bool = False, jobs: int = 1,
               p_true: float = 0.5) -> list[RunRecord]:
    """Train and evaluate ``n_runs`` independent initializations of ``scheme``.

    ``train_ds``/``test_ds`` must already be normalized. ``epochs`` maps
    ``"mse"``/``"msereg"`` to an epoch budget (defaults 10/50).
    ``clone_members`` gives every committee member the single-network seed of
    the same run, which makes a committee reproduce its single scheme.
    """
    scheme = SchemeId.parse(scheme)
    if n_runs < 2:
        raise ValueError("n_runs must be >= 2")
    if base_seed < 0:
        raise ValueError("base_seed must be non-negative")
    args = [(scheme, r, train_ds, test_ds, base_seed, hidden, dict(epochs or {}),
             clone_members, p_true) for r in range(n_runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_one_star, args))
    else:
        records = [_run_one(*a) for a in args]
    records.sort(key=lambda r: r.run_index)
    for r in records:
        if r.stalled:
            logger.warning("%s run %d stalled; excluded from summary", scheme.value, r.run_index)
    return records


def _run_one_star(args):
    return _run_one(*args)


def run_experiment(train_ds, test_ds, schemes=tuple(SchemeId), n_runs: int = 100,
                   base_seed: int = 0, **kwargs) -> dict[SchemeId, list[RunRecord]]:
    return {SchemeId.parse(s): run_scheme(s, train_ds, test_ds, n_runs, base_seed, **kwargs)
            for s in schemes}


def _pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    return float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))


def _valid(records) -> list[RunRecord]:
    return [r for r in records if not r.stalled]


def summarize(records) -> dict[SchemeId, SchemeSummary]:
    """Per-scheme Gaussian fit (unbiased std) and ident/DCF Pearson correlation."""
    by_scheme: dict[SchemeId, list[RunRecord]] = {}
    for r in records:
        by_scheme.setdefault(r.scheme, []).append(r)
    out = {}
    for scheme, recs in by_scheme.items():
        valid = _valid(recs)
        if len(valid) < 2:
            raise ValueError(f"{scheme.value}: need at least 2 valid records, have {len(valid)}")
        ident = np.array([r.identification_rate for r in valid])
        dcf = np.array([r.min_dcf for r in valid])
        out[scheme] = SchemeSummary(
            n_runs=len(valid), n_excluded=len(recs) - len(valid),
            ident_mean=float(ident.mean()), ident_std=float(ident.std(ddof=1)),
            dcf_mean=float(dcf.mean()), dcf_std=float(dcf.std(ddof=1)),
            corr=_pearson(ident, dcf),
        )
    return out


def emit_histograms(records, bins: int = 10) -> dict[tuple[SchemeId, str], Histogram]:
    """Equal-width histograms per (scheme, metric) over the observed range."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    out = {}
    schemes = sorted({r.scheme for r in records}, key=list(SchemeId).index)
    for scheme in schemes:
        valid = _valid(r for r in records if r.scheme == scheme)
        for metric, attr in (("ident", "identification_rate"), ("dcf", "min_dcf")):
            v = np.array([getattr(r, attr) for r in valid])
            counts, edges = np.histogram(v, bins=bins)
            out[scheme, metric] = Histogram(edges, counts)
    return out


def emit_scatter(records) -> dict[SchemeId, ScatterFit]:
    """(identification, min DCF) points with the least-squares line per scheme."""
    out = {}
    schemes = sorted({r.scheme for r in records}, key=list(SchemeId).index)
    for scheme in schemes:
        valid = _valid(r for r in records if r.scheme == scheme)
        if len(valid) < 2:
            raise ValueError(f"{scheme.value}: need at least 2 records for a scatter fit")
        pts = np.array([(r.identification_rate, r.min_dcf) for r in valid])
        x, y = pts[:, 0], pts[:, 1]
        dx = x - x.mean()
        sxx = float(dx @ dx)
        if sxx == 0.0:
            out[scheme] = ScatterFit(pts, None, None)
            continue
        slope = float(dx @ (y - y.mean())) / sxx
        out[scheme] = ScatterFit(pts, slope, float(y.mean() - slope * x.mean()))
    return out


def _fmt(v) -> str:
    return UNDEFINED if v is None else repr(float(v))


def write_records(records, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_index", "seed", "ident_rate", "min_dcf", "stalled"])
        for r in records:
            w.writerow([r.run_index, ";".join(map(str, r.seeds)), repr(r.identification_rate),
                        repr(r.min_dcf), int(r.stalled)])


def write_outputs(results: dict[SchemeId, list[RunRecord]], out_dir, bins: int = 10) -> dict:
    """Write per-scheme records/histograms/scatter CSVs and a summary.csv.

    Layout: ``out_dir/<scheme>/{records,histogram_ident,histogram_dcf,scatter}.csv``
    and ``out_dir/summary.csv``. Returns the summary mapping.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    all_records = [r for recs in results.values() for r in recs]
    summary = summarize(all_records)
    hists = emit_histograms(all_records, bins)
    scatter = emit_scatter(all_records)
    for scheme, recs in results.items():
        d = out_dir / scheme.value
        d.mkdir(exist_ok=True)
        write_records(recs, d / "records.csv")
        for metric in ("ident", "dcf"):
            h = hists[scheme, metric]
            with (d / f"histogram_{metric}.csv").open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["bin_lo", "bin_hi", "count"])
                for lo, hi, c in zip(h.edges[:-1], h.edges[1:], h.counts):
                    w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
        fit = scatter[scheme]
        with (d / "scatter.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["ident_rate", "min_dcf"])
            for x, y in fit.points:
                w.writerow([repr(float(x)), repr(float(y))])
            w.writerow([])
            w.writerow(["slope", "intercept"])
            w.writerow([_fmt(fit.slope), _fmt(fit.intercept)])
    with (out_dir / "summary.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "ident_mean", "ident_std", "dcf_mean", "dcf_std", "corr",
                    "n_runs", "n_excluded"])
        for scheme in results:
            s = summary[scheme]
            w.writerow([scheme.value, _fmt(s.ident_mean), _fmt(s.ident_std), _fmt(s.dcf_mean),
                        _fmt(s.dcf_std), _fmt(s.corr), s.n_runs, s.n_excluded])
    return summary
