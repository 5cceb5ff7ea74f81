"""Command-line entry point: ``nncommittee <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical stall.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import kernels

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_STALL = 0, 1, 2, 3

logger = logging.getLogger("nncommittee")


class UsageError(Exception):
    pass


class Stalled(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(text: str) -> list[str]:
    return [t for t in (s.strip() for s in text.split(",")) if t]


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _scheme_list(text: str) -> list[str]:
    from .experiment import SchemeId

    items = _csv_list(text)
    try:
        for s in items:
            SchemeId.parse(s)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return items


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nncommittee", description=__doc__.splitlines()[0])
    p.add_argument("--config", metavar="FILE",
                   help="JSON object of flag defaults (keys are flag names); flags win")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a synthetic Gaussian-cluster dataset")
    g.add_argument("--people", type=_positive_int, default=22)
    g.add_argument("--trials", type=_positive_int, default=10)
    g.add_argument("--dims", type=_positive_int, default=9)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--spread", type=float, default=2.0)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train one MLP with Levenberg-Marquardt")
    t.add_argument("--data", required=True)
    t.add_argument("--scheme", choices=["mse", "msereg"], default="mse")
    t.add_argument("--epochs", type=_positive_int, default=None,
                   help="accepted LM updates (default 10 for mse, 50 for msereg)")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--hidden", type=_positive_int, default=30)
    t.add_argument("--train-per-person", type=_positive_int, default=5)
    t.add_argument("--out", required=True, help="model checkpoint (JSON)")
    t.add_argument("--report", default=None,
                   help="training trace CSV (default: <out>.report.csv)")

    c = sub.add_parser("committee", help="bundle trained models into a BEM committee")
    c.add_argument("--models", type=_csv_list, required=True, help="m1,m2,m3")
    c.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="identification rate, min DCF and DET curve")
    e.add_argument("--model", required=True, help="model or committee file")
    e.add_argument("--data", required=True)
    e.add_argument("--train-per-person", type=_positive_int, default=5)
    e.add_argument("--p-true", type=float, default=0.5)
    e.add_argument("--c-miss", type=float, default=1.0)
    e.add_argument("--c-fa", type=float, default=1.0)
    e.add_argument("--det-out", default=None, help="DET curve CSV")
    e.add_argument("--det-svg", default=None, help="DET curve SVG")

    x = sub.add_parser("experiment", help="multi-start study of schemes a-d")
    x.add_argument("--data", required=True)
    x.add_argument("--runs", type=_positive_int, default=100)
    x.add_argument("--seed", type=int, default=0)
    x.add_argument("--schemes", type=_scheme_list, default=["a", "b", "c", "d"])
    x.add_argument("--out", required=True)
    x.add_argument("--jobs", type=_positive_int, default=1)
    x.add_argument("--bins", type=int, default=10)
    x.add_argument("--hidden", type=_positive_int, default=30)
    x.add_argument("--mse-epochs", type=_positive_int, default=10)
    x.add_argument("--msereg-epochs", type=_positive_int, default=50)
    x.add_argument("--train-per-person", type=_positive_int, default=5)
    x.add_argument("--p-true", type=float, default=0.5)
    return p


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def parse_args(argv):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if known.config:
        path = Path(known.config)
        try:
            cfg = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise FileNotFoundError(f"config file not found: {path}") from None
        if not isinstance(cfg, dict):
            raise UsageError(f"{path}: config must be a JSON object")
        command = next((a for a in rest if not a.startswith("-")), None)
        if command not in COMMANDS:
            raise UsageError("a subcommand is required")
        sub = _subparser(parser, command)
        known_dests = {a.dest for a in sub._actions}
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        unknown = sorted(set(cfg) - known_dests)
        if unknown:
            raise UsageError(f"{path}: unknown keys for {command}: {', '.join(unknown)}")
        for a in sub._actions:
            if a.dest in cfg:
                a.required = False
        sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def _echo_config(args) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "verbose"}
    resolved["backend"] = kernels.BACKEND
    print("config: " + json.dumps(resolved, sort_keys=True))


def cmd_gen_data(args) -> None:
    from .data import generate_synthetic, save_dataset

    ds = generate_synthetic(args.people, args.trials, args.dims, args.seed, args.spread)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} samples ({args.people} people x {args.trials} trials) to {args.out}")


def cmd_train(args) -> None:
    from .data import load_dataset
    from .experiment import prepare
    from .mlp import MlpTopology, init_weights, save_model
    from .train import TrainConfig, train

    ds = load_dataset(args.data, expected_dims=None)
    train_ds, _, norm = prepare(ds, args.train_per_person)
    cfg = TrainConfig(args.scheme, epochs=args.epochs, seed=args.seed)
    topo = MlpTopology(train_ds.dims, args.hidden, train_ds.people_count)
    model, report = train(init_weights(topo, args.seed), train_ds, cfg)
    save_model(model, args.out, norm)
    report.write_csv(args.report or f"{args.out}.report.csv")
    line = (f"scheme={cfg.scheme} epochs={report.n_accepted} rejected={report.n_rejected} "
            f"train_mse={report.final_mse!r}")
    if report.gamma is not None:
        line += f" gamma={report.gamma!r} alpha={report.alpha!r} beta={report.beta!r}"
    print(line)
    if report.stalled:
        raise Stalled(f"training stalled after {report.n_accepted} accepted steps "
                      f"(model still written to {args.out})")


def cmd_committee(args) -> None:
    import numpy as np

    from .committee import Committee, save_committee
    from .mlp import load_model

    if not args.models:
        raise UsageError("--models needs at least one file")
    members, norms = [], []
    for path in args.models:
        if not Path(path).exists():
            raise FileNotFoundError(f"model file not found: {path}")
        m, n = load_model(path)
        members.append(m)
        norms.append(n)
    ref = norms[0]
    for n in norms[1:]:
        if (n is None) != (ref is None) or (
                n is not None and not (np.array_equal(n.mean, ref.mean)
                                       and np.array_equal(n.std, ref.std))):
            raise ValueError("committee members were trained with different normalizers")
    save_committee(Committee(tuple(members)), args.out, ref)
    print(f"wrote committee of {len(members)} to {args.out}")


def cmd_eval(args) -> None:
    from pathlib import Path as _P

    from .committee import load_scorer
    from .data import fit_normalizer, load_dataset, split_train_test
    from .evaluation import (det_curve, det_svg, identification_rate, min_dcf, split_scores,
                             write_det_csv, build_tensor)

    if not _P(args.model).exists():
        raise FileNotFoundError(f"model file not found: {args.model}")
    scorer, norm = load_scorer(args.model)
    ds = load_dataset(args.data, expected_dims=None)
    train_ds, test_ds = split_train_test(ds, args.train_per_person)
    if norm is None:
        norm = fit_normalizer(train_ds)
    t = build_tensor(scorer, test_ds, norm)
    split = split_scores(t)
    ident = identification_rate(t)
    res = min_dcf(split, args.c_miss, args.c_fa, args.p_true)
    print(f"identification_rate={ident!r} ({100 * ident:.2f}%)")
    print(f"min_dcf={res.min_dcf!r} ({100 * res.min_dcf:.2f}%) threshold={res.threshold!r}")
    if args.det_out or args.det_svg:
        curve = det_curve(split)
        if args.det_out:
            write_det_csv(curve, args.det_out)
        if args.det_svg:
            _P(args.det_svg).write_text(det_svg(curve), encoding="utf-8")


def cmd_experiment(args) -> None:
    from .data import load_dataset
    from .experiment import SchemeId, prepare, run_experiment, write_outputs

    schemes = [SchemeId.parse(s) for s in args.schemes]
    ds = load_dataset(args.data, expected_dims=None)
    train_ds, test_ds, _ = prepare(ds, args.train_per_person)
    results = run_experiment(
        train_ds, test_ds, schemes, n_runs=args.runs, base_seed=args.seed,
        hidden=args.hidden, epochs={"mse": args.mse_epochs, "msereg": args.msereg_epochs},
        jobs=args.jobs, p_true=args.p_true,
    )
    for scheme, recs in results.items():
        if sum(not r.stalled for r in recs) < 2:
            raise Stalled(f"{scheme.value}: fewer than 2 runs finished without stalling")
    summary = write_outputs(results, args.out, args.bins)
    print("scheme,ident_mean,ident_std,dcf_mean,dcf_std,corr,n_runs,n_excluded")
    for scheme, s in summary.items():
        corr = "undefined" if s.corr is None else f"{s.corr:.3f}"
        print(f"{scheme.value},{100 * s.ident_mean:.2f}%,{100 * s.ident_std:.2f}%,"
              f"{100 * s.dcf_mean:.2f}%,{100 * s.dcf_std:.2f}%,{corr},{s.n_runs},{s.n_excluded}")


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "committee": cmd_committee,
    "eval": cmd_eval,
    "experiment": cmd_experiment,
}


def dispatch(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except UsageError as exc:
        print(f"nncommittee: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, ValueError) as exc:
        print(f"nncommittee: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _echo_config(args)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"nncommittee: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Stalled as exc:
        print(f"nncommittee: stalled: {exc}", file=sys.stderr)
        return EXIT_STALL
    except (FileNotFoundError, ValueError, OSError) as exc:
        print(f"nncommittee: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
