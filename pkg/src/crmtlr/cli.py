"""Command-line interface: train, predict, evaluate, simulate, gradcheck.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import gradcheck, synthgen
from .dataset import Cohort, DataError, FeatureEncoding, Schema, build_grid, parse_outcomes, read_rows
from .metrics import UndefinedMetric, cause_specific_cindex, horizon_auroc, lifetime_risk
from .mtlr import CifCurve, cif_at
from .trainer import ModelFileError, TrainConfig, TrainingDiverged, atomic_write_text, load, save, train

log = logging.getLogger("crmtlr")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _hidden(text: str) -> tuple[int, ...]:
    text = text.strip()
    if text in ("", "none"):
        return ()
    try:
        widths = tuple(int(w) for w in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated widths, got {text!r}") from None
    if any(w < 1 for w in widths):
        raise argparse.ArgumentTypeError("layer widths must be positive")
    return widths


def _batch(text: str):
    if text == "full":
        return text
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("batch size must be an integer or 'full'") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crmtlr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit a model on a labelled CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", "--model", dest="out", required=True, help="model file to write")
    p.add_argument("--log", help="per-epoch loss log (CSV); default <out>.log.csv")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, help="number of time intervals (default: sqrt of training size)")
    p.add_argument("--grid", choices=("quantile", "uniform"), default="quantile")
    p.add_argument("--c1", type=float, default=0.0, help="head regularization strength")
    p.add_argument("--c2", type=float, default=0.0, help="encoder regularization strength")
    p.add_argument("--penalty", choices=("ridge", "difference"), default="ridge")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--batch-size", type=_batch)
    p.add_argument("--hidden", type=_hidden, default=(128, 128, 128), help="hidden widths, e.g. 128,128,128")
    p.add_argument("--linear", action="store_true", help="no encoder: linear MTLR on the raw features")
    p.add_argument("--val-fraction", type=float, default=0.15)
    p.add_argument("--split-column", help="column whose value 'val'/'validation' marks validation rows")

    p = sub.add_parser("predict", help="write per-subject CIF curves and lifetime risks")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="cause-specific C-index and AUROC at a horizon")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--tau", type=float, default=2.0)
    p.add_argument("--exclude-censored", action="store_true", help="drop subjects censored before tau from AUROC negatives")

    p = sub.add_parser("simulate", help="generate a synthetic competing-risks cohort")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spec", help="JSON hazard parameters (coefs, intercepts, censor_rate, t_max, interaction)")
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--events", type=int, default=2)
    p.add_argument("--censor-rate", type=float, default=0.18)
    p.add_argument("--t-max", type=float, default=10.0)

    p = sub.add_parser("gradcheck", help="finite-difference check of all training gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=10)
    p.add_argument("--tol", type=float, default=gradcheck.REL_TOL)
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    return parser


def _split(rows, args):
    n = len(rows)
    if args.split_column:
        if args.split_column not in rows[0]:
            raise DataError(f"split column {args.split_column!r} not in data")
        is_val = np.array([r[args.split_column].strip().lower() in ("val", "validation") for r in rows])
    else:
        if not 0 < args.val_fraction < 1:
            raise UsageError("--val-fraction must be in (0, 1)")
        order = np.random.default_rng(args.seed).permutation(n)
        n_val = max(1, int(round(args.val_fraction * n)))
        is_val = np.zeros(n, dtype=bool)
        is_val[order[:n_val]] = True
    train_idx, val_idx = np.flatnonzero(~is_val), np.flatnonzero(is_val)
    if train_idx.size == 0 or val_idx.size == 0:
        raise DataError("train/validation split left one side empty")
    return train_idx, val_idx


def cmd_train(args) -> int:
    schema = Schema.read(args.schema)
    rows = read_rows(args.data, ["id", "time", "event", *(name for name, _ in schema.columns)])
    if len(rows) < 2:
        raise DataError(f"{args.data}: need at least two rows to train")
    _, times, events = parse_outcomes(rows, schema.n_events)
    n_events = schema.n_events or max(1, int(events.max()))
    train_idx, val_idx = _split(rows, args)

    train_rows = [rows[i] for i in train_idx]
    encoding = FeatureEncoding.fit(train_rows, schema)
    X = encoding.transform(rows)
    grid = build_grid(times[train_idx], events[train_idx], k=args.k, spacing=args.grid)
    cohort = Cohort.from_arrays(X, times, events, grid, n_events)
    config = TrainConfig(
        learning_rate=args.lr,
        c1_head=args.c1,
        c2_encoder=args.c2,
        max_epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        patience=args.patience,
        hidden=() if args.linear else args.hidden,
        penalty=args.penalty,
    )
    log.info("training on %d subjects, validating on %d, K=%d", train_idx.size, val_idx.size, grid.n_intervals)
    history = []
    bundle = train(cohort.subset(train_idx), cohort.subset(val_idx), config, grid, encoding, history)

    log_path = args.log or f"{args.out}.log.csv"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "train_loss", "val_nll"])
    writer.writerows([e, repr(t), repr(v)] for e, t, v in history)
    save(bundle, args.out)
    atomic_write_text(log_path, buf.getvalue())
    print(f"best epoch {bundle.meta['best_epoch']} of {bundle.meta['epochs_run']}, validation NLL {bundle.meta['val_loss']:.6f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def _load_features(bundle, path, labelled: bool):
    if bundle.encoding is None:
        raise DataError("model has no stored feature encoding")
    required = ["id", *(name for name, _ in bundle.encoding.columns)]
    if labelled:
        required += ["time", "event"]
    rows = read_rows(path, required)
    return rows, bundle.encoding.transform(rows)


def prediction_table(bundle, ids, X) -> str:
    cif = bundle.predict_cif(X) if len(ids) else np.zeros((0, bundle.n_events, bundle.grid.n_intervals))
    risk = lifetime_risk(cif)
    n_edges = bundle.grid.edges.size
    header = ["id"]
    for e in range(1, bundle.n_events + 1):
        header += [f"cif_e{e}_t{k}" for k in range(1, n_edges + 1)]
    header += [f"risk_e{e}" for e in range(1, bundle.n_events + 1)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for i, sid in enumerate(ids):
        row = [sid]
        for e in range(bundle.n_events):
            row += [repr(float(v)) for v in cif[i, e, :n_edges]]
        row += [repr(float(v)) for v in risk[i]]
        writer.writerow(row)
    return buf.getvalue()


def cmd_predict(args) -> int:
    bundle = load(args.model)
    rows, X = _load_features(bundle, args.data, labelled=False)
    atomic_write_text(args.out, prediction_table(bundle, [r["id"] for r in rows], X))
    print(f"wrote {len(rows)} predictions to {args.out}")
    return EXIT_OK


def evaluation_report(bundle, X, times, events, tau: float, exclude_censored: bool = False):
    """Per-event metrics as ``(key, value_or_None, reason)`` triples."""
    cif = bundle.predict_cif(X) if len(times) else np.zeros((0, bundle.n_events, bundle.grid.n_intervals))
    risk = lifetime_risk(cif)
    at_tau = cif_at(CifCurve(cif), bundle.grid, tau)
    out = []
    for e in range(1, bundle.n_events + 1):
        try:
            out.append((f"cindex_{e}", cause_specific_cindex(risk[:, e - 1], times, events, e), ""))
        except UndefinedMetric as exc:
            out.append((f"cindex_{e}", None, str(exc)))
        try:
            value = horizon_auroc(at_tau[:, e - 1], times, events, e, tau, exclude_censored)
            out.append((f"auroc_{e}@{tau:g}", value, ""))
        except UndefinedMetric as exc:
            out.append((f"auroc_{e}@{tau:g}", None, str(exc)))
    return out


def cmd_evaluate(args) -> int:
    bundle = load(args.model)
    rows, X = _load_features(bundle, args.data, labelled=True)
    _, times, events = parse_outcomes(rows, bundle.n_events)
    report = evaluation_report(bundle, X, times, events, args.tau, args.exclude_censored)
    print(f"{len(rows)} subjects, horizon tau = {args.tau:g}")
    for key, value, reason in report:
        print(f"  {key:<14} {'NA (' + reason + ')' if value is None else f'{value:.4f}'}")
    for key, value, _ in report:
        print(f"{key}={'NA' if value is None else repr(value)}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.spec:
        try:
            spec = synthgen.HazardSpec.from_dict(json.loads(Path(args.spec).read_text()))
        except OSError as exc:
            raise DataError(f"cannot read spec file {args.spec}: {exc.strerror}") from None
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise DataError(f"invalid spec file {args.spec}: {exc}") from None
    else:
        if args.d < 1 or args.events < 1:
            raise UsageError("--d and --events must be positive")
        rng = np.random.default_rng(args.seed)
        spec = synthgen.HazardSpec(
            0.7 * rng.standard_normal((args.events, args.d)),
            np.full(args.events, -1.0),
            args.censor_rate,
            args.t_max,
        )
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    records = synthgen.generate(spec, args.n, seed=args.seed)
    schema_path, spec_path = synthgen.sidecar_paths(args.out)
    atomic_write_text(args.out, synthgen.cohort_csv(records))
    atomic_write_text(schema_path, synthgen.schema_for(spec).dumps())
    atomic_write_text(spec_path, synthgen.sidecar(spec, args.n, args.seed))
    counts = np.bincount([r.event for r in records], minlength=spec.n_events + 1)
    print(f"wrote {args.n} subjects to {args.out} (censored {counts[0]}, events {counts[1:].tolist()})")
    print(f"schema {schema_path}, parameters {spec_path}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    report = gradcheck.run(seed=args.seed, points=args.points, corrupt=args.corrupt_gradient)
    ok = True
    for name, err in report.items():
        passed = err < args.tol
        ok &= passed
        print(f"{name:<20} max_rel_err={err:.3e} {'ok' if passed else 'FAIL'}")
    print("gradcheck " + ("passed" if ok else "FAILED"))
    return EXIT_OK if ok else EXIT_NUMERIC


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"crmtlr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelFileError) as exc:
        print(f"crmtlr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"crmtlr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"crmtlr: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"crmtlr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
