"""``cthsmm`` command line: simulate, train, select, rules, predict, evaluate."""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

from .cart import TreeGrowthConfig, grow_tree
from .duration import DEFAULT_DMAX_FACTOR
from .errors import CthsmmError, NumericError, SchemaError
from .evaluation import horizon_sweep, sweep_to_csv
from .model import CthsmmModel, build_model, render_timeline, viterbi_decode
from .selection import MMIE_CP, PriorMode, build_candidates, parse_scan, select_model
from .simulator import load_spec, sample_dataset, weather_spec
from .temporal_data import TemporalDataset, load_csv, split_by_entity, write_csv

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_SCHEMA = 4
EXIT_VALIDATION = 5
EXIT_NUMERIC = 6


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _write_dataset(data: TemporalDataset, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        write_csv(data, tmp)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _write_model(model: CthsmmModel, path: Path) -> None:
    _atomic_write(path, json.dumps(model.to_dict(), indent=1) + "\n")


def parse_horizons(text: str) -> list[int]:
    """Comma list of integers or ``a-b`` ranges, e.g. ``1-10,12,24``."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError(f"bad horizons {text!r}")
    return out


def parse_observations(text: str) -> list[str]:
    """Run-length pairs ``label:count,label:count`` expanded to one label per time unit."""
    out: list[str] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        label, sep, count = part.rpartition(":")
        if not sep or not label:
            label, count = part, "1"
        try:
            n = int(count)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad run length in {part!r}") from None
        if n < 1:
            raise argparse.ArgumentTypeError(f"run length must be >= 1 in {part!r}")
        out.extend([label] * n)
    if not out:
        raise argparse.ArgumentTypeError("empty observation sequence")
    return out


def _load_input(args) -> TemporalDataset:
    predictors = [p.strip() for p in args.predictors.split(",")] if args.predictors else None
    return load_csv(args.input, entity_col=args.entity_col, obs_col=args.obs_col,
                    duration_col=args.duration_col, predictors=predictors)


def _add_columns(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, type=Path, help="event-log CSV")
    p.add_argument("--entity-col", default="entity")
    p.add_argument("--obs-col", default="observation")
    p.add_argument("--duration-col", default="duration")
    p.add_argument("--predictors", default=None, help="comma-separated predictor columns (default: all others)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cthsmm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a synthetic dataset from a ground-truth spec")
    p.add_argument("--spec", type=Path, default=None, help="ground-truth JSON (default: built-in weather system)")
    p.add_argument("--output-dir", type=Path, required=True)
    p.add_argument("--seed", type=int, default=None, help="override the spec's seed")

    p = sub.add_parser("train", help="grow a tree at one minbucket and write the model JSON")
    _add_columns(p)
    p.add_argument("--output-dir", type=Path, required=True)
    p.add_argument("--minbucket", type=int, default=None, help="default: 1%% of training records")
    p.add_argument("--max-depth", type=int, default=30)
    p.add_argument("--cp", type=float, default=0.0)
    p.add_argument("--train-fraction", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dmax-factor", type=float, default=DEFAULT_DMAX_FACTOR)

    p = sub.add_parser("select", help="build candidate models and score them on held-out entities")
    _add_columns(p)
    p.add_argument("--output-dir", type=Path, required=True)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--minbucket", type=int, default=None, help="full-tree minbucket (default: 1%% of records)")
    p.add_argument("--scan", default=None, help="MMIE minbucket range start:stop[:step]")
    p.add_argument("--k-folds", type=int, default=10)
    p.add_argument("--prior-mode", choices=["uniform", "record", "duration"], default="record")
    p.add_argument("--horizons", type=parse_horizons, default=parse_horizons("1-24"))
    p.add_argument("--dmax-factor", type=float, default=DEFAULT_DMAX_FACTOR)
    p.add_argument("--mmie-cp", type=float, default=MMIE_CP)

    p = sub.add_parser("rules", help="print the state definition rules of a model")
    p.add_argument("--model", type=Path, required=True)

    p = sub.add_parser("predict", help="decode the most probable state segments")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--observations", type=parse_observations, required=True,
                   help="run-length pairs, e.g. ICU:5,Floor:3")
    p.add_argument("--format", choices=["text", "json"], default="text")

    p = sub.add_parser("evaluate", help="horizon sweep of a model on a test CSV")
    _add_columns(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--output-dir", type=Path, required=True)
    p.add_argument("--horizons", type=parse_horizons, default=parse_horizons("1-24"))
    return parser


def cmd_simulate(args) -> None:
    spec = load_spec(args.spec) if args.spec else weather_spec()
    if args.seed is not None:
        spec = type(spec)(**{**spec.__dict__, "seed": args.seed})
    data = sample_dataset(spec)
    _write_dataset(data, args.output_dir / "dataset.csv")
    _atomic_write(args.output_dir / "ground_truth.json", json.dumps(spec.to_dict(), indent=1) + "\n")
    print(f"wrote {len(data)} records for {len(data.entities)} entities to {args.output_dir / 'dataset.csv'}")


def cmd_train(args) -> None:
    data = _load_input(args)
    train = data if args.train_fraction >= 1.0 else split_by_entity(data, args.train_fraction, args.seed)[0]
    minbucket = args.minbucket or max(1, round(0.01 * len(train)))
    tree = grow_tree(train, TreeGrowthConfig(minbucket=minbucket, max_depth=args.max_depth, cp=args.cp))
    model = build_model(tree, train, args.dmax_factor)
    path = args.output_dir / "model.json"
    _write_model(model, path)
    print(f"wrote {model.n_states}-state model to {path}")


def cmd_select(args) -> None:
    data = _load_input(args)
    train, test = split_by_entity(data, args.train_fraction, args.seed)
    if len(test) == 0:
        raise SchemaError("the split left no test entities; lower --train-fraction")
    scan = parse_scan(args.scan) if args.scan else None
    candidates = build_candidates(train, args.k_folds, args.seed, PriorMode.parse(args.prior_mode),
                                  minbucket=args.minbucket, scan=scan, mmie_cp=args.mmie_cp,
                                  dmax_factor=args.dmax_factor)
    report = select_model(candidates, test, args.horizons)
    out = args.output_dir
    _write_dataset(train, out / "train.csv")
    _write_dataset(test, out / "test.csv")
    for c in candidates:
        _write_model(c.model, out / "models" / f"{c.label}.json")
        if c.is_mmie and c.label != "mmie":
            # the MMIE tree coincides with another candidate; keep models/mmie.json available anyway
            _write_model(c.model, out / "models" / "mmie.json")
    lines = ["label,n_states,mi_bits,cv_mr,minbucket,is_mmie"]
    for r in report.rows:
        minbucket = "" if r.minbucket is None else r.minbucket
        lines.append(f"{r.label},{r.n_states},{r.mi_bits!r},{r.cv_mr!r},{minbucket},{int(r.is_mmie)}")
    _atomic_write(out / "candidates.csv", "\n".join(lines) + "\n")
    _atomic_write(out / "selection_report.json", report.to_json())
    _atomic_write(out / "selection_sweep.csv", report.to_csv())
    print(f"{len(candidates)} candidates; report in {out / 'selection_report.json'}")
    for r in report.rows:
        flag = " (MMIE)" if r.is_mmie else ""
        print(f"  {r.label:<10} states={r.n_states:<3d} MI={r.mi_bits:.4f} CV-MR={r.cv_mr:.4f}{flag}")


def cmd_rules(args) -> None:
    model = CthsmmModel.load(args.model)
    header = "State\t" + "\t".join(model.alphabet) + "\tState Definition Rule"
    print(header)
    for rule in model.rules:
        row = model.emissions[rule.state_id - 1]
        probs = "\t".join(f"{p:.4f}" for p in row)
        print(f"S{rule.state_id}\t{probs}\t{rule.render()}")


def cmd_predict(args) -> None:
    model = CthsmmModel.load(args.model)
    result = viterbi_decode(model, args.observations)
    if args.format == "json":
        rules = {r.state_id: r.render() for r in model.rules}
        doc = {
            "log_prob": result.log_prob,
            "segments": [{"state_id": s.state, "duration": s.duration, "rule": rules[s.state]}
                         for s in result.segments],
        }
        print(json.dumps(doc, indent=1))
    else:
        print(render_timeline(model, result))


def cmd_evaluate(args) -> None:
    model = CthsmmModel.load(args.model)
    if args.predictors is None:
        args.predictors = ",".join(model.feature_names)
    test = _load_input(args)
    metrics = horizon_sweep(model, test, args.horizons)
    path = args.output_dir / "sweep.csv"
    _atomic_write(path, sweep_to_csv(metrics))
    print(f"wrote {path}")


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "select": cmd_select,
    "rules": cmd_rules,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except OSError as exc:
        print(f"cthsmm: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SchemaError as exc:
        print(f"cthsmm: schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except NumericError as exc:
        print(f"cthsmm: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CthsmmError as exc:
        print(f"cthsmm: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except json.JSONDecodeError as exc:
        print(f"cthsmm: schema error: invalid JSON: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    return 0


if __name__ == "__main__":
    sys.exit(main())
