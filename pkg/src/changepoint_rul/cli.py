"""Command-line entry points: detect | train | evaluate | monitor | sweep.

Exit codes: 0 success, 1 config error, 2 data integrity error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import default_config, load_config
from .errors import DataError, PipelineError
from .pipeline import run_detect, run_evaluate, run_sweep, run_train
from .streaming import run_monitor

log = logging.getLogger("cprul")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--dataset", help="dataset id (FD001..FD004)")
    parser.add_argument("--data-dir", help="directory holding the C-MAPSS text files")
    parser.add_argument("--out-dir", help="directory for reports and artifacts")
    parser.add_argument("--seed", type=int, help="RNG seed for training and shuffling")
    parser.add_argument("--subset", type=int, help="use only the first N engines")
    parser.add_argument("--threads", type=int, help="worker threads for per-engine fitting")


def _build_config(args):
    overrides = {}
    for flag, key in (
        ("dataset", "dataset_id"),
        ("data_dir", "data_dir"),
        ("out_dir", "out_dir"),
        ("seed", "seed"),
        ("subset", "subset"),
        ("threads", "threads"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    if getattr(args, "traces", False):
        overrides["export_traces"] = True
    if args.config:
        return load_config(args.config, **overrides)
    dataset = overrides.pop("dataset_id", "FD001")
    return default_config(dataset, **overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cprul",
        description=(
            "Change-point detection from sensor temporal dynamics and "
            "change-point-informed RUL estimation"
        ),
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_detect = sub.add_parser("detect", help="fit per-engine monitors and change points")
    _add_common(p_detect)
    p_detect.add_argument("--traces", action="store_true", help="export per-engine statistic traces")

    p_train = sub.add_parser("train", help="train the RUL regressor on piecewise labels")
    _add_common(p_train)
    p_train.add_argument("--epochs", type=int, help="override training epoch count")

    p_eval = sub.add_parser("evaluate", help="score a checkpoint on the test set")
    _add_common(p_eval)
    p_eval.add_argument("--checkpoint", help="checkpoint path (default: <out-dir>/checkpoint.npz)")

    p_mon = sub.add_parser("monitor", help="stream per-cycle records through fitted monitors")
    _add_common(p_mon)
    p_mon.add_argument("--monitors", required=True, help="monitors directory from a detect run")
    p_mon.add_argument("--checkpoint", help="regressor checkpoint for online RUL estimates")
    p_mon.add_argument(
        "--input", default="-", help="line-delimited JSON records file, or - for stdin"
    )

    p_sweep = sub.add_parser("sweep", help="repeat the pipeline over minimum-lifespan candidates")
    _add_common(p_sweep)
    p_sweep.add_argument(
        "--candidates",
        required=True,
        help="comma-separated minimum lifespans, e.g. 100,125,150,175,200,225",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "detect":
            config = _build_config(args)
            _, summary = run_detect(config)
            print(
                f"{summary['dataset']}: {summary['n_detected']} detected, "
                f"{summary['n_fallback']} fallback of {summary['n_engines']} engines"
            )
        elif args.command == "train":
            config = _build_config(args)
            _, history, meta = run_train(config)
            final = f"{history[-1]:.3f}" if history else "n/a"
            print(
                f"trained on {meta['n_windows']} windows, final epoch mse {final}; "
                f"artifacts in {config.out_dir}"
            )
        elif args.command == "evaluate":
            config = _build_config(args)
            run_evaluate(config, checkpoint_path=args.checkpoint)
        elif args.command == "monitor":
            config = _build_config(args)
            if args.input == "-":
                n = run_monitor(
                    args.monitors,
                    sys.stdin,
                    sys.stdout,
                    checkpoint_path=args.checkpoint,
                    rul_cap=float(config.fallback_cap),
                )
            else:
                with open(args.input) as fh:
                    n = run_monitor(
                        args.monitors,
                        fh,
                        sys.stdout,
                        checkpoint_path=args.checkpoint,
                        rul_cap=float(config.fallback_cap),
                    )
            log.info("emitted %d events", n)
        elif args.command == "sweep":
            config = _build_config(args)
            candidates = [int(v) for v in args.candidates.split(",") if v.strip()]
            rows = run_sweep(config, candidates)
            for row in rows:
                if row["applicable"]:
                    print(
                        f"min_lifespan={row['min_lifespan']:<4d} "
                        f"RMSE={row['rmse']:7.2f}  SF={row['sf']:10.2f}"
                    )
                else:
                    print(f"min_lifespan={row['min_lifespan']:<4d} NA ({row['reason']})")
    except FileNotFoundError as exc:
        print(f"error: missing input file: {exc}", file=sys.stderr)
        return DataError.exit_code
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
