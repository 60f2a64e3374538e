"""Command-line driver.

Two subcommands: `run` trains one configuration, `grid` sweeps versions x
attacks x malicious percentages with baseline-first accuracy drops. Every
flag can also be supplied through an SFLPL_-prefixed environment variable
(e.g. SFLPL_EPOCHS=5); explicit flags win over the environment.
"""

from __future__ import annotations

import argparse
import os
import sys

from .experiment import ExperimentConfig, run, run_grid
from .poisoning import ATTACK_KINDS, AttackConfig
from .reporting import FORMATS, emit_grid_report, emit_run_report

ENV_PREFIX = "SFLPL_"


def _env_default(flag: str, fallback=None, cast=str):
    raw = os.environ.get(ENV_PREFIX + flag.upper().replace("-", "_"))
    if raw is None:
        return fallback
    try:
        if cast is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except ValueError:
        raise ValueError(f"bad value {raw!r} for {ENV_PREFIX}{flag.upper()}") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", choices=("mnist", "ecg", "synth"),
                   default=_env_default("dataset", "synth"))
    p.add_argument("--model-version", default=_env_default("model_version", "MNISTv1"))
    p.add_argument("--clients", type=int, default=_env_default("clients", None, int))
    p.add_argument("--epochs", type=int, default=_env_default("epochs", None, int))
    p.add_argument("--lr", type=float, default=_env_default("lr", None, float))
    p.add_argument("--batch-size", type=int, default=_env_default("batch_size", 32, int))
    p.add_argument("--seed", type=int, default=_env_default("seed", 0, int))
    p.add_argument("--preset", choices=("desk",), default=_env_default("preset", None))
    p.add_argument("--dtype", choices=("float32", "float64"),
                   default=_env_default("dtype", "float32"))
    p.add_argument("--out", default=_env_default("out", "sflpoison-out"))
    p.add_argument("--format", default=_env_default("format", ",".join(FORMATS)),
                   help="comma list from json,csv,markdown")
    p.add_argument("--mnist-dir", default=_env_default("mnist_dir", None))
    p.add_argument("--ecg-csv", default=_env_default("ecg_csv", None))
    p.add_argument("--synth-per-class", type=int,
                   default=_env_default("synth_per_class", None, int))
    p.add_argument("--train-per-client", type=int,
                   default=_env_default("train_per_client", None, int))
    p.add_argument("--holdout-per-client", type=int,
                   default=_env_default("holdout_per_client", None, int))
    p.add_argument("--test-size", type=int, default=_env_default("test_size", None, int))
    p.add_argument("--standardize-ecg", action="store_true",
                   default=_env_default("standardize_ecg", False, bool))
    p.add_argument("--aggregate-per-batch", action="store_true",
                   default=_env_default("aggregate_per_batch", False, bool))


def _add_attack(p: argparse.ArgumentParser) -> None:
    p.add_argument("--malicious-pct", type=int, default=_env_default("malicious_pct", 0, int))
    p.add_argument("--attack", choices=ATTACK_KINDS, default=_env_default("attack", "none"))
    p.add_argument("--source-class", type=int, default=_env_default("source_class", None, int))
    p.add_argument("--target-class", type=int, default=_env_default("target_class", None, int))
    p.add_argument("--flood-label", type=int, default=_env_default("flood_label", None, int))
    p.add_argument("--distance-scope", choices=("batch", "shard"),
                   default=_env_default("distance_scope", "batch"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sflpoison",
        description="SplitFed learning simulator with label-flipping poisoning attacks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train one configuration")
    _add_common(p_run)
    _add_attack(p_run)

    p_grid = sub.add_parser("grid", help="sweep versions x attacks x malicious percentages")
    _add_common(p_grid)
    p_grid.add_argument("--malicious-pcts", default=_env_default("malicious_pcts", "0,20,40"))
    p_grid.add_argument("--attacks",
                        default=_env_default("attacks", "untargeted-fixed,targeted,distance"))
    p_grid.add_argument("--versions", default=_env_default("versions", None),
                        help="comma list; defaults to both splits of the model family")
    p_grid.add_argument("--distance-scope", choices=("batch", "shard"),
                        default=_env_default("distance_scope", "batch"))
    return parser


def _config_from(args: argparse.Namespace, attack: AttackConfig) -> ExperimentConfig:
    return ExperimentConfig(
        dataset=args.dataset,
        model_version=args.model_version,
        clients=args.clients,
        malicious_pct=getattr(args, "malicious_pct", 0),
        attack=attack,
        epochs=args.epochs,
        lr=args.lr,
        batch_size=args.batch_size,
        seed=args.seed,
        preset=args.preset,
        dtype=args.dtype,
        mnist_dir=args.mnist_dir,
        ecg_csv=args.ecg_csv,
        synth_per_class=args.synth_per_class,
        train_per_client=args.train_per_client,
        holdout_per_client=args.holdout_per_client,
        test_size=args.test_size,
        standardize_ecg=args.standardize_ecg,
        aggregate_per_batch=args.aggregate_per_batch,
    )


def _formats(raw: str) -> tuple[str, ...]:
    wanted = tuple(f.strip() for f in raw.split(",") if f.strip())
    for f in wanted:
        if f not in FORMATS:
            raise ValueError(f"unknown format {f!r}; expected subset of {FORMATS}")
    return wanted


def _int_list(raw: str, flag: str) -> list[int]:
    try:
        return [int(v) for v in raw.split(",") if v.strip() != ""]
    except ValueError:
        raise ValueError(f"{flag} expects a comma list of integers, got {raw!r}") from None


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        formats = _formats(args.format)
        if args.command == "run":
            attack = AttackConfig(kind=args.attack,
                                  source_label=args.source_class,
                                  target_label=args.target_class,
                                  flood_label=args.flood_label,
                                  distance_scope=args.distance_scope)
            record = run(_config_from(args, attack))
            files = emit_run_report(record, args.out, formats)
            drop = record.final_accuracy_drop
            print(f"accuracy={record.final_accuracy:.2f}"
                  + (f" accuracy_drop={drop:.2f}" if drop is not None else "")
                  + f" duration={record.duration_seconds:.1f}s")
        else:
            attack = AttackConfig(kind="none", distance_scope=args.distance_scope)
            config = _config_from(args, attack)
            versions = (args.versions.split(",") if args.versions else
                        ["MNISTv1", "MNISTv2"] if args.model_version.startswith("MNIST")
                        else ["ECGv1", "ECGv2"])
            attacks = [a.strip() for a in args.attacks.split(",") if a.strip()]
            for a in attacks:
                if a not in ATTACK_KINDS or a == "none":
                    raise ValueError(f"unknown attack kind {a!r} in --attacks")
            grid = run_grid(config, _int_list(args.malicious_pcts, "--malicious-pcts"),
                            attacks, [v.strip() for v in versions])
            files = emit_grid_report(grid, args.out, formats)
            for cell in grid.cells:
                drop = cell.record.final_accuracy_drop
                print(f"{cell.version} pct={cell.malicious_pct} attack={cell.attack_kind} "
                      f"accuracy={cell.record.final_accuracy:.2f}"
                      + (f" accuracy_drop={drop:.2f}" if drop is not None else ""))
        for f in files:
            print(f"wrote {f}")
        return 0
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
