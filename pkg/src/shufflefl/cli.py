"""Config-driven command line: accountant sweeps and simulation runs.

Subcommands:
    amplify  -- write an amplification-curve CSV over a parameter grid
    train    -- run one protocol or baseline, write results JSON + CSV
    sweep    -- rerun train over a list of values for one config field

Configs are JSON documents; flags override config fields. Unknown config
keys are rejected. The dataset directory may also come from the
SHUFFLEFL_DATA_DIR environment variable. Exit codes: 0 success,
1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys

from .accountant import protocol_report, report_csv_row, sweep_reports, write_sweep_csv, CSV_COLUMNS
from .core import ConfigurationError, InvalidInputError, PrivacyParams, ProtocolConfig
from .datasets import load_mnist, synthetic_dataset
from .harness import (
    BASELINES,
    TrainSettings,
    run_baseline,
    run_protocol,
    write_result_csv,
    write_result_json,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

_DATA_DIR_ENV = "SHUFFLEFL_DATA_DIR"


class ConfigError(ValueError):
    """A run config failed schema validation."""


# (key, type, required, default) for the flat RunConfig document.
_RUN_SCHEMA: dict[str, tuple[type | tuple[type, ...], bool, object]] = {
    "protocol": (str, True, None),
    "d": (int, False, None),
    "n": (int, True, None),
    "k": (int, False, None),
    "eps_l": ((int, float), False, 1.0),
    "clip": ((int, float), False, 1.0),
    "b": (int, False, 2),
    "n_p": (int, False, 1),
    "l": (int, False, 1),
    "nu": ((int, float), False, 1.0),
    "randomizer": (str, False, "krr"),
    "seed": (int, False, 0),
    "lr": ((int, float), False, 1.0),
    "epochs": (int, False, 1),
    "shard_size": (int, False, 1),
    "rounds_per_epoch": (int, False, None),
    "delta_budget": ((int, float), False, 5e-6),
    "l2_clip": ((int, float), False, None),
    "label_skew": ((int, float), False, 0.0),
    "budget_epsilon": ((int, float), False, None),
    "budget_delta": ((int, float), False, 0.0),
    "dataset": (dict, False, None),
    "out_dir": (str, False, "."),
}

_DATASET_SCHEMA: dict[str, tuple[type | tuple[type, ...], bool, object]] = {
    "kind": (str, True, None),
    "dir": (str, False, None),
    "classes": (int, False, 10),
    "dims": (int, False, 784),
    "train_size": (int, False, 60000),
    "test_size": (int, False, 10000),
    "seed": (int, False, 7),
    "spread": ((int, float), False, 0.22),
}


def _validate(doc: dict, schema: dict, where: str) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(doc) - set(schema)
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {', '.join(sorted(unknown))}")
    resolved = {}
    for key, (types, required, default) in schema.items():
        if key in doc and doc[key] is not None:
            value = doc[key]
            if isinstance(value, bool) or not isinstance(value, types):
                raise ConfigError(f"{where} field {key!r} has the wrong type")
            resolved[key] = value
        elif required:
            raise ConfigError(f"{where} field {key!r} is required")
        else:
            resolved[key] = default
    return resolved


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc


def _resolve_dataset(spec: dict | None):
    env_dir = os.environ.get(_DATA_DIR_ENV)
    if spec is None:
        spec = {"kind": "mnist", "dir": env_dir} if env_dir else {"kind": "synthetic"}
    spec = _validate(spec, _DATASET_SCHEMA, "dataset")
    if spec["kind"] == "synthetic":
        return synthetic_dataset(
            classes=spec["classes"],
            dims=spec["dims"],
            train_size=spec["train_size"],
            test_size=spec["test_size"],
            seed=spec["seed"],
            spread=spec["spread"],
        ), spec["classes"]
    if spec["kind"] == "mnist":
        directory = spec["dir"] or env_dir
        if not directory:
            raise ConfigError(
                f"dataset kind 'mnist' needs 'dir' or ${_DATA_DIR_ENV}"
            )
        return load_mnist(directory), 10
    raise ConfigError(f"unknown dataset kind {spec['kind']!r}")


def _protocol_config(resolved: dict, classes: int, dims: int) -> ProtocolConfig:
    d = resolved["d"] if resolved["d"] is not None else classes * dims + classes
    kind = resolved["protocol"]
    shuffle_kind = kind if kind in ("simple", "double", "topk") else "simple"
    k = resolved["k"]
    if k is None:
        k = d if shuffle_kind == "simple" else max(1, d // 10)
    if shuffle_kind == "simple":
        k = d
    return ProtocolConfig(
        protocol=shuffle_kind,
        d=d,
        n=resolved["n"],
        k=k,
        eps_l=resolved["eps_l"],
        clip=resolved["clip"],
        b=resolved["b"],
        n_p=resolved["n_p"],
        l=resolved["l"],
        nu=resolved["nu"],
        randomizer=resolved["randomizer"] if kind not in BASELINES else "none",
        seed=resolved["seed"],
    )


def _train_from_config(resolved: dict) -> tuple[str, object]:
    kind = resolved["protocol"]
    if kind not in ("simple", "double", "topk") and kind not in BASELINES:
        raise ConfigError(
            f"protocol must be one of simple, double, topk, {', '.join(BASELINES)}"
        )
    (train, test), classes = _resolve_dataset(resolved["dataset"])
    cfg = _protocol_config(resolved, classes, train.n_features)
    settings = TrainSettings(
        lr=resolved["lr"],
        epochs=resolved["epochs"],
        shard_size=resolved["shard_size"],
        rounds_per_epoch=resolved["rounds_per_epoch"],
        delta_budget=resolved["delta_budget"],
        l2_clip=resolved["l2_clip"],
        label_skew=resolved["label_skew"],
    )
    if kind in BASELINES:
        budget = None
        if resolved["budget_epsilon"] is not None:
            budget = PrivacyParams(resolved["budget_epsilon"], resolved["budget_delta"])
        result = run_baseline(kind, cfg, settings, train, test, budget, classes)
    else:
        result = run_protocol(cfg, settings, train, test, classes)
    return kind, result


def _apply_overrides(doc: dict, overrides: list[str]) -> dict:
    doc = copy.deepcopy(doc)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        doc[key] = value
    return doc


def _cmd_train(args: argparse.Namespace) -> int:
    doc = _load_json(args.config) if args.config else {}
    doc = _apply_overrides(doc, args.set or [])
    resolved = _validate(doc, _RUN_SCHEMA, "config")
    kind, result = _train_from_config(resolved)

    out_dir = args.out_dir or resolved["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, f"{kind}_seed{result.seed}.json")
    csv_path = os.path.join(out_dir, f"{kind}_seed{result.seed}.csv")
    with open(json_path, "w", encoding="utf-8") as fh:
        write_result_json(result, fh)
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        write_result_csv(result, fh)

    privacy = result.privacy_per_epoch
    privacy_text = (
        f"({privacy.epsilon:.4g}, {privacy.delta:.3g})-DP per epoch"
        if privacy is not None
        else "no accountant guarantee recorded"
    )
    print(f"{kind}: final accuracy {result.final_accuracy:.4f}, {privacy_text}")
    print(f"wrote {json_path} and {csv_path}")
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    doc = _load_json(args.config) if args.config else {}
    doc = _apply_overrides(doc, args.set or [])
    values = [json.loads(v) for v in args.values.split(",") if v != ""]
    if not values:
        raise ConfigError("sweep needs at least one value")
    out_dir = args.out_dir or doc.get("out_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    summary_path = os.path.join(out_dir, f"sweep_{args.param}.csv")
    rows = []
    for value in values:
        variant = copy.deepcopy(doc)
        variant[args.param] = value
        resolved = _validate(variant, _RUN_SCHEMA, "config")
        kind, result = _train_from_config(resolved)
        privacy = result.privacy_per_epoch
        rows.append(
            [
                args.param,
                json.dumps(value),
                kind,
                repr(result.final_accuracy),
                repr(privacy.epsilon) if privacy else "",
                repr(privacy.delta) if privacy else "",
            ]
        )
        print(f"{args.param}={value}: final accuracy {result.final_accuracy:.4f}")
    import csv as _csv

    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["param", "value", "kind", "final_accuracy", "eps_c", "delta_c"])
        writer.writerows(rows)
    print(f"wrote {summary_path}")
    return EXIT_OK


def _parse_grid(text: str, cast) -> list:
    values = [cast(v) for v in text.split(",") if v != ""]
    if not values:
        raise ConfigError("empty parameter grid")
    return values


def _cmd_amplify(args: argparse.Namespace) -> int:
    protocols = _parse_grid(args.protocols, str)
    for p in protocols:
        if p not in ("simple", "double", "topk"):
            raise ConfigError(f"unknown protocol {p!r} in grid")
    reports = sweep_reports(
        protocols=protocols,
        d=args.d,
        grid_n=_parse_grid(args.n, int),
        grid_eps_per_dim=_parse_grid(args.eps_per_dim, float),
        grid_beta=_parse_grid(args.beta, float),
        b=args.b,
        delta_budget=args.delta,
        n_p_rule=args.n_p_rule,
    )
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        count = write_sweep_csv(reports, fh)
    print(f"wrote {count} rows to {args.out} (columns: {', '.join(CSV_COLUMNS)})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shufflefl",
        description="Shuffle-model private federated learning: sweeps and runs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    amplify = sub.add_parser("amplify", help="write an amplification-curve CSV")
    amplify.add_argument("--protocols", default="simple,double", help="comma list")
    amplify.add_argument("--d", type=int, default=75755)
    amplify.add_argument("--n", default="1000,10000,100000", help="comma list")
    amplify.add_argument("--eps-per-dim", dest="eps_per_dim", default="0.5")
    amplify.add_argument("--beta", default="0.02")
    amplify.add_argument("--b", type=int, default=2)
    amplify.add_argument("--delta", type=float, default=5e-6)
    amplify.add_argument("--n-p-rule", dest="n_p_rule", default="n", choices=("n", "n_beta"))
    amplify.add_argument("--out", default="amplification.csv")
    amplify.set_defaults(func=_cmd_amplify)

    train = sub.add_parser("train", help="run one protocol or baseline")
    train.add_argument("--config", help="JSON run config")
    train.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field (repeatable)")
    train.add_argument("--out-dir", dest="out_dir", default=None)
    train.set_defaults(func=_cmd_train)

    sweep = sub.add_parser("sweep", help="rerun train over values of one field")
    sweep.add_argument("--config", help="JSON run config")
    sweep.add_argument("--set", action="append", metavar="KEY=VALUE")
    sweep.add_argument("--param", required=True, help="config field to sweep")
    sweep.add_argument("--values", required=True, help="comma list of JSON values")
    sweep.add_argument("--out-dir", dest="out_dir", default=None)
    sweep.set_defaults(func=_cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # surface anything else as a runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
