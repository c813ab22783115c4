"""Command-line surface for the full pipeline.

Subcommands: ``generate-data``, ``train``, ``eval``, ``export``,
``ablate``.  A single JSON config file drives everything; flags override
config fields.  Progress goes to stderr as plain lines, machine-readable
output only to files.

Exit codes: 0 success, 2 I/O error, 3 invalid config, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import secrets
import sys

import numpy as np
import jsonschema

from . import decoder as dec
from .data import (BranchingConfig, DataSpaceOracle, Dataset, JoinError, ParseError,
                   generate_branching_diffusion, load_dataset, save_matrix_csv,
                   save_sidecar, save_tree, split, standardize)
from .latents import save_latents
from .manifolds import Lorentz, lorentz_to_poincare
from .metrics import UndefinedCorrelation, distance_correlations, reconstruction_metrics
from .noise import NoiseConfig
from .training import (TrainConfig, TrainingDiverged, ablation_sweep, infer_latents,
                       load_run, save_run, spec_from_dict, train, write_metrics_csv)

EXIT_OK = 0
EXIT_IO = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4


class ConfigError(ValueError):
    pass


_MANIFOLD_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["euclidean", "sphere", "lorentz", "torus", "product"]},
        "dim": {"type": "integer", "minimum": 1},
        "curvature": {"type": "number", "exclusiveMinimum": 0},
        "factors": {"type": "array", "items": {"$ref": "#/$defs/manifold"}},
    },
    "required": ["kind"],
}

_BRANCHING_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "dim": {"type": "integer", "minimum": 1},
        "depth": {"type": "integer", "minimum": 1},
        "children": {"type": "integer", "minimum": 1},
        "sigma": {"type": "number", "minimum": 0},
        "decay": {"type": "number", "minimum": 1},
        "siblings": {"type": "integer", "minimum": 1},
        "obs_noise_factor": {"type": "number", "exclusiveMinimum": 1},
        "seed": {"type": "integer"},
    },
}

CONFIG_SCHEMA = {
    "$defs": {"manifold": _MANIFOLD_SCHEMA},
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer"},
        "output_dir": {"type": "string"},
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["branching", "csv", "binary"]},
                "path": {"type": "string"},
                "sidecar": {"type": "string"},
                "tree": {"type": "string"},
                "strict_binary": {"type": "boolean"},
                "standardize": {"type": "boolean"},
                "split_ratios": {"type": "array", "items": {"type": "number"},
                                 "minItems": 3, "maxItems": 3},
                "branching": _BRANCHING_SCHEMA,
            },
            "required": ["kind"],
        },
        "manifold": {"$ref": "#/$defs/manifold"},
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "loss": {"enum": ["mse", "bce"]},
                "sigma": {"type": "number", "minimum": 0},
                "hidden_sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "decoder_lr": {"type": "number", "exclusiveMinimum": 0},
                "decoder_betas": {"type": "array", "items": {"type": "number"},
                                  "minItems": 2, "maxItems": 2},
                "weight_decay": {"type": "number", "minimum": 0},
                "latent_lr": {"type": "number", "exclusiveMinimum": 0},
                "latent_betas": {"type": "array", "items": {"type": "number"},
                                 "minItems": 2, "maxItems": 2},
                "stabilize_period": {"type": "integer", "minimum": 1},
                "t0": {"type": "integer", "minimum": 1},
                "patience": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
                "max_epochs": {"type": "integer", "minimum": 1},
                "grad_accumulation": {"enum": ["sum", "mean"]},
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "oracle": {"enum": ["hops", "phase", "dataspace"]},
                "n_points": {"type": "integer", "minimum": 2},
            },
        },
    },
    "required": ["dataset", "manifold"],
}


def validate_config(config: dict) -> dict:
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "(root)"
        raise ConfigError(f"config field {path}: {exc.message}") from None
    return config


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return validate_config(raw)


def resolve_seed(config: dict, flag_seed) -> int:
    """Flag beats config; absent both, draw one so the run stays replayable."""
    if flag_seed is not None:
        config["seed"] = int(flag_seed)
    elif "seed" not in config:
        config["seed"] = secrets.randbelow(2**31)
    return config["seed"]


def build_dataset(config: dict):
    """Materialize the configured dataset (already standardized if asked)."""
    ds_cfg = config["dataset"]
    kind = ds_cfg["kind"]
    if kind == "branching":
        bc = BranchingConfig(**ds_cfg.get("branching", {}))
        _, dataset = generate_branching_diffusion(bc)
    else:
        if "path" not in ds_cfg:
            raise ConfigError("dataset path required for csv/binary datasets")
        dataset = load_dataset(ds_cfg["path"], fmt=kind,
                               sidecar=ds_cfg.get("sidecar"),
                               tree=ds_cfg.get("tree"),
                               strict_binary=ds_cfg.get("strict_binary", False))
    if ds_cfg.get("standardize", True) and config.get("train", {}).get("loss", "mse") == "mse":
        X, _ = standardize(dataset.X)
        dataset = Dataset(X=X, ids=dataset.ids, labels=dataset.labels,
                          phases=dataset.phases, oracle=dataset.oracle)
    oracle_kind = config.get("eval", {}).get("oracle")
    if oracle_kind == "dataspace":
        dataset.oracle = DataSpaceOracle(dataset.X)
    elif oracle_kind == "phase":
        if dataset.phases is None:
            raise ConfigError("eval.oracle=phase needs a sidecar with a phase column")
    elif oracle_kind == "hops" and dataset.oracle is None:
        raise ConfigError("eval.oracle=hops needs a branching dataset or a tree file")
    return dataset


def build_train_config(config: dict) -> TrainConfig:
    spec = spec_from_dict(config["manifold"])
    t = dict(config.get("train", {}))
    sigma = t.pop("sigma", 0.0)
    overrides = {k: v for k, v in t.items()}
    for key in ("decoder_betas", "latent_betas"):
        if key in overrides:
            overrides[key] = tuple(overrides[key])
    if "hidden_sizes" in overrides:
        overrides["hidden_sizes"] = tuple(overrides["hidden_sizes"])
    overrides["noise"] = NoiseConfig(sigma=sigma)
    overrides["seed"] = config["seed"]
    return TrainConfig.for_manifold(spec, **overrides)


def split_dataset(dataset, config: dict):
    ratios = tuple(config["dataset"].get("split_ratios", (0.82, 0.09, 0.09)))
    return split(dataset, ratios=ratios, seed=config["seed"])


def echo_config(config: dict, cfg: TrainConfig) -> dict:
    """Write back every resolved hyperparameter so a run replays from its
    own config.json."""
    out = json.loads(json.dumps(config))  # deep copy
    out["train"] = {
        "loss": cfg.loss,
        "sigma": cfg.noise.sigma,
        "hidden_sizes": list(cfg.hidden_sizes),
        "decoder_lr": cfg.decoder_lr,
        "decoder_betas": list(cfg.decoder_betas),
        "weight_decay": cfg.weight_decay,
        "latent_lr": cfg.latent_lr,
        "latent_betas": list(cfg.latent_betas),
        "stabilize_period": cfg.stabilize_period,
        "t0": cfg.t0,
        "patience": cfg.patience,
        "batch_size": cfg.batch_size,
        "max_epochs": cfg.max_epochs,
        "grad_accumulation": cfg.grad_accumulation,
    }
    return out


def _progress(row: dict) -> None:
    print(
        f"epoch={row['epoch']} train_loss={row['train_loss']:.6f} "
        f"val_loss={row['val_loss']:.6f} lr={row['lr']:.6g}",
        file=sys.stderr,
    )


# ---------------------------------------------------------------------------
# commands

def cmd_generate_data(args) -> int:
    config = load_config(args.config) if args.config else {"dataset": {"kind": "branching"}, "manifold": {"kind": "euclidean", "dim": 2}}
    branching = dict(config["dataset"].get("branching", {}))
    for name in ("dim", "depth", "children", "siblings"):
        value = getattr(args, name)
        if value is not None:
            branching[name] = value
    for name in ("sigma", "decay", "obs_noise_factor"):
        value = getattr(args, name)
        if value is not None:
            branching[name] = value
    if args.seed is not None:
        branching["seed"] = args.seed
    try:
        bc = BranchingConfig(**branching)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None

    tree, dataset = generate_branching_diffusion(bc)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    save_matrix_csv(os.path.join(out, "data.csv"), dataset.X, dataset.ids)
    save_sidecar(os.path.join(out, "sidecar.csv"), dataset.ids, dataset.labels)
    save_tree(os.path.join(out, "tree.csv"), tree)
    with open(os.path.join(out, "generate_config.json"), "w", encoding="utf-8") as fh:
        json.dump({"branching": branching, "seed": bc.seed}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"nodes={tree.n_nodes} observations={len(dataset)}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = load_config(args.config)
    resolve_seed(config, args.seed)
    if args.out:
        config["output_dir"] = args.out
    if "output_dir" not in config:
        raise ConfigError("output_dir required (config field or --out)")
    dataset = build_dataset(config)
    train_set, val_set, _ = split_dataset(dataset, config)
    cfg = build_train_config(config)
    artifacts = train(cfg, train_set, val_set, config_echo=echo_config(config, cfg),
                      progress=_progress)
    save_run(config["output_dir"], artifacts)
    print(f"run saved to {config['output_dir']} "
          f"(best epoch {artifacts.best_epoch}, {artifacts.epochs_run} epochs)",
          file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    run_dir = args.run
    ckpt = os.path.join(run_dir, "decoder.ckpt")
    if not os.path.exists(ckpt):
        raise FileNotFoundError(f"missing checkpoint {ckpt}")
    config, params, tables = load_run(run_dir)
    validate_config(config)
    dataset = build_dataset(config)
    parts = dict(zip(("train", "val", "test"), split_dataset(dataset, config)))
    split_name = args.split
    data = parts[split_name]
    cfg = build_train_config(config)

    if split_name in tables:
        table = tables[split_name]
    else:
        print(f"inferring latents for split {split_name} "
              f"({len(data)} samples)", file=sys.stderr)
        table = infer_latents(params, data, cfg, seed=args.seed)
        save_latents(os.path.join(run_dir, f"latents_{split_name}.csv"), table)

    out = dec.forward(params, table.points)
    metrics = dict(reconstruction_metrics(out, data.X, cfg.loss))
    metrics["loss"] = dec.loss(out, data.X, cfg.loss)
    if data.oracle is not None:
        n_points = config.get("eval", {}).get("n_points", 5000)
        try:
            corr = distance_correlations(table, data.oracle, n_points=n_points, seed=config["seed"])
            metrics.update(pearson=corr.pearson, spearman=corr.spearman,
                           pairs_used=corr.n_pairs, pairs_capped=int(corr.capped))
        except UndefinedCorrelation as exc:
            print(f"correlations undefined: {exc}", file=sys.stderr)

    all_metrics = _read_metrics(os.path.join(run_dir, "metrics.csv"))
    all_metrics[split_name] = metrics
    write_metrics_csv(os.path.join(run_dir, "metrics.csv"), all_metrics)
    for name in sorted(metrics):
        print(f"{split_name},{name},{metrics[name]}")
    return EXIT_OK


def _read_metrics(path) -> dict:
    out = {}
    if not os.path.exists(path):
        return out
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for rec in reader:
            split_name, name, value = rec
            try:
                parsed = int(value) if value.isdigit() else float(value)
            except ValueError:
                parsed = value
            out.setdefault(split_name, {})[name] = parsed
    return out


def cmd_export(args) -> int:
    run_dir = args.run
    config, params, tables = load_run(run_dir)
    if not tables:
        raise FileNotFoundError(f"{run_dir}: no latent tables found")
    spec = spec_from_dict(config["manifold"])
    first = next(iter(tables.values()))
    manifold = first.manifold
    is_lorentz = isinstance(manifold, Lorentz)
    disk_cols = []
    if is_lorentz:
        if manifold.intrinsic_dim == 2:
            disk_cols = ["disk_x", "disk_y"]
        else:
            disk_cols = [f"disk_{k}" for k in range(manifold.intrinsic_dim)]

    out_path = args.out or os.path.join(run_dir, "latents_export.csv")
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "split"] + [f"c{k}" for k in range(spec.ambient_dim)] + disk_cols)
        for split_name in sorted(tables):
            table = tables[split_name]
            disk = lorentz_to_poincare(table.points, manifold.c) if is_lorentz else None
            for row_idx, (rid, coords) in enumerate(zip(table.ids, table.points)):
                row = [rid, split_name] + [repr(float(v)) for v in coords]
                if disk is not None:
                    row += [repr(float(v)) for v in disk[row_idx]]
                writer.writerow(row)
    print(f"exported to {out_path}", file=sys.stderr)
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = load_config(args.config)
    resolve_seed(config, args.seed)
    if args.out:
        config["output_dir"] = args.out
    if "output_dir" not in config:
        raise ConfigError("output_dir required (config field or --out)")
    sigmas = _parse_float_list(args.sigmas, "sigmas")
    if not sigmas:
        raise ConfigError("--sigmas must list at least one value")
    curvatures = _parse_float_list(args.curvatures, "curvatures") if args.curvatures else None
    try:
        n_or_list = [int(s) for s in args.seeds.split(",") if s != ""]
    except ValueError:
        raise ConfigError(f"invalid --seeds {args.seeds!r}") from None
    seeds = list(range(n_or_list[0])) if len(n_or_list) == 1 else n_or_list

    dataset = build_dataset(config)
    train_set, val_set, _ = split_dataset(dataset, config)
    base_cfg = build_train_config(config)

    def progress(row):
        print(f"cell sigma={row['sigma']} curvature={row['curvature']} "
              f"seed={row['seed']} status={row['status']}", file=sys.stderr)

    rows = ablation_sweep(base_cfg, train_set, val_set, sigmas, curvatures,
                          seeds=seeds, jobs=args.jobs, progress=progress)
    os.makedirs(config["output_dir"], exist_ok=True)
    out_path = os.path.join(config["output_dir"], "ablation.csv")
    fields = []
    for row in rows:
        for key in row:
            if key not in fields:
                fields.append(key)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})
    print(f"ablation grid saved to {out_path}", file=sys.stderr)
    return EXIT_OK


def _parse_float_list(text, name):
    try:
        return [float(s) for s in text.split(",") if s != ""]
    except ValueError:
        raise ConfigError(f"invalid --{name} {text!r}") from None


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geodecoder")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="write a branching-diffusion dataset")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--dim", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--children", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--decay", type=float)
    p.add_argument("--siblings", type=int)
    p.add_argument("--obs-noise-factor", dest="obs_noise_factor", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", help="train a run from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a stored run on a split")
    p.add_argument("--run", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="export latent coordinates (+ Poincare disk)")
    p.add_argument("--run", required=True)
    p.add_argument("--format", choices=("csv",), default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("ablate", help="noise/curvature ablation grid")
    p.add_argument("--config", required=True)
    p.add_argument("--sigmas", required=True)
    p.add_argument("--curvatures")
    p.add_argument("--seeds", default="1")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"numerical abort: {exc} (last epoch {exc.epoch})", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParseError, JoinError, FileNotFoundError, PermissionError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
