"""Joint training of decoder weights and manifold latents, plus evaluation.

The loop follows the decoder-only recipe: latent gradients are zeroed once
per epoch and accumulated across batches while the decoder takes one Adam
step per batch; the latent table then takes a single Riemannian Adam step
per epoch.  Early stopping monitors a held-out split whose latents are
optimized the same way but never contribute decoder gradients.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import decoder as dec
from .data import Dataset
from .latents import LatentTable, RAdamState, init_latents, load_latents, radam_step, save_latents, stabilize
from .manifolds import ManifoldSpec, UnsupportedSampling, build_manifold
from .metrics import distance_correlations, reconstruction_metrics
from .noise import NoiseConfig, add_geometric_noise_with_pullback


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries a snapshot of the last finite state."""

    def __init__(self, message, epoch=None, history=None):
        super().__init__(message)
        self.epoch = epoch
        self.history = history or []


def _is_spherelike(spec: ManifoldSpec) -> bool:
    if spec.kind == "sphere":
        return True
    return spec.kind == "product" and all(_is_spherelike(f) for f in spec.factors)


@dataclass
class TrainConfig:
    """All training hyperparameters; defaults follow the experiment
    protocol (spherical/toroidal latents switch lr/betas, see
    :meth:`for_manifold`)."""

    manifold: ManifoldSpec
    loss: str = dec.MSE
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    hidden_sizes: tuple = dec.DEFAULT_HIDDEN
    decoder_lr: float = 2e-3
    decoder_betas: tuple = (0.9, 0.995)
    weight_decay: float = 1e-3
    latent_lr: float = 1e-1
    latent_betas: tuple = (0.5, 0.7)
    stabilize_period: int = 5
    t0: int = 40
    patience: int = 85
    batch_size: int = 256
    max_epochs: int = 500
    seed: int = 0
    grad_accumulation: str = "sum"

    def __post_init__(self):
        if min(self.decoder_lr, self.latent_lr) <= 0:
            raise ValueError("learning rates must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.grad_accumulation not in ("sum", "mean"):
            raise ValueError("grad_accumulation must be 'sum' or 'mean'")

    @staticmethod
    def for_manifold(spec: ManifoldSpec, **overrides) -> "TrainConfig":
        base = dict(manifold=spec)
        if _is_spherelike(spec):
            base.update(latent_lr=4e-1, decoder_betas=(0.7, 0.9))
        base.update(overrides)
        return TrainConfig(**base)


@dataclass
class RunArtifacts:
    """Everything a finished run leaves behind."""

    decoder: dec.DecoderParams
    latents: dict            # split name -> LatentTable
    history: list            # per-epoch dicts: epoch, train_loss, val_loss, lr
    metrics: dict            # split name -> {metric: value}
    config: dict             # config echo, JSON-serializable
    seed: int
    best_epoch: int
    epochs_run: int
    diagnostics: dict


def _batches(order: np.ndarray, size: int):
    for start in range(0, len(order), size):
        yield order[start : start + size]


def _epoch_latent_pass(params, table, X, kind, grads_out):
    """Accumulate latent gradients over fixed-order batches; returns the
    sample-weighted mean loss.  Decoder weights are left untouched."""
    total = 0.0
    for batch in _batches(np.arange(len(X)), 4096):
        out, cache = dec.forward_with_cache(params, table.points[batch])
        value = dec.loss(out, X[batch], kind)
        d_out = dec.loss_output_grad(out, X[batch], kind)
        grads_out[batch] += dec.latent_grads_from_output_grad(params, cache, d_out)
        total += value * len(batch)
    return total / len(X)


def train(cfg: TrainConfig, train_set: Dataset, val_set: Dataset,
          config_echo: dict = None, progress=None) -> RunArtifacts:
    """Run the full loop and return artifacts for the best-validation epoch.

    `progress`, if given, is called once per epoch with the history row.
    Raises TrainingDiverged as soon as any loss turns non-finite.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("datasets must be non-empty")
    if train_set.dim != val_set.dim:
        raise ValueError("train/val dimensionality mismatch")

    spec = cfg.manifold
    manifold = build_manifold(spec)
    root = np.random.SeedSequence(cfg.seed)
    ss = root.spawn(5)
    rng_init = np.random.default_rng(ss[0])
    rng_lat_train = np.random.default_rng(ss[1])
    rng_lat_val = np.random.default_rng(ss[2])
    rng_shuffle = np.random.default_rng(ss[3])
    rng_noise = np.random.default_rng(ss[4].spawn(cfg.noise.stream + 1)[cfg.noise.stream])

    params = dec.init_decoder(spec.ambient_dim, train_set.dim, cfg.hidden_sizes, rng_init)
    latents = init_latents(spec, len(train_set), rng_lat_train, ids=list(train_set.ids))
    val_latents = init_latents(spec, len(val_set), rng_lat_val, ids=list(val_set.ids))
    adam = dec.AdamState.for_params(params, cfg.decoder_lr, cfg.decoder_betas, cfg.weight_decay)
    r_train = RAdamState.for_table(latents, cfg.latent_lr, cfg.latent_betas, cfg.stabilize_period)
    r_val = RAdamState.for_table(val_latents, cfg.latent_lr, cfg.latent_betas, cfg.stabilize_period)

    Xtr, Xva = train_set.X, val_set.X
    sigma = cfg.noise.sigma if cfg.noise.active else 0.0
    history = []
    best_val = np.inf
    best_epoch = -1
    best_state = None
    since_improve = 0

    for epoch in range(cfg.max_epochs):
        adam.lr = dec.lr_schedule(epoch, cfg.decoder_lr, cfg.t0)
        z_grads = np.zeros_like(latents.points)
        order = rng_shuffle.permutation(len(train_set))
        train_loss = 0.0
        n_batches = 0
        for batch in _batches(order, cfg.batch_size):
            z = latents.points[batch]
            pullback = None
            if sigma > 0.0:
                z, pullback = add_geometric_noise_with_pullback(z, sigma, manifold, rng_noise)
            out, cache = dec.forward_with_cache(params, z)
            value = dec.loss(out, Xtr[batch], cfg.loss)
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite training loss at epoch {epoch}",
                                       epoch=epoch, history=history)
            d_out = dec.loss_output_grad(out, Xtr[batch], cfg.loss)
            gw, gb, gz = dec.backward_from_output_grad(params, cache, d_out)
            dec.adam_step(adam, params, list(zip(gw, gb)))
            if pullback is not None:
                gz = pullback(gz)  # chain through the noise map to the stored rows
            z_grads[batch] += gz
            train_loss += value * len(batch)
            n_batches += 1
        train_loss /= len(train_set)
        if cfg.grad_accumulation == "mean":
            z_grads /= n_batches
        radam_step(r_train, latents, z_grads)

        # held-out latents: same per-epoch step, clean forward, no decoder grads
        v_grads = np.zeros_like(val_latents.points)
        val_loss = _epoch_latent_pass(params, val_latents, Xva, cfg.loss, v_grads)
        if not np.isfinite(val_loss):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}",
                                   epoch=epoch, history=history)
        radam_step(r_val, val_latents, v_grads)

        if (epoch + 1) % cfg.stabilize_period == 0:
            stabilize(latents)
            stabilize(val_latents)

        row = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "lr": adam.lr}
        history.append(row)
        if progress is not None:
            progress(row)

        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_state = (params.copy(),
                          stabilize(latents.copy()),
                          stabilize(val_latents.copy()))
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= cfg.patience:
                break

    params, latents, val_latents = best_state
    metrics = {
        "train": _split_metrics(params, latents, train_set, cfg),
        "val": _split_metrics(params, val_latents, val_set, cfg),
    }
    echo = config_echo if config_echo is not None else default_config_echo(cfg)
    return RunArtifacts(
        decoder=params,
        latents={"train": latents, "val": val_latents},
        history=history,
        metrics=metrics,
        config=echo,
        seed=cfg.seed,
        best_epoch=best_epoch,
        epochs_run=len(history),
        diagnostics={
            "decoder_steps": adam.step,
            "latent_steps": r_train.step,
            "nonfinite_skips": r_train.nonfinite_skips + r_val.nonfinite_skips,
        },
    )


def _split_metrics(params, table, dataset, cfg, n_points: int = 5000) -> dict:
    out = dec.forward(params, table.points)
    metrics = dict(reconstruction_metrics(out, dataset.X, cfg.loss))
    metrics["loss"] = dec.loss(out, dataset.X, cfg.loss)
    if dataset.oracle is not None:
        corr = distance_correlations(table, dataset.oracle, n_points=n_points, seed=cfg.seed)
        metrics.update(pearson=corr.pearson, spearman=corr.spearman,
                       pairs_used=corr.n_pairs, pairs_capped=int(corr.capped))
    return metrics


def infer_latents(params: dec.DecoderParams, data: Dataset, cfg: TrainConfig,
                  k_candidates: int = 16, steps: int = 300, seed: int = None) -> LatentTable:
    """Test-time latents: decoder frozen, per-sample reconstruction descent.

    Each sample starts from the best of ``k_candidates`` fresh draws
    (lowest reconstruction loss) and then takes ``steps`` Riemannian Adam
    steps; rows are independent throughout.
    """
    spec = cfg.manifold
    n = len(data)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed if seed is None else seed).spawn(1)[0])

    best_points = init_latents(spec, n, rng).points
    if k_candidates > 1 and n > 0:
        best_err = _per_sample_loss(params, best_points, data.X, cfg.loss)
        for _ in range(k_candidates - 1):
            cand = init_latents(spec, n, rng).points
            err = _per_sample_loss(params, cand, data.X, cfg.loss)
            better = err < best_err
            best_points[better] = cand[better]
            best_err = np.minimum(best_err, err)

    table = LatentTable(spec, best_points, list(data.ids))
    state = RAdamState.for_table(table, cfg.latent_lr, cfg.latent_betas, cfg.stabilize_period)
    grads = np.empty_like(table.points)
    for t in range(steps):
        grads[...] = 0.0
        if not np.isfinite(_epoch_latent_pass(params, table, data.X, cfg.loss, grads)):
            raise TrainingDiverged(f"non-finite inference loss at step {t}")
        radam_step(state, table, grads)
        if (t + 1) % cfg.stabilize_period == 0:
            stabilize(table)
    return stabilize(table)


def _per_sample_loss(params, points, X, kind) -> np.ndarray:
    out = dec.forward(params, points)
    if kind == dec.MSE:
        return np.mean((out - X) ** 2, axis=1)
    val = np.maximum(out, 0.0) - out * X + np.log1p(np.exp(-np.abs(out)))
    return np.mean(val, axis=1)


def generate(params: dec.DecoderParams, spec: ManifoldSpec, n: int,
             rng: np.random.Generator):
    """Decode n uniform draws from a compact manifold."""
    manifold = build_manifold(spec)
    if not manifold.is_compact:
        raise UnsupportedSampling(f"cannot sample uniformly on {spec.kind}")
    if n == 0:
        return np.empty((0, params.output_dim))
    return dec.forward(params, manifold.sample_uniform(n, rng))


# ---------------------------------------------------------------------------
# ablation grids

def _sweep_cell(args):
    cfg, train_set, val_set, key = args
    sigma, curv, seed = key
    row = {"sigma": sigma, "curvature": "" if curv is None else curv, "seed": seed}
    try:
        art = train(cfg, train_set, val_set)
        row["status"] = "ok"
        for split in ("train", "val"):
            for name, value in sorted(art.metrics[split].items()):
                row[f"{split}_{name}"] = value
        row["epochs"] = art.epochs_run
    except Exception as exc:  # cell failures stay in the table
        row["status"] = f"failed: {exc}"
    return key, row


def ablation_sweep(base_cfg: TrainConfig, train_set: Dataset, val_set: Dataset,
                   sigma_list, curvature_list=None, seeds=(0,), jobs: int = 1,
                   progress=None) -> list:
    """Full (sigma, curvature, seed) grid of training runs.

    Returns one row dict per cell plus mean/std aggregate rows per
    (sigma, curvature) group; failures are recorded in ``status`` and do
    not abort the grid.  With jobs > 1 cells run in separate processes;
    assembly is keyed by cell, so results do not depend on worker order."""
    if not sigma_list:
        raise ValueError("sigma_list must be non-empty")
    curvatures = list(curvature_list) if curvature_list else [None]
    if any(c is not None for c in curvatures) and base_cfg.manifold.kind != "lorentz":
        raise ValueError("curvature grid requires a lorentz manifold")

    tasks = []
    for sigma in sigma_list:
        for curv in curvatures:
            for seed in seeds:
                spec = base_cfg.manifold
                if curv is not None:
                    spec = ManifoldSpec.lorentz(spec.intrinsic_dim, float(curv))
                cfg = replace(base_cfg, manifold=spec, seed=int(seed),
                              noise=replace(base_cfg.noise, sigma=float(sigma)))
                key = (float(sigma), None if curv is None else float(curv), int(seed))
                tasks.append((cfg, train_set, val_set, key))

    results = {}
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for key, row in pool.map(_sweep_cell, tasks):
                results[key] = row
                if progress is not None:
                    progress(row)
    else:
        for task in tasks:
            key, row = _sweep_cell(task)
            results[key] = row
            if progress is not None:
                progress(row)

    rows = []
    for sigma in sigma_list:
        for curv in curvatures:
            group = []
            for seed in seeds:
                key = (float(sigma), None if curv is None else float(curv), int(seed))
                row = results[key]
                rows.append(row)
                if row["status"] == "ok":
                    group.append(row)
            rows.extend(_aggregate_rows(group))
    return rows


def _aggregate_rows(group: list) -> list:
    if not group:
        return []
    keys = [k for k in group[0] if isinstance(group[0][k], (int, float)) and k not in ("seed",)]
    out = []
    for stat, fn in (("mean", np.mean), ("std", np.std)):
        row = {"sigma": group[0]["sigma"], "curvature": group[0]["curvature"],
               "seed": stat, "status": f"aggregate({len(group)})"}
        for k in keys:
            row[k] = float(fn([g[k] for g in group]))
        out.append(row)
    return out


# ---------------------------------------------------------------------------
# artifact directory I/O

def default_config_echo(cfg: TrainConfig) -> dict:
    return {
        "seed": cfg.seed,
        "manifold": spec_to_dict(cfg.manifold),
        "train": {
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
        },
    }


def spec_to_dict(spec: ManifoldSpec) -> dict:
    if spec.kind == "product":
        return {"kind": "product", "factors": [spec_to_dict(f) for f in spec.factors]}
    out = {"kind": spec.kind, "dim": spec.intrinsic_dim}
    if spec.kind == "lorentz":
        out["curvature"] = spec.curvature
    return out


def spec_from_dict(d: dict) -> ManifoldSpec:
    kind = d["kind"]
    if kind == "euclidean":
        return ManifoldSpec.euclidean(d["dim"])
    if kind == "sphere":
        return ManifoldSpec.sphere(d["dim"])
    if kind == "lorentz":
        return ManifoldSpec.lorentz(d["dim"], d.get("curvature", 1.0))
    if kind == "torus":
        return ManifoldSpec.torus()
    if kind == "product":
        return ManifoldSpec.product(*(spec_from_dict(f) for f in d["factors"]))
    raise ValueError(f"unknown manifold kind {kind!r}")


def save_run(out_dir, artifacts: RunArtifacts) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(artifacts.config, fh, indent=2, sort_keys=True)
        fh.write("\n")
    loss_kind = artifacts.config.get("train", {}).get("loss", dec.MSE)
    dec.save_decoder(os.path.join(out_dir, "decoder.ckpt"), artifacts.decoder, loss_kind=loss_kind)
    for split, table in artifacts.latents.items():
        save_latents(os.path.join(out_dir, f"latents_{split}.csv"), table)
    with open(os.path.join(out_dir, "history.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "lr"])
        for row in artifacts.history:
            writer.writerow([row["epoch"], repr(float(row["train_loss"])), repr(float(row["val_loss"])), repr(float(row["lr"]))])
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), artifacts.metrics)


def write_metrics_csv(path, metrics: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["split", "metric", "value"])
        for split in sorted(metrics):
            for name in sorted(metrics[split]):
                value = metrics[split][name]
                writer.writerow([split, name, repr(float(value)) if isinstance(value, float) else value])


def load_run(run_dir):
    """Load (config, decoder params, {split: LatentTable}) from a run dir."""
    with open(os.path.join(run_dir, "config.json"), encoding="utf-8") as fh:
        config = json.load(fh)
    params, _ = dec.load_decoder(os.path.join(run_dir, "decoder.ckpt"))
    spec = spec_from_dict(config["manifold"])
    tables = {}
    for split in ("train", "val", "test"):
        path = os.path.join(run_dir, f"latents_{split}.csv")
        if os.path.exists(path):
            tables[split] = load_latents(path, spec)
    return config, params, tables
