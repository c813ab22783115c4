"""Per-sample latent table and its Riemannian Adam optimizer.

Latents are free manifold-valued parameters, one row per training sample.
The optimizer converts Euclidean gradients to Riemannian ones, keeps Adam
moments in the tangent space, steps by exact retraction, and transports
the first moment to the new iterate.  Points drift off-manifold only by
floating-point rounding; ``stabilize`` restores the constraints exactly
and is called on a fixed period during training.

The second moment is kept per-row-scalar (the squared Riemannian gradient
norm, chart-invariant) on curved manifolds, and per-component on Euclidean
space, where the component form reproduces standard Adam exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .decoder import adam_direction
from .manifolds import Euclidean, Lorentz, Manifold, ManifoldSpec, Product, build_manifold

INIT_STD = 0.1  # Gaussian scale for non-compact initialization


@dataclass
class LatentTable:
    """N manifold points treated as trainable parameters."""

    spec: ManifoldSpec
    points: np.ndarray  # (N, ambient_dim)
    ids: list = None
    manifold: Manifold = field(init=False, repr=False)

    def __post_init__(self):
        self.manifold = build_manifold(self.spec)
        self.points = np.ascontiguousarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != self.spec.ambient_dim:
            raise ValueError(f"points must be (N, {self.spec.ambient_dim})")
        if self.ids is None:
            self.ids = [str(i) for i in range(len(self.points))]

    def __len__(self) -> int:
        return len(self.points)

    def copy(self) -> "LatentTable":
        return LatentTable(self.spec, self.points.copy(), list(self.ids))

    def violation(self) -> float:
        return self.manifold.point_violation(self.points)


def _init_points(manifold: Manifold, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(manifold, Product):
        return np.concatenate([_init_points(f, n, rng) for f in manifold.parts], axis=-1)
    if manifold.is_compact:
        return manifold.sample_uniform(n, rng)
    if isinstance(manifold, Euclidean):
        return INIT_STD * rng.standard_normal((n, manifold.ambient_dim))
    if isinstance(manifold, Lorentz):
        v = np.zeros((n, manifold.ambient_dim))
        v[:, 1:] = INIT_STD * rng.standard_normal((n, manifold.intrinsic_dim))
        base = np.broadcast_to(manifold.base_point(), (n, manifold.ambient_dim))
        return manifold.exp_map(base, v)
    raise NotImplementedError(type(manifold).__name__)


def init_latents(spec: ManifoldSpec, n: int, rng: np.random.Generator, ids=None) -> LatentTable:
    """Fresh table: uniform rows on compact manifolds, small Gaussian spread
    around the base point otherwise."""
    manifold = build_manifold(spec)
    return LatentTable(spec, _init_points(manifold, n, rng), ids)


@dataclass
class RAdamState:
    """Riemannian Adam state over a LatentTable."""

    lr: float
    beta1: float
    beta2: float
    eps: float = 1e-8
    stabilize_period: int = 5
    step: int = 0
    m: np.ndarray = None   # (N, ambient) tangent first moment
    v: np.ndarray = None   # (N, ambient) on Euclidean else (N, 1) scalar
    component_mode: bool = False
    nonfinite_skips: int = 0  # cumulative rows skipped for non-finite grads

    @staticmethod
    def for_table(table: LatentTable, lr: float = 1e-1, betas=(0.5, 0.7),
                  stabilize_period: int = 5) -> "RAdamState":
        st = RAdamState(lr=lr, beta1=betas[0], beta2=betas[1], stabilize_period=stabilize_period)
        st.component_mode = isinstance(table.manifold, Euclidean)
        st.m = np.zeros_like(table.points)
        st.v = np.zeros_like(table.points) if st.component_mode else np.zeros((len(table), 1))
        return st


def radam_step(state: RAdamState, table: LatentTable, euclidean_grads: np.ndarray) -> None:
    """One Riemannian Adam update of the whole table, in place.

    Rows with non-finite gradients are skipped for this step and counted
    in ``state.nonfinite_skips`` so long ablation runs survive stray NaNs.
    """
    g = np.asarray(euclidean_grads, dtype=float)
    if g.shape != table.points.shape:
        raise ValueError(f"grads {g.shape} != points {table.points.shape}")
    state.step += 1
    bad = ~np.all(np.isfinite(g), axis=1)
    if bad.any():
        state.nonfinite_skips += int(bad.sum())
        good = ~bad
        sub = LatentTable(table.spec, table.points[good], None)
        m_sub = state.m[good]
        v_sub = state.v[good]
        _apply_rows(state, sub.manifold, sub.points, m_sub, v_sub, g[good])
        table.points[good] = sub.points
        state.m[good] = m_sub
        state.v[good] = v_sub
    else:
        _apply_rows(state, table.manifold, table.points, state.m, state.v, g)
    return None


def _apply_rows(state: RAdamState, manifold: Manifold, points, m, v, g) -> None:
    g_r = manifold.egrad2rgrad(points, g)
    if state.component_mode:
        sq = g_r * g_r
    else:
        sq = manifold.inner(points, g_r, g_r)[:, None]
    direction = adam_direction(m, v, g_r, sq, state.step, state.beta1, state.beta2, state.eps)
    u = -state.lr * direction
    new_points = manifold.retract(points, u)
    m[...] = manifold.transport(points, new_points, m)
    points[...] = new_points


def stabilize(table: LatentTable) -> LatentTable:
    """Re-project every row exactly onto the manifold; idempotent."""
    table.points[...] = table.manifold.project(table.points)
    return table


def save_latents(path, table: LatentTable) -> None:
    """CSV: row id followed by ambient coordinates, full float precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"c{i}" for i in range(table.spec.ambient_dim)])
        for rid, row in zip(table.ids, table.points):
            writer.writerow([rid] + [repr(float(val)) for val in row])


def load_latents(path, spec: ManifoldSpec) -> LatentTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)  # header
        ids, rows = [], []
        for rec in reader:
            ids.append(rec[0])
            rows.append([float(x) for x in rec[1:]])
    return LatentTable(spec, np.asarray(rows, dtype=float), ids)
