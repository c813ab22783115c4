"""Synthetic branching-diffusion generator, dataset containers, file I/O.

File formats
------------
Matrix CSV: UTF-8, header row, row id in the first column, one feature per
remaining column.  Floats are written with ``repr`` so a save/load round
trip is bit-exact.

Binary matrix ("GDMX"): magic bytes ``GDMX``, one version byte, two 64-bit
little-endian unsigned dims (rows, cols), then row-major 32-bit
little-endian floats.  Meant for large one-hot tables.

Sidecar CSV: columns ``id,label[,phase]``, joined to the matrix by row id.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

GDMX_MAGIC = b"GDMX"
GDMX_VERSION = 1


class ParseError(ValueError):
    """Malformed input file; message carries the offending line or value."""


class JoinError(ValueError):
    """Sidecar rows do not match the matrix rows."""


@dataclass(frozen=True)
class BranchingConfig:
    """Hierarchical branching diffusion parameters.

    A root at the origin of R^dim spawns ``children`` nodes per node down
    to ``depth`` levels; a child is its parent plus N(0, sigma^2/decay^l I)
    noise, and every node emits ``siblings`` observations with noise
    N(0, sigma^2/(obs_noise_factor * decay^l) I).
    """

    dim: int = 50
    depth: int = 7
    children: int = 2
    sigma: float = 1.0
    decay: float = 1.0
    siblings: int = 50
    obs_noise_factor: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1 or self.children < 1 or self.siblings < 1:
            raise ValueError("depth, children, siblings must be >= 1")
        if self.decay < 1.0:
            raise ValueError("decay must be >= 1")
        if not self.obs_noise_factor > 1.0:
            raise ValueError("obs_noise_factor must be > 1")

    @property
    def n_nodes(self) -> int:
        return sum(self.children ** level for level in range(self.depth))

    @property
    def n_observations(self) -> int:
        return self.siblings * self.n_nodes


@dataclass
class Tree:
    """Branching tree: parent index per node (-1 at the root), node depth,
    and the noiseless node latent vectors."""

    parents: np.ndarray
    depths: np.ndarray
    latents: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.parents)


def tree_distance(tree: Tree, i: int, j: int) -> int:
    """Hop count between two nodes (shortest path in the tree)."""
    di, dj = int(tree.depths[i]), int(tree.depths[j])
    hops = 0
    while di > dj:
        i = int(tree.parents[i])
        di -= 1
        hops += 1
    while dj > di:
        j = int(tree.parents[j])
        dj -= 1
        hops += 1
    while i != j:
        i = int(tree.parents[i])
        j = int(tree.parents[j])
        hops += 2
    return hops


def hop_matrix(tree: Tree) -> np.ndarray:
    """All-pairs hop distances: depth_i + depth_j - 2 * depth(lca).

    The lca depth is the length of the common prefix of ancestor chains;
    per-row sentinels keep padded slots from matching across rows."""
    n = tree.n_nodes
    max_depth = int(tree.depths.max()) + 1
    anc = np.full((n, max_depth), -1, dtype=np.int64)
    for i in np.argsort(tree.depths, kind="stable"):
        d = int(tree.depths[i])
        if tree.parents[i] >= 0:
            anc[i, :d] = anc[tree.parents[i], :d]
        anc[i, d] = i
    pad = anc == -1
    sentinel = np.broadcast_to((-1 - np.arange(n))[:, None], anc.shape)
    anc[pad] = sentinel[pad]
    agree = np.zeros((n, n), dtype=np.int64)
    for d in range(max_depth):
        agree += anc[:, d][:, None] == anc[:, d][None, :]
    hops = tree.depths[:, None] + tree.depths[None, :] - 2 * (agree - 1)
    np.fill_diagonal(hops, 0)
    return hops


def circular_phase_distance(a, b):
    """Wrap-around distance on [0,1): min(|a-b|, 1-|a-b|)."""
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    return np.minimum(d, 1.0 - d)


class TreeHopOracle:
    """Ground-truth distance between observations: hops between their
    generating nodes (0 for siblings)."""

    kind = "hops"

    def __init__(self, hops: np.ndarray, node_index: np.ndarray):
        self.hops = hops
        self.node_index = np.asarray(node_index, dtype=np.int64)

    def pairs(self, i, j):
        return self.hops[self.node_index[i], self.node_index[j]].astype(float)

    def subset(self, indices):
        return TreeHopOracle(self.hops, self.node_index[indices])


class CircularPhaseOracle:
    kind = "phase"

    def __init__(self, phases: np.ndarray):
        self.phases = np.asarray(phases, dtype=float)

    def pairs(self, i, j):
        return circular_phase_distance(self.phases[i], self.phases[j])

    def subset(self, indices):
        return CircularPhaseOracle(self.phases[indices])


class DataSpaceOracle:
    kind = "dataspace"

    def __init__(self, X: np.ndarray):
        self.X = np.asarray(X, dtype=float)

    def pairs(self, i, j):
        return np.sqrt(np.sum((self.X[i] - self.X[j]) ** 2, axis=-1))

    def subset(self, indices):
        return DataSpaceOracle(self.X[indices])


@dataclass
class Dataset:
    """Data matrix with optional labels, circular phases, and a
    ground-truth distance oracle over row positions."""

    X: np.ndarray
    ids: list
    labels: Optional[list] = None
    phases: Optional[np.ndarray] = None
    oracle: object = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if np.isnan(self.X).any():
            raise ValueError("dataset contains NaN entries")
        if self.phases is not None:
            self.phases = np.asarray(self.phases, dtype=float)
            if np.any((self.phases < 0.0) | (self.phases >= 1.0)):
                raise ValueError("phases must lie in [0, 1)")

    def __len__(self) -> int:
        return len(self.X)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            X=self.X[indices],
            ids=[self.ids[k] for k in indices],
            labels=None if self.labels is None else [self.labels[k] for k in indices],
            phases=None if self.phases is None else self.phases[indices],
            oracle=None if self.oracle is None else self.oracle.subset(indices),
        )


def generate_branching_diffusion(cfg: BranchingConfig):
    """Sample the tree and its noisy observations; returns (Tree, Dataset).

    The data matrix is left raw; standardization is a separate step.
    """
    rng = np.random.default_rng(cfg.seed)
    parents = [-1]
    depths = [0]
    latents = [np.zeros(cfg.dim)]
    frontier = [0]
    for level in range(cfg.depth - 1):
        scale = cfg.sigma / np.sqrt(cfg.decay ** level)
        grown = []
        for node in frontier:
            for _ in range(cfg.children):
                grown.append(len(parents))
                parents.append(node)
                depths.append(level + 1)
                latents.append(latents[node] + scale * rng.standard_normal(cfg.dim))
        frontier = grown
    tree = Tree(np.asarray(parents), np.asarray(depths), np.asarray(latents))

    node_index = np.repeat(np.arange(tree.n_nodes), cfg.siblings)
    obs_scale = cfg.sigma / np.sqrt(cfg.obs_noise_factor * cfg.decay ** tree.depths[node_index])
    X = tree.latents[node_index] + obs_scale[:, None] * rng.standard_normal((len(node_index), cfg.dim))
    ids = [f"obs{k:05d}" for k in range(len(X))]
    labels = [str(n) for n in node_index]
    oracle = TreeHopOracle(hop_matrix(tree), node_index)
    return tree, Dataset(X=X, ids=ids, labels=labels, oracle=oracle)


@dataclass(frozen=True)
class StandardizeStats:
    mean: np.ndarray
    std: np.ndarray
    constant_columns: tuple

    def inverse(self, X: np.ndarray) -> np.ndarray:
        return X * self.std + self.mean


def standardize(X: np.ndarray):
    """Zero-mean unit-variance columns (population std).

    Constant columns keep std 1 and are flagged instead of dividing by 0.
    """
    X = np.asarray(X, dtype=float)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    constant = np.flatnonzero(std == 0.0)
    std = np.where(std == 0.0, 1.0, std)
    stats = StandardizeStats(mean, std, tuple(int(c) for c in constant))
    return (X - mean) / std, stats


def split(dataset: Dataset, ratios=(0.82, 0.09, 0.09), seed: int = 0):
    """Disjoint, exhaustive, seeded train/val/test split.

    Sizes follow largest-remainder rounding of the ratios, so each is
    within one sample of its target."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must sum to 1")
    n = len(dataset)
    exact = [r * n for r in ratios]
    sizes = [int(e) for e in exact]
    remainders = [e - s for e, s in zip(exact, sizes)]
    for k in sorted(range(len(ratios)), key=lambda k: -remainders[k])[: n - sum(sizes)]:
        sizes[k] += 1
    perm = np.random.default_rng(seed).permutation(n)
    bounds = np.cumsum(sizes)[:-1]
    parts = np.split(perm, bounds)
    return tuple(dataset.subset(np.sort(p)) for p in parts)


# ---------------------------------------------------------------------------
# file I/O

def save_matrix_csv(path, X: np.ndarray, ids) -> None:
    X = np.asarray(X, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"f{k}" for k in range(X.shape[1])])
        for rid, row in zip(ids, X):
            writer.writerow([rid] + [repr(float(v)) for v in row])


def load_matrix_csv(path):
    ids, rows = [], []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "id":
            raise ParseError(f"{path}: missing 'id' header")
        width = len(header) - 1
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != width + 1:
                raise ParseError(f"{path}:{lineno}: expected {width + 1} fields, got {len(rec)}")
            try:
                rows.append([float(v) for v in rec[1:]])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            ids.append(rec[0])
    return np.asarray(rows, dtype=float).reshape(len(ids), width), ids


def save_matrix_binary(path, X: np.ndarray) -> None:
    X = np.ascontiguousarray(X, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(GDMX_MAGIC)
        fh.write(bytes([GDMX_VERSION]))
        fh.write(struct.pack("<QQ", X.shape[0], X.shape[1]))
        fh.write(X.tobytes())


def load_matrix_binary(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != GDMX_MAGIC:
        raise ParseError(f"{path}: bad magic {raw[:4]!r}")
    if raw[4] != GDMX_VERSION:
        raise ParseError(f"{path}: unsupported version {raw[4]}")
    rows, cols = struct.unpack("<QQ", raw[5:21])
    expected = 21 + rows * cols * 4
    if len(raw) != expected:
        raise ParseError(f"{path}: expected {expected} bytes, got {len(raw)}")
    X = np.frombuffer(raw, dtype="<f4", count=rows * cols, offset=21)
    return X.reshape(rows, cols).astype(float)


def save_sidecar(path, ids, labels, phases=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label"] + (["phase"] if phases is not None else []))
        for k, (rid, lab) in enumerate(zip(ids, labels)):
            row = [rid, lab]
            if phases is not None:
                row.append(repr(float(phases[k])))
            writer.writerow(row)


def load_sidecar(path):
    """Returns id -> (label, phase-or-None)."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["id", "label"]:
            raise ParseError(f"{path}: sidecar header must start with id,label")
        has_phase = len(header) > 2 and header[2] == "phase"
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) < 2:
                raise ParseError(f"{path}:{lineno}: short sidecar row")
            out[rec[0]] = (rec[1], float(rec[2]) if has_phase and len(rec) > 2 else None)
    return out


def save_tree(path, tree: Tree) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "parent", "depth"])
        for k in range(tree.n_nodes):
            writer.writerow([k, int(tree.parents[k]), int(tree.depths[k])])


def load_tree(path) -> Tree:
    parents, depths = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for rec in reader:
            parents.append(int(rec[1]))
            depths.append(int(rec[2]))
    n = len(parents)
    return Tree(np.asarray(parents), np.asarray(depths), np.zeros((n, 0)))


def load_dataset(path, fmt: str = "csv", sidecar=None, tree=None, strict_binary: bool = False) -> Dataset:
    """Load a matrix dataset, optionally joining a label/phase sidecar and
    a tree file (labels then name generating nodes for the hop oracle)."""
    if fmt == "csv":
        X, ids = load_matrix_csv(path)
    elif fmt == "binary":
        X = load_matrix_binary(path)
        ids = [str(k) for k in range(len(X))]
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")
    if strict_binary and not np.all((X == 0.0) | (X == 1.0)):
        bad = X[(X != 0.0) & (X != 1.0)].flat[0]
        raise ParseError(f"{path}: non-binary entry {bad!r} with strict one-hot loading")

    labels = phases = None
    if sidecar is not None:
        table = load_sidecar(sidecar)
        missing = [rid for rid in ids if rid not in table]
        if missing:
            raise JoinError(f"sidecar {sidecar} missing id {missing[0]!r}")
        if len(table) != len(ids):
            raise JoinError(f"sidecar {sidecar}: {len(table)} rows vs {len(ids)} matrix rows")
        labels = [table[rid][0] for rid in ids]
        if all(table[rid][1] is not None for rid in ids):
            phases = np.asarray([table[rid][1] for rid in ids])

    oracle = None
    if phases is not None:
        oracle = CircularPhaseOracle(phases)
    if tree is not None:
        if labels is None:
            raise JoinError("hop oracle needs a sidecar naming each row's node")
        t = load_tree(tree)
        node_index = np.asarray([int(lab) for lab in labels])
        oracle = TreeHopOracle(hop_matrix(t), node_index)
    return Dataset(X=X, ids=ids, labels=labels, phases=phases, oracle=oracle)
