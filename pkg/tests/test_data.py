import collections

import numpy as np
import pytest

from geodecoder.data import (
    BranchingConfig,
    CircularPhaseOracle,
    Dataset,
    JoinError,
    ParseError,
    Tree,
    circular_phase_distance,
    generate_branching_diffusion,
    hop_matrix,
    load_dataset,
    load_matrix_binary,
    load_matrix_csv,
    load_sidecar,
    load_tree,
    save_matrix_binary,
    save_matrix_csv,
    save_sidecar,
    save_tree,
    split,
    standardize,
    tree_distance,
)


# --- generator ----------------------------------------------------------------

def test_default_counts_match_protocol():
    cfg = BranchingConfig()
    assert cfg.dim == 50 and cfg.depth == 7 and cfg.children == 2
    assert cfg.sigma == 1.0 and cfg.decay == 1.0
    assert cfg.siblings == 50 and cfg.obs_noise_factor == 8.0
    tree, dataset = generate_branching_diffusion(cfg)
    assert tree.n_nodes == 127
    assert len(dataset) == 6350
    assert dataset.X.shape == (6350, 50)


def test_degenerate_depth_one():
    cfg = BranchingConfig(dim=20, depth=1, siblings=200, seed=3)
    tree, dataset = generate_branching_diffusion(cfg)
    assert tree.n_nodes == 1
    assert len(dataset) == 200
    assert np.allclose(tree.latents[0], 0.0)
    # observations ~ N(0, sigma^2/f I) around the origin
    var = dataset.X.var()
    assert abs(var - 1.0 / 8.0) < 0.1 / 8.0


def test_observation_noise_variance():
    _, dataset = generate_branching_diffusion(BranchingConfig(seed=1))
    node = np.asarray([int(lab) for lab in dataset.labels])
    tree, _ = generate_branching_diffusion(BranchingConfig(seed=1))
    centered = dataset.X - tree.latents[node]
    pooled = centered.var()
    assert abs(pooled - 0.125) < 0.0125  # sigma^2/f within 10%


@pytest.mark.parametrize("children", [1, 2, 3])
@pytest.mark.parametrize("depth", [1, 3, 5, 7])
def test_node_count_formula(children, depth):
    cfg = BranchingConfig(dim=2, depth=depth, children=children, siblings=1, seed=0)
    tree, _ = generate_branching_diffusion(cfg)
    assert tree.n_nodes == sum(children**level for level in range(depth))
    counts = collections.Counter(tree.depths.tolist())
    assert counts == {level: children**level for level in range(depth)}


def test_nearest_node_is_generating_node():
    # signal-to-noise: >= 99% of observations sit closest to their own node
    tree, dataset = generate_branching_diffusion(BranchingConfig(seed=7))
    node = np.asarray([int(lab) for lab in dataset.labels])
    d2 = ((dataset.X[:, None, :] - tree.latents[None, :, :]) ** 2).sum(axis=2)
    nearest = d2.argmin(axis=1)
    assert np.mean(nearest == node) >= 0.99


def test_same_seed_reproduces():
    a = generate_branching_diffusion(BranchingConfig(seed=11))
    b = generate_branching_diffusion(BranchingConfig(seed=11))
    assert np.array_equal(a[0].latents, b[0].latents)
    assert np.array_equal(a[1].X, b[1].X)


def test_config_validation():
    with pytest.raises(ValueError):
        BranchingConfig(depth=0)
    with pytest.raises(ValueError):
        BranchingConfig(decay=0.5)
    with pytest.raises(ValueError):
        BranchingConfig(obs_noise_factor=1.0)


# --- tree distances --------------------------------------------------------------

def _bfs_hops(parents, i):
    """Independent oracle: BFS over the undirected tree adjacency."""
    adj = collections.defaultdict(list)
    for child, parent in enumerate(parents):
        if parent >= 0:
            adj[child].append(parent)
            adj[parent].append(child)
    dist = {i: 0}
    frontier = [i]
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return dist


def test_tree_distance_examples():
    tree, _ = generate_branching_diffusion(BranchingConfig(dim=2, siblings=1, seed=0))
    assert tree_distance(tree, 0, 0) == 0
    child = int(np.flatnonzero(tree.parents == 0)[0])
    assert tree_distance(tree, 0, child) == 1
    # deepest leaves under different root children are 12 hops apart
    leaves = np.flatnonzero(tree.depths == 6)
    left, right = int(leaves[0]), int(leaves[-1])
    assert tree_distance(tree, left, right) == 12


def test_tree_distance_matches_bfs_oracle():
    tree, _ = generate_branching_diffusion(
        BranchingConfig(dim=2, depth=5, children=3, siblings=1, seed=2))
    hops = hop_matrix(tree)
    assert np.array_equal(hops, hops.T)
    for i in (0, 5, 17, tree.n_nodes - 1):
        oracle = _bfs_hops(tree.parents, i)
        for j in range(tree.n_nodes):
            assert hops[i, j] == oracle[j]
            assert tree_distance(tree, i, j) == oracle[j]


# --- standardize --------------------------------------------------------------------

def test_standardize_two_point_column():
    X = np.array([[0.0], [2.0]])
    out, stats = standardize(X)
    assert np.allclose(out[:, 0], [-1.0, 1.0])
    assert stats.mean[0] == 1.0 and stats.std[0] == 1.0


def test_standardize_constant_column_flagged():
    X = np.column_stack([np.full(5, 3.0), np.arange(5.0)])
    out, stats = standardize(X)
    assert stats.constant_columns == (0,)
    assert np.allclose(out[:, 0], 0.0)  # mean removed, std untouched


def test_standardize_idempotent_and_invertible():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((500, 4)) * 3.0 + 1.0
    out, stats = standardize(X)
    assert np.max(np.abs(out.mean(axis=0))) < 1e-10
    assert np.max(np.abs(out.std(axis=0) - 1.0)) < 1e-10
    twice, _ = standardize(out)
    assert np.max(np.abs(twice - out)) < 1e-10
    assert np.max(np.abs(stats.inverse(out) - X)) < 1e-10


# --- split -------------------------------------------------------------------------------

def _toy_dataset(n):
    return Dataset(X=np.arange(n, dtype=float).reshape(n, 1), ids=[str(k) for k in range(n)])


def test_split_sizes():
    parts = split(_toy_dataset(100), seed=1)
    assert tuple(len(p) for p in parts) == (82, 9, 9)
    parts = split(_toy_dataset(10), seed=1)
    assert tuple(len(p) for p in parts) == (8, 1, 1)


def test_split_disjoint_exhaustive_deterministic():
    ds = _toy_dataset(57)
    a = split(ds, seed=9)
    b = split(ds, seed=9)
    ids = [tuple(p.ids) for p in a]
    assert ids == [tuple(p.ids) for p in b]
    merged = sorted(sum((list(p.ids) for p in a), []))
    assert merged == sorted(ds.ids)


def test_split_bad_ratios():
    with pytest.raises(ValueError):
        split(_toy_dataset(10), ratios=(0.5, 0.2, 0.2), seed=0)


def test_split_carries_oracle():
    tree, dataset = generate_branching_diffusion(
        BranchingConfig(dim=3, depth=3, siblings=4, seed=5))
    train, val, test = split(dataset, seed=5)
    i = np.array([0, 1])
    j = np.array([2, 3])
    node = np.asarray([int(lab) for lab in train.labels])
    hops = hop_matrix(tree)
    expected = hops[node[i], node[j]]
    assert np.array_equal(train.oracle.pairs(i, j), expected)


# --- phases ----------------------------------------------------------------------------------

def test_circular_phase_distance_is_metric():
    rng = np.random.default_rng(13)
    a, b, c = rng.random((3, 500))
    dab = circular_phase_distance(a, b)
    assert np.allclose(dab, circular_phase_distance(b, a))
    assert np.all(circular_phase_distance(a, a) == 0.0)
    assert np.all(dab <= circular_phase_distance(a, c) + circular_phase_distance(c, b) + 1e-12)
    # wrap-around: 0 and 1-eps are the same point
    assert circular_phase_distance(0.0, 0.999) < 0.0011
    assert np.all(dab <= 0.5)


def test_dataset_rejects_bad_phases():
    with pytest.raises(ValueError):
        Dataset(X=np.zeros((2, 1)), ids=["a", "b"], phases=np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        Dataset(X=np.array([[np.nan]]), ids=["a"])


# --- file I/O ----------------------------------------------------------------------------------

def test_csv_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(17)
    X = rng.standard_normal((3, 2))
    ids = ["r0", "r1", "r2"]
    path = tmp_path / "m.csv"
    save_matrix_csv(path, X, ids)
    X2, ids2 = load_matrix_csv(path)
    assert ids2 == ids
    assert np.array_equal(X, X2)


def test_csv_parse_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,f0,f1\nr0,1.0\n")
    with pytest.raises(ParseError, match=":2:"):
        load_matrix_csv(path)
    path.write_text("id,f0\nr0,abc\n")
    with pytest.raises(ParseError, match=":2:"):
        load_matrix_csv(path)
    path.write_text("x,f0\n")
    with pytest.raises(ParseError, match="header"):
        load_matrix_csv(path)


def test_binary_round_trip(tmp_path):
    rng = np.random.default_rng(19)
    X = (rng.random((7, 5)) < 0.5).astype(float)
    path = tmp_path / "m.gdmx"
    save_matrix_binary(path, X)
    X2 = load_matrix_binary(path)
    assert np.array_equal(X, X2)


def test_binary_bad_magic_and_truncation(tmp_path):
    path = tmp_path / "bad.gdmx"
    path.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(ParseError, match="magic"):
        load_matrix_binary(path)
    save_matrix_binary(path, np.ones((2, 2)))
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(ParseError, match="bytes"):
        load_matrix_binary(path)


def test_strict_binary_rejects_nonbinary(tmp_path):
    path = tmp_path / "m.gdmx"
    save_matrix_binary(path, np.array([[0.0, 2.0]]))
    with pytest.raises(ParseError, match="non-binary"):
        load_dataset(path, fmt="binary", strict_binary=True)


def test_sidecar_join(tmp_path):
    mat = tmp_path / "m.csv"
    side = tmp_path / "s.csv"
    save_matrix_csv(mat, np.zeros((2, 1)), ["a", "b"])
    save_sidecar(side, ["a", "b"], ["x", "y"], phases=[0.25, 0.75])
    ds = load_dataset(mat, sidecar=side)
    assert ds.labels == ["x", "y"]
    assert np.allclose(ds.phases, [0.25, 0.75])
    assert isinstance(ds.oracle, CircularPhaseOracle)

    save_sidecar(side, ["a"], ["x"])
    with pytest.raises(JoinError, match="'b'"):
        load_dataset(mat, sidecar=side)


def test_tree_file_round_trip_and_hop_oracle(tmp_path):
    tree, dataset = generate_branching_diffusion(
        BranchingConfig(dim=2, depth=3, siblings=2, seed=23))
    tree_path = tmp_path / "tree.csv"
    mat = tmp_path / "m.csv"
    side = tmp_path / "s.csv"
    save_tree(tree_path, tree)
    save_matrix_csv(mat, dataset.X, dataset.ids)
    save_sidecar(side, dataset.ids, dataset.labels)

    loaded_tree = load_tree(tree_path)
    assert np.array_equal(loaded_tree.parents, tree.parents)
    assert np.array_equal(loaded_tree.depths, tree.depths)

    ds = load_dataset(mat, sidecar=side, tree=tree_path)
    i, j = np.array([0]), np.array([len(ds) - 1])
    assert np.array_equal(ds.oracle.pairs(i, j), dataset.oracle.pairs(i, j))
