import math

import numpy as np
import pytest

from geodecoder.manifolds import (
    DegenerateInput,
    Euclidean,
    Lorentz,
    ManifoldSpec,
    NonUniqueLog,
    Product,
    Sphere,
    UnsupportedSampling,
    build_manifold,
    lorentz_to_poincare,
    minkowski_inner,
    poincare_distance,
    poincare_to_lorentz,
)

from conftest import random_points, random_tangents

N_CASES = 1000


# --- spec validation ---------------------------------------------------------

def test_spec_invariants():
    with pytest.raises(ValueError):
        ManifoldSpec("sphere", 3, 3)
    with pytest.raises(ValueError):
        ManifoldSpec("lorentz", 3, 2, curvature=-1.0)
    with pytest.raises(ValueError):
        ManifoldSpec("product", 5, 4, factors=(ManifoldSpec.sphere(1),))
    with pytest.raises(ValueError):
        ManifoldSpec("weird", 2, 2)
    torus = ManifoldSpec.torus()
    assert torus.ambient_dim == 4 and torus.intrinsic_dim == 2


# --- project -----------------------------------------------------------------

def test_project_examples():
    assert np.allclose(Sphere(2).project([2.0, 0.0, 0.0]), [1.0, 0.0, 0.0])
    assert np.array_equal(Euclidean(2).project([0.3, -1.2]), [0.3, -1.2])


def test_project_lorentz_high_precision():
    # oracle: solve x0 = sqrt(1/c + ||spatial||^2) at 50 digits
    import mpmath

    mpmath.mp.dps = 50
    s = 1.1752
    expected = float(mpmath.sqrt(1 + mpmath.mpf("1.1752") ** 2))
    got = Lorentz(1, 1.0).project(np.array([0.0, s]))
    assert abs(got[0] - expected) < 1e-15
    assert got[1] == s


def test_project_idempotent(manifold):
    rng = np.random.default_rng(7)
    x = random_points(manifold, 50, rng)
    again = manifold.project(x)
    assert np.max(np.abs(again - x)) < 1e-12


def test_project_zero_sphere_degenerate():
    with pytest.raises(DegenerateInput):
        Sphere(2).project(np.zeros(3))


# --- exp / log / retract ------------------------------------------------------

def test_exp_examples():
    s = Sphere(2)
    assert np.allclose(s.exp_map(np.array([1.0, 0, 0]), np.array([0.0, np.pi / 2, 0])),
                       [0.0, 1.0, 0.0], atol=1e-15)
    L = Lorentz(2, 1.0)
    got = L.exp_map(np.array([1.0, 0, 0]), np.array([0.0, 1.0, 0]))
    assert np.allclose(got, [np.cosh(1.0), np.sinh(1.0), 0.0])


def test_exp_zero_tangent_returns_x(manifold):
    rng = np.random.default_rng(3)
    x = random_points(manifold, 10, rng)
    assert np.array_equal(manifold.exp_map(x, np.zeros_like(x)), x)


def test_log_examples():
    s = Sphere(2)
    assert np.allclose(s.log_map(np.array([1.0, 0, 0]), np.array([0.0, 1.0, 0])),
                       [0.0, np.pi / 2, 0.0])
    e = Euclidean(2)
    assert np.array_equal(e.log_map(np.array([1.0, 1.0]), np.array([3.0, 0.0])), [2.0, -1.0])


def test_log_self_is_zero(manifold):
    rng = np.random.default_rng(4)
    x = random_points(manifold, 10, rng)
    assert np.max(np.abs(manifold.log_map(x, x))) < 1e-7


def test_log_antipodal_raises():
    with pytest.raises(NonUniqueLog):
        Sphere(2).log_map(np.array([1.0, 0, 0]), np.array([-1.0, 0, 0]))


def test_retract_equals_exp(manifold):
    rng = np.random.default_rng(5)
    x = random_points(manifold, 20, rng)
    v = random_tangents(manifold, x, rng)
    assert np.array_equal(manifold.retract(x, v), manifold.exp_map(x, v))


def test_exp_log_round_trip(manifold):
    rng = np.random.default_rng(11)
    x = random_points(manifold, N_CASES, rng)
    v = random_tangents(manifold, x, rng, scale=1.0)
    back = manifold.log_map(x, manifold.exp_map(x, v))
    assert np.max(np.abs(back - v)) < 1e-6


# --- egrad2rgrad ---------------------------------------------------------------

def test_egrad2rgrad_examples():
    s = Sphere(2)
    x = np.array([1.0, 0, 0])
    g = np.array([3.0, 4.0, 0.0])
    # oracle: literal tangent projection (I - x x^T) g
    proj = (np.eye(3) - np.outer(x, x)) @ g
    assert np.allclose(s.egrad2rgrad(x, g), proj)
    assert np.allclose(proj, [0.0, 4.0, 0.0])

    e = Euclidean(3)
    assert np.array_equal(e.egrad2rgrad(x, g), g)

    L = Lorentz(2, 1.0)
    # oracle: flip time component, then project with the Lorentz metric
    xl = np.array([1.0, 0, 0])
    gl = np.array([5.0, 2.0, 0.0])
    h = gl * np.array([-1.0, 1.0, 1.0])
    expected = h + minkowski_inner(xl, h) * xl
    got = L.egrad2rgrad(xl, gl)
    assert np.allclose(got, expected)
    assert np.allclose(got, [0.0, 2.0, 0.0])
    assert abs(minkowski_inner(xl, got)) < 1e-15


def test_egrad2rgrad_always_tangent(manifold):
    rng = np.random.default_rng(13)
    x = random_points(manifold, N_CASES, rng)
    g = rng.standard_normal(x.shape)
    r = manifold.egrad2rgrad(x, g)
    assert manifold.tangent_violation(x, r) < 1e-7


# --- distances -----------------------------------------------------------------

def test_distance_examples():
    assert np.isclose(Sphere(2).distance(np.array([1.0, 0, 0]), np.array([-1.0, 0, 0])), np.pi)
    assert np.isclose(Euclidean(2).distance(np.array([0.0, 0]), np.array([3.0, 4.0])), 5.0)
    L = Lorentz(2, 1.0)
    y = np.array([np.cosh(1.0), np.sinh(1.0), 0.0])
    assert np.isclose(L.distance(np.array([1.0, 0, 0]), y), 1.0)


def test_distance_symmetry_and_identity(manifold):
    rng = np.random.default_rng(17)
    x = random_points(manifold, 200, rng)
    y = random_points(manifold, 200, rng)
    d_xy = manifold.distance(x, y)
    d_yx = manifold.distance(y, x)
    assert np.max(np.abs(d_xy - d_yx)) < 1e-9
    assert np.max(np.abs(manifold.distance(x, x))) < 1e-6
    assert np.all(d_xy >= 0)


def test_distance_triangle_inequality(manifold):
    rng = np.random.default_rng(19)
    x = random_points(manifold, 500, rng)
    y = random_points(manifold, 500, rng)
    z = random_points(manifold, 500, rng)
    lhs = manifold.distance(x, z)
    rhs = manifold.distance(x, y) + manifold.distance(y, z)
    assert np.all(lhs <= rhs + 1e-8)


def test_distance_equals_tangent_norm(manifold):
    # d(x, exp_x(v)) = ||v||_g below the injectivity radius
    rng = np.random.default_rng(23)
    x = random_points(manifold, N_CASES, rng)
    v = random_tangents(manifold, x, rng, scale=1.0)
    vnorm = manifold.norm(x, v)
    d = manifold.distance(x, manifold.exp_map(x, v))
    assert np.max(np.abs(d - vnorm)) < 1e-7


# --- parallel transport ----------------------------------------------------------

def test_transport_identity_cases(manifold):
    rng = np.random.default_rng(29)
    x = random_points(manifold, 20, rng)
    v = random_tangents(manifold, x, rng)
    assert np.max(np.abs(manifold.transport(x, x, v) - v)) < 1e-9


def test_transport_euclidean_trivial():
    e = Euclidean(4)
    rng = np.random.default_rng(31)
    x, y, v = rng.standard_normal((3, 10, 4))
    assert np.array_equal(e.transport(x, y, v), v)


def test_transport_sphere_orthogonal_component_fixed():
    # transport along the equator leaves the pole component untouched
    s = Sphere(2)
    x = np.array([1.0, 0, 0])
    y = np.array([0.0, 1.0, 0])
    v = np.array([0.0, 0, 0.7])
    assert np.allclose(s.transport(x, y, v), v, atol=1e-15)


def _schilds_ladder(manifold, x, y, v, n_steps=400):
    """Numerical transport oracle: midpoint ladder along the geodesic."""
    t = np.linspace(0.0, 1.0, n_steps + 1)
    u = manifold.log_map(x, y)
    p = [manifold.exp_map(x, ti * u) for ti in t]
    h = 1e-3
    cur = v.copy()
    for k in range(n_steps):
        a = manifold.exp_map(p[k], h * cur)
        mid = manifold.exp_map(a, 0.5 * manifold.log_map(a, p[k + 1]))
        target = manifold.exp_map(p[k], 2.0 * manifold.log_map(p[k], mid))
        cur = manifold.log_map(p[k + 1], target) / h
    return cur


@pytest.mark.parametrize("kind", ["sphere", "lorentz"])
def test_transport_matches_schilds_ladder(kind):
    manifold = Sphere(2) if kind == "sphere" else Lorentz(2, 1.0)
    rng = np.random.default_rng(37)
    x = random_points(manifold, 5, rng)
    y = random_points(manifold, 5, rng)
    v = random_tangents(manifold, x, rng, scale=0.8)
    closed = manifold.transport(x, y, v)
    for k in range(5):
        ladder = _schilds_ladder(manifold, x[k], y[k], v[k])
        assert np.max(np.abs(closed[k] - ladder)) < 1e-3


def test_transport_preserves_inner_products(manifold):
    rng = np.random.default_rng(41)
    x = random_points(manifold, N_CASES, rng)
    y = random_points(manifold, N_CASES, rng)
    u = random_tangents(manifold, x, rng)
    w = random_tangents(manifold, x, rng)
    tu = manifold.transport(x, y, u)
    tw = manifold.transport(x, y, w)
    assert manifold.tangent_violation(y, tu) < 1e-7
    before = manifold.inner(x, u, w)
    after = manifold.inner(y, tu, tw)
    assert np.max(np.abs(before - after)) < 1e-7
    norm_gap = np.abs(manifold.norm(x, u) - manifold.norm(y, tu))
    assert np.max(norm_gap) < 1e-8


# --- sampling ---------------------------------------------------------------------

def test_sample_uniform_sphere_rotation_symmetric():
    s = Sphere(2)
    pts = s.sample_uniform(100_000, np.random.default_rng(43))
    assert s.point_violation(pts) < 1e-12
    assert np.linalg.norm(pts.mean(axis=0)) < 0.02


def test_sample_uniform_torus():
    t = build_manifold(ManifoldSpec.torus())
    pts = t.sample_uniform(1000, np.random.default_rng(44))
    assert pts.shape == (1000, 4)
    assert t.point_violation(pts) < 1e-12


def test_sample_uniform_noncompact_raises():
    with pytest.raises(UnsupportedSampling):
        Lorentz(2, 1.0).sample_uniform(3, np.random.default_rng(0))
    with pytest.raises(UnsupportedSampling):
        Euclidean(2).sample_uniform(3, np.random.default_rng(0))


# --- metric ------------------------------------------------------------------------

def test_metric_examples():
    e = Euclidean(3)
    m = e.metric_at(np.zeros(3))
    assert np.array_equal(m.g, np.eye(3))

    L = Lorentz(2, 1.0)
    origin = L.base_point()
    m0 = L.metric_at(origin)
    assert np.allclose(m0.g, 4.0 * np.eye(2))
    assert np.allclose(m0.g_inv, np.eye(2) / 4.0)

    x = poincare_to_lorentz(np.array([np.sqrt(0.5), 0.0]), 1.0)
    m = L.metric_at(x)
    assert np.allclose(m.g, 16.0 * np.eye(2))


def test_metric_inverse_consistency(manifold):
    rng = np.random.default_rng(47)
    x = random_points(manifold, 1000, rng)
    for k in range(0, 1000, 100):
        m = manifold.metric_at(x[k])
        assert np.max(np.abs(m.g @ m.g_inv - np.eye(m.g.shape[0]))) < 1e-8


def test_metric_inverse_dense_grid_lorentz():
    L = Lorentz(2, 5.0)
    rng = np.random.default_rng(48)
    for _ in range(1000):
        z = rng.uniform(-0.4, 0.4, size=2)  # stays inside the c=5 ball
        x = poincare_to_lorentz(z * np.sqrt(5.0), 5.0)
        m = L.metric_at(x)
        assert np.max(np.abs(m.g @ m.g_inv - np.eye(2))) < 1e-8


# --- Poincare projection --------------------------------------------------------------

def test_poincare_projection_examples():
    L = Lorentz(2, 1.0)
    assert np.allclose(lorentz_to_poincare(L.base_point(), 1.0), [0.0, 0.0])
    y = np.array([np.cosh(1.0), np.sinh(1.0), 0.0])
    img = lorentz_to_poincare(y, 1.0)
    assert np.allclose(img, [np.sinh(1.0) / (np.cosh(1.0) + 1.0), 0.0])
    d = poincare_distance(np.zeros(2), img, 1.0)
    assert abs(d - 1.0) < 1e-12


def test_poincare_images_inside_disk():
    for c in (1.0, 5.0):
        m = Lorentz(2, c)
        rng = np.random.default_rng(53)
        raw = np.zeros((500, 3))
        raw[:, 1:] = 5.0 * rng.standard_normal((500, 2))
        x = m.project(raw)
        img = lorentz_to_poincare(x, c)
        assert np.all(np.sum(img * img, axis=-1) < 1.0)


def test_poincare_isometry_and_inverse():
    for c in (1.0, 5.0):
        m = Lorentz(2, c)
        rng = np.random.default_rng(59)
        x = random_points(m, 100, rng)
        y = random_points(m, 100, rng)
        dl = m.distance(x, y)
        dp = poincare_distance(lorentz_to_poincare(x, c), lorentz_to_poincare(y, c), c)
        assert np.max(np.abs(dl - dp)) < 1e-6
        back = poincare_to_lorentz(lorentz_to_poincare(x, c), c)
        assert np.max(np.abs(back - x)) < 1e-9
