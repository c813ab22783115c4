import numpy as np
import pytest

from geodecoder.manifolds import Euclidean, Lorentz, ManifoldSpec, Product, Sphere, build_manifold


def random_points(manifold, n, rng):
    """On-manifold samples for any supported geometry."""
    if manifold.is_compact:
        return manifold.sample_uniform(n, rng)
    if isinstance(manifold, Euclidean):
        return rng.standard_normal((n, manifold.ambient_dim))
    if isinstance(manifold, Lorentz):
        raw = np.zeros((n, manifold.ambient_dim))
        raw[:, 1:] = rng.standard_normal((n, manifold.intrinsic_dim))
        return manifold.project(raw)
    if isinstance(manifold, Product):
        return np.concatenate([random_points(f, n, rng) for f in manifold.parts], axis=-1)
    raise NotImplementedError


def random_tangents(manifold, x, rng, scale=1.0):
    """Tangent vectors at x with Riemannian norm <= scale."""
    v = manifold.egrad2rgrad(x, rng.standard_normal(x.shape))
    norm = np.sqrt(np.maximum(manifold.inner(x, v, v), 1e-300))[..., None]
    return v / norm * rng.uniform(0.05, scale, size=(len(x), 1))


def finite_difference(f, x, h=1e-5):
    """Central-difference gradient of a scalar function of an array."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for k in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[k] += h
        xm[k] -= h
        gflat[k] = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (2 * h)
    return g


def rel_err(a, b):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


ALL_MANIFOLDS = {
    "euclidean3": lambda: Euclidean(3),
    "sphere2": lambda: Sphere(2),
    "torus": lambda: build_manifold(ManifoldSpec.torus()),
    "lorentz2_c1": lambda: Lorentz(2, 1.0),
    "lorentz2_c5": lambda: Lorentz(2, 5.0),
}


@pytest.fixture(params=sorted(ALL_MANIFOLDS), ids=sorted(ALL_MANIFOLDS))
def manifold(request):
    return ALL_MANIFOLDS[request.param]()
