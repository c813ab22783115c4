"""Geometry kernel: points, tangent vectors, maps, metrics, and sampling.

Supported geometries:

* ``Euclidean`` -- flat space R^d,
* ``Sphere`` -- the unit hypersphere S^d embedded in R^(d+1),
* ``Product`` -- cartesian products of the above (the torus is
  ``Product(Sphere(1), Sphere(1))``, ambient dimension 4),
* ``Lorentz`` -- the hyperboloid model of hyperbolic space with
  curvature parameter c > 0, points satisfying <x,x>_L = -1/c with
  x0 > 0, where <u,v>_L = -u0*v0 + sum_i u_i*v_i.

Points and tangent vectors are plain float64 arrays whose last axis is the
ambient coordinate; every operation broadcasts over leading batch axes.
All operations are pure functions of their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class DegenerateInput(ValueError):
    """Input has no well-defined image (e.g. projecting 0 onto a sphere)."""


class NonUniqueLog(ValueError):
    """The logarithmic map is not unique (antipodal points on a sphere)."""


class UnsupportedSampling(ValueError):
    """Uniform sampling requested on a non-compact manifold."""


@dataclass(frozen=True)
class ManifoldSpec:
    """Which geometry latents live on.

    ``ambient_dim`` is the embedding dimension, ``intrinsic_dim`` the
    manifold dimension.  ``curvature`` applies to Lorentz only; ``factors``
    to Product only.
    """

    kind: str
    ambient_dim: int
    intrinsic_dim: int
    curvature: float = 1.0
    factors: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in ("euclidean", "sphere", "product", "lorentz"):
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if self.ambient_dim < 1 or self.intrinsic_dim < 1:
            raise ValueError("dimensions must be positive")
        if self.kind == "sphere" and self.intrinsic_dim != self.ambient_dim - 1:
            raise ValueError("sphere requires intrinsic_dim = ambient_dim - 1")
        if self.kind == "lorentz":
            if self.intrinsic_dim != self.ambient_dim - 1:
                raise ValueError("lorentz requires intrinsic_dim = ambient_dim - 1")
            if not self.curvature > 0:
                raise ValueError("lorentz curvature must be positive")
        if self.kind == "product":
            if not self.factors:
                raise ValueError("product requires at least one factor")
            if self.ambient_dim != sum(f.ambient_dim for f in self.factors):
                raise ValueError("product ambient_dim must equal sum of factors")
            if self.intrinsic_dim != sum(f.intrinsic_dim for f in self.factors):
                raise ValueError("product intrinsic_dim must equal sum of factors")

    @staticmethod
    def euclidean(dim: int) -> "ManifoldSpec":
        return ManifoldSpec("euclidean", dim, dim)

    @staticmethod
    def sphere(intrinsic_dim: int) -> "ManifoldSpec":
        return ManifoldSpec("sphere", intrinsic_dim + 1, intrinsic_dim)

    @staticmethod
    def lorentz(intrinsic_dim: int, curvature: float = 1.0) -> "ManifoldSpec":
        return ManifoldSpec("lorentz", intrinsic_dim + 1, intrinsic_dim, curvature)

    @staticmethod
    def product(*factors: "ManifoldSpec") -> "ManifoldSpec":
        return ManifoldSpec(
            "product",
            sum(f.ambient_dim for f in factors),
            sum(f.intrinsic_dim for f in factors),
            factors=tuple(factors),
        )

    @staticmethod
    def torus() -> "ManifoldSpec":
        return ManifoldSpec.product(ManifoldSpec.sphere(1), ManifoldSpec.sphere(1))


@dataclass(frozen=True)
class MetricAt:
    """Riemannian metric G and its inverse at a point, as dense matrices."""

    g: np.ndarray
    g_inv: np.ndarray


def _row_norm(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(x * x, axis=-1, keepdims=True))


class Manifold:
    """Base class; subclasses implement the closed-form geometry."""

    spec: ManifoldSpec
    is_compact: bool = False

    @property
    def ambient_dim(self) -> int:
        return self.spec.ambient_dim

    @property
    def intrinsic_dim(self) -> int:
        return self.spec.intrinsic_dim

    def project(self, ambient: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def exp_map(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_map(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def retract(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        # Exact exponential retraction: closed forms exist for all
        # supported manifolds.  Kept as its own entry point so callers
        # that only need a retraction do not promise geodesic accuracy.
        return self.exp_map(x, v)

    def egrad2rgrad(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def distance(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def transport(self, x: np.ndarray, y: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def inner(self, x: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Riemannian inner product of tangent vectors at x."""
        raise NotImplementedError

    def norm(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.sqrt(np.maximum(self.inner(x, v, v), 0.0))

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise UnsupportedSampling(f"{type(self).__name__} is not compact")

    def noise_pullback(self, x: np.ndarray, eps0: np.ndarray, upstream: np.ndarray) -> np.ndarray:
        """VJP of x -> retract(x, egrad2rgrad(x, eps0)) for a fixed ambient
        draw eps0: maps dL/d(perturbed point) to dL/dx.

        Needed because the perturbation depends on the base point; dropping
        this chain term loses the force the noise exerts on the latent
        positions."""
        raise NotImplementedError

    def geometric_noise(self, x: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
        """Perturb points with noise whose covariance is the inverse metric:
        an ambient N(0, sigma^2 I) draw mapped through egrad2rgrad (the
        tangent/metric scaling) and retracted back.

        On manifolds whose embedded metric is the restricted identity this
        realizes N(0, sigma^2 G^-1) exactly; Lorentz overrides with a
        transport-based construction matching its position-dependent
        metric."""
        eps0 = sigma * rng.standard_normal(np.shape(x))
        return self.retract(x, self.egrad2rgrad(x, eps0))

    def geometric_noise_with_pullback(self, x, sigma, rng):
        """geometric_noise plus the VJP closure mapping dL/d(noisy) to dL/dx."""
        eps0 = sigma * rng.standard_normal(np.shape(x))
        noisy = self.retract(x, self.egrad2rgrad(x, eps0))
        return noisy, lambda upstream: self.noise_pullback(x, eps0, upstream)

    def metric_at(self, x: np.ndarray) -> MetricAt:
        raise NotImplementedError

    def point_violation(self, x: np.ndarray) -> float:
        """Max absolute violation of the on-manifold constraint."""
        raise NotImplementedError

    def tangent_violation(self, x: np.ndarray, v: np.ndarray) -> float:
        """Max absolute violation of the tangency constraint."""
        raise NotImplementedError


class Euclidean(Manifold):
    """R^d with the identity metric; every map is trivial."""

    def __init__(self, dim: int):
        self.spec = ManifoldSpec.euclidean(dim)

    def project(self, ambient):
        return np.asarray(ambient, dtype=float)

    def exp_map(self, x, v):
        return x + v

    def log_map(self, x, y):
        return y - x

    def egrad2rgrad(self, x, g):
        return np.asarray(g, dtype=float)

    def distance(self, x, y):
        return np.sqrt(np.sum((x - y) ** 2, axis=-1))

    def transport(self, x, y, v):
        return np.asarray(v, dtype=float)

    def inner(self, x, u, v):
        return np.sum(u * v, axis=-1)

    def metric_at(self, x):
        eye = np.eye(self.ambient_dim)
        return MetricAt(eye, eye.copy())

    def noise_pullback(self, x, eps0, upstream):
        return np.asarray(upstream, dtype=float)

    def point_violation(self, x):
        return 0.0

    def tangent_violation(self, x, v):
        return 0.0


class Sphere(Manifold):
    """Unit sphere S^d in R^(d+1): ||x|| = 1, tangents satisfy <x,v> = 0."""

    is_compact = True
    # Dot products below this are treated as antipodal; log is non-unique.
    _ANTIPODAL_TOL = 1e-10

    def __init__(self, intrinsic_dim: int):
        self.spec = ManifoldSpec.sphere(intrinsic_dim)

    def project(self, ambient):
        ambient = np.asarray(ambient, dtype=float)
        norm = _row_norm(ambient)
        if np.any(norm == 0.0):
            raise DegenerateInput("cannot project the zero vector onto the sphere")
        return ambient / norm

    def exp_map(self, x, v):
        theta = _row_norm(v)
        safe = np.where(theta > 0, theta, 1.0)
        sinc = np.where(theta > 0, np.sin(safe) / safe, 1.0)  # exact at v = 0
        return np.cos(theta) * x + sinc * v

    def log_map(self, x, y):
        dot = np.sum(x * y, axis=-1, keepdims=True)
        if np.any(dot < -1.0 + self._ANTIPODAL_TOL):
            raise NonUniqueLog("log map undefined for antipodal points")
        dot = np.clip(dot, -1.0, 1.0)
        theta = np.arccos(dot)
        u = y - dot * x
        sin_theta = np.where(np.sin(theta) > 0, np.sin(theta), 1.0)
        scale = np.where(theta > 0, theta / sin_theta, 1.0)
        return scale * u

    def egrad2rgrad(self, x, g):
        return g - np.sum(x * g, axis=-1, keepdims=True) * x

    def distance(self, x, y):
        dot = np.clip(np.sum(x * y, axis=-1), -1.0, 1.0)
        return np.arccos(dot)

    def transport(self, x, y, v):
        # Transport along the geodesic x -> y: the component along the
        # geodesic direction e rotates in the (x, e) plane, the orthogonal
        # complement is untouched.
        u = self.log_map(x, y)
        theta = _row_norm(u)
        safe = np.where(theta > 0, theta, 1.0)
        e = np.where(theta > 0, u / safe, 0.0)
        ve = np.sum(v * e, axis=-1, keepdims=True)
        return v + ve * ((np.cos(theta) - 1.0) * e - np.sin(theta) * x)

    def inner(self, x, u, v):
        return np.sum(u * v, axis=-1)

    def sample_uniform(self, n, rng):
        return self.project(rng.standard_normal((n, self.ambient_dim)))

    def metric_at(self, x):
        eye = np.eye(self.ambient_dim)
        return MetricAt(eye, eye.copy())

    def noise_pullback(self, x, eps0, upstream):
        # z' = cos(t) x + sinc(t) v with v = eps0 - (x.eps0) x, t = ||v||;
        # differentiate through both v(x) and t(x)
        u = np.sum(x * eps0, axis=-1, keepdims=True)
        v = eps0 - u * x
        theta = _row_norm(v)
        safe = np.where(theta > 0, theta, 1.0)
        sinc = np.where(theta > 0, np.sin(safe) / safe, 1.0)
        dsinc = np.where(theta > 0, (np.cos(theta) - sinc) / safe, 0.0)
        g_dot_z = np.sum(upstream * x, axis=-1, keepdims=True)
        g_dot_v = np.sum(upstream * v, axis=-1, keepdims=True)
        beta = -np.sin(theta) * g_dot_z + dsinc * g_dot_v
        v_hat = np.where(theta > 0, v / safe, 0.0)
        p = sinc * upstream + beta * v_hat
        p_dot_z = np.sum(p * x, axis=-1, keepdims=True)
        return np.cos(theta) * upstream - p_dot_z * eps0 - u * p

    def point_violation(self, x):
        return float(np.max(np.abs(_row_norm(x) - 1.0)))

    def tangent_violation(self, x, v):
        return float(np.max(np.abs(np.sum(x * v, axis=-1))))


def minkowski_inner(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """<u,v>_L = -u0*v0 + sum_{i>=1} u_i*v_i along the last axis."""
    prod = u * v
    return np.sum(prod[..., 1:], axis=-1) - prod[..., 0]


class Lorentz(Manifold):
    """Hyperboloid model of hyperbolic space with curvature c > 0.

    Points: <x,x>_L = -1/c, x0 > 0.  The time coordinate x0 is always
    recomputed from the spatial part during projection, which restores
    the constraint exactly.
    """

    def __init__(self, intrinsic_dim: int, curvature: float = 1.0):
        self.spec = ManifoldSpec.lorentz(intrinsic_dim, curvature)
        self.c = float(curvature)

    def base_point(self) -> np.ndarray:
        x = np.zeros(self.ambient_dim)
        x[0] = 1.0 / math.sqrt(self.c)
        return x

    def project(self, ambient):
        ambient = np.asarray(ambient, dtype=float)
        spatial = ambient[..., 1:]
        if not np.all(np.isfinite(spatial)):
            raise DegenerateInput("non-finite spatial coordinates")
        x0 = np.sqrt(1.0 / self.c + np.sum(spatial * spatial, axis=-1, keepdims=True))
        return np.concatenate([x0, spatial], axis=-1)

    def exp_map(self, x, v):
        # cosh(s) x + sinh(s) v / (sqrt(c) ||v||_L) with s = sqrt(c) ||v||_L;
        # the second term is sinhc(s) v, exact at v = 0
        s = math.sqrt(self.c) * np.sqrt(np.maximum(minkowski_inner(v, v), 0.0))[..., None]
        safe = np.where(s > 0, s, 1.0)
        sinhc = np.where(s > 0, np.sinh(safe) / safe, 1.0)
        return np.cosh(s) * x + sinhc * v

    def log_map(self, x, y):
        # log = arccosh(beta)/sqrt(beta^2-1) * (y - beta x), beta = -c<x,y>_L;
        # the scale has a removable singularity at beta = 1 (series 1 - h/3),
        # so coincident points yield a vanishing tangent without blow-up
        beta = np.maximum(-self.c * minkowski_inner(x, y), 1.0)[..., None]
        h = beta - 1.0
        w = y - beta * x
        denom = np.sqrt(np.maximum(beta * beta - 1.0, 0.0))
        big = h > 1e-6
        scale = np.where(big, np.arccosh(beta) / np.where(big, denom, 1.0), 1.0 - h / 3.0)
        return scale * w

    def egrad2rgrad(self, x, g):
        h = np.array(g, dtype=float, copy=True)
        h[..., 0] = -h[..., 0]
        return h + self.c * minkowski_inner(x, h)[..., None] * x

    def distance(self, x, y):
        arg = np.maximum(-self.c * minkowski_inner(x, y), 1.0)
        return np.arccosh(arg) / math.sqrt(self.c)

    def transport(self, x, y, v):
        # P(v) = v + c<y,v>_L / (1 - c<x,y>_L) * (x + y)
        num = self.c * minkowski_inner(y, v)
        den = 1.0 - self.c * minkowski_inner(x, y)
        return v + (num / den)[..., None] * (x + y)

    def inner(self, x, u, v):
        return minkowski_inner(u, v)

    def metric_at(self, x):
        # Metric expressed in the curvature-c Poincare-ball chart:
        # G(z) = 4 / (1 - c ||z||^2)^2 * I on the ball of radius 1/sqrt(c).
        z = lorentz_to_poincare(x, self.c) / math.sqrt(self.c)
        r2 = float(np.sum(z * z, axis=-1))
        scale = 4.0 / (1.0 - self.c * r2) ** 2
        eye = np.eye(self.intrinsic_dim)
        return MetricAt(scale * eye, eye / scale)

    # Hyperbolic geometric noise: the inverse-metric covariance means the
    # kick is an isotropic tangent Gaussian of uniform Riemannian scale
    # sigma (in the disk chart its per-coordinate std is the familiar
    # sigma (1 - c r^2)/2; the conformal factors cancel).  Realized by
    # drawing the tangent at the base point, where the metric is Euclidean
    # on the spatial coordinates, parallel-transporting it (an isometry),
    # and shooting the geodesic.  The ambient-projection recipe of the
    # other manifolds would instead grow with distance from the origin and
    # blow up at large sigma.

    def _noise_tangent(self, x, draw):
        n = x.shape[0] if x.ndim > 1 else 1
        w = np.zeros((n, self.ambient_dim))
        w[:, 1:] = draw.reshape(n, self.intrinsic_dim)
        base = np.broadcast_to(self.base_point(), w.shape)
        return self.transport(base, x.reshape(n, -1), w)

    def geometric_noise(self, x, sigma, rng):
        draw = sigma * rng.standard_normal((len(x), self.intrinsic_dim))
        return self.exp_map(x, self._noise_tangent(x, draw))

    def geometric_noise_with_pullback(self, x, sigma, rng):
        draw = sigma * rng.standard_normal((len(x), self.intrinsic_dim))
        noisy = self.exp_map(x, self._noise_tangent(x, draw))
        return noisy, lambda upstream: self._transport_noise_pullback(x, draw, upstream)

    def _transport_noise_pullback(self, x, draw, upstream):
        # z' = exp_x(T(x)) with T(x) = w + phi(x)(b + x), w the tangent at
        # the base point b, phi = c <x,w>_L / (1 - c <b,x>_L); chain the
        # exp-map differential with dT/dx
        n = x.shape[0]
        w = np.zeros((n, self.ambient_dim))
        w[:, 1:] = draw
        b = np.broadcast_to(self.base_point(), x.shape)
        alpha = minkowski_inner(x, w)[..., None]
        delta = (1.0 - self.c * minkowski_inner(b, x))[..., None]
        phi = self.c * alpha / delta
        v = w + phi * (b + x)

        q = np.maximum(minkowski_inner(v, v), 0.0)[..., None]
        s = math.sqrt(self.c) * np.sqrt(q)
        safe_s = np.where(s > 0, s, 1.0)
        sinhc = np.where(s > 0, np.sinh(safe_s) / safe_s, 1.0)
        dsinhc = np.where(s > 0, (np.cosh(s) - sinhc) / safe_s, 0.0)
        g_dot_z = np.sum(upstream * x, axis=-1, keepdims=True)
        g_dot_v = np.sum(upstream * v, axis=-1, keepdims=True)
        beta = np.sinh(s) * g_dot_z + dsinhc * g_dot_v
        jv = np.array(v, copy=True)
        jv[..., 0] = -jv[..., 0]
        coeff = np.where(s > 0, beta * self.c / safe_s, 0.0)
        p = sinhc * upstream + coeff * jv  # covector hitting dv

        # dv = dphi (b + x) + phi dx, dphi = (c/delta)<dx,w>_L
        #                                   + (c^2 alpha/delta^2)<b,dx>_L
        jw = np.array(w, copy=True)
        jw[..., 0] = -jw[..., 0]
        jb = np.array(b, copy=True)
        jb[..., 0] = -jb[..., 0]
        p_dot_bx = np.sum(p * (b + x), axis=-1, keepdims=True)
        out = np.cosh(s) * upstream + phi * p
        out += p_dot_bx * (self.c / delta) * jw
        out += p_dot_bx * (self.c**2 * alpha / delta**2) * jb
        return out

    def point_violation(self, x):
        quad = float(np.max(np.abs(minkowski_inner(x, x) + 1.0 / self.c)))
        if not np.all(np.asarray(x)[..., 0] > 0):
            return math.inf
        return quad

    def tangent_violation(self, x, v):
        return float(np.max(np.abs(minkowski_inner(x, v))))


def lorentz_to_poincare(x: np.ndarray, c: float) -> np.ndarray:
    """Disk coordinates y = x_{1:} / (x0 + 1/sqrt(c)); always ||y|| < 1.

    These are the curvature-c ball coordinates rescaled by sqrt(c) so the
    image lands in the unit disk regardless of c.  Distances on images are
    recovered by :func:`poincare_distance` with the same c.
    """
    x = np.asarray(x, dtype=float)
    return x[..., 1:] / (x[..., 0:1] + 1.0 / math.sqrt(c))


def poincare_to_lorentz(y: np.ndarray, c: float) -> np.ndarray:
    """Exact inverse of :func:`lorentz_to_poincare`."""
    y = np.asarray(y, dtype=float)
    sc = math.sqrt(c)
    r2 = np.sum(y * y, axis=-1, keepdims=True)
    x0 = (1.0 + r2) / (sc * (1.0 - r2))
    spatial = 2.0 * y / (sc * (1.0 - r2))
    return np.concatenate([x0, spatial], axis=-1)


def poincare_distance(u: np.ndarray, v: np.ndarray, c: float = 1.0) -> np.ndarray:
    """Hyperbolic distance between unit-disk images of curvature-c points.

    d = arcosh(1 + 2||u-v||^2 / ((1-||u||^2)(1-||v||^2))) / sqrt(c)
    """
    diff2 = np.sum((u - v) ** 2, axis=-1)
    den = (1.0 - np.sum(u * u, axis=-1)) * (1.0 - np.sum(v * v, axis=-1))
    arg = np.maximum(1.0 + 2.0 * diff2 / den, 1.0)
    return np.arccosh(arg) / math.sqrt(c)


class Product(Manifold):
    """Cartesian product; all maps act factor-wise on coordinate slices."""

    def __init__(self, factors):
        self.parts = tuple(factors)
        self.spec = ManifoldSpec.product(*(f.spec for f in self.parts))
        self.is_compact = all(f.is_compact for f in self.parts)
        splits = np.cumsum([f.ambient_dim for f in self.parts])[:-1]
        self._splits = splits

    def _sliced(self, x):
        return np.split(x, self._splits, axis=-1)

    def project(self, ambient):
        ambient = np.asarray(ambient, dtype=float)
        return np.concatenate(
            [f.project(s) for f, s in zip(self.parts, self._sliced(ambient))], axis=-1
        )

    def exp_map(self, x, v):
        return np.concatenate(
            [f.exp_map(xs, vs) for f, xs, vs in zip(self.parts, self._sliced(x), self._sliced(v))],
            axis=-1,
        )

    def log_map(self, x, y):
        return np.concatenate(
            [f.log_map(xs, ys) for f, xs, ys in zip(self.parts, self._sliced(x), self._sliced(y))],
            axis=-1,
        )

    def egrad2rgrad(self, x, g):
        return np.concatenate(
            [f.egrad2rgrad(xs, gs) for f, xs, gs in zip(self.parts, self._sliced(x), self._sliced(g))],
            axis=-1,
        )

    def distance(self, x, y):
        d2 = sum(
            f.distance(xs, ys) ** 2
            for f, xs, ys in zip(self.parts, self._sliced(x), self._sliced(y))
        )
        return np.sqrt(d2)

    def transport(self, x, y, v):
        return np.concatenate(
            [
                f.transport(xs, ys, vs)
                for f, xs, ys, vs in zip(
                    self.parts, self._sliced(x), self._sliced(y), self._sliced(v)
                )
            ],
            axis=-1,
        )

    def inner(self, x, u, v):
        return sum(
            f.inner(xs, us, vs)
            for f, xs, us, vs in zip(self.parts, self._sliced(x), self._sliced(u), self._sliced(v))
        )

    def sample_uniform(self, n, rng):
        if not self.is_compact:
            raise UnsupportedSampling("product has a non-compact factor")
        return np.concatenate([f.sample_uniform(n, rng) for f in self.parts], axis=-1)

    def metric_at(self, x):
        if any(isinstance(f, Lorentz) for f in self.parts):
            raise NotImplementedError("chart metric for products with Lorentz factors")
        eye = np.eye(self.ambient_dim)
        return MetricAt(eye, eye.copy())

    def noise_pullback(self, x, eps0, upstream):
        return np.concatenate(
            [
                f.noise_pullback(xs, es, us)
                for f, xs, es, us in zip(
                    self.parts, self._sliced(x), self._sliced(eps0), self._sliced(upstream)
                )
            ],
            axis=-1,
        )

    def point_violation(self, x):
        return max(f.point_violation(s) for f, s in zip(self.parts, self._sliced(x)))

    def tangent_violation(self, x, v):
        return max(
            f.tangent_violation(xs, vs)
            for f, xs, vs in zip(self.parts, self._sliced(x), self._sliced(v))
        )


def build_manifold(spec: ManifoldSpec) -> Manifold:
    """Instantiate the geometry described by a ManifoldSpec."""
    if spec.kind == "euclidean":
        return Euclidean(spec.ambient_dim)
    if spec.kind == "sphere":
        return Sphere(spec.intrinsic_dim)
    if spec.kind == "lorentz":
        return Lorentz(spec.intrinsic_dim, spec.curvature)
    if spec.kind == "product":
        return Product([build_manifold(f) for f in spec.factors])
    raise ValueError(f"unknown manifold kind {spec.kind!r}")
