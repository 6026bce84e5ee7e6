"""
Pointwise Finsler tensor calculus on the sphere bundle.

All tensors are built from closed-form single-point functions of (x, y, t)
differentiated with nested ``jax.jacfwd``; grid-scale work goes through
:meth:`FinslerCalculus.evaluate`, which vectorizes a point function with
``jax.vmap``, compiles it once per metric and pads batches to power-of-two
sizes so compilation is reused.

Index conventions (arrays are indexed exactly in the order written):

- ``g[i, j] = g_ij``, ``cartan[i, j, k] = C_ijk``
- ``nonlinear[i, j] = N^i_j = ∂G^i/∂y^j``
- ``chern[i, j, k] = Γ^i_jk``
- ``curvature[i, j, k, l] = R_j^i_kl``
  = δ_kΓ^i_jl − δ_lΓ^i_jk + Γ^i_km Γ^m_jl − Γ^i_lm Γ^m_jk
- horizontal derivatives append the derivative index last:
  T_{a..|k} = δ_k T_{a..} − Σ_lower Γ^q_{a k} T_{..q..} + Σ_upper Γ^a_{q k} T^{..q..}
- vertical derivatives append the index last: T_{;k} = F ∂T/∂y^k
"""
import logging
import math

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from finsflow.errors import (
    ConfigurationError,
    DomainError,
    IntegrationQualityError,
    MetricAdmissibilityError,
    SmoothnessError,
)
from finsflow.metrics import MeasureSpec

DIMENSION = 2
CHUNK_SIZE = 8192
MIN_BUCKET = 16
MIN_SPHERE_SAMPLES = 4
GEODESIC_DRIFT_LIMIT = 1e-4
S_CURVATURE_STEP = 1e-3


def _bucket(size):
    return max(MIN_BUCKET, 1 << (size - 1).bit_length())


@dataclass(frozen=True)
class TensorEvaluator:
    """
    Sphere-bundle tensor given as a jax-traceable point function.

    :param fn: Function (x, y, t) -> array with one axis per index
    :param valence: One letter per index, ``l`` for lower and ``u`` for upper
    :param order: Number of derivatives of F already spent inside ``fn``
    :param name: Key under which the derivative kernels are compiled
    """
    fn: Callable
    valence: str = ""
    order: int = 0
    name: str = "tensor"


class FinslerCalculus:
    """
    Tensor calculus of one metric family and measure.

    :param metric: MetricFamily
    :param measure: MeasureSpec (defaults to Φ ≡ 0)
    """

    def __init__(self, metric, measure=None):
        self.metric = metric
        self.measure = measure if measure is not None else MeasureSpec()
        self._compiled = {}

    # Point functions: x (2,), y (2,), t scalar.

    def norm(self, x, y, t):
        return self.metric.norm(jnp, x, y, t)

    def energy(self, x, y, t):
        return self.norm(x, y, t) ** 2

    def energy_gradient(self, x, y, t):
        """Half the fiber gradient of F², the Legendre map y ↦ ξ."""
        return 0.5 * jax.jacfwd(self.energy, 1)(x, y, t)

    def fundamental(self, x, y, t):
        return 0.5 * jax.jacfwd(jax.jacfwd(self.energy, 1), 1)(x, y, t)

    def fundamental_inverse(self, x, y, t):
        return jnp.linalg.inv(self.fundamental(x, y, t))

    def cartan(self, x, y, t):
        return 0.25 * jax.jacfwd(jax.jacfwd(jax.jacfwd(self.energy, 1), 1), 1)(x, y, t)

    def spray(self, x, y, t):
        g = self.fundamental(x, y, t)
        # mixed[l, k] = ∂²F²/∂y^l∂x^k
        mixed = jax.jacfwd(jax.jacfwd(self.energy, 1), 0)(x, y, t)
        dx = jax.jacfwd(self.energy, 0)(x, y, t)
        return 0.25 * jnp.linalg.solve(g, mixed @ y - dx)

    def nonlinear(self, x, y, t):
        return jax.jacfwd(self.spray, 1)(x, y, t)

    def delta(self, fn, x, y, t, step=None):
        """
        δ_k T = ∂T/∂x^k − N^m_k ∂T/∂y^m, derivative index appended last.

        With ``step`` the partials are central differences instead of exact.
        """
        n = self.nonlinear(x, y, t)
        if step is None:
            dx = jax.jacfwd(fn, 0)(x, y, t)
            dy = jax.jacfwd(fn, 1)(x, y, t)
        else:
            basis = jnp.eye(DIMENSION) * step
            dx = jnp.stack(
                [(fn(x + basis[k], y, t) - fn(x - basis[k], y, t)) / (2.0 * step) for k in range(DIMENSION)],
                axis=-1
            )
            dy = jnp.stack(
                [(fn(x, y + basis[k], t) - fn(x, y - basis[k], t)) / (2.0 * step) for k in range(DIMENSION)],
                axis=-1
            )
        return dx - jnp.tensordot(dy, n, axes=([-1], [0]))

    def chern(self, x, y, t):
        g_inv = self.fundamental_inverse(x, y, t)
        # d[l, j, k] = δ_k g_lj
        d = self.delta(self.fundamental, x, y, t)
        combined = d + jnp.einsum("lkj->ljk", d) - jnp.einsum("jkl->ljk", d)
        return 0.5 * jnp.einsum("il,ljk->ijk", g_inv, combined)

    def horizontal(self, fn, valence, x, y, t, step=None):
        """
        Horizontal Chern derivative of a tensor with the given valence.
        """
        value = fn(x, y, t)
        result = self.delta(fn, x, y, t, step)
        gamma = self.chern(x, y, t)
        for position, kind in enumerate(valence):
            moved = jnp.moveaxis(value, position, -1)
            if kind == "l":
                # −Γ^q_{a k} T_{..q..}
                correction = jnp.tensordot(moved, gamma, axes=([-1], [0]))
                result = result - jnp.moveaxis(correction, -2, position)
            elif kind == "u":
                # +Γ^a_{q k} T^{..q..}
                correction = jnp.tensordot(moved, jnp.transpose(gamma, (1, 0, 2)), axes=([-1], [0]))
                result = result + jnp.moveaxis(correction, -2, position)
            else:
                raise DomainError(f"Valence letters must be 'l' or 'u', got {kind!r}.")
        return result

    def vertical(self, fn, x, y, t):
        return self.norm(x, y, t) * jax.jacfwd(fn, 1)(x, y, t)

    def curvature(self, x, y, t):
        gamma = self.chern(x, y, t)
        # d[i, j, l, k] = δ_k Γ^i_jl
        d = self.delta(self.chern, x, y, t)
        return (
            jnp.einsum("ijlk->ijkl", d) - d
            + jnp.einsum("ikm,mjl->ijkl", gamma, gamma)
            - jnp.einsum("ilm,mjk->ijkl", gamma, gamma)
        )

    def curvature_operator(self, x, y, t):
        """R^i_k = y^j R_j^i_kl y^l."""
        return jnp.einsum("j,ijkl,l->ik", y, self.curvature(x, y, t), y)

    def spray_curvature_operator(self, x, y, t):
        """
        Riemann curvature of the spray alone:
        R^i_k = 2∂_kG^i − y^j ∂²G^i/∂x^j∂y^k + 2G^j ∂²G^i/∂y^j∂y^k − N^i_j N^j_k.
        """
        spray = self.spray(x, y, t)
        n = self.nonlinear(x, y, t)
        dx = jax.jacfwd(self.spray, 0)(x, y, t)
        # n_dx[i, k, j] = ∂N^i_k/∂x^j, n_dy[i, k, j] = ∂N^i_k/∂y^j
        n_dx = jax.jacfwd(self.nonlinear, 0)(x, y, t)
        n_dy = jax.jacfwd(self.nonlinear, 1)(x, y, t)
        return (
            2.0 * dx - jnp.einsum("ikj,j->ik", n_dx, y)
            + 2.0 * jnp.einsum("ikj,j->ik", n_dy, spray) - n @ n
        )

    def _transverse_unit(self, x, y, t):
        g = self.fundamental(x, y, t)
        gy = g @ y
        e = jnp.stack([-gy[1], gy[0]])
        return g, e / jnp.sqrt(e @ g @ e)

    def ricci(self, x, y, t):
        """Ric(y) = F²(y) K(y, e) with e the g_y-unit vector g_y-orthogonal to y."""
        g, e = self._transverse_unit(x, y, t)
        return (g @ e) @ self.curvature_operator(x, y, t) @ e

    def spray_ricci(self, x, y, t):
        return jnp.trace(self.spray_curvature_operator(x, y, t))

    def flag(self, x, y, u, t):
        g = self.fundamental(x, y, t)
        numerator = (g @ u) @ self.curvature_operator(x, y, t) @ u
        denominator = self.energy(x, y, t) * (u @ g @ u) - (y @ g @ u) ** 2
        return numerator / denominator

    def tau(self, x, y, t):
        return 0.5 * jnp.log(jnp.linalg.det(self.fundamental(x, y, t))) - self.measure.weight(jnp, x)

    def tau_horizontal(self, x, y, t):
        return self.delta(self.tau, x, y, t)

    def s_curvature(self, x, y, t):
        """S = d/ds τ along the geodesic, i.e. y^m ∂_mτ − 2G^j ∂τ/∂y^j."""
        return self._along_spray(self.tau, x, y, t)

    def s_curvature_rate(self, x, y, t):
        return self._along_spray(self.s_curvature, x, y, t)

    def _along_spray(self, fn, x, y, t):
        spray = self.spray(x, y, t)
        return jax.jacfwd(fn, 0)(x, y, t) @ y - 2.0 * spray @ jax.jacfwd(fn, 1)(x, y, t)

    def measure_terms(self, x, y, t):
        """Stack (τ, S, Ṡ, Ric) through the spray route."""
        return jnp.stack([
            self.tau(x, y, t), self.s_curvature(x, y, t), self.s_curvature_rate(x, y, t), self.ricci(x, y, t)
        ])

    # Batched evaluation.

    def evaluate(self, name, *arrays, fn=None):
        """
        Evaluate a point function over a batch of samples.

        :param name: Method name, or cache key when ``fn`` is given
        :param arrays: Batched arguments with a common leading axis
        :param fn: Optional point function to compile under ``name``
        :return: Numpy array(s) with the leading batch axis
        """
        arrays = [np.asarray(a, dtype=float) for a in arrays]
        size = arrays[0].shape[0]
        if size == 0:
            raise DomainError(f"Cannot evaluate '{name}' on an empty batch.")
        compiled = self._compiled.get(name)
        if compiled is None:
            logging.info(f"Compiling '{name}' kernel for {self.metric.kind} metric.")
            compiled = jax.jit(jax.vmap(fn if fn is not None else getattr(self, name)))
            self._compiled[name] = compiled
        outputs = []
        for start in range(0, size, CHUNK_SIZE):
            chunk = [a[start:start + CHUNK_SIZE] for a in arrays]
            count = chunk[0].shape[0]
            padded = _bucket(count)
            if padded != count:
                chunk = [np.concatenate([c, np.repeat(c[:1], padded - count, axis=0)]) for c in chunk]
            outputs.append(jax.tree_util.tree_map(lambda o: np.asarray(o)[:count], compiled(*chunk)))
        if len(outputs) == 1:
            return outputs[0]
        return jax.tree_util.tree_map(lambda *parts: np.concatenate(parts), *outputs)

    def tensor(self, name):
        """
        Standard tensors as TensorEvaluator instances.
        """
        table = {
            "fundamental": (self.fundamental, "ll", 2),
            "fundamental_inverse": (self.fundamental_inverse, "uu", 2),
            "tau": (self.tau, "", 2),
            "energy_gradient": (self.energy_gradient, "l", 1),
        }
        fn, valence, order = table[name]
        return TensorEvaluator(fn, valence, order, name)


@lru_cache(maxsize=16)
def calculus_for(metric, measure=None):
    """
    Cached FinslerCalculus for a (metric, measure) pair.
    """
    return FinslerCalculus(metric, measure)


def _batch(x, y, t):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],)).copy()
    return x, y, t


def _require_nonzero(y):
    if np.any(np.linalg.norm(np.atleast_2d(y), axis=-1) == 0.0):
        raise DomainError("Direction y must be non-zero.")


def invert_2x2(g):
    """
    Direct inverse of (..., 2, 2) matrices through the adjugate.
    """
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    adj = np.stack([
        np.stack([g[..., 1, 1], -g[..., 0, 1]], axis=-1),
        np.stack([-g[..., 1, 0], g[..., 0, 0]], axis=-1),
    ], axis=-2)
    return adj / det[..., None, None]


@dataclass(frozen=True)
class FundamentalData:
    g: np.ndarray
    g_inverse: np.ndarray
    cartan: np.ndarray


@dataclass(frozen=True)
class ConnectionData:
    spray: np.ndarray
    nonlinear: np.ndarray
    chern: np.ndarray


@dataclass(frozen=True)
class CurvatureData:
    curvature: np.ndarray
    ricci: float
    flag: float = None


@dataclass(frozen=True)
class MeasureGeometry:
    tau: float
    s: float
    s_dot: float
    ricci: float
    ricci_n: float
    ricci_infinity: float
    N: float


@dataclass(frozen=True)
class SphereBundlePointData:
    """
    Cached tensor package at one (x, y, t).
    """
    x: np.ndarray
    y: np.ndarray
    t: float
    g: np.ndarray
    g_inverse: np.ndarray
    cartan: np.ndarray
    spray: np.ndarray
    nonlinear: np.ndarray
    chern: np.ndarray
    curvature: np.ndarray
    ricci: float
    tau: float
    s: float
    s_dot: float
    ricci_n: float


def eval_fundamental(metric, x, y, t):
    """
    Fundamental tensor, its inverse and the Cartan tensor at (x, y, t).

    :raises DomainError: If y = 0
    :raises MetricAdmissibilityError: If g is not positive definite
    """
    _require_nonzero(y)
    calc = calculus_for(metric)
    xs, ys, ts = _batch(x, y, t)
    g = calc.evaluate("fundamental", xs, ys, ts)[0]
    if np.min(np.linalg.eigvalsh(g)) <= 0.0:
        raise MetricAdmissibilityError(f"Fundamental tensor is not positive definite at x={x}, y={y}, t={t}.")
    cartan = calc.evaluate("cartan", xs, ys, ts)[0]
    return FundamentalData(g, invert_2x2(g), cartan)


def eval_connection(metric, x, y, t):
    """
    Spray, nonlinear connection and Chern connection coefficients at (x, y, t).
    """
    _require_nonzero(y)
    calc = calculus_for(metric)
    xs, ys, ts = _batch(x, y, t)
    return ConnectionData(
        calc.evaluate("spray", xs, ys, ts)[0],
        calc.evaluate("nonlinear", xs, ys, ts)[0],
        calc.evaluate("chern", xs, ys, ts)[0],
    )


def _independent(y, u):
    cross = y[0] * u[1] - y[1] * u[0]
    return abs(cross) > 1e-12 * np.linalg.norm(y) * np.linalg.norm(u)


def eval_curvature(metric, x, y, t, flag_direction=None):
    """
    Chern curvature, Finsler Ricci scalar and optionally the flag curvature K(y, u).

    :raises DomainError: If y = 0 or the flag direction is parallel to y
    """
    _require_nonzero(y)
    calc = calculus_for(metric)
    xs, ys, ts = _batch(x, y, t)
    flag = None
    if flag_direction is not None:
        u = np.asarray(flag_direction, dtype=float)
        if not _independent(np.asarray(y, dtype=float), u):
            raise DomainError("Flag direction must be linearly independent of y.")
        flag = float(calc.evaluate("flag", xs, ys, np.atleast_2d(u), ts)[0])
    return CurvatureData(
        calc.evaluate("curvature", xs, ys, ts)[0],
        float(calc.evaluate("ricci", xs, ys, ts)[0]),
        flag,
    )


def flag_curvature(metric, x, y, u, t):
    return eval_curvature(metric, x, y, t, flag_direction=u).flag


def spray_ricci(metric, x, y, t):
    """
    Ricci scalar from the trace of the spray curvature operator.
    """
    _require_nonzero(y)
    xs, ys, ts = _batch(x, y, t)
    return float(calculus_for(metric).evaluate("spray_ricci", xs, ys, ts)[0])


def weighted_ricci(ricci, s, s_dot, N, n=DIMENSION):
    """
    Ric^N from Ric, S and Ṡ; arrays broadcast.

    N = inf gives Ric + Ṡ.

    :raises DomainError: If N ≤ n
    """
    if N <= n:
        raise DomainError(f"N must be > n = {n}, got {N}.")
    ricci_infinity = np.asarray(ricci) + np.asarray(s_dot)
    if math.isinf(N):
        return ricci_infinity
    return ricci_infinity - np.asarray(s) ** 2 / (N - n)


def _geodesic_rk4(calc, x, y, t, step, steps):
    step = np.asarray(step, dtype=float)[:, None]
    xs, ys = [x], [y]

    def rhs(px, py):
        return py, -2.0 * calc.evaluate("spray", px, py, t)

    for _ in range(steps):
        k1x, k1y = rhs(x, y)
        k2x, k2y = rhs(x + 0.5 * step * k1x, y + 0.5 * step * k1y)
        k3x, k3y = rhs(x + 0.5 * step * k2x, y + 0.5 * step * k2y)
        k4x, k4y = rhs(x + step * k3x, y + step * k3y)
        x = x + step / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y = y + step / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        xs.append(x)
        ys.append(y)
    return np.stack(xs, axis=1), np.stack(ys, axis=1)


@dataclass(frozen=True)
class GeodesicPath:
    points: np.ndarray
    velocities: np.ndarray
    norms: np.ndarray
    drift: float


def integrate_geodesic(metric, x, y, t, step, steps):
    """
    Classical fourth-order Runge–Kutta integration of ẋ = y, ẏ = −2G(x, y).

    The step is a step in the curve parameter; for F(x, y; t) = 1 it equals
    the arclength step. Negative steps integrate backwards.

    :raises DomainError: If y = 0
    :raises IntegrationQualityError: If F drifts by more than 1e-4 relative
    """
    _require_nonzero(y)
    calc = calculus_for(metric)
    xs, ys, ts = _batch(x, y, t)
    points, velocities = _geodesic_rk4(calc, xs, ys, ts, [step], int(steps))
    points, velocities = points[0], velocities[0]
    norms = metric.norm(np, points, velocities, t)
    drift = float(np.max(np.abs(norms - norms[0])) / norms[0])
    if drift > GEODESIC_DRIFT_LIMIT:
        raise IntegrationQualityError(f"Geodesic F drift {drift:.3g} exceeds {GEODESIC_DRIFT_LIMIT}.", drift)
    return GeodesicPath(points, velocities, norms, drift)


def sphere_sample(metric, x, t, count):
    """
    Angularly equispaced directions rescaled onto the unit F-sphere at (x, t).

    :raises ConfigurationError: If count is below the minimum
    """
    if count < MIN_SPHERE_SAMPLES:
        raise ConfigurationError(
            f"estimate.directions must be >= {MIN_SPHERE_SAMPLES}, got {count}.", "estimate.directions"
        )
    theta = 2.0 * np.pi * np.arange(count) / count
    directions = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    x = np.broadcast_to(np.asarray(x, dtype=float), directions.shape)
    return directions / metric.norm(np, x, directions, t)[:, None]


def geodesic_s_curvature(calc, x, y, t, step=S_CURVATURE_STEP):
    """
    S and Ṡ by five-point stencils of τ along the geodesic through (x, y).

    :param calc: FinslerCalculus
    :param x: Base points (B, 2)
    :param y: Directions (B, 2)
    :param t: Times (B,)
    :param step: Arclength step
    :return: Tuple (S, Ṡ) of arrays (B,)
    """
    size = x.shape[0]
    h = step / calc.metric.norm(np, x, y, t)
    points, velocities = _geodesic_rk4(
        calc, np.concatenate([x, x]), np.concatenate([y, y]), np.concatenate([t, t]),
        np.concatenate([h, -h]), 2
    )
    forward_x, backward_x = points[:size], points[size:]
    forward_y, backward_y = velocities[:size], velocities[size:]
    samples = [
        (backward_x[:, 2], backward_y[:, 2]), (backward_x[:, 1], backward_y[:, 1]), (x, y),
        (forward_x[:, 1], forward_y[:, 1]), (forward_x[:, 2], forward_y[:, 2]),
    ]
    tau = np.stack([calc.evaluate("tau", px, py, t) for px, py in samples])
    s = (tau[0] - 8.0 * tau[1] + 8.0 * tau[3] - tau[4]) / (12.0 * h)
    s_dot = (-tau[0] + 16.0 * tau[1] - 30.0 * tau[2] + 16.0 * tau[3] - tau[4]) / (12.0 * h ** 2)
    return s, s_dot


def eval_measure_geometry(metric, measure, x, y, t, N, method="geodesic"):
    """
    Distortion, S-curvature, its derivative along the geodesic and Ric^N.

    :param method: ``geodesic`` (finite differences along the integrated
        geodesic) or ``spray`` (exact derivative along the spray)
    :raises DomainError: If y = 0 or N ≤ n
    """
    _require_nonzero(y)
    if N <= DIMENSION:
        raise DomainError(f"N must be > n = {DIMENSION}, got {N}.")
    calc = calculus_for(metric, measure)
    xs, ys, ts = _batch(x, y, t)
    tau, s_spray, s_dot_spray, ricci = calc.evaluate("measure_terms", xs, ys, ts)[0]
    if method == "geodesic":
        s, s_dot = (float(v[0]) for v in geodesic_s_curvature(calc, xs, ys, ts))
    elif method == "spray":
        s, s_dot = float(s_spray), float(s_dot_spray)
    else:
        raise ConfigurationError(f"Unknown S-curvature method {method!r}.")
    ricci_n = float(weighted_ricci(ricci, s, s_dot, N))
    return MeasureGeometry(float(tau), s, s_dot, float(ricci), ricci_n, float(ricci + s_dot), N)


def evaluate_point(metric, measure, x, y, t, N=math.inf):
    """
    Assemble the full SphereBundlePointData at (x, y, t).
    """
    fundamental = eval_fundamental(metric, x, y, t)
    connection = eval_connection(metric, x, y, t)
    curvature = eval_curvature(metric, x, y, t)
    geometry = eval_measure_geometry(metric, measure, x, y, t, N)
    return SphereBundlePointData(
        np.asarray(x, dtype=float), np.asarray(y, dtype=float), float(t),
        fundamental.g, fundamental.g_inverse, fundamental.cartan,
        connection.spray, connection.nonlinear, connection.chern,
        curvature.curvature, curvature.ricci,
        geometry.tau, geometry.s, geometry.s_dot, geometry.ricci_n,
    )


@dataclass(frozen=True)
class ChernDerivatives:
    horizontal: np.ndarray
    vertical: np.ndarray


def chern_derivatives_batch(metric, tensor, x, y, t, step=None, measure=None):
    """
    Horizontal and vertical Chern derivatives of ``tensor`` over a batch.

    :param tensor: TensorEvaluator
    :param step: None for exact partials, otherwise the central-difference step
    :return: ChernDerivatives with batched arrays
    :raises SmoothnessError: If the derivative exceeds the family's smoothness promise
    """
    if tensor.order + 1 > metric.smoothness:
        raise SmoothnessError(
            f"Derivative of '{tensor.name}' needs order {tensor.order + 1}, "
            f"family promises {metric.smoothness}."
        )
    calc = calculus_for(metric, measure)
    xs, ys, ts = _batch(x, y, t)
    key = f"chern_derivatives:{tensor.name}:{tensor.valence}:{step}"

    def point(px, py, pt):
        return (
            calc.horizontal(tensor.fn, tensor.valence, px, py, pt, step),
            calc.vertical(tensor.fn, px, py, pt),
        )

    horizontal, vertical = calc.evaluate(key, xs, ys, ts, fn=point)
    return ChernDerivatives(horizontal, vertical)


def chern_derivatives(metric, tensor, x, y, t, step=None, measure=None):
    """
    Horizontal (·_|k) and vertical (·_;k) Chern derivatives of ``tensor`` at (x, y, t).
    """
    _require_nonzero(y)
    batch = chern_derivatives_batch(metric, tensor, x, y, t, step, measure)
    return ChernDerivatives(batch.horizontal[0], batch.vertical[0])
