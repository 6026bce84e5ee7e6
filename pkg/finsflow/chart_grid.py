"""
Periodic chart of the 2-torus with finite-difference calculus, quadrature and
curve-length evaluation.

Axis indices are 0-based: axis 0 is the x¹ direction, axis 1 the x² direction.
Grid arrays have shape ``grid.shape`` (row index along x¹), optionally followed
by component axes.
"""
import math

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from scipy import integrate as sp_integrate
from scipy import ndimage

from finsflow.errors import ConfigurationError, DomainError

MIN_RESOLUTION = 16
MIN_CURVE_SAMPLES = 32
MASK_TOLERANCE = 1e-10


@dataclass(frozen=True)
class GridSpec:
    """
    Uniform periodic grid on [0, period¹) × [0, period²).
    """
    resolution: tuple
    period: tuple = (2 * math.pi, 2 * math.pi)

    @property
    def shape(self):
        return tuple(int(r) for r in self.resolution)

    @property
    def spacing(self):
        return tuple(p / r for p, r in zip(self.period, self.resolution))

    @property
    def size(self):
        return self.shape[0] * self.shape[1]

    @property
    def cell_volume(self):
        return self.spacing[0] * self.spacing[1]

    def axes(self):
        """
        Return the node coordinates along each axis.
        """
        return tuple(np.arange(r) * h for r, h in zip(self.shape, self.spacing))

    def coordinates(self):
        """
        Return the node coordinate arrays (X¹, X²), each of shape ``self.shape``.
        """
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self):
        """
        Return all nodes as an array of shape (size, 2) in row-major order.
        """
        x1, x2 = self.coordinates()
        return np.stack([x1.ravel(), x2.ravel()], axis=-1)

    def node_point(self, node):
        return np.array([node[0] * self.spacing[0], node[1] * self.spacing[1]])

    def refined(self, factor):
        return GridSpec(tuple(int(r * factor) for r in self.resolution), self.period)

    def __repr__(self):
        return f"<GridSpec(resolution={self.shape!r}, period={self.period!r})>"


def build_grid(resolution, period=(2 * math.pi, 2 * math.pi)):
    """
    Build a periodic grid.

    :param resolution: Number of nodes per axis
    :param period: Period per axis in radians
    :return: GridSpec instance
    :raises ConfigurationError: If a resolution is below the minimum or a period is not positive
    """
    resolution = tuple(int(r) for r in resolution)
    period = tuple(float(p) for p in period)
    if len(resolution) != 2 or len(period) != 2:
        raise ConfigurationError("grid must be two-dimensional.", "grid.resolution")
    if min(resolution) < MIN_RESOLUTION:
        raise ConfigurationError(
            f"grid.resolution must be >= {MIN_RESOLUTION} on each axis, got {resolution}.",
            "grid.resolution"
        )
    if min(period) <= 0.0:
        raise ConfigurationError(f"grid.period must be positive, got {period}.", "grid.period")
    return GridSpec(resolution, period)


@dataclass(frozen=True)
class TrigMode:
    """
    One term ``amplitude * cos(k1 x¹ + k2 x²)`` (or ``sin``) of a trigonometric series.
    """
    amplitude: float
    k1: int = 0
    k2: int = 0
    kind: str = "cos"

    def phase(self, xp, x):
        return self.k1 * x[..., 0] + self.k2 * x[..., 1]

    def value(self, xp, x):
        theta = self.phase(xp, x)
        return self.amplitude * (xp.cos(theta) if self.kind == "cos" else xp.sin(theta))

    def gradient(self, xp, x):
        theta = self.phase(xp, x)
        d = -xp.sin(theta) if self.kind == "cos" else xp.cos(theta)
        return xp.stack([self.amplitude * self.k1 * d, self.amplitude * self.k2 * d], axis=-1)


@dataclass(frozen=True)
class TrigSeries:
    """
    Closed-form periodic field ``base + Σ modes``.
    """
    base: float = 0.0
    modes: tuple = ()

    def value(self, xp, x):
        total = self.base + 0.0 * x[..., 0]
        for mode in self.modes:
            total = total + mode.value(xp, x)
        return total

    def gradient(self, xp, x):
        total = 0.0 * x
        for mode in self.modes:
            total = total + mode.gradient(xp, x)
        return total

    def sup_bound(self):
        return abs(self.base) + sum(abs(m.amplitude) for m in self.modes)

    def on_grid(self, grid, time=0.0):
        return ScalarField(grid, self.value(np, np.stack(grid.coordinates(), axis=-1)), time)


def periodic_derivative(values, spacing, axis, order=1):
    """
    Fourth-order central difference of a grid array with periodic wraparound.

    :param values: Array whose leading two axes are the grid axes
    :param spacing: Grid spacing along ``axis``
    :param axis: Grid axis (0 or 1)
    :param order: Derivative order, 1 or 2
    :return: Array of the same shape
    """
    p1 = np.roll(values, -1, axis=axis)
    p2 = np.roll(values, -2, axis=axis)
    m1 = np.roll(values, 1, axis=axis)
    m2 = np.roll(values, 2, axis=axis)
    if order == 1:
        return (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * spacing)
    if order == 2:
        return (-p2 + 16.0 * p1 - 30.0 * values + 16.0 * m1 - m2) / (12.0 * spacing ** 2)
    raise DomainError(f"Derivative order must be 1 or 2, got {order}.")


def grid_differential(grid, values):
    """
    Return the discrete differential of a grid array, shape ``grid.shape + (2,)``.
    """
    return np.stack([periodic_derivative(values, grid.spacing[a], a) for a in range(2)], axis=-1)


def grid_second_derivatives(grid, values):
    """
    Return the matrix of second partials ∂_i∂_j of a grid array, shape ``grid.shape + (2, 2)``.

    Diagonal entries use the second-order stencil, the mixed entry composes two
    first-order stencils.
    """
    h = grid.spacing
    d11 = periodic_derivative(values, h[0], 0, 2)
    d22 = periodic_derivative(values, h[1], 1, 2)
    d12 = periodic_derivative(periodic_derivative(values, h[0], 0), h[1], 1)
    return np.stack([np.stack([d11, d12], axis=-1), np.stack([d12, d22], axis=-1)], axis=-2)


def covector_mask(grid, values, tolerance=MASK_TOLERANCE):
    """
    Discrete M_f: nodes where the differential exceeds ``tolerance`` × sup|f|.
    """
    values = np.asarray(values, dtype=float)
    finite = np.isfinite(values)
    scale = np.max(np.abs(values[finite])) if finite.any() else 0.0
    norm = np.linalg.norm(grid_differential(grid, np.where(finite, values, 0.0)), axis=-1)
    return finite & (norm > tolerance * scale)


@dataclass
class ScalarField:
    """
    Grid-sampled real field at one flow time.
    """
    grid: GridSpec
    values: np.ndarray
    time: float = 0.0
    mask_tolerance: float = MASK_TOLERANCE

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.size != self.grid.size:
            raise DomainError(f"Field has {values.size} values, grid has {self.grid.size} nodes.")
        self.values = values.reshape(self.grid.shape)

    @cached_property
    def differential(self):
        return grid_differential(self.grid, self.values)

    @cached_property
    def mask(self):
        return covector_mask(self.grid, self.values, self.mask_tolerance)

    def with_values(self, values):
        return ScalarField(self.grid, values, self.time, self.mask_tolerance)

    def sup_norm(self):
        finite = np.isfinite(self.values)
        return float(np.max(np.abs(self.values[finite]))) if finite.any() else 0.0

    @classmethod
    def from_function(cls, grid, function, time=0.0):
        """
        Sample ``function(x1, x2)`` on the grid nodes.
        """
        x1, x2 = grid.coordinates()
        return cls(grid, function(x1, x2), time)


@dataclass
class VectorField:
    """
    Grid-sampled vector field, ``values`` of shape ``grid.shape + (2,)``.
    """
    grid: GridSpec
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape + (2,))

    def nonzero(self):
        return np.linalg.norm(self.values, axis=-1) > 0.0


def fd_derivative(field, axis, order=1):
    """
    Fourth-order periodic finite-difference derivative of a scalar field.

    :param field: ScalarField
    :param axis: 0 for x¹, 1 for x²
    :param order: 1 or 2
    :return: ScalarField with the derivative values
    :raises DomainError: If the axis is out of range
    """
    if axis not in (0, 1):
        raise DomainError(f"Axis must be 0 or 1, got {axis}.")
    return field.with_values(periodic_derivative(field.values, field.grid.spacing[axis], axis, order))


def integrate(field, measure):
    """
    Rectangle-rule quadrature of ``field`` against dμ = e^Φ dx.

    :param field: ScalarField
    :param measure: MeasureSpec sharing the field's grid
    :return: Value of the integral
    """
    weight = np.exp(measure.samples(field.grid).phi)
    return float(np.sum(field.values * weight) * field.grid.cell_volume)


def safe_nodes(grid, differential, fraction, margin):
    """
    Nodes safely away from critical points of a field.

    Keeps nodes whose covector norm is at least ``fraction`` × its sup, then
    erodes the kept set by ``margin`` nodes along each axis.

    :param grid: GridSpec
    :param differential: Covector array of shape ``grid.shape + (2,)``
    :param fraction: Relative threshold in [0, 1)
    :param margin: Erosion width in nodes
    :return: Boolean array of shape ``grid.shape``
    """
    norm = np.linalg.norm(differential, axis=-1)
    scale = float(np.max(norm)) if norm.size else 0.0
    if scale == 0.0:
        return np.zeros(grid.shape, dtype=bool)
    keep = norm >= fraction * scale
    if margin > 0:
        footprint = np.ones((2 * margin + 1, 2 * margin + 1), dtype=bool)
        keep = ndimage.minimum_filter(keep.astype(np.uint8), footprint=footprint, mode="wrap") > 0
    return keep


def stencil_shadow(mask, radius=2):
    """
    Nodes whose divergence stencil touches a node outside ``mask``.
    """
    footprint = np.zeros((2 * radius + 1, 2 * radius + 1), dtype=bool)
    footprint[radius, :] = True
    footprint[:, radius] = True
    return ndimage.maximum_filter((~mask).astype(np.uint8), footprint=footprint, mode="wrap") > 0


def interpolate(grid, values, points):
    """
    Periodic cubic-spline interpolation of a grid array at arbitrary chart points.

    :param grid: GridSpec
    :param values: Array of shape ``grid.shape``
    :param points: Array of shape (..., 2)
    :return: Interpolated values of shape points.shape[:-1]
    """
    points = np.asarray(points, dtype=float)
    coords = np.stack([points[..., a].ravel() / grid.spacing[a] for a in range(2)])
    out = ndimage.map_coordinates(np.asarray(values, dtype=float), coords, order=3, mode="grid-wrap")
    return out.reshape(points.shape[:-1])


@dataclass(frozen=True)
class CurveSpec:
    """
    Straight chart curve η from x₂ = η(0) to x₁ = η(1), traversed backwards in
    time from t₂ to t₁ along ξ(s) = (1 − s)·t₂ + s·t₁.

    ``warp`` reparameterizes s ↦ r(s) = s + warp·sin(2πs)/(2π) in both the
    path and the time; it keeps the endpoints and requires |warp| < 1.
    """
    start: tuple
    end: tuple
    t1: float = 0.0
    t2: float = 0.0
    samples: int = 65
    warp: float = 0.0

    def __post_init__(self):
        if self.samples < MIN_CURVE_SAMPLES:
            raise ConfigurationError(
                f"harnack.curve_samples must be >= {MIN_CURVE_SAMPLES}, got {self.samples}.",
                "harnack.curve_samples"
            )
        if abs(self.warp) >= 1.0:
            raise ConfigurationError(f"Curve warp must satisfy |warp| < 1, got {self.warp}.")

    def parameters(self):
        return np.linspace(0.0, 1.0, self.samples)

    def _reparameterize(self, s):
        r = s + self.warp * np.sin(2.0 * np.pi * s) / (2.0 * np.pi)
        dr = 1.0 + self.warp * np.cos(2.0 * np.pi * s)
        return r, dr

    def points(self, s):
        r, _ = self._reparameterize(np.asarray(s, dtype=float))
        start, end = np.asarray(self.start, dtype=float), np.asarray(self.end, dtype=float)
        return start + r[..., None] * (end - start)

    def velocities(self, s):
        _, dr = self._reparameterize(np.asarray(s, dtype=float))
        start, end = np.asarray(self.start, dtype=float), np.asarray(self.end, dtype=float)
        return dr[..., None] * (end - start)

    def times(self, s):
        r, _ = self._reparameterize(np.asarray(s, dtype=float))
        return (1.0 - r) * self.t2 + r * self.t1


def curve_length(curve, metric, power=1):
    """
    Simpson quadrature of ∫₀¹ F^power(η(s), η̇(s); ξ(s)) ds.

    :param curve: CurveSpec
    :param metric: MetricFamily
    :param power: 1 for length, 2 for energy
    :return: Quadrature value
    :raises DomainError: If power is not 1 or 2
    """
    if power not in (1, 2):
        raise DomainError(f"Curve power must be 1 or 2, got {power}.")
    s = curve.parameters()
    speed = metric.norm(np, curve.points(s), curve.velocities(s), curve.times(s))
    return float(sp_integrate.simpson(speed ** power, x=s))
