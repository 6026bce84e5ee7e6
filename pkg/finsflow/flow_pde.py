"""
Measure-weighted divergence, the nonlinear Finsler Laplacian and its
linearization, the flow tensor package derived from h = −½ ∂_t g, the J
functional, the heat-flow integrator and the σ / 𝓕 fields.

The flow is prescribed by the closed-form family F(x, y; t); h is derived
from it, so the flow equation ∂_t g = −2h holds by construction.
"""
import logging
import math

from dataclasses import dataclass
from enum import Enum

import jax
import jax.numpy as jnp
import numpy as np

from finsflow.chart_grid import (
    ScalarField,
    VectorField,
    covector_mask,
    integrate,
    periodic_derivative,
    stencil_shadow,
)
from finsflow.errors import ConfigurationError, DomainError, PositivityError
from finsflow.finsler_core import _batch, _require_nonzero, calculus_for
from finsflow.legendre_gradient import (
    DEFAULT_SOLVE,
    dual_norm,
    gradient_from_differential,
    gradient_field,
    hessian_field,
    linearized_inverse_field,
)

TIME_STEP = 1e-5
DEFAULT_CFL = 0.2
CFL_DIRECTIONS = 16
CFL_MAX_NODES = 1024


class TimeDerivative(str, Enum):
    EXACT = "exact"
    DIFFERENCE = "difference"


def divergence_mu(measure, V):
    """
    div_μ V = e^{−Φ} ∂_i(e^Φ V^i), the conservative form of ∂_i V^i + V^i Φ_i.

    :param measure: MeasureSpec
    :param V: VectorField
    :return: ScalarField
    """
    grid = V.grid
    weight = np.exp(measure.samples(grid).phi)
    total = sum(periodic_derivative(weight * V.values[..., a], grid.spacing[a], a) for a in range(2))
    return ScalarField(grid, total / weight, V.time)


def laplacian_with_gradient(metric, measure, u, t, config=DEFAULT_SOLVE, initial=None):
    """
    Nonlinear Laplacian Δu = div_μ(∇u) together with the gradient it used.

    :return: Tuple (ScalarField, GradientField)
    """
    gradient = gradient_field(metric, u, t, config, initial)
    return divergence_mu(measure, gradient.vector), gradient


def finsler_laplacian(metric, measure, u, t, config=DEFAULT_SOLVE, initial=None):
    """
    Finsler Laplacian Δu = div_μ(∇u) with zero flux where du = 0.

    :param metric: MetricFamily
    :param measure: MeasureSpec
    :param u: ScalarField
    :param t: Flow time
    :return: ScalarField
    """
    return laplacian_with_gradient(metric, measure, u, t, config, initial)[0]


def linearized_laplacian(metric, measure, reference, v, t):
    """
    Δ^V v = div_μ(g^{ij}(x, V) v_i ∂_j) with coefficients frozen at the reference field.

    Nodes whose divergence stencil reaches a node with V = 0 are excluded and
    carry NaN.

    :param reference: VectorField V
    :param v: ScalarField
    :return: ScalarField
    """
    grid = v.grid
    g_inv = linearized_inverse_field(metric, grid, reference, t)
    flux = np.einsum("...ij,...i->...j", g_inv, v.differential)
    defined = np.all(np.isfinite(flux), axis=-1)
    flux = np.where(defined[..., None], flux, 0.0)
    values = divergence_mu(measure, VectorField(grid, flux, t)).values
    values[stencil_shadow(defined)] = np.nan
    return ScalarField(grid, values, t)


@dataclass
class FlowTensorPackage:
    """
    Flow tensors at (x, y, t); every field may carry leading batch axes.

    ``h`` is h_ij, ``h_raised`` is h^{ij}, ``trace_form`` is the 1-form
    h^i_{j|i}, ``raised_vertical[..., i, j, k]`` is h^{ij}_{;k}.
    """
    h: np.ndarray
    h_raised: np.ndarray
    h_of_y: np.ndarray
    H: np.ndarray
    trace_form: np.ndarray
    raised_vertical: np.ndarray
    hs_norm: np.ndarray
    vertical_hs_norm: np.ndarray
    trace_dual_norm: np.ndarray
    one_sided: bool = False
    method: str = TimeDerivative.EXACT.value


def _flow_functions(calc, mode, step):
    def h_lower(x, y, t):
        if mode == "exact":
            return -0.5 * jax.jacfwd(calc.fundamental, 2)(x, y, t)
        if mode == "central":
            return -0.25 * (calc.fundamental(x, y, t + step) - calc.fundamental(x, y, t - step)) / step
        return -0.5 * (calc.fundamental(x, y, t + step) - calc.fundamental(x, y, t)) / step

    def h_upper(x, y, t):
        g_inv = calc.fundamental_inverse(x, y, t)
        return g_inv @ h_lower(x, y, t) @ g_inv

    return h_lower, h_upper


def _flow_mode(method, t, step):
    method = TimeDerivative(method).value
    if method == TimeDerivative.EXACT.value:
        return "exact", False
    one_sided = bool(np.min(t) < step)
    return ("forward" if one_sided else "central"), one_sided


def _flow_package_point(calc, mode, step):
    h_lower, h_upper = _flow_functions(calc, mode, step)

    def package(x, y, t):
        g = calc.fundamental(x, y, t)
        g_inv = jnp.linalg.inv(g)
        h = h_lower(x, y, t)
        h_up = g_inv @ h @ g_inv
        # d[a, b, k] = h_ab|k
        d = calc.horizontal(h_lower, "ll", x, y, t)
        vertical = calc.vertical(h_upper, x, y, t)
        h_y = y @ h @ y
        return {
            "h": h,
            "h_raised": h_up,
            "h_of_y": h_y,
            "H": h_y / calc.energy(x, y, t),
            "trace_form": jnp.einsum("ia,aji->j", g_inv, d),
            "raised_vertical": vertical,
            "hs_norm": jnp.sqrt(jnp.maximum(jnp.einsum("ik,jl,ij,kl->", g_inv, g_inv, h, h), 0.0)),
            "vertical_hs_norm": jnp.sqrt(
                jnp.maximum(jnp.einsum("ij,kl,mh,ikm,jlh->", g, g, g_inv, vertical, vertical), 0.0)
            ),
        }

    return package


def flow_tensor_batch(metric, x, y, t, method=TimeDerivative.EXACT.value, step=TIME_STEP, measure=None):
    """
    Flow tensor package over a batch of sphere-bundle samples.

    :param method: ``exact`` (forward-mode ∂_t) or ``difference`` (central in t,
        one-sided forward when t < step)
    :return: FlowTensorPackage with batched arrays
    """
    x, y, t = _batch(x, y, t)
    calc = calculus_for(metric, measure)
    mode, one_sided = _flow_mode(method, t, step)
    if one_sided:
        logging.warning(f"Flow tensor time derivative is one-sided at t < {step}; first order only.")
    parts = calc.evaluate(f"flow_package:{mode}:{step}", x, y, t, fn=_flow_package_point(calc, mode, step))
    trace_dual = dual_norm(metric, x, t, parts["trace_form"])
    return FlowTensorPackage(
        parts["h"], parts["h_raised"], parts["h_of_y"], parts["H"], parts["trace_form"],
        parts["raised_vertical"], parts["hs_norm"], parts["vertical_hs_norm"], trace_dual,
        one_sided, TimeDerivative(method).value,
    )


def flow_tensor_suite(metric, x, y, t, method=TimeDerivative.EXACT.value, step=TIME_STEP):
    """
    Flow tensor package at one sphere-bundle point.

    :raises DomainError: If y = 0
    """
    _require_nonzero(y)
    batch = flow_tensor_batch(metric, x, y, t, method, step)
    return FlowTensorPackage(
        batch.h[0], batch.h_raised[0], float(batch.h_of_y[0]), float(batch.H[0]), batch.trace_form[0],
        batch.raised_vertical[0], float(batch.hs_norm[0]), float(batch.vertical_hs_norm[0]),
        float(batch.trace_dual_norm[0]), batch.one_sided, batch.method,
    )


def raised_inverse_rate(metric, x, y, t, step=TIME_STEP):
    """
    ∂_t g^{ij} by central differences of the inverse fundamental tensor.
    """
    x, y, t = _batch(x, y, t)
    calc = calculus_for(metric)
    forward = calc.evaluate("fundamental_inverse", x, y, t + step)
    backward = calc.evaluate("fundamental_inverse", x, y, t - step)
    return (forward - backward) / (2.0 * step)


def _j_terms_point(calc):
    h_lower, h_upper = _flow_functions(calc, "exact", None)

    def terms(x, v, t, df, hess):
        g_inv = calc.fundamental_inverse(x, v, t)
        h_up = h_upper(x, v, t)
        d = calc.horizontal(h_lower, "ll", x, v, t)
        trace_form = jnp.einsum("ia,aji->j", g_inv, d)
        vertical = calc.vertical(h_upper, x, v, t)
        tau_h = calc.tau_horizontal(x, v, t)
        # grad_hess[k, i] = f^k_|i
        grad_hess = g_inv @ hess
        return jnp.stack([
            jnp.einsum("ij,ji->", h_up, hess),
            (g_inv @ trace_form) @ df,
            jnp.einsum("ijk,ki,j->", vertical, grad_hess, df) / calc.norm(x, v, t),
            -jnp.einsum("ij,i,j->", h_up, df, tau_h),
        ])

    return terms


@dataclass
class JField:
    """
    J over the grid with its four terms; NaN off the mask.
    """
    total: np.ndarray
    terms: np.ndarray
    mask: np.ndarray


@dataclass
class JBreakdown:
    total: float
    terms: np.ndarray


def j_field(metric, measure, f, t, gradient=None, hessian=None):
    """
    J = h^{ij} f_j|i + h^{ij}_|i f_j + (1/F) h^{ij}_;k f^k_|i f_j − h^{ij} f_i τ_|j
    referenced at ∇f, at every mask node.

    :return: JField
    """
    grid = f.grid
    if gradient is None:
        gradient = gradient_field(metric, f, t)
    if hessian is None:
        hessian = hessian_field(metric, f, t, gradient)
    mask = hessian.mask
    terms = np.full(grid.shape + (4,), np.nan)
    if mask.any():
        calc = calculus_for(metric, measure)
        points = grid.points()[mask.ravel()]
        values = calc.evaluate(
            "j_terms", points, gradient.vector.values[mask], np.full(points.shape[0], t),
            f.differential[mask], hessian.matrix[mask], fn=_j_terms_point(calc)
        )
        terms[mask] = values
    return JField(np.sum(terms, axis=-1), terms, mask)


def j_quantity(metric, measure, f, node, t):
    """
    J and its term breakdown at one grid node.

    :raises DomainError: If the node lies off the mask
    """
    node = tuple(int(i) for i in node)
    if not f.mask[node]:
        raise DomainError(f"J is undefined at critical node {node}.")
    field_ = j_field(metric, measure, f, t)
    return JBreakdown(float(field_.total[node]), field_.terms[node])


def flow_flux(metric, grid, gradient, t):
    """
    W^i = h^{ij}(x, ∇f) f_j, zero where ∇f = 0.
    """
    on = gradient.mask & (np.linalg.norm(gradient.vector.values, axis=-1) > 0.0)
    flux = np.zeros(grid.shape + (2,))
    if on.any():
        calc = calculus_for(metric)
        _, h_upper = _flow_functions(calc, "exact", None)
        points = grid.points()[on.ravel()]
        h_up = calc.evaluate(
            "h_raised", points, gradient.vector.values[on], np.full(points.shape[0], t), fn=h_upper
        )
        flux[on] = np.einsum("bij,bj->bi", h_up, gradient.covector[on])
    return VectorField(grid, flux, t)


def j_divergence(metric, measure, f, t, gradient=None):
    """
    J in divergence form, div_μ(h^{ij}(∇f) f_j ∂_i).
    """
    if gradient is None:
        gradient = gradient_field(metric, f, t)
    return divergence_mu(measure, flow_flux(metric, f.grid, gradient, t))


def spectral_bound(metric, grid, times, directions=CFL_DIRECTIONS):
    """
    Sampled sup of the spectral radius of g^{ij} over nodes, directions and times.
    """
    points = grid.points()
    stride = max(1, int(math.ceil(points.shape[0] / CFL_MAX_NODES)))
    points = points[::stride]
    theta = 2.0 * np.pi * np.arange(directions) / directions
    unit = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    x = np.repeat(points, directions, axis=0)
    y = np.tile(unit, (points.shape[0], 1))
    calc = calculus_for(metric)
    bound = 0.0
    for t in times:
        g = calc.evaluate("fundamental", x, y, np.full(x.shape[0], t))
        smallest = np.min(np.linalg.eigvalsh(g))
        bound = max(bound, 1.0 / smallest if smallest > 0.0 else math.inf)
    return bound


@dataclass
class FlowTrajectory:
    """
    Heat-flow solution sampled at increasing time stamps.

    Per stamp: u, ∇f with f = log u, F(∇f), f_t = Δu/u, Δu and diagnostics.
    """
    metric: object
    measure: object
    grid: object
    times: np.ndarray
    u: list
    gradient: list
    gradient_norm: list
    f_t: list
    laplacian: list
    diagnostics: list
    dt: float = 0.0

    def __len__(self):
        return len(self.times)

    def f(self, stamp):
        return np.log(self.u[stamp])

    def field(self, name, stamp):
        values = self.f(stamp) if name == "f" else getattr(self, name)[stamp]
        return ScalarField(self.grid, values, float(self.times[stamp]))

    def stamp_index(self, t, tolerance=1e-9):
        """
        Index of the stamp at time t.

        :raises DomainError: If t is not a stamp
        """
        matches = np.flatnonzero(np.abs(self.times - t) <= tolerance)
        if matches.size == 0:
            raise DomainError(f"Time {t} is not a trajectory stamp.")
        return int(matches[0])

    def mass(self, stamp):
        return integrate(self.field("u", stamp), self.measure)


def _stage(metric, measure, grid, u, t, config, warm):
    field_ = ScalarField(grid, u, t)
    lap, gradient = laplacian_with_gradient(metric, measure, field_, t, config, warm)
    return lap.values, gradient


def run_heat_flow(metric, measure, u0, times, cfl=DEFAULT_CFL, config=DEFAULT_SOLVE):
    """
    Integrate ∂_t u = Δ_{g(t)} u from t = 0 with classical RK4.

    The internal step is the largest equal subdivision of each stamp gap not
    exceeding cfl · min spacing² / Λ, with Λ the sampled sup of the spectral
    radius of g^{ij}.

    :param u0: Positive ScalarField at t = 0
    :param times: Increasing stamps in (0, T]
    :return: FlowTrajectory
    :raises ConfigurationError: On invalid stamps, non-positive u₀ or an unresolvable CFL bound
    :raises PositivityError: If u loses positivity
    """
    grid = u0.grid
    times = np.asarray(sorted(float(t) for t in times))
    if times.size == 0 or times[0] <= 0.0 or np.any(np.diff(times) <= 0.0):
        raise ConfigurationError("estimate.check_times must be increasing and positive.", "estimate.check_times")
    if times[-1] > metric.horizon + 1e-12:
        raise ConfigurationError(
            f"Stamp {times[-1]} exceeds the metric horizon {metric.horizon}.", "metric.horizon"
        )
    if np.min(u0.values) <= 0.0:
        raise ConfigurationError("initial_data must be positive on the grid.", "initial_data")
    bound = spectral_bound(metric, grid, np.unique(np.concatenate([[0.0], times])))
    if not math.isfinite(bound) or bound <= 0.0:
        raise ConfigurationError(f"CFL bound is unresolvable (spectral bound {bound}).", "grid.resolution")
    dt_max = cfl * min(grid.spacing) ** 2 / bound
    logging.info(
        f"Heat flow on {grid.shape} grid to t={times[-1]:g}: spectral bound {bound:.6g}, dt <= {dt_max:.3g}."
    )
    trajectory = FlowTrajectory(metric, measure, grid, times, [], [], [], [], [], [], dt_max)
    u = u0.values.copy()
    t = 0.0
    warm = None
    for stamp in times:
        substeps = max(1, int(math.ceil((stamp - t) / dt_max - 1e-9)))
        dt = (stamp - t) / substeps
        for _ in range(substeps):
            k1, gradient = _stage(metric, measure, grid, u, t, config, warm)
            warm = gradient.vector.values
            k2, _ = _stage(metric, measure, grid, u + 0.5 * dt * k1, t + 0.5 * dt, config, warm)
            k3, _ = _stage(metric, measure, grid, u + 0.5 * dt * k2, t + 0.5 * dt, config, warm)
            k4, _ = _stage(metric, measure, grid, u + dt * k3, t + dt, config, warm)
            u = u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = t + dt
            if np.min(u) <= 0.0:
                raise PositivityError(f"Heat flow lost positivity before stamp t={stamp:g}.", float(stamp))
        t = float(stamp)
        lap, gradient = _stage(metric, measure, grid, u, t, config, warm)
        warm = gradient.vector.values
        grad_f = gradient.vector.values / u[..., None]
        trajectory.u.append(u.copy())
        trajectory.gradient.append(grad_f)
        trajectory.gradient_norm.append(gradient.norm / u)
        trajectory.f_t.append(lap / u)
        trajectory.laplacian.append(lap)
        mass = integrate(ScalarField(grid, u, t), measure)
        trajectory.diagnostics.append({
            "time": t, "mass": mass, "min": float(np.min(u)), "max": float(np.max(u)),
            "substeps": substeps, "dt": dt,
        })
        logging.info(f"Heat flow stamp t={t:g}: mass {mass:.12g}, min {np.min(u):.6g}, max {np.max(u):.6g}.")
    return trajectory


def log_gradient(metric, trajectory, stamp):
    """
    GradientField of f = log u at a stamp, warm-started from the cached ∇f.
    """
    f = trajectory.field("f", stamp)
    return gradient_from_differential(
        metric, trajectory.grid, f.differential, covector_mask(trajectory.grid, f.values),
        f.time, initial=trajectory.gradient[stamp]
    )


@dataclass
class SigmaFFields:
    """
    σ = t·f_t and 𝓕 = t·F²(∇f) − α·σ at one stamp.
    """
    alpha: float
    time: float
    sigma: np.ndarray
    big_f: np.ndarray


def sigma_f_fields(trajectory, alpha, stamp):
    """
    Assemble σ and 𝓕 from the cached f_t and F(∇f).

    :raises DomainError: If α ≤ 1 or the stamp is out of range
    """
    if alpha <= 1.0:
        raise DomainError(f"alpha must be > 1, got {alpha}.")
    if not 0 <= stamp < len(trajectory):
        raise DomainError(f"Stamp index {stamp} out of range.")
    t = float(trajectory.times[stamp])
    sigma = t * trajectory.f_t[stamp]
    big_f = t * trajectory.gradient_norm[stamp] ** 2 - alpha * sigma
    return SigmaFFields(alpha, t, sigma, big_f)
