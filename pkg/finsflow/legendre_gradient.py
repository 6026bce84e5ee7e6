"""
Legendre transform, Finsler gradients, the direction-frozen metric and Chern
Hessians with their Hilbert–Schmidt norms.
"""
import logging

from dataclasses import dataclass
from enum import Enum

import numpy as np

from finsflow.chart_grid import VectorField, grid_second_derivatives
from finsflow.errors import ConfigurationError, DomainError, SolverError
from finsflow.finsler_core import _batch, calculus_for, invert_2x2

MAX_HALVINGS = 30


class InitialGuess(str, Enum):
    WARM_START = "warm-start"
    METRIC_RAISE = "metric-raise"
    EUCLIDEAN_RAISE = "euclidean-raise"


@dataclass(frozen=True)
class LegendreSolveConfig:
    """
    Newton settings for the fiberwise Legendre transform.

    :param tolerance: Residual tolerance, scaled by 1 + |ξ|
    :param max_iterations: Newton iteration cap
    :param initial_guess: InitialGuess value
    """
    tolerance: float = 1e-12
    max_iterations: int = 50
    initial_guess: str = InitialGuess.METRIC_RAISE.value

    def __post_init__(self):
        if self.tolerance <= 0.0:
            raise ConfigurationError(f"Legendre tolerance must be > 0, got {self.tolerance}.")
        if self.max_iterations < 8:
            raise ConfigurationError(f"Legendre max_iterations must be >= 8, got {self.max_iterations}.")
        object.__setattr__(self, "initial_guess", InitialGuess(self.initial_guess).value)


DEFAULT_SOLVE = LegendreSolveConfig()


def _initial_guess(calc, x, t, xi, config, initial):
    if config.initial_guess == InitialGuess.EUCLIDEAN_RAISE.value:
        return xi.copy()
    # Raise with the metric frozen at the Euclidean raise.
    g = calc.evaluate("fundamental", x, xi, t)
    guess = np.linalg.solve(g, xi[..., None])[..., 0]
    if config.initial_guess == InitialGuess.WARM_START.value and initial is not None:
        initial = np.asarray(initial, dtype=float).reshape(guess.shape)
        usable = np.flatnonzero(np.linalg.norm(initial, axis=-1) > 0.0)
        if usable.size:
            # Warm vectors replace the raise only where they leave a smaller residual.
            raised = np.linalg.norm(calc.evaluate("energy_gradient", x[usable], guess[usable], t[usable]) - xi[usable],
                                    axis=-1)
            warm = np.linalg.norm(calc.evaluate("energy_gradient", x[usable], initial[usable], t[usable]) - xi[usable],
                                  axis=-1)
            better = usable[warm < raised]
            guess[better] = initial[better]
    return guess


def legendre_solve(metric, x, t, xi, config=DEFAULT_SOLVE, initial=None):
    """
    Batched Legendre transform: solve ½∂F²/∂y (x, y, t) = ξ for y.

    Damped Newton with Jacobian g(x, y, t); a step is halved until the
    residual decreases. Rows with ξ = 0 return y = 0.

    :param metric: MetricFamily
    :param x: Points (B, 2)
    :param t: Times (B,) or scalar
    :param xi: Covectors (B, 2)
    :param config: LegendreSolveConfig
    :param initial: Optional warm-start vectors (B, 2)
    :return: Vectors (B, 2)
    :raises SolverError: If some row does not converge within the iteration cap
    """
    x, xi, t = _batch(x, xi, t)
    y = np.zeros_like(xi)
    scale = np.linalg.norm(xi, axis=-1)
    rows = np.flatnonzero(scale > 0.0)
    if rows.size == 0:
        return y
    calc = calculus_for(metric)
    px, pt, pxi = x[rows], t[rows], xi[rows]
    tolerance = config.tolerance * (1.0 + scale[rows])
    guess = _initial_guess(calc, px, pt, pxi, config, None if initial is None else np.asarray(initial)[rows])
    residual = calc.evaluate("energy_gradient", px, guess, pt) - pxi
    residual_norm = np.linalg.norm(residual, axis=-1)
    active = residual_norm > tolerance
    iterations = 0
    while active.any() and iterations < config.max_iterations:
        iterations += 1
        idx = np.flatnonzero(active)
        g = calc.evaluate("fundamental", px[idx], guess[idx], pt[idx])
        step = -np.linalg.solve(g, residual[idx][..., None])[..., 0]
        damping = np.ones(idx.size)
        for _ in range(MAX_HALVINGS):
            trial = guess[idx] + damping[:, None] * step
            trial_residual = calc.evaluate("energy_gradient", px[idx], trial, pt[idx]) - pxi[idx]
            trial_norm = np.linalg.norm(trial_residual, axis=-1)
            # NaN compares False, so it counts as an increase.
            worse = ~(trial_norm < residual_norm[idx])
            if not worse.any():
                break
            damping[worse] *= 0.5
        better = ~worse
        accepted = idx[better]
        guess[accepted] = trial[better]
        residual[accepted] = trial_residual[better]
        residual_norm[accepted] = trial_norm[better]
        active = residual_norm > tolerance
    if active.any():
        worst = int(np.argmax(np.where(active, residual_norm / tolerance, 0.0)))
        raise SolverError(
            f"Legendre Newton did not converge after {config.max_iterations} iterations "
            f"(residual {residual_norm[worst]:.3g}).",
            float(residual_norm[worst]),
            int(rows[worst]),
        )
    logging.debug(f"Legendre solve of {rows.size} covectors took {iterations} Newton iterations.")
    y[rows] = guess
    return y


def legendre_transform(metric, x, t, xi, config=DEFAULT_SOLVE, initial=None):
    """
    Legendre transform of one covector ξ at (x, t).

    :return: Vector y with g(x, y, t) y = ξ (y = 0 when ξ = 0)
    :raises SolverError: On Newton non-convergence
    """
    return legendre_solve(metric, x, t, xi, config, None if initial is None else np.atleast_2d(initial))[0]


def dual_norm(metric, x, t, xi, config=DEFAULT_SOLVE):
    """
    Batched dual norm F*(ξ) = sqrt(ξ(L*ξ)).
    """
    x, xi, t = _batch(x, xi, t)
    y = legendre_solve(metric, x, t, xi, config)
    return np.sqrt(np.maximum(np.einsum("bi,bi->b", xi, y), 0.0))


@dataclass
class GradientField:
    """
    Finsler gradient of a scalar field.

    ``vector`` is ∇f (zero off the mask), ``norm`` is F(∇f), ``dual_norm``
    is F*(df) = sqrt(df(∇f)), ``covector`` is df.
    """
    vector: VectorField
    norm: np.ndarray
    dual_norm: np.ndarray
    covector: np.ndarray
    mask: np.ndarray


def _solve_rows(metric, grid, xi, t, config):
    """
    Row-major traversal: each grid row is one batch, warm-started from the row before it.
    """
    points = grid.points().reshape(grid.shape + (2,))
    xi = xi.reshape(grid.shape + (2,))
    y = np.zeros_like(xi)
    warm = LegendreSolveConfig(config.tolerance, config.max_iterations, InitialGuess.WARM_START.value)
    previous = None
    for row in range(grid.shape[0]):
        try:
            y[row] = legendre_solve(metric, points[row], t, xi[row], config if previous is None else warm, previous)
        except SolverError as error:
            node = None if error.node is None else (row, int(error.node))
            raise SolverError(f"{error} at grid node {node}", error.residual, node) from error
        previous = y[row]
    return y.reshape(-1, 2)


def gradient_from_differential(metric, grid, differential, mask, t, config=DEFAULT_SOLVE, initial=None):
    """
    Finsler gradient from a sampled differential.

    Without ``initial`` the nodes are solved in row-major traversal, each row
    seeded by the solutions of the previous row.

    :param differential: Covector array ``grid.shape + (2,)``
    :param mask: Nodes where the differential counts as non-zero
    :param initial: Optional warm-start vectors ``grid.shape + (2,)``, e.g. the previous time step
    :return: GradientField
    :raises SolverError: With the failing grid node attached
    """
    xi = np.where(mask[..., None], differential, 0.0).reshape(-1, 2)
    points = grid.points()
    if initial is None:
        y = _solve_rows(metric, grid, xi, t, config)
    else:
        if config.initial_guess != InitialGuess.WARM_START.value:
            config = LegendreSolveConfig(config.tolerance, config.max_iterations, InitialGuess.WARM_START.value)
        try:
            y = legendre_solve(metric, points, t, xi, config, np.asarray(initial).reshape(-1, 2))
        except SolverError as error:
            node = None if error.node is None else tuple(int(i) for i in np.unravel_index(error.node, grid.shape))
            raise SolverError(f"{error} at grid node {node}", error.residual, node) from error
    norm = metric.norm(np, points, y, t)
    dual = np.sqrt(np.maximum(np.einsum("bi,bi->b", xi, y), 0.0))
    return GradientField(
        VectorField(grid, y.reshape(grid.shape + (2,)), t),
        norm.reshape(grid.shape),
        dual.reshape(grid.shape),
        np.asarray(differential),
        mask,
    )


def gradient_field(metric, f, t, config=DEFAULT_SOLVE, initial=None):
    """
    Finsler gradient ∇f = g^{ij}(x, ∇f) f_i ∂_j of a ScalarField.

    Off-mask nodes carry ∇f = 0.

    :param metric: MetricFamily
    :param f: ScalarField
    :param t: Flow time of the metric
    :return: GradientField
    """
    return gradient_from_differential(metric, f.grid, f.differential, f.mask, t, config, initial)


def linearized_metric(metric, x, t, V):
    """
    Fundamental tensor frozen at the reference direction V and its inverse.

    :raises DomainError: If V = 0
    """
    if np.linalg.norm(V) == 0.0:
        raise DomainError("Reference direction must be non-zero.")
    xs, vs, ts = _batch(x, V, t)
    g = calculus_for(metric).evaluate("fundamental", xs, vs, ts)[0]
    return g, invert_2x2(g)


def linearized_inverse_field(metric, grid, reference, t):
    """
    g^{ij}(x, V) at every node where the reference V is non-zero; NaN elsewhere.
    """
    values = reference.values.reshape(-1, 2)
    on = np.linalg.norm(values, axis=-1) > 0.0
    out = np.full((grid.size, 2, 2), np.nan)
    if on.any():
        g = calculus_for(metric).evaluate("fundamental", grid.points()[on], values[on], np.full(on.sum(), t))
        out[on] = invert_2x2(g)
    return out.reshape(grid.shape + (2, 2))


@dataclass
class HessianData:
    """
    Chern Hessian with reference vector V = ∇f at one node.
    """
    reference: np.ndarray
    matrix: np.ndarray
    hs_norm: float
    trace: float


@dataclass
class HessianField:
    """
    Chern Hessian over the grid, NaN off the mask.
    """
    matrix: np.ndarray
    hs_norm: np.ndarray
    trace: np.ndarray
    mask: np.ndarray


def hessian_field(metric, f, t, gradient=None):
    """
    f_{i|j} = ∂_j f_i − Γ^k_ij(∇f) f_k with Hilbert–Schmidt norm and trace
    taken with g^{ij}(∇f), at every mask node.

    :param gradient: Optional precomputed GradientField of f
    :return: HessianField
    """
    grid = f.grid
    if gradient is None:
        gradient = gradient_field(metric, f, t)
    second = grid_second_derivatives(grid, f.values)
    matrix = np.full(grid.shape + (2, 2), np.nan)
    hs_norm = np.full(grid.shape, np.nan)
    trace = np.full(grid.shape, np.nan)
    mask = gradient.mask & (np.linalg.norm(gradient.vector.values, axis=-1) > 0.0)
    if mask.any():
        calc = calculus_for(metric)
        points = grid.points()[mask.ravel()]
        reference = gradient.vector.values[mask]
        times = np.full(points.shape[0], t)
        gamma = calc.evaluate("chern", points, reference, times)
        g_inv = invert_2x2(calc.evaluate("fundamental", points, reference, times))
        hess = second[mask] - np.einsum("bkij,bk->bij", gamma, f.differential[mask])
        matrix[mask] = hess
        hs_norm[mask] = np.sqrt(np.einsum("bik,bjl,bij,bkl->b", g_inv, g_inv, hess, hess))
        trace[mask] = np.einsum("bij,bij->b", g_inv, hess)
    return HessianField(matrix, hs_norm, trace, mask)


def hessian_hs(metric, f, node, t, gradient=None):
    """
    Chern Hessian, its Hilbert–Schmidt norm and trace at one grid node.

    :param node: (row, column) grid index
    :raises DomainError: If the node lies off the mask
    """
    node = tuple(int(i) for i in node)
    if not f.mask[node]:
        raise DomainError(f"Hessian with reference vector is undefined at critical node {node}.")
    if gradient is None:
        gradient = gradient_field(metric, f, t)
    field = hessian_field(metric, f, t, gradient)
    reference = gradient.vector.values[node]
    return HessianData(reference, field.matrix[node], float(field.hs_norm[node]), float(field.trace[node]))
