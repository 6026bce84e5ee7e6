"""
Numerical verification of the Bochner–Weitzenböck formula, the evolution
identities along the flow, the log-transform equation, the σ- and
𝓕-equations and the Hessian-trace inequality.

Pointwise identities are checked in strong form at mask nodes; the integral
identity is checked by quadrature over the torus. Every check returns a
ResidualReport whose relative residual is normalized by the largest
participating term.
"""
import logging
import math

from dataclasses import dataclass, field

import numpy as np

from finsflow.chart_grid import (
    MASK_TOLERANCE,
    ScalarField,
    VectorField,
    integrate,
    safe_nodes,
)
from finsflow.errors import DomainError
from finsflow.finsler_core import DIMENSION, calculus_for, chern_derivatives_batch
from finsflow.flow_pde import (
    divergence_mu,
    finsler_laplacian,
    flow_flux,
    flow_tensor_batch,
    j_divergence,
    j_field,
    linearized_laplacian,
    log_gradient,
    sigma_f_fields,
)
from finsflow.legendre_gradient import dual_norm, gradient_field, hessian_field, legendre_solve

SCALE_FLOOR = 1e-14
MIN_ORDER = 1.5
UNRELIABLE_FRACTION = 0.05
EXACT_RESIDUAL = 1e-12


@dataclass
class ResidualReport:
    """
    Residuals of one identity over a sample set.

    :param tag: Identity tag
    :param samples: Description of the sample set
    :param residuals: Per-sample residuals
    :param scale: Sup of the largest participating term
    :param tolerance: Bound on the relative sup residual
    :param parameters: Grid and step parameters of the evaluation
    :param order: Measured convergence order, when three or more levels were supplied
    :param skipped: Samples skipped because they fell off the mask
    :param flags: Qualifiers such as ``one-sided`` or ``unreliable``
    :param gates: Secondary bounds, name to {"value", "limit"}, all of which must hold
    """
    tag: str
    samples: str
    residuals: np.ndarray
    scale: float
    tolerance: float
    parameters: dict = field(default_factory=dict)
    order: float = None
    skipped: int = 0
    flags: list = field(default_factory=list)
    min_order: float = None
    gates: dict = field(default_factory=dict)

    @property
    def sup_residual(self):
        residuals = np.asarray(self.residuals, dtype=float)
        finite = residuals[np.isfinite(residuals)]
        return float(np.max(np.abs(finite))) if finite.size else 0.0

    @property
    def relative(self):
        return self.sup_residual / max(self.scale, SCALE_FLOOR)

    @property
    def passed(self):
        if not self.relative <= self.tolerance:
            return False
        if self.min_order is not None and self.order is not None and self.order < self.min_order:
            return False
        return all(gate["value"] <= gate["limit"] for gate in self.gates.values())

    def to_dict(self):
        return {
            "tag": self.tag,
            "samples": self.samples,
            "count": int(np.size(self.residuals)),
            "skipped": self.skipped,
            "sup_residual": self.sup_residual,
            "scale": self.scale,
            "relative": self.relative,
            "tolerance": self.tolerance,
            "order": self.order,
            "min_order": self.min_order,
            "flags": list(self.flags),
            "gates": {name: dict(gate) for name, gate in self.gates.items()},
            "parameters": dict(self.parameters),
            "passed": self.passed,
        }


def _report(tag, samples, residuals, terms, tolerance, parameters, **kwargs):
    residuals = np.asarray(residuals, dtype=float).ravel()
    scale = 0.0
    for term in terms:
        term = np.asarray(term, dtype=float)
        finite = term[np.isfinite(term)]
        if finite.size:
            scale = max(scale, float(np.max(np.abs(finite))))
    report = ResidualReport(tag, samples, residuals, scale, tolerance, parameters, **kwargs)
    logging.info(
        f"Identity '{tag}': relative residual {report.relative:.3e} over {residuals.size} samples "
        f"(tolerance {tolerance:g})."
    )
    return report


def convergence_order(steps, errors):
    """
    Least-squares slope of log(error) against log(step).

    :return: Order, or None with fewer than three levels or vanishing errors
    """
    steps = np.asarray(steps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if steps.size < 3 or np.any(errors <= 0.0) or not np.all(np.isfinite(errors)):
        return None
    slope, _ = np.polyfit(np.log(steps), np.log(errors), 1)
    return float(slope)


def with_order(reports, steps, min_order=MIN_ORDER):
    """
    Return the finest report of a refinement sequence with its measured order.

    Reports already at round-off level carry no order and are flagged ``exact``.
    """
    finest = reports[-1]
    errors = [r.sup_residual for r in reports]
    finest.parameters["refinement_steps"] = [float(s) for s in steps]
    finest.parameters["refinement_residuals"] = errors
    if max(r.relative for r in reports) <= EXACT_RESIDUAL:
        finest.flags.append("exact")
        return finest
    finest.order = convergence_order(steps, errors)
    finest.min_order = min_order
    return finest


@dataclass(frozen=True)
class ScriptedField:
    """
    Closed-form time-dependent field f(x, t) = e^{−γt} · series(x).
    """
    series: object
    decay: float = 0.0

    def factor(self, t):
        return math.exp(-self.decay * t)

    def values(self, grid, t):
        x = np.stack(grid.coordinates(), axis=-1)
        return ScalarField(grid, self.factor(t) * self.series.value(np, x), t)

    def time_derivative(self, grid, t):
        return -self.decay * self.values(grid, t).values

    def differential(self, points, t):
        return self.factor(t) * self.series.gradient(np, np.asarray(points, dtype=float))

    def differential_rate(self, points, t):
        return -self.decay * self.differential(points, t)


def _require_interior(t, step):
    if t < step:
        raise DomainError(f"Central time differences need t >= step, got t={t}, step={step}.")


def _probe_split(script, probes, t):
    xi = script.differential(probes, t)
    norm = np.linalg.norm(xi, axis=-1)
    on = norm > MASK_TOLERANCE * max(float(np.max(norm)), 0.0)
    return on, int(np.sum(~on))


def check_gradient_evolution(metric, script, t, probes, step=1e-3, tolerance=1e-6):
    """
    ∂_t F²(∇f) = 2h(∇f) + 2df_t(∇f) at probe points.

    The left side differences the assembled field F²(∇f) = F*²(df) in time;
    the right side comes from the flow tensors and the Legendre gradient.
    """
    _require_interior(t, step)
    probes = np.asarray(probes, dtype=float)
    on, skipped = _probe_split(script, probes, t)
    points = probes[on]
    params = {"time": t, "step": step, "probes": int(probes.shape[0])}
    if points.shape[0] == 0:
        return _report("gradient_evolution", "probe points", [], [], tolerance, params, skipped=skipped)

    def energy(time):
        return dual_norm(metric, points, time, script.differential(points, time)) ** 2

    lhs = (energy(t + step) - energy(t - step)) / (2.0 * step)
    xi = script.differential(points, t)
    gradient = legendre_solve(metric, points, t, xi)
    h_term = 2.0 * flow_tensor_batch(metric, points, gradient, t).h_of_y
    rate_term = 2.0 * np.einsum("bi,bi->b", script.differential_rate(points, t), gradient)
    return _report(
        "gradient_evolution", "probe points", lhs - h_term - rate_term, [lhs, h_term, rate_term],
        tolerance, params, skipped=skipped
    )


def check_exchange(metric, measure, script, grid, t, probes, step=1e-3, tolerance=5e-4,
                   against="formula", critical_fraction=0.25, margin=2):
    """
    Operator exchange formulas along the flow.

    (i) [∇^{∇f}, ∂_t] f = −2 h^{ij}(∇f) f_i ∂_j at probe points.
    (ii) [Δ^{∇f}, ∂_t] f = −2J at safe grid nodes, with J from its pointwise
    formula (``against="formula"``) or its divergence form (``"divergence"``).

    :return: Tuple (report for (i), report for (ii))
    """
    _require_interior(t, step)
    probes = np.asarray(probes, dtype=float)
    on, skipped = _probe_split(script, probes, t)
    points = probes[on]
    params = {"time": t, "step": step, "against": against}
    if points.shape[0]:
        calc = calculus_for(metric)
        xi = script.differential(points, t)
        gradient = legendre_solve(metric, points, t, xi)
        g_inv = calc.evaluate("fundamental_inverse", points, gradient, np.full(points.shape[0], t))
        frozen = np.einsum("bij,bi->bj", g_inv, script.differential_rate(points, t))
        forward = legendre_solve(metric, points, t + step, script.differential(points, t + step))
        backward = legendre_solve(metric, points, t - step, script.differential(points, t - step))
        rate = (forward - backward) / (2.0 * step)
        rhs = -2.0 * np.einsum("bij,bi->bj", flow_tensor_batch(metric, points, gradient, t).h_raised, xi)
        residual = np.linalg.norm(frozen - rate - rhs, axis=-1)
        terms = [np.linalg.norm(v, axis=-1) for v in (frozen, rate, rhs)]
    else:
        residual, terms = [], []
    first = _report("exchange_gradient", "probe points", residual, terms, tolerance, dict(params), skipped=skipped)

    f = script.values(grid, t)
    gradient = gradient_field(metric, f, t)
    rate = ScalarField(grid, script.time_derivative(grid, t), t)
    frozen = linearized_laplacian(metric, measure, gradient.vector, rate, t).values
    lap_forward = finsler_laplacian(metric, measure, script.values(grid, t + step), t + step).values
    lap_backward = finsler_laplacian(metric, measure, script.values(grid, t - step), t - step).values
    lap_rate = (lap_forward - lap_backward) / (2.0 * step)
    if against == "divergence":
        j = j_divergence(metric, measure, f, t, gradient).values
    else:
        j = j_field(metric, measure, f, t, gradient).total
    nodes = safe_nodes(grid, f.differential, critical_fraction, margin)
    nodes &= np.isfinite(frozen) & np.isfinite(j)
    residual = (frozen - lap_rate + 2.0 * j)[nodes]
    params.update({"resolution": list(grid.shape), "critical_fraction": critical_fraction, "margin": margin})
    second = _report(
        "exchange_laplacian", "safe grid nodes", residual,
        [frozen[nodes], lap_rate[nodes], 2.0 * j[nodes]], tolerance, params,
        skipped=int(grid.size - np.sum(nodes))
    )
    return first, second


def check_flux_quadrature(metric, measure, script, test_function, grid, t, tolerance=1e-5):
    """
    ∫ h_{∇f}(∇f, ∇^{∇f}φ) dμ = −∫ φJ dμ by quadrature over the torus.

    The closed-manifold correction ∫ div_μ(φ W) dμ, W = h^{ij}(∇f) f_j ∂_i, is
    reported on its own.
    """
    f = script.values(grid, t)
    gradient = gradient_field(metric, f, t)
    flux = flow_flux(metric, grid, gradient, t)
    phi = test_function.on_grid(grid, t)
    lhs = integrate(phi.with_values(np.einsum("...i,...i->...", flux.values, phi.differential)), measure)
    j = j_field(metric, measure, f, t, gradient).total
    off_mask = ~np.isfinite(j)
    rhs = -integrate(phi.with_values(np.where(off_mask, 0.0, phi.values * j)), measure)
    correction = integrate(
        divergence_mu(measure, VectorField(grid, phi.values[..., None] * flux.values, t)), measure
    )
    flags = []
    fraction = float(np.mean(off_mask))
    if fraction > UNRELIABLE_FRACTION:
        flags.append("unreliable")
    params = {
        "time": t, "resolution": list(grid.shape), "lhs": lhs, "rhs": rhs,
        "divergence_correction": correction, "off_mask_fraction": fraction,
    }
    return _report(
        "flux_quadrature", "torus quadrature", [lhs - rhs], [lhs, rhs], tolerance, params,
        skipped=int(np.sum(off_mask)), flags=flags
    )


def _time_derivative(trajectory, values, stamp):
    """
    Three-point time derivative over neighbouring stamps; one-sided at the ends.
    """
    times = trajectory.times
    if len(times) < 3:
        raise DomainError("Time differencing needs at least three stamps.")
    if stamp == 0:
        k, flag = 1, "one-sided"
    elif stamp == len(times) - 1:
        k, flag = len(times) - 2, "one-sided"
    else:
        k, flag = stamp, None
    t0, t1, t2 = times[k - 1], times[k], times[k + 1]
    f0, f1, f2 = values(k - 1), values(k), values(k + 1)
    d1, d2 = t1 - t0, t2 - t1
    # Lagrange derivative of the quadratic through the three stamps at times[stamp].
    s = times[stamp]
    w0 = ((s - t1) + (s - t2)) / ((t0 - t1) * (t0 - t2))
    w1 = ((s - t0) + (s - t2)) / ((t1 - t0) * (t1 - t2))
    w2 = ((s - t0) + (s - t1)) / ((t2 - t0) * (t2 - t1))
    return w0 * f0 + w1 * f1 + w2 * f2, flag, max(d1, d2)


def check_log_heat(trajectory, stamp, tolerance=1e-4, critical_fraction=0.0, margin=0):
    """
    f_t = Δf + F²(∇f) for f = log u on the mask, with f_t differenced from the stored stamps.
    """
    metric, measure, grid = trajectory.metric, trajectory.measure, trajectory.grid
    rate, flag, gap = _time_derivative(trajectory, trajectory.f, stamp)
    t = float(trajectory.times[stamp])
    gradient = log_gradient(metric, trajectory, stamp)
    lap = divergence_mu(measure, gradient.vector).values
    energy = gradient.norm ** 2
    nodes = gradient.mask
    if critical_fraction > 0.0:
        nodes = nodes & safe_nodes(grid, gradient.covector, critical_fraction, margin)
    residual = (rate - lap - energy)[nodes]
    params = {"time": t, "resolution": list(grid.shape), "stamp_gap": gap}
    return _report(
        "log_heat", "mask nodes", residual, [rate[nodes], lap[nodes], energy[nodes]], tolerance, params,
        skipped=int(grid.size - np.sum(nodes)), flags=[flag] if flag else []
    )


def _ricci_infinity(metric, measure, grid, gradient, t, mask):
    out = np.full(grid.shape, np.nan)
    s = np.full(grid.shape, np.nan)
    if mask.any():
        calc = calculus_for(metric, measure)
        points = grid.points()[mask.ravel()]
        terms = calc.evaluate("measure_terms", points, gradient.vector.values[mask], np.full(points.shape[0], t))
        out[mask] = terms[:, 3] + terms[:, 2]
        s[mask] = terms[:, 1]
    return out, s


def _flow_h_of_gradient(metric, grid, gradient, t, mask):
    out = np.full(grid.shape, np.nan)
    if mask.any():
        points = grid.points()[mask.ravel()]
        out[mask] = flow_tensor_batch(metric, points, gradient.vector.values[mask], t).h_of_y
    return out


def check_evolution_pdes(trajectory, alpha, stamp, tolerance=5e-4, critical_fraction=0.25, margin=2):
    """
    Strong forms of the σ- and 𝓕-equations at safe mask nodes:

    σ_t − Δ^{∇f}σ − 2dσ(∇f) − σ/t = 2t[h(∇f) + J]
    𝓕_t − Δ^{∇f}𝓕 − 2d𝓕(∇f) − 𝓕/t = −2t[(α−1)h(∇f) + Ric^∞(∇f) + ‖∇²f‖²_HS + αJ]

    :return: Tuple (σ report, 𝓕 report)
    """
    metric, measure, grid = trajectory.metric, trajectory.measure, trajectory.grid
    t = float(trajectory.times[stamp])
    sigma_rate, flag, gap = _time_derivative(trajectory, lambda k: sigma_f_fields(trajectory, alpha, k).sigma, stamp)
    big_f_rate, _, _ = _time_derivative(trajectory, lambda k: sigma_f_fields(trajectory, alpha, k).big_f, stamp)
    fields = sigma_f_fields(trajectory, alpha, stamp)
    f = trajectory.field("f", stamp)
    gradient = log_gradient(metric, trajectory, stamp)
    hessian = hessian_field(metric, f, t, gradient)
    j = j_field(metric, measure, f, t, gradient, hessian).total
    ricci_infinity, _ = _ricci_infinity(metric, measure, grid, gradient, t, hessian.mask)
    h_term = _flow_h_of_gradient(metric, grid, gradient, t, hessian.mask)
    V = gradient.vector.values
    nodes = safe_nodes(grid, gradient.covector, critical_fraction, margin) & hessian.mask
    params = {"time": t, "alpha": alpha, "resolution": list(grid.shape), "stamp_gap": gap}
    flags = [flag] if flag else []
    reports = []
    for tag, values, rate, rhs in (
        ("sigma_equation", fields.sigma, sigma_rate, 2.0 * t * (h_term + j)),
        ("big_f_equation", fields.big_f, big_f_rate,
         -2.0 * t * ((alpha - 1.0) * h_term + ricci_infinity + hessian.hs_norm ** 2 + alpha * j)),
    ):
        field_ = ScalarField(grid, values, t)
        frozen = linearized_laplacian(metric, measure, gradient.vector, field_, t).values
        drift = 2.0 * np.einsum("...i,...i->...", field_.differential, V)
        lhs = rate - frozen - drift - values / t
        valid = nodes & np.isfinite(lhs) & np.isfinite(rhs)
        reports.append(_report(
            tag, "safe mask nodes", (lhs - rhs)[valid],
            [rate[valid], frozen[valid], drift[valid], (values / t)[valid], rhs[valid]],
            tolerance, dict(params), skipped=int(grid.size - np.sum(valid)), flags=list(flags)
        ))
    return tuple(reports)


def check_hessian_trace_inequality(trajectory, stamp, N, tolerance=1e-8, trace_tolerance=5e-3,
                                   critical_fraction=0.25, margin=2):
    """
    ‖∇²f‖²_HS(∇f) ≥ (Δf)²/N − S²(∇f)/(N − n) at safe mask nodes.

    Δf is the grid Laplacian div_μ(∇f). Residuals are the violations
    max(−slack, 0), so the tolerance is absolute. The trace identity
    tr_{∇f}∇²f − S(∇f) = Δf is gated as well, relative to its largest
    term, against ``trace_tolerance``.

    :raises DomainError: If N ≤ n
    """
    if N <= DIMENSION:
        raise DomainError(f"N must be > n = {DIMENSION}, got {N}.")
    metric, measure, grid = trajectory.metric, trajectory.measure, trajectory.grid
    t = float(trajectory.times[stamp])
    f = trajectory.field("f", stamp)
    gradient = log_gradient(metric, trajectory, stamp)
    hessian = hessian_field(metric, f, t, gradient)
    _, s = _ricci_infinity(metric, measure, grid, gradient, t, hessian.mask)
    lap = divergence_mu(measure, gradient.vector).values
    nodes = safe_nodes(grid, gradient.covector, critical_fraction, margin) & hessian.mask
    nodes &= np.isfinite(lap) & np.isfinite(s)
    slack = hessian.hs_norm ** 2 - lap ** 2 / N + s ** 2 / (N - DIMENSION)
    mismatch = hessian.trace - s - lap
    trace_relative = 0.0
    if nodes.any():
        trace_scale = max(float(np.max(np.abs(term[nodes]))) for term in (hessian.trace, s, lap))
        trace_relative = float(np.max(np.abs(mismatch[nodes]))) / max(trace_scale, SCALE_FLOOR)
    params = {
        "time": t, "N": N, "resolution": list(grid.shape),
        "critical_fraction": critical_fraction, "margin": margin,
        "min_slack": float(np.min(slack[nodes])) if nodes.any() else 0.0,
    }
    report = ResidualReport(
        "hessian_trace", "safe mask nodes", np.maximum(-slack[nodes], 0.0), 1.0, tolerance, params,
        skipped=int(grid.size - np.sum(nodes)),
        gates={"trace_identity": {"value": trace_relative, "limit": trace_tolerance}},
    )
    logging.info(
        f"Identity 'hessian_trace': min slack {params['min_slack']:.3e}, "
        f"trace identity {trace_relative:.3e} (tolerance {trace_tolerance:g})."
    )
    return report


def check_bochner(metric, measure, u, t, tolerance=1e-3, critical_fraction=0.25, margin=2):
    """
    Δ^{∇u} F²(∇u) = 2 d(Δu)(∇u) + 2‖∇²u‖²_HS(∇u) + 2 Ric^∞(∇u) at safe mask nodes.
    """
    grid = u.grid
    gradient = gradient_field(metric, u, t)
    energy = ScalarField(grid, gradient.norm ** 2, t)
    lhs = linearized_laplacian(metric, measure, gradient.vector, energy, t).values
    lap = divergence_mu(measure, gradient.vector)
    drift = 2.0 * np.einsum("...i,...i->...", lap.differential, gradient.vector.values)
    hessian = hessian_field(metric, u, t, gradient)
    ricci_infinity, _ = _ricci_infinity(metric, measure, grid, gradient, t, hessian.mask)
    hs_term = 2.0 * hessian.hs_norm ** 2
    ricci_term = 2.0 * ricci_infinity
    nodes = safe_nodes(grid, u.differential, critical_fraction, margin) & hessian.mask
    nodes &= np.isfinite(lhs) & np.isfinite(hs_term) & np.isfinite(ricci_term)
    residual = (lhs - drift - hs_term - ricci_term)[nodes]
    params = {"time": t, "resolution": list(grid.shape), "critical_fraction": critical_fraction, "margin": margin}
    return _report(
        "bochner", "safe mask nodes", residual,
        [lhs[nodes], drift[nodes], hs_term[nodes], ricci_term[nodes]], tolerance, params,
        skipped=int(grid.size - np.sum(nodes))
    )


def check_tensor_identities(metric, measure, rng, samples=200, tolerance=1e-8):
    """
    Sampled tensor identities: homogeneity, Cartan contraction, Chern
    compatibility g_ij|k = 0 and G^i = ½ Γ^i_jk y^j y^k.

    :return: List of ResidualReport
    """
    calc = calculus_for(metric, measure)
    x = rng.uniform(0.0, 2.0 * np.pi, size=(samples, 2))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=samples)
    y = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    y = y / metric.norm(np, x, y, 0.0)[:, None]
    t = rng.uniform(0.0, metric.horizon, size=samples)
    params = {"samples": samples}
    reports = []

    homogeneity = []
    for c in (0.5, 2.0, 3.0):
        for name, degree in (("norm", 1), ("fundamental", 0), ("spray", 2), ("nonlinear", 1), ("ricci", 2)):
            base = calc.evaluate(name, x, y, t)
            scaled = calc.evaluate(name, x, c * y, t)
            homogeneity.append(np.abs(scaled - c ** degree * base).reshape(samples, -1).max(axis=1)
                               / np.maximum(np.abs(c ** degree * base).reshape(samples, -1).max(axis=1), 1.0))
        terms, scaled_terms = calc.evaluate("measure_terms", x, y, t), calc.evaluate("measure_terms", x, c * y, t)
        homogeneity.append(np.abs(scaled_terms[:, 0] - terms[:, 0]) / np.maximum(np.abs(terms[:, 0]), 1.0))
        homogeneity.append(np.abs(scaled_terms[:, 1] - c * terms[:, 1]) / np.maximum(np.abs(c * terms[:, 1]), 1.0))
    reports.append(_report("homogeneity", "sphere bundle samples", np.concatenate(homogeneity), [1.0],
                           tolerance, dict(params)))

    cartan = calc.evaluate("cartan", x, y, t)
    contraction = np.einsum("bijk,bk->bij", cartan, y).reshape(samples, -1)
    reports.append(_report("cartan_contraction", "sphere bundle samples", np.max(np.abs(contraction), axis=1),
                           [1.0], tolerance, dict(params)))

    compat = chern_derivatives_batch(metric, calc.tensor("fundamental"), x, y, t).horizontal
    g = calc.evaluate("fundamental", x, y, t)
    reports.append(_report("chern_compatibility", "sphere bundle samples",
                           np.abs(compat).reshape(samples, -1).max(axis=1), [g], tolerance, dict(params)))

    spray = calc.evaluate("spray", x, y, t)
    gamma = calc.evaluate("chern", x, y, t)
    contracted = 0.5 * np.einsum("bijk,bj,bk->bi", gamma, y, y)
    reports.append(_report("spray_consistency", "sphere bundle samples",
                           np.abs(contracted - spray).max(axis=1), [spray, 1.0], tolerance, dict(params)))
    return reports
