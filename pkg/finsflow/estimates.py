"""
Hypothesis constants over the sphere bundle, the Q constant, and the
gradient-estimate and Harnack margin sweeps along a heat-flow trajectory.
"""
import logging
import math

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from finsflow.chart_grid import CurveSpec, curve_length, interpolate
from finsflow.errors import ConfigurationError, DomainError
from finsflow.finsler_core import DIMENSION, calculus_for, geodesic_s_curvature, sphere_sample, weighted_ricci
from finsflow.flow_pde import flow_tensor_batch
from finsflow.legendre_gradient import dual_norm

MIN_DIRECTIONS = 16
MARGIN_TOLERANCE = 1e-6
EPSILON_GRID = np.logspace(-4.0, 2.0, 61)
REDUCTION_TOLERANCE = 1e-9


@dataclass(frozen=True)
class EstimateConfig:
    """
    Parameters of the gradient estimate.

    :param alpha: α > 1
    :param epsilon: ε > 0
    :param N: Effective dimension N > n
    :param check_times: Stamps at which the estimate is swept
    :param directions: Sphere samples per node for constant estimation
    :param stride: Node stride for constant estimation
    """
    alpha: float = 2.0
    epsilon: float = 0.05
    N: float = 4.0
    check_times: tuple = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5)
    directions: int = MIN_DIRECTIONS
    stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "check_times", tuple(float(t) for t in self.check_times))
        if not self.alpha > 1.0:
            raise ConfigurationError(f"estimate.alpha must be > 1, got {self.alpha}.", "estimate.alpha")
        if not self.epsilon > 0.0:
            raise ConfigurationError(f"estimate.epsilon must be > 0, got {self.epsilon}.", "estimate.epsilon")
        if not self.N > DIMENSION:
            raise ConfigurationError(f"estimate.N must be > {DIMENSION}, got {self.N}.", "estimate.N")
        if not self.check_times or min(self.check_times) <= 0.0 or list(self.check_times) != sorted(set(self.check_times)):
            raise ConfigurationError(
                "estimate.check_times must be a non-empty increasing list of positive times.", "estimate.check_times"
            )
        if self.directions < MIN_DIRECTIONS:
            raise ConfigurationError(
                f"estimate.directions must be >= {MIN_DIRECTIONS}, got {self.directions}.", "estimate.directions"
            )
        if self.stride < 1:
            raise ConfigurationError(f"estimate.stride must be >= 1, got {self.stride}.", "estimate.stride")


@dataclass(frozen=True)
class HarnackConfig:
    """
    Random point pairs for the Harnack sweep.

    :param pairs: Number of seeded random pairs
    :param curve_samples: Simpson samples along each straight curve
    :param min_gap: Smallest admissible t₂ − t₁
    :param max_gap: Largest admissible t₂ − t₁
    """
    pairs: int = 20
    curve_samples: int = 65
    min_gap: float = 0.05
    max_gap: float = 0.3

    def __post_init__(self):
        if self.pairs < 0:
            raise ConfigurationError(f"harnack.pairs must be >= 0, got {self.pairs}.", "harnack.pairs")
        if not 0.0 < self.min_gap <= self.max_gap:
            raise ConfigurationError("harnack gaps must satisfy 0 < min_gap <= max_gap.", "harnack.min_gap")


@dataclass
class HypothesisConstants:
    """
    Sampled suprema bounding the curvature and flow hypotheses.

    ``K`` uses S and Ṡ differenced along integrated geodesics; the census
    records their largest gap to the exact spray values. ``K_prime`` is the
    squared bound sup F²(∇τ) = sup F*²(τ_|), ``K_prime_unsquared`` its root.
    ``locations`` maps each constant to the sample (x, y, t) realizing it.
    """
    n: int
    N: float
    K: float
    K_prime: float
    K_prime_unsquared: float
    L1: float
    L2: float
    L3: float
    census: dict = field(default_factory=dict)
    locations: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _sup(values, x, y, t):
    values = np.asarray(values, dtype=float)
    index = int(np.argmax(values))
    location = {"x": x[index].tolist(), "y": y[index].tolist(), "t": float(t[index])}
    return float(values[index]), location


def _generalized_radius(g, h):
    """
    Spectral radius of g⁻¹h, through the Cholesky factor of g.
    """
    lower = np.linalg.cholesky(g)
    inverse = np.linalg.inv(lower)
    reduced = inverse @ h @ np.swapaxes(inverse, -1, -2)
    return np.max(np.abs(np.linalg.eigvalsh(reduced)), axis=-1)


def estimate_constants(metric, measure, grid, times, directions=MIN_DIRECTIONS, N=4.0, stride=1):
    """
    Estimate K, K′, L1, L2 and L3 over grid nodes × unit F-spheres × times.

    :param times: Flow times covering the trajectory window
    :param directions: Directions per node (at least 16)
    :param stride: Node stride, 1 for every node
    :return: HypothesisConstants
    :raises ConfigurationError: On too few directions or N ≤ n
    """
    if directions < MIN_DIRECTIONS:
        raise ConfigurationError(
            f"estimate.directions must be >= {MIN_DIRECTIONS}, got {directions}.", "estimate.directions"
        )
    if not N > DIMENSION:
        raise ConfigurationError(f"estimate.N must be > {DIMENSION}, got {N}.", "estimate.N")
    calc = calculus_for(metric, measure)
    nodes = grid.points()[::stride]
    xs, ys, ts = [], [], []
    for t in times:
        for x in nodes:
            xs.append(np.broadcast_to(x, (directions, 2)))
            ys.append(sphere_sample(metric, x, t, directions))
            ts.append(np.full(directions, float(t)))
    x, y, t = np.concatenate(xs), np.concatenate(ys), np.concatenate(ts)

    terms = calc.evaluate("measure_terms", x, y, t)
    s, s_dot = geodesic_s_curvature(calc, x, y, t)
    ricci_n = weighted_ricci(terms[:, 3], s, s_dot, N)
    g = calc.evaluate("fundamental", x, y, t)
    tau_h = calc.evaluate("tau_horizontal", x, y, t)
    tau_energy = dual_norm(metric, x, t, tau_h) ** 2
    package = flow_tensor_batch(metric, x, y, t, measure=measure)

    k, k_at = _sup(-ricci_n, x, y, t)
    k_prime, k_prime_at = _sup(tau_energy, x, y, t)
    l1, l1_at = _sup(_generalized_radius(g, package.h), x, y, t)
    l2, l2_at = _sup(package.trace_dual_norm, x, y, t)
    l3, l3_at = _sup(package.vertical_hs_norm, x, y, t)
    census = {
        "points": int(nodes.shape[0]), "directions": int(directions), "times": len(times),
        "samples": int(x.shape[0]),
        "s_curvature_gap": float(np.max(np.abs(s - terms[:, 1]))),
        "s_dot_gap": float(np.max(np.abs(s_dot - terms[:, 2]))),
    }
    constants = HypothesisConstants(
        DIMENSION, float(N), max(k, 0.0), k_prime, math.sqrt(k_prime), l1, l2, l3, census,
        {"K": k_at, "K_prime": k_prime_at, "L1": l1_at, "L2": l2_at, "L3": l3_at},
    )
    logging.info(
        f"Constants over {census['samples']} samples: K={constants.K:.6g}, K'={k_prime:.6g}, "
        f"L1={l1:.6g}, L2={l2:.6g}, L3={l3:.6g}."
    )
    return constants


def compute_q(constants, alpha, epsilon, N, sharper=False):
    """
    Q = (K−ε)/(α−1) + K′/(2(α−1)(N−n)) + c·L1 + √(2/(εN))·L2 + √(8/N)·L3

    with c = 1 + √(2(N−n+4)), or c = 1 + √(2n(N−n+4)/N) when ``sharper``.

    :raises DomainError: If α ≤ 1, ε ≤ 0 or N ≤ n
    """
    n = DIMENSION
    if not alpha > 1.0:
        raise DomainError(f"alpha must be > 1, got {alpha}.")
    if not epsilon > 0.0:
        raise DomainError(f"epsilon must be > 0, got {epsilon}.")
    if not N > n:
        raise DomainError(f"N must be > {n}, got {N}.")
    if sharper:
        coefficient = 1.0 + math.sqrt(2.0 * n * (N - n + 4.0) / N)
    else:
        coefficient = 1.0 + math.sqrt(2.0 * (N - n + 4.0))
    return (
        (constants.K - epsilon) / (alpha - 1.0)
        + constants.K_prime / (2.0 * (alpha - 1.0) * (N - n))
        + coefficient * constants.L1
        + math.sqrt(2.0 / (epsilon * N)) * constants.L2
        + math.sqrt(8.0 / N) * constants.L3
    )


def gradient_bound(t, alpha, N, q):
    """
    Right side Nα²/t + (Nα²/2)·Q of the gradient estimate.
    """
    return N * alpha ** 2 / t + 0.5 * N * alpha ** 2 * q


@dataclass
class MarginReport:
    """
    Checked inequality LHS ≤ RHS over a sample set.

    ``samples`` describes each entry of ``lhs``/``rhs``; ``stamp_minima``
    lists (time, minimum margin) per stamp for the gradient estimate.
    """
    tag: str
    lhs: np.ndarray
    rhs: np.ndarray
    samples: list
    constants: HypothesisConstants
    config: dict
    q: float
    q_sharper: float
    stamp_minima: list = field(default_factory=list)

    @property
    def margins(self):
        return np.asarray(self.rhs, dtype=float) - np.asarray(self.lhs, dtype=float)

    @property
    def min_margin(self):
        return float(np.min(self.margins)) if np.size(self.margins) else math.inf

    @property
    def location(self):
        return self.samples[int(np.argmin(self.margins))] if np.size(self.margins) else None

    @property
    def tolerance(self):
        rhs = np.asarray(self.rhs, dtype=float)
        finite = rhs[np.isfinite(rhs)]
        return MARGIN_TOLERANCE * (float(np.max(np.abs(finite))) if finite.size else 1.0)

    @property
    def passed(self):
        return self.min_margin >= -self.tolerance

    def to_dict(self):
        return {
            "tag": self.tag,
            "count": int(np.size(self.margins)),
            "min_margin": self.min_margin,
            "location": self.location,
            "tolerance": self.tolerance,
            "q": self.q,
            "q_sharper": self.q_sharper,
            "constants": self.constants.to_dict(),
            "config": dict(self.config),
            "stamp_minima": [{"time": t, "min_margin": m} for t, m in self.stamp_minima],
            "passed": self.passed,
        }


def _check_stamps(trajectory, check_times):
    stamps = []
    for t in check_times:
        stamps.append(trajectory.stamp_index(t))
    return stamps


def gradient_estimate_check(trajectory, constants, config):
    """
    Sweep F²(∇f) − α·f_t ≤ Nα²/t + (Nα²/2)·Q over nodes × check stamps.

    Off the mask F(∇f) = 0, so the left side reduces to −α·f_t.

    :param config: EstimateConfig
    :return: MarginReport
    """
    alpha, N = config.alpha, config.N
    q = compute_q(constants, alpha, config.epsilon, N)
    q_sharper = compute_q(constants, alpha, config.epsilon, N, sharper=True)
    lhs, rhs, samples, minima = [], [], [], []
    for stamp in _check_stamps(trajectory, config.check_times):
        t = float(trajectory.times[stamp])
        left = trajectory.gradient_norm[stamp] ** 2 - alpha * trajectory.f_t[stamp]
        bound = gradient_bound(t, alpha, N, q)
        lhs.append(left.ravel())
        rhs.append(np.full(left.size, bound))
        minima.append((t, float(bound - np.max(left))))
        rows, cols = np.unravel_index(np.arange(left.size), left.shape)
        samples.extend({"time": t, "node": [int(i), int(j)]} for i, j in zip(rows, cols))
    report = MarginReport(
        "gradient_estimate", np.concatenate(lhs), np.concatenate(rhs), samples, constants,
        asdict(config), q, q_sharper, minima
    )
    logging.info(
        f"Gradient estimate: min margin {report.min_margin:.6g} over {len(samples)} samples, "
        f"{'PASS' if report.passed else 'FAIL'}."
    )
    return report


@dataclass(frozen=True)
class HarnackPair:
    """
    Point pair for the Harnack inequality, x₁ at the earlier time t₁.
    """
    x1: tuple
    x2: tuple
    t1: float
    t2: float


def draw_pairs(trajectory, rng, config):
    """
    Draw seeded random point pairs with stamp gaps in [min_gap, max_gap].

    Falls back to every ordered stamp pair when no gap fits the window.
    """
    times = trajectory.times
    candidates = [
        (i, j) for i in range(len(times)) for j in range(i + 1, len(times))
        if config.min_gap - 1e-12 <= times[j] - times[i] <= config.max_gap + 1e-12
    ]
    if not candidates:
        candidates = [(i, j) for i in range(len(times)) for j in range(i + 1, len(times))]
    if not candidates:
        raise DomainError("Harnack pairs need at least two trajectory stamps.")
    period = np.asarray(trajectory.grid.period)
    pairs = []
    for _ in range(config.pairs):
        i, j = candidates[int(rng.integers(len(candidates)))]
        x1 = tuple(float(v) for v in rng.uniform(0.0, 1.0, 2) * period)
        x2 = tuple(float(v) for v in rng.uniform(0.0, 1.0, 2) * period)
        pairs.append(HarnackPair(x1, x2, float(times[i]), float(times[j])))
    return pairs


def harnack_log_bound(trajectory, q, alpha, N, pair, curve_samples=65):
    """
    Logarithm of u(x₂,t₂)·(t₂/t₁)^{Nα}·exp{(α/4)·E/(t₂−t₁) + (Nα/2)·Q·(t₂−t₁)},
    with E the F²-energy of the straight curve from x₂ to x₁.

    :raises DomainError: If t₁ ≥ t₂
    """
    if pair.t1 >= pair.t2:
        raise DomainError(f"Harnack pair needs t1 < t2, got t1={pair.t1}, t2={pair.t2}.")
    grid = trajectory.grid
    later = trajectory.u[trajectory.stamp_index(pair.t2)]
    u2 = float(interpolate(grid, later, np.asarray(pair.x2)))
    gap = pair.t2 - pair.t1
    curve = CurveSpec(pair.x2, pair.x1, pair.t1, pair.t2, curve_samples)
    energy = curve_length(curve, trajectory.metric, power=2)
    return (
        math.log(u2) + N * alpha * math.log(pair.t2 / pair.t1)
        + 0.25 * alpha * energy / gap + 0.5 * N * alpha * q * gap
    )


def harnack_check(trajectory, constants, config, pairs, harnack=None):
    """
    Check u(x₁,t₁) ≤ RHS for every pair; margins are log RHS − log u(x₁,t₁).

    :param config: EstimateConfig
    :param pairs: List of HarnackPair
    :param harnack: HarnackConfig for the curve sample count
    :return: MarginReport
    :raises DomainError: If a pair has t₁ ≥ t₂
    """
    harnack = harnack or HarnackConfig()
    alpha, N = config.alpha, config.N
    q = compute_q(constants, alpha, config.epsilon, N)
    q_sharper = compute_q(constants, alpha, config.epsilon, N, sharper=True)
    lhs, rhs, samples = [], [], []
    for pair in pairs:
        rhs.append(harnack_log_bound(trajectory, q, alpha, N, pair, harnack.curve_samples))
        earlier = trajectory.u[trajectory.stamp_index(pair.t1)]
        lhs.append(math.log(float(interpolate(trajectory.grid, earlier, np.asarray(pair.x1)))))
        samples.append(asdict(pair))
    echo = dict(asdict(config), **{"harnack": asdict(harnack)})
    report = MarginReport("harnack", np.asarray(lhs), np.asarray(rhs), samples, constants, echo, q, q_sharper)
    logging.info(
        f"Harnack: min log margin {report.min_margin:.6g} over {len(pairs)} pairs, "
        f"{'PASS' if report.passed else 'FAIL'}."
    )
    return report


@dataclass
class StaticReductionRecord:
    estimated_q: float
    forced_q: float
    max_margin_difference: float
    estimated_passed: bool
    forced_passed: bool

    @property
    def agrees(self):
        return self.max_margin_difference <= REDUCTION_TOLERANCE * max(1.0, abs(self.estimated_q)) \
            and self.estimated_passed == self.forced_passed

    def to_dict(self):
        return dict(asdict(self), agrees=self.agrees)


def static_reduction_compare(trajectory, constants, config):
    """
    Compare the sweep with estimated constants against the static
    specialization L1 = L2 = L3 = 0.

    :raises DomainError: If the trajectory's metric family is not static
    """
    if not trajectory.metric.is_static:
        raise DomainError(f"Static reduction needs a static family, got {trajectory.metric.kind!r}.")
    forced = replace(constants, L1=0.0, L2=0.0, L3=0.0)
    estimated_report = gradient_estimate_check(trajectory, constants, config)
    forced_report = gradient_estimate_check(trajectory, forced, config)
    return StaticReductionRecord(
        estimated_report.q, forced_report.q,
        float(np.max(np.abs(estimated_report.margins - forced_report.margins))),
        estimated_report.passed, forced_report.passed,
    )


def min_over_epsilon(constants, alpha, N, cap, grid=EPSILON_GRID):
    """
    Minimize Q over ε ∈ (0, cap] on a logarithmic grid, the cap included.

    :param cap: Largest admissible ε, max(K, configured ε) in the sweeps
    :return: Tuple (ε, Q)
    """
    candidates = np.append(grid[grid < cap], cap)
    values = np.array([compute_q(constants, alpha, eps, N) for eps in candidates])
    index = int(np.argmin(values))
    return float(candidates[index]), float(values[index])


def epsilon_stability(trajectory, constants, config):
    """
    Re-run the gradient sweep with the Q-minimizing ε and compare verdicts.
    """
    epsilon, q = min_over_epsilon(constants, config.alpha, config.N, max(constants.K, config.epsilon))
    baseline = gradient_estimate_check(trajectory, constants, config)
    tuned = gradient_estimate_check(trajectory, constants, replace(config, epsilon=epsilon))
    return {
        "epsilon": epsilon, "q": q, "passed": tuned.passed, "baseline_passed": baseline.passed,
        "stable": tuned.passed == baseline.passed,
    }


def bound_monotonicity(constants, config, times, factor=2.0):
    """
    Evaluate the gradient-estimate bound on a lattice and report whether it is
    nonincreasing in t and nondecreasing in each of K, K′, L1, L2, L3.
    """
    alpha, eps, N = config.alpha, config.epsilon, config.N
    times = np.sort(np.asarray(times, dtype=float))
    q = compute_q(constants, alpha, eps, N)
    bounds = np.array([gradient_bound(t, alpha, N, q) for t in times])
    result = {"time": bool(np.all(np.diff(bounds) <= 0.0))}
    for name in ("K", "K_prime", "L1", "L2", "L3"):
        bumped = replace(constants, **{name: getattr(constants, name) * factor + 1.0})
        result[name] = compute_q(bumped, alpha, eps, N) > q
    return result
