"""
Closed-form metric families and measures on the periodic chart.

Every family is an instance of

    F(x, y; t) = e^{−λt} ( e^{φ(x)} |y| + e^{−κt} b(x)·y ),

with conformal factor φ(x) = a·cos x¹ and 1-form
b(x) = (c₁ + w₁·sin x², c₂ + w₂·sin x¹). The kind tag restricts which
parameters may be non-zero. Evaluators take an array module ``xp``
(numpy or jax.numpy) so the same formula feeds both plain sampling and
forward-mode differentiation.
"""
import math

from dataclasses import dataclass, asdict
from enum import Enum
from functools import lru_cache

import numpy as np

from finsflow.errors import ConfigurationError, MetricAdmissibilityError


class MetricKind(str, Enum):
    EUCLIDEAN = "euclidean"
    RIEMANNIAN_CONFORMAL = "riemannian-conformal"
    RANDERS = "randers"
    SHRINKING_SCALE = "shrinking-scale"
    CUSTOM_COMPOSITE = "custom-composite"


class MeasureKind(str, Enum):
    ZERO = "zero"
    COSINE = "cosine"
    CONFORMAL_VOLUME = "conformal-volume"


MIN_SMOOTHNESS = 4


@dataclass(frozen=True)
class MetricFamily:
    """
    Time-dependent Finsler norm on the 2-torus.

    :param kind: MetricKind value
    :param conformal_amplitude: a in φ(x) = a·cos x¹
    :param randers_const: Constant part (c₁, c₂) of the 1-form
    :param randers_wave: Wave amplitudes (w₁, w₂) of the 1-form
    :param shrink_rate: λ, the norm scales like e^{−λt}
    :param drift_rate: κ, the 1-form decays like e^{−κt} relative to the norm
    :param horizon: Time window T of the flow
    :param smoothness: Number of safely nestable derivatives
    """
    kind: str = MetricKind.EUCLIDEAN.value
    conformal_amplitude: float = 0.0
    randers_const: tuple = (0.0, 0.0)
    randers_wave: tuple = (0.0, 0.0)
    shrink_rate: float = 0.0
    drift_rate: float = 0.0
    horizon: float = 1.0
    smoothness: int = 6

    def __post_init__(self):
        object.__setattr__(self, "randers_const", tuple(float(c) for c in self.randers_const))
        object.__setattr__(self, "randers_wave", tuple(float(w) for w in self.randers_wave))
        try:
            kind = MetricKind(self.kind)
        except ValueError:
            choices = ", ".join(k.value for k in MetricKind)
            raise ConfigurationError(f"metric.kind must be one of {choices}, got {self.kind!r}.", "metric.kind")
        object.__setattr__(self, "kind", kind.value)
        if self.horizon <= 0.0:
            raise ConfigurationError(f"metric.horizon must be > 0, got {self.horizon}.", "metric.horizon")
        if self.smoothness < MIN_SMOOTHNESS:
            raise ConfigurationError(
                f"metric.smoothness must be >= {MIN_SMOOTHNESS}, got {self.smoothness}.", "metric.smoothness"
            )
        has_form = any(self.randers_const) or any(self.randers_wave)
        # Parameters each kind leaves fixed at zero.
        forbidden = {
            MetricKind.EUCLIDEAN: {
                "conformal_amplitude": self.conformal_amplitude, "randers": has_form,
                "shrink_rate": self.shrink_rate, "drift_rate": self.drift_rate,
            },
            MetricKind.RIEMANNIAN_CONFORMAL: {
                "randers": has_form, "shrink_rate": self.shrink_rate, "drift_rate": self.drift_rate,
            },
            MetricKind.RANDERS: {"shrink_rate": self.shrink_rate, "drift_rate": self.drift_rate},
            MetricKind.SHRINKING_SCALE: {"drift_rate": self.drift_rate},
            MetricKind.CUSTOM_COMPOSITE: {},
        }[kind]
        for name, value in forbidden.items():
            if value:
                field = "metric.randers_const" if name == "randers" else f"metric.{name}"
                raise ConfigurationError(f"{field} must be zero for metric kind {kind.value!r}.", field)
        if self.admissibility_bound() >= 1.0:
            raise MetricAdmissibilityError(
                f"Randers bound sup ‖b‖ = {self.admissibility_bound():.6g} must be < 1."
            )

    @property
    def is_static(self):
        return self.shrink_rate == 0.0 and self.drift_rate == 0.0

    @property
    def is_riemannian(self):
        return not (any(self.randers_const) or any(self.randers_wave))

    def admissibility_bound(self):
        """
        Upper bound of sup over x and t ∈ [0, T] of the 1-form's norm in the conformal metric.
        """
        c, w = self.randers_const, self.randers_wave
        euclid = math.hypot(abs(c[0]) + abs(w[0]), abs(c[1]) + abs(w[1]))
        drift = max(1.0, math.exp(-self.drift_rate * self.horizon))
        return euclid * drift * math.exp(abs(self.conformal_amplitude))

    def conformal_factor(self, xp, x):
        return self.conformal_amplitude * xp.cos(x[..., 0])

    def one_form(self, xp, x):
        c, w = self.randers_const, self.randers_wave
        b1 = c[0] + w[0] * xp.sin(x[..., 1])
        b2 = c[1] + w[1] * xp.sin(x[..., 0])
        return xp.stack([b1, b2], axis=-1)

    def norm(self, xp, x, y, t):
        """
        Evaluate F(x, y; t); arrays broadcast over leading axes.
        """
        phi = self.conformal_factor(xp, x)
        b = self.one_form(xp, x)
        euclid = xp.sqrt(y[..., 0] ** 2 + y[..., 1] ** 2)
        linear = b[..., 0] * y[..., 0] + b[..., 1] * y[..., 1]
        return xp.exp(-self.shrink_rate * t) * (xp.exp(phi) * euclid + xp.exp(-self.drift_rate * t) * linear)

    def to_dict(self):
        data = asdict(self)
        data["randers_const"] = list(self.randers_const)
        data["randers_wave"] = list(self.randers_wave)
        return data

    def __repr__(self):
        return (
            f"<MetricFamily(kind={self.kind!r}, conformal_amplitude={self.conformal_amplitude!r}, "
            f"randers_const={self.randers_const!r}, randers_wave={self.randers_wave!r}, "
            f"shrink_rate={self.shrink_rate!r}, drift_rate={self.drift_rate!r}, horizon={self.horizon!r})>"
        )


def euclidean(horizon=1.0):
    return MetricFamily(MetricKind.EUCLIDEAN.value, horizon=horizon)


def riemannian_conformal(amplitude, horizon=1.0):
    return MetricFamily(MetricKind.RIEMANNIAN_CONFORMAL.value, conformal_amplitude=amplitude, horizon=horizon)


def randers(const=(0.0, 0.0), wave=(0.0, 0.0), conformal_amplitude=0.0, horizon=1.0):
    return MetricFamily(
        MetricKind.RANDERS.value, conformal_amplitude=conformal_amplitude,
        randers_const=const, randers_wave=wave, horizon=horizon
    )


def shrinking_scale(rate, const=(0.0, 0.0), wave=(0.0, 0.0), conformal_amplitude=0.0, horizon=1.0):
    return MetricFamily(
        MetricKind.SHRINKING_SCALE.value, conformal_amplitude=conformal_amplitude,
        randers_const=const, randers_wave=wave, shrink_rate=rate, horizon=horizon
    )


@dataclass(frozen=True)
class MeasureSamples:
    """
    Grid samples of Φ, its gradient and its Hessian.
    """
    phi: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray


@dataclass(frozen=True)
class MeasureSpec:
    """
    Measure dμ = e^{Φ(x)} dx with a time-independent weight.

    Kinds: ``zero`` (Φ ≡ 0), ``cosine`` (Φ = A·cos x²) and
    ``conformal-volume`` (Φ = 2A·cos x¹, the volume weight of the conformal
    family with amplitude A).
    """
    kind: str = MeasureKind.ZERO.value
    amplitude: float = 0.0

    def __post_init__(self):
        try:
            kind = MeasureKind(self.kind)
        except ValueError:
            choices = ", ".join(k.value for k in MeasureKind)
            raise ConfigurationError(f"measure.kind must be one of {choices}, got {self.kind!r}.", "measure.kind")
        object.__setattr__(self, "kind", kind.value)
        if kind == MeasureKind.ZERO and self.amplitude:
            raise ConfigurationError("measure.amplitude must be zero for kind 'zero'.", "measure.amplitude")

    def weight(self, xp, x):
        if self.kind == MeasureKind.COSINE.value:
            return self.amplitude * xp.cos(x[..., 1])
        if self.kind == MeasureKind.CONFORMAL_VOLUME.value:
            return 2.0 * self.amplitude * xp.cos(x[..., 0])
        return 0.0 * x[..., 0]

    def weight_gradient(self, xp, x):
        zero = 0.0 * x[..., 0]
        if self.kind == MeasureKind.COSINE.value:
            return xp.stack([zero, -self.amplitude * xp.sin(x[..., 1])], axis=-1)
        if self.kind == MeasureKind.CONFORMAL_VOLUME.value:
            return xp.stack([-2.0 * self.amplitude * xp.sin(x[..., 0]), zero], axis=-1)
        return xp.stack([zero, zero], axis=-1)

    def weight_hessian(self, xp, x):
        zero = 0.0 * x[..., 0]
        d11, d22 = zero, zero
        if self.kind == MeasureKind.COSINE.value:
            d22 = -self.amplitude * xp.cos(x[..., 1])
        elif self.kind == MeasureKind.CONFORMAL_VOLUME.value:
            d11 = -2.0 * self.amplitude * xp.cos(x[..., 0])
        return xp.stack([xp.stack([d11, zero], axis=-1), xp.stack([zero, d22], axis=-1)], axis=-2)

    def samples(self, grid):
        return _measure_samples(self, grid)

    def to_dict(self):
        return asdict(self)


@lru_cache(maxsize=32)
def _measure_samples(measure, grid):
    x = np.stack(grid.coordinates(), axis=-1)
    return MeasureSamples(
        measure.weight(np, x), measure.weight_gradient(np, x), measure.weight_hessian(np, x)
    )
