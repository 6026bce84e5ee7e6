"""
Scenario configuration: YAML sections parsed into validated dataclasses.
"""
import logging
import math

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from finsflow.chart_grid import TrigMode, TrigSeries, build_grid
from finsflow.errors import ConfigurationError
from finsflow.estimates import EstimateConfig, HarnackConfig
from finsflow.metrics import MeasureSpec, MetricFamily

IDENTITY_CHECKS = (
    "tensor", "bochner", "gradient_evolution", "exchange", "flux_quadrature", "log_heat", "evolution", "hessian_trace",
)


def _modes(modes, section):
    converted = []
    for mode in modes:
        if isinstance(mode, TrigMode):
            converted.append(mode)
            continue
        try:
            converted.append(TrigMode(**mode))
        except TypeError as error:
            raise ConfigurationError(f"{section}.modes has an invalid entry {mode!r}: {error}", f"{section}.modes")
        if converted[-1].kind not in ("cos", "sin"):
            raise ConfigurationError(f"{section}.modes kind must be 'cos' or 'sin'.", f"{section}.modes")
    return tuple(converted)


@dataclass(frozen=True)
class GridConfig:
    resolution: tuple = (64, 64)
    period: tuple = (2 * math.pi, 2 * math.pi)
    cfl: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "resolution", tuple(int(r) for r in self.resolution))
        object.__setattr__(self, "period", tuple(float(p) for p in self.period))
        build_grid(self.resolution, self.period)
        if not 0.0 < self.cfl <= 1.0:
            raise ConfigurationError(f"grid.cfl must be in (0, 1], got {self.cfl}.", "grid.cfl")

    def build(self):
        return build_grid(self.resolution, self.period)


@dataclass(frozen=True)
class InitialDataConfig:
    """
    Closed-form u₀ = base + Σ modes.
    """
    base: float = 2.0
    modes: tuple = (TrigMode(1.0, 1, 0, "cos"),)

    def __post_init__(self):
        object.__setattr__(self, "modes", _modes(self.modes, "initial_data"))

    def series(self):
        return TrigSeries(self.base, self.modes)


@dataclass(frozen=True)
class IdentityConfig:
    """
    Identity checks to run and their sampling parameters.

    ``script_modes``/``script_decay`` define the closed-form field used for
    the flow-independent identities, ``test_modes`` the quadrature test
    function.
    """
    checks: tuple = IDENTITY_CHECKS
    probes: int = 16
    samples: int = 200
    time: float = 0.25
    step: float = 1e-3
    critical_fraction: float = 0.25
    margin: int = 2
    refinements: int = 1
    script_modes: tuple = (
        TrigMode(1.0, 1, 0, "sin"), TrigMode(0.5, 1, 0, "cos"), TrigMode(0.3, 0, 1, "sin"), TrigMode(0.2, 0, 1, "cos"),
    )
    script_decay: float = 0.0
    test_modes: tuple = (TrigMode(1.0, 0, 1, "sin"), TrigMode(0.5, 1, 0, "cos"))

    def __post_init__(self):
        object.__setattr__(self, "checks", tuple(self.checks))
        object.__setattr__(self, "script_modes", _modes(self.script_modes, "identities.script"))
        object.__setattr__(self, "test_modes", _modes(self.test_modes, "identities.test"))
        unknown = [c for c in self.checks if c not in IDENTITY_CHECKS]
        if unknown:
            raise ConfigurationError(
                f"identities.checks has unknown entries {unknown}; choose from {list(IDENTITY_CHECKS)}.",
                "identities.checks"
            )
        if self.probes < 1 or self.samples < 1:
            raise ConfigurationError("identities.probes and identities.samples must be >= 1.", "identities.probes")
        if not self.time > self.step > 0.0:
            raise ConfigurationError("identities.time must exceed identities.step > 0.", "identities.time")
        if self.refinements < 1:
            raise ConfigurationError(f"identities.refinements must be >= 1, got {self.refinements}.",
                                     "identities.refinements")
        if not 0.0 <= self.critical_fraction < 1.0 or self.margin < 0:
            raise ConfigurationError("identities.critical_fraction must lie in [0, 1), margin >= 0.",
                                     "identities.critical_fraction")

    def script(self):
        return TrigSeries(0.0, self.script_modes)

    def test_function(self):
        return TrigSeries(0.0, self.test_modes)


@dataclass(frozen=True)
class HarnackSection(HarnackConfig):
    enabled: bool = True

    def settings(self):
        return HarnackConfig(self.pairs, self.curve_samples, self.min_gap, self.max_gap)


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "runs"
    trajectories: bool = True


SECTIONS = {
    "grid": GridConfig,
    "metric": MetricFamily,
    "measure": MeasureSpec,
    "initial_data": InitialDataConfig,
    "estimate": EstimateConfig,
    "harnack": HarnackSection,
    "identities": IdentityConfig,
    "output": OutputConfig,
}


def _build_section(name, data):
    cls = SECTIONS[name]
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigurationError(f"Section '{name}' must be a mapping.", name)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"Unknown field {name}.{unknown[0]}.", f"{name}.{unknown[0]}")
    try:
        return cls(**data)
    except ConfigurationError as error:
        if error.field is None:
            error.field = name
        raise
    except (TypeError, ValueError) as error:
        raise ConfigurationError(f"Invalid section '{name}': {error}", name) from error


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Complete scenario: grid, metric family, measure, initial data and the
    parameters of every phase.
    """
    name: str = "scenario"
    seed: int = 0
    grid: GridConfig = field(default_factory=GridConfig)
    metric: MetricFamily = field(default_factory=MetricFamily)
    measure: MeasureSpec = field(default_factory=MeasureSpec)
    initial_data: InitialDataConfig = field(default_factory=InitialDataConfig)
    estimate: EstimateConfig = field(default_factory=EstimateConfig)
    harnack: HarnackSection = field(default_factory=HarnackSection)
    identities: IdentityConfig = field(default_factory=IdentityConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}.", "seed")
        if max(self.estimate.check_times) > self.metric.horizon + 1e-12:
            raise ConfigurationError(
                f"estimate.check_times must lie within the metric horizon {self.metric.horizon}.",
                "estimate.check_times"
            )
        if self.identities.time + self.identities.step > self.metric.horizon + 1e-12:
            raise ConfigurationError("identities.time + step must lie within the metric horizon.", "identities.time")
        values = self.initial_field().values
        if np.min(values) <= 0.0:
            raise ConfigurationError(
                f"initial_data must be positive on the grid, minimum is {np.min(values):.6g}.", "initial_data"
            )

    def build_grid(self):
        return self.grid.build()

    def initial_field(self, grid=None):
        return self.initial_data.series().on_grid(grid or self.build_grid(), 0.0)

    @classmethod
    def from_dict(cls, data):
        """
        Build a validated config from plain YAML data.

        :raises ConfigurationError: Naming the offending field
        """
        data = dict(data or {})
        unknown = sorted(set(data) - {"name", "seed"} - set(SECTIONS))
        if unknown:
            raise ConfigurationError(f"Unknown section '{unknown[0]}'.", unknown[0])
        sections = {name: _build_section(name, data.get(name)) for name in SECTIONS}
        return cls(name=str(data.get("name", "scenario")), seed=data.get("seed", 0), **sections)

    @classmethod
    def load(cls, path):
        """
        Load a scenario from a YAML file.
        """
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8"))
        except OSError as error:
            raise ConfigurationError(f"Cannot read scenario {path}: {error}", "config") from error
        except yaml.YAMLError as error:
            raise ConfigurationError(f"Scenario {path} is not valid YAML: {error}", "config") from error
        config = cls.from_dict(data)
        logging.info(f"Loaded scenario '{config.name}' from {path}.")
        return config

    def to_dict(self):
        data = {"name": self.name, "seed": self.seed}
        for name in SECTIONS:
            section = getattr(self, name)
            data[name] = _plain(section.to_dict() if hasattr(section, "to_dict") else asdict(section))
        return data

    def dump(self, path):
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False), encoding="utf-8")

    def with_overrides(self, seed=None, out=None, refinements=None):
        """
        Apply command-line overrides and re-validate.
        """
        data = self.to_dict()
        if seed is not None:
            data["seed"] = int(seed)
        if out is not None:
            data["output"]["directory"] = str(out)
        if refinements is not None:
            data["identities"]["refinements"] = int(refinements)
        return ScenarioConfig.from_dict(data)
