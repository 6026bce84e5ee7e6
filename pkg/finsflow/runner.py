"""
Run orchestration: constant estimation, identity checks, heat flow, the
gradient-estimate sweep and the Harnack sweep for one scenario.
"""
import logging
import time

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from finsflow.chart_grid import build_grid
from finsflow.config import ScenarioConfig
from finsflow.controllers.run_controller import RunController, run_from_report
from finsflow.errors import (
    DomainError,
    IntegrationQualityError,
    MetricAdmissibilityError,
    PositivityError,
    SmoothnessError,
    SolverError,
)
from finsflow.estimates import (
    compute_q,
    draw_pairs,
    epsilon_stability,
    estimate_constants,
    gradient_estimate_check,
    harnack_check,
    min_over_epsilon,
    static_reduction_compare,
)
from finsflow.flow_pde import run_heat_flow
from finsflow.identities import (
    ScriptedField,
    check_bochner,
    check_evolution_pdes,
    check_exchange,
    check_hessian_trace_inequality,
    check_gradient_evolution,
    check_flux_quadrature,
    check_log_heat,
    check_tensor_identities,
    with_order,
)
from finsflow.models.common import open_session
from finsflow.report import emit_report, ensure_writable

PHASES = ("constants", "identities", "heat_flow", "gradient_estimate", "harnack")

TOLERANCES = {
    "tensor": 1e-8,
    "bochner": 1e-3,
    "gradient_evolution": 5e-4,
    "exchange": 5e-4,
    "flux_quadrature": 5e-3,
    "log_heat": 5e-3,
    "evolution": 5e-3,
    "hessian_trace": 1e-8,
    "hessian_trace_identity": 5e-3,
}

NUMERICAL_ERRORS = (
    SolverError, PositivityError, IntegrationQualityError, DomainError, MetricAdmissibilityError, SmoothnessError,
)

# Child seeds, one stream per random consumer.
PROBE_STREAM, TENSOR_STREAM, PAIR_STREAM = range(3)


@dataclass
class RunReport:
    """
    Outcome of one scenario run.
    """
    config: ScenarioConfig
    phases: tuple
    constants: object = None
    q: dict = field(default_factory=dict)
    identities: list = field(default_factory=list)
    gradient: object = None
    harnack: object = None
    static_reduction: object = None
    epsilon: dict = None
    trajectory: object = None
    timings: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def verdicts(self):
        """
        (tag, passed) for every enabled check, in report order.
        """
        verdicts = [(r.tag, r.passed) for r in self.identities]
        if self.gradient is not None:
            verdicts.append(("gradient_estimate", self.gradient.passed))
        if self.static_reduction is not None:
            verdicts.append(("static_reduction", self.static_reduction.agrees))
        if self.epsilon is not None:
            verdicts.append(("epsilon_stability", self.epsilon["stable"]))
        if self.harnack is not None:
            verdicts.append(("harnack", self.harnack.passed))
        return verdicts

    @property
    def passed(self):
        return not self.failures and all(passed for _, passed in self.verdicts())

    @property
    def rollup(self):
        return "PASS" if self.passed else "FAIL"

    def to_dict(self):
        data = {
            "scenario": self.config.name,
            "seed": self.config.seed,
            "phases": list(self.phases),
            "rollup": self.rollup,
            "config": self.config.to_dict(),
        }
        if self.constants is not None:
            data["constants"] = self.constants.to_dict()
            data["q"] = dict(self.q)
        if self.identities:
            data["identities"] = {r.tag: r.to_dict() for r in self.identities}
        if self.trajectory is not None:
            data["heat_flow"] = {"dt_max": self.trajectory.dt, "stamps": list(self.trajectory.diagnostics)}
        if self.gradient is not None:
            data["gradient_estimate"] = self.gradient.to_dict()
        if self.static_reduction is not None:
            data["static_reduction"] = self.static_reduction.to_dict()
        if self.epsilon is not None:
            data["epsilon_stability"] = dict(self.epsilon)
        if self.harnack is not None:
            data["harnack"] = self.harnack.to_dict()
        data["failures"] = list(self.failures)
        return data


def _rng(seed, stream):
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(stream + 1)[stream])


def _levels(config, refinements):
    """
    Grid resolutions and step sizes of a refinement sequence, coarsest first.
    """
    finest = config.grid.resolution
    resolutions, steps = [], []
    for level in range(refinements - 1, -1, -1):
        resolution = tuple(r // 2 ** level for r in finest)
        if min(resolution) < 16:
            continue
        resolutions.append(resolution)
        steps.append(config.identities.step * 2 ** level)
    return resolutions, steps


def _probe_points(grid, rng, count):
    nodes = rng.choice(grid.size, size=min(count, grid.size), replace=False)
    return grid.points()[np.sort(nodes)]


class ScenarioRunner:
    """
    Executes the phases of one scenario and collects a RunReport.

    :param config: ScenarioConfig
    :param threads: Worker threads for independent identity checks
    :param refinements: Refinement levels for convergence orders (1 disables)
    """
    def __init__(self, config, threads=1, refinements=None):
        self.config = config
        self.threads = max(1, int(threads))
        self.refinements = refinements if refinements is not None else config.identities.refinements
        self.metric = config.metric
        self.measure = config.measure
        self.grid = config.build_grid()

    # Stamps of the heat flow: the check times plus a three-stamp window
    # around the identity time for time differencing.
    def stamps(self):
        ident = self.config.identities
        stamps = set(self.config.estimate.check_times)
        if self._trajectory_checks():
            stamps.update({ident.time - ident.step, ident.time, ident.time + ident.step})
        return sorted(stamps)

    def _trajectory_checks(self):
        return [c for c in ("log_heat", "evolution", "hessian_trace") if c in self.config.identities.checks]

    def _flow_checks(self):
        return [c for c in ("tensor", "bochner", "gradient_evolution", "exchange", "flux_quadrature") if c in self.config.identities.checks]

    def estimate(self):
        est = self.config.estimate
        times = sorted({0.0, *est.check_times})
        constants = estimate_constants(self.metric, self.measure, self.grid, times, est.directions, est.N, est.stride)
        eps_min, q_min = min_over_epsilon(constants, est.alpha, est.N, max(constants.K, est.epsilon))
        q = {
            "stated": compute_q(constants, est.alpha, est.epsilon, est.N),
            "sharper": compute_q(constants, est.alpha, est.epsilon, est.N, sharper=True),
            "epsilon_min": eps_min,
            "min_over_epsilon": q_min,
        }
        return constants, q

    def _scripted_checks(self, check, resolution, step):
        """
        Reports of one flow-independent check at one refinement level.
        """
        ident = self.config.identities
        grid = build_grid(resolution, self.config.grid.period)
        script = ScriptedField(ident.script(), ident.script_decay)
        probes = _probe_points(self.grid, _rng(self.config.seed, PROBE_STREAM), ident.probes)
        t = ident.time
        if check == "bochner":
            u = self.config.initial_data.series().on_grid(grid, t)
            return [check_bochner(self.metric, self.measure, u, t, TOLERANCES["bochner"],
                                  ident.critical_fraction, ident.margin)]
        if check == "gradient_evolution":
            return [check_gradient_evolution(self.metric, script, t, probes, step, TOLERANCES["gradient_evolution"])]
        if check == "exchange":
            return list(check_exchange(self.metric, self.measure, script, grid, t, probes, step,
                                       TOLERANCES["exchange"], "formula", ident.critical_fraction, ident.margin))
        if check == "flux_quadrature":
            return [check_flux_quadrature(self.metric, self.measure, script, ident.test_function(), grid, t,
                                             TOLERANCES["flux_quadrature"])]
        raise DomainError(f"Unknown identity check {check!r}.")

    def _trajectory_reports(self, trajectory):
        ident = self.config.identities
        stamp = trajectory.stamp_index(ident.time)
        est = self.config.estimate
        reports = []
        checks = self._trajectory_checks()
        if "log_heat" in checks:
            reports.append(check_log_heat(trajectory, stamp, TOLERANCES["log_heat"], ident.critical_fraction,
                                          ident.margin))
        if "evolution" in checks:
            reports.extend(check_evolution_pdes(trajectory, est.alpha, stamp, TOLERANCES["evolution"],
                                                ident.critical_fraction, ident.margin))
        if "hessian_trace" in checks:
            stamp_reports = [
                check_hessian_trace_inequality(trajectory, k, est.N, TOLERANCES["hessian_trace"],
                                               TOLERANCES["hessian_trace_identity"], ident.critical_fraction,
                                               ident.margin)
                for k in range(len(trajectory))
            ]
            # Smallest slack among failing stamps, else among all stamps.
            failing = [r for r in stamp_reports if not r.passed]
            worst = min(failing or stamp_reports, key=lambda r: r.parameters["min_slack"])
            worst.parameters["stamps_checked"] = len(stamp_reports)
            reports.append(worst)
        return reports

    def flow_identities(self):
        """
        Flow-independent identities, with convergence orders when refined.
        """
        resolutions, steps = _levels(self.config, self.refinements)
        jobs = []
        for check in self._flow_checks():
            if check == "tensor":
                jobs.append(("tensor", None))
            else:
                jobs.append((check, [(r, s) for r, s in zip(resolutions, steps)]))

        def run(job):
            check, levels = job
            if check == "tensor":
                rng = _rng(self.config.seed, TENSOR_STREAM)
                return check_tensor_identities(self.metric, self.measure, rng, self.config.identities.samples,
                                               TOLERANCES["tensor"])
            per_level = [self._scripted_checks(check, r, s) for r, s in levels]
            if len(levels) < 3:
                return per_level[-1]
            # Grid checks refine the spacing, probe checks the time step.
            spacing = [s for _, s in levels] if check == "gradient_evolution" else [2 * np.pi / r[0] for r, _ in levels]
            reports = []
            for position in range(len(per_level[-1])):
                sequence = [level[position] for level in per_level]
                if check == "exchange" and position == 0:
                    reports.append(with_order(sequence, [s for _, s in levels]))
                else:
                    reports.append(with_order(sequence, spacing))
            return reports

        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                futures = [pool.submit(run, job) for job in jobs]
                results = [future.result() for future in futures]
        else:
            results = [run(job) for job in jobs]
        return [report for group in results for report in group]

    def trajectory_identities(self, trajectory):
        """
        Identities on the solver trajectory; refined by rerunning the flow on coarser grids.
        """
        resolutions, _ = _levels(self.config, self.refinements)
        if len(resolutions) < 3:
            return self._trajectory_reports(trajectory)
        ident = self.config.identities
        window = [ident.time - ident.step, ident.time, ident.time + ident.step]
        per_level = []
        for resolution in resolutions[:-1]:
            grid = build_grid(resolution, self.config.grid.period)
            coarse = run_heat_flow(self.metric, self.measure, self.config.initial_field(grid), window,
                                   self.config.grid.cfl)
            per_level.append(self._trajectory_reports(coarse))
        per_level.append(self._trajectory_reports(trajectory))
        spacing = [2 * np.pi / r[0] for r in resolutions]
        reports = []
        for position, finest in enumerate(per_level[-1]):
            if finest.tag == "hessian_trace":
                reports.append(finest)
            else:
                reports.append(with_order([level[position] for level in per_level], spacing))
        return reports

    def heat_flow(self):
        return run_heat_flow(self.metric, self.measure, self.config.initial_field(self.grid), self.stamps(),
                             self.config.grid.cfl)

    def run(self, phases=PHASES):
        """
        Execute the requested phases in pipeline order.

        Numerical failures end up in the report's failure section; phases
        depending on a failed phase are skipped.

        :return: RunReport
        """
        phases = tuple(p for p in PHASES if p in phases)
        report = RunReport(self.config, phases)
        needs_flow = {"heat_flow", "gradient_estimate", "harnack"} & set(phases) or (
            "identities" in phases and self._trajectory_checks()
        )
        needs_constants = {"constants", "gradient_estimate", "harnack"} & set(phases)

        def phase(name, fn):
            start = time.perf_counter()
            try:
                return fn()
            except NUMERICAL_ERRORS as error:
                logging.error(f"Phase '{name}' failed: {error}")
                report.failures.append({"phase": name, "error": type(error).__name__, "message": str(error)})
                return None
            finally:
                report.timings[name] = time.perf_counter() - start

        if needs_constants:
            result = phase("constants", self.estimate)
            if result is not None:
                report.constants, report.q = result
        if "identities" in phases:
            report.identities.extend(phase("identities", self.flow_identities) or [])
        if needs_flow:
            report.trajectory = phase("heat_flow", self.heat_flow)
        if "identities" in phases and self._trajectory_checks():
            if report.trajectory is not None:
                report.identities.extend(
                    phase("trajectory_identities", lambda: self.trajectory_identities(report.trajectory)) or []
                )
            else:
                report.failures.append({"phase": "trajectory_identities", "error": "Skipped",
                                        "message": "heat flow unavailable"})
        ready = report.trajectory is not None and report.constants is not None
        if "gradient_estimate" in phases:
            if ready:
                report.gradient = phase("gradient_estimate", lambda: gradient_estimate_check(
                    report.trajectory, report.constants, self.config.estimate))
                report.epsilon = phase("epsilon_stability", lambda: epsilon_stability(
                    report.trajectory, report.constants, self.config.estimate))
                if self.metric.is_static:
                    report.static_reduction = phase("static_reduction", lambda: static_reduction_compare(
                        report.trajectory, report.constants, self.config.estimate))
            else:
                report.failures.append({"phase": "gradient_estimate", "error": "Skipped",
                                        "message": "heat flow or constants unavailable"})
        if "harnack" in phases and self.config.harnack.enabled:
            if ready:
                def sweep():
                    settings = self.config.harnack.settings()
                    pairs = draw_pairs(report.trajectory, _rng(self.config.seed, PAIR_STREAM), settings)
                    return harnack_check(report.trajectory, report.constants, self.config.estimate, pairs, settings)
                report.harnack = phase("harnack", sweep)
            else:
                report.failures.append({"phase": "harnack", "error": "Skipped",
                                        "message": "heat flow or constants unavailable"})
        logging.info(f"Scenario '{self.config.name}' finished: {report.rollup}.")
        return report


def run_scenario(config, seed=None, out=None, threads=1, refinements=None, phases=PHASES, database=None):
    """
    Run a scenario end to end and emit its report.

    :param config: ScenarioConfig or path to a YAML scenario
    :param seed: Optional seed override
    :param out: Optional output root override
    :param threads: Worker threads for identity checks
    :param refinements: Optional refinement-level override
    :param phases: Subset of PHASES to execute
    :param database: Optional SQLite path to record the run in
    :return: RunReport
    :raises ConfigurationError: On invalid configuration or an unwritable output directory
    """
    if not isinstance(config, ScenarioConfig):
        config = ScenarioConfig.load(config)
    config = config.with_overrides(seed=seed, out=out, refinements=refinements)
    directory = ensure_writable(Path(config.output.directory) / config.name)
    report = ScenarioRunner(config, threads, config.identities.refinements).run(phases)
    emit_report(report, directory)
    if database:
        engine, session = open_session(database)
        try:
            RunController(session).add(run_from_report(report, directory, ",".join(report.phases)))
        finally:
            session.close()
            engine.dispose()
    return report
