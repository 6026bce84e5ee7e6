"""
Report emission: a structured JSON report, comma-separated tables and an
index document listing every artifact of a run.
"""
import json
import logging
import math
import os

from pathlib import Path

import numpy as np
import pandas as pd

from finsflow.errors import ConfigurationError

FLOAT_FORMAT = "%.17g"


def ensure_writable(directory):
    """
    Create the output directory and make sure files can be written to it.

    :raises ConfigurationError: If the directory cannot be created or written
    """
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as error:
        raise ConfigurationError(f"Cannot create output directory {directory}: {error}", "output.directory")
    if not os.access(directory, os.W_OK | os.X_OK):
        raise ConfigurationError(f"Output directory {directory} is not writable.", "output.directory")
    return directory


def sanitize(value):
    """
    Convert numpy values to plain Python and non-finite floats to strings.
    """
    if isinstance(value, dict):
        return {str(k): sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [sanitize(v) for v in value]
    if isinstance(value, np.ndarray):
        return [sanitize(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def _write_table(directory, name, rows, columns):
    path = directory / name
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def _identity_rows(report):
    return [
        {
            "tag": r.tag, "samples": r.samples, "count": int(np.size(r.residuals)), "skipped": r.skipped,
            "sup_residual": r.sup_residual, "scale": r.scale, "relative": r.relative,
            "tolerance": r.tolerance, "order": r.order, "flags": ";".join(r.flags), "passed": r.passed,
        }
        for r in report.identities
    ]


def emit_report(report, directory):
    """
    Write a RunReport to ``directory``.

    Files: ``report.json`` (no timings, so reruns are byte-identical),
    ``identities.csv``, ``constants.csv``, ``gradient_margins.csv``,
    ``harnack_pairs.csv``, ``heat_flow.csv``, one ``trajectory/stamp_NNN.csv``
    per stamp, ``timings.csv`` and ``index.json``.

    :param report: RunReport
    :return: List of written paths
    """
    directory = ensure_writable(directory)
    artifacts, omitted = [], []

    def record(path, kind, description):
        artifacts.append({"path": str(path.relative_to(directory)), "kind": kind, "description": description})

    path = directory / "report.json"
    path.write_text(json.dumps(sanitize(report.to_dict()), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    record(path, "json", "Structured run report")

    if report.identities:
        columns = ["tag", "samples", "count", "skipped", "sup_residual", "scale", "relative",
                   "tolerance", "order", "flags", "passed"]
        record(_write_table(directory, "identities.csv", _identity_rows(report), columns),
               "csv", "Identity residual summary")
    else:
        omitted.append({"block": "identities", "reason": "no identity checks ran"})

    if report.constants is not None:
        rows = [{"name": k, "value": getattr(report.constants, k)}
                for k in ("K", "K_prime", "K_prime_unsquared", "L1", "L2", "L3")]
        rows.extend({"name": f"Q_{k}", "value": v} for k, v in report.q.items())
        record(_write_table(directory, "constants.csv", rows, ["name", "value"]), "csv", "Hypothesis constants and Q")
    else:
        omitted.append({"block": "constants", "reason": "constant estimation did not run"})

    if report.gradient is not None:
        rows = [{"time": t, "min_margin": m} for t, m in report.gradient.stamp_minima]
        record(_write_table(directory, "gradient_margins.csv", rows, ["time", "min_margin"]),
               "csv", "Per-stamp minimum margins of the gradient estimate")
    else:
        omitted.append({"block": "gradient_estimate", "reason": "gradient estimate did not run"})

    if report.harnack is not None:
        rows = []
        for sample, lhs, rhs in zip(report.harnack.samples, report.harnack.lhs, report.harnack.rhs):
            rows.append({
                "x1_1": sample["x1"][0], "x1_2": sample["x1"][1], "x2_1": sample["x2"][0], "x2_2": sample["x2"][1],
                "t1": sample["t1"], "t2": sample["t2"], "log_lhs": lhs, "log_rhs": rhs, "margin": rhs - lhs,
            })
        columns = ["x1_1", "x1_2", "x2_1", "x2_2", "t1", "t2", "log_lhs", "log_rhs", "margin"]
        record(_write_table(directory, "harnack_pairs.csv", rows, columns), "csv", "Harnack pair margins")
    else:
        omitted.append({"block": "harnack", "reason": "Harnack sweep did not run"})

    trajectory = report.trajectory
    if trajectory is not None:
        columns = ["time", "mass", "min", "max", "substeps", "dt"]
        record(_write_table(directory, "heat_flow.csv", trajectory.diagnostics, columns),
               "csv", "Heat-flow stamp diagnostics")
        if report.config.output.trajectories:
            x1, x2 = trajectory.grid.coordinates()
            for stamp in range(len(trajectory)):
                rows = {
                    "x1": x1.ravel(), "x2": x2.ravel(), "u": trajectory.u[stamp].ravel(),
                    "f": trajectory.f(stamp).ravel(), "gradient_norm": trajectory.gradient_norm[stamp].ravel(),
                    "f_t": trajectory.f_t[stamp].ravel(), "laplacian": trajectory.laplacian[stamp].ravel(),
                }
                path = directory / "trajectory" / f"stamp_{stamp:03d}.csv"
                path.parent.mkdir(parents=True, exist_ok=True)
                pd.DataFrame(rows).to_csv(path, index=False, float_format=FLOAT_FORMAT)
                record(path, "csv", f"Trajectory fields at t={trajectory.times[stamp]:g}")
    else:
        omitted.append({"block": "heat_flow", "reason": "heat flow did not run"})

    rows = [{"phase": k, "seconds": v} for k, v in report.timings.items()]
    record(_write_table(directory, "timings.csv", rows, ["phase", "seconds"]),
           "csv", "Wall-clock phase timings (not reproducible)")

    index = directory / "index.json"
    index.write_text(
        json.dumps({"scenario": report.config.name, "artifacts": artifacts, "omitted": omitted}, indent=2) + "\n",
        encoding="utf-8"
    )
    logging.info(f"Wrote {len(artifacts) + 1} artifacts to {directory}.")
    return [directory / a["path"] for a in artifacts] + [index]
