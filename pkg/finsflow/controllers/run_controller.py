import json

from datetime import datetime, timezone

from finsflow.models.run import CheckResult, Run
from finsflow.report import sanitize


class RunController:
    """
    Controller class for managing recorded runs.

    :param session: SQLAlchemy session for database operations
    """
    def __init__(self, session):
        self.session = session

    def add(self, run):
        """
        Add a new run with its check results to the database.

        :param run: Run instance to add
        :return: The added Run instance (with assigned ID)
        """
        run.created = datetime.now(timezone.utc)
        self.session.add(run)
        self.session.commit()
        return run

    def delete(self, run):
        """
        Remove a run and its check results from the database.

        :param run: Run instance to delete
        :raises ValueError: If the run is not found
        :return: The deleted Run instance
        """
        db_run = self.session.query(Run).filter(Run.id == run.id).first()
        if db_run is None:
            raise ValueError("Run not found.")
        self.session.delete(db_run)
        self.session.commit()
        return run

    def delete_by_id(self, id):
        """
        Remove the run with the given ID and its check results from the database.

        :param id: ID of the run to delete
        :raises ValueError: If no run is found
        :return: The deleted Run instance
        """
        return self.delete(self.get_by_id(id))

    def get_all(self):
        """
        Return all recorded runs, oldest first.
        """
        return self.session.query(Run).order_by(Run.id).all()

    def get_by_id(self, id):
        """
        Return the run with the given ID.

        :raises ValueError: If no run is found
        """
        run = self.session.query(Run).filter(Run.id == id).first()
        if run is None:
            raise ValueError("Run not found.")
        return run

    def get_by_scenario(self, scenario):
        """
        Return all runs of one scenario, oldest first.
        """
        return self.session.query(Run).filter(Run.scenario == scenario).order_by(Run.id).all()


def run_from_report(report, directory, command=""):
    """
    Build an unsaved Run with one CheckResult per verdict of a RunReport.
    """
    run = Run(
        scenario=report.config.name,
        seed=str(report.config.seed),
        command=command,
        rollup=report.rollup,
        q=report.q.get("stated"),
        q_sharper=report.q.get("sharper"),
        constants=json.dumps(sanitize(report.constants.to_dict())) if report.constants is not None else "",
        report_path=str(directory),
        duration=sum(report.timings.values()),
    )
    for identity in report.identities:
        run.checks.append(CheckResult(
            tag=identity.tag, kind="residual", value=identity.relative, tolerance=identity.tolerance,
            passed=bool(identity.passed), order=identity.order,
        ))
    for margin in (report.gradient, report.harnack):
        if margin is not None:
            run.checks.append(CheckResult(
                tag=margin.tag, kind="margin", value=margin.min_margin, tolerance=margin.tolerance,
                passed=bool(margin.passed),
            ))
    return run
