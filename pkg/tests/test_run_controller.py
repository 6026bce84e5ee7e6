import logging
import os
import unittest

import numpy as np

from sqlalchemy import create_engine
from sqlalchemy.orm import configure_mappers, sessionmaker

from finsflow.config import ScenarioConfig
from finsflow.controllers.run_controller import RunController, run_from_report
from finsflow.identities import ResidualReport
from finsflow.models.common import Base
from finsflow.models.run import CheckResult, Run
from finsflow.runner import RunReport


class TestRunController(unittest.TestCase):
    """
    Unit tests for the RunController class.

    This test suite sets up a temporary SQLite database for each test case and verifies
    the correct behavior of the RunController methods.
    """
    def setUp(self):
        """
        Set up a temporary SQLite database file in the local folder and initialize the RunController.
        """
        logging.basicConfig(level=logging.DEBUG)
        self.db_path = os.path.abspath("test_runs.sqlite")
        if os.path.exists(self.db_path):
            os.remove(self.db_path)
        configure_mappers()
        self.engine = create_engine(f'sqlite:///{self.db_path}')
        Base.metadata.create_all(self.engine)
        Session = sessionmaker(bind=self.engine)
        self.session = Session()
        self.controller = RunController(self.session)

    def tearDown(self):
        """
        Close all connections and remove the temporary database file.
        """
        self.session.close()
        self.engine.dispose()
        if os.path.exists(self.db_path):
            os.remove(self.db_path)

    def _run(self, scenario="flat-static", rollup="PASS"):
        run = Run(scenario=scenario, seed="7", command="run-all", rollup=rollup, q=1.5, q_sharper=1.25)
        run.checks.append(CheckResult(tag="homogeneity", kind="residual", value=1e-12, tolerance=1e-8, passed=True))
        run.checks.append(CheckResult(tag="harnack", kind="margin", value=0.4, tolerance=1e-6, passed=True))
        return run

    def test_add_run(self):
        """
        Test the add method of RunController.

        This test verifies:
        - A run is stored with an ID and a creation timestamp.
        - Its check results are stored with it and point back to the run.

        Test steps:
        1. Add a run with two check results and read it back by ID.
        """
        run = self.controller.add(self._run())
        self.assertIsNotNone(run.id)
        self.assertIsNotNone(run.created)
        fetched = self.controller.get_by_id(run.id)
        self.assertEqual(fetched.scenario, "flat-static")
        self.assertEqual(fetched.q, 1.5)
        self.assertEqual(sorted(c.tag for c in fetched.checks), ["harnack", "homogeneity"])
        for check in fetched.checks:
            self.assertEqual(check.run_id, run.id)

    def test_get_all_and_by_scenario(self):
        """
        Test the query methods of RunController.

        This test verifies:
        - get_all returns every run in insertion order.
        - get_by_scenario filters by scenario name.
        - get_by_id raises ValueError for an unknown ID.

        Test steps:
        1. Add three runs of two scenarios.
        2. Query them back.
        """
        first = self.controller.add(self._run())
        second = self.controller.add(self._run("randers-shrink", "FAIL"))
        third = self.controller.add(self._run())
        self.assertEqual([r.id for r in self.controller.get_all()], [first.id, second.id, third.id])
        self.assertEqual([r.id for r in self.controller.get_by_scenario("flat-static")], [first.id, third.id])
        self.assertEqual(self.controller.get_by_scenario("missing"), [])
        with self.assertRaises(ValueError):
            self.controller.get_by_id(9999)

    def test_delete_run(self):
        """
        Test the delete method of RunController.

        This test verifies:
        - Deleting a run removes it together with its check results.
        - Deleting it again raises ValueError.

        Test steps:
        1. Add and delete a run, then count runs and check results.
        2. Delete the same run again.
        """
        run = self.controller.add(self._run())
        run_id = run.id
        self.controller.delete(run)
        self.assertEqual(self.controller.get_all(), [])
        self.assertEqual(self.session.query(CheckResult).count(), 0)
        with self.assertRaises(ValueError):
            self.controller.delete(Run(id=run_id))

        run_id = self.controller.add(self._run()).id
        self.controller.delete_by_id(run_id)
        with self.assertRaises(ValueError):
            self.controller.delete_by_id(run_id)

    def test_run_from_report(self):
        """
        Test converting a run report into a stored run.

        This test verifies:
        - Scenario, seed and rollup are copied from the report.
        - Every identity report becomes a residual check result.
        - A report without constants stores no Q.

        Test steps:
        1. Build a report with one passing and one failing identity.
        2. Convert and store it.
        """
        report = RunReport(ScenarioConfig(name="handmade", seed=3), ("identities",))
        report.identities = [
            ResidualReport("homogeneity", "samples", np.array([1e-12]), 1.0, 1e-8),
            ResidualReport("bochner", "nodes", np.array([1e-2]), 1.0, 1e-3),
        ]
        run = self.controller.add(run_from_report(report, "runs/handmade", "check-identities"))
        self.assertEqual(run.scenario, "handmade")
        self.assertEqual(run.seed, "3")
        self.assertEqual(run.rollup, "FAIL")
        self.assertIsNone(run.q)
        self.assertEqual(run.constants, "")
        checks = {c.tag: c for c in self.controller.get_by_id(run.id).checks}
        self.assertTrue(checks["homogeneity"].passed)
        self.assertFalse(checks["bochner"].passed)
        self.assertEqual(checks["bochner"].kind, "residual")
        self.assertAlmostEqual(checks["bochner"].value, 1e-2)


if __name__ == "__main__":
    unittest.main()
