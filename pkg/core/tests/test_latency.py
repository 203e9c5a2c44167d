"""
Tests for latency budget accounting.
"""
import unittest

from core.errors import InvalidArgumentError
from core.latency import SYNTHESIS_BUDGET, SYSTEM_BUDGET, LatencyBudget, latency_report


class TestLatencyReport(unittest.TestCase):
    """Tests for latency_report."""

    def test_system_budget_sum_and_discrepancy(self):
        """Stage costs sum to 154 ms against a declared 149 ms."""
        report = latency_report(SYSTEM_BUDGET)
        self.assertEqual(len(report.rows), 11)
        self.assertAlmostEqual(report.computed_total, 154.0)
        self.assertAlmostEqual(report.declared_total, 149.0)
        self.assertAlmostEqual(report.discrepancy, 5.0)
        self.assertTrue(report.has_discrepancy)

    def test_synthesis_budget_matches_declared(self):
        report = latency_report(SYNTHESIS_BUDGET)
        self.assertAlmostEqual(report.computed_total, 23.5)
        self.assertFalse(report.has_discrepancy)

    def test_empty_budget(self):
        report = latency_report(LatencyBudget())
        self.assertEqual(report.computed_total, 0.0)
        self.assertIsNone(report.discrepancy)

    def test_frame_budget_check(self):
        """Measured synthesis time is compared with the per-frame budget."""
        self.assertTrue(latency_report(SYNTHESIS_BUDGET, measured_ms=20.0).within_frame_budget)
        self.assertFalse(latency_report(SYNTHESIS_BUDGET, measured_ms=40.0, frame_budget_ms=33.0).within_frame_budget)
        self.assertIsNone(latency_report(SYNTHESIS_BUDGET).within_frame_budget)

    def test_table_lists_totals(self):
        table = latency_report(SYSTEM_BUDGET, measured_ms=10.0).as_table()
        self.assertIn("Capture", table)
        self.assertIn("154.0", table)
        self.assertIn("149.0", table)
        self.assertIn("mismatch", table)

    def test_to_dict(self):
        data = latency_report(SYSTEM_BUDGET).to_dict()
        self.assertEqual(data["stages"][0], {"stage": "Capture", "ms": 56.0})
        self.assertAlmostEqual(data["discrepancy"], 5.0)


class TestLatencyBudget(unittest.TestCase):
    """Tests for LatencyBudget."""

    def test_negative_cost_rejected(self):
        with self.assertRaises(InvalidArgumentError):
            LatencyBudget(stages=(("Capture", -1),))

    def test_from_dict(self):
        budget = LatencyBudget.from_dict({"stages": [{"stage": "a", "ms": 1.5}, {"stage": "b", "ms": 2}], "declared_total": 3})
        self.assertAlmostEqual(budget.total, 3.5)
        self.assertEqual(budget.declared_total, 3)


if __name__ == '__main__':
    unittest.main()
