import csv

import numpy as np
import pytest

from sesop import harness
from sesop.linesearch import LineSearchConfig
from sesop.linop import DenseOperator
from sesop.lp import LpSpec, lp_norm


class TestToyProblem:
    @pytest.mark.parametrize("p", [1.2, 1.5, 2.0, 3.0])
    def test_properties(self, p):
        P = harness.make_toy_problem(11, 20, 60, LpSpec(60, p))
        assert lp_norm(P.x_true.values, p) == pytest.approx(1.0, rel=1e-14)
        assert np.linalg.norm(P.A.apply(P.x_true.values) - P.y) <= 1e-12 * np.linalg.norm(P.y)
        # J(x_true) is parallel to A^T y*, which lies in the range of A^T
        rng = np.random.default_rng(11)
        M = rng.uniform(-1, 1, (20, 60))
        u = M.T @ rng.uniform(-1, 1, 20)
        np.testing.assert_array_equal(P.A.todense(), M)
        j = P.space.J(P.x_true.values)
        cos = float(j @ u) / (np.linalg.norm(j) * np.linalg.norm(u))
        assert cos == pytest.approx(1.0, abs=1e-10)

    def test_hilbert_case_is_min_norm(self):
        P = harness.make_toy_problem(3, 10, 30)
        M = P.A.todense()
        np.testing.assert_allclose(P.x_true.values, np.linalg.pinv(M) @ P.y, atol=1e-12)

    def test_deterministic(self):
        a = harness.make_toy_problem(420, 5, 9, LpSpec(9, 1.5))
        b = harness.make_toy_problem(420, 5, 9, LpSpec(9, 1.5))
        np.testing.assert_array_equal(a.y, b.y)
        assert not np.array_equal(a.y, harness.make_toy_problem(421, 5, 9, LpSpec(9, 1.5)).y)

    def test_validation(self):
        with pytest.raises(ValueError):
            harness.make_toy_problem(1, 0, 5)
        with pytest.raises(ValueError):
            harness.make_toy_problem(1, 3, 5, LpSpec(4, 2.0))


class TestReferenceCG:
    def test_identity_one_step(self):
        xs = harness.cg_normal_polak_ribiere(DenseOperator(np.eye(4)), np.arange(1.0, 5.0), max_iter=10)
        assert len(xs) == 2
        np.testing.assert_allclose(xs[1], np.arange(1.0, 5.0), rtol=1e-15)

    def test_second_kind_reaches_min_norm(self, rng):
        M = rng.standard_normal((5, 12))
        y = rng.standard_normal(5)
        xs = harness.cg_normal_polak_ribiere(DenseOperator(M), y, max_iter=5)
        np.testing.assert_allclose(xs[-1], np.linalg.pinv(M) @ y, atol=1e-10)

    def test_error_monotone(self, rng):
        # CG on A A^T u = y decreases ||x_k - x^+|| monotonically
        M = rng.standard_normal((8, 20))
        y = rng.standard_normal(8)
        xp = np.linalg.pinv(M) @ y
        err = [np.linalg.norm(x - xp) for x in harness.cg_normal_polak_ribiere(DenseOperator(M), y, max_iter=8)]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(err, err[1:]))

    def test_first_kind_differs(self, rng):
        M = rng.standard_normal((6, 10))
        y = rng.standard_normal(6)
        a = harness.cg_normal_polak_ribiere(DenseOperator(M), y, max_iter=2, kind="first")
        b = harness.cg_normal_polak_ribiere(DenseOperator(M), y, max_iter=2, kind="second")
        assert np.linalg.norm(a[2] - b[2]) > 1e-6

    def test_rejects(self):
        A = DenseOperator(np.eye(2))
        with pytest.raises(ValueError):
            harness.cg_normal_polak_ribiere(A, np.ones(2), kind="third")
        with pytest.raises(ValueError):
            harness.cg_normal_polak_ribiere(A, np.ones(2), x0=np.ones(2))


TEMPLATE = dict(max_iter=3000, residual_tol=1e-6, line_search=LineSearchConfig(1e-10, 20))


class TestGrid:
    def test_single_seed(self):
        g = harness.run_grid([1.5], [2], ["metric"], [420], 20, 50, TEMPLATE)
        c = g.cell(1.5, 2, "metric")
        assert c.seed_count == 1 and c.std_iters == 0.0 and c.failures == 0
        assert c.mean_iters == g.runs[0].iterations

    def test_hilbert_metric_independent_of_N(self):
        g = harness.run_grid([2.0], [1, 2, 4, 6], ["metric"], [420, 421], 20, 60, TEMPLATE)
        means = {c.N: c.mean_iters for c in g.cells}
        assert len(set(means.values())) == 1

    def test_aggregate_recomputed(self):
        g = harness.run_grid([1.5, 3.0], [1, 3], ["unorth", "metric"], [1, 2, 3], 15, 40, TEMPLATE)
        assert len(g.cells) == 8 and len(g.runs) == 24
        for c in g.cells:
            its = [r.iterations for r in g.runs if (r.p, r.N, r.mode) == (c.p, c.N, c.mode) and not r.failed]
            assert c.mean_iters == pytest.approx(np.mean(its))
            assert c.std_iters == pytest.approx(np.std(its))

    def test_failures_excluded(self):
        runs = [
            harness.RunRecord(2.0, 1, "metric", 1, 10, 1.0, False, "residual_met"),
            harness.RunRecord(2.0, 1, "metric", 2, 50, 9.0, True, "max_iter"),
            harness.RunRecord(2.0, 1, "metric", 3, 20, 3.0, False, "residual_met"),
        ]
        (c,) = harness.aggregate(runs)
        assert (c.mean_iters, c.std_iters, c.mean_ms, c.failures, c.seed_count) == (15.0, 5.0, 2.0, 1, 3)

    def test_all_failed_gives_nan(self):
        (c,) = harness.aggregate([harness.RunRecord(2.0, 1, "metric", 1, 5, 1.0, True, "max_iter")])
        assert np.isnan(c.mean_iters) and c.failures == 1

    def test_workers_match_serial(self):
        args = ([1.5], [1, 2], ["metric"], [5, 6], 10, 30, TEMPLATE)
        a = harness.run_grid(*args)
        b = harness.run_grid(*args, workers=2)
        assert [r.iterations for r in a.runs] == [r.iterations for r in b.runs]

    def test_empty_axis(self):
        with pytest.raises(ValueError):
            harness.run_grid([], [1], ["metric"], [1])

    def test_csv(self, tmp_path):
        g = harness.run_grid([2.0], [1], ["unorth"], [1, 2], 10, 20, TEMPLATE)
        g.write_csv(tmp_path / "s.csv")
        with open(tmp_path / "s.csv") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == harness.STATS_COLUMNS
        assert float(rows[1][4]) == g.cells[0].mean_iters
        harness.write_history(tmp_path / "h.csv", g.runs[0].history)
        with open(tmp_path / "h.csv") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == harness.HISTORY_COLUMNS
        assert len(rows) == g.runs[0].iterations + 2
        assert float(rows[-1][2]) <= 1e-6
