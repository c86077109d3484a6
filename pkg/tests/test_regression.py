"""OLS fitting, standardization, Student-t numerics, and the error models."""

import math

import numpy as np
import pytest

from crosspoint.regression import (
    DesignMatrix,
    analyze_errors,
    inference,
    ols_fit,
    regularized_incomplete_beta,
    replay_row,
    standardize,
    standardize_column,
    student_t_cdf,
    student_t_ppf,
    write_regression_csv,
)


def make_matrix(n=40, seed=2, responses=None):
    rng = np.random.default_rng(seed)
    preds = rng.normal(size=(n, 3)) * [1.0, 5.0, 0.2] + [2.0, -1.0, 4.0]
    if responses is None:
        responses = {"y": rng.normal(size=n)}
    return DesignMatrix(
        predictor_names=["a", "b", "c"], predictors=preds, responses=responses
    )


class TestStandardize:
    def test_two_point_column(self):
        out = standardize_column(np.array([0.0, 2.0]))
        np.testing.assert_allclose(out, [-math.sqrt(2) / 2, math.sqrt(2) / 2], atol=1e-12)

    def test_mean_zero_sd_one(self):
        m = standardize(make_matrix())
        for i in range(3):
            col = m.predictors[:, i]
            assert abs(col.mean()) < 1e-12
            assert abs(np.std(col, ddof=1) - 1.0) < 1e-12
        y = m.responses["y"]
        assert abs(y.mean()) < 1e-12 and abs(np.std(y, ddof=1) - 1.0) < 1e-12

    def test_idempotent(self):
        m = standardize(make_matrix())
        again = standardize(m)
        np.testing.assert_allclose(again.predictors, m.predictors, atol=1e-12)

    def test_zero_variance_names_column(self):
        m = make_matrix()
        m.predictors[:, 1] = 7.0
        with pytest.raises(ValueError, match="'b'"):
            standardize(m)

    def test_matrix_validation(self):
        with pytest.raises(ValueError, match="observations"):
            DesignMatrix(["a", "b", "c"], np.zeros((4, 3)), {"y": np.zeros(4)})
        with pytest.raises(ValueError, match="non-finite"):
            DesignMatrix(["a"], np.array([[1.0], [np.nan], [2.0]]), {"y": np.zeros(3)})


class TestOlsFit:
    def test_noiseless_recovery(self):
        rng = np.random.default_rng(8)
        a = rng.normal(size=50)
        b = rng.normal(size=50)
        y = 3.0 + 2.0 * a - b
        m = DesignMatrix(["a", "b"], np.column_stack([a, b]), {"y": y})
        fit = ols_fit(m, "y")
        np.testing.assert_allclose(fit.coefficients, [3.0, 2.0, -1.0], atol=1e-9)
        assert fit.rss < 1e-18
        assert fit.df == 50 - 3

    def test_single_standardized_predictor_self_fit(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=30)
        m = standardize(DesignMatrix(["x"], x[:, None], {"y": x.copy()}))
        fit = ols_fit(m, "y")
        assert fit.coefficients[1] == pytest.approx(1.0, abs=1e-12)

    def test_row_permutation_invariance(self):
        m = make_matrix(seed=12)
        fit = ols_fit(m, "y")
        rng = np.random.default_rng(0)
        perm = rng.permutation(m.n_observations)
        m2 = DesignMatrix(
            list(m.predictor_names),
            m.predictors[perm],
            {"y": m.responses["y"][perm]},
        )
        np.testing.assert_allclose(ols_fit(m2, "y").coefficients, fit.coefficients, atol=1e-10)

    def test_rank_deficiency_names_the_pair(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=20)
        m = DesignMatrix(
            ["a", "twice_a"], np.column_stack([a, 2.0 * a]), {"y": rng.normal(size=20)}
        )
        with pytest.raises(ValueError, match="'a' and 'twice_a'"):
            ols_fit(m, "y")

    def test_unknown_response(self):
        with pytest.raises(KeyError):
            ols_fit(make_matrix(), "nope")


class TestInference:
    def test_t_identity_and_ci_shape(self):
        m = standardize(make_matrix(n=60, seed=4, responses=None))
        rng = np.random.default_rng(5)
        m.responses["y"] = standardize_column(
            m.predictors @ np.array([0.5, -0.3, 0.1]) + rng.normal(scale=0.6, size=60)
        )
        report = inference(ols_fit(m, "y"), m)
        assert len(report.rows) == 3
        assert report.df == 60 - 4
        for row in report.rows:
            assert row.t == pytest.approx(row.coef / row.se, abs=1e-9)
            assert row.ci_lower < row.coef < row.ci_upper
            assert 0.0 <= row.p_value <= 1.0
        # CI quantiles consistent with the package's own t inverse
        crit = student_t_ppf(0.975, report.df)
        row = report.rows[0]
        assert row.ci_upper - row.coef == pytest.approx(crit * row.se, rel=1e-9)

    def test_noiseless_p_values_vanish(self):
        rng = np.random.default_rng(6)
        a = rng.normal(size=25)
        b = rng.normal(size=25)
        m = DesignMatrix(["a", "b"], np.column_stack([a, b]), {"y": 1.5 * a - 0.5 * b})
        report = inference(ols_fit(m, "y"), m)
        for row in report.rows:
            assert row.p_value < 1e-12

    def test_replay_spec_rows(self):
        t, lo, hi = replay_row(0.370, 0.064)
        assert abs(t - 5.767) <= 0.05
        assert abs(lo - 0.244) <= 0.002 and abs(hi - 0.496) <= 0.002
        t2, _, _ = replay_row(0.120, 0.034)
        assert abs(t2 - 3.543) <= 0.05

    def test_scale_invariance_of_standardized_fit(self):
        m = make_matrix(n=50, seed=14)
        rng = np.random.default_rng(15)
        m.responses["y"] = m.predictors @ np.array([1.0, 0.2, -2.0]) + rng.normal(size=50)
        base = ols_fit(standardize(m), "y").coefficients
        scaled = DesignMatrix(
            list(m.predictor_names),
            m.predictors * np.array([3.7, 0.002, 151.0]),
            {"y": m.responses["y"].copy()},
        )
        got = ols_fit(standardize(scaled), "y").coefficients
        np.testing.assert_allclose(got, base, atol=1e-9)


class TestStudentT:
    def test_cdf_against_quadrature_oracle(self):
        from scipy.integrate import quad

        def density(u, df):
            c = math.exp(math.lgamma((df + 1) / 2) - math.lgamma(df / 2)) / math.sqrt(
                df * math.pi
            )
            return c * (1.0 + u * u / df) ** (-(df + 1) / 2)

        pts = [
            (0.0, 1), (0.5, 1), (-1.3, 1), (2.0, 2), (-2.5, 3),
            (0.7, 4), (5.0, 5), (-4.2, 7), (1.96, 10), (-1.0, 12),
            (3.3, 15), (0.25, 20), (-0.25, 24), (2.8, 30), (-3.6, 40),
            (1.5, 60), (-2.0, 120), (1.96, 500), (-5.5, 9), (10.0, 6),
        ]
        assert len(pts) == 20
        for t, df in pts:
            num, err = quad(density, 0.0, abs(t), args=(df,), epsabs=1e-12, limit=200)
            oracle = 0.5 + num if t >= 0 else 0.5 - num
            assert student_t_cdf(t, df) == pytest.approx(oracle, abs=1e-8), (t, df)

    def test_symmetry_and_midpoint(self):
        for df in (1, 3, 11, 200):
            assert student_t_cdf(0.0, df) == pytest.approx(0.5, abs=1e-15)
            for t in (0.3, 1.7, 4.4):
                assert student_t_cdf(-t, df) == pytest.approx(
                    1.0 - student_t_cdf(t, df), abs=1e-14
                )

    def test_ppf_inverts_cdf(self):
        for df in (2, 7, 50):
            for q in (0.6, 0.9, 0.975, 0.999, 0.1):
                t = student_t_ppf(q, df)
                assert student_t_cdf(t, df) == pytest.approx(q, abs=1e-10)

    def test_large_df_approaches_normal_quantile(self):
        assert student_t_ppf(0.975, 100000) == pytest.approx(1.959964, abs=1e-4)

    def test_incomplete_beta_edges_and_symmetry(self):
        assert regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0
        assert regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0
        rng = np.random.default_rng(77)
        for _ in range(50):
            a, b = rng.uniform(0.5, 20, size=2)
            x = float(rng.uniform(0, 1))
            lhs = regularized_incomplete_beta(a, b, x)
            rhs = 1.0 - regularized_incomplete_beta(b, a, 1.0 - x)
            assert lhs == pytest.approx(rhs, abs=1e-12)
            assert 0.0 <= lhs <= 1.0

    def test_input_validation(self):
        with pytest.raises(ValueError):
            student_t_cdf(1.0, 0)
        with pytest.raises(ValueError):
            student_t_ppf(1.5, 3)
        with pytest.raises(ValueError):
            regularized_incomplete_beta(-1.0, 2.0, 0.5)
        with pytest.raises(ValueError):
            regularized_incomplete_beta(1.0, 2.0, 1.5)


class FakeEval:
    def __init__(self, fp, fn):
        self.fp = fp
        self.fn = fn


class FakeMetrics:
    def __init__(self, edge, rgb, sharp):
        self.edge_density = edge
        self.rgb_diversity = rgb
        self.sharpness = sharp


def fake_tiles(n=24, seed=31):
    rng = np.random.default_rng(seed)
    evals, metrics = [], []
    for i in range(n):
        edge = float(rng.uniform(1, 9))
        rgb = int(rng.integers(5, 500))
        sharp = float(rng.uniform(0.1, 4.0))
        fp = 2.0 * edge
        fn = float(rng.uniform(0, 6))
        evals.append((f"t{i}", FakeEval(fp, fn)))
        metrics.append((f"t{i}", FakeMetrics(edge, rgb, sharp)))
    return evals, metrics


class TestAnalyzeErrors:
    def test_planted_edge_effect(self):
        evals, metrics = fake_tiles()
        fp_report, fn_report = analyze_errors(evals, metrics)
        assert [r.name for r in fp_report.rows] == [
            "edge_density",
            "rgb_diversity",
            "sharpness",
        ]
        assert len(fn_report.rows) == 3
        by_name = {r.name: r for r in fp_report.rows}
        assert by_name["edge_density"].coef == pytest.approx(1.0, abs=1e-9)
        assert abs(by_name["rgb_diversity"].coef) < 1e-9
        assert abs(by_name["sharpness"].coef) < 1e-9

    def test_misaligned_ids_rejected(self):
        evals, metrics = fake_tiles()
        metrics[3] = ("other", metrics[3][1])
        with pytest.raises(ValueError, match="misaligned"):
            analyze_errors(evals, metrics)

    def test_too_few_tiles_rejected(self):
        evals, metrics = fake_tiles(n=9)
        with pytest.raises(ValueError, match="10"):
            analyze_errors(evals, metrics)

    def test_constant_fp_rejected(self):
        evals, metrics = fake_tiles()
        evals = [(tid, FakeEval(3.0, e.fn)) for tid, e in evals]
        with pytest.raises(ValueError, match="'fp'"):
            analyze_errors(evals, metrics)

    def test_csv_layout(self, tmp_path):
        evals, metrics = fake_tiles()
        fp_report, _ = analyze_errors(evals, metrics)
        path = tmp_path / "fp.csv"
        write_regression_csv(fp_report, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "# response = fp"
        assert lines[1] == f"# df = {fp_report.df}"
        assert lines[2] == "# alpha = 0.05"
        assert lines[3] == "predictor,coef,se,t,p,ci_lo,ci_hi"
        assert len(lines) == 4 + 3
