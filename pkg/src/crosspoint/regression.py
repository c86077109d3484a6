"""Standardized multiple linear regression with a full inferential report.

Fits FP and FN counts on the three tile metrics after z-scoring both
predictors and responses (sample standard deviation, n-1), so coefficients
are comparable in strength across predictors. Inference produces, per
predictor: standard error, t statistic, two-sided p-value, and the
alpha-level confidence interval.

The Student-t CDF is evaluated through the regularized incomplete beta
function with a continued-fraction expansion (modified Lentz iteration),
accurate to near machine precision; no statistics library is involved so
the p-values can themselves be validated against a numerical-integration
oracle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DesignMatrix",
    "OlsFit",
    "PredictorRow",
    "RegressionReport",
    "standardize_column",
    "standardize",
    "ols_fit",
    "inference",
    "replay_row",
    "analyze_errors",
    "write_regression_csv",
    "regularized_incomplete_beta",
    "student_t_cdf",
    "student_t_ppf",
]


@dataclass
class DesignMatrix:
    """Observations (one per tile) of predictors plus one or more responses."""

    predictor_names: list[str]
    predictors: np.ndarray
    responses: dict[str, np.ndarray]

    def __post_init__(self):
        self.predictors = np.asarray(self.predictors, dtype=float)
        if self.predictors.ndim != 2:
            raise ValueError("predictors must be a 2-D array (rows = observations)")
        n, p = self.predictors.shape
        if len(self.predictor_names) != p:
            raise ValueError("predictor_names must match the number of columns")
        if n < p + 2:
            raise ValueError(f"need at least {p + 2} observations for {p} predictors, got {n}")
        if not np.isfinite(self.predictors).all():
            raise ValueError("predictors contain non-finite values")
        clean = {}
        for name, y in self.responses.items():
            y = np.asarray(y, dtype=float)
            if y.shape != (n,):
                raise ValueError(f"response {name!r} must have one value per observation")
            if not np.isfinite(y).all():
                raise ValueError(f"response {name!r} contains non-finite values")
            clean[name] = y
        self.responses = clean

    @property
    def n_observations(self) -> int:
        return self.predictors.shape[0]


@dataclass(frozen=True)
class OlsFit:
    """Least-squares fit of one response; intercept is coefficient 0."""

    response: str
    coefficients: np.ndarray
    residual_variance: float
    rss: float
    df: int
    unscaled_cov_diag: np.ndarray


@dataclass(frozen=True)
class PredictorRow:
    name: str
    coef: float
    se: float
    t: float
    p_value: float
    ci_lower: float
    ci_upper: float


@dataclass(frozen=True)
class RegressionReport:
    response: str
    rows: list[PredictorRow]
    df: int
    alpha: float


def standardize_column(values: np.ndarray, name: str = "column") -> np.ndarray:
    """Z-score with the sample (n-1) standard deviation."""
    values = np.asarray(values, dtype=float)
    sd = float(np.std(values, ddof=1))
    if sd == 0.0 or not np.isfinite(sd):
        raise ValueError(f"zero-variance column {name!r} cannot be standardized")
    return (values - values.mean()) / sd


def standardize(matrix: DesignMatrix) -> DesignMatrix:
    """Z-score every predictor and every response column."""
    cols = [
        standardize_column(matrix.predictors[:, i], name)
        for i, name in enumerate(matrix.predictor_names)
    ]
    responses = {
        name: standardize_column(y, name) for name, y in matrix.responses.items()
    }
    return DesignMatrix(
        predictor_names=list(matrix.predictor_names),
        predictors=np.column_stack(cols),
        responses=responses,
    )


def _dependent_pair(X: np.ndarray, names: list[str]) -> str:
    for i in range(X.shape[1]):
        for j in range(i + 1, X.shape[1]):
            if np.linalg.matrix_rank(X[:, [i, j]]) < 2:
                return f"{names[i]!r} and {names[j]!r}"
    return "a non-pairwise linear combination of columns"


def ols_fit(matrix: DesignMatrix, response: str) -> OlsFit:
    """Least squares via SVD (orthogonal decomposition, no explicit inverse)."""
    if response not in matrix.responses:
        raise KeyError(f"unknown response {response!r}; have {sorted(matrix.responses)}")
    y = matrix.responses[response]
    n = matrix.n_observations
    X = np.column_stack([np.ones(n), matrix.predictors])
    names = ["intercept"] + list(matrix.predictor_names)

    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise ValueError(f"design matrix is rank deficient: {_dependent_pair(X, names)}")

    coef, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    rss = float(resid @ resid)
    df = n - X.shape[1]
    if df < 1:
        raise ValueError(f"no residual degrees of freedom (n={n}, columns={X.shape[1]})")
    # diag((X^T X)^-1) from the SVD of X: sum_j V[k, j]^2 / s_j^2
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    v = vt.T
    cov_diag = np.sum((v / s[None, :]) ** 2, axis=1)
    return OlsFit(
        response=response,
        coefficients=coef,
        residual_variance=rss / df,
        rss=rss,
        df=df,
        unscaled_cov_diag=cov_diag,
    )


def replay_row(coef: float, se: float, t_crit: float = 1.96) -> tuple[float, float, float]:
    """The report formulas applied to an externally reported (coef, SE) pair.

    Returns (t, ci_lower, ci_upper): t = coef / SE and ci = coef +- t_crit * SE.
    """
    if se <= 0:
        raise ValueError(f"standard error must be positive, got {se}")
    return coef / se, coef - t_crit * se, coef + t_crit * se


def inference(fit: OlsFit, matrix: DesignMatrix, alpha: float = 0.05) -> RegressionReport:
    """Standard errors, t statistics, p-values, and CIs for the predictors."""
    if fit.df < 1:
        raise ValueError("inference requires at least one residual degree of freedom")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    t_crit = student_t_ppf(1.0 - alpha / 2.0, fit.df)
    rows = []
    for k, name in enumerate(matrix.predictor_names, start=1):
        coef = float(fit.coefficients[k])
        se = float(math.sqrt(fit.residual_variance * fit.unscaled_cov_diag[k]))
        if se > 0:
            t = coef / se
            p = 2.0 * _student_t_sf(abs(t), fit.df)
        else:
            t = math.copysign(math.inf, coef) if coef != 0 else 0.0
            p = 0.0 if coef != 0 else 1.0
        rows.append(
            PredictorRow(
                name=name,
                coef=coef,
                se=se,
                t=t,
                p_value=p,
                ci_lower=coef - t_crit * se,
                ci_upper=coef + t_crit * se,
            )
        )
    return RegressionReport(response=fit.response, rows=rows, df=fit.df, alpha=alpha)


def analyze_errors(
    per_tile_eval: list[tuple[str, object]],
    per_tile_metrics: list[tuple[str, object]],
    alpha: float = 0.05,
) -> tuple[RegressionReport, RegressionReport]:
    """Fit standardized FP and FN models on (edge, diversity, sharpness).

    ``per_tile_eval`` pairs tile ids with MatchResult-like objects (fields
    fp, fn); ``per_tile_metrics`` pairs the same ids with TileMetrics-like
    objects. Ids must agree as sets.
    """
    if len(per_tile_eval) < 10:
        raise ValueError(f"need at least 10 tiles, got {len(per_tile_eval)}")
    metric_by_id = {tid: m for tid, m in per_tile_metrics}
    eval_ids = [tid for tid, _ in per_tile_eval]
    if len(set(eval_ids)) != len(eval_ids):
        raise ValueError("duplicate tile ids in evaluation rows")
    missing = [tid for tid in eval_ids if tid not in metric_by_id]
    extra = sorted(set(metric_by_id) - set(eval_ids))
    if missing or extra:
        raise ValueError(
            f"tile ids misaligned: missing metrics for {missing[:5]}, unmatched metrics {extra[:5]}"
        )

    predictors = np.array(
        [
            [
                metric_by_id[tid].edge_density,
                metric_by_id[tid].rgb_diversity,
                metric_by_id[tid].sharpness,
            ]
            for tid in eval_ids
        ],
        dtype=float,
    )
    fp = np.array([m.fp for _, m in per_tile_eval], dtype=float)
    fn = np.array([m.fn for _, m in per_tile_eval], dtype=float)
    matrix = DesignMatrix(
        predictor_names=["edge_density", "rgb_diversity", "sharpness"],
        predictors=predictors,
        responses={"fp": fp, "fn": fn},
    )
    std = standardize(matrix)
    fp_report = inference(ols_fit(std, "fp"), std, alpha=alpha)
    fn_report = inference(ols_fit(std, "fn"), std, alpha=alpha)
    return fp_report, fn_report


def write_regression_csv(report: RegressionReport, path) -> None:
    """Table-style CSV: one row per predictor, df and alpha as comments."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# response = {report.response}\n")
        fh.write(f"# df = {report.df}\n")
        fh.write(f"# alpha = {report.alpha}\n")
        writer = csv.writer(fh)
        writer.writerow(["predictor", "coef", "se", "t", "p", "ci_lo", "ci_hi"])
        for row in report.rows:
            writer.writerow(
                [
                    row.name,
                    f"{row.coef:.6f}",
                    f"{row.se:.6f}",
                    f"{row.t:.6f}",
                    f"{row.p_value:.6e}",
                    f"{row.ci_lower:.6f}",
                    f"{row.ci_upper:.6f}",
                ]
            )


# --- Student-t distribution via the regularized incomplete beta function ---

_CF_MAX_ITER = 300
_CF_EPS = 1e-15
_CF_TINY = 1e-300


def _beta_cont_frac(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b), modified Lentz iteration."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cont_frac(a, b, x) / a
    return 1.0 - front * _beta_cont_frac(b, a, 1.0 - x) / b


def _student_t_sf(t: float, df: float) -> float:
    """Upper tail P(T > t) for t >= 0, with full relative precision."""
    x = df / (df + t * t)
    return 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x)


def student_t_cdf(t: float, df: float) -> float:
    """CDF of Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError(f"df must be positive, got {df}")
    if t >= 0:
        return 1.0 - _student_t_sf(t, df)
    return _student_t_sf(-t, df)


def student_t_ppf(q: float, df: float) -> float:
    """Inverse CDF by bisection on the package's own CDF."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    if df <= 0:
        raise ValueError(f"df must be positive, got {df}")
    if q == 0.5:
        return 0.0
    if q < 0.5:
        return -student_t_ppf(1.0 - q, df)
    lo, hi = 0.0, 2.0
    while student_t_cdf(hi, df) < q:
        hi *= 2.0
        if hi > 1e12:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if student_t_cdf(mid, df) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
