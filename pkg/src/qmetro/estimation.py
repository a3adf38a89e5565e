"""Phase estimators and Monte-Carlo studies of their variance.

The estimators work on single-parameter discrete outcome models. Because the
likelihood of i.i.d. outcomes depends on the data only through the outcome
counts, all estimators have a counts-based entry point; the scikit-learn style
classes wrap them with ``fit(X)`` on an array of outcome indices.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, stats
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .fisher import DivergentFisherWarning, classical_fi
from .models import DiscreteModel, OutcomeSample, draw_outcomes

N_GRID = 2048
DEFAULT_SUPPORT = (0.0, np.pi)


class EdgePosteriorWarning(UserWarning):
    """The posterior peaks at an end of the prior support."""


class FlatLikelihoodError(ValueError):
    pass


def derive_seed(seed: int, *path: int) -> int:
    """Deterministic child seed for a position in a nested study."""
    ss = np.random.SeedSequence([int(seed), *map(int, path)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _grid(support: Sequence[float], n_grid: int) -> np.ndarray:
    lo, hi = map(float, support)
    if not hi > lo:
        raise ValueError(f"empty support [{lo}, {hi}]")
    return np.linspace(lo, hi, n_grid)


class LikelihoodTable:
    """``log p(x|phi)`` tabulated on a uniform grid, shared across many samples."""

    def __init__(self, model: DiscreteModel, support=DEFAULT_SUPPORT, n_grid: int = N_GRID):
        if model.n_params != 1:
            raise ValueError("estimators need a single-parameter model")
        self.model = model
        self.grid = _grid(support, n_grid)
        probs = model.probability_table(self.grid)
        with np.errstate(divide="ignore"):
            self.log_probs = np.log(probs)  # (n_grid, n_outcomes)

    @property
    def n_outcomes(self) -> int:
        return self.log_probs.shape[1]

    def log_likelihood(self, counts) -> np.ndarray:
        counts = np.asarray(counts, dtype=float)
        if counts.shape != (self.n_outcomes,):
            raise ValueError(f"expected {self.n_outcomes} outcome counts, got shape {counts.shape}")
        # 0 * log 0 counts as 0: outcomes never seen carry no information
        with np.errstate(invalid="ignore"):
            terms = np.where(counts > 0, counts * self.log_probs, 0.0)
        return terms.sum(axis=1)


def _as_table(model, support, n_grid) -> LikelihoodTable:
    if isinstance(model, LikelihoodTable):
        return model
    return LikelihoodTable(model, support, n_grid)


def _counts_of(data, n_outcomes: int) -> np.ndarray:
    if isinstance(data, OutcomeSample):
        return data.counts(n_outcomes)
    arr = np.asarray(data)
    if arr.ndim == 1 and arr.size == n_outcomes and np.issubdtype(arr.dtype, np.floating):
        return arr
    return np.bincount(arr.astype(int).ravel(), minlength=n_outcomes)


# ---------------------------------------------------------------- Bayes


@dataclass(frozen=True)
class PosteriorGrid:
    grid: np.ndarray
    log_posterior: np.ndarray
    normalization: float

    @property
    def density(self) -> np.ndarray:
        return np.exp(self.log_posterior)

    @property
    def mean(self) -> float:
        return float(np.trapezoid(self.grid * self.density, self.grid))

    @property
    def variance(self) -> float:
        mu = self.mean
        return float(np.trapezoid((self.grid - mu) ** 2 * self.density, self.grid))

    @property
    def mode(self) -> float:
        return float(self.grid[np.argmax(self.log_posterior)])


def posterior_from_log(grid: np.ndarray, log_unnorm: np.ndarray) -> PosteriorGrid:
    shifted = log_unnorm - log_unnorm.max()
    z = np.trapezoid(np.exp(shifted), grid)
    log_norm = np.log(z) + log_unnorm.max()
    return PosteriorGrid(grid, log_unnorm - log_norm, float(log_norm))


@dataclass(frozen=True)
class BayesResult:
    posterior: PosteriorGrid
    estimate: float
    variance: float
    at_edge: bool


def bayes_from_counts(counts, model, support=DEFAULT_SUPPORT, n_grid: int = N_GRID,
                      log_prior: Callable | None = None) -> BayesResult:
    """Grid posterior for a flat (or supplied) prior; mean and variance of it."""
    table = _as_table(model, support, n_grid)
    log_post = table.log_likelihood(counts)
    if log_prior is not None:
        log_post = log_post + np.asarray(log_prior(table.grid), dtype=float)
    if not np.isfinite(log_post.max()):
        raise FlatLikelihoodError("sample has zero likelihood everywhere on the support")
    post = posterior_from_log(table.grid, log_post)
    peak = int(np.argmax(post.log_posterior))
    at_edge = peak in (0, len(table.grid) - 1) and np.ptp(log_post[np.isfinite(log_post)]) > 0
    if at_edge:
        warnings.warn("posterior peaks at the edge of the prior support", EdgePosteriorWarning,
                      stacklevel=2)
    return BayesResult(post, post.mean, post.variance, bool(at_edge))


def bayes_estimate(sample, model, support=DEFAULT_SUPPORT, n_grid: int = N_GRID,
                   log_prior: Callable | None = None) -> BayesResult:
    table = _as_table(model, support, n_grid)
    return bayes_from_counts(_counts_of(sample, table.n_outcomes), table, log_prior=log_prior)


# ---------------------------------------------------------------- MLE


def mle_from_counts(counts, model, interval=DEFAULT_SUPPORT, n_grid: int = N_GRID,
                    xtol: float = 1e-8) -> float:
    """Grid scan of the log-likelihood followed by golden-section refinement.

    Ties on the grid go to the smallest phase; a maximum on an end point of
    the interval is returned as is.
    """
    table = _as_table(model, interval, n_grid)
    counts = np.asarray(counts, dtype=float)
    ll = table.log_likelihood(counts)
    finite = np.isfinite(ll)
    if not finite.any():
        raise FlatLikelihoodError("log-likelihood is -inf on the whole interval")
    if np.ptp(ll[finite]) == 0 and finite.all():
        raise FlatLikelihoodError("likelihood is flat: the sample carries no information")
    k = int(np.argmax(ll))
    grid = table.grid
    if k == 0 or k == len(grid) - 1:
        return float(grid[k])
    right = k + 1
    if ll[right] == ll[k] and right + 1 < len(grid):
        # maximum exactly between two grid points: widen the bracket by one
        right += 1
    if not (ll[k] > ll[k - 1] and ll[k] > ll[right]):
        return float(grid[k])
    model_ = table.model

    def neg_ll(phi):
        p = model_.probabilities([phi])
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = np.log(p)
            return -float(np.where(counts > 0, counts * lp, 0.0).sum())

    res = optimize.minimize_scalar(neg_ll, bracket=(grid[k - 1], grid[k], grid[right]),
                                   method="golden", options={"xtol": xtol})
    x = float(res.x)
    return x if grid[k - 1] <= x <= grid[right] and -res.fun >= ll[k] else float(grid[k])


def mle_estimate(sample, model, search_interval=DEFAULT_SUPPORT, n_grid: int = N_GRID) -> float:
    table = _as_table(model, search_interval, n_grid)
    return mle_from_counts(_counts_of(sample, table.n_outcomes), table)


# ---------------------------------------------------------------- sklearn wrappers


class _PhaseEstimatorBase(BaseEstimator):
    def _table(self) -> LikelihoodTable:
        key = (id(self.model), tuple(self.support), self.n_grid)
        if getattr(self, "_table_key", None) != key:
            self._table_cache = LikelihoodTable(self.model, self.support, self.n_grid)
            self._table_key = key
        return self._table_cache

    def _validate_outcomes(self, X) -> np.ndarray:
        arr = np.asarray(X)
        if arr.ndim == 2 and arr.shape[1] == 1:
            arr = arr[:, 0]
        if arr.ndim != 1:
            raise ValueError(f"expected a 1-D array of outcome indices, got shape {arr.shape}")
        if arr.size and (not np.issubdtype(arr.dtype, np.integer) and not np.all(arr == np.round(arr))):
            raise ValueError("outcomes must be integer indices")
        arr = arr.astype(int)
        n = self._table().n_outcomes
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise ValueError(f"outcome index outside [0, {n})")
        return arr

    def fit(self, X, y=None):
        """Fit on an array of outcome indices (or an :class:`OutcomeSample`)."""
        if isinstance(X, OutcomeSample):
            X = X.outcomes
        arr = self._validate_outcomes(X)
        return self.fit_counts(np.bincount(arr, minlength=self._table().n_outcomes))


class BayesianPhaseEstimator(_PhaseEstimatorBase):
    """Posterior-mean estimator on a uniform grid over ``support``."""

    def __init__(self, model=None, support=DEFAULT_SUPPORT, n_grid: int = N_GRID):
        self.model = model
        self.support = support
        self.n_grid = n_grid

    def fit_counts(self, counts):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EdgePosteriorWarning)
            res = bayes_from_counts(counts, self._table())
        self.posterior_ = res.posterior
        self.estimate_ = res.estimate
        self.variance_ = res.variance
        self.at_edge_ = res.at_edge
        return self

    def predict(self, X=None) -> float:
        check_is_fitted(self, "estimate_")
        return self.estimate_


class MaxLikelihoodEstimator(_PhaseEstimatorBase):
    """Maximum-likelihood estimator: grid scan plus golden-section refinement."""

    def __init__(self, model=None, support=DEFAULT_SUPPORT, n_grid: int = N_GRID):
        self.model = model
        self.support = support
        self.n_grid = n_grid

    def fit_counts(self, counts):
        self.estimate_ = mle_from_counts(counts, self._table())
        return self

    def predict(self, X=None) -> float:
        check_is_fitted(self, "estimate_")
        return self.estimate_


# ---------------------------------------------------------------- bootstrap


def bootstrap_variance(sample, estimator: Callable, B: int = 1000, seed: int = 0) -> float:
    """Variance of ``estimator`` over ``B`` resamples drawn with replacement.

    The sample is sorted before resampling, so the result does not depend on
    the order of the outcomes.
    """
    if B < 100:
        raise ValueError("bootstrap needs B >= 100 resamples")
    data = np.sort(np.asarray(getattr(sample, "outcomes", sample)))
    m = len(data)
    if m < 2:
        raise ValueError("bootstrap needs at least two outcomes")
    rng = np.random.default_rng(seed)
    estimates = np.empty(B)
    for b in range(B):
        estimates[b] = estimator(data[rng.integers(0, m, size=m)])
    return float(np.var(estimates, ddof=1))


# ---------------------------------------------------------------- studies


def crb_diagnostic(var_hat: float, F: float, M: int, R: int) -> dict[str, float]:
    """Ratio ``M F var_hat`` and the chi-square p-value of ``(R-1)`` times it."""
    ratio = float(M * F * var_hat)
    stat = (R - 1) * ratio
    p = float(stats.chi2.sf(stat, R - 1)) if np.isfinite(stat) else 0.0
    return {"ratio": ratio, "p_value": p}


def _estimator_fn(kind: str, table: LikelihoodTable) -> Callable:
    if kind == "bayes":
        def est(counts):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", EdgePosteriorWarning)
                return bayes_from_counts(counts, table).estimate
        return est
    if kind == "mle":
        return lambda counts: mle_from_counts(counts, table)
    raise ValueError(f"unknown estimator {kind!r}")


def repeated_estimates(model: DiscreteModel, phi: float, M: int, R: int, seed: int,
                       estimator: Callable) -> np.ndarray:
    """Estimates from ``R`` independent size-``M`` experiments."""
    probs = model.probabilities([phi])
    n = len(probs)
    out = np.empty(R)
    for r in range(R):
        x = draw_outcomes(probs, M, derive_seed(seed, M, r))
        out[r] = estimator(np.bincount(x, minlength=n))
    return out


def model_fi(model: DiscreteModel, phi: float) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DivergentFisherWarning)
        return classical_fi(model.probabilities([phi]), model.jacobian([phi])[:, 0])


def crb_value(F: float, M: int) -> float:
    """``1/(M F)``; infinite when the information vanishes, zero when it diverges."""
    if F == 0:
        return float("inf")
    return 1.0 / (M * F)


@dataclass(frozen=True)
class StudyRow:
    M: int
    mean: float
    variance: float
    crb: float
    ratio: float
    p_value: float


@dataclass
class EstimationStudy:
    phi_true: float
    R: int
    seed: int
    fisher: float
    estimator: str
    rows: list = field(default_factory=list)

    def ratios(self) -> np.ndarray:
        return np.array([r.ratio for r in self.rows])


def mc_study(model: DiscreteModel, phi_true: float, M_list: Sequence[int], R: int = 100,
             seed: int = 0, estimator: str = "bayes", support=DEFAULT_SUPPORT,
             n_grid: int = N_GRID) -> EstimationStudy:
    """Empirical estimator variance against the CRB for each sample size."""
    if R < 50:
        raise ValueError("variance studies need R >= 50 repetitions")
    table = LikelihoodTable(model, support, n_grid)
    est = _estimator_fn(estimator, table)
    F = model_fi(model, phi_true)
    study = EstimationStudy(float(phi_true), int(R), int(seed), F, estimator)
    for M in M_list:
        values = repeated_estimates(model, phi_true, int(M), R, seed, est)
        var = float(np.var(values, ddof=1))
        diag = crb_diagnostic(var, F, int(M), R)
        study.rows.append(StudyRow(int(M), float(values.mean()), var, crb_value(F, int(M)),
                                   diag["ratio"], diag["p_value"]))
    return study


@dataclass(frozen=True)
class BiasPoint:
    phi: float
    bias: float
    bias_slope: float
    variance: float
    bound: float
    std_error: float
    zero_information: bool
    passed: bool | None


def biased_crb_check(estimator: Callable, model: DiscreteModel, phi_grid: Sequence[float],
                     M: int = 1000, R: int = 200, seed: int = 0, step: float = 0.02,
                     n_sigma: float = 3.0) -> list[BiasPoint]:
    """Check ``var >= (1 + b')^2 / (M F)`` at each grid point, up to ``n_sigma`` standard errors.

    ``estimator`` maps outcome counts to an estimate. The bias slope is a
    central difference of the mean estimate at ``phi +- step`` using common
    random numbers, so the paired differences give its standard error.
    Points with zero Fisher information are flagged and left unjudged.
    """
    report = []
    for j, phi in enumerate(phi_grid):
        phi = float(phi)
        centre = repeated_estimates(model, phi, M, R, derive_seed(seed, j), estimator)
        up = repeated_estimates(model, phi + step, M, R, derive_seed(seed, j, 1), estimator)
        down = repeated_estimates(model, phi - step, M, R, derive_seed(seed, j, 1), estimator)
        slope_samples = (up - down) / (2 * step) - 1.0
        b_slope = float(slope_samples.mean())
        se_slope = float(slope_samples.std(ddof=1) / np.sqrt(R))
        var = float(np.var(centre, ddof=1))
        se_var = var * np.sqrt(2.0 / (R - 1))
        F = model_fi(model, phi)
        if F == 0:
            report.append(BiasPoint(phi, float(centre.mean() - phi), b_slope, var, float("inf"),
                                    se_var, True, None))
            continue
        bound = (1 + b_slope) ** 2 / (M * F)
        se_bound = 2 * abs(1 + b_slope) * se_slope / (M * F)
        se = float(np.hypot(se_var, se_bound))
        report.append(BiasPoint(phi, float(centre.mean() - phi), b_slope, var, float(bound), se,
                                False, bool(var >= bound - n_sigma * se)))
    return report
