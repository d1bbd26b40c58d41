"""Statistical reductions turning per-replica outputs into reported estimates.

Every function here is pure: arrays of per-replica quantities go in, reports
with standard errors come out.  Replica generation and parallel execution
live in the runner; because each reduction is a fixed-order commutative
aggregate over the replica axis, results cannot depend on how the replicas
were scheduled.

Two routes to the effective diffusivity of the winding count are provided:
`sigma_annealed` (pinned start against a flat end) normalizes the replica
mean of the exact conditional second moment of the winding total, while
`sigma_stationary` (stationary boundaries) sums a lag-covariance series of
the increment sequence.  Both exploit conditional laws instead of sampled
increments wherever possible, which removes sampling noise at zero bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sstats


class DegenerateFitError(RuntimeError):
    """Raised when a decay or profile fit has too little usable signal."""


@dataclass
class EstimateReport:
    """One scalar estimate with its provenance and standard error."""

    name: str
    value: float
    std_error: float
    replicas: int
    config_hash: str = ""
    seed: int = 0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.std_error >= 0:
            raise ValueError(f"std_error must be >= 0, got {self.std_error}")
        if self.replicas < 2:
            raise ValueError(f"need at least 2 replicas, got {self.replicas}")


@dataclass
class CovarianceSeries:
    """Lagged covariance estimates of the winding-increment sequence."""

    lags: np.ndarray
    estimates: np.ndarray
    std_errors: np.ndarray

    def __post_init__(self):
        if not (len(self.lags) == len(self.estimates) == len(self.std_errors)):
            raise ValueError("lags, estimates, and std_errors must align")
        if self.lags[0] != 0:
            raise ValueError("series must start at lag 0")
        if not self.estimates[0] >= 0:
            raise ValueError(f"lag-0 covariance must be >= 0, got {self.estimates[0]}")


def mean_report(name: str, samples, config_hash: str = "", seed: int = 0, **extras) -> EstimateReport:
    """Sample mean with its standard error across replicas."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 1 or len(arr) < 2:
        raise ValueError("need a flat array of at least 2 samples")
    return EstimateReport(
        name=name,
        value=float(arr.mean()),
        std_error=float(arr.std(ddof=1) / np.sqrt(len(arr))),
        replicas=len(arr),
        config_hash=config_hash,
        seed=seed,
        extras=dict(extras),
    )


def complex_mean_report(name: str, values, config_hash: str = "", seed: int = 0, **extras) -> EstimateReport:
    """Mean of complex-valued replica outputs; value holds the real part.

    The reported std_error is the root-sum-square of the componentwise
    standard errors, an upper bound on the standard error of the modulus.
    """
    arr = np.asarray(values, dtype=complex)
    if arr.ndim != 1 or len(arr) < 2:
        raise ValueError("need a flat array of at least 2 samples")
    n = len(arr)
    se_re = float(arr.real.std(ddof=1) / np.sqrt(n))
    se_im = float(arr.imag.std(ddof=1) / np.sqrt(n))
    mean = arr.mean()
    return EstimateReport(
        name=name,
        value=float(mean.real),
        std_error=float(np.hypot(se_re, se_im)),
        replicas=n,
        config_hash=config_hash,
        seed=seed,
        extras={
            "imag": float(mean.imag),
            "modulus": float(abs(mean)),
            "std_error_real": se_re,
            "std_error_imag": se_im,
            **extras,
        },
    )


def sigma_annealed(second_moments, n_units: int, sampled_totals=None, **meta) -> EstimateReport:
    """Diffusivity from the pinned route: mean winding second moment over N.

    `second_moments` are per-replica conditional second moments of the
    winding total (exact given each replica's noise and sampled path);
    optional `sampled_totals` are the actually drawn winding totals, whose
    noisier estimate is reported alongside as a consistency extra.
    """
    arr = np.asarray(second_moments, dtype=float) / n_units
    report = mean_report("sigma_annealed", arr, **meta)
    report.extras["n_units"] = float(n_units)
    if sampled_totals is not None:
        sampled = np.asarray(sampled_totals, dtype=float) ** 2 / n_units
        report.extras["value_sampled"] = float(sampled.mean())
        report.extras["std_error_sampled"] = float(sampled.std(ddof=1) / np.sqrt(len(sampled)))
    return report


def covariance_lags(means, seconds, n_max: int):
    """Per-replica lag covariances of the increment sequence.

    means/seconds: (replicas, N) conditional first/second moments of each
    unit's increment given the sampled path.  Under stationary boundaries
    every index pair at a given lag estimates the same covariance, so lag j
    averages the product of conditional means over all N-j pairs (for j >= 1
    the increments are conditionally independent, making the product of
    means the exact conditional expectation of the increment product).

    Returns (sigma_per_replica, CovarianceSeries): the per-replica variance
    of the N-unit increment sum over N, expanded in lag covariances as
    v0 + 2*sum_j (1 - j/N) v_j truncated at n_max (the finite-horizon
    weights make the sum exactly Var(total)/N when the cutoff covers all
    correlated lags), and the series of cross-replica lag estimates with
    standard errors.
    """
    means = np.asarray(means, dtype=float)
    seconds = np.asarray(seconds, dtype=float)
    if means.shape != seconds.shape or means.ndim != 2:
        raise ValueError("means and seconds must be matching (replicas, N) arrays")
    reps, n_units = means.shape
    if reps < 2:
        raise ValueError("need at least 2 replicas")
    if not 1 <= n_max < n_units / 2:
        raise ValueError(f"lag cutoff must be in [1, N/2), got {n_max} at N={n_units}")
    per_lag = np.empty((reps, n_max + 1))
    per_lag[:, 0] = seconds.mean(axis=1)
    for j in range(1, n_max + 1):
        per_lag[:, j] = (means[:, :-j] * means[:, j:]).mean(axis=1)
    weights = 1.0 - np.arange(1, n_max + 1) / n_units
    sigma_per_replica = per_lag[:, 0] + 2.0 * (per_lag[:, 1:] * weights).sum(axis=1)
    series = CovarianceSeries(
        lags=np.arange(n_max + 1),
        estimates=per_lag.mean(axis=0),
        std_errors=per_lag.std(axis=0, ddof=1) / np.sqrt(reps),
    )
    return sigma_per_replica, series


def sigma_stationary(means, seconds, n_max: int, **meta):
    """Diffusivity from the stationary route: variance of the N-unit sum.

    The headline value is the finite-horizon variance-over-N of the summed
    increments (lag covariances with 1 - j/N weights, truncated at n_max);
    the plain truncated series sum — its large-N limit form — is reported
    in extras as `sum_unweighted`.  Returns (EstimateReport,
    CovarianceSeries).  The standard error comes from the cross-replica
    scatter of the per-replica weighted sums, so the correlations between
    lag estimates are fully accounted for.
    """
    sigma_per_replica, series = covariance_lags(means, seconds, n_max)
    report = mean_report("sigma_stationary", sigma_per_replica, **meta)
    report.extras["lag_cutoff"] = float(n_max)
    report.extras["sum_unweighted"] = float(
        series.estimates[0] + 2.0 * series.estimates[1:].sum()
    )
    return report, series


def increment_mean(means, **meta) -> EstimateReport:
    """Mean winding increment, variance-reduced through conditional means."""
    means = np.asarray(means, dtype=float)
    if means.ndim != 2:
        raise ValueError("need a (replicas, N) array of conditional means")
    return mean_report("increment_mean", means.mean(axis=1), **meta)


def increment_moment(laws, offsets, exponent: float, **meta) -> EstimateReport:
    """Replica-mean absolute moment of one unit's conditional increment law."""
    laws = np.asarray(laws, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    if exponent < 1:
        raise ValueError(f"moment exponent must be >= 1, got {exponent}")
    if laws.ndim != 2 or laws.shape[1] != len(offsets):
        raise ValueError("laws must be (replicas, len(offsets))")
    values = laws @ (np.abs(offsets) ** exponent)
    report = mean_report(f"increment_moment_p{exponent:g}", values, **meta)
    report.extras["exponent"] = float(exponent)
    return report


def char_fn(values, freq: float, **meta) -> EstimateReport:
    """Replica-mean characteristic value of the scaled winding total."""
    report = complex_mean_report("char_fn", values, **meta)
    report.extras["freq"] = float(freq)
    return report


_RHO_FUNCTIONS = ("identity", "sign", "block3")


def rho_mixing(increments, lag_list, functions=_RHO_FUNCTIONS):
    """Correlation-decay proxies for the increment sequence at the given lags.

    For each lag n and each test function, pools the pairs (F at index k,
    G at index k+n) over replicas and interior indices and reports the
    absolute Pearson correlation.  F and G respect the past/future split:
    identity and sign look at single increments; block3 correlates the sum
    of three consecutive increments ending at k with the sum of three
    starting at k+n.  The true mixing coefficient is a supremum over all
    such pairs, so every reported value is a lower-bound proxy; standard
    errors use the independent-pairs approximation on the pooled count.
    """
    arr = np.asarray(increments, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ValueError("need a (replicas, N) increment array with >= 2 replicas")
    n_units = arr.shape[1]
    lags = [int(n) for n in lag_list]
    if not lags or min(lags) < 1:
        raise ValueError("lags must be positive integers")
    if max(lags) >= n_units / 4:
        raise ValueError(f"max lag must be < N/4, got {max(lags)} at N={n_units}")
    rows = []
    for n in lags:
        for fn in functions:
            u, v = _rho_pairs(arr, n, fn)
            rows.append(_corr_row(n, fn, u, v))
    return rows


def _rho_pairs(arr, lag, fn):
    if fn == "identity":
        return arr[:, : arr.shape[1] - lag], arr[:, lag:]
    if fn == "sign":
        return np.sign(arr[:, : arr.shape[1] - lag]), np.sign(arr[:, lag:])
    if fn == "block3":
        width = 3
        summed = np.cumsum(arr, axis=1)
        blocks = summed[:, width - 1 :].copy()
        blocks[:, 1:] -= summed[:, : -(width)]
        # blocks[:, k] = sum of increments k..k+2; F ends at k+2, G starts at
        # k+2+lag, so pair block k with block k+2+lag
        shift = width - 1 + lag
        if blocks.shape[1] <= shift:
            raise ValueError(f"series too short for block3 at lag {lag}")
        return blocks[:, :-shift], blocks[:, shift:]
    raise ValueError(f"unknown test function {fn!r}")


def _corr_row(lag, fn, u, v):
    u = u.ravel()
    v = v.ravel()
    m = len(u)
    du = u - u.mean()
    dv = v - v.mean()
    su = float(np.sqrt((du * du).sum()))
    sv = float(np.sqrt((dv * dv).sum()))
    if su == 0.0 or sv == 0.0:
        return {"lag": lag, "function": fn, "value": 0.0, "std_error": float("inf"), "pairs": m}
    r = float(np.abs((du * dv).sum() / (su * sv)))
    se = (1.0 - min(r, 1.0) ** 2) / np.sqrt(max(m - 3, 1))
    return {"lag": lag, "function": fn, "value": r, "std_error": float(se), "pairs": m}


def clt_test(samples, sigma_hat: float, n_units: int):
    """Kolmogorov-Smirnov distance of the standardized winding totals.

    Standardizes the totals by sigma_hat * sqrt(n_units) and compares to the
    standard normal.  Returns (statistic, p_value).
    """
    arr = np.asarray(samples, dtype=float)
    if len(arr) < 500:
        raise ValueError(f"need at least 500 samples, got {len(arr)}")
    if not sigma_hat > 0:
        raise ValueError(f"sigma_hat must be positive, got {sigma_hat}")
    z = arr / (sigma_hat * np.sqrt(n_units))
    result = sstats.kstest(z, "norm")
    return float(result.statistic), float(result.pvalue)


def mixing_rate(times, gaps, floor: float = 1e-13, **meta) -> EstimateReport:
    """Exponential decay rate of the contraction gap by log-linear fit.

    Points at or below `floor` sit in float round-off and are excluded; at
    least 3 usable points are required.  Returns the fitted rate (positive
    means contraction) with the slope standard error and fit R^2.
    """
    t = np.asarray(times, dtype=float)
    g = np.asarray(gaps, dtype=float)
    if t.shape != g.shape or t.ndim != 1:
        raise ValueError("times and gaps must be matching 1-d arrays")
    usable = np.isfinite(g) & (g > floor)
    if usable.sum() < 3:
        raise DegenerateFitError(
            f"only {int(usable.sum())} gap points above the float floor; "
            "densities may have coupled identically"
        )
    x = t[usable]
    y = np.log(g[usable])
    slope, intercept, sse, r_squared = _line_fit(x, y)
    dof = len(x) - 2
    resid_var = sse / dof if dof > 0 else 0.0
    slope_se = float(np.sqrt(resid_var / ((x - x.mean()) ** 2).sum()))
    report = EstimateReport(
        name="mixing_rate",
        value=float(-slope),
        std_error=slope_se,
        replicas=int(meta.pop("replicas", len(x))),
        **meta,
    )
    report.extras.update(
        {"r_squared": r_squared, "intercept": float(intercept), "points_used": float(len(x))}
    )
    return report


def tail_profile(squares, offsets, **meta):
    """Quadratic-in-offset fit of the log replica-mean squared kernel entries.

    squares: (replicas, len(offsets)) per-replica squared diagonal kernel
    entries at each winding offset.  Fits log mean against 1, j, j^2 and
    returns (EstimateReport on the j^2 coefficient, per-offset rows).
    """
    sq = np.asarray(squares, dtype=float)
    offs = np.asarray(offsets, dtype=float)
    if sq.ndim != 2 or sq.shape[1] != len(offs):
        raise ValueError("squares must be (replicas, len(offsets))")
    if len(offs) < 4:
        raise DegenerateFitError("need at least 4 offsets for a quadratic fit")
    reps = sq.shape[0]
    means = sq.mean(axis=0)
    if not np.all(means > 0):
        raise DegenerateFitError("replica-mean squared entries must be positive")
    ses = sq.std(axis=0, ddof=1) / np.sqrt(reps)
    log_means = np.log(means)
    design = np.column_stack([np.ones_like(offs), offs, offs * offs])
    coef, residuals, _, _ = np.linalg.lstsq(design, log_means, rcond=None)
    fitted = design @ coef
    total = ((log_means - log_means.mean()) ** 2).sum()
    sse = float(((log_means - fitted) ** 2).sum())
    r_squared = 1.0 - sse / total if total > 0 else 1.0
    report = EstimateReport(
        name="tail_profile",
        value=float(coef[2]),
        std_error=0.0,
        replicas=reps,
        **meta,
    )
    report.extras.update(
        {"r_squared": float(r_squared), "linear_term": float(coef[1]), "intercept": float(coef[0])}
    )
    rows = [
        {
            "offset": float(offs[i]),
            "mean_square": float(means[i]),
            "std_error": float(ses[i]),
            "log_mean": float(log_means[i]),
        }
        for i in range(len(offs))
    ]
    return report, rows


def ratio_stationarity(values, offsets):
    """Cross-offset agreement of kernel-to-free-kernel ratios.

    values: (replicas, len(offsets)) per-replica ratios at each spatial
    offset.  Returns (rows, summary): per-offset mean/variance with standard
    errors, and the largest pairwise discrepancy between offsets in units of
    the joint standard error, for both means and variances.
    """
    vals = np.asarray(values, dtype=float)
    offs = np.asarray(offsets, dtype=float)
    if vals.ndim != 2 or vals.shape[1] != len(offs):
        raise ValueError("values must be (replicas, len(offsets))")
    reps = vals.shape[0]
    if reps < 2:
        raise ValueError("need at least 2 replicas")
    means = vals.mean(axis=0)
    mean_ses = vals.std(axis=0, ddof=1) / np.sqrt(reps)
    centered = vals - means
    variances = (centered**2).sum(axis=0) / (reps - 1)
    fourth = (centered**4).mean(axis=0)
    var_ses = np.sqrt(np.maximum(fourth - variances**2, 0.0) / reps)
    rows = [
        {
            "offset": float(offs[i]),
            "mean": float(means[i]),
            "mean_std_error": float(mean_ses[i]),
            "variance": float(variances[i]),
            "variance_std_error": float(var_ses[i]),
        }
        for i in range(len(offs))
    ]
    summary = {
        "max_mean_discrepancy_se": _max_pairwise_se(means, mean_ses),
        "max_variance_discrepancy_se": _max_pairwise_se(variances, var_ses),
    }
    return rows, summary


def _max_pairwise_se(values, ses) -> float:
    worst = 0.0
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            joint = float(np.hypot(ses[i], ses[j]))
            if joint == 0.0:
                if values[i] != values[j]:
                    return float("inf")
                continue
            worst = max(worst, abs(values[i] - values[j]) / joint)
    return worst


def _line_fit(x, y):
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    sse = float(((y - fitted) ** 2).sum())
    total = float(((y - y.mean()) ** 2).sum())
    r_squared = 1.0 - sse / total if total > 0 else 1.0
    return float(slope), float(intercept), sse, float(r_squared)
