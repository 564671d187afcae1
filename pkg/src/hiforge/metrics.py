"""Health-indicator quality metrics, training-stability score, and
input-sensitivity maps.

A candidate indicator is split into a centered moving-average trend and a
residual. Monotonicity, time correlation, and robustness are computed from
those parts and combined into a single weighted index. PI-Control summarizes
late-training loss stability; the effective-receptive-field map measures how
far along the snapshot the encoder actually looks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat, mean
from .errors import ConfigError, DataError
from .model import encode_batch

MON_LAGS = (1, 2, 3)
CI_WEIGHTS = (0.4, 0.3, 0.3)


@dataclass
class HiSeries:
    """Indicator values with their moving-average trend.

    The residual is always ``values - trend``, so the decomposition is exact
    by construction.
    """

    values: np.ndarray
    trend: np.ndarray
    ma_window: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.trend = np.asarray(self.trend, dtype=np.float64)
        if self.values.ndim != 1 or self.trend.ndim != 1:
            raise DataError("values and trend must be 1-D")
        if self.values.shape != self.trend.shape:
            raise DataError(
                f"trend length {self.trend.size} != values length {self.values.size}"
            )
        if not (np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.trend))):
            raise DataError("indicator series contains non-finite values")
        if self.ma_window < 1:
            raise ConfigError("ma_window must be >= 1")

    @property
    def residual(self):
        return self.values - self.trend

    @property
    def n(self):
        return self.values.size


def moving_average(values, window=5):
    """Centered moving average; edge windows shrink symmetrically.

    ``window`` must be odd so the center stays aligned; near the edges the
    half-width is reduced to what fits on both sides.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise DataError("values must be 1-D")
    n = values.size
    if window % 2 == 0:
        raise ConfigError(f"window must be odd, got {window}")
    if not 1 <= window <= n:
        raise DataError(f"window must be in [1, {n}], got {window}")
    half = window // 2
    trend = np.empty(n)
    for t in range(n):
        r = min(half, t, n - 1 - t)
        trend[t] = values[t - r : t + r + 1].mean()
    return HiSeries(values=values, trend=trend, ma_window=window)


def monotonicity(series):
    """Average absolute signed-difference fraction over lags 1..3, in [0, 1]."""
    m = series.trend
    n = m.size
    if n < 4:
        raise DataError(f"monotonicity needs at least 4 points, got {n}")
    terms = []
    for lag in MON_LAGS:
        signs = np.sign(m[lag:] - m[:-lag])
        terms.append(abs(signs.sum()) / (n - lag))
    return float(np.mean(terms))


def correlation(series):
    """Absolute Pearson correlation of the trend with time, in [0, 1]."""
    m = series.trend
    n = m.size
    if n < 2:
        raise DataError(f"correlation needs at least 2 points, got {n}")
    t = np.arange(1, n + 1, dtype=np.float64)
    mc = m - m.mean()
    tc = t - t.mean()
    denom = np.sqrt((mc**2).sum() * (tc**2).sum())
    if denom == 0.0:
        warnings.warn("constant trend; correlation reported as 0", stacklevel=2)
        return 0.0
    return float(abs((mc * tc).sum() / denom))


def robustness(series, xi=2.0):
    """exp of the negative scaled mean absolute residual over the trend range.

    A flat trend is only acceptable when the residuals are exactly zero
    (the score is then 1); otherwise the range normalization is undefined.
    """
    if xi <= 0:
        raise ConfigError(f"xi must be positive, got {xi}")
    resid = series.residual
    spread = series.trend.max() - series.trend.min()
    if spread == 0.0:
        if np.all(resid == 0.0):
            return 1.0
        raise DataError("flat trend with nonzero residuals; robustness undefined")
    n = series.n
    return float(np.exp(-(xi / n) * np.sum(np.abs(resid)) / spread))


def comprehensive_index(mon, cor, rob, weights=CI_WEIGHTS):
    """Weighted combination of the three scores, 0.4/0.3/0.3 by default."""
    for name, value in (("mon", mon), ("cor", cor), ("rob", rob)):
        if not -1e-9 <= value <= 1 + 1e-9:
            raise DataError(f"{name}={value} outside [0, 1]")
    return weights[0] * mon + weights[1] * cor + weights[2] * rob


@dataclass
class MetricsReport:
    mon: float
    cor: float
    rob: float
    ci: float
    xi: float
    ma_window: int
    n: int
    weights: tuple = CI_WEIGHTS

    def as_dict(self):
        return {
            "mon": self.mon,
            "cor": self.cor,
            "rob": self.rob,
            "ci": self.ci,
            "xi": self.xi,
            "ma_window": self.ma_window,
            "n": self.n,
            "weights": list(self.weights),
        }


def evaluate_hi(values, window=5, xi=2.0):
    """Full quality report for a raw indicator series."""
    series = moving_average(values, window=window)
    mon = monotonicity(series)
    cor = correlation(series)
    rob = robustness(series, xi=xi)
    ci = comprehensive_index(mon, cor, rob)
    return MetricsReport(
        mon=mon, cor=cor, rob=rob, ci=ci, xi=xi, ma_window=window, n=series.n
    )


def pi_control(losses, horizon=10):
    """Sample standard deviation of the final ``horizon`` epoch losses."""
    losses = np.asarray(losses, dtype=np.float64)
    if losses.ndim != 1:
        raise DataError("losses must be 1-D")
    if horizon < 2:
        raise ConfigError(f"horizon must be >= 2, got {horizon}")
    if losses.size < horizon:
        raise DataError(
            f"need at least {horizon} epoch losses, got {losses.size}"
        )
    return float(np.std(losses[-horizon:], ddof=1))


# -- input sensitivity ---------------------------------------------------


def erf_map(params, cfg, source, target, batches, n_batches=5):
    """Mean absolute input gradient of the pooled encoder response, per time step.

    The probe scalar is the mean of both domains' encoder feature tensors;
    its gradient is averaged over batch samples, channels, domains, and the
    first ``n_batches`` mini-batches.
    """
    if n_batches < 1:
        raise ConfigError("n_batches must be >= 1")
    use = batches[:n_batches]
    if not use:
        raise DataError("no batches supplied")
    total = np.zeros(cfg.snapshot_len)
    for batch in use:
        xs = Tensor(source.snapshots[batch.source_indices], requires_grad=True)
        xt = Tensor(target.snapshots[batch.target_indices], requires_grad=True)
        result = encode_batch(params, xs, xt, cfg, train=False)
        probe = mean(concat([result.source_features, result.target_features], axis=0))
        probe.backward()
        grads = np.concatenate([np.abs(xs.grad), np.abs(xt.grad)], axis=0)
        total += grads.mean(axis=(0, 1))
    return total / len(use)


def erf_breadth(erf, rel_threshold=0.01):
    """Fraction of time steps whose sensitivity reaches ``rel_threshold`` of the peak."""
    erf = np.asarray(erf, dtype=np.float64)
    if erf.ndim != 1 or erf.size == 0:
        raise DataError("erf map must be a non-empty 1-D array")
    if np.any(erf < 0):
        raise DataError("erf map must be nonnegative")
    return float(np.mean(erf >= rel_threshold * erf.max()))
