"""Channel scaling, window-wise RMS extraction, and the RBF feature kernel."""

from __future__ import annotations

import warnings
from dataclasses import replace

import numpy as np

from .errors import ConfigError, DataError, DimensionError
from .series import RmsSequence, RtFSeries


def min_max_scale(series, stats=None):
    """Scale each channel of a series to [0, 1] over its full sample stream.

    ``stats`` optionally supplies externally fitted per-channel minima and
    maxima as a pair of length-C arrays; otherwise they come from the series
    itself. A channel with zero range maps to all zeros and emits a warning.

    Returns ``(scaled_series, (mins, maxs))``.
    """
    streams = series.channel_streams()
    if stats is None:
        mins = streams.min(axis=1)
        maxs = streams.max(axis=1)
    else:
        mins = np.asarray(stats[0], dtype=np.float64)
        maxs = np.asarray(stats[1], dtype=np.float64)
        if mins.shape != (series.n_channels,) or maxs.shape != (series.n_channels,):
            raise DimensionError(
                f"stats must be two length-{series.n_channels} arrays"
            )
        if np.any(maxs < mins):
            raise ConfigError("supplied channel max below min")
    span = maxs - mins
    flat = np.zeros_like(streams)
    for c in range(series.n_channels):
        if span[c] == 0.0:
            warnings.warn(
                f"channel {c} has zero range; scaled to all zeros", stacklevel=2
            )
        else:
            flat[c] = (streams[c] - mins[c]) / span[c]
    scaled = flat.reshape(
        series.n_channels, series.n_snapshots, series.snapshot_len
    ).transpose(1, 0, 2)
    return replace(series, snapshots=scaled), (mins, maxs)


def windowed_rms(series, omega):
    """RMS over consecutive non-overlapping windows of ``omega`` raw samples.

    Windows run over the per-channel concatenated sample stream; a trailing
    remainder shorter than ``omega`` is dropped. Result vectors are (N, C)
    with N = total_scalar_length // omega.
    """
    if omega < 1:
        raise ConfigError(f"omega must be >= 1, got {omega}")
    total = series.total_scalar_length
    if omega > total:
        raise DataError(
            f"omega={omega} exceeds per-channel stream length {total}: no windows"
        )
    n = total // omega
    streams = series.channel_streams()[:, : n * omega]
    sq = streams.reshape(series.n_channels, n, omega) ** 2
    vectors = np.sqrt(sq.mean(axis=2)).T
    return RmsSequence(
        vectors=vectors,
        omega=omega,
        domain=series.domain,
        snapshot_len=series.snapshot_len,
    )


def median_pairwise_distance(vectors):
    """Median Euclidean distance over all distinct pairs of rows."""
    n = vectors.shape[0]
    if n < 2:
        raise DataError("need at least 2 vectors for pairwise distances")
    diffs = vectors[:, None, :] - vectors[None, :, :]
    dists = np.sqrt((diffs**2).sum(axis=-1))
    iu = np.triu_indices(n, k=1)
    return float(np.median(dists[iu]))


def rbf_kernel_matrix(seq, sigma="median"):
    """Gaussian kernel matrix of the RMS vectors.

    ``K[u, v] = exp(-||mu_u - mu_v||^2 / (2 sigma^2))`` with a unit diagonal.
    ``sigma="median"`` uses the median pairwise distance; if that collapses
    to zero (all vectors identical) sigma falls back to 1.0 with a warning.
    """
    vectors = seq.vectors if isinstance(seq, RmsSequence) else np.asarray(seq, float)
    if vectors.ndim != 2 or vectors.shape[0] < 2:
        raise DataError("kernel matrix needs an (N, C) array with N >= 2")
    if sigma == "median":
        sigma_val = median_pairwise_distance(vectors)
        if sigma_val == 0.0:
            warnings.warn(
                "median pairwise distance is zero; falling back to sigma=1.0",
                stacklevel=2,
            )
            sigma_val = 1.0
    else:
        sigma_val = float(sigma)
        if sigma_val <= 0.0:
            raise ConfigError(f"sigma must be positive, got {sigma_val}")
    diffs = vectors[:, None, :] - vectors[None, :, :]
    sq = (diffs**2).sum(axis=-1)
    k = np.exp(-sq / (2.0 * sigma_val**2))
    np.fill_diagonal(k, 1.0)
    return k
