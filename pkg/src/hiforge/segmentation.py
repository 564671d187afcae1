"""Degradation staging by change-point detection on RMS feature windows.

Window indices are 1-based throughout: a segmentation of N windows into M
stages is the boundary vector ``0 = tau_0 < tau_1 < ... < tau_M = N`` and
stage m covers windows ``tau_{m-1}+1 .. tau_m``. The exact dynamic program
minimizes the total within-segment cost; ties are broken toward the
lexicographically smallest interior boundary vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .features import rbf_kernel_matrix, windowed_rms
from .series import RmsSequence

ALGORITHMS = ("kcp", "binseg", "bottomup", "dynp")


@dataclass
class PenaltyConfig:
    """Model-selection penalty: cost + (c1 * log(N-1) + c2 * M) / N."""

    penalty: float = 10.0
    m_max: int = 10

    def __post_init__(self):
        if self.penalty < 0:
            raise ConfigError(f"penalty must be >= 0, got {self.penalty}")
        if self.m_max < 1:
            raise ConfigError(f"m_max must be >= 1, got {self.m_max}")

    @property
    def c1(self):
        return self.penalty

    @property
    def c2(self):
        return self.penalty

    def value(self, n_windows, m):
        return (self.c1 * math.log(n_windows - 1) + self.c2 * m) / n_windows


@dataclass
class StageSegmentation:
    """Boundary vector plus bookkeeping for one staged series."""

    boundaries: list
    omega: int
    n_windows: int
    algorithm: str = "kcp"
    objective: float | None = None
    cost: float | None = None

    def __post_init__(self):
        b = list(int(x) for x in self.boundaries)
        if b[0] != 0 or b[-1] != self.n_windows:
            raise DataError(f"boundaries must start at 0 and end at {self.n_windows}")
        if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
            raise DataError("boundaries must be strictly increasing")
        self.boundaries = b

    @property
    def n_stages(self):
        return len(self.boundaries) - 1

    def stage_of_window(self, window):
        """Stage id (0-based) of a 1-based window index."""
        if not 1 <= window <= self.n_windows:
            raise IndexError(f"window {window} outside 1..{self.n_windows}")
        return int(np.searchsorted(self.boundaries[1:], window, side="left"))


class KernelSegmentCost:
    """Within-segment cost from a kernel matrix, O(1) per query.

    ``value(a, b)`` is the mean self-similarity minus the mean pairwise
    similarity of the block, computed from 2-d prefix sums built once in
    O(N^2).
    """

    def __init__(self, kernel):
        kernel = np.asarray(kernel, dtype=np.float64)
        if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
            raise DataError(f"kernel must be square, got shape {kernel.shape}")
        self.n = kernel.shape[0]
        self._block = np.zeros((self.n + 1, self.n + 1))
        self._block[1:, 1:] = kernel.cumsum(axis=0).cumsum(axis=1)
        self._diag = np.concatenate([[0.0], np.diag(kernel).cumsum()])

    def value(self, a, b):
        """Cost of the segment of 1-based windows a..b inclusive."""
        return float(self.value_vec(np.asarray([a]), b)[0])

    def value_vec(self, a, b):
        """Vectorized over segment starts ``a`` for a fixed end ``b``."""
        a = np.asarray(a)
        n = b - a + 1
        diag = self._diag[b] - self._diag[a - 1]
        block = (
            self._block[b, b]
            - self._block[a - 1, b]
            - self._block[b, a - 1]
            + self._block[a - 1, a - 1]
        )
        return diag / n - block / (n * n)


class L2SegmentCost:
    """Mean-shift (within-segment variance) cost over feature vectors."""

    def __init__(self, vectors):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise DataError(f"vectors must be (N, C), got shape {vectors.shape}")
        self.n = vectors.shape[0]
        self._sum = np.zeros((self.n + 1, vectors.shape[1]))
        self._sum[1:] = vectors.cumsum(axis=0)
        self._sumsq = np.concatenate([[0.0], (vectors**2).sum(axis=1).cumsum()])

    def value(self, a, b):
        return float(self.value_vec(np.asarray([a]), b)[0])

    def value_vec(self, a, b):
        a = np.asarray(a)
        n = b - a + 1
        total = self._sum[b] - self._sum[a - 1]
        sumsq = self._sumsq[b] - self._sumsq[a - 1]
        return sumsq - (total**2).sum(axis=-1) / n


def _dp_tables(cost, m_max):
    """Exact DP over (segment count, end window) with lexicographic ties.

    Returns ``(dp, vec)`` where ``dp[k][t]`` is the minimal cost of splitting
    windows 1..t into k segments and ``vec[k][t]`` the tie-broken interior
    boundary tuple achieving it.
    """
    n = cost.n
    dp = np.full((m_max + 1, n + 1), np.inf)
    dp[0, 0] = 0.0
    vec = [[None] * (n + 1) for _ in range(m_max + 1)]
    vec[0][0] = ()
    for k in range(1, m_max + 1):
        for t in range(k, n + 1):
            starts = np.arange(k - 1, t)
            cands = dp[k - 1, starts] + cost.value_vec(starts + 1, t)
            best = np.min(cands)
            if not np.isfinite(best):
                continue
            ties = starts[cands == best]
            if len(ties) == 1 or k == 1:
                s = int(ties[0])
            else:
                s = min(ties, key=lambda s_: vec[k - 1][s_] + (int(s_),))
            dp[k, t] = best
            vec[k][t] = vec[k - 1][s] + ((int(s),) if k > 1 else ())
    return dp, vec


def segment_fixed_m(cost, m, omega=1, algorithm="kcp"):
    """Optimal segmentation into exactly ``m`` segments.

    ``cost`` is a segment-cost object or a raw kernel matrix.
    """
    if isinstance(cost, np.ndarray):
        cost = KernelSegmentCost(cost)
    if not 1 <= m <= cost.n:
        raise ConfigError(f"m={m} must be within 1..{cost.n}")
    dp, vec = _dp_tables(cost, m)
    total = float(dp[m, cost.n])
    boundaries = [0, *vec[m][cost.n], cost.n]
    return StageSegmentation(
        boundaries=boundaries,
        omega=omega,
        n_windows=cost.n,
        algorithm=algorithm,
        cost=total,
        objective=total,
    )


def segment_target(seq, penalty=None, sigma="median", kernel=None):
    """Stage a series: penalized model selection over the segment count.

    ``seq`` is an ``RmsSequence`` (or raw (N, C) array); ``kernel`` may
    supply a precomputed kernel matrix instead. The selected M minimizes
    ``cost(M) + (c1 * log(N-1) + c2 * M) / N`` over 1..m_max, ties toward
    the smaller M.
    """
    penalty = penalty or PenaltyConfig()
    omega = seq.omega if isinstance(seq, RmsSequence) else 1
    if kernel is None:
        kernel = rbf_kernel_matrix(seq, sigma=sigma)
    cost = KernelSegmentCost(kernel)
    if cost.n < 2:
        raise DataError("need at least 2 windows to segment")
    m_max = min(penalty.m_max, cost.n)
    dp, vec = _dp_tables(cost, m_max)
    best_m, best_obj = None, np.inf
    for m in range(1, m_max + 1):
        obj = float(dp[m, cost.n]) + penalty.value(cost.n, m)
        if obj < best_obj:
            best_m, best_obj = m, obj
    return StageSegmentation(
        boundaries=[0, *vec[best_m][cost.n], cost.n],
        omega=omega,
        n_windows=cost.n,
        algorithm="kcp",
        cost=float(dp[best_m, cost.n]),
        objective=best_obj,
    )


def _binary_segmentation(cost, m):
    """Greedy top-down splitting by largest cost reduction."""
    boundaries = [0, cost.n]
    while len(boundaries) - 1 < m:
        best = None  # (-gain, segment_start, split)
        for i in range(len(boundaries) - 1):
            a, b = boundaries[i], boundaries[i + 1]
            if b - a < 2:
                continue
            whole = cost.value(a + 1, b)
            for s in range(a + 1, b):
                gain = whole - (cost.value(a + 1, s) + cost.value(s + 1, b))
                key = (-gain, a, s)
                if best is None or key < best:
                    best = key
        if best is None:
            raise ConfigError(f"cannot split {cost.n} windows into {m} segments")
        boundaries.append(best[2])
        boundaries.sort()
    total = _total_cost(cost, boundaries)
    return boundaries, total


def _bottom_up(cost, m):
    """Merge adjacent singleton segments by smallest cost increase."""
    boundaries = list(range(cost.n + 1))
    while len(boundaries) - 1 > m:
        best = None  # (delta, boundary)
        for i in range(1, len(boundaries) - 1):
            a, mid, b = boundaries[i - 1], boundaries[i], boundaries[i + 1]
            delta = (
                cost.value(a + 1, b)
                - cost.value(a + 1, mid)
                - cost.value(mid + 1, b)
            )
            key = (delta, mid)
            if best is None or key < best:
                best = key
        boundaries.remove(best[1])
    total = _total_cost(cost, boundaries)
    return boundaries, total


def _total_cost(cost, boundaries):
    return float(
        sum(cost.value(a + 1, b) for a, b in zip(boundaries[:-1], boundaries[1:]))
    )


def segment_baseline(seq, algorithm, m, sigma="median"):
    """Reference detectors sharing the staging interface.

    ``binseg`` and ``bottomup`` are greedy heuristics on the kernel cost;
    ``dynp`` is the exact DP on an L2 mean-shift cost over the raw RMS
    vectors. All take a fixed target segment count ``m``.
    """
    if algorithm not in ("binseg", "bottomup", "dynp"):
        raise ConfigError(f"unknown baseline '{algorithm}'")
    vectors = seq.vectors if isinstance(seq, RmsSequence) else np.asarray(seq)
    omega = seq.omega if isinstance(seq, RmsSequence) else 1
    if not 1 <= m <= vectors.shape[0]:
        raise ConfigError(f"m={m} must be within 1..{vectors.shape[0]}")
    if algorithm == "dynp":
        return segment_fixed_m(L2SegmentCost(vectors), m, omega=omega, algorithm="dynp")
    cost = KernelSegmentCost(rbf_kernel_matrix(vectors, sigma=sigma))
    if algorithm == "binseg":
        boundaries, total = _binary_segmentation(cost, m)
    else:
        boundaries, total = _bottom_up(cost, m)
    return StageSegmentation(
        boundaries=boundaries,
        omega=omega,
        n_windows=cost.n,
        algorithm=algorithm,
        cost=total,
        objective=total,
    )


def map_to_time(segmentation):
    """Stage ranges in 1-based raw-sample indices of the channel stream.

    Stage m covers samples ``tau_{m-1} * omega + 1 .. tau_m * omega``; the
    remainder beyond the last full window belongs to no stage.
    """
    omega = segmentation.omega
    b = segmentation.boundaries
    return [(b[i] * omega + 1, b[i + 1] * omega) for i in range(len(b) - 1)]


def assign_snapshots(segmentation, series):
    """Stage id (0-based) per snapshot via its center raw sample.

    A snapshot's center sample is mapped to its RMS window and then to the
    stage owning that window; centers past the last full window clamp to the
    final stage, so every snapshot lands in exactly one stage.
    """
    if segmentation.omega < 1:
        raise ConfigError("segmentation must carry a positive omega")
    length = series.snapshot_len
    t = np.arange(series.n_snapshots)
    centers = t * length + (length + 1) // 2  # 1-based sample index
    windows = np.minimum((centers - 1) // segmentation.omega + 1, segmentation.n_windows)
    return np.searchsorted(segmentation.boundaries[1:], windows, side="left")


def stage_series(series, omega, penalty=None, sigma="median"):
    """Convenience: RMS extraction then penalized kernel staging."""
    seq = windowed_rms(series, omega)
    return segment_target(seq, penalty=penalty, sigma=sigma), seq
