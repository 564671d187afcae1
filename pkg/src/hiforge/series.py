"""Run-to-failure series containers used across the pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError


@dataclass
class RtFSeries:
    """One run-to-failure recording.

    ``snapshots`` has shape (T, C, L): T snapshots in time order, C channels,
    L raw samples per snapshot. ``failure_index`` is the 1-based snapshot
    index treated as failure time; it defaults to T.
    """

    snapshots: np.ndarray
    domain: str = "source"
    sampling_interval_seconds: float = 1.0
    failure_index: int | None = None

    def __post_init__(self):
        self.snapshots = np.asarray(self.snapshots, dtype=np.float64)
        if self.snapshots.ndim != 3:
            raise DataError(
                f"snapshots must be (T, C, L), got shape {self.snapshots.shape}"
            )
        if not np.all(np.isfinite(self.snapshots)):
            raise DataError("snapshots contain non-finite values")
        if self.failure_index is None:
            self.failure_index = self.n_snapshots
        if not 1 <= self.failure_index:
            raise DataError(f"failure_index must be >= 1, got {self.failure_index}")
        if self.sampling_interval_seconds <= 0:
            raise DataError("sampling_interval_seconds must be positive")

    @property
    def n_snapshots(self):
        return self.snapshots.shape[0]

    @property
    def n_channels(self):
        return self.snapshots.shape[1]

    @property
    def snapshot_len(self):
        return self.snapshots.shape[2]

    @property
    def total_scalar_length(self):
        """Per-channel length of the concatenated sample stream."""
        return self.n_snapshots * self.snapshot_len

    def channel_streams(self):
        """Concatenate snapshots per channel: shape (C, T * L)."""
        return np.transpose(self.snapshots, (1, 0, 2)).reshape(
            self.n_channels, self.total_scalar_length
        )


@dataclass
class RmsSequence:
    """Window-wise RMS feature vectors of one series.

    ``vectors`` has shape (N, C): one feature vector per non-overlapping
    window of ``omega`` raw samples, trailing remainder dropped.
    """

    vectors: np.ndarray
    omega: int
    domain: str = "source"
    snapshot_len: int | None = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise DataError(f"vectors must be (N, C), got shape {self.vectors.shape}")
        if self.omega < 1:
            raise ConfigError(f"omega must be >= 1, got {self.omega}")

    @property
    def n_windows(self):
        return self.vectors.shape[0]

    @property
    def n_channels(self):
        return self.vectors.shape[1]
