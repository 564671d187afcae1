"""Seeded synthetic run-to-failure recordings.

Each stage contributes amplitude-modulated Gaussian noise around a DC level
plus a linear within-stage drift, giving a piecewise signal whose windowed
RMS separates the stages cleanly. The generator also reports where the true
boundaries fall, both in snapshot units and mapped onto RMS windows, so
segmentation output can be scored against ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .segmentation import StageSegmentation
from .series import RtFSeries
from .training import scf_labels


@dataclass
class StageSpec:
    """One degradation stage: how long it lasts and how it sounds."""

    duration: int
    level: float
    noise: float = 0.0
    slope: float = 0.0

    def __post_init__(self):
        if self.duration < 1:
            raise ConfigError(f"stage duration must be >= 1, got {self.duration}")
        if self.noise < 0:
            raise ConfigError(f"noise must be >= 0, got {self.noise}")


@dataclass
class SynthSpec:
    """Recipe for one synthetic recording; fully determined by ``seed``."""

    stages: list
    n_channels: int
    snapshot_len: int
    seed: int
    domain: str = "S"
    sampling_interval_seconds: float = 1.0
    scf_alpha: float = 1.0

    def __post_init__(self):
        if not self.stages:
            raise ConfigError("at least one stage is required")
        self.stages = [
            s if isinstance(s, StageSpec) else StageSpec(**s) for s in self.stages
        ]
        if self.n_channels < 1:
            raise ConfigError("n_channels must be >= 1")
        if self.snapshot_len < 1:
            raise ConfigError("snapshot_len must be >= 1")

    @property
    def n_stages(self):
        return len(self.stages)

    @property
    def n_snapshots(self):
        return sum(s.duration for s in self.stages)

    @property
    def snapshot_boundaries(self):
        """Cumulative stage ends in snapshot units; last equals n_snapshots."""
        return list(np.cumsum([s.duration for s in self.stages]))

    def to_dict(self):
        return {
            "stages": [
                {
                    "duration": s.duration,
                    "level": s.level,
                    "noise": s.noise,
                    "slope": s.slope,
                }
                for s in self.stages
            ],
            "n_channels": self.n_channels,
            "snapshot_len": self.snapshot_len,
            "seed": self.seed,
            "domain": self.domain,
            "sampling_interval_seconds": self.sampling_interval_seconds,
            "scf_alpha": self.scf_alpha,
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**data)
        except TypeError as err:
            raise ConfigError(f"bad synth spec: {err}") from err


@dataclass
class SynthTruth:
    """Ground truth emitted alongside a generated series."""

    snapshot_boundaries: list
    labels: np.ndarray
    spec: SynthSpec = field(repr=False)

    def window_segmentation(self, omega):
        """True boundaries mapped onto RMS windows of width ``omega``.

        Interior boundaries round to the nearest window edge; a window that
        straddles a stage change belongs to whichever side covers more of it.
        """
        if omega < 1:
            raise ConfigError("omega must be >= 1")
        total = self.spec.n_snapshots * self.spec.snapshot_len
        n_windows = total // omega
        if n_windows < 1:
            raise DataError(f"omega={omega} larger than the scalar stream")
        edges = []
        for b in self.snapshot_boundaries[:-1]:
            w = round(b * self.spec.snapshot_len / omega)
            w = min(max(w, 1), n_windows - 1)
            if not edges or w > edges[-1]:
                edges.append(w)
        return StageSegmentation(
            boundaries=[0, *edges, n_windows],
            omega=omega,
            n_windows=n_windows,
            algorithm="truth",
        )


def generate_synth(spec):
    """Build the recording; returns ``(series, truth)``.

    Sample i of channel c inside stage j is
    ``level_j + slope_j * u + noise_j * g`` with ``u`` the stage progress in
    [0, 1] and ``g`` standard normal. Bit-identical under a fixed seed.
    """
    rng = np.random.default_rng(spec.seed)
    length = spec.snapshot_len
    total = spec.n_snapshots * length
    noise = rng.normal(size=(spec.n_channels, total))
    stream = np.empty((spec.n_channels, total))
    start = 0
    for stage in spec.stages:
        extent = stage.duration * length
        u = np.arange(extent) / max(extent - 1, 1)
        base = stage.level + stage.slope * u
        stream[:, start : start + extent] = (
            base[None, :] + stage.noise * noise[:, start : start + extent]
        )
        start += extent
    snapshots = stream.reshape(spec.n_channels, spec.n_snapshots, length)
    series = RtFSeries(
        snapshots=np.ascontiguousarray(snapshots.transpose(1, 0, 2)),
        domain=spec.domain,
        sampling_interval_seconds=spec.sampling_interval_seconds,
    )
    labels = scf_labels(
        np.arange(spec.n_snapshots), spec.n_snapshots, alpha=spec.scf_alpha
    )
    truth = SynthTruth(
        snapshot_boundaries=spec.snapshot_boundaries,
        labels=labels,
        spec=spec,
    )
    return series, truth


def default_pair_specs(seed=0):
    """A matched source/target pair with distinct amplitude profiles.

    Three stages each (healthy, degrading, failing), same stage structure,
    different levels and noise so the domains genuinely differ.
    """
    source = SynthSpec(
        stages=[
            StageSpec(duration=20, level=0.10, noise=0.02, slope=0.00),
            StageSpec(duration=20, level=0.50, noise=0.05, slope=0.10),
            StageSpec(duration=20, level=1.00, noise=0.08, slope=0.30),
        ],
        n_channels=2,
        snapshot_len=64,
        seed=seed,
        domain="S",
    )
    target = SynthSpec(
        stages=[
            StageSpec(duration=16, level=0.20, noise=0.03, slope=0.00),
            StageSpec(duration=16, level=0.70, noise=0.06, slope=0.15),
            StageSpec(duration=16, level=1.40, noise=0.10, slope=0.40),
        ],
        n_channels=2,
        snapshot_len=64,
        seed=seed + 1,
        domain="T",
    )
    return source, target
