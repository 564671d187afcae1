"""Stage-synchronized mini-batch construction for two-domain training.

Each mini-batch pairs source and target snapshots drawn from the same
degradation stage. Within a stage the larger pool is shuffled and consumed
without replacement while the smaller pool is resampled uniformly with
replacement; when the batch grid overshoots the larger pool (batch size not
dividing it), the shortfall is padded by uniform resampling so every batch
keeps a constant size. The per-epoch batch order is shuffled as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .segmentation import assign_snapshots

MODES = ("synchronized", "random")


@dataclass
class MiniBatch:
    """Paired snapshot indices (0-based) drawn from one stage."""

    stage: int
    source_indices: np.ndarray
    target_indices: np.ndarray

    def __post_init__(self):
        self.source_indices = np.asarray(self.source_indices, dtype=np.int64)
        self.target_indices = np.asarray(self.target_indices, dtype=np.int64)
        if self.source_indices.shape != self.target_indices.shape:
            raise DataError("source and target index arrays must have equal length")

    @property
    def size(self):
        return len(self.source_indices)


@dataclass
class StagePlan:
    """Per-stage snapshot pools for both domains."""

    source_pools: list
    target_pools: list

    def __post_init__(self):
        if len(self.source_pools) != len(self.target_pools):
            raise ConfigError(
                f"stage counts differ: {len(self.source_pools)} source vs "
                f"{len(self.target_pools)} target"
            )
        self.source_pools = [np.asarray(p, dtype=np.int64) for p in self.source_pools]
        self.target_pools = [np.asarray(p, dtype=np.int64) for p in self.target_pools]
        for m, (s, t) in enumerate(zip(self.source_pools, self.target_pools)):
            if len(s) == 0:
                raise DataError(f"stage {m} has no source snapshots")
            if len(t) == 0:
                raise DataError(f"stage {m} has no target snapshots")

    @property
    def n_stages(self):
        return len(self.source_pools)

    def collapsed(self):
        """Single-stage view pooling all snapshots; used by random mode."""
        return StagePlan(
            source_pools=[np.sort(np.concatenate(self.source_pools))],
            target_pools=[np.sort(np.concatenate(self.target_pools))],
        )


def build_stage_plan(source_series, source_seg, target_series, target_seg):
    """Populate per-stage pools from two staged series.

    Stage m of the source is paired with stage m of the target, so both
    segmentations must carry the same stage count. Every snapshot of each
    series lands in exactly one pool.
    """
    if source_seg.n_stages != target_seg.n_stages:
        raise ConfigError(
            f"stage counts differ: source {source_seg.n_stages} vs "
            f"target {target_seg.n_stages}; refit one side with a fixed count"
        )
    m = source_seg.n_stages
    src_assign = assign_snapshots(source_seg, source_series)
    tgt_assign = assign_snapshots(target_seg, target_series)
    return StagePlan(
        source_pools=[np.flatnonzero(src_assign == s) for s in range(m)],
        target_pools=[np.flatnonzero(tgt_assign == s) for s in range(m)],
    )


def stage_batch_count(plan, stage, batch_size):
    larger = max(len(plan.source_pools[stage]), len(plan.target_pools[stage]))
    return math.ceil(larger / batch_size)


def _fill_slots(pool, slots, rng, exhaustive):
    """Index draws for one domain of one stage.

    ``exhaustive`` pools get a full shuffled pass plus uniform padding, so
    each index appears at least once and exactly once when the slot count
    matches the pool. Non-exhaustive pools are uniform draws throughout.
    """
    if exhaustive:
        order = rng.permutation(pool)
        if slots > len(pool):
            pad = rng.choice(pool, size=slots - len(pool), replace=True)
            order = np.concatenate([order, pad])
        return order
    return rng.choice(pool, size=slots, replace=True)


def sample_epoch(plan, batch_size, seed, mode="synchronized"):
    """One epoch of paired mini-batches, fully determined by ``seed``.

    ``mode="random"`` ignores stages by collapsing the plan to a single
    stage and running the identical sampling path, so a genuinely
    single-stage synchronized plan is indistinguishable from random mode.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got '{mode}'")
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if mode == "random" and plan.n_stages > 1:
        plan = plan.collapsed()
    rng = np.random.default_rng(seed)
    batches = []
    for stage in range(plan.n_stages):
        src = plan.source_pools[stage]
        tgt = plan.target_pools[stage]
        n_batches = stage_batch_count(plan, stage, batch_size)
        slots = n_batches * batch_size
        src_is_larger = len(src) >= len(tgt)
        src_draw = _fill_slots(src, slots, rng, exhaustive=src_is_larger)
        tgt_draw = _fill_slots(tgt, slots, rng, exhaustive=not src_is_larger)
        for b in range(n_batches):
            lo, hi = b * batch_size, (b + 1) * batch_size
            batches.append(MiniBatch(stage, src_draw[lo:hi], tgt_draw[lo:hi]))
    rng.shuffle(batches)
    return batches
