"""Estimator-style wrappers over the functional pipeline.

``StageSegmenter`` stages a single recording; ``HiConstructor`` runs the
whole construction: stage both domains, align their stage counts, train the
paired encoder-decoder, and predict health indicators for new recordings.
Both follow the fit/transform/predict convention with parameters settable
through ``get_params``/``set_params``, so they clone and grid-search cleanly.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import ConfigError, DataError
from .features import min_max_scale, rbf_kernel_matrix, windowed_rms
from .metrics import evaluate_hi
from .model import ModelConfig, predict_hi_series
from .sampling import build_stage_plan
from .segmentation import (
    PenaltyConfig,
    assign_snapshots,
    segment_baseline,
    segment_fixed_m,
    segment_target,
)
from .series import RtFSeries
from .training import TrainConfig, train

ALGORITHMS = ("kcp", "binseg", "bottomup", "dynp")


def ensure_series(x, domain="S", sampling_interval_seconds=1.0):
    """Accept a series object or a raw (T, C, L) array."""
    if isinstance(x, RtFSeries):
        return x
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise DataError(f"expected a series or (T, C, L) array, got shape {arr.shape}")
    return RtFSeries(
        snapshots=arr,
        domain=domain,
        sampling_interval_seconds=sampling_interval_seconds,
    )


def _check_fitted(estimator, attr):
    if not hasattr(estimator, attr):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted; call fit first"
        )


class StageSegmenter(BaseEstimator):
    """Degradation staging of one recording via windowed RMS and kernel costs.

    With ``n_stages=None`` the stage count is chosen by penalized model
    selection (``kcp`` only); a fixed count runs the exact program or one of
    the baseline detectors.
    """

    def __init__(
        self,
        omega=64,
        algorithm="kcp",
        penalty=10.0,
        m_max=10,
        n_stages=None,
        sigma="median",
        scale=True,
    ):
        self.omega = omega
        self.algorithm = algorithm
        self.penalty = penalty
        self.m_max = m_max
        self.n_stages = n_stages
        self.sigma = sigma
        self.scale = scale

    def _rms(self, series):
        if self.scale:
            series, _ = min_max_scale(series)
        return windowed_rms(series, self.omega)

    def fit(self, X, y=None):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}")
        series = ensure_series(X)
        seq = self._rms(series)
        if self.algorithm == "kcp":
            if self.n_stages is None:
                seg = segment_target(
                    seq,
                    penalty=PenaltyConfig(penalty=self.penalty, m_max=self.m_max),
                    sigma=self.sigma,
                )
            else:
                kernel = rbf_kernel_matrix(seq, sigma=self.sigma)
                seg = segment_fixed_m(kernel, self.n_stages, omega=self.omega)
        else:
            if self.n_stages is None:
                raise ConfigError(
                    f"baseline '{self.algorithm}' needs an explicit n_stages"
                )
            seg = segment_baseline(seq, self.algorithm, self.n_stages, sigma=self.sigma)
        self.segmentation_ = seg
        self.n_stages_ = seg.n_stages
        self.rms_ = seq
        return self

    def transform(self, X):
        """Stage id (0-based) per snapshot under the fitted boundaries."""
        _check_fitted(self, "segmentation_")
        return assign_snapshots(self.segmentation_, ensure_series(X))

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)


class HiConstructor(BaseEstimator):
    """End-to-end health-indicator construction across a domain pair.

    ``fit`` stages the source with penalized selection, restages the target
    with the source's stage count so the sampling plan lines up, then trains
    the shared encoder with per-domain adapters. ``predict`` maps any
    compatible recording to its indicator series; ``score`` reports the
    comprehensive quality index of those predictions.
    """

    def __init__(
        self,
        omega=64,
        penalty=10.0,
        m_max=10,
        sigma="median",
        patch_len=16,
        patch_stride=8,
        embed_dim=32,
        attn_dim=32,
        n_heads=4,
        kernel_sizes=(13, 23, 31),
        ffn_ratio=4,
        n_encoder_blocks=3,
        n_decoder_blocks=3,
        dropout=0.1,
        cross_attention=True,
        decode_from="fused_latent",
        epochs=50,
        batch_size=8,
        lr=1e-3,
        seed=0,
        sampling_mode="synchronized",
        weighting="dwa",
        fixed_weights=(1.0, 1.0, 1.0),
        temperature=2.0,
        scf_alpha=1.0,
        scf_form="normalized",
        mmd_sigma=None,
        ma_window=5,
        xi=2.0,
    ):
        self.omega = omega
        self.penalty = penalty
        self.m_max = m_max
        self.sigma = sigma
        self.patch_len = patch_len
        self.patch_stride = patch_stride
        self.embed_dim = embed_dim
        self.attn_dim = attn_dim
        self.n_heads = n_heads
        self.kernel_sizes = kernel_sizes
        self.ffn_ratio = ffn_ratio
        self.n_encoder_blocks = n_encoder_blocks
        self.n_decoder_blocks = n_decoder_blocks
        self.dropout = dropout
        self.cross_attention = cross_attention
        self.decode_from = decode_from
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed
        self.sampling_mode = sampling_mode
        self.weighting = weighting
        self.fixed_weights = fixed_weights
        self.temperature = temperature
        self.scf_alpha = scf_alpha
        self.scf_form = scf_form
        self.mmd_sigma = mmd_sigma
        self.ma_window = ma_window
        self.xi = xi

    def _stage_pair(self, source, target):
        source_scaled, _ = min_max_scale(source)
        target_scaled, _ = min_max_scale(target)
        seq_s = windowed_rms(source_scaled, self.omega)
        seq_t = windowed_rms(target_scaled, self.omega)
        pen = PenaltyConfig(penalty=self.penalty, m_max=self.m_max)
        seg_s = segment_target(seq_s, penalty=pen, sigma=self.sigma)
        kernel_t = rbf_kernel_matrix(seq_t, sigma=self.sigma)
        seg_t = segment_fixed_m(kernel_t, seg_s.n_stages, omega=self.omega)
        return seg_s, seg_t

    def _model_config(self, source):
        return ModelConfig(
            n_channels=source.n_channels,
            snapshot_len=source.snapshot_len,
            patch_len=self.patch_len,
            patch_stride=self.patch_stride,
            embed_dim=self.embed_dim,
            attn_dim=self.attn_dim,
            n_heads=self.n_heads,
            kernel_sizes=tuple(self.kernel_sizes),
            ffn_ratio=self.ffn_ratio,
            n_encoder_blocks=self.n_encoder_blocks,
            n_decoder_blocks=self.n_decoder_blocks,
            dropout=self.dropout,
            cross_attention=self.cross_attention,
            decode_from=self.decode_from,
        )

    def _train_config(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            seed=self.seed,
            sampling_mode=self.sampling_mode,
            weighting=self.weighting,
            fixed_weights=tuple(self.fixed_weights),
            temperature=self.temperature,
            scf_alpha=self.scf_alpha,
            scf_form=self.scf_form,
            mmd_sigma=self.mmd_sigma,
        )

    def fit(self, source, target):
        src = ensure_series(source, domain="S")
        tgt = ensure_series(target, domain="T")
        if src.n_channels != tgt.n_channels or src.snapshot_len != tgt.snapshot_len:
            raise DataError(
                "source and target must share channel count and snapshot length"
            )
        seg_s, seg_t = self._stage_pair(src, tgt)
        plan = build_stage_plan(src, seg_s, tgt, seg_t)
        model_cfg = self._model_config(src)
        self.params_, self.diagnostics_ = train(
            src, tgt, model_cfg, self._train_config(), plan=plan
        )
        self.model_config_ = model_cfg
        self.source_segmentation_ = seg_s
        self.target_segmentation_ = seg_t
        self.plan_ = plan
        return self

    def predict(self, X):
        _check_fitted(self, "params_")
        return predict_hi_series(self.params_, ensure_series(X), self.model_config_)

    def score(self, X, y=None):
        """Comprehensive quality index of the predicted indicator series."""
        return evaluate_hi(self.predict(X), window=self.ma_window, xi=self.xi).ci
