"""Dual-branch convolutional autoencoder producing a bounded health indicator.

Both domains share one encoder: per-domain reversible instance
normalization, a strided patch embedding, and a stack of multi-scale
depthwise-separable conv blocks operating on a (channels * embed_dim,
patches) layout. Cross-domain attention fuses the branches, a pooled head
maps the fused representation to a scalar in (0, 1), and per-domain
decoders reconstruct the raw snapshots through transposed convolutions and
the inverse instance normalization.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as F
from .autodiff import Tensor, concat, matmul, reshape, transpose
from .errors import ConfigError, DimensionError, UsageError

DECODE_SOURCES = ("fused_latent", "hi_scalar")


@dataclass
class ModelConfig:
    n_channels: int
    snapshot_len: int
    patch_len: int = 16
    patch_stride: int = 8
    embed_dim: int = 32
    attn_dim: int = 32
    n_heads: int = 4
    kernel_sizes: tuple = (13, 23, 31)
    ffn_ratio: int = 4
    n_encoder_blocks: int = 3
    n_decoder_blocks: int = 3
    dropout: float = 0.1
    single_kernel: bool = False
    cross_attention: bool = True
    decode_from: str = "fused_latent"
    eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        self.kernel_sizes = tuple(int(k) for k in self.kernel_sizes)
        if self.n_channels < 1 or self.snapshot_len < 1:
            raise ConfigError("n_channels and snapshot_len must be >= 1")
        if not 1 <= self.patch_len <= self.snapshot_len:
            raise ConfigError(
                f"patch_len {self.patch_len} must be within 1..{self.snapshot_len}"
            )
        if self.patch_stride < 1:
            raise ConfigError("patch_stride must be >= 1")
        if len(self.kernel_sizes) not in (1, 3):
            raise ConfigError("kernel_sizes must hold one or three entries")
        if any(k < 1 or k % 2 == 0 for k in self.kernel_sizes):
            raise ConfigError("kernel sizes must be odd and positive")
        if self.embed_dim % self.n_heads or self.attn_dim % self.n_heads:
            raise ConfigError(
                f"n_heads {self.n_heads} must divide embed_dim {self.embed_dim} "
                f"and attn_dim {self.attn_dim}"
            )
        if self.ffn_ratio < 1:
            raise ConfigError("ffn_ratio must be >= 1")
        if self.n_encoder_blocks < 1 or self.n_decoder_blocks < 1:
            raise ConfigError("block counts must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.decode_from not in DECODE_SOURCES:
            raise ConfigError(f"decode_from must be one of {DECODE_SOURCES}")

    @property
    def n_patches(self):
        return (self.snapshot_len - self.patch_len) // self.patch_stride + 1

    @property
    def block_channels(self):
        return self.n_channels * self.embed_dim

    @property
    def effective_kernels(self):
        return self.kernel_sizes[:1] if self.single_kernel else self.kernel_sizes


class ParamStore:
    """Named parameter tensors plus non-learnable buffers, insertion ordered."""

    def __init__(self):
        self.params = OrderedDict()
        self.buffers = OrderedDict()

    def add_param(self, name, array):
        if name in self.params or name in self.buffers:
            raise ConfigError(f"duplicate parameter name '{name}'")
        self.params[name] = Tensor(np.asarray(array, dtype=np.float64), requires_grad=True)

    def add_buffer(self, name, array):
        if name in self.params or name in self.buffers:
            raise ConfigError(f"duplicate buffer name '{name}'")
        self.buffers[name] = np.asarray(array, dtype=np.float64)

    def t(self, name):
        return self.params[name]

    def buf(self, name):
        return self.buffers[name]

    def zero_grad(self):
        for t in self.params.values():
            t.zero_grad()

    def n_parameters(self):
        return sum(t.size for t in self.params.values())

    def state_dict(self):
        out = OrderedDict()
        for name, t in self.params.items():
            out[name] = t.data
        for name, b in self.buffers.items():
            out[f"buffer:{name}"] = b
        return out

    def load_state_dict(self, state):
        for name, t in self.params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise DimensionError(
                    f"param '{name}': stored shape {arr.shape} != {t.data.shape}"
                )
            t.data = arr.copy()
        for name in self.buffers:
            arr = np.asarray(state[f"buffer:{name}"], dtype=np.float64)
            if arr.shape != self.buffers[name].shape:
                raise DimensionError(f"buffer '{name}': shape mismatch")
            self.buffers[name] = arr.copy()


def init_params(cfg, seed=0):
    """Seeded initialization; draw order is fixed by construction order."""
    rng = np.random.default_rng(seed)
    p = ParamStore()
    g = cfg.block_channels
    nk = len(cfg.effective_kernels)
    cat = nk * g
    r = cfg.ffn_ratio
    d = cfg.embed_dim
    c = cfg.n_channels

    def weight(name, shape, fan_in):
        p.add_param(name, rng.normal(0.0, 1.0 / np.sqrt(fan_in), shape))

    def zeros(name, shape):
        p.add_param(name, np.zeros(shape))

    def ones(name, shape):
        p.add_param(name, np.ones(shape))

    def bn(prefix):
        ones(f"{prefix}.bn_g", (g, 1))
        zeros(f"{prefix}.bn_b", (g, 1))
        p.add_buffer(f"{prefix}.bn_mean", np.zeros((g, 1)))
        p.add_buffer(f"{prefix}.bn_var", np.ones((g, 1)))

    def conv_stage(prefix):
        for k in cfg.effective_kernels:
            weight(f"{prefix}.k{k}.dw", (g, k), k)
            weight(f"{prefix}.k{k}.pw_w", (g, g), g)
            zeros(f"{prefix}.k{k}.pw_b", (g,))
            bn(f"{prefix}.k{k}")
        ones(f"{prefix}.ln_g", (cat, 1))
        zeros(f"{prefix}.ln_b", (cat, 1))
        weight(f"{prefix}.proj_w", (g, cat), cat)
        zeros(f"{prefix}.proj_b", (g,))

    def ffn_pair(prefix):
        weight(f"{prefix}.ffn1_w1", (r * g, d), d)
        zeros(f"{prefix}.ffn1_b1", (r * g,))
        weight(f"{prefix}.ffn1_w2", (g, r * d), r * d)
        zeros(f"{prefix}.ffn1_b2", (g,))
        weight(f"{prefix}.ffn2_w1", (r * g, c), c)
        zeros(f"{prefix}.ffn2_b1", (r * g,))
        weight(f"{prefix}.ffn2_w2", (g, r * c), r * c)
        zeros(f"{prefix}.ffn2_b2", (g,))

    for dom in ("S", "T"):
        ones(f"revin.{dom}.gamma", (c, 1))
        zeros(f"revin.{dom}.beta", (c, 1))

    weight("embed.w", (cfg.patch_len, d), cfg.patch_len)
    zeros("embed.b", (d,))

    for b in range(cfg.n_encoder_blocks):
        conv_stage(f"enc{b}")
        ffn_pair(f"enc{b}")

    for dom in ("S", "T"):
        weight(f"attn.{dom}.q", (cfg.attn_dim, d), d)
        weight(f"attn.{dom}.k", (cfg.attn_dim, d), d)
        weight(f"attn.{dom}.v", (d, d), d)
    ones("attn.ln_g", (g, 1))
    zeros("attn.ln_b", (g, 1))

    weight("head.w1", (2 * g, d), 2 * g)
    zeros("head.b1", (d,))
    weight("head.w2", (d, 1), d)
    zeros("head.b2", (1,))

    dec_in = 2 * g if cfg.decode_from == "fused_latent" else 1
    for dom in ("S", "T"):
        weight(f"dec.{dom}.proj_w", (g, dec_in), dec_in)
        zeros(f"dec.{dom}.proj_b", (g,))
        for b in range(cfg.n_decoder_blocks):
            conv_stage(f"dec.{dom}.blk{b}")
            ffn_pair(f"dec.{dom}.blk{b}")
            ones(f"dec.{dom}.blk{b}.post_ln_g", (g, 1))
            zeros(f"dec.{dom}.blk{b}.post_ln_b", (g, 1))
        for k in cfg.effective_kernels:
            weight(f"dec.{dom}.up{k}.dw", (g, k), k)
            weight(f"dec.{dom}.up{k}.pw_w", (g, g), g)
            zeros(f"dec.{dom}.up{k}.pw_b", (g,))
            bn(f"dec.{dom}.up{k}")
        weight(f"dec.{dom}.out_w", (c, g), g)
        zeros(f"dec.{dom}.out_b", (c,))
    return p


# -- reversible instance normalization ----------------------------------


@dataclass
class RevinState:
    """Per-snapshot channel statistics captured during normalization."""

    mean: np.ndarray
    var: np.ndarray


def revin_normalize(x, gamma, beta, eps=1e-5):
    """Normalize each (sample, channel) over time, then apply the affine.

    Statistics are treated as constants of the graph and returned for the
    exact inverse. Zero-variance channels stay finite through ``eps``.
    """
    m = x.data.mean(axis=-1, keepdims=True)
    v = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(v + eps)
    xn = (x - Tensor(m)) * Tensor(inv)
    return xn * gamma + beta, RevinState(mean=m, var=v)


def revin_denormalize(x, gamma, beta, state, eps=1e-5):
    """Exact inverse of ``revin_normalize`` given its captured state."""
    if state is None:
        raise UsageError("denormalization requires the state captured at encode time")
    scale = np.sqrt(state.var + eps)
    return (x - beta) / gamma * Tensor(scale) + Tensor(state.mean)


# -- building blocks -----------------------------------------------------


def _conv_stage(x, p, prefix, cfg, train, rng, update_bn):
    """Parallel depthwise branches -> pointwise fuse -> concat -> LN -> project."""
    branches = []
    for k in cfg.effective_kernels:
        h = F.conv1d_depthwise(x, p.t(f"{prefix}.k{k}.dw"), stride=1, padding=(k - 1) // 2)
        h = F.conv1d_pointwise(h, p.t(f"{prefix}.k{k}.pw_w"), bias=p.t(f"{prefix}.k{k}.pw_b"))
        h = F.batch_norm(
            h,
            p.t(f"{prefix}.k{k}.bn_g"),
            p.t(f"{prefix}.k{k}.bn_b"),
            p.buf(f"{prefix}.k{k}.bn_mean"),
            p.buf(f"{prefix}.k{k}.bn_var"),
            eps=cfg.eps,
            momentum=cfg.bn_momentum,
            train=train,
            update_running=update_bn,
        )
        h = F.gelu(h)
        h = F.dropout(h, cfg.dropout, train, rng)
        branches.append(h)
    cat = branches[0] if len(branches) == 1 else concat(branches, axis=1)
    cat = F.layer_norm(cat, p.t(f"{prefix}.ln_g"), p.t(f"{prefix}.ln_b"), axis=1, eps=cfg.eps)
    return F.conv1d_pointwise(cat, p.t(f"{prefix}.proj_w"), bias=p.t(f"{prefix}.proj_b"))


def _ffn_pair(x, p, prefix, cfg, train, rng):
    """Grouped inverted-bottleneck mixing: per-variable, then per-feature."""
    h = F.conv1d_pointwise(
        x, p.t(f"{prefix}.ffn1_w1"), groups=cfg.n_channels, bias=p.t(f"{prefix}.ffn1_b1")
    )
    h = F.dropout(F.gelu(h), cfg.dropout, train, rng)
    h = F.conv1d_pointwise(
        h, p.t(f"{prefix}.ffn1_w2"), groups=cfg.n_channels, bias=p.t(f"{prefix}.ffn1_b2")
    )
    b, n = h.shape[0], h.shape[2]
    h = reshape(h, (b, cfg.n_channels, cfg.embed_dim, n))
    h = transpose(h, (0, 2, 1, 3))
    h = reshape(h, (b, cfg.block_channels, n))
    h = F.conv1d_pointwise(
        h, p.t(f"{prefix}.ffn2_w1"), groups=cfg.embed_dim, bias=p.t(f"{prefix}.ffn2_b1")
    )
    h = F.dropout(F.gelu(h), cfg.dropout, train, rng)
    h = F.conv1d_pointwise(
        h, p.t(f"{prefix}.ffn2_w2"), groups=cfg.embed_dim, bias=p.t(f"{prefix}.ffn2_b2")
    )
    h = reshape(h, (b, cfg.embed_dim, cfg.n_channels, n))
    h = transpose(h, (0, 2, 1, 3))
    return reshape(h, (b, cfg.block_channels, n))


def _encoder_block(x, p, prefix, cfg, train, rng, update_bn):
    h = _conv_stage(x, p, prefix, cfg, train, rng, update_bn)
    h = _ffn_pair(h, p, prefix, cfg, train, rng)
    return h + x


def _patch_embed(x, p, cfg):
    """Strided patch projection shared across channels: (B,C,L) -> (B,C*d,N)."""
    b = x.shape[0]
    w = F.unfold1d(x, cfg.patch_len, cfg.patch_stride)  # (B, C, N, P)
    h = matmul(w, p.t("embed.w")) + p.t("embed.b")  # (B, C, N, d)
    h = transpose(h, (0, 1, 3, 2))
    return reshape(h, (b, cfg.block_channels, cfg.n_patches))


def _attention(query_from, kv_from, p, dom_q, dom_kv, cfg, return_weights=False):
    """Multi-head attention over the patch axis, channels folded into batch."""
    b, n = query_from.shape[0], query_from.shape[2]
    c, d = cfg.n_channels, cfg.embed_dim
    heads = cfg.n_heads
    dk = cfg.attn_dim // heads
    dv = d // heads

    def fold(x):
        return reshape(x, (b * c, d, n))

    q = matmul(p.t(f"attn.{dom_q}.q"), fold(query_from))
    k = matmul(p.t(f"attn.{dom_kv}.k"), fold(kv_from))
    v = matmul(p.t(f"attn.{dom_kv}.v"), fold(kv_from))
    qh = reshape(q, (b * c, heads, dk, n))
    kh = reshape(k, (b * c, heads, dk, n))
    vh = reshape(v, (b * c, heads, dv, n))
    scores = matmul(transpose(qh, (0, 1, 3, 2)), kh) * (1.0 / np.sqrt(dk))
    w = F.softmax(scores, axis=-1)  # (B*C, h, N_query, N_key)
    out = matmul(vh, transpose(w, (0, 1, 3, 2)))  # (B*C, dv, N_query) per head
    out = reshape(out, (b, cfg.block_channels, n))
    if return_weights:
        return out, w.data
    return out


@dataclass
class EncodeResult:
    """Forward products needed by the losses and the decoders."""

    hi: Tensor
    fused: Tensor
    source_features: Tensor
    target_features: Tensor
    source_state: RevinState
    target_state: RevinState
    attention: dict = field(default_factory=dict)


def _check_snapshot_batch(x, cfg, name):
    if x.ndim != 3 or x.shape[1] != cfg.n_channels or x.shape[2] != cfg.snapshot_len:
        raise DimensionError(
            f"{name} must be (B, {cfg.n_channels}, {cfg.snapshot_len}), got {x.shape}"
        )


def encode_batch(
    p, xs, xt, cfg, train=False, rng=None, update_bn=False, return_weights=False
):
    """Joint forward over paired batches: (B, C, L) x 2 -> health indicators.

    Encoder weights are shared between domains; only the instance
    normalization affines, the attention projections, and the decoders are
    domain-specific.
    """
    xs, xt = F.as_tensor(xs), F.as_tensor(xt)
    _check_snapshot_batch(xs, cfg, "source batch")
    _check_snapshot_batch(xt, cfg, "target batch")
    if xs.shape[0] != xt.shape[0]:
        raise DimensionError("source and target batches must have equal size")
    hs, state_s = revin_normalize(xs, p.t("revin.S.gamma"), p.t("revin.S.beta"), cfg.eps)
    ht, state_t = revin_normalize(xt, p.t("revin.T.gamma"), p.t("revin.T.beta"), cfg.eps)
    hs = _patch_embed(hs, p, cfg)
    ht = _patch_embed(ht, p, cfg)
    for blk in range(cfg.n_encoder_blocks):
        hs = _encoder_block(hs, p, f"enc{blk}", cfg, train, rng, update_bn)
    for blk in range(cfg.n_encoder_blocks):
        ht = _encoder_block(ht, p, f"enc{blk}", cfg, train, rng, update_bn)
    feats_s, feats_t = hs, ht
    attention = {}
    if cfg.cross_attention:
        if return_weights:
            a_s, w_st = _attention(hs, ht, p, "S", "T", cfg, return_weights=True)
            a_t, w_ts = _attention(ht, hs, p, "T", "S", cfg, return_weights=True)
            attention = {"source_from_target": w_st, "target_from_source": w_ts}
        else:
            a_s = _attention(hs, ht, p, "S", "T", cfg)
            a_t = _attention(ht, hs, p, "T", "S", cfg)
        ys = hs + a_s
        yt = ht + a_t
    else:
        ys, yt = hs, ht
    ln_g, ln_b = p.t("attn.ln_g"), p.t("attn.ln_b")
    ys = F.layer_norm(ys, ln_g, ln_b, axis=1, eps=cfg.eps)
    yt = F.layer_norm(yt, ln_g, ln_b, axis=1, eps=cfg.eps)
    fused = concat([ys, yt], axis=1)
    pooled = F.global_avg_pool(fused, axis=-1)  # (B, 2G)
    h = F.gelu(F.linear(pooled, p.t("head.w1"), p.t("head.b1")))
    h = F.linear(h, p.t("head.w2"), p.t("head.b2"))
    hi = F.sigmoid(reshape(h, (h.shape[0],)))
    return EncodeResult(
        hi=hi,
        fused=fused,
        source_features=feats_s,
        target_features=feats_t,
        source_state=state_s,
        target_state=state_t,
        attention=attention,
    )


def encode_pair(p, x_source, x_target, cfg, train=False, rng=None, update_bn=False):
    """Single-pair forward: (C, L) inputs, scalar health indicator."""
    xs = reshape(F.as_tensor(x_source), (1,) + tuple(F.as_tensor(x_source).shape))
    xt = reshape(F.as_tensor(x_target), (1,) + tuple(F.as_tensor(x_target).shape))
    return encode_batch(p, xs, xt, cfg, train=train, rng=rng, update_bn=update_bn)


def encode_single(p, x, cfg):
    """Inference on one snapshot: both branches consume the same input."""
    with F.no_grad():
        result = encode_pair(p, x, x, cfg, train=False)
    return result.hi.item()


def _fit_length(x, target):
    """Center-crop or center-pad the time axis to ``target`` samples."""
    cur = x.shape[-1]
    if cur == target:
        return x
    if cur > target:
        off = (cur - target) // 2
        idx = (slice(None),) * (x.ndim - 1) + (slice(off, off + target),)
        return x[idx]
    left = (target - cur) // 2
    return F.pad1d(x, left, target - cur - left)


def decode_batch(p, result, domain, cfg, train=False, rng=None, update_bn=False):
    """Reconstruct one domain's raw snapshots from the encoded batch."""
    if domain not in ("S", "T"):
        raise ConfigError(f"domain must be 'S' or 'T', got '{domain}'")
    state = result.source_state if domain == "S" else result.target_state
    if cfg.decode_from == "fused_latent":
        latent = result.fused
    else:
        b = result.hi.shape[0]
        latent = reshape(result.hi, (b, 1, 1)) * Tensor(np.ones((1, 1, cfg.n_patches)))
    h = F.conv1d_pointwise(
        latent, p.t(f"dec.{domain}.proj_w"), bias=p.t(f"dec.{domain}.proj_b")
    )
    for blk in range(cfg.n_decoder_blocks):
        prefix = f"dec.{domain}.blk{blk}"
        y = _conv_stage(h, p, prefix, cfg, train, rng, update_bn)
        f = _ffn_pair(y, p, prefix, cfg, train, rng)
        h = F.layer_norm(
            y + f,
            p.t(f"{prefix}.post_ln_g"),
            p.t(f"{prefix}.post_ln_b"),
            axis=1,
            eps=cfg.eps,
        )
    total = None
    for k in cfg.effective_kernels:
        prefix = f"dec.{domain}.up{k}"
        u = F.conv1d_transposed_depthwise(h, p.t(f"{prefix}.dw"), stride=cfg.patch_stride)
        u = F.conv1d_pointwise(u, p.t(f"{prefix}.pw_w"), bias=p.t(f"{prefix}.pw_b"))
        u = F.batch_norm(
            u,
            p.t(f"{prefix}.bn_g"),
            p.t(f"{prefix}.bn_b"),
            p.buf(f"{prefix}.bn_mean"),
            p.buf(f"{prefix}.bn_var"),
            eps=cfg.eps,
            momentum=cfg.bn_momentum,
            train=train,
            update_running=update_bn,
        )
        u = F.dropout(F.gelu(u), cfg.dropout, train, rng)
        u = _fit_length(u, cfg.snapshot_len)
        total = u if total is None else total + u
    x = F.conv1d_pointwise(
        total, p.t(f"dec.{domain}.out_w"), bias=p.t(f"dec.{domain}.out_b")
    )
    return revin_denormalize(
        x, p.t(f"revin.{domain}.gamma"), p.t(f"revin.{domain}.beta"), state, cfg.eps
    )


def pooled_features(result):
    """Time-pooled pre-fusion conv features per domain, for distribution losses."""
    return (
        F.global_avg_pool(result.source_features, axis=-1),
        F.global_avg_pool(result.target_features, axis=-1),
    )


def predict_hi_series(p, series, cfg):
    """Health indicator per snapshot of a full series, batched, eval mode."""
    if series.n_channels != cfg.n_channels or series.snapshot_len != cfg.snapshot_len:
        raise DimensionError(
            f"series shape (C={series.n_channels}, L={series.snapshot_len}) does not "
            f"match model (C={cfg.n_channels}, L={cfg.snapshot_len})"
        )
    x = Tensor(series.snapshots)
    with F.no_grad():
        result = encode_batch(p, x, x, cfg, train=False)
    return result.hi.data.copy()
