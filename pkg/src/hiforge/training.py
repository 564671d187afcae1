"""Losses, loss weighting, and the deterministic training loop.

Three objectives are combined per step: a supervised fit of the health
indicator to a monotone degradation label on source snapshots, a kernel
two-sample discrepancy pulling the pooled encoder features of both domains
together, and the reconstruction error of both decoders. Their weights are
either fixed or adapted per epoch from the ratio of the two previous
epoch-mean losses (softmax-normalized so the weights always sum to the
task count).
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, exp, matmul, mean, tensor_sum, transpose
from .errors import ConfigError, DataError, NumericalError
from .features import median_pairwise_distance
from .model import decode_batch, encode_batch, init_params, pooled_features
from .sampling import MODES, build_stage_plan, sample_epoch

SCF_FORMS = ("normalized", "paper_literal")
WEIGHTINGS = ("dwa", "fixed")
DWA_FORMULAS = ("softmax", "literal")
N_TASKS = 3


# -- degradation labels --------------------------------------------------


def scf_value(t, t_n, alpha=1.0, form="normalized"):
    """Supervised degradation label for 1-based snapshot time ``t``.

    ``normalized`` maps to (t / t_n) ** alpha, increasing to 1 at failure.
    ``paper_literal`` keeps the additive offset variant
    t ** alpha / t_n ** alpha + 1, ranging over (1, 2].
    """
    if form not in SCF_FORMS:
        raise ConfigError(f"scf form must be one of {SCF_FORMS}, got '{form}'")
    if t_n < 1:
        raise ConfigError(f"t_n must be >= 1, got {t_n}")
    if alpha <= 0:
        raise ConfigError(f"alpha must be positive, got {alpha}")
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 1):
        raise DataError("snapshot time t must be >= 1")
    base = (t / t_n) ** alpha
    if form == "paper_literal":
        base = base + 1.0
    return base if base.ndim else float(base)


def scf_labels(indices, failure_index, alpha=1.0, form="normalized"):
    """Labels for 0-based snapshot indices of the source series."""
    return scf_value(np.asarray(indices) + 1, failure_index, alpha, form)


def scf_loss(hi, labels):
    """Mean squared error between pair health indicators and source labels."""
    labels = Tensor(np.asarray(labels, dtype=np.float64))
    if labels.shape != hi.shape:
        raise DataError(f"labels shape {labels.shape} != hi shape {hi.shape}")
    diff = hi - labels
    return mean(diff * diff)


# -- distribution alignment ----------------------------------------------


def _kernel_mean(a, b, gamma):
    aa = tensor_sum(a * a, axis=1, keepdims=True)
    bb = tensor_sum(b * b, axis=1, keepdims=True)
    sq = aa + transpose(bb, (1, 0)) - 2.0 * matmul(a, transpose(b, (1, 0)))
    return mean(exp(sq * (-gamma)))


def mmd_loss(features_source, features_target, sigma=None):
    """Biased squared maximum mean discrepancy with a Gaussian kernel.

    The bandwidth defaults to the median pairwise distance of the pooled
    (detached) feature rows; identical rows fall back to 1.0 with a warning.
    Identical feature multisets give exactly zero.
    """
    fs, ft = features_source, features_target
    if fs.ndim != 2 or ft.ndim != 2 or fs.shape[1] != ft.shape[1]:
        raise DataError(
            f"features must be (B, D) with matching D, got {fs.shape} and {ft.shape}"
        )
    if sigma is None:
        pooled = np.concatenate([fs.data, ft.data], axis=0)
        sigma = median_pairwise_distance(pooled)
        if sigma == 0.0:
            warnings.warn(
                "all pooled features identical; MMD bandwidth falls back to 1.0",
                stacklevel=2,
            )
            sigma = 1.0
    elif sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    gamma = 1.0 / (2.0 * sigma * sigma)
    return (
        _kernel_mean(fs, fs, gamma)
        + _kernel_mean(ft, ft, gamma)
        - 2.0 * _kernel_mean(fs, ft, gamma)
    )


def reconstruction_loss(x_source, recon_source, x_target, recon_target):
    """Mean-per-element squared error, summed over the two domains."""
    ds = recon_source - x_source
    dt = recon_target - x_target
    return mean(ds * ds) + mean(dt * dt)


# -- dynamic loss weighting ----------------------------------------------


@dataclass
class DwaState:
    """Epoch-mean loss history driving the adaptive weights.

    The first two epochs use unit weights. Afterwards each task's rate is
    the ratio of its two previous epoch means; the default ``softmax``
    formula scales a temperature softmax of the rates by the task count so
    the weights sum to 3. The ``literal`` variant exponentiates the rate
    divided by the partition sum instead; it is kept only for comparison
    and is never the default.
    """

    temperature: float = 2.0
    formula: str = "softmax"
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.formula not in DWA_FORMULAS:
            raise ConfigError(f"formula must be one of {DWA_FORMULAS}")

    def record(self, losses):
        if len(losses) != N_TASKS:
            raise ConfigError(f"expected {N_TASKS} loss values, got {len(losses)}")
        self.history.append(tuple(float(x) for x in losses))

    def weights(self, epoch):
        """Weights for 1-based ``epoch`` given the recorded history."""
        if epoch <= 2 or len(self.history) < 2:
            return (1.0,) * N_TASKS
        prev, prev2 = self.history[-1], self.history[-2]
        rates = []
        for a, b in zip(prev, prev2):
            if b == 0.0:
                warnings.warn("zero epoch loss; rate clamped to 1.0", stacklevel=2)
                rates.append(1.0)
            else:
                rates.append(a / b)
        rates = np.asarray(rates)
        scaled = np.exp(rates / self.temperature)
        if self.formula == "softmax":
            lam = N_TASKS * scaled / scaled.sum()
        else:
            lam = np.exp((rates / self.temperature) / scaled.sum())
        return tuple(float(x) for x in lam)


# -- optimizer -----------------------------------------------------------


class Adam:
    """Adam with bias correction; deterministic parameter iteration order."""

    def __init__(self, store, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ConfigError(f"lr must be positive, got {lr}")
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {k: np.zeros_like(t.data) for k, t in store.params.items()}
        self._v = {k: np.zeros_like(t.data) for k, t in store.params.items()}

    def step(self):
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for name, t in self.store.params.items():
            if t.grad is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * t.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * t.grad**2
            update = self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            t.data = t.data - update


# -- run configuration and diagnostics -----------------------------------


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    sampling_mode: str = "synchronized"
    weighting: str = "dwa"
    fixed_weights: tuple = (1.0, 1.0, 1.0)
    temperature: float = 2.0
    dwa_formula: str = "softmax"
    scf_alpha: float = 1.0
    scf_form: str = "normalized"
    mmd_sigma: float | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.weighting not in WEIGHTINGS:
            raise ConfigError(f"weighting must be one of {WEIGHTINGS}")
        if self.weighting == "dwa" and 0 < self.epochs < 3:
            raise ConfigError(
                "adaptive weighting needs at least 3 epochs (two warm-up epochs)"
            )
        if self.sampling_mode not in MODES:
            raise ConfigError(f"sampling_mode must be one of {MODES}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if len(self.fixed_weights) != N_TASKS:
            raise ConfigError(f"fixed_weights needs {N_TASKS} entries")
        if self.scf_form not in SCF_FORMS:
            raise ConfigError(f"scf_form must be one of {SCF_FORMS}")


@dataclass
class RunDiagnostics:
    """Per-epoch loss means and weights; wall clock kept separately.

    The loss and weight columns are byte-reproducible under a fixed seed;
    wall time is environmental and therefore never mixed into them.
    """

    epochs: list = field(default_factory=list)
    scf: list = field(default_factory=list)
    mmd: list = field(default_factory=list)
    rec: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    total: list = field(default_factory=list)
    wall_seconds: list = field(default_factory=list)

    def append(self, epoch, losses, lam, wall):
        self.epochs.append(epoch)
        self.scf.append(losses[0])
        self.mmd.append(losses[1])
        self.rec.append(losses[2])
        self.weights.append(tuple(lam))
        self.total.append(lam[0] * losses[0] + lam[1] * losses[1] + lam[2] * losses[2])
        self.wall_seconds.append(wall)

    @property
    def n_epochs(self):
        return len(self.epochs)

    def rows(self):
        """Deterministic rows: epoch, losses, weights, weighted total."""
        for i in range(self.n_epochs):
            yield (
                self.epochs[i],
                self.scf[i],
                self.mmd[i],
                self.rec[i],
                *self.weights[i],
                self.total[i],
            )


def train(
    source,
    target,
    model_cfg,
    train_cfg,
    plan=None,
    source_seg=None,
    target_seg=None,
    params=None,
):
    """Run the full loop; returns ``(params, diagnostics)``.

    Everything random (init, batch order, pairing, dropout masks) derives
    from ``train_cfg.seed``, so repeated runs are bit-identical. A non-finite
    loss aborts with the epoch and batch in the message. With ``epochs=0``
    the initialized parameters are returned untouched.
    """
    if plan is None:
        if source_seg is None or target_seg is None:
            raise ConfigError("provide either a stage plan or both segmentations")
        plan = build_stage_plan(source, source_seg, target, target_seg)
    if params is None:
        params = init_params(model_cfg, seed=train_cfg.seed)
    opt = Adam(params, lr=train_cfg.lr)
    dwa = DwaState(temperature=train_cfg.temperature, formula=train_cfg.dwa_formula)
    dropout_rng = np.random.default_rng((train_cfg.seed, 0x5EED))
    diag = RunDiagnostics()
    labels_cache = scf_labels(
        np.arange(source.n_snapshots),
        source.failure_index,
        alpha=train_cfg.scf_alpha,
        form=train_cfg.scf_form,
    )
    for epoch in range(1, train_cfg.epochs + 1):
        started = time.perf_counter()
        if train_cfg.weighting == "fixed":
            lam = tuple(float(x) for x in train_cfg.fixed_weights)
        else:
            lam = dwa.weights(epoch)
        batches = sample_epoch(
            plan,
            train_cfg.batch_size,
            seed=(train_cfg.seed, 31, epoch),
            mode=train_cfg.sampling_mode,
        )
        sums = np.zeros(N_TASKS)
        for index, batch in enumerate(batches):
            xs = Tensor(source.snapshots[batch.source_indices])
            xt = Tensor(target.snapshots[batch.target_indices])
            try:
                result = encode_batch(
                    params, xs, xt, model_cfg,
                    train=True, rng=dropout_rng, update_bn=True,
                )
                recon_s = decode_batch(
                    params, result, "S", model_cfg,
                    train=True, rng=dropout_rng, update_bn=True,
                )
                recon_t = decode_batch(
                    params, result, "T", model_cfg,
                    train=True, rng=dropout_rng, update_bn=True,
                )
                l_scf = scf_loss(result.hi, labels_cache[batch.source_indices])
                fs, ft = pooled_features(result)
                l_mmd = mmd_loss(fs, ft, sigma=train_cfg.mmd_sigma)
                l_rec = reconstruction_loss(xs, recon_s, xt, recon_t)
                total = lam[0] * l_scf + lam[1] * l_mmd + lam[2] * l_rec
                params.zero_grad()
                total.backward()
                opt.step()
            except NumericalError as err:
                raise NumericalError(
                    f"epoch {epoch}, batch {index}: {err}"
                ) from err
            sums += (l_scf.item(), l_mmd.item(), l_rec.item())
        means = sums / len(batches)
        dwa.record(means)
        diag.append(epoch, tuple(means), lam, time.perf_counter() - started)
    return params, diag
