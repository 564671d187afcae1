"""Closed-form metric fixtures, naive oracles, and sensitivity-map behavior."""

import numpy as np
import pytest

from hiforge.errors import ConfigError, DataError
from hiforge.metrics import (
    HiSeries,
    comprehensive_index,
    correlation,
    erf_breadth,
    erf_map,
    evaluate_hi,
    monotonicity,
    moving_average,
    pi_control,
    robustness,
)
from hiforge.model import ModelConfig, init_params
from hiforge.sampling import StagePlan, sample_epoch
from hiforge.series import RtFSeries


def raw_series(values):
    """Series whose trend equals the values, so metrics see them unsmoothed."""
    return moving_average(np.asarray(values, dtype=np.float64), window=1)


# -- moving average ------------------------------------------------------


def naive_moving_average(values, window):
    n = len(values)
    half = window // 2
    out = np.empty(n)
    for t in range(n):
        r = min(half, t, n - 1 - t)
        acc = [values[j] for j in range(t - r, t + r + 1)]
        out[t] = sum(acc) / len(acc)
    return out


def test_moving_average_window_one_is_identity():
    values = np.array([3.0, -1.0, 2.0, 5.0])
    s = moving_average(values, window=1)
    np.testing.assert_array_equal(s.trend, values)
    np.testing.assert_array_equal(s.residual, np.zeros(4))


def test_moving_average_constant_series():
    s = moving_average(np.full(10, 2.5), window=5)
    np.testing.assert_allclose(s.trend, np.full(10, 2.5))
    np.testing.assert_allclose(s.residual, np.zeros(10), atol=1e-15)


def test_moving_average_matches_naive_loop():
    rng = np.random.default_rng(0)
    values = rng.normal(size=30)
    for window in (1, 3, 5, 7):
        s = moving_average(values, window=window)
        np.testing.assert_allclose(
            s.trend, naive_moving_average(values, window), atol=1e-12
        )


def test_moving_average_edges_shrink_symmetrically():
    s = moving_average(np.arange(10.0), window=5)
    assert s.trend[0] == 0.0
    assert s.trend[1] == pytest.approx(1.0)
    assert s.trend[2] == pytest.approx(2.0)


def test_moving_average_validation():
    with pytest.raises(ConfigError):
        moving_average(np.zeros(10), window=4)
    with pytest.raises(DataError):
        moving_average(np.zeros(3), window=5)
    with pytest.raises(DataError):
        moving_average(np.zeros((2, 3)), window=1)


def test_hi_series_decomposition_exact():
    rng = np.random.default_rng(1)
    s = moving_average(rng.normal(size=25), window=5)
    np.testing.assert_allclose(s.residual + s.trend, s.values, atol=1e-12)


def test_hi_series_validation():
    with pytest.raises(DataError):
        HiSeries(values=np.zeros(3), trend=np.zeros(4), ma_window=1)
    with pytest.raises(DataError):
        HiSeries(values=np.array([np.nan]), trend=np.zeros(1), ma_window=1)


# -- monotonicity --------------------------------------------------------


def test_monotonicity_strict_ramps():
    assert monotonicity(raw_series(np.arange(10.0))) == pytest.approx(1.0)
    assert monotonicity(raw_series(-np.arange(10.0))) == pytest.approx(1.0)


def test_monotonicity_alternating_fixture():
    # [0,1,0,1,0,0]: lag-1 signs +,-,+,-,0 sum to 0; lag-2 signs 0,0,0,-;
    # lag-3 signs +,-,0 sum to 0. Mon = (0 + 1/4 + 0) / 3.
    s = raw_series([0.0, 1.0, 0.0, 1.0, 0.0, 0.0])
    assert monotonicity(s) == pytest.approx(1.0 / 12.0)


def test_monotonicity_needs_four_points():
    with pytest.raises(DataError):
        monotonicity(raw_series([0.0, 1.0, 2.0]))


def test_monotonicity_affine_and_flip_invariance():
    rng = np.random.default_rng(2)
    values = rng.normal(size=20).cumsum()
    base = monotonicity(raw_series(values))
    assert monotonicity(raw_series(3.0 * values + 7.0)) == pytest.approx(base)
    assert monotonicity(raw_series(-values)) == pytest.approx(base)


# -- correlation ---------------------------------------------------------


def naive_pearson(x, y):
    xm, ym = x.mean(), y.mean()
    num = ((x - xm) * (y - ym)).sum()
    return num / np.sqrt(((x - xm) ** 2).sum() * ((y - ym) ** 2).sum())


def test_correlation_linear_trend_is_one():
    assert correlation(raw_series(2.0 * np.arange(12.0) + 1.0)) == pytest.approx(1.0)
    assert correlation(raw_series(-0.5 * np.arange(12.0))) == pytest.approx(1.0)


def test_correlation_constant_warns_zero():
    with pytest.warns(UserWarning, match="constant trend"):
        assert correlation(raw_series(np.full(8, 1.0))) == 0.0


def test_correlation_orthogonalized_series():
    rng = np.random.default_rng(3)
    n = 40
    t = np.arange(1, n + 1, dtype=np.float64)
    y = rng.normal(size=n)
    basis = np.stack([np.ones(n), t], axis=1)
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    y_perp = y - basis @ coef
    assert correlation(raw_series(y_perp)) == pytest.approx(0.0, abs=1e-10)


def test_correlation_matches_naive_oracle():
    rng = np.random.default_rng(4)
    values = rng.normal(size=25).cumsum()
    s = raw_series(values)
    t = np.arange(1, 26, dtype=np.float64)
    assert correlation(s) == pytest.approx(abs(naive_pearson(values, t)), abs=1e-12)


# -- robustness ----------------------------------------------------------


def test_robustness_zero_residual_is_one():
    assert robustness(raw_series(np.arange(10.0))) == 1.0


def test_robustness_closed_form_fixture():
    # Two points, trend range 1, residuals both 0.1, xi=2:
    # exp(-(2/2) * (0.1 + 0.1) / 1) = exp(-0.2).
    s = HiSeries(
        values=np.array([0.1, 1.1]), trend=np.array([0.0, 1.0]), ma_window=1
    )
    assert robustness(s, xi=2.0) == pytest.approx(np.exp(-0.2), abs=1e-12)


def test_robustness_flat_trend_guard():
    flat_clean = HiSeries(values=np.ones(5), trend=np.ones(5), ma_window=1)
    assert robustness(flat_clean) == 1.0
    flat_noisy = HiSeries(
        values=np.array([1.0, 1.2, 1.0]), trend=np.ones(3), ma_window=1
    )
    with pytest.raises(DataError):
        robustness(flat_noisy)


def test_robustness_shift_invariance():
    rng = np.random.default_rng(5)
    values = np.arange(20.0) + rng.normal(size=20) * 0.1
    a = robustness(moving_average(values, window=5))
    b = robustness(moving_average(values + 100.0, window=5))
    assert a == pytest.approx(b, abs=1e-12)


def test_robustness_rejects_bad_xi():
    with pytest.raises(ConfigError):
        robustness(raw_series(np.arange(5.0)), xi=0.0)


# -- comprehensive index -------------------------------------------------


def test_ci_endpoints():
    assert comprehensive_index(1.0, 1.0, 1.0) == pytest.approx(1.0)
    assert comprehensive_index(0.0, 0.0, 0.0) == 0.0


def test_ci_published_row_arithmetic():
    ci = comprehensive_index(0.5055, 0.8719, 0.9226)
    assert ci == pytest.approx(0.74055, abs=1e-12)
    assert abs(ci - 0.7406) <= 5e-4


def test_ci_rejects_out_of_range():
    with pytest.raises(DataError):
        comprehensive_index(1.5, 0.5, 0.5)


def test_evaluate_hi_report_identity():
    rng = np.random.default_rng(6)
    values = np.linspace(0.0, 1.0, 60) + rng.normal(size=60) * 0.02
    report = evaluate_hi(values, window=5, xi=2.0)
    expect = 0.4 * report.mon + 0.3 * report.cor + 0.3 * report.rob
    assert abs(report.ci - expect) <= 1e-12
    assert report.mon > 0.9 and report.cor > 0.99
    assert report.ma_window == 5 and report.n == 60


# -- training stability --------------------------------------------------


def test_pi_control_constant_losses():
    assert pi_control(np.full(12, 3.0)) == 0.0


def test_pi_control_two_point_fixture():
    assert pi_control([1.0, 3.0], horizon=2) == pytest.approx(np.sqrt(2.0))


def test_pi_control_uses_only_last_window():
    losses = np.concatenate([np.array([100.0, -50.0, 7.0]), np.full(10, 2.0)])
    assert pi_control(losses, horizon=10) == 0.0


def test_pi_control_matches_naive_std():
    rng = np.random.default_rng(7)
    losses = rng.normal(size=30)
    last = losses[-10:]
    mu = sum(last) / 10
    expected = np.sqrt(sum((x - mu) ** 2 for x in last) / 9)
    assert pi_control(losses) == pytest.approx(expected, abs=1e-12)


def test_pi_control_validation():
    with pytest.raises(DataError):
        pi_control([1.0, 2.0], horizon=3)
    with pytest.raises(ConfigError):
        pi_control([1.0, 2.0, 3.0], horizon=1)


# -- sensitivity map -----------------------------------------------------


def erf_setup(kernel_sizes=(3, 5, 7), seed=0):
    cfg = ModelConfig(
        n_channels=2,
        snapshot_len=32,
        patch_len=8,
        patch_stride=8,
        embed_dim=8,
        attn_dim=8,
        n_heads=2,
        kernel_sizes=kernel_sizes,
        ffn_ratio=2,
        n_encoder_blocks=1,
        n_decoder_blocks=1,
        dropout=0.0,
    )
    params = init_params(cfg, seed=seed)
    rng = np.random.default_rng(seed)
    src = RtFSeries(
        snapshots=rng.normal(size=(8, 2, 32)),
        domain="S",
        sampling_interval_seconds=1.0,
    )
    tgt = RtFSeries(
        snapshots=rng.normal(size=(6, 2, 32)),
        domain="T",
        sampling_interval_seconds=1.0,
    )
    plan = StagePlan(
        source_pools=[np.arange(8)], target_pools=[np.arange(6)]
    )
    batches = sample_epoch(plan, batch_size=4, seed=(seed, 9))
    return cfg, params, src, tgt, batches


def test_erf_map_shape_and_sign():
    cfg, params, src, tgt, batches = erf_setup()
    erf = erf_map(params, cfg, src, tgt, batches)
    assert erf.shape == (32,)
    assert np.all(erf >= 0.0)
    assert erf.max() > 0.0


def test_erf_map_deterministic():
    cfg, params, src, tgt, batches = erf_setup()
    a = erf_map(params, cfg, src, tgt, batches)
    b = erf_map(params, cfg, src, tgt, batches)
    assert a.tobytes() == b.tobytes()


def test_erf_map_batch_truncation():
    cfg, params, src, tgt, batches = erf_setup()
    assert len(batches) >= 2
    full = erf_map(params, cfg, src, tgt, batches, n_batches=1)
    head = erf_map(params, cfg, src, tgt, batches[:1], n_batches=5)
    np.testing.assert_array_equal(full, head)


def test_erf_map_requires_batches():
    cfg, params, src, tgt, _ = erf_setup()
    with pytest.raises(DataError):
        erf_map(params, cfg, src, tgt, [])
    with pytest.raises(ConfigError):
        erf_map(params, cfg, src, tgt, [], n_batches=0)


def test_erf_breadth_values():
    assert erf_breadth(np.ones(10)) == 1.0
    assert erf_breadth(np.array([1.0, 0.001, 0.0])) == pytest.approx(1.0 / 3.0)
    with pytest.raises(DataError):
        erf_breadth(np.array([-1.0, 1.0]))
    with pytest.raises(DataError):
        erf_breadth(np.array([]))
