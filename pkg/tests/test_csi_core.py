import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from csiaug.csi_core import (
    DEFAULT_MASK,
    CarrierMask,
    ChannelStats,
    CsiFrame,
    CsiImage,
    PhaseFit,
    build_csi_image,
    correct_phase,
    denormalize,
    fit_linear_phase,
    normalize,
    subcarrier_bins,
    unwrap_phase,
)
from csiaug.errors import (
    DegenerateFitError,
    DegenerateStatsError,
    InvalidInputError,
    OrderingError,
    ShapeError,
)


def brute_force_unwrap(x):
    """Pick, element by element, the 2*pi shift putting the step in (-pi, pi]."""
    out = [x[0]]
    for v in x[1:]:
        candidates = [v + 2 * math.pi * m for m in range(-20, 21)]
        ok = [c for c in candidates if -math.pi < c - out[-1] <= math.pi]
        assert len(ok) == 1
        out.append(ok[0])
    return np.array(out)


def test_unwrap_identity_when_steps_small():
    assert np.array_equal(unwrap_phase([0.0, 1.0, 2.0]), [0.0, 1.0, 2.0])


@pytest.mark.parametrize(
    "raw, expected",
    [
        ([0.0, 3.0, -3.0], [0.0, 3.0, 3.2831853071795862]),
        ([3.1, -3.1, 3.1], [3.1, 3.1831853071795862, 3.1]),
    ],
)
def test_unwrap_examples(raw, expected):
    # values frozen from brute_force_unwrap
    np.testing.assert_allclose(brute_force_unwrap(raw), expected, atol=1e-12)
    np.testing.assert_allclose(unwrap_phase(raw), expected, atol=1e-12)


def test_unwrap_matches_brute_force_on_random_walks():
    rng = np.random.default_rng(3)
    for _ in range(50):
        true = np.cumsum(rng.uniform(-3.0, 3.0, 40))
        wrapped = np.angle(np.exp(1j * true))
        np.testing.assert_allclose(unwrap_phase(wrapped), brute_force_unwrap(wrapped), atol=1e-9)


def test_unwrap_multi_wrap():
    x = np.array([0.0, 0.5 + 4 * math.pi, 1.0 - 6 * math.pi])
    np.testing.assert_allclose(unwrap_phase(x), [0.0, 0.5, 1.0], atol=1e-12)


def test_unwrap_along_axis():
    rng = np.random.default_rng(0)
    x = rng.uniform(-math.pi, math.pi, (5, 30))
    rows = np.stack([unwrap_phase(r) for r in x])
    np.testing.assert_array_equal(unwrap_phase(x, axis=-1), rows)
    np.testing.assert_array_equal(unwrap_phase(x.T, axis=0), rows.T)


@pytest.mark.parametrize("bad", [[0.0], [0.0, np.nan], [np.inf, 1.0]])
def test_unwrap_rejects_bad_input(bad):
    with pytest.raises(InvalidInputError):
        unwrap_phase(bad)


phases = arrays(np.float64, st.integers(2, 60), elements=st.floats(-50, 50))


@given(phases)
def test_unwrap_shift_is_integer_turns(x):
    turns = (unwrap_phase(x) - x) / (2 * math.pi)
    np.testing.assert_allclose(turns, np.round(turns), atol=1e-9)


@given(phases)
def test_unwrap_steps_within_half_turn(x):
    d = np.diff(unwrap_phase(x))
    assert np.all(d > -math.pi - 1e-9) and np.all(d <= math.pi + 1e-9)


@given(phases)
def test_unwrap_idempotent(x):
    once = unwrap_phase(x)
    np.testing.assert_allclose(unwrap_phase(once), once, atol=1e-9)


K4 = np.array([-3, -1, 1, 3])


def test_fit_recovers_line():
    fit = fit_linear_phase(0.5 * K4 + 0.2, K4)
    assert fit.slope_a == pytest.approx(0.5, abs=1e-15)
    assert fit.intercept_b == pytest.approx(0.2, abs=1e-15)


def test_fit_constant():
    fit = fit_linear_phase([0.7] * 4, K4)
    assert fit.slope_a == 0.0
    assert fit.intercept_b == pytest.approx(0.7, abs=1e-15)


def test_fit_slope_monte_carlo():
    rng = np.random.default_rng(11)
    k = DEFAULT_MASK.indices()
    sigma = 0.05
    # endpoint estimator: SE = sqrt(2) sigma / (k_n - k_1)
    se = math.sqrt(2) * sigma / (k[-1] - k[0])
    misses = 0
    for _ in range(200):
        a, b = rng.uniform(-0.2, 0.2), rng.uniform(-1, 1)
        phi = a * k + b + sigma * rng.standard_normal(k.size)
        misses += abs(fit_linear_phase(phi, k).slope_a - a) > 3 * se
    # 3-sigma band: expect ~0.27% outside
    assert misses <= 4


def test_fit_degenerate_and_shape_errors():
    with pytest.raises(DegenerateFitError):
        fit_linear_phase([1.0, 2.0, 3.0], [2, 1, 2])
    with pytest.raises(DegenerateFitError):
        fit_linear_phase([1.0, 2.0, 3.0], [1, 1, 2])
    with pytest.raises(ShapeError):
        fit_linear_phase([1.0, 2.0], [1, 2, 3])
    with pytest.raises(InvalidInputError):
        fit_linear_phase([1.0], [1])


def test_fit_batched_matches_rows():
    rng = np.random.default_rng(1)
    phi = rng.normal(size=(7, 12))
    k = np.arange(12) - 5
    fit = fit_linear_phase(phi, k)
    for i in range(7):
        f = fit_linear_phase(phi[i], k)
        assert fit.slope_a[i] == pytest.approx(f.slope_a)
        assert fit.intercept_b[i] == pytest.approx(f.intercept_b)


def test_phasefit_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        PhaseFit(float("nan"), 0.0)


def test_correct_removes_line():
    phi = 0.5 * K4 + 0.2
    np.testing.assert_allclose(correct_phase(phi, K4, fit_linear_phase(phi, K4)), 0.0, atol=1e-15)


def test_correct_zero():
    z = np.zeros(4)
    assert np.array_equal(correct_phase(z, K4, fit_linear_phase(z, K4)), z)


def test_correct_returns_fit_null_residual():
    k = np.arange(-10, 11)
    # r(k_1) = r(k_n) = 0 and mean 0, so the fit of line + r is exactly the line
    r = np.sin(np.pi * (k - k[0]) / (k[-1] - k[0])) ** 2
    r[0] = r[-1] = 0.0
    r[1:-1] -= r.sum() / (k.size - 2)
    assert abs(r[0]) < 1e-15 and abs(r[-1]) < 1e-15 and abs(r.mean()) < 1e-15
    phi = -0.3 * k + 1.1 + r
    np.testing.assert_allclose(correct_phase(phi, k, fit_linear_phase(phi, k)), r, atol=1e-12)


@given(
    arrays(np.float64, 30, elements=st.floats(-100, 100)),
)
def test_refit_after_correction_is_zero(phi):
    k = np.sort(np.random.default_rng(0).choice(np.arange(-128, 128), 30, replace=False))
    out = correct_phase(phi, k, fit_linear_phase(phi, k))
    refit = fit_linear_phase(out, k)
    assert abs(refit.slope_a) < 1e-9 and abs(refit.intercept_b) < 1e-9


def test_default_mask_has_234_carriers():
    assert DEFAULT_MASK.count == 234
    k = DEFAULT_MASK.indices()
    assert not np.isin([-1, 0, 1, -11, 11, 39, -103, 123, -123], k).any()
    assert k.min() == -122 and k.max() == 122


def _frames(phase_fn, amp=1.0, n=256, k=None):
    k = subcarrier_bins() if k is None else k
    out = []
    for i in range(n):
        ph = phase_fn(i, k)
        values = amp * np.exp(1j * np.stack([ph, ph + 0.3, ph - 0.2, ph + 1.0]))
        out.append(CsiFrame(0.01 * i, k, values))
    return out


def test_build_unit_magnitude_gives_zero_db():
    img = build_csi_image(_frames(lambda i, k: np.zeros(k.size)))
    assert img.channels.shape == (4, 256, 256)
    assert np.all(img.channels[[0, 2]][:, DEFAULT_MASK.usable] == 0.0)


def test_build_linear_phase_ramps_vanish():
    rng = np.random.default_rng(5)
    slopes, offsets = rng.uniform(-0.3, 0.3, 256), rng.uniform(-3, 3, 256)
    img = build_csi_image(_frames(lambda i, k: slopes[i] * k + offsets[i]))
    np.testing.assert_allclose(img.channels[[1, 3]], 0.0, atol=1e-5)


def test_build_masked_rows_zero_and_layout():
    rng = np.random.default_rng(2)
    img = build_csi_image(_frames(lambda i, k: 0.1 * np.sin(k / 7.0 + i), amp=2.0), antenna_pair=(1, 2))
    assert np.all(img.channels[:, ~DEFAULT_MASK.usable] == 0.0)
    assert np.allclose(img.channels[0][DEFAULT_MASK.usable], 20 * np.log10(2.0), atol=1e-5)
    assert img.channels.dtype == np.float32
    # column t is frame t
    col = img.channels[1][DEFAULT_MASK.usable][:, 3]
    k = DEFAULT_MASK.indices()
    expected = correct_phase(0.1 * np.sin(k / 7.0 + 3) + 0.3, k, fit_linear_phase(0.1 * np.sin(k / 7.0 + 3) + 0.3, k))
    np.testing.assert_allclose(col, expected, atol=1e-6)


def test_build_amplitude_floor():
    frames = _frames(lambda i, k: np.zeros(k.size), amp=0.0)
    img = build_csi_image(frames)
    assert np.all(img.channels[0][DEFAULT_MASK.usable] == -240.0)


def test_build_deterministic():
    frames = _frames(lambda i, k: 0.01 * k * i)
    a = build_csi_image(frames)
    b = build_csi_image(frames)
    assert a.channels.tobytes() == b.channels.tobytes()


def test_build_errors():
    frames = _frames(lambda i, k: np.zeros(k.size))
    with pytest.raises(ShapeError):
        build_csi_image(frames[:255])
    swapped = list(frames)
    swapped[10], swapped[11] = swapped[11], swapped[10]
    with pytest.raises(OrderingError):
        build_csi_image(swapped)
    with pytest.raises(InvalidInputError):
        build_csi_image(frames, antenna_pair=(0, 4))
    partial = _frames(lambda i, k: np.zeros(k.size), k=np.arange(-100, 100))
    with pytest.raises(InvalidInputError):
        build_csi_image(partial)


def test_frame_validation():
    with pytest.raises(OrderingError):
        CsiFrame(0.0, [1, 0], np.ones((1, 2)))
    with pytest.raises(InvalidInputError):
        CsiFrame(0.0, [0, 1], np.array([[1.0, np.nan]]))
    with pytest.raises(ShapeError):
        CsiFrame(0.0, [0, 1, 2], np.ones((2, 2)))


def _image(value_fn):
    ch = np.zeros((4, 256, 8))
    for c in range(4):
        ch[c] = value_fn(c)
    ch[:, ~DEFAULT_MASK.usable] = 0.0
    return CsiImage(ch, 0)


STATS = ChannelStats([-10.0, -2.0, 0.0, 1.0], [10.0, 2.0, 4.0, 3.0])


def test_normalize_min_maps_to_minus_one():
    out = normalize(_image(lambda c: STATS.minimum[c]), STATS)
    assert np.all(out.channels[:, DEFAULT_MASK.usable] == -1.0)


def test_normalize_midpoint_maps_to_zero():
    mid = (STATS.minimum + STATS.maximum) / 2
    out = normalize(_image(lambda c: mid[c]), STATS)
    assert np.all(out.channels[:, DEFAULT_MASK.usable] == 0.0)


def test_normalize_round_trip_and_masked_rows():
    rng = np.random.default_rng(4)
    img = _image(lambda c: rng.uniform(STATS.minimum[c], STATS.maximum[c], (256, 8)))
    out = normalize(img, STATS)
    assert out.channels.min() >= -1 and out.channels.max() <= 1
    assert np.all(out.channels[:, ~DEFAULT_MASK.usable] == 0.0)
    back = denormalize(out, STATS)
    np.testing.assert_allclose(back.channels, img.channels, atol=1e-6)


def test_stats_from_array_ignores_masked_rows():
    img = _image(lambda c: 5.0 + c)
    st_ = ChannelStats.from_array(np.concatenate([img.channels, img.channels + 1], axis=2), DEFAULT_MASK)
    np.testing.assert_array_equal(st_.minimum, [5, 6, 7, 8])
    np.testing.assert_array_equal(st_.maximum, [6, 7, 8, 9])


def test_degenerate_stats():
    with pytest.raises(DegenerateStatsError):
        ChannelStats([0.0, 1.0], [0.0, 2.0])
    with pytest.raises(DegenerateStatsError):
        ChannelStats([0.0], [np.inf])


def test_carrier_mask_equality():
    assert CarrierMask.vht80() == DEFAULT_MASK
    assert CarrierMask.all_usable() != DEFAULT_MASK
