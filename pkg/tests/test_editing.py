import numpy as np
import pytest
from hypothesis import given, strategies as st

from permhair import codec, editing, metrics, synthetic
from permhair.errors import AlignmentMismatch, DimensionMismatch, InputError


@pytest.fixture(scope="module")
def wig():
    return synthetic.make_wig(60, rng=np.random.default_rng(8))


@pytest.fixture(scope="module")
def curly():
    style = synthetic.Style(curl_radius=0.5, curl_period=2.0)
    return synthetic.make_wig(60, style, np.random.default_rng(9))


def test_smooth_full_rank_is_codec_round_trip(wig, basis):
    out = editing.smooth_hair(wig, basis, 64)
    assert np.abs(out.points - codec.decode(codec.encode(wig.points, basis), basis)).max() < 1e-12
    assert np.array_equal(out.roots, wig.roots)


def test_smooth_reduces_curvature(curly, basis):
    k10 = metrics.total_curvature(editing.smooth_hair(curly, basis, 10).points)
    k64 = metrics.total_curvature(editing.smooth_hair(curly, basis, 64).points)
    assert k10 < k64


def test_smooth_zero_gives_mean(wig, basis):
    out = editing.smooth_hair(wig, basis, 0)
    assert np.abs(out.points - basis.mean_strand()).max() < 1e-12


@pytest.mark.parametrize("n", [0, 5, 10, 64])
def test_smooth_idempotent(wig, basis, n):
    once = editing.smooth_hair(wig, basis, n)
    twice = editing.smooth_hair(once, basis, n)
    assert np.abs(once.points - twice.points).max() < 1e-9


def test_self_transfer_is_identity(wig, basis):
    for mode in editing.TRANSFER_MODES:
        out = editing.transfer_style(wig, wig, basis, mode=mode)
        assert np.abs(out.points - codec.decode(codec.encode(wig.points, basis), basis)).max() < 1e-12


def test_transfer_split_extremes(wig, curly, basis):
    full = editing.transfer_style(wig, curly, basis, split=64, mode="index")
    assert np.abs(full.points - editing.smooth_hair(wig, basis, 64).points).max() < 1e-12
    none = editing.transfer_style(wig, curly, basis, split=0, mode="index")
    assert np.abs(none.points - editing.smooth_hair(curly, basis, 64).points).max() < 1e-12


def test_transfer_keeps_structure_low_band(wig, curly, basis):
    out = editing.transfer_style(wig, curly, basis, split=10)
    g = codec.encode(out.points, basis)
    assert np.abs(g[:, :10] - codec.encode(wig.points, basis)[:, :10]).max() < 1e-9
    assert np.array_equal(out.roots, wig.roots)


def test_transfer_errors(wig, curly, basis):
    with pytest.raises(AlignmentMismatch):
        editing.transfer_style(wig, curly.subset(np.arange(10)), basis, mode="index")
    no_uv = type(wig).from_array(wig.points, wig.roots)
    with pytest.raises(AlignmentMismatch):
        editing.transfer_style(no_uv, curly, basis, mode="texel")
    with pytest.raises(InputError):
        editing.transfer_style(wig, curly, basis, mode="random")


def _pair(seed, nt=12, nb=7):
    rng = np.random.default_rng(seed)
    return (rng.normal(size=nt), rng.normal(size=nb)), (rng.normal(size=nt), rng.normal(size=nb))


@pytest.mark.parametrize("mode", editing.INTERP_MODES)
def test_interp_endpoints_exact(mode):
    a, b = _pair(0)
    t0, b0 = editing.interpolate_params(a, b, 0.0, mode)
    assert np.array_equal(t0, a[0]) and np.array_equal(b0, a[1])
    t1, b1 = editing.interpolate_params(a, b, 1.0, mode)
    assert np.array_equal(t1, b[0] if mode != "beta" else a[0])
    assert np.array_equal(b1, b[1] if mode != "theta" else a[1])


@given(st.integers(0, 2 ** 31), st.floats(0, 1))
def test_interp_beta_only_keeps_theta(seed, t):
    a, b = _pair(seed)
    theta, beta = editing.interpolate_params(a, b, t, "beta")
    assert np.array_equal(theta, a[0])
    assert np.abs(beta - ((1 - t) * a[1] + t * b[1])).max() < 1e-12


@given(st.integers(0, 2 ** 31), st.floats(0, 1), st.floats(0, 1))
def test_interp_lipschitz_in_t(seed, s, t):
    a, b = _pair(seed)
    x = np.concatenate(editing.interpolate_params(a, b, s))
    y = np.concatenate(editing.interpolate_params(a, b, t))
    span = np.concatenate(b) - np.concatenate(a)
    assert np.abs(x - y).max() <= abs(s - t) * np.abs(span).max() + 1e-12


def test_interp_midpoint_and_errors():
    a, b = _pair(1)
    theta, beta = editing.interpolate_params(a, b, 0.5)
    assert np.allclose(theta, (a[0] + b[0]) / 2) and np.allclose(beta, (a[1] + b[1]) / 2)
    with pytest.raises(InputError):
        editing.interpolate_params(a, b, 1.5)
    with pytest.raises(InputError):
        editing.interpolate_params(a, b, 0.5, "both")
    with pytest.raises(DimensionMismatch):
        editing.interpolate_params(a, (b[0][:3], b[1]), 0.5)


@given(st.sampled_from(["smooth", "transfer", "interp"]), st.integers(0, 64), st.floats(0, 1),
       st.lists(st.from_regex(r"[a-z0-9_./]{1,12}", fullmatch=True), max_size=3))
def test_recipe_round_trip(op, split, t, sources):
    r = editing.EditRecipe(op, split, t, "joint", sources)
    assert editing.EditRecipe.from_text(r.to_text()) == r


def test_recipe_validation():
    with pytest.raises(InputError):
        editing.EditRecipe("blur")
    with pytest.raises(InputError):
        editing.EditRecipe("smooth", split=65)
    with pytest.raises(InputError):
        editing.EditRecipe.from_text("split=3\n")
