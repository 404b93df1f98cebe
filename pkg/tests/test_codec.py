import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from permhair import codec, metrics, synthetic
from permhair.errors import BadMagic, BandMismatch, DegenerateVariance, DimensionMismatch, Truncated
from permhair.hair_io import HairModel

L = 100


def naive_dft(strand):
    n = len(strand)
    k = np.arange(n // 2 + 1)[:, None]
    t = np.arange(n)[None, :]
    W = np.exp(-2j * np.pi * k * t / n)
    return W @ strand


def _random_strands(n, seed=0, L=L):
    return np.random.default_rng(seed).normal(size=(n, L, 3))


def test_dft_of_zero_and_constant():
    assert np.all(codec.dft(np.zeros((L, 3))) == 0)
    s = np.zeros((L, 3))
    s[:, 1] = 2.5
    X = codec.dft(s)
    assert np.isclose(X[0, 1], L * 2.5)
    X[0, 1] = 0
    assert np.abs(X).max() < 1e-12


def test_dft_matches_naive_sum():
    for s in _random_strands(10, 1):
        assert np.abs(codec.dft(s) - naive_dft(s)).max() < 1e-9


def test_idft_zero_and_cosine():
    assert np.all(codec.idft(np.zeros((codec.num_bands(L), 3), complex), L) == 0)
    X = np.zeros((codec.num_bands(L), 3), complex)
    X[1, 0] = 1.0
    t = np.arange(L)
    expected = 2.0 / L * np.cos(2 * np.pi * t / L)
    assert np.abs(codec.idft(X, L)[:, 0] - expected).max() < 1e-12


def test_idft_band_mismatch():
    with pytest.raises(BandMismatch):
        codec.idft(np.zeros((10, 3), complex), L)


@given(arrays(np.float64, st.tuples(st.integers(2, 64), st.just(3)), elements=st.floats(-1e3, 1e3)))
def test_dft_round_trip_property(s):
    back = codec.idft(codec.dft(s), len(s))
    assert np.abs(back - s).max() <= 1e-9 * max(1.0, np.abs(s).max())


@given(st.integers(2, 40), st.integers(0, 2 ** 31))
def test_vector_round_trip_property(n, seed):
    s = np.random.default_rng(seed).normal(size=(n, 3))
    v = codec.strand_to_vector(s)
    assert v.shape == (6 * codec.num_bands(n),)
    assert np.abs(codec.vector_to_strand(v, n) - s).max() < 1e-9


def test_identical_corpus():
    s = synthetic.helix_strand()
    b = codec.fit_basis(np.repeat(s[None], 80, axis=0))
    assert np.allclose(b.mean, codec.strand_to_vector(s))
    assert np.all(b.explained_variance == 0)
    with pytest.raises(DegenerateVariance):
        codec.explained_variance_curve(b)


def _rank2_corpus(n=200, seed=3):
    rng = np.random.default_rng(seed)
    base = codec.strand_to_vector(synthetic.helix_strand())
    dirs = codec.strand_to_vector(rng.normal(size=(2, L, 3)))
    w = rng.normal(size=(n, 2))
    return codec.vector_to_strand(base + w @ dirs, L)


def test_rank2_corpus():
    b = codec.fit_basis(_rank2_corpus(), 8)
    var = b.explained_variance
    assert var[0] > 0 and var[1] > 0
    assert np.all(var[2:] < 1e-12 * b.total_variance)
    curve = codec.explained_variance_curve(b)
    assert abs(curve[1] - 1.0) < 1e-9
    assert np.abs(b.components @ b.components.T - np.eye(8)).max() < 1e-10


def test_curve_matches_covariance_eigenvalues():
    strands = _random_strands(500, 4, L=20)
    b = codec.fit_basis(strands, 40)
    X = codec.strand_to_vector(strands)
    eig = np.sort(np.linalg.eigvalsh(np.cov(X.T)))[::-1]
    oracle = np.cumsum(eig[:40]) / eig.sum()
    assert np.abs(codec.explained_variance_curve(b) - oracle).max() < 1e-8


def test_streaming_matches_svd(corpus):
    strands = synthetic.corpus_strands(corpus)
    a = codec.fit_basis(strands, 20)
    b = codec.fit_basis_streaming(lambda: iter(np.array_split(strands, 7)), 20)
    assert np.allclose(a.explained_variance, b.explained_variance, rtol=1e-8)
    assert np.allclose(np.abs(a.components @ b.components.T), np.eye(20), atol=1e-6)


def test_encode_mean_and_unit(basis):
    assert np.abs(codec.encode(basis.mean_strand(), basis)).max() < 1e-9
    s = codec.vector_to_strand(basis.mean + basis.components[3], basis.L)
    e3 = np.zeros(basis.num_coeffs)
    e3[3] = 1
    assert np.abs(codec.encode(s, basis) - e3).max() < 1e-9


def test_decode_in_span(basis):
    g = np.random.default_rng(0).normal(size=(20, basis.num_coeffs)) * 3
    s = codec.decode(g, basis)
    assert np.abs(codec.decode(codec.encode(s, basis), basis) - s).max() < 1e-6


def test_decode_zero_and_linear(basis):
    assert np.allclose(codec.decode(np.zeros(basis.num_coeffs), basis), basis.mean_strand())
    rng = np.random.default_rng(1)
    ga, gb = rng.normal(size=(2, basis.num_coeffs))
    d0 = codec.decode(np.zeros(basis.num_coeffs), basis)
    lhs = codec.decode(ga + gb, basis) - d0
    rhs = (codec.decode(ga, basis) - d0) + (codec.decode(gb, basis) - d0)
    assert np.abs(lhs - rhs).max() < 1e-9


@given(st.floats(0, 1), st.integers(0, 2 ** 31))
def test_decode_affine_property(alpha, seed):
    b = _PROPERTY_BASIS
    rng = np.random.default_rng(seed)
    ga, gb = rng.normal(size=(2, b.num_coeffs)) * 10
    lhs = codec.decode(alpha * ga + (1 - alpha) * gb, b)
    rhs = alpha * codec.decode(ga, b) + (1 - alpha) * codec.decode(gb, b)
    assert np.abs(lhs - rhs).max() < 1e-9


_PROPERTY_BASIS = codec.fit_basis(synthetic.corpus_strands(
    synthetic.make_corpus(6, 60, np.random.default_rng(9))), 32)


@given(arrays(np.float64, 3, elements=st.floats(-50, 50)))
def test_encoding_translation_invariant(t):
    world = synthetic.make_wig(5, rng=np.random.default_rng(2)).world_points()
    a = HairModel.from_world(list(world))
    b = HairModel.from_world(list(world + t))
    ea = codec.encode(a.points, _PROPERTY_BASIS)
    eb = codec.encode(b.points, _PROPERTY_BASIS)
    assert np.abs(ea - eb).max() < 1e-8 * max(1.0, np.abs(t).max())


def test_decode_dimension_mismatch(basis):
    with pytest.raises(DimensionMismatch):
        codec.decode(np.zeros(basis.num_coeffs + 1), basis)


def test_truncate(basis, corpus):
    g = codec.encode(corpus[0].points[:5], basis)
    assert np.array_equal(codec.truncate(g, basis.num_coeffs), g)
    assert np.allclose(codec.decode(codec.truncate(g, 0), basis), basis.mean_strand())


def test_truncation_error_monotone_per_strand(basis, corpus):
    strands = synthetic.corpus_strands(corpus)
    g = codec.encode(strands, basis)
    errs = [metrics.position_error(codec.decode(codec.truncate(g, n), basis), strands, per_strand=False)
            for n in (5, 10, 15, 30, 64)]
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


@pytest.mark.parametrize("radius,period", [(0.3, 2.0), (0.5, 2.0), (0.5, 3.0)])
def test_truncate_helix_smoother(basis, radius, period):
    helix = synthetic.helix_strand(radius=radius, period=period)
    g = codec.encode(helix, basis)
    k10 = metrics.total_curvature(codec.decode(codec.truncate(g, 10), basis))
    k64 = metrics.total_curvature(codec.decode(g, basis))
    assert k10 < k64


def test_transfer_detail(basis):
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=(2, basis.num_coeffs))
    assert np.array_equal(codec.transfer_detail(a, a), a)
    assert np.array_equal(codec.transfer_detail(a, b, split=0), b)
    straight = codec.encode(synthetic.grow_strands(np.array([[0, 1.0, 0]]), synthetic.Style(), rng)[0], basis)
    helix = codec.encode(synthetic.helix_strand(), basis)
    out = codec.transfer_detail(straight, helix, 10)
    assert np.array_equal(codec.truncate(out, 10), codec.truncate(straight, 10))


def test_basis_orthonormal(basis):
    X = basis.components
    assert np.abs(X @ X.T - np.eye(len(X))).max() <= 1e-8


def test_basis_serialization(basis):
    data = codec.basis_to_bytes(basis)
    back = codec.basis_from_bytes(data)
    assert np.array_equal(back.components, basis.components)
    assert np.array_equal(back.mean, basis.mean)
    assert back.total_variance == basis.total_variance
    with pytest.raises(BadMagic):
        codec.basis_from_bytes(b"XXXX" + data[4:])
    with pytest.raises(Truncated):
        codec.basis_from_bytes(data[:100])


def test_spatial_baseline_round_trip(corpus):
    strands = synthetic.corpus_strands(corpus)
    sb = codec.fit_spatial_basis(strands, 64)
    g = sb.encode(strands[:10])
    assert np.abs(sb.decode(sb.encode(sb.decode(g))) - sb.decode(g)).max() < 1e-9
