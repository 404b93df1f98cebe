import numpy as np
import pytest
from hypothesis import given, strategies as st

from permhair import codec, model, scalp, synthetic
from permhair.errors import BadMagic, RootOffScalp, WrongChannelCount
from permhair.hair_io import HairModel
from permhair.scalp import GeometryTexture, ScalpMap

SCALP = ScalpMap.default()


def _single_strand(uv, seed=0):
    return synthetic.make_wig(len(uv), synthetic.Style.wavy(), np.random.default_rng(seed), uv=uv)


def test_root_on_vertex():
    i = 300
    m = HairModel.from_array(np.zeros((1, 2, 3)), SCALP.vertices[i:i + 1])
    roots = scalp.project_roots(m, SCALP)
    assert np.abs(roots.uv[0] - SCALP.uv[i]).max() < 1e-9


def test_mirror_symmetry():
    uv = np.array([[0.3, 0.6]])
    p, _ = SCALP.uv_to_surface(uv)
    q = p * [-1, 1, 1]
    m = HairModel.from_array(np.zeros((2, 2, 3)), np.vstack([p, q]))
    roots = scalp.project_roots(m, SCALP)
    assert np.abs(roots.uv[1] - [1 - roots.uv[0, 0], roots.uv[0, 1]]).max() < 1e-9


def test_surface_round_trip():
    uv = np.random.default_rng(0).uniform(0, 1, size=(1000, 2))
    p, frames = SCALP.uv_to_surface(uv)
    uv2, dist, *_ = SCALP.project(p)
    p2, _ = SCALP.uv_to_surface(uv2)
    assert dist.max() < 1e-9
    assert np.abs(p2 - p).max() < 1e-5
    # frames are orthonormal with the normal last
    assert np.abs(np.einsum("nij,nik->njk", frames, frames) - np.eye(3)).max() < 1e-9


def test_root_off_scalp():
    m = HairModel.from_array(np.zeros((1, 2, 3)), [[0, 20.0, 0]])
    with pytest.raises(RootOffScalp):
        scalp.project_roots(m, SCALP)


def test_init_empty_model(basis):
    tex = scalp.init_texture(HairModel(), basis, 16)
    assert tex.bald.all()


def test_init_single_strand(basis):
    wig = _single_strand(np.array([[0.5, 0.5]]))
    tex = scalp.init_texture(wig, basis, 256, 0.01)
    centers = tex.texel_centers()
    near = np.linalg.norm(centers - 0.5, axis=-1) <= 0.01
    assert np.array_equal(~tex.bald, near)
    g = codec.encode(wig.points, basis)[0]
    assert np.array_equal(tex.data[near], np.broadcast_to(g, (near.sum(), basis.num_coeffs)))


def test_init_voronoi_matches_brute_force(basis):
    uv = np.array([[0.42, 0.5], [0.55, 0.53]])
    wig = _single_strand(uv, 1)
    tex = scalp.init_texture(wig, basis, 64, 0.2)
    g = codec.encode(wig.points, basis)
    centers = tex.texel_centers().reshape(-1, 2)
    d = np.linalg.norm(centers[:, None] - uv[None], axis=-1)
    owner = np.argmin(d, axis=1)
    hair = d.min(axis=1) <= 0.2
    flat = tex.data.reshape(-1, basis.num_coeffs)
    assert np.array_equal(~tex.bald.reshape(-1), hair)
    assert np.array_equal(flat[hair], g[owner[hair]])
    assert np.array_equal(flat[~hair], np.broadcast_to(basis.bald_coeffs(), ((~hair).sum(), basis.num_coeffs)))


def test_nearest_tie_goes_to_lower_index():
    _, owner = scalp.nearest_roots(np.array([[0.5, 0.5]]), np.array([[0.6, 0.5], [0.4, 0.5], [0.5, 0.6]]))
    assert owner[0] == 0


def test_sample_at_texel_center(basis):
    wig = synthetic.make_wig(60, rng=np.random.default_rng(2))
    tex = scalp.init_texture(wig, basis, 32, 0.05)
    centers = tex.texel_centers().reshape(-1, 2)
    coeffs, bald = scalp.sample(tex, centers)
    assert np.array_equal(coeffs, tex.data.reshape(-1, basis.num_coeffs))
    assert np.array_equal(bald, tex.bald.reshape(-1))


def test_sample_exact_on_non_colliding_roots(basis):
    wig = synthetic.make_wig(80, rng=np.random.default_rng(3))
    tex = scalp.init_texture(wig, basis, 64, 0.05)
    row, col = scalp.texel_index(wig.roots_uv, 64, 64)
    centers = tex.texel_centers()[row, col]
    _, owner = scalp.nearest_roots(centers, wig.roots_uv)
    own = owner == np.arange(len(wig))
    coeffs, _ = scalp.sample(tex, wig.roots_uv)
    assert own.sum() > 40
    assert np.array_equal(coeffs[own], codec.encode(wig.points, basis)[own])


def test_bald_roots_decode_to_root(basis):
    wig = synthetic.make_wig(30, rng=np.random.default_rng(4))
    tex = scalp.init_texture(wig, basis, 32, 0.03)
    uv = np.array([[0.02, 0.5], [0.5, 0.98]])
    out = model.decode_texture_at(tex, uv, basis, keep_bald=True)
    assert np.all(out.points == 0)
    assert max(np.linalg.norm(np.diff(s, axis=0), axis=1).sum() for s in out.points) < 1e-6
    assert len(model.decode_texture_at(tex, uv, basis)) == 0


def test_dense_sampling_counts_non_bald_roots(basis):
    wig = synthetic.make_wig(200, rng=np.random.default_rng(5))
    tex = scalp.init_texture(wig, basis, 64, 0.03)
    uv = synthetic.sample_root_uv(5000, np.random.default_rng(6), radius=0.49)
    _, bald = scalp.sample(tex, uv)
    out = model.decode_texture_at(tex, uv, basis)
    assert len(out) == int((~bald).sum())


def test_optimize_zero_iterations(basis):
    wig = synthetic.make_wig(10, rng=np.random.default_rng(7))
    tex = scalp.init_texture(wig, basis, 32, 0.05)
    out, trace = scalp.optimize_texture(tex, wig, basis, iters=0)
    assert out is tex and len(trace) == 0


def test_optimize_single_strand(basis):
    wig = _single_strand(np.array([[0.45, 0.55]]), 8)
    # an in-span target, so the optimum is exactly representable
    target = HairModel.from_array(codec.decode(codec.encode(wig.points, basis), basis), wig.roots, wig.roots_uv)
    tex = scalp.init_texture(wig, basis, 64, 0.02)
    noisy = scalp.with_data(tex, tex.data + 0.05 * np.random.default_rng(0).normal(size=tex.data.shape))
    start = model.decode_texture_at(noisy, wig.roots_uv, basis)
    assert np.linalg.norm(start.points - target.points, axis=-1).mean() > 1e-3
    out, trace = scalp.optimize_texture(noisy, target, basis, iters=500, lr=1e-3)
    rec = model.decode_texture_at(out, wig.roots_uv, basis)
    assert np.linalg.norm(rec.points - target.points, axis=-1).mean() < 1e-3
    # once at the optimum the L1 loss jitters at the scale of one Adam step
    assert np.all(np.diff(trace[::50]) <= 1e-3) and trace[-1] < trace[0]


def test_split_concat_bijection(basis):
    data = np.random.default_rng(9).normal(size=(8, 8, 64))
    tex = GeometryTexture(data, np.zeros((8, 8)))
    low, res = scalp.split_channels(tex)
    assert low.channels == 10 and res.channels == 54
    assert np.array_equal(scalp.concat_channels(low, res).data, data)
    with pytest.raises(WrongChannelCount):
        scalp.split_channels(GeometryTexture(data[..., :30], np.zeros((8, 8))))


def test_low_channels_decode_to_truncated(basis):
    wig = synthetic.make_wig(40, rng=np.random.default_rng(10))
    tex = scalp.init_texture(wig, basis, 32, 0.05)
    low, res = scalp.split_channels(tex)
    zero = GeometryTexture(np.zeros_like(res.data), res.baldness)
    smooth = scalp.concat_channels(low, zero)
    assert np.array_equal(smooth.data, codec.truncate(tex.data, 10))


def test_texel_swap_matches_transfer_detail(basis):
    a = scalp.init_texture(synthetic.make_wig(50, synthetic.Style.straight(), np.random.default_rng(1)), basis, 16, 0.1)
    b = scalp.init_texture(synthetic.make_wig(50, synthetic.Style.curly(), np.random.default_rng(2)), basis, 16, 0.1)
    mixed = scalp.concat_channels(scalp.split_channels(a)[0], scalp.split_channels(b)[1])
    assert np.array_equal(mixed.data, codec.transfer_detail(a.data, b.data, 10))


def test_texture_serialization(basis):
    tex = scalp.init_texture(synthetic.make_wig(20, rng=np.random.default_rng(0)), basis, 16, 0.1)
    data = scalp.texture_to_bytes(tex)
    back = scalp.texture_from_bytes(data)
    assert np.array_equal(back.data, tex.data.astype(np.float32))
    assert np.array_equal(back.bald, tex.bald)
    with pytest.raises(BadMagic):
        scalp.texture_from_bytes(b"NOPE" + data[4:])
    png = scalp.texture_preview_png(tex)
    assert png[:8] == b"\x89PNG\r\n\x1a\n"


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=30), st.integers(4, 40))
def test_init_leaves_no_unassigned_texel(uv, res):
    uv = np.clip(np.array(uv), 0.08, 0.92)
    wig = synthetic.make_wig(len(uv), synthetic.Style.straight(), np.random.default_rng(0), uv=uv)
    tex = scalp.init_texture(wig, _BASIS, res, 0.05)
    g = codec.encode(wig.points, _BASIS)
    flat = tex.data.reshape(-1, _BASIS.num_coeffs)
    hair = ~tex.bald.reshape(-1)
    # every hair texel holds some root's vector, every other texel the bald vector
    for row in flat[hair]:
        assert np.any(np.all(g == row, axis=1))
    assert np.all(flat[~hair] == _BASIS.bald_coeffs())


_BASIS = codec.fit_basis(synthetic.corpus_strands(synthetic.make_corpus(6, 60, np.random.default_rng(9))), 32)
