import numpy as np
import pytest

from permhair import fitting, model, scalp, synthetic
from permhair.errors import AssetMismatch, BadMagic, EmptyModel, Truncated
from permhair.hair_io import HairModel

from conftest import SMALL_EPS, SMALL_RES


@pytest.fixture(scope="module")
def target(basis):
    wig = synthetic.make_corpus(1, 150, np.random.default_rng(99))[0]
    return scalp.init_texture(wig, basis, SMALL_RES, SMALL_EPS)


def _fd(f, x, idx, h=1e-6):
    out = []
    for i in idx:
        e = np.zeros_like(x)
        e[i] = h
        out.append((f(x + e) - f(x - e)) / (2 * h))
    return np.array(out)


@pytest.mark.parametrize("huber", [1e-3, 5.0])
def test_gradient_matches_finite_differences(small_assets, target, huber):
    obj = fitting.ParameterizationObjective(target, small_assets, geo_weight=1.0, huber=huber)
    rng = np.random.default_rng(0)
    theta = model.sample_params(small_assets.guide_space, rng) * 0.3
    beta = model.sample_params(small_assets.residual_space, rng) * 0.3
    _, gt, gb = obj.value_and_grad(theta, beta)
    it = rng.choice(small_assets.guide_space.active, 8, replace=False)
    ib = rng.choice(small_assets.residual_space.active, 8, replace=False)
    h = 1e-7 * max(1.0, np.abs(theta).max())
    fd_t = _fd(lambda t: obj.value(t, beta), theta, it, h)
    fd_b = _fd(lambda b: obj.value(theta, b), beta, ib, h)
    scale = max(1.0, np.abs(fd_t).max(), np.abs(fd_b).max())
    assert np.abs(fd_t - gt[it]).max() / scale < 1e-4
    assert np.abs(fd_b - gb[ib]).max() / scale < 1e-4


def test_texture_term_is_l1_norm(small_assets, target):
    obj = fitting.ParameterizationObjective(target, small_assets, geo_weight=0.0, huber=1e-12)
    theta = np.zeros(small_assets.guide_space.dim)
    beta = np.zeros(small_assets.residual_space.dim)
    pred = small_assets.texture(theta, beta).data
    assert obj.value(theta, beta) == pytest.approx(np.abs(pred - target.data).sum(), rel=1e-9)
    assert obj.texture_l1(theta, beta) == pytest.approx(np.abs(pred - target.data).mean(), rel=1e-12)


def test_zero_iterations(small_assets, target):
    r = fitting.parameterize_hair(target, small_assets, warmup=0, joint=0)
    assert not r.theta_star.any() and not r.beta_star.any()
    assert len(r.loss_trace) == 0
    assert r.trace_text().strip() == f"0 {r.final_objective:.12g}"


def test_warmup_leaves_beta_at_zero(small_assets, target):
    r = fitting.parameterize_hair(target, small_assets, warmup=20, joint=0, full_report=False)
    assert not r.beta_star.any()
    assert r.theta_star.any()


def test_deterministic(small_assets, target):
    a = fitting.parameterize_hair(target, small_assets, warmup=10, joint=20, full_report=False)
    b = fitting.parameterize_hair(target, small_assets, warmup=10, joint=20, full_report=False)
    assert np.array_equal(a.theta_star, b.theta_star) and np.array_equal(a.beta_star, b.beta_star)
    assert np.array_equal(a.loss_trace, b.loss_trace)


def test_checkpoints_non_increasing(small_assets, target):
    r = fitting.parameterize_hair(target, small_assets, warmup=100, joint=300, full_report=False)
    trace = np.append(r.loss_trace, r.final_objective)
    checkpoints = trace[::100]
    assert np.all(np.diff(checkpoints) <= 1e-6 * max(1.0, checkpoints[0]))
    assert r.final_objective <= trace[0]
    assert r.texture_error < np.abs(small_assets.texture(np.zeros(24), np.zeros(24)).data - target.data).mean()


def test_in_span_target_recovered(small_assets):
    rng = np.random.default_rng(3)
    theta = model.sample_params(small_assets.guide_space, rng)
    beta = model.sample_params(small_assets.residual_space, rng)
    tgt = small_assets.texture(theta, beta)
    r = fitting.parameterize_hair(tgt, small_assets, warmup=100, joint=400, full_report=True)
    base = np.abs(small_assets.texture(np.zeros(24), np.zeros(24)).data - tgt.data).mean()
    assert r.texture_error < 0.05 * base
    assert r.final_report.position_error >= 0


def test_mismatched_target(small_assets):
    bad = scalp.GeometryTexture(np.zeros((16, 16, 64)), np.zeros((16, 16)))
    with pytest.raises(AssetMismatch):
        fitting.parameterize_hair(bad, small_assets, warmup=1, joint=1)


def test_embed_strand_set(small_assets):
    wig = synthetic.make_corpus(1, 100, np.random.default_rng(21))[0]
    r = fitting.embed_strand_set(wig, small_assets, epsilon=SMALL_EPS, texture_iters=20,
                                 warmup=20, joint=40, full_report=False)
    assert r.theta_star.shape == (24,) and r.beta_star.shape == (24,)
    assert r.extras["texture"].data.shape == (SMALL_RES, SMALL_RES, 64)
    assert np.isfinite(r.extras["strand_report"].position_error)
    with pytest.raises(EmptyModel):
        fitting.embed_strand_set(HairModel.from_array(np.zeros((0, 100, 3)), np.zeros((0, 3))), small_assets)


def test_params_round_trip():
    rng = np.random.default_rng(0)
    theta, beta = rng.normal(size=512), rng.normal(size=7)
    data = fitting.params_to_bytes(theta, beta)
    assert len(data) == 12 + 8 * 519
    t2, b2 = fitting.params_from_bytes(data)
    assert np.array_equal(t2, theta) and np.array_equal(b2, beta)
    with pytest.raises(BadMagic):
        fitting.params_from_bytes(b"XXXX" + data[4:])
    with pytest.raises(Truncated):
        fitting.params_from_bytes(data[:-1])
