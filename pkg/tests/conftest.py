import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from permhair import codec, model, scalp, synthetic

settings.register_profile("permhair", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("permhair")

SMALL_RES = 32
SMALL_EPS = 0.05


@pytest.fixture(scope="session")
def corpus():
    return synthetic.make_corpus(16, 150, np.random.default_rng(11))


@pytest.fixture(scope="session")
def basis(corpus):
    return codec.fit_basis(synthetic.corpus_strands(corpus))


@pytest.fixture(scope="session")
def small_assets(basis):
    """A 32x32 model with 4x4 guides, built from 40 baked wigs."""
    rng = np.random.default_rng(5)
    wigs = synthetic.make_corpus(40, 120, rng)
    textures = [scalp.init_texture(w, basis, SMALL_RES, SMALL_EPS) for w in wigs]
    guides = [model.downsample_guide(t, 8) for t in textures]
    residuals = [scalp.split_channels(t)[1] for t in textures]
    field = model.fit_upsampler([(g, t.data[..., :10]) for g, t in zip(guides, textures)])
    gs = model.fit_guide_space(guides, 24)
    rs = model.fit_residual_space(residuals, 24)
    return model.HairAssets(basis, gs, rs, field)


# --- acceptance summary ---------------------------------------------------------

_RESULTS = {}


def record(criterion: int, name: str, passed: bool, detail: str = ""):
    _RESULTS[criterion] = (name, passed, detail)


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_RESULTS):
        name, passed, detail = _RESULTS[k]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {k:2d} {name}  {detail}")
