"""Procedural wigs on the default scalp, so everything runs without datasets.

Strands leave the scalp along its normal, bend toward a backward-leaning
"down" direction, sway along a few random long-wavelength bends, and carry an
optional helical curl whose amplitude ramps up from zero at the root.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hair_io import DEFAULT_POINTS, HairModel
from .scalp import ScalpMap


@dataclass(frozen=True)
class Style:
    length: float = 10.0
    stiffness: float = 3.0
    curl_radius: float = 0.0
    curl_period: float = 2.5
    length_jitter: float = 0.1
    sway: float = 0.8

    @classmethod
    def straight(cls, **kw):
        return cls(**kw)

    @classmethod
    def wavy(cls, **kw):
        return cls(**{"curl_radius": 0.25, "curl_period": 4.0, **kw})

    @classmethod
    def curly(cls, **kw):
        return cls(**{"curl_radius": 0.5, "curl_period": 2.0, **kw})


def random_style(rng: np.random.Generator) -> Style:
    kind = rng.integers(3)
    base = dict(length=rng.uniform(6.0, 14.0), stiffness=rng.uniform(1.5, 5.0))
    if kind == 0:
        return Style(**base)
    if kind == 1:
        return Style(curl_radius=rng.uniform(0.1, 0.3), curl_period=rng.uniform(3.0, 5.0), **base)
    return Style(curl_radius=rng.uniform(0.3, 0.6), curl_period=rng.uniform(1.8, 3.0), **base)


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def grow_strands(normals: np.ndarray, style: Style, rng: np.random.Generator,
                 L: int = DEFAULT_POINTS) -> np.ndarray:
    """Root-relative strands (N, L, 3) for roots with the given outward normals."""
    normals = _unit(np.asarray(normals, dtype=np.float64).reshape(-1, 3))
    n = len(normals)
    length = style.length * (1.0 + style.length_jitter * rng.uniform(-1, 1, n))
    phase = rng.uniform(0, 2 * np.pi, n)
    t = np.linspace(0.0, 1.0, L)
    s = length[:, None] * t[None, :]

    horiz = normals * np.array([1.0, 0.0, 1.0]) + np.array([0.0, 0.0, -0.3])
    horiz = _unit(horiz + 1e-9)
    down = _unit(0.6 * horiz + np.array([0.0, -1.0, 0.0]))
    k = (s / style.stiffness)[..., None]
    d = _unit(normals[:, None, :] + k * down[:, None, :])

    ds = (length / (L - 1))[:, None, None]
    base = np.concatenate([np.zeros((n, 1, 3)), np.cumsum(d[:, :-1] * ds, axis=1)], axis=1)
    if style.sway > 0:
        # a few long-wavelength bends with random directions, zero at the root
        for m in range(1, 6):
            amp = style.sway / np.sqrt(m) * rng.normal(size=(n, 1, 3))
            base = base + amp * np.sin(0.5 * np.pi * m * t)[None, :, None]
    if style.curl_radius <= 0:
        return base

    e1 = _unit(np.cross(d, horiz[:, None, :]) + 1e-12)
    e2 = np.cross(d, e1)
    ang = 2 * np.pi * s / style.curl_period + phase[:, None]
    amp = style.curl_radius * (1.0 - np.exp(-s / 0.75))
    curl = amp[..., None] * (np.cos(ang)[..., None] * e1 + np.sin(ang)[..., None] * e2)
    out = base + curl
    return out - out[:, :1]


def sample_root_uv(n: int, rng: np.random.Generator, radius: float = 0.42) -> np.ndarray:
    """Uniform roots in a disk of the uv square (the hair-bearing region)."""
    r = radius * np.sqrt(rng.uniform(0, 1, n))
    a = rng.uniform(0, 2 * np.pi, n)
    return np.stack([0.5 + r * np.cos(a), 0.5 + r * np.sin(a)], axis=1)


def make_wig(n_strands: int, style: Style | None = None, rng: np.random.Generator | None = None,
             scalp: ScalpMap | None = None, L: int = DEFAULT_POINTS, uv=None) -> HairModel:
    rng = np.random.default_rng(0) if rng is None else rng
    scalp = ScalpMap.default() if scalp is None else scalp
    style = random_style(rng) if style is None else style
    uv = sample_root_uv(n_strands, rng) if uv is None else np.asarray(uv, dtype=np.float64)
    pos, frames = scalp.uv_to_surface(uv)
    strands = grow_strands(frames[..., 2], style, rng, L)
    return HairModel.from_array(strands, pos, uv)


def make_corpus(n_wigs: int, strands_per_wig: int, rng: np.random.Generator | None = None,
                L: int = DEFAULT_POINTS, scalp: ScalpMap | None = None) -> list:
    rng = np.random.default_rng(0) if rng is None else rng
    scalp = ScalpMap.default() if scalp is None else scalp
    return [make_wig(strands_per_wig, random_style(rng), rng, scalp, L) for _ in range(n_wigs)]


def corpus_strands(wigs) -> np.ndarray:
    return np.concatenate([w.points for w in wigs], axis=0)


def helix_strand(L: int = DEFAULT_POINTS, length: float = 10.0, radius: float = 0.5,
                 period: float = 2.0) -> np.ndarray:
    """Root-relative helix hanging along -y."""
    s = np.linspace(0.0, length, L)
    a = 2 * np.pi * s / period
    pts = np.stack([radius * (np.cos(a) - 1.0), -s, radius * np.sin(a)], axis=1)
    return pts
