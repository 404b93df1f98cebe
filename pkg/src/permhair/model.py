"""Linear parametric hair model.

Guide textures are produced by a PCA space over ``theta``, upsampled by a
per-texel blend of the four bilinear parent guide texels plus a residual, and
concatenated (low channels first) with a residual texture from a second PCA
space over ``beta``. Sampling at roots and decoding with the strand basis gives
the hair.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .codec import GUIDE_COEFFS, StrandBasis, basis_from_bytes, basis_to_bytes, decode
from .errors import (
    AssetMismatch,
    BadMagic,
    DimensionMismatch,
    EmptyCorpus,
    IndexOutOfRange,
    InputError,
    Truncated,
    TooFewSamples,
    WrongShape,
)
from .hair_io import HairModel
from .scalp import GeometryTexture, RootSet, ScalpMap, sample

DEFAULT_DIM = 512
DEFAULT_GUIDE_FACTOR = 8
REG_WEIGHT = 0.1


def _data(tex) -> np.ndarray:
    return tex.data if isinstance(tex, GeometryTexture) else np.asarray(tex, dtype=np.float64)


def _bald(tex) -> np.ndarray:
    if isinstance(tex, GeometryTexture):
        return tex.baldness
    return np.zeros(np.shape(tex)[:2])


# --- guide extraction and upsampling -------------------------------------------

def downsample_guide(texture: GeometryTexture, factor: int = DEFAULT_GUIDE_FACTOR,
                     channels: int = GUIDE_COEFFS) -> GeometryTexture:
    """Masked block mean of the low channels; fully bald blocks become bald guide texels."""
    H, W, C = texture.data.shape
    if H % factor or W % factor or C < channels:
        raise WrongShape(f"texture {texture.data.shape} cannot be reduced by {factor} to {channels} channels")
    Hg, Wg = H // factor, W // factor
    x = texture.data[..., :channels].reshape(Hg, factor, Wg, factor, channels)
    hair = (~texture.bald).reshape(Hg, factor, Wg, factor).astype(np.float64)
    count = hair.sum(axis=(1, 3))
    masked = (x * hair[..., None]).sum(axis=(1, 3))
    plain = x.mean(axis=(1, 3))
    guide = np.where(count[..., None] > 0, masked / np.maximum(count, 1)[..., None], plain)
    return GeometryTexture(guide, (count == 0).astype(np.float64))


def upsample_nearest(guide, factor: int = DEFAULT_GUIDE_FACTOR) -> GeometryTexture:
    g = _data(guide)
    if g.ndim != 3:
        raise WrongShape(f"guide must be (H, W, C), got {g.shape}")
    up = np.repeat(np.repeat(g, factor, axis=0), factor, axis=1)
    bald = np.repeat(np.repeat(_bald(guide), factor, axis=0), factor, axis=1)
    return GeometryTexture(up, bald)


def _bilinear_axis(n_out: int, n_in: int):
    # texel-center aligned; coordinate clamped to [0, n_in - 1] and the left
    # parent kept <= n_in - 2 so the two parents are always distinct
    g = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    g = np.clip(g, 0.0, n_in - 1)
    if n_in == 1:
        return np.zeros(n_out, dtype=np.int64), np.zeros(n_out, dtype=np.int64), np.zeros(n_out)
    i0 = np.minimum(np.floor(g).astype(np.int64), n_in - 2)
    return i0, i0 + 1, g - i0


@dataclass(frozen=True)
class UpsamplerField:
    """Per-output-texel parent indices, blend weights and residual vectors."""

    neighbors: np.ndarray  # (H, W, 4) flat indices into the guide grid
    weights: np.ndarray  # (H, W, 4)
    delta: np.ndarray  # (H, W, C)
    guide_shape: tuple

    @property
    def shape(self) -> tuple:
        return self.neighbors.shape[:2]

    def matrix(self) -> sp.csr_matrix:
        """Sparse (H*W, Hg*Wg) blend operator: ``out = M @ guide_flat + delta``."""
        H, W = self.shape
        rows = np.repeat(np.arange(H * W), 4)
        return sp.csr_matrix((self.weights.reshape(-1), (rows, self.neighbors.reshape(-1))),
                             shape=(H * W, self.guide_shape[0] * self.guide_shape[1]))


def bilinear_field(guide_shape, out_shape, channels: int = GUIDE_COEFFS) -> UpsamplerField:
    Hg, Wg = guide_shape
    H, W = out_shape
    r0, r1, fr = _bilinear_axis(H, Hg)
    c0, c1, fc = _bilinear_axis(W, Wg)
    R0, C0 = np.meshgrid(r0, c0, indexing="ij")
    R1, C1 = np.meshgrid(r1, c1, indexing="ij")
    FR, FC = np.meshgrid(fr, fc, indexing="ij")
    nb = np.stack([R0 * Wg + C0, R0 * Wg + C1, R1 * Wg + C0, R1 * Wg + C1], axis=-1)
    w = np.stack([(1 - FR) * (1 - FC), (1 - FR) * FC, FR * (1 - FC), FR * FC], axis=-1)
    return UpsamplerField(nb, w, np.zeros((H, W, channels)), (Hg, Wg))


def blend_upsample(guide, field: UpsamplerField) -> GeometryTexture:
    """Weighted sum of the four indexed guide vectors plus the residual, per texel."""
    g = _data(guide)
    Hg, Wg, C = g.shape
    if (Hg, Wg) != tuple(field.guide_shape):
        raise WrongShape(f"guide {g.shape[:2]} does not match field guide shape {field.guide_shape}")
    if field.delta.shape[-1] != C:
        raise WrongShape(f"field residual has {field.delta.shape[-1]} channels, guide has {C}")
    nb = field.neighbors
    if nb.min(initial=0) < 0 or nb.max(initial=0) >= Hg * Wg:
        raise IndexOutOfRange("upsampler neighbor index outside the guide grid")
    flat = g.reshape(-1, C)
    out = (field.weights[..., None] * flat[nb]).sum(axis=-2) + field.delta
    H, W = field.shape
    bald = _bald(guide)
    rows = np.minimum((np.arange(H) * Hg) // H, Hg - 1)
    cols = np.minimum((np.arange(W) * Wg) // W, Wg - 1)
    return GeometryTexture(out, bald[np.ix_(rows, cols)])


def upsample_bilinear(guide, factor: int = DEFAULT_GUIDE_FACTOR) -> GeometryTexture:
    g = _data(guide)
    if g.ndim != 3:
        raise WrongShape(f"guide must be (H, W, C), got {g.shape}")
    Hg, Wg, C = g.shape
    return blend_upsample(guide, bilinear_field((Hg, Wg), (Hg * factor, Wg * factor), C))


def fit_upsampler(pairs, reg: float = REG_WEIGHT, rcond: float = 1e-10) -> UpsamplerField:
    """Per-texel ridge least squares for blend weights and residual.

    Minimizes ``sum_pairs |w . parents + delta - target|^2 + reg * |delta|^2``
    with parents fixed to the bilinear ones; the minimum-norm solution is
    taken where the system is singular.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyCorpus("no (guide, target) pairs to fit")
    g0, t0 = _data(pairs[0][0]), _data(pairs[0][1])
    Hg, Wg, C = g0.shape
    H, W, Ct = t0.shape
    if Ct != C:
        raise WrongShape(f"guide has {C} channels, target {Ct}")
    field = bilinear_field((Hg, Wg), (H, W), C)
    nb = field.neighbors
    A_ww = np.zeros((H, W, 4, 4))
    A_wd = np.zeros((H, W, 4, C))
    b_w = np.zeros((H, W, 4))
    b_d = np.zeros((H, W, C))
    for guide, target in pairs:
        g, t = _data(guide), _data(target)
        if g.shape != (Hg, Wg, C) or t.shape != (H, W, C):
            raise WrongShape("inconsistent shapes across training pairs")
        G = g.reshape(-1, C)[nb]  # (H, W, 4, C)
        A_ww += np.einsum("hwnc,hwmc->hwnm", G, G)
        A_wd += G
        b_w += np.einsum("hwnc,hwc->hwn", G, t)
        b_d += t
    n = len(pairs)
    K = 4 + C
    A = np.zeros((H, W, K, K))
    A[..., :4, :4] = A_ww
    A[..., :4, 4:] = A_wd
    A[..., 4:, :4] = np.swapaxes(A_wd, -1, -2)
    A[..., 4:, 4:] = (n + reg) * np.eye(C)
    b = np.concatenate([b_w, b_d], axis=-1)
    z = np.einsum("hwij,hwj->hwi", np.linalg.pinv(A, rcond=rcond, hermitian=True), b)
    return UpsamplerField(nb, z[..., :4], z[..., 4:], (Hg, Wg))


# --- PCA texture spaces ------------------------------------------------------------

@dataclass(frozen=True)
class TexturePCA:
    """PCA over flattened textures (optionally with a trailing mask channel).

    ``components`` holds only the active, orthonormal rows; ``dim`` may exceed
    their count, in which case the remaining coefficients are inert padding.
    """

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    dim: int
    shape: tuple  # (H, W, C) of the texture channels, mask excluded
    has_mask: bool
    total_variance: float = 0.0

    @property
    def active(self) -> int:
        return self.components.shape[0]

    @property
    def padded(self) -> bool:
        return self.dim > self.active

    @property
    def std(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[: self.active] = np.sqrt(np.clip(self.explained_variance[: self.active], 0, None))
        return out

    def vectorize(self, texture: GeometryTexture) -> np.ndarray:
        d = _data(texture)
        if d.shape != tuple(self.shape):
            raise WrongShape(f"texture {d.shape} does not match space {self.shape}")
        if self.has_mask:
            d = np.concatenate([d, _bald(texture)[..., None]], axis=-1)
        return d.reshape(-1)

    def encode(self, texture: GeometryTexture) -> np.ndarray:
        out = np.zeros(self.dim)
        out[: self.active] = self.components @ (self.vectorize(texture) - self.mean)
        return out

    def decode_vector(self, params) -> np.ndarray:
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.dim,):
            raise DimensionMismatch(f"expected {self.dim} parameters, got {params.shape}")
        return self.mean + params[: self.active] @ self.components

    def decode(self, params) -> GeometryTexture:
        H, W, C = self.shape
        vec = self.decode_vector(params).reshape(H, W, C + int(self.has_mask))
        if self.has_mask:
            return GeometryTexture(vec[..., :C], np.clip(vec[..., C], 0.0, 1.0))
        return GeometryTexture(vec, np.zeros((H, W)))


def fit_texture_space(textures, dim: int = DEFAULT_DIM, with_mask: bool = True) -> TexturePCA:
    textures = list(textures)
    if len(textures) < 2:
        raise TooFewSamples(f"need at least 2 textures, got {len(textures)}")
    shape = _data(textures[0]).shape
    D = int(np.prod(shape[:2])) * (shape[2] + int(with_mask))
    X = np.empty((len(textures), D))
    for i, t in enumerate(textures):
        d = _data(t)
        if d.shape != shape:
            raise WrongShape(f"texture {i} has shape {d.shape}, expected {shape}")
        if with_mask:
            d = np.concatenate([d, _bald(t)[..., None]], axis=-1)
        X[i] = d.reshape(-1)
    mean = X.mean(axis=0)
    X -= mean
    n = len(textures)
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    del X
    var = s ** 2 / (n - 1)
    # rounding in the centered data leaves ~eps^2 * |mean|^2 of spurious variance
    noise = 1e-24 * max(1.0, float(mean @ mean))
    live = var > max(1e-12 * var[0], noise)
    total = float(var[live].sum())
    r = min(int(live.sum()), dim)
    comps = np.ascontiguousarray(vt[:r])
    idx = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(r), idx])
    comps *= np.where(signs == 0, 1.0, signs)[:, None]
    return TexturePCA(mean, comps, var[:r].copy(), dim, tuple(shape), with_mask, total)


def fit_guide_space(guides, dim: int = DEFAULT_DIM) -> TexturePCA:
    return fit_texture_space(guides, dim, with_mask=True)


def fit_residual_space(residuals, dim: int = DEFAULT_DIM) -> TexturePCA:
    return fit_texture_space(residuals, dim, with_mask=True)


def synth_guide(theta, space: TexturePCA) -> GeometryTexture:
    return space.decode(theta)


def synth_residual(beta, space: TexturePCA) -> GeometryTexture:
    return space.decode(beta)


def sample_params(space: TexturePCA, rng: np.random.Generator, scaled: bool = True) -> np.ndarray:
    """Gaussian draw; ``scaled`` multiplies by each component's standard deviation.

    Unscaled draws sit almost on the mean texture (the collapse seen with naive sampling).
    """
    z = rng.standard_normal(space.dim)
    return z * space.std if scaled else z


# --- assembled model -----------------------------------------------------------------

@dataclass(frozen=True)
class HairAssets:
    basis: StrandBasis
    guide_space: TexturePCA
    residual_space: TexturePCA
    upsampler: UpsamplerField
    split: int = GUIDE_COEFFS

    def __post_init__(self):
        H, W, C = self.residual_space.shape
        if self.upsampler.shape != (H, W):
            raise AssetMismatch(f"upsampler output {self.upsampler.shape} vs residual {H}x{W}")
        if tuple(self.upsampler.guide_shape) != tuple(self.guide_space.shape[:2]):
            raise AssetMismatch("upsampler guide grid does not match guide space")
        if self.guide_space.shape[2] != self.split or C + self.split != self.basis.num_coeffs:
            raise AssetMismatch("channel split does not match the strand basis")

    @property
    def resolution(self) -> tuple:
        return self.residual_space.shape[:2]

    @property
    def guide_resolution(self) -> tuple:
        return self.guide_space.shape[:2]

    def low_texture(self, theta) -> GeometryTexture:
        return blend_upsample(synth_guide(theta, self.guide_space), self.upsampler)

    def texture(self, theta, beta) -> GeometryTexture:
        """Full 64-channel texture; baldness comes from the residual space's mask."""
        low = self.low_texture(theta)
        res = synth_residual(beta, self.residual_space)
        return GeometryTexture(np.concatenate([low.data, res.data], axis=-1), res.baldness)


def decode_texture_at(texture: GeometryTexture, roots, basis: StrandBasis, scalp: ScalpMap | None = None,
                      keep_bald: bool = False) -> HairModel:
    """Sample a texture at roots and decode; bald roots are dropped unless ``keep_bald``."""
    if not isinstance(roots, RootSet):
        roots = RootSet.from_uv(scalp or ScalpMap.default(), roots)
    if len(roots) == 0:
        return HairModel()
    coeffs, bald = sample(texture, roots.uv)
    keep = np.ones(len(roots), dtype=bool) if keep_bald else ~bald
    strands = decode(coeffs[keep], basis)
    if keep_bald:
        strands[bald] = 0.0
    return HairModel.from_array(strands, roots.positions[keep], roots.uv[keep])


def evaluate_model(theta, beta, roots, assets: HairAssets, scalp: ScalpMap | None = None) -> HairModel:
    """Synthesize, upsample, concatenate, sample at roots and decode."""
    return decode_texture_at(assets.texture(theta, beta), roots, assets.basis, scalp)


# --- serialization ---------------------------------------------------------------------

_PTP_HEAD = struct.Struct("<4sIIIIII")
_PUF_HEAD = struct.Struct("<4sIIIII")


def space_to_bytes(space: TexturePCA) -> bytes:
    H, W, C = space.shape
    return b"".join([
        _PTP_HEAD.pack(b"PTP1", space.dim, space.active, H, W, C, int(space.has_mask)),
        np.array([space.total_variance], "<f8").tobytes(),
        space.mean.astype("<f8").tobytes(),
        space.components.astype("<f8").tobytes(),
        space.explained_variance.astype("<f8").tobytes(),
    ])


def space_from_bytes(data: bytes) -> TexturePCA:
    if data[:4] != b"PTP1":
        raise BadMagic(f"expected b'PTP1', got {bytes(data[:4])!r}")
    if len(data) < _PTP_HEAD.size:
        raise Truncated("PTP1 header truncated")
    _, dim, active, H, W, C, has_mask = _PTP_HEAD.unpack_from(data, 0)
    D = H * W * (C + has_mask)
    count = 1 + D + active * D + active
    need = _PTP_HEAD.size + 8 * count
    if len(data) < need:
        raise Truncated(f"PTP1 payload needs {need} bytes, got {len(data)}")
    a = np.frombuffer(data, "<f8", count, _PTP_HEAD.size).astype(np.float64)
    mean = a[1:1 + D]
    comps = a[1 + D:1 + D + active * D].reshape(active, D)
    var = a[1 + D + active * D:]
    return TexturePCA(mean, comps, var, dim, (H, W, C), bool(has_mask), float(a[0]))


def upsampler_to_bytes(field: UpsamplerField) -> bytes:
    H, W = field.shape
    C = field.delta.shape[-1]
    Hg, Wg = field.guide_shape
    return b"".join([
        _PUF_HEAD.pack(b"PUF1", H, W, Hg, Wg, C),
        field.neighbors.astype("<i4").tobytes(),
        field.weights.astype("<f8").tobytes(),
        field.delta.astype("<f8").tobytes(),
    ])


def upsampler_from_bytes(data: bytes) -> UpsamplerField:
    if data[:4] != b"PUF1":
        raise BadMagic(f"expected b'PUF1', got {bytes(data[:4])!r}")
    if len(data) < _PUF_HEAD.size:
        raise Truncated("PUF1 header truncated")
    _, H, W, Hg, Wg, C = _PUF_HEAD.unpack_from(data, 0)
    off = _PUF_HEAD.size
    need = off + 4 * H * W * 4 + 8 * H * W * 4 + 8 * H * W * C
    if len(data) < need:
        raise Truncated(f"PUF1 payload needs {need} bytes, got {len(data)}")
    nb = np.frombuffer(data, "<i4", H * W * 4, off).reshape(H, W, 4).astype(np.int64)
    off += 4 * H * W * 4
    w = np.frombuffer(data, "<f8", H * W * 4, off).reshape(H, W, 4).astype(np.float64)
    off += 8 * H * W * 4
    d = np.frombuffer(data, "<f8", H * W * C, off).reshape(H, W, C).astype(np.float64)
    return UpsamplerField(nb, w, d, (Hg, Wg))


ASSET_FILES = {
    "basis": "basis.psb",
    "guide_space": "guide.ptp",
    "residual_space": "residual.ptp",
    "upsampler": "upsampler.puf",
}
MANIFEST = "manifest.txt"
FORMAT_VERSION = 1


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_manifest(directory) -> None:
    """Regenerate the manifest from whichever asset files are present."""
    directory = Path(directory)
    lines = [f"format_version={FORMAT_VERSION}", "concat_order=low,residual"]
    if (directory / ASSET_FILES["basis"]).exists():
        b = basis_from_bytes((directory / ASSET_FILES["basis"]).read_bytes())
        lines += [f"points={b.L}", f"strand_coeffs={b.num_coeffs}"]
    for key, label in (("guide_space", "theta"), ("residual_space", "beta")):
        p = directory / ASSET_FILES[key]
        if p.exists():
            s = space_from_bytes(p.read_bytes())
            lines += [f"{label}_dim={s.dim}", f"{label}_active={s.active}",
                      f"{label}_shape={'x'.join(map(str, s.shape))}"]
    p = directory / ASSET_FILES["upsampler"]
    if p.exists():
        f = upsampler_from_bytes(p.read_bytes())
        lines += [f"upsampler_shape={f.shape[0]}x{f.shape[1]}",
                  f"upsampler_guide_shape={f.guide_shape[0]}x{f.guide_shape[1]}"]
    atomic_write(directory / MANIFEST, ("\n".join(lines) + "\n").encode())


def save_assets(assets: HairAssets, directory) -> None:
    directory = Path(directory)
    atomic_write(directory / ASSET_FILES["basis"], basis_to_bytes(assets.basis))
    atomic_write(directory / ASSET_FILES["guide_space"], space_to_bytes(assets.guide_space))
    atomic_write(directory / ASSET_FILES["residual_space"], space_to_bytes(assets.residual_space))
    atomic_write(directory / ASSET_FILES["upsampler"], upsampler_to_bytes(assets.upsampler))
    write_manifest(directory)


def load_assets(directory) -> HairAssets:
    directory = Path(directory)
    missing = [f for f in ASSET_FILES.values() if not (directory / f).exists()]
    if missing:
        raise InputError(f"asset bundle {directory} is missing {', '.join(missing)}")
    return HairAssets(
        basis_from_bytes((directory / ASSET_FILES["basis"]).read_bytes()),
        space_from_bytes((directory / ASSET_FILES["guide_space"]).read_bytes()),
        space_from_bytes((directory / ASSET_FILES["residual_space"]).read_bytes()),
        upsampler_from_bytes((directory / ASSET_FILES["upsampler"]).read_bytes()),
    )
