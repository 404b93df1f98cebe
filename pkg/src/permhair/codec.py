"""Frequency-domain PCA strand codec.

A strand of ``L`` points is transformed per axis with a real-input DFT
(unnormalized forward, ``1/L`` inverse), keeping ``k = L // 2 + 1`` bands. The
complex ``(k, 3)`` spectrum is flattened to a real vector of length ``6k``
laid out as ``[real.ravel(), imag.ravel()]``. A PCA basis over those vectors
gives the linear strand model ``strand = idft(mean + gamma @ components)``.

All functions accept leading batch dimensions.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import (
    BadMagic,
    BandMismatch,
    DegenerateVariance,
    DimensionMismatch,
    InputError,
    Truncated,
    TooFewSamples,
    WrongLength,
)

DEFAULT_COEFFS = 64
GUIDE_COEFFS = 10


def num_bands(L: int) -> int:
    return L // 2 + 1


def dft(strand: np.ndarray, L: int | None = None) -> np.ndarray:
    """Per-axis real DFT of strands shaped (..., L, 3) -> complex (..., k, 3)."""
    strand = np.asarray(strand, dtype=np.float64)
    if strand.ndim < 2 or strand.shape[-1] != 3:
        raise WrongLength(f"expected (..., L, 3), got {strand.shape}")
    if L is not None and strand.shape[-2] != L:
        raise WrongLength(f"expected {L} points, got {strand.shape[-2]}")
    return np.fft.rfft(strand, axis=-2)


def idft(spectral: np.ndarray, L: int) -> np.ndarray:
    """Inverse of :func:`dft`; ``spectral`` must carry ``L // 2 + 1`` bands."""
    spectral = np.asarray(spectral)
    if spectral.ndim < 2 or spectral.shape[-2] != num_bands(L) or spectral.shape[-1] != 3:
        raise BandMismatch(f"expected (..., {num_bands(L)}, 3) bands for L={L}, got {spectral.shape}")
    return np.fft.irfft(spectral, n=L, axis=-2)


def spectrum_to_vector(spectral: np.ndarray) -> np.ndarray:
    spectral = np.asarray(spectral)
    lead = spectral.shape[:-2]
    re = spectral.real.reshape(*lead, -1)
    im = spectral.imag.reshape(*lead, -1)
    return np.concatenate([re, im], axis=-1)


def vector_to_spectrum(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    half = vec.shape[-1] // 2
    lead = vec.shape[:-1]
    re = vec[..., :half].reshape(*lead, half // 3, 3)
    im = vec[..., half:].reshape(*lead, half // 3, 3)
    return re + 1j * im


def strand_to_vector(strand: np.ndarray) -> np.ndarray:
    return spectrum_to_vector(dft(strand))


def vector_to_strand(vec: np.ndarray, L: int) -> np.ndarray:
    return idft(vector_to_spectrum(vec), L)


def _real_input_mask(L: int) -> np.ndarray:
    """True for spectral-vector coordinates that can be nonzero for real strands."""
    k = num_bands(L)
    im = np.ones((k, 3), dtype=bool)
    im[0] = False
    if L % 2 == 0:
        im[-1] = False
    return np.concatenate([np.ones(3 * k, dtype=bool), im.ravel()])


@dataclass(frozen=True)
class StrandBasis:
    """Mean spectral vector, orthonormal components and their variances."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    L: int
    total_variance: float | None = None

    @property
    def num_coeffs(self) -> int:
        return self.components.shape[0]

    @property
    def num_params(self) -> int:
        return self.mean.size + self.components.size

    def encode(self, strand):
        return encode(strand, self)

    def decode(self, coeffs):
        return decode(coeffs, self)

    def component_strands(self) -> np.ndarray:
        """Each component mapped to strand space, shape (n, L, 3); decode is affine in these."""
        return vector_to_strand(self.components, self.L)

    def mean_strand(self) -> np.ndarray:
        return vector_to_strand(self.mean, self.L)

    def bald_coeffs(self) -> np.ndarray:
        """Coefficients that encode the all-origin strand (stored in bald texels)."""
        return encode(np.zeros((self.L, 3)), self)


def _sign_fix(components: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each row made positive, for reproducible signs
    idx = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(len(components)), idx])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def _complete_orthonormal(rows: np.ndarray, n: int, candidates: np.ndarray) -> np.ndarray:
    """Extend orthonormal ``rows`` to ``n`` rows by Gram-Schmidt over ``candidates``."""
    out = [r for r in rows]
    for c in candidates:
        if len(out) >= n:
            break
        v = c.astype(np.float64).copy()
        for _ in range(2):
            if out:
                Q = np.asarray(out)
                v -= Q.T @ (Q @ v)
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            out.append(v / norm)
    if len(out) < n:
        raise InputError(f"cannot build {n} orthonormal components in dimension {rows.shape[1]}")
    return np.asarray(out[:n])


def _pad_candidates(L: int) -> np.ndarray:
    dim = 6 * num_bands(L)
    mask = _real_input_mask(L)
    order = np.concatenate([np.flatnonzero(mask), np.flatnonzero(~mask)])
    return np.eye(dim)[order]


def _finish_basis(mean, eigvecs, eigvals, num_components, L, total, rank_tol=1e-12):
    eigvals = np.clip(eigvals, 0.0, None)
    scale = eigvals[0] if len(eigvals) else 0.0
    # rounding in the centered data leaves variances near eps^2 * |mean|^2; treat those as zero
    noise = 1e-24 * max(1.0, float(mean @ mean))
    live = eigvals > max(rank_tol * scale, noise)
    r = min(int(live.sum()), num_components)
    if not live.any():
        total = 0.0
    comps = _sign_fix(eigvecs[:r]) if r else np.zeros((0, mean.size))
    if r < num_components:
        comps = _complete_orthonormal(comps, num_components, _pad_candidates(L))
    var = np.zeros(num_components)
    var[:r] = eigvals[:r]
    return StrandBasis(mean, comps, var, L, float(total))


def fit_basis(corpus, num_components: int = DEFAULT_COEFFS) -> StrandBasis:
    """PCA over flattened spectra via SVD of the centered data matrix.

    ``corpus`` is an (N, L, 3) array or a list of (L, 3) strands. Rank-deficient
    corpora are padded with orthonormal zero-variance components.
    """
    strands = np.asarray(corpus, dtype=np.float64)
    if strands.ndim != 3 or strands.shape[-1] != 3:
        raise WrongLength(f"corpus must be (N, L, 3), got {strands.shape}")
    n, L = strands.shape[:2]
    if n < max(num_components, 1):
        raise TooFewSamples(f"{n} strands for {num_components} components")
    if num_components > 6 * num_bands(L):
        raise InputError("more components than spectral dimensions")
    data = strand_to_vector(strands)
    mean = data.mean(axis=0)
    centered = data - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    denom = max(n - 1, 1)
    eigvals = s ** 2 / denom
    total = float((centered ** 2).sum() / denom)
    return _finish_basis(mean, vt, eigvals, num_components, L, total)


def fit_basis_streaming(chunks: Callable[[], Iterable[np.ndarray]],
                        num_components: int = DEFAULT_COEFFS) -> StrandBasis:
    """Two-pass Gram-matrix PCA for corpora that do not fit in memory.

    ``chunks`` is called twice and must yield the same (n_i, L, 3) arrays in the
    same order each time.
    """
    count, acc, L = 0, None, None
    for chunk in chunks():
        v = strand_to_vector(np.asarray(chunk, dtype=np.float64))
        L = chunk.shape[1] if L is None else L
        acc = v.sum(axis=0) if acc is None else acc + v.sum(axis=0)
        count += len(v)
    if count < max(num_components, 1):
        raise TooFewSamples(f"{count} strands for {num_components} components")
    mean = acc / count
    gram = np.zeros((mean.size, mean.size))
    for chunk in chunks():
        c = strand_to_vector(np.asarray(chunk, dtype=np.float64)) - mean
        gram += c.T @ c
    denom = max(count - 1, 1)
    cov = gram / denom
    w, v = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    return _finish_basis(mean, v[:, order].T, w[order], num_components, L, float(np.trace(cov)))


def encode(strand: np.ndarray, basis: StrandBasis) -> np.ndarray:
    """Orthogonal projection of strand spectra onto the basis."""
    strand = np.asarray(strand, dtype=np.float64)
    if strand.ndim < 2 or strand.shape[-2] != basis.L:
        raise WrongLength(f"strand length {strand.shape[-2:]} does not match basis L={basis.L}")
    return (strand_to_vector(strand) - basis.mean) @ basis.components.T


def decode(coeffs: np.ndarray, basis: StrandBasis) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape[-1] != basis.num_coeffs:
        raise DimensionMismatch(f"{coeffs.shape[-1]} coefficients for a {basis.num_coeffs}-component basis")
    return vector_to_strand(basis.mean + coeffs @ basis.components, basis.L)


def truncate(coeffs: np.ndarray, n: int) -> np.ndarray:
    coeffs = np.array(coeffs, dtype=np.float64, copy=True)
    if not 0 <= n <= coeffs.shape[-1]:
        raise InputError(f"truncation index {n} outside [0, {coeffs.shape[-1]}]")
    coeffs[..., n:] = 0.0
    return coeffs


def transfer_detail(low_source: np.ndarray, high_source: np.ndarray, split: int = GUIDE_COEFFS) -> np.ndarray:
    """Low-order coefficients from one strand, high-order from another."""
    low_source = np.asarray(low_source, dtype=np.float64)
    high_source = np.asarray(high_source, dtype=np.float64)
    if low_source.shape != high_source.shape:
        raise DimensionMismatch(f"{low_source.shape} vs {high_source.shape}")
    if not 0 <= split <= low_source.shape[-1]:
        raise InputError(f"split {split} outside [0, {low_source.shape[-1]}]")
    out = high_source.copy()
    out[..., :split] = low_source[..., :split]
    return out


def explained_variance_curve(basis: StrandBasis) -> np.ndarray:
    """Cumulative explained variance relative to the training corpus total."""
    total = basis.total_variance
    if total is None:
        total = float(basis.explained_variance.sum())
    if not total > 0:
        raise DegenerateVariance("training corpus has zero total variance")
    return np.cumsum(basis.explained_variance) / total


# --- PSB1 container -----------------------------------------------------------

_PSB_HEAD = struct.Struct("<4sII")


def basis_to_bytes(basis: StrandBasis) -> bytes:
    head = _PSB_HEAD.pack(b"PSB1", basis.L, basis.num_coeffs)
    tail = np.array([np.nan if basis.total_variance is None else basis.total_variance])
    return b"".join([
        head,
        basis.mean.astype("<f8").tobytes(),
        basis.components.astype("<f8").tobytes(),
        basis.explained_variance.astype("<f8").tobytes(),
        tail.astype("<f8").tobytes(),
    ])


def basis_from_bytes(data: bytes) -> StrandBasis:
    if data[:4] != b"PSB1":
        raise BadMagic(f"expected b'PSB1', got {bytes(data[:4])!r}")
    if len(data) < _PSB_HEAD.size:
        raise Truncated("PSB1 header truncated")
    _, L, n = _PSB_HEAD.unpack_from(data, 0)
    dim = 6 * num_bands(L)
    count = dim + n * dim + n
    need = _PSB_HEAD.size + 8 * count
    if len(data) < need:
        raise Truncated(f"PSB1 payload needs {need} bytes, got {len(data)}")
    arr = np.frombuffer(data, dtype="<f8", count=count, offset=_PSB_HEAD.size).astype(np.float64)
    total = None
    if len(data) >= need + 8:
        t = float(np.frombuffer(data, dtype="<f8", count=1, offset=need)[0])
        total = None if np.isnan(t) else t
    return StrandBasis(arr[:dim], arr[dim:dim + n * dim].reshape(n, dim), arr[dim + n * dim:], L, total)


# --- spatial baseline ---------------------------------------------------------

@dataclass(frozen=True)
class SpatialBasis:
    """Plain PCA on flattened point coordinates (the no-DFT baseline)."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    L: int

    def encode(self, strand):
        strand = np.asarray(strand, dtype=np.float64)
        flat = strand.reshape(*strand.shape[:-2], -1)
        return (flat - self.mean) @ self.components.T

    def decode(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=np.float64)
        flat = self.mean + coeffs @ self.components
        return flat.reshape(*flat.shape[:-1], self.L, 3)


def fit_spatial_basis(corpus, num_components: int = DEFAULT_COEFFS) -> SpatialBasis:
    strands = np.asarray(corpus, dtype=np.float64)
    n, L = strands.shape[:2]
    if n < num_components:
        raise TooFewSamples(f"{n} strands for {num_components} components")
    data = strands.reshape(n, -1)
    mean = data.mean(axis=0)
    _, s, vt = np.linalg.svd(data - mean, full_matrices=False)
    r = min(num_components, len(s))
    comps = _sign_fix(vt[:r])
    if r < num_components:
        comps = _complete_orthonormal(comps, num_components, np.eye(data.shape[1]))
    var = np.zeros(num_components)
    var[:r] = s[:r] ** 2 / max(n - 1, 1)
    return SpatialBasis(mean, comps, var, L)
