"""Strand comparison metrics and the geometric loss used during fitting.

All errors are reported in the normalized head frame (head radius 10).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ShapeMismatch
from .hair_io import HairModel

DEGENERACY_TOL = 1e-12


def curvature(p_prev, p, p_next, return_flags: bool = False):
    """Reciprocal circumradius of three points, vectorized over leading axes.

    Degenerate triples (any pairwise distance <= 1e-12) give 0; with
    ``return_flags`` a boolean array marking them is returned as well.
    """
    p_prev, p, p_next = (np.asarray(x, dtype=np.float64) for x in (p_prev, p, p_next))
    a = p_prev - p_next
    b = p - p_next
    c = p_prev - p
    la, lb, lc = (np.linalg.norm(v, axis=-1) for v in (a, b, c))
    degenerate = (la <= DEGENERACY_TOL) | (lb <= DEGENERACY_TOL) | (lc <= DEGENERACY_TOL)
    num = 2.0 * np.linalg.norm(np.cross(a, b), axis=-1)
    den = np.where(degenerate, 1.0, la * lb * lc)
    out = np.where(degenerate, 0.0, num / den)
    if return_flags:
        return out, degenerate
    return out


def strand_curvature(strands) -> np.ndarray:
    """Interior-point curvatures of (..., L, 3) strands, shape (..., L - 2)."""
    s = np.asarray(strands, dtype=np.float64)
    return curvature(s[..., :-2, :], s[..., 1:-1, :], s[..., 2:, :])


def total_curvature(strands) -> float:
    return float(strand_curvature(strands).sum())


def _as_points(x) -> np.ndarray:
    if isinstance(x, HairModel):
        return x.world_points()
    return np.asarray(x, dtype=np.float64)


def _check_pair(a, b):
    a, b = _as_points(a), _as_points(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    return a, b


def position_error(a, b, per_strand: bool = False) -> float:
    """Mean Euclidean distance between corresponding points.

    ``per_strand=True`` averages within strands first, then across strands.
    """
    a, b = _check_pair(a, b)
    if a.size == 0:
        return 0.0
    d = np.linalg.norm(a - b, axis=-1)
    if per_strand and d.ndim > 1:
        return float(d.mean(axis=-1).mean())
    return float(d.mean())


def curvature_error(a, b, per_strand: bool = False) -> float:
    """Mean L1 difference of interior-point curvatures."""
    a, b = _check_pair(a, b)
    if a.size == 0 or a.shape[-2] < 3:
        return 0.0
    d = np.abs(strand_curvature(a) - strand_curvature(b))
    if per_strand and d.ndim > 1:
        return float(d.mean(axis=-1).mean())
    return float(d.mean())


def _rho(x, delta):
    if delta <= 0:
        return np.abs(x)
    ax = np.abs(x)
    return np.where(ax <= delta, 0.5 * x * x / delta, ax - 0.5 * delta)


def _rho_grad(x, delta):
    if delta <= 0:
        return np.sign(x)
    return np.clip(x / delta, -1.0, 1.0)


def geometric_loss(pred, gt, huber: float = 0.0, return_grad: bool = False):
    """Position L1 + (1 - cosine) orientation + binormal-magnitude L1.

    Strands are (..., L, 3); each strand's terms are summed and the result is
    averaged over strands. ``huber > 0`` swaps every L1 for a smooth-L1 with
    that transition width. Zero-length segments drop out of the orientation
    and binormal terms.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"{pred.shape} vs {gt.shape}")
    n_strands = int(np.prod(pred.shape[:-2])) if pred.ndim > 2 else 1
    if n_strands == 0:
        return (0.0, np.zeros_like(pred)) if return_grad else 0.0

    e = pred - gt
    loss = _rho(e, huber).sum()

    dp = np.diff(pred, axis=-2)
    dg = np.diff(gt, axis=-2)
    np_ = np.linalg.norm(dp, axis=-1)
    ng = np.linalg.norm(dg, axis=-1)
    seg_ok = (np_ > DEGENERACY_TOL) & (ng > DEGENERACY_TOL)
    up = dp / np.where(seg_ok, np_, 1.0)[..., None]
    ug = dg / np.where(seg_ok, ng, 1.0)[..., None]
    cos = (up * ug).sum(-1)
    # 1 - cos written as half the squared chord, exactly 0 for identical directions
    loss += np.where(seg_ok, 0.5 * ((up - ug) ** 2).sum(-1), 0.0).sum()

    cp = np.cross(dp[..., :-1, :], dp[..., 1:, :])
    cg = np.cross(dg[..., :-1, :], dg[..., 1:, :])
    bp = np.linalg.norm(cp, axis=-1)
    bg = np.linalg.norm(cg, axis=-1)
    pair_ok = seg_ok[..., :-1] & seg_ok[..., 1:]
    loss += np.where(pair_ok, _rho(bp - bg, huber), 0.0).sum()
    loss = float(loss / n_strands)
    if not return_grad:
        return loss

    grad = _rho_grad(e, huber)
    g_seg = np.zeros_like(dp)
    g_orient = -(ug - cos[..., None] * up) / np.where(seg_ok, np_, 1.0)[..., None]
    g_seg += np.where(seg_ok[..., None], g_orient, 0.0)

    w = np.where(pair_ok, _rho_grad(bp - bg, huber), 0.0)
    safe = bp > 1e-300
    chat = cp / np.where(safe, bp, 1.0)[..., None]
    chat = np.where(safe[..., None], chat, 0.0)
    g_seg[..., :-1, :] += w[..., None] * np.cross(dp[..., 1:, :], chat)
    g_seg[..., 1:, :] += w[..., None] * np.cross(chat, dp[..., :-1, :])

    grad[..., 1:, :] += g_seg
    grad[..., :-1, :] -= g_seg
    return loss, grad / n_strands


@dataclass(frozen=True)
class StrandPairReport:
    position_error: float
    curvature_error: float
    geo_loss: float
    position_error_per_strand: float = 0.0
    curvature_error_per_strand: float = 0.0

    def to_lines(self) -> str:
        return "".join(f"{k}={v:.9g}\n" for k, v in asdict(self).items())


def compare(pred, gt) -> StrandPairReport:
    a, b = _check_pair(pred, gt)
    return StrandPairReport(
        position_error=position_error(a, b),
        curvature_error=curvature_error(a, b),
        geo_loss=geometric_loss(a, b) if a.size else 0.0,
        position_error_per_strand=position_error(a, b, per_strand=True),
        curvature_error_per_strand=curvature_error(a, b, per_strand=True),
    )


def parse_report(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = float(v)
    return out
