"""Strand hair containers: parsing, resampling, registration and export.

Strands are kept root-relative: ``strands[i][0]`` is the origin and the world
root lives in ``roots[i]``. World coordinates are ``strands[i] + roots[i]``.
Internally everything is float64 in a frame where the head bounding sphere has
radius 10; ``head_scale`` remembers the source radius so writers can restore it.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import (
    BadMagic,
    DegenerateStrand,
    EmptyModel,
    InputError,
    NegativeCount,
    Truncated,
    ZeroStrands,
)

NORMALIZED_HEAD_RADIUS = 10.0
DEFAULT_POINTS = 100

HAIR_HEADER = struct.Struct("<4sIIIIff3f88s")
HAIR_HAS_SEGMENTS = 1 << 0
HAIR_HAS_POINTS = 1 << 1
HAIR_HAS_THICKNESS = 1 << 2
HAIR_HAS_TRANSPARENCY = 1 << 3
HAIR_HAS_COLOR = 1 << 4


class DroppedStrandsWarning(UserWarning):
    """Emitted when strands with fewer than two points are discarded."""


@dataclass(frozen=True)
class HairModel:
    strands: list = field(default_factory=list)
    roots: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    roots_uv: np.ndarray | None = None
    head_scale: float = NORMALIZED_HEAD_RADIUS

    def __post_init__(self):
        roots = np.asarray(self.roots, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "roots", roots)
        object.__setattr__(self, "strands", [np.asarray(s, dtype=np.float64) for s in self.strands])
        if len(self.strands) != len(roots):
            raise InputError(f"{len(self.strands)} strands but {len(roots)} roots")
        if self.roots_uv is not None:
            uv = np.asarray(self.roots_uv, dtype=np.float64).reshape(-1, 2)
            if len(uv) != len(roots):
                raise InputError("roots_uv length does not match strand count")
            object.__setattr__(self, "roots_uv", uv)

    @classmethod
    def from_world(cls, polylines: Sequence[np.ndarray], roots_uv=None,
                   head_scale: float = NORMALIZED_HEAD_RADIUS) -> "HairModel":
        """Canonicalize world-space polylines to the root-relative convention."""
        polylines = [np.asarray(p, dtype=np.float64).reshape(-1, 3) for p in polylines]
        roots = np.array([p[0] for p in polylines]).reshape(-1, 3)
        strands = [p - p[0] for p in polylines]
        return cls(strands, roots, roots_uv, head_scale)

    @classmethod
    def from_array(cls, points: np.ndarray, roots: np.ndarray, roots_uv=None,
                   head_scale: float = NORMALIZED_HEAD_RADIUS) -> "HairModel":
        """Wrap an (N, L, 3) array of root-relative strands without re-canonicalizing."""
        return cls(list(np.asarray(points, dtype=np.float64)), roots, roots_uv, head_scale)

    def __len__(self) -> int:
        return len(self.strands)

    @property
    def num_points(self) -> int:
        return sum(len(s) for s in self.strands)

    @property
    def is_uniform(self) -> bool:
        return len({len(s) for s in self.strands}) <= 1

    @property
    def points(self) -> np.ndarray:
        """Root-relative strands stacked as (N, L, 3); requires uniform length."""
        if not self.strands:
            return np.zeros((0, 0, 3))
        if not self.is_uniform:
            raise InputError("strands have differing point counts; resample first")
        return np.stack(self.strands)

    def world_strands(self) -> list:
        return [s + r for s, r in zip(self.strands, self.roots)]

    def world_points(self) -> np.ndarray:
        return self.points + self.roots[:, None, :]

    def subset(self, index) -> "HairModel":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        uv = None if self.roots_uv is None else self.roots_uv[index]
        return HairModel([self.strands[i] for i in index], self.roots[index], uv, self.head_scale)

    def with_roots_uv(self, uv) -> "HairModel":
        return replace(self, roots_uv=uv)


def _drop_stubs(polylines: list) -> list:
    kept = [p for p in polylines if len(p) >= 2]
    dropped = len(polylines) - len(kept)
    if dropped:
        warnings.warn(f"dropped {dropped} strand(s) with fewer than 2 points",
                      DroppedStrandsWarning, stacklevel=3)
    return kept


def _restore_scale(model: HairModel) -> list:
    factor = model.head_scale / NORMALIZED_HEAD_RADIUS
    world = model.world_strands()
    if factor != 1.0:
        world = [w * factor for w in world]
    return world


# --- .hair -----------------------------------------------------------------

def parse_hair_binary(data: bytes) -> HairModel:
    """Read a ``.hair`` container (magic ``HAIR``, little-endian)."""
    if len(data) < 4 or data[:4] != b"HAIR":
        raise BadMagic(f"expected magic b'HAIR', got {bytes(data[:4])!r}")
    if len(data) < HAIR_HEADER.size:
        raise Truncated(f"header needs {HAIR_HEADER.size} bytes, got {len(data)}")
    (_, n_strands, n_points, flags, default_segments,
     _thickness, _transparency, _r, _g, _b, _info) = HAIR_HEADER.unpack_from(data, 0)
    if n_strands == 0:
        raise ZeroStrands("header declares 0 strands")
    if not flags & HAIR_HAS_POINTS:
        raise InputError(".hair file carries no point array")

    need = HAIR_HEADER.size
    if flags & HAIR_HAS_SEGMENTS:
        need += 2 * n_strands
    need += 12 * n_points
    need += 4 * n_points * bool(flags & HAIR_HAS_THICKNESS)
    need += 4 * n_points * bool(flags & HAIR_HAS_TRANSPARENCY)
    need += 12 * n_points * bool(flags & HAIR_HAS_COLOR)
    if len(data) < need:
        raise Truncated(f"declared payload needs {need} bytes, got {len(data)}")

    offset = HAIR_HEADER.size
    if flags & HAIR_HAS_SEGMENTS:
        segments = np.frombuffer(data, dtype="<u2", count=n_strands, offset=offset).astype(np.int64)
        offset += 2 * n_strands
    else:
        segments = np.full(n_strands, default_segments, dtype=np.int64)
    counts = segments + 1
    if counts.sum() != n_points:
        raise InputError(f"segment counts imply {counts.sum()} points, header says {n_points}")
    pts = np.frombuffer(data, dtype="<f4", count=3 * n_points, offset=offset)
    pts = pts.reshape(-1, 3).astype(np.float64)

    bounds = np.concatenate([[0], np.cumsum(counts)])
    polylines = [pts[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
    return HairModel.from_world(_drop_stubs(polylines))


def write_hair_binary(model: HairModel, info: str = "") -> bytes:
    world = _restore_scale(model)
    if not world:
        raise EmptyModel("cannot write a model with no strands")
    counts = np.array([len(w) for w in world])
    if counts.max() - 1 > 0xFFFF:
        raise InputError("strand too long for 16-bit segment counts")
    uniform = bool(np.all(counts == counts[0]))
    flags = HAIR_HAS_POINTS | (0 if uniform else HAIR_HAS_SEGMENTS)
    header = HAIR_HEADER.pack(b"HAIR", len(world), int(counts.sum()), flags,
                              int(counts[0] - 1), 1.0, 0.0, 1.0, 1.0, 1.0,
                              info.encode("ascii", "replace")[:88])
    parts = [header]
    if not uniform:
        parts.append((counts - 1).astype("<u2").tobytes())
    parts.append(np.concatenate(world).astype("<f4").tobytes())
    return b"".join(parts)


# --- .data -----------------------------------------------------------------

def parse_data_file(data: bytes) -> HairModel:
    """Read the per-strand ``.data`` layout: int32 count, then (int32 n, n*xyz float32)."""
    if len(data) < 4:
        raise Truncated("missing strand count")
    (n_strands,) = struct.unpack_from("<i", data, 0)
    if n_strands < 0:
        raise NegativeCount(f"negative strand count {n_strands}")
    offset = 4
    polylines = []
    for i in range(n_strands):
        if offset + 4 > len(data):
            raise Truncated(f"strand {i}: missing point count")
        (n,) = struct.unpack_from("<i", data, offset)
        offset += 4
        if n < 0:
            raise NegativeCount(f"strand {i}: negative point count {n}")
        if offset + 12 * n > len(data):
            raise Truncated(f"strand {i}: needs {12 * n} bytes of points")
        pts = np.frombuffer(data, dtype="<f4", count=3 * n, offset=offset)
        polylines.append(pts.reshape(-1, 3).astype(np.float64))
        offset += 12 * n
    return HairModel.from_world(_drop_stubs(polylines))


def write_data_file(model: HairModel) -> bytes:
    world = _restore_scale(model)
    parts = [struct.pack("<i", len(world))]
    for w in world:
        parts.append(struct.pack("<i", len(w)))
        parts.append(w.astype("<f4").tobytes())
    return b"".join(parts)


# --- OBJ -------------------------------------------------------------------

def export_obj(model: HairModel) -> bytes:
    world = _restore_scale(model)
    if not world:
        raise EmptyModel("cannot export a model with no strands")
    lines = [f"# strands {len(world)}", f"# points {sum(len(w) for w in world)}"]
    for w in world:
        lines.extend(f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in w)
    start = 1
    for w in world:
        idx = range(start, start + len(w))
        lines.append("l " + " ".join(map(str, idx)))
        start += len(w)
    return ("\n".join(lines) + "\n").encode("ascii")


def parse_obj_polylines(data: bytes) -> HairModel:
    """Minimal OBJ reader for ``v`` and ``l`` records (1-based, negative indices allowed)."""
    verts, polylines = [], []
    for raw in data.decode("ascii", "replace").splitlines():
        tok = raw.split()
        if not tok or tok[0].startswith("#"):
            continue
        if tok[0] == "v":
            verts.append([float(t) for t in tok[1:4]])
        elif tok[0] == "l":
            idx = [int(t.split("/")[0]) for t in tok[1:]]
            idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
            polylines.append(np.asarray(verts, dtype=np.float64)[idx])
    return HairModel.from_world(_drop_stubs(polylines))


def read_hair(path) -> HairModel:
    """Dispatch on file extension (.hair, .data, .obj)."""
    path = str(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if path.endswith(".hair"):
        return parse_hair_binary(data)
    if path.endswith(".data"):
        return parse_data_file(data)
    if path.endswith(".obj"):
        return parse_obj_polylines(data)
    raise InputError(f"unknown hair file extension: {path}")


def hair_bytes(model: HairModel, path) -> bytes:
    path = str(path)
    if path.endswith(".hair"):
        return write_hair_binary(model)
    if path.endswith(".data"):
        return write_data_file(model)
    if path.endswith(".obj"):
        return export_obj(model)
    raise InputError(f"unknown hair file extension: {path}")


# --- geometry ----------------------------------------------------------------

def resample_strand(strand: np.ndarray, L: int = DEFAULT_POINTS) -> np.ndarray:
    """Resample a polyline to ``L`` points equally spaced in arc length."""
    strand = np.asarray(strand, dtype=np.float64)
    if L < 2:
        raise InputError("L must be at least 2")
    if len(strand) < 2:
        raise DegenerateStrand("need at least 2 points")
    seg = np.linalg.norm(np.diff(strand, axis=0), axis=1)
    keep = np.concatenate([[True], seg > 0])
    pts = strand[keep]
    s = np.concatenate([[0.0], np.cumsum(seg[seg > 0])])
    total = s[-1]
    if not total > 0:
        raise DegenerateStrand("strand has zero arc length")
    t = np.linspace(0.0, total, L)
    out = np.stack([np.interp(t, s, pts[:, a]) for a in range(3)], axis=1)
    out[0] = strand[0]
    out[-1] = strand[-1]
    return out


def resample_model(model: HairModel, L: int = DEFAULT_POINTS) -> HairModel:
    """Resample every strand; zero-length strands are dropped with a warning."""
    kept, roots, uv_idx = [], [], []
    for i, s in enumerate(model.strands):
        try:
            kept.append(resample_strand(s, L))
        except DegenerateStrand:
            continue
        roots.append(model.roots[i])
        uv_idx.append(i)
    if len(kept) < len(model):
        warnings.warn(f"dropped {len(model) - len(kept)} zero-length strand(s)",
                      DroppedStrandsWarning, stacklevel=2)
    # keep root-relative exactly: resampling preserves point 0
    kept = [k - k[0] for k in kept]
    uv = None if model.roots_uv is None else model.roots_uv[uv_idx]
    return HairModel(kept, np.array(roots).reshape(-1, 3), uv, model.head_scale)


def head_radius_estimate(model: HairModel) -> float:
    """Bounding-sphere radius of the roots about their centroid."""
    if len(model) == 0:
        raise EmptyModel("no roots to estimate a head radius from")
    c = model.roots.mean(axis=0)
    return float(np.linalg.norm(model.roots - c, axis=1).max())


def normalize_units(model: HairModel, head_radius: float | None = None) -> HairModel:
    """Scale to the normalized frame (head radius 10); writers undo this."""
    if head_radius is None:
        head_radius = head_radius_estimate(model)
    if not head_radius > 0:
        raise InputError("head radius must be positive")
    factor = NORMALIZED_HEAD_RADIUS / head_radius
    return HairModel([s * factor for s in model.strands], model.roots * factor,
                     model.roots_uv, head_radius)


def apply_registration(model: HairModel, matrix) -> HairModel:
    """Apply a fixed 4x4 (or 3x4) affine registration to world coordinates."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape == (3, 4):
        m = np.vstack([m, [0, 0, 0, 1]])
    if m.shape != (4, 4):
        raise InputError(f"registration matrix must be 4x4, got {m.shape}")
    A, t = m[:3, :3], m[:3, 3]
    world = [w @ A.T + t for w in model.world_strands()]
    return replace(HairModel.from_world(world, model.roots_uv), head_scale=model.head_scale)


def arc_length(strand: np.ndarray) -> float:
    return float(np.linalg.norm(np.diff(strand, axis=0), axis=-1).sum())
