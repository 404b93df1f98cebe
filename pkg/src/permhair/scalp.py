"""Scalp UV parameterization and strand geometry textures.

Texel ``(row j, column i)`` of an ``H x W`` texture covers
``u in [i/W, (i+1)/W)`` and ``v in [j/H, (j+1)/H)``; its center is
``((i + 0.5)/W, (j + 0.5)/H)``. Arrays are stored ``data[row, column, channel]``.
Baldness is 1 for bald texels (thresholded at 0.5).
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

from .codec import StrandBasis, encode
from .errors import (
    BadMagic,
    DivergenceDetected,
    EmptyModel,
    InputError,
    RootOffScalp,
    Truncated,
    WrongChannelCount,
)
from .hair_io import HairModel, NORMALIZED_HEAD_RADIUS
from .metrics import geometric_loss
from .optim import Adam

DEFAULT_RESOLUTION = 256
DEFAULT_EPSILON = 0.01
DEFAULT_MAX_ROOT_DISTANCE = 0.05


# --- scalp surface ------------------------------------------------------------

def _closest_point_on_triangles(p, a, b, c):
    """Closest points on triangles (a, b, c) to points p; returns (points, barycentric)."""
    p, a, b, c = np.broadcast_arrays(p, a, b, c)
    ab, ac, ap = b - a, c - a, p - a
    d1 = (ab * ap).sum(-1)
    d2 = (ac * ap).sum(-1)
    bp = p - b
    d3 = (ab * bp).sum(-1)
    d4 = (ac * bp).sum(-1)
    cp = p - c
    d5 = (ab * cp).sum(-1)
    d6 = (ac * cp).sum(-1)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    bary = np.zeros(p.shape[:-1] + (3,))
    done = np.zeros(p.shape[:-1], dtype=bool)

    def assign(mask, w0, w1, w2):
        nonlocal done
        m = mask & ~done
        bary[m] = np.stack([w0, w1, w2], -1)[m]
        done |= m

    one, zero = np.ones_like(d1), np.zeros_like(d1)
    with np.errstate(divide="ignore", invalid="ignore"):
        assign((d1 <= 0) & (d2 <= 0), one, zero, zero)
        assign((d3 >= 0) & (d4 <= d3), zero, one, zero)
        v = d1 / (d1 - d3)
        assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), 1 - v, v, zero)
        assign((d6 >= 0) & (d5 <= d6), zero, zero, one)
        w = d2 / (d2 - d6)
        assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), 1 - w, zero, w)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        assign((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), zero, 1 - w, w)
        denom = 1.0 / (va + vb + vc)
        v = vb * denom
        w = vc * denom
        assign(np.ones_like(done), 1 - v - w, v, w)
    q = bary[..., :1] * a + bary[..., 1:2] * b + bary[..., 2:] * c
    return q, bary


@dataclass
class ScalpMap:
    """Triangulated scalp patch with per-vertex uv; maps uv <-> surface points."""

    vertices: np.ndarray
    uv: np.ndarray
    faces: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.uv = np.asarray(self.uv, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        if self.normals is None:
            self.normals = self._vertex_normals()
        self.normals = self.normals / np.linalg.norm(self.normals, axis=1, keepdims=True)
        self._tangents = self._vertex_tangents()
        fuv = self.uv[self.faces]
        self._uv_tree = cKDTree(fuv.mean(axis=1))
        self._xyz_tree = cKDTree(self.vertices[self.faces].mean(axis=1))
        # circumscribing radii bound the candidate search for point location
        self._uv_reach = float(np.linalg.norm(fuv - fuv.mean(1, keepdims=True), axis=-1).max())
        fx = self.vertices[self.faces]
        self._xyz_reach = float(np.linalg.norm(fx - fx.mean(1, keepdims=True), axis=-1).max())

    @classmethod
    def default(cls, radius: float = NORMALIZED_HEAD_RADIUS, cells: int = 32,
                edge_angle: float = 1.2) -> "ScalpMap":
        """Analytic hemispherical scalp (y up) unwrapped by an azimuthal-equidistant map.

        ``(u, v)`` in the unit square maps to polar angle ``phi = edge_angle * |2(uv - 0.5)|``
        and azimuth ``atan2(v - 0.5, u - 0.5)``; ``u - 0.5`` follows +x and ``v - 0.5`` +z,
        so mirroring x mirrors u. Each grid cell is split into four triangles
        around its center, which keeps the mesh symmetric under both mirrors.
        """
        g = np.linspace(0.0, 1.0, cells + 1)
        gu, gv = np.meshgrid(g, g, indexing="xy")
        corner_uv = np.stack([gu.ravel(), gv.ravel()], 1)
        c = (g[:-1] + g[1:]) / 2
        cu, cv = np.meshgrid(c, c, indexing="xy")
        center_uv = np.stack([cu.ravel(), cv.ravel()], 1)
        uv = np.vstack([corner_uv, center_uv])
        n1 = cells + 1
        faces = []
        for j in range(cells):
            for i in range(cells):
                v00 = j * n1 + i
                v10 = v00 + 1
                v01 = v00 + n1
                v11 = v01 + 1
                m = n1 * n1 + j * cells + i
                faces += [(v00, v10, m), (v10, v11, m), (v11, v01, m), (v01, v00, m)]
        dirs = uv_to_direction(uv, edge_angle)
        verts = radius * dirs
        faces = np.array(faces)
        # orient outward
        fn = np.cross(verts[faces[:, 1]] - verts[faces[:, 0]], verts[faces[:, 2]] - verts[faces[:, 0]])
        flip = (fn * verts[faces].mean(1)).sum(1) < 0
        faces[flip] = faces[flip][:, ::-1]
        return cls(verts, uv, faces, normals=dirs)

    def _vertex_normals(self) -> np.ndarray:
        v = self.vertices[self.faces]
        fn = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        out = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(out, self.faces[:, k], fn)
        return out

    def _vertex_tangents(self) -> np.ndarray:
        # per-face dP/du averaged to vertices
        v = self.vertices[self.faces]
        t = self.uv[self.faces]
        e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
        t1, t2 = t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]
        det = t1[:, 0] * t2[:, 1] - t2[:, 0] * t1[:, 1]
        det = np.where(np.abs(det) > 1e-300, det, 1.0)
        dpdu = (e1 * t2[:, 1:2] - e2 * t1[:, 1:2]) / det[:, None]
        out = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(out, self.faces[:, k], dpdu)
        return out

    def _frames(self, faces, bary) -> np.ndarray:
        n = (self.normals[self.faces[faces]] * bary[..., None]).sum(-2)
        n /= np.linalg.norm(n, axis=-1, keepdims=True)
        t = (self._tangents[self.faces[faces]] * bary[..., None]).sum(-2)
        t -= (t * n).sum(-1, keepdims=True) * n
        t /= np.linalg.norm(t, axis=-1, keepdims=True)
        b = np.cross(n, t)
        return np.stack([t, b, n], axis=-1)

    def locate_uv(self, uv):
        """Face index and barycentric coordinates for uv points (-1 if off the patch)."""
        uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
        faces = np.full(len(uv), -1, dtype=np.int64)
        bary = np.zeros((len(uv), 3))
        k = min(12, len(self.faces))
        _, cand = self._uv_tree.query(uv, k=k)
        cand = cand.reshape(len(uv), k)
        tri = self.uv[self.faces[cand]]
        a, b, c = tri[..., 0, :], tri[..., 1, :], tri[..., 2, :]
        v0, v1, v2 = b - a, c - a, uv[:, None, :] - a
        den = v0[..., 0] * v1[..., 1] - v1[..., 0] * v0[..., 1]
        den = np.where(np.abs(den) > 1e-300, den, 1.0)
        l1 = (v2[..., 0] * v1[..., 1] - v1[..., 0] * v2[..., 1]) / den
        l2 = (v0[..., 0] * v2[..., 1] - v2[..., 0] * v0[..., 1]) / den
        l0 = 1 - l1 - l2
        ok = (l0 >= -1e-12) & (l1 >= -1e-12) & (l2 >= -1e-12)
        first = np.argmax(ok, axis=1)
        hit = ok[np.arange(len(uv)), first]
        faces[hit] = cand[hit, first[hit]]
        bary[hit] = np.stack([l0, l1, l2], -1)[hit, first[hit]]
        return faces, bary

    def uv_to_surface(self, uv):
        """Surface positions and orthonormal frames (columns tangent, bitangent, normal)."""
        faces, bary = self.locate_uv(uv)
        if np.any(faces < 0):
            raise RootOffScalp(f"{int((faces < 0).sum())} uv point(s) fall outside the scalp patch")
        pos = (self.vertices[self.faces[faces]] * bary[..., None]).sum(-2)
        return pos, self._frames(faces, bary)

    def project(self, points):
        """Nearest surface point for each 3D point: (uv, distance, position, face, bary)."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        k = min(16, len(self.faces))
        _, cand = self._xyz_tree.query(points, k=k)
        cand = cand.reshape(len(points), k)
        tri = self.vertices[self.faces[cand]]
        q, bary = _closest_point_on_triangles(points[:, None, :], tri[..., 0, :], tri[..., 1, :], tri[..., 2, :])
        d = np.linalg.norm(q - points[:, None, :], axis=-1)
        best = np.argmin(d, axis=1)
        r = np.arange(len(points))
        face = cand[r, best]
        bary = bary[r, best]
        uv = (self.uv[self.faces[face]] * bary[..., None]).sum(-2)
        return uv, d[r, best], q[r, best], face, bary


def uv_to_direction(uv, edge_angle: float = 1.2) -> np.ndarray:
    uv = np.asarray(uv, dtype=np.float64)
    x = 2.0 * (uv[..., 0] - 0.5)
    z = 2.0 * (uv[..., 1] - 0.5)
    r = np.hypot(x, z)
    phi = edge_angle * r
    safe = np.where(r > 0, r, 1.0)
    s = np.sin(phi)
    return np.stack([s * x / safe, np.cos(phi), s * z / safe], axis=-1)


@dataclass(frozen=True)
class RootSet:
    uv: np.ndarray
    positions: np.ndarray
    frames: np.ndarray
    distances: np.ndarray | None = None

    def __len__(self):
        return len(self.uv)

    @classmethod
    def from_uv(cls, scalp: ScalpMap, uv) -> "RootSet":
        uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
        if len(uv) == 0:
            return cls(uv, np.zeros((0, 3)), np.zeros((0, 3, 3)), np.zeros(0))
        pos, frames = scalp.uv_to_surface(uv)
        return cls(uv, pos, frames, np.zeros(len(uv)))


def project_roots(model: HairModel, scalp: ScalpMap,
                  max_distance: float = DEFAULT_MAX_ROOT_DISTANCE) -> RootSet:
    """Map each world root to the uv of its nearest scalp point."""
    if len(model) == 0:
        return RootSet(np.zeros((0, 2)), np.zeros((0, 3)), np.zeros((0, 3, 3)), np.zeros(0))
    uv, dist, _, face, bary = scalp.project(model.roots)
    if np.any(dist > max_distance):
        worst = float(dist.max())
        raise RootOffScalp(f"{int((dist > max_distance).sum())} root(s) farther than "
                           f"{max_distance} from the scalp (worst {worst:.4g})")
    return RootSet(uv, model.roots.copy(), scalp._frames(face, bary), dist)


def grid_uv(n: int) -> np.ndarray:
    """Texel-center uv grid of an n x n texture, row-major."""
    c = (np.arange(n) + 0.5) / n
    u, v = np.meshgrid(c, c, indexing="xy")
    return np.stack([u.ravel(), v.ravel()], axis=1)


# --- geometry textures -------------------------------------------------------

@dataclass(frozen=True)
class GeometryTexture:
    data: np.ndarray
    baldness: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise InputError(f"texture data must be (H, W, C), got {data.shape}")
        bald = np.asarray(self.baldness, dtype=np.float64)
        if bald.shape != data.shape[:2]:
            raise InputError(f"baldness {bald.shape} does not match texture {data.shape[:2]}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "baldness", bald)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def bald(self) -> np.ndarray:
        return self.baldness > 0.5

    def texel_centers(self) -> np.ndarray:
        cu = (np.arange(self.width) + 0.5) / self.width
        cv = (np.arange(self.height) + 0.5) / self.height
        u, v = np.meshgrid(cu, cv, indexing="xy")
        return np.stack([u, v], axis=-1)


def texel_index(uv, height: int, width: int):
    """(row, column) of the texel whose center is nearest each uv point."""
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    col = np.clip(np.floor(uv[:, 0] * width).astype(np.int64), 0, width - 1)
    row = np.clip(np.floor(uv[:, 1] * height).astype(np.int64), 0, height - 1)
    return row, col


def nearest_roots(query_uv, roots_uv, k: int = 4):
    """Nearest root per query point; ties go to the lower root index."""
    tree = cKDTree(roots_uv)
    k = min(k, len(roots_uv))
    d, idx = tree.query(query_uv, k=k)
    d = d.reshape(len(query_uv), k)
    idx = idx.reshape(len(query_uv), k)
    tie = d == d[:, :1]
    pick = np.where(tie, idx, np.iinfo(np.int64).max).min(axis=1)
    return d[:, 0], pick


def init_texture(model: HairModel, basis: StrandBasis, resolution: int = DEFAULT_RESOLUTION,
                 epsilon: float = DEFAULT_EPSILON, coeffs: np.ndarray | None = None) -> GeometryTexture:
    """Store each texel's nearest-root coefficients; texels farther than ``epsilon`` go bald.

    ``coeffs`` may carry precomputed per-strand coefficients.
    """
    if not epsilon > 0:
        raise InputError("epsilon must be positive")
    if isinstance(resolution, int):
        resolution = (resolution, resolution)
    H, W = resolution
    bald_vec = basis.bald_coeffs()
    data = np.broadcast_to(bald_vec, (H, W, basis.num_coeffs)).copy()
    bald = np.ones((H, W))
    if len(model) == 0:
        return GeometryTexture(data, bald)
    if model.roots_uv is None:
        raise InputError("model roots have no uv; project them onto a scalp first")
    if coeffs is None:
        coeffs = encode(model.points, basis)
    centers = GeometryTexture(data[..., :0], bald).texel_centers().reshape(-1, 2)
    dist, owner = nearest_roots(centers, model.roots_uv)
    hair = dist <= epsilon
    flat = data.reshape(-1, basis.num_coeffs)
    flat[hair] = coeffs[owner[hair]]
    bald.reshape(-1)[hair] = 0.0
    return GeometryTexture(data, bald)


def sample(texture: GeometryTexture, uv):
    """Nearest-texel lookup: returns (coefficients (N, C), bald flags (N,))."""
    row, col = texel_index(uv, texture.height, texture.width)
    return texture.data[row, col], texture.bald[row, col]


def split_channels(texture: GeometryTexture, split: int = 10, total: int = 64):
    if texture.channels != total:
        raise WrongChannelCount(f"expected {total} channels, got {texture.channels}")
    low = GeometryTexture(texture.data[..., :split].copy(), texture.baldness.copy())
    res = GeometryTexture(texture.data[..., split:].copy(), texture.baldness.copy())
    return low, res


def concat_channels(low: GeometryTexture, res: GeometryTexture, baldness=None) -> GeometryTexture:
    if low.data.shape[:2] != res.data.shape[:2]:
        raise InputError("low and residual textures differ in resolution")
    bald = low.baldness if baldness is None else baldness
    return GeometryTexture(np.concatenate([low.data, res.data], axis=-1), bald)


def optimize_texture(texture: GeometryTexture, model: HairModel, basis: StrandBasis,
                     iters: int = 500, lr: float = 1e-3, huber: float = 0.0,
                     divergence_factor: float = 10.0, divergence_patience: int = 50, divergence_floor: float = 1.0):
    """Refine texels hit by the model's roots with Adam on the geometric loss.

    Returns ``(texture, loss_trace)`` where ``loss_trace[i]`` is the loss before
    step ``i`` and the last entry is the loss after the final step. Baldness is
    frozen; roots landing on bald texels are ignored.
    """
    if iters <= 0 or len(model) == 0:
        return texture, np.zeros(0)
    if model.roots_uv is None:
        raise InputError("model roots have no uv")
    row, col = texel_index(model.roots_uv, texture.height, texture.width)
    live = ~texture.bald[row, col]
    flat_idx = row[live] * texture.width + col[live]
    gt = model.points[live]
    if len(gt) == 0:
        return texture, np.zeros(0)
    texels, inverse = np.unique(flat_idx, return_inverse=True)
    flat = texture.data.reshape(-1, texture.channels)
    params = flat[texels].copy()

    comp = basis.component_strands().reshape(basis.num_coeffs, -1)
    mean = basis.mean_strand().reshape(-1)
    L = basis.L

    def loss_grad(p):
        gamma = p[inverse]
        pred = (mean + gamma @ comp).reshape(-1, L, 3)
        loss, g = geometric_loss(pred, gt, huber=huber, return_grad=True)
        g_gamma = g.reshape(len(gamma), -1) @ comp.T
        out = np.zeros_like(p)
        np.add.at(out, inverse, g_gamma)
        return loss, out

    opt = Adam(lr=lr)
    trace = []
    initial = None
    above = 0
    for _ in range(iters):
        loss, g = loss_grad(params)
        if initial is None:
            initial = loss
        trace.append(loss)
        above = above + 1 if loss > divergence_factor * max(initial, divergence_floor) else 0
        if above >= divergence_patience:
            raise DivergenceDetected(f"texture loss above {divergence_factor}x initial for "
                                     f"{divergence_patience} iterations")
        params = opt.step(params, g)
    trace.append(loss_grad(params)[0])

    data = texture.data.copy()
    data.reshape(-1, texture.channels)[texels] = params
    return GeometryTexture(data, texture.baldness.copy()), np.asarray(trace)


def bake(model: HairModel, basis: StrandBasis, scalp: ScalpMap | None = None,
         resolution: int = DEFAULT_RESOLUTION, epsilon: float = DEFAULT_EPSILON,
         iters: int = 500, lr: float = 1e-3) -> tuple:
    """Project roots (if needed), initialize, and optimize a geometry texture."""
    if len(model) == 0:
        raise EmptyModel("cannot bake an empty model")
    if model.roots_uv is None:
        roots = project_roots(model, scalp or ScalpMap.default())
        model = model.with_roots_uv(roots.uv)
    tex = init_texture(model, basis, resolution, epsilon)
    return optimize_texture(tex, model, basis, iters=iters, lr=lr)


# --- serialization ------------------------------------------------------------

_PGT_HEAD = struct.Struct("<4sIII")


def texture_to_bytes(texture: GeometryTexture) -> bytes:
    H, W, C = texture.data.shape
    return b"".join([
        _PGT_HEAD.pack(b"PGT1", W, H, C),
        texture.data.astype("<f4").tobytes(),
        texture.baldness.astype("<f4").tobytes(),
    ])


def texture_from_bytes(data: bytes) -> GeometryTexture:
    if data[:4] != b"PGT1":
        raise BadMagic(f"expected b'PGT1', got {bytes(data[:4])!r}")
    if len(data) < _PGT_HEAD.size:
        raise Truncated("PGT1 header truncated")
    _, W, H, C = _PGT_HEAD.unpack_from(data, 0)
    need = _PGT_HEAD.size + 4 * (H * W * C + H * W)
    if len(data) < need:
        raise Truncated(f"PGT1 payload needs {need} bytes, got {len(data)}")
    off = _PGT_HEAD.size
    tex = np.frombuffer(data, "<f4", H * W * C, off).reshape(H, W, C).astype(np.float64)
    bald = np.frombuffer(data, "<f4", H * W, off + 4 * H * W * C).reshape(H, W).astype(np.float64)
    return GeometryTexture(tex, bald)


def texture_preview_png(texture: GeometryTexture, channels=(0, 1, 2)) -> bytes:
    """RGBA inspection image: chosen channels min-max normalized, alpha = hair mask."""
    from PIL import Image

    hair = ~texture.bald
    rgb = np.zeros(texture.data.shape[:2] + (3,))
    for out_c, c in enumerate(channels[:3]):
        if c >= texture.channels:
            continue
        ch = texture.data[..., c]
        vals = ch[hair] if hair.any() else ch.ravel()
        lo, hi = float(vals.min()), float(vals.max())
        rgb[..., out_c] = (ch - lo) / (hi - lo) if hi > lo else 0.5
    rgba = np.concatenate([np.clip(rgb, 0, 1), hair[..., None].astype(float)], axis=-1)
    img = Image.fromarray((rgba * 255).round().astype(np.uint8), mode="RGBA")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def with_data(texture: GeometryTexture, data) -> GeometryTexture:
    return replace(texture, data=data)
