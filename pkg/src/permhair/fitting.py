"""Fitting model parameters to geometry textures and strand sets."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .codec import decode
from .errors import AssetMismatch, BadMagic, DivergenceDetected, EmptyModel, Truncated
from .hair_io import HairModel
from .metrics import StrandPairReport, compare, geometric_loss
from .model import HairAssets, decode_texture_at
from .optim import Adam, CosineSchedule, OptimState, adam_step  # noqa: F401  (re-exported)
from .scalp import (
    DEFAULT_EPSILON,
    GeometryTexture,
    ScalpMap,
    grid_uv,
    init_texture,
    optimize_texture,
    project_roots,
    texel_index,
)

HUBER_WIDTH = 1e-3


def _huber(x, delta):
    ax = np.abs(x)
    return np.where(ax <= delta, 0.5 * x * x / delta, ax - 0.5 * delta)


def _huber_grad(x, delta):
    return np.clip(x / delta, -1.0, 1.0)


class ParameterizationObjective:
    """Smooth-L1 texture norm plus geometric loss at a fixed evaluation root grid.

    The texture term is summed over every texel and channel (an L1 norm, not a
    mean); the geometric term is the per-strand loss averaged over the
    evaluation strands.

    ``value_and_grad(theta, beta)`` returns the objective and its exact
    gradients with respect to both parameter vectors.
    """

    def __init__(self, target: GeometryTexture, assets: HairAssets, geo_weight: float = 1.0,
                 huber: float = HUBER_WIDTH, eval_uv: np.ndarray | None = None):
        H, W = assets.resolution
        if target.data.shape != (H, W, assets.basis.num_coeffs):
            raise AssetMismatch(f"target {target.data.shape} vs assets {(H, W, assets.basis.num_coeffs)}")
        self.assets = assets
        self.target = target
        self.geo_weight = geo_weight
        self.huber = huber
        self.H, self.W = H, W
        self.split = assets.split
        gs, rs = assets.guide_space, assets.residual_space
        self.Hg, self.Wg = gs.shape[:2]
        self.blend = assets.upsampler.matrix()
        self.delta = assets.upsampler.delta.reshape(H * W, -1)
        self.T = target.data.reshape(H * W, -1)

        if eval_uv is None:
            eval_uv = grid_uv(self.Hg) if self.Hg == self.Wg else _rect_grid(self.Hg, self.Wg)
        row, col = texel_index(eval_uv, H, W)
        keep = ~target.bald[row, col]
        self.eval_texels = (row * W + col)[keep]
        basis = assets.basis
        self.comp = basis.component_strands().reshape(basis.num_coeffs, -1)
        self.mean_strand = basis.mean_strand().reshape(-1)
        self.gt_strands = self._strands(self.T[self.eval_texels])

    def _strands(self, gamma):
        return (self.mean_strand + gamma @ self.comp).reshape(len(gamma), self.assets.basis.L, 3)

    def texture(self, theta, beta) -> np.ndarray:
        gs, rs = self.assets.guide_space, self.assets.residual_space
        gv = gs.decode_vector(theta).reshape(self.Hg * self.Wg, -1)[:, : self.split]
        low = self.blend @ gv + self.delta
        rv = rs.decode_vector(beta).reshape(self.H * self.W, -1)[:, : rs.shape[2]]
        return np.concatenate([low, rv], axis=1)

    def texture_l1(self, theta, beta) -> float:
        return float(np.abs(self.texture(theta, beta) - self.T).mean())

    def value_and_grad(self, theta, beta):
        gs, rs = self.assets.guide_space, self.assets.residual_space
        That = self.texture(theta, beta)
        E = That - self.T
        value = float(_huber(E, self.huber).sum())
        G = _huber_grad(E, self.huber)

        if len(self.eval_texels) and self.geo_weight:
            pred = self._strands(That[self.eval_texels])
            geo, g = geometric_loss(pred, self.gt_strands, huber=self.huber, return_grad=True)
            value += self.geo_weight * geo
            g_gamma = g.reshape(len(pred), -1) @ self.comp.T
            np.add.at(G, self.eval_texels, self.geo_weight * g_gamma)

        g_low = self.blend.T @ G[:, : self.split]
        g_guide = np.zeros((self.Hg * self.Wg, gs.shape[2] + int(gs.has_mask)))
        g_guide[:, : self.split] = g_low
        g_theta = np.zeros(gs.dim)
        g_theta[: gs.active] = gs.components @ g_guide.reshape(-1)

        g_res = np.zeros((self.H * self.W, rs.shape[2] + int(rs.has_mask)))
        g_res[:, : rs.shape[2]] = G[:, self.split:]
        g_beta = np.zeros(rs.dim)
        g_beta[: rs.active] = rs.components @ g_res.reshape(-1)
        return value, g_theta, g_beta

    def value(self, theta, beta) -> float:
        return self.value_and_grad(theta, beta)[0]


def _rect_grid(h, w):
    cu = (np.arange(w) + 0.5) / w
    cv = (np.arange(h) + 0.5) / h
    u, v = np.meshgrid(cu, cv, indexing="xy")
    return np.stack([u.ravel(), v.ravel()], 1)


@dataclass
class FitResult:
    theta_star: np.ndarray
    beta_star: np.ndarray
    loss_trace: np.ndarray
    final_objective: float
    texture_error: float
    final_report: StrandPairReport | None = None
    extras: dict = field(default_factory=dict)

    def trace_text(self) -> str:
        lines = [f"{i} {v:.12g}" for i, v in enumerate(self.loss_trace)]
        lines.append(f"{len(self.loss_trace)} {self.final_objective:.12g}")
        return "\n".join(lines) + "\n"


def parameterize_hair(target: GeometryTexture, assets: HairAssets, warmup: int = 1000, joint: int = 4000,
                      lr: float = 0.1, geo_weight: float = 1.0, huber: float = HUBER_WIDTH,
                      lr_floor: float | None = None, eval_uv=None, full_report: bool = True,
                      divergence_factor: float = 10.0, divergence_patience: int = 50, divergence_floor: float = 1.0,
                      whiten: bool = True) -> FitResult:
    """Fit (theta, beta) to a 64-channel target texture.

    Adam with one cosine-annealed schedule over ``warmup + joint`` steps; only
    theta moves during warm-up, and beta's moment estimates start when it
    joins. ``loss_trace[i]`` is the objective before step ``i``.

    With ``whiten`` the optimizer steps in units of each component's standard
    deviation (``theta = std * z``), so ``lr`` means the same thing for every
    space regardless of the data scale. Inactive padded components stay at 0.
    """
    obj = ParameterizationObjective(target, assets, geo_weight, huber, eval_uv)
    theta = np.zeros(assets.guide_space.dim)
    beta = np.zeros(assets.residual_space.dim)
    if whiten:
        s_theta, s_beta = assets.guide_space.std, assets.residual_space.std
    else:
        s_theta, s_beta = np.ones_like(theta), np.ones_like(beta)
    z_theta, z_beta = np.zeros_like(theta), np.zeros_like(beta)
    total = warmup + joint
    schedule = CosineSchedule(lr, total, lr_floor)
    st_theta, st_beta = OptimState(), OptimState()
    trace = []
    initial = None
    above = 0
    for it in range(total):
        value, g_theta, g_beta = obj.value_and_grad(theta, beta)
        if initial is None:
            initial = value
        trace.append(value)
        above = above + 1 if value > divergence_factor * max(initial, divergence_floor) else 0
        if above >= divergence_patience:
            raise DivergenceDetected(f"objective above {divergence_factor}x initial "
                                     f"for {divergence_patience} iterations")
        step_lr = schedule(it)
        z_theta = adam_step(z_theta, g_theta * s_theta, st_theta, lr=step_lr)
        theta = s_theta * z_theta
        if it >= warmup:
            z_beta = adam_step(z_beta, g_beta * s_beta, st_beta, lr=step_lr)
            beta = s_beta * z_beta

    final = obj.value(theta, beta)
    result = FitResult(theta, beta, np.asarray(trace), final, obj.texture_l1(theta, beta))
    if full_report:
        result.final_report = texture_strand_report(obj.texture(theta, beta), target, assets)
    return result


def texture_strand_report(pred_flat, target: GeometryTexture, assets: HairAssets) -> StrandPairReport:
    """Compare strands decoded at every non-bald target texel."""
    H, W = assets.resolution
    P = np.asarray(pred_flat).reshape(H * W, -1)
    T = target.data.reshape(H * W, -1)
    hair = ~target.bald.reshape(-1)
    if not hair.any():
        return StrandPairReport(0.0, 0.0, 0.0)
    return compare(decode(P[hair], assets.basis), decode(T[hair], assets.basis))


def embed_strand_set(model: HairModel, assets: HairAssets, scalp: ScalpMap | None = None,
                     epsilon: float = DEFAULT_EPSILON, texture_iters: int = 500, texture_lr: float = 1e-3,
                     warmup: int = 1000, joint: int = 4000, lr: float = 0.1, **kwargs) -> FitResult:
    """Bake and refine a texture for ``model``, then fit (theta, beta) to it."""
    if len(model) == 0:
        raise EmptyModel("cannot embed an empty model")
    if model.roots_uv is None:
        model = model.with_roots_uv(project_roots(model, scalp or ScalpMap.default()).uv)
    tex = init_texture(model, assets.basis, assets.resolution, epsilon)
    tex, tex_trace = optimize_texture(tex, model, assets.basis, iters=texture_iters, lr=texture_lr)
    result = parameterize_hair(tex, assets, warmup=warmup, joint=joint, lr=lr, **kwargs)
    recon = decode_texture_at(assets.texture(result.theta_star, result.beta_star), model.roots_uv,
                              assets.basis, scalp, keep_bald=True)
    result.extras.update(
        texture=tex,
        texture_trace=tex_trace,
        strand_report=compare(recon.points, model.points),
    )
    return result


# --- parameter files ------------------------------------------------------------------

_PPR_HEAD = struct.Struct("<4sII")


def params_to_bytes(theta, beta) -> bytes:
    theta = np.asarray(theta, dtype="<f8")
    beta = np.asarray(beta, dtype="<f8")
    return _PPR_HEAD.pack(b"PPR1", theta.size, beta.size) + theta.tobytes() + beta.tobytes()


def params_from_bytes(data: bytes):
    if data[:4] != b"PPR1":
        raise BadMagic(f"expected b'PPR1', got {bytes(data[:4])!r}")
    if len(data) < _PPR_HEAD.size:
        raise Truncated("PPR1 header truncated")
    _, nt, nb = _PPR_HEAD.unpack_from(data, 0)
    need = _PPR_HEAD.size + 8 * (nt + nb)
    if len(data) < need:
        raise Truncated(f"PPR1 payload needs {need} bytes, got {len(data)}")
    a = np.frombuffer(data, "<f8", nt + nb, _PPR_HEAD.size).astype(np.float64)
    return a[:nt], a[nt:]
